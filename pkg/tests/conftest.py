import numpy as np
import pytest

from dynagrag.config import PipelineConfig
from dynagrag.consolidation import Entity, KnowledgeGraph, Relation
from dynagrag.gateway import BackendConfig, ChatExchange, EmbeddingVector, MockGateway

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


@pytest.fixture
def mock_config():
    return BackendConfig(base_url="mock://local", mock_dim=8)


@pytest.fixture
def mock_gateway(mock_config):
    return MockGateway(mock_config)


@pytest.fixture
def pipeline_config():
    return PipelineConfig(backend=BackendConfig(base_url="mock://local", mock_dim=16))


class ScriptedGateway:
    """Fake gateway replying from a fixed script; embeds like the mock."""

    def __init__(self, replies=None, reply_fn=None, dim=8):
        self.replies = list(replies or [])
        self.reply_fn = reply_fn
        self.calls = []
        self._mock = MockGateway(BackendConfig(base_url="mock://local", mock_dim=dim))

    def chat(self, system_text, user_text, temperature=0.0, max_tokens=1024):
        self.calls.append((system_text, user_text))
        if self.reply_fn is not None:
            text = self.reply_fn(system_text, user_text)
        elif self.replies:
            text = self.replies.pop(0)
        else:
            text = "no reply scripted"
        return ChatExchange(system_text, user_text, temperature, max_tokens, text)

    def embed(self, texts):
        return self._mock.embed(texts)


@pytest.fixture
def scripted_gateway():
    return ScriptedGateway


def make_entity(label, embedding, weight=1, summaries=None):
    return Entity(
        canonical_label=label,
        member_labels={label},
        embedding=np.asarray(embedding, dtype=np.float64),
        weight=weight,
        summaries=summaries or [f"{label} summary"],
    )


def make_graph(nodes, edges):
    """nodes: (label, embedding, weight); edges: (a, b, embedding, weight)."""
    graph = KnowledgeGraph()
    for label, emb, weight in nodes:
        graph.add_entity(make_entity(label, emb, weight))
    for a, b, emb, weight in edges:
        pair = tuple(sorted((a, b)))
        graph.add_relation(Relation(
            endpoint_labels=pair,
            embedding=np.asarray(emb, dtype=np.float64),
            weight=weight,
            descriptions=[f"{a} relates to {b}"],
        ))
    return graph


def random_graph(rng, max_nodes=20, dim=8, connected=False):
    """Random weighted graph for oracles; connected=True adds a spanning path."""
    n = int(rng.integers(1, max_nodes + 1))
    labels = [f"n{i:02d}" for i in range(n)]
    nodes = [
        (l, rng.standard_normal(dim), int(rng.integers(1, 6)))
        for l in labels
    ]
    edges = []
    seen = set()
    if connected:
        order = list(rng.permutation(n))
        for a, b in zip(order, order[1:]):
            pair = tuple(sorted((labels[a], labels[b])))
            seen.add(pair)
            edges.append((*pair, rng.standard_normal(dim), int(rng.integers(1, 6))))
    extra = int(rng.integers(0, max(1, n * (n - 1) // 4 + 1)))
    for _ in range(extra):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        pair = tuple(sorted((labels[i], labels[j])))
        if pair in seen:
            continue
        seen.add(pair)
        edges.append((*pair, rng.standard_normal(dim), int(rng.integers(1, 6))))
    return make_graph(nodes, edges)
