"""Query-conditioned relevance scoring and soft masking of retrieved subgraphs.

Initial scores combine structural weight with query alignment (Euclidean
distance fed through a small MLP ending in a sigmoid); a GCN then refines the
node scores via symmetric-normalized neighbor aggregation, and edge scores are
re-blended from their endpoints in logit space. Parameters are deterministic
functions of a seed; no training is performed. The first-layer weights on the
distance channel are constrained non-positive and the output-layer weights
non-negative, so a larger distance can never raise the default score.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .consolidation import KnowledgeGraph, pair_key
from .egoindex import EgoGraph
from .errors import ConsistencyError, InputError

_SCORE_EPS = 1e-9
PARAMS_MAGIC = b"DGNP"


def node_query_distance(h, q) -> float:
    h = np.asarray(h, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if h.shape != q.shape:
        raise InputError(f"dimension mismatch: {h.shape} vs {q.shape}")
    return float(np.linalg.norm(h - q))


def edge_query_distance(r, q) -> float:
    return node_query_distance(r, q)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _logit(s):
    s = np.clip(s, _SCORE_EPS, 1.0 - _SCORE_EPS)
    return np.log(s / (1.0 - s))


def _clip_score(s):
    return float(np.clip(s, _SCORE_EPS, 1.0 - _SCORE_EPS))


@dataclass
class RelevanceScores:
    node_scores: dict[str, float]
    edge_scores: dict[tuple[str, str], float]


@dataclass
class MlpParams:
    w1: np.ndarray  # (2, hidden); column 0 is the distance channel
    b1: np.ndarray
    w2: np.ndarray  # (hidden, 1), non-negative
    b2: np.ndarray
    seed: int

    @classmethod
    def from_seed(cls, seed: int, hidden: int = 8) -> "MlpParams":
        rng = np.random.default_rng(seed)
        w1 = rng.standard_normal((2, hidden)) * 0.4
        w1[0] = -np.abs(w1[0])  # distance channel: non-positive weights
        b1 = rng.standard_normal(hidden) * 0.1
        w2 = np.abs(rng.standard_normal((hidden, 1))) * 0.5
        b2 = rng.standard_normal(1) * 0.1
        return cls(w1=w1, b1=b1, w2=w2, b2=b2, seed=seed)

    def layer_sizes(self):
        return [2, self.w1.shape[1], 1]

    def tensors(self):
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class GcnParams:
    layers: list[np.ndarray]   # weight matrix per round
    biases: list[np.ndarray]
    head_w: np.ndarray
    head_b: float
    edge_blend: float
    seed: int

    @classmethod
    def from_seed(cls, seed: int, depth: int = 2, hidden: int = 8,
                  in_channels: int = 2, edge_blend: float = 0.5) -> "GcnParams":
        rng = np.random.default_rng(seed)
        layers, biases = [], []
        width = in_channels
        for _ in range(depth):
            layers.append(rng.standard_normal((width, hidden)) * 0.4)
            biases.append(rng.standard_normal(hidden) * 0.1)
            width = hidden
        head_w = rng.standard_normal(width) * 0.4
        head_b = float(rng.standard_normal() * 0.1)
        return cls(layers=layers, biases=biases, head_w=head_w, head_b=head_b,
                   edge_blend=edge_blend, seed=seed)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def tensors(self):
        out = []
        for w, b in zip(self.layers, self.biases):
            out.extend([w, b])
        out.extend([self.head_w, np.asarray([self.head_b])])
        return out


def save_params(path, params):
    """Flat binary tensor file: header (magic, seed, layer count + shapes), f32 body."""
    tensors = params.tensors()
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<qI", params.seed, len(tensors)))
        for t in tensors:
            t = np.atleast_1d(np.asarray(t))
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
        for t in tensors:
            fh.write(np.atleast_1d(np.asarray(t)).astype("<f4").tobytes())


def load_param_tensors(path) -> tuple[int, list[np.ndarray]]:
    """Load-parameters hook for externally trained weights."""
    with open(path, "rb") as fh:
        if fh.read(4) != PARAMS_MAGIC:
            raise ConsistencyError("not a parameter file")
        seed, count = struct.unpack("<qI", fh.read(12))
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack("<I", fh.read(4))
            shapes.append(struct.unpack(f"<{ndim}I", fh.read(4 * ndim)))
        tensors = []
        for shape in shapes:
            n = int(np.prod(shape))
            tensors.append(
                np.frombuffer(fh.read(4 * n), dtype="<f4").astype(np.float64).reshape(shape)
            )
    return seed, tensors


def relevance_mlp(params: MlpParams, distance: float, structural_weight: float) -> float:
    """Score one element from its (normalized) query distance and weight."""
    if not np.isfinite(distance) or not np.isfinite(structural_weight):
        raise InputError("relevance inputs must be finite")
    if structural_weight <= 0:
        raise InputError("structural_weight must be positive")
    x = np.array([distance, np.log1p(structural_weight)])
    h = np.tanh(x @ params.w1 + params.b1)
    y = _sigmoid((h @ params.w2 + params.b2).item())
    return _clip_score(y)


def initial_scores(graph: KnowledgeGraph, ego: EgoGraph, q, params: MlpParams) -> RelevanceScores:
    """Per-element MLP scores with distances normalized by the subgraph max."""
    q = np.asarray(q, dtype=np.float64)
    node_d = {
        label: node_query_distance(graph.entities[label].embedding, q)
        for label in sorted(ego.node_labels)
    }
    edge_d = {
        pair: edge_query_distance(graph.relations[pair].embedding, q)
        for pair in sorted(ego.edge_pairs)
    }
    max_d = max(list(node_d.values()) + list(edge_d.values()), default=0.0)
    scale = max_d if max_d > 0 else 1.0
    node_scores = {
        label: relevance_mlp(params, d / scale, graph.entities[label].weight)
        for label, d in node_d.items()
    }
    edge_scores = {
        pair: relevance_mlp(params, d / scale, graph.relations[pair].weight)
        for pair, d in edge_d.items()
    }
    return RelevanceScores(node_scores=node_scores, edge_scores=edge_scores)


def gcn_refine(params: GcnParams, ego: EgoGraph, scores: RelevanceScores,
               node_weights: dict[str, float]) -> RelevanceScores:
    """Refine scores with symmetric-normalized neighbor aggregation.

    Node features are [score, log(1+weight)]; depth 0 is the identity
    configuration. Edge scores become a fixed blend of the edge's initial
    score and the mean of its refined endpoint scores, in logit space.
    """
    missing = ego.node_labels - set(scores.node_scores)
    missing_edges = ego.edge_pairs - set(scores.edge_scores)
    if missing or missing_edges:
        raise ConsistencyError(f"scores do not cover the ego-graph: {missing or missing_edges}")
    if params.depth == 0:
        return RelevanceScores(dict(scores.node_scores), dict(scores.edge_scores))

    nodes = sorted(ego.node_labels)
    idx = {l: i for i, l in enumerate(nodes)}
    n = len(nodes)
    adj = np.eye(n)
    for a, b in ego.edge_pairs:
        adj[idx[a], idx[b]] = 1.0
        adj[idx[b], idx[a]] = 1.0
    d_inv_sqrt = 1.0 / np.sqrt(adj.sum(axis=1))
    a_hat = adj * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]

    x = np.column_stack([
        [scores.node_scores[l] for l in nodes],
        [np.log1p(node_weights[l]) for l in nodes],
    ])
    for w, b in zip(params.layers, params.biases):
        x = np.tanh(a_hat @ x @ w + b)
    node_out = _sigmoid(x @ params.head_w + params.head_b)
    node_scores = {l: _clip_score(node_out[idx[l]]) for l in nodes}

    blend = params.edge_blend
    edge_scores = {}
    for pair in sorted(ego.edge_pairs):
        a, b = pair
        endpoint_logit = 0.5 * (_logit(node_scores[a]) + _logit(node_scores[b]))
        mixed = blend * endpoint_logit + (1.0 - blend) * _logit(scores.edge_scores[pair])
        edge_scores[pair] = _clip_score(_sigmoid(mixed))
    return RelevanceScores(node_scores=node_scores, edge_scores=edge_scores)


@dataclass
class PrunedSubgraph:
    ego: EgoGraph
    pruned_node_weights: dict[str, float]
    pruned_edge_weights: dict[tuple[str, str], float]
    pruning_scores: RelevanceScores


def soft_mask(ego: EgoGraph, graph: KnowledgeGraph, scores: RelevanceScores) -> PrunedSubgraph:
    """Scale weights by scores; no element is ever removed."""
    missing = ego.node_labels - set(scores.node_scores)
    if missing or (ego.edge_pairs - set(scores.edge_scores)):
        raise ConsistencyError("scores do not cover the ego-graph")
    node_w = {
        l: graph.entities[l].weight * scores.node_scores[l]
        for l in ego.node_labels
    }
    edge_w = {
        pair: graph.relations[pair].weight * scores.edge_scores[pair]
        for pair in ego.edge_pairs
    }
    return PrunedSubgraph(ego=ego, pruned_node_weights=node_w,
                          pruned_edge_weights=edge_w, pruning_scores=scores)


def prune(graph: KnowledgeGraph, ego: EgoGraph, q,
          mlp_params: MlpParams, gcn_params: GcnParams) -> PrunedSubgraph:
    """Full pruning pass: initial MLP scores, GCN refinement, soft mask."""
    scores = initial_scores(graph, ego, q, mlp_params)
    weights = {l: float(graph.entities[l].weight) for l in ego.node_labels}
    refined = gcn_refine(gcn_params, ego, scores, weights)
    return soft_mask(ego, graph, refined)
