"""Pre-computed k-hop ego-graphs encoded as single embeddings, with persistence.

Each node of the knowledge graph gets one ego-graph (the induced k-hop ball),
encoded as the weighted mean of all weighted node and edge features divided by
the total weight of the ego-graph.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .consolidation import Entity, KnowledgeGraph, Relation, pair_key
from .errors import ConsistencyError, InputError

INDEX_MAGIC = b"DGEI"
INDEX_VERSION = 1


@dataclass
class EgoGraph:
    center: str
    k: int
    node_labels: set[str]
    edge_pairs: set[tuple[str, str]]


@dataclass
class EncodedEgoGraph:
    ego: EgoGraph
    embedding: np.ndarray
    total_weight: float
    top_nodes: list[str]


def build_ego(graph: KnowledgeGraph, center: str, k: int) -> EgoGraph:
    """BFS-ball of radius k around center with induced edges."""
    if center not in graph.entities:
        raise InputError(f"unknown center node: {center!r}")
    if k < 0:
        raise InputError("k must be >= 0")
    nodes = {center}
    frontier = {center}
    for _ in range(k):
        nxt = set()
        for u in frontier:
            nxt |= graph.neighbors(u) - nodes
        if not nxt:
            break
        nodes |= nxt
        frontier = nxt
    edges = {
        pair_key(u, v)
        for u in nodes
        for v in graph.neighbors(u)
        if v in nodes and u < v
    }
    return EgoGraph(center=center, k=k, node_labels=nodes, edge_pairs=edges)


def weighted_node_feature(entity: Entity) -> np.ndarray:
    return entity.embedding * entity.weight


def weighted_edge_feature(source: Entity, target: Entity, relation: Relation) -> np.ndarray:
    if source.embedding.shape != target.embedding.shape or source.embedding.shape != relation.embedding.shape:
        raise ConsistencyError("embedding dimension mismatch in edge feature")
    return (source.embedding + target.embedding + relation.embedding) / 3.0 * relation.weight


def encode_ego(graph: KnowledgeGraph, ego: EgoGraph, m: int = 3) -> EncodedEgoGraph:
    """Total graph embedding: (sum of weighted features) / total weight."""
    # sorted iteration keeps float summation order stable across runs
    total = None
    w_total = 0.0
    for label in sorted(ego.node_labels):
        entity = graph.entities[label]
        feat = weighted_node_feature(entity)
        total = feat if total is None else total + feat
        w_total += entity.weight
    for a, b in sorted(ego.edge_pairs):
        relation = graph.relations[pair_key(a, b)]
        feat = weighted_edge_feature(graph.entities[a], graph.entities[b], relation)
        total = total + feat
        w_total += relation.weight
    if total is None or w_total <= 0:
        raise ConsistencyError("ego-graph has no weighted content")
    top = sorted(ego.node_labels, key=lambda l: (-graph.entities[l].weight, l))[:m]
    return EncodedEgoGraph(ego=ego, embedding=total / w_total,
                           total_weight=w_total, top_nodes=top)


class EgoIndex:
    """Searchable collection of one encoded ego-graph per graph node."""

    def __init__(self, entries: list[EncodedEgoGraph], dimension: int, k: int, m: int):
        self.entries = entries
        self.dimension = dimension
        self.k = k
        self.m = m
        self.encode_count = len(entries)  # instrumentation for incremental rebuilds

    def entry_for(self, center: str) -> EncodedEgoGraph | None:
        for entry in self.entries:
            if entry.ego.center == center:
                return entry
        return None

    # -- incremental maintenance ------------------------------------------

    def refresh(self, graph: KnowledgeGraph, changed_labels: set[str]) -> int:
        """Re-encode only entries whose k-ball can intersect changed nodes.

        Returns the number of re-encoded entries and updates encode_count.
        """
        affected = set()
        frontier = set(changed_labels) & set(graph.entities)
        affected |= frontier
        for _ in range(self.k):
            nxt = set()
            for u in frontier:
                nxt |= graph.neighbors(u) - affected
            if not nxt:
                break
            affected |= nxt
            frontier = nxt
        kept = [e for e in self.entries
                if e.ego.center in graph.entities and e.ego.center not in affected]
        reencoded = [
            encode_ego(graph, build_ego(graph, center, self.k), self.m)
            for center in sorted(affected)
        ]
        self.entries = sorted(kept + reencoded, key=lambda e: e.ego.center)
        self.encode_count += len(reencoded)
        return len(reencoded)

    # -- persistence --------------------------------------------------------

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<BIIII", INDEX_VERSION, self.dimension,
                                 self.k, self.m, len(self.entries)))
            for entry in self.entries:
                _write_str(fh, entry.ego.center)
                labels = sorted(entry.ego.node_labels)
                fh.write(struct.pack("<I", len(labels)))
                for label in labels:
                    _write_str(fh, label)
                fh.write(np.asarray(entry.embedding, dtype="<f4").tobytes())
                fh.write(struct.pack("<d", entry.total_weight))
                fh.write(struct.pack("<I", len(entry.top_nodes)))
                for label in entry.top_nodes:
                    _write_str(fh, label)

    @classmethod
    def load(cls, path, graph: KnowledgeGraph | None = None) -> "EgoIndex":
        """Load the index; with a graph, induced ego edges are reconstructed."""
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != INDEX_MAGIC:
                raise ConsistencyError("not an ego-index file")
            version, dim, k, m, count = struct.unpack("<BIIII", fh.read(17))
            if version != INDEX_VERSION:
                raise ConsistencyError(f"unsupported index version {version}")
            entries = []
            for _ in range(count):
                center = _read_str(fh)
                (n_labels,) = struct.unpack("<I", fh.read(4))
                labels = {_read_str(fh) for _ in range(n_labels)}
                vec = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(np.float64)
                (total_weight,) = struct.unpack("<d", fh.read(8))
                (n_top,) = struct.unpack("<I", fh.read(4))
                top = [_read_str(fh) for _ in range(n_top)]
                edges = set()
                if graph is not None:
                    edges = {
                        pair_key(u, v)
                        for u in labels
                        for v in graph.neighbors(u)
                        if v in labels and u < v
                    }
                entries.append(EncodedEgoGraph(
                    ego=EgoGraph(center=center, k=k, node_labels=labels, edge_pairs=edges),
                    embedding=vec, total_weight=total_weight, top_nodes=top,
                ))
        return cls(entries=entries, dimension=dim, k=k, m=m)


def _write_str(fh, s: str):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def build_index(graph: KnowledgeGraph, k: int = 3, m: int = 3) -> EgoIndex:
    """Encode every node's ego-graph. Deterministic given the graph."""
    if not graph.entities:
        raise InputError("graph is empty")
    centers = sorted(graph.entities)
    dim = len(graph.entities[centers[0]].embedding)
    entries = [encode_ego(graph, build_ego(graph, c, k), m) for c in centers]
    return EgoIndex(entries=entries, dimension=dim, k=k, m=m)
