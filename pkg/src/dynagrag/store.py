"""Graph and index persistence: newline-delimited records plus a binary index."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .consolidation import Entity, KnowledgeGraph, Relation
from .egoindex import EgoIndex
from .errors import StateError

STORE_VERSION = 1

ENTITIES_FILE = "entities.ndjson"
RELATIONS_FILE = "relations.ndjson"
INDEX_FILE = "index.bin"
META_FILE = "meta.json"


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


@dataclass
class GraphStore:
    """File-backed store of one knowledge graph and its ego index."""

    directory: Path

    def __init__(self, directory):
        self.directory = Path(directory)

    @property
    def entities_path(self) -> Path:
        return self.directory / ENTITIES_FILE

    @property
    def relations_path(self) -> Path:
        return self.directory / RELATIONS_FILE

    @property
    def index_path(self) -> Path:
        return self.directory / INDEX_FILE

    @property
    def meta_path(self) -> Path:
        return self.directory / META_FILE

    def exists(self) -> bool:
        return self.entities_path.is_file() and self.relations_path.is_file()

    def save_graph(self, graph: KnowledgeGraph):
        self.directory.mkdir(parents=True, exist_ok=True)
        entity_lines = []
        for label in sorted(graph.entities):
            e = graph.entities[label]
            entity_lines.append(_dumps({
                "label": e.canonical_label,
                "members": sorted(e.member_labels),
                "embedding": list(map(float, e.embedding)),
                "weight": e.weight,
                "summaries": e.summaries,
            }))
        relation_lines = []
        for pair in sorted(graph.relations):
            r = graph.relations[pair]
            relation_lines.append(_dumps({
                "source": r.endpoint_labels[0],
                "target": r.endpoint_labels[1],
                "embedding": list(map(float, r.embedding)),
                "weight": r.weight,
                "descriptions": r.descriptions,
            }))
        self.entities_path.write_text("\n".join(entity_lines) + "\n", encoding="utf-8")
        self.relations_path.write_text(
            ("\n".join(relation_lines) + "\n") if relation_lines else "", encoding="utf-8")
        self.meta_path.write_text(_dumps({"version": STORE_VERSION}) + "\n", encoding="utf-8")

    def load_graph(self) -> KnowledgeGraph:
        if not self.exists():
            raise StateError(f"no graph store at {self.directory}")
        graph = KnowledgeGraph()
        for line in self.entities_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            graph.add_entity(Entity(
                canonical_label=rec["label"],
                member_labels=set(rec["members"]),
                embedding=np.asarray(rec["embedding"], dtype=np.float64),
                weight=int(rec["weight"]),
                summaries=list(rec["summaries"]),
            ))
        for line in self.relations_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            pair = tuple(sorted((rec["source"], rec["target"])))
            graph.add_relation(Relation(
                endpoint_labels=pair,
                embedding=np.asarray(rec["embedding"], dtype=np.float64),
                weight=int(rec["weight"]),
                descriptions=list(rec["descriptions"]),
            ))
        return graph

    def save_index(self, index: EgoIndex):
        self.directory.mkdir(parents=True, exist_ok=True)
        index.save(self.index_path)

    def load_index(self, graph: KnowledgeGraph | None = None) -> EgoIndex:
        if not self.index_path.is_file():
            raise StateError(f"no ego index at {self.index_path}")
        return EgoIndex.load(self.index_path, graph=graph)

    def stats(self) -> dict:
        graph = self.load_graph()
        index_entries = 0
        if self.index_path.is_file():
            index_entries = len(self.load_index().entries)
        return {
            "entities": graph.node_count,
            "relations": graph.edge_count,
            "index_entries": index_entries,
        }
