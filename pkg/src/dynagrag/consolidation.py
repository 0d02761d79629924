"""Mention de-duplication into a condensed undirected weighted knowledge graph.

Pooling is two-step: embeddings are first averaged within identical-label
mention groups, then averaged unweighted across distinct labels of a synonym
cluster, so a frequent label never dominates the merged representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, DynaGragError, InputError
from .ingestion import EntityMention, RelationMention, normalize_label
from .retrieval import cosine

SYNONYM_SYSTEM_TEXT = "You decide whether two labels name the same thing."
SYNONYM_PROMPT = (
    'Do the labels "{a}" and "{b}" refer to the same entity? Answer yes or no.'
)


@dataclass
class PooledLabel:
    """Step-one pooling result for one distinct normalized label."""
    label: str
    embedding: np.ndarray
    count: int
    summaries: list[str]


@dataclass
class Entity:
    canonical_label: str
    member_labels: set[str]
    embedding: np.ndarray
    weight: int
    summaries: list[str]


@dataclass
class Relation:
    endpoint_labels: tuple[str, str]  # sorted pair of canonical labels
    embedding: np.ndarray
    weight: int
    descriptions: list[str]


def pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


class KnowledgeGraph:
    """Undirected weighted graph of consolidated entities and relations."""

    def __init__(self):
        self.entities: dict[str, Entity] = {}
        self.relations: dict[tuple[str, str], Relation] = {}
        self._adjacency: dict[str, set[str]] = {}

    def add_entity(self, entity: Entity):
        self.entities[entity.canonical_label] = entity
        self._adjacency.setdefault(entity.canonical_label, set())

    def add_relation(self, relation: Relation):
        a, b = relation.endpoint_labels
        if a not in self.entities or b not in self.entities:
            raise ConsistencyError(f"relation endpoints missing: {a!r}, {b!r}")
        if a == b:
            raise ConsistencyError("self-loop relations are not allowed")
        self.relations[pair_key(a, b)] = relation
        self._adjacency[a].add(b)
        self._adjacency[b].add(a)

    def relation_between(self, a: str, b: str) -> Relation | None:
        return self.relations.get(pair_key(a, b))

    def neighbors(self, label: str) -> set[str]:
        return self._adjacency.get(label, set())

    @property
    def node_count(self) -> int:
        return len(self.entities)

    @property
    def edge_count(self) -> int:
        return len(self.relations)


def pool_identical(mentions: list[EntityMention], embeddings: dict) -> list[PooledLabel]:
    """Group mentions by normalized label and average their embeddings (step one)."""
    groups: dict[str, list[EntityMention]] = {}
    order: list[str] = []
    for m in mentions:
        key = normalize_label(m.label)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(m)
    pooled = []
    for key in order:
        members = groups[key]
        try:
            total = np.sum([embeddings[m] for m in members], axis=0)
        except KeyError as exc:
            raise DynaGragError(f"missing embedding for mention {exc}") from exc
        summaries: list[str] = []
        for m in members:
            if m.summary and m.summary not in summaries:
                summaries.append(m.summary)
        pooled.append(PooledLabel(
            label=key,
            embedding=total / len(members),
            count=len(members),
            summaries=summaries,
        ))
    return pooled


def find_synonym_clusters(gateway, labels: list[str], label_embeddings: dict,
                          similarity_threshold: float = 0.9,
                          use_llm: bool = False) -> list[list[str]]:
    """Partition labels into synonym clusters via thresholded cosine components.

    With use_llm on, candidate pairs above (threshold - 0.1) are confirmed or
    rejected by an LLM yes/no prompt before components are formed.
    """
    if not 0 < similarity_threshold <= 1:
        raise InputError("similarity_threshold must be in (0, 1]")
    if len(set(labels)) != len(labels):
        raise InputError("labels must be distinct")
    parent = {l: l for l in labels}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    ordered = sorted(labels)
    candidate_floor = similarity_threshold - 0.1 if use_llm else similarity_threshold
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            sim = cosine(label_embeddings[a], label_embeddings[b])
            if sim < candidate_floor:
                continue
            if use_llm:
                reply = gateway.chat(
                    SYNONYM_SYSTEM_TEXT, SYNONYM_PROMPT.format(a=a, b=b)
                ).response_text
                if not reply.strip().lower().startswith("yes"):
                    continue
            elif sim < similarity_threshold:
                continue
            union(a, b)

    clusters: dict[str, list[str]] = {}
    for label in labels:
        clusters.setdefault(find(label), []).append(label)
    return [clusters[root] for root in sorted(clusters)]


def merge_cluster(records: list[PooledLabel]) -> Entity:
    """Merge pooled labels into one entity (step two: unweighted mean)."""
    if not records:
        raise InputError("cluster must be non-empty")
    embedding = np.mean([r.embedding for r in records], axis=0)
    weight = sum(r.count for r in records)
    canonical = min(records, key=lambda r: (-r.count, r.label)).label
    summaries: list[str] = []
    for r in records:
        for s in r.summaries:
            if s not in summaries:
                summaries.append(s)
    return Entity(
        canonical_label=canonical,
        member_labels={r.label for r in records},
        embedding=embedding,
        weight=weight,
        summaries=summaries,
    )


def build_graph(entities: list[Entity], relation_mentions: list[RelationMention],
                relation_embeddings: dict, canonical_of: dict[str, str]) -> KnowledgeGraph:
    """Assemble the graph, pooling relation mentions per canonical endpoint pair."""
    graph = KnowledgeGraph()
    for entity in entities:
        graph.add_entity(entity)

    # group surviving mentions by unordered canonical pair
    groups: dict[tuple[str, str], list[RelationMention]] = {}
    order: list[tuple[str, str]] = []
    for m in relation_mentions:
        src = canonical_of.get(normalize_label(m.source_label))
        tgt = canonical_of.get(normalize_label(m.target_label))
        if src is None or tgt is None:
            raise ConsistencyError(
                f"relation endpoint has no canonical entity: {m.source_label!r} / {m.target_label!r}"
            )
        if src == tgt:
            continue  # endpoints collapsed into one entity
        key = pair_key(src, tgt)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(m)

    for key in order:
        members = groups[key]
        # step one: mean within identical descriptions
        by_desc: dict[str, list[np.ndarray]] = {}
        desc_order: list[str] = []
        for m in members:
            d = m.description.strip()
            if d not in by_desc:
                by_desc[d] = []
                desc_order.append(d)
            by_desc[d].append(relation_embeddings[m])
        step_one = [np.mean(by_desc[d], axis=0) for d in desc_order]
        embedding = np.mean(step_one, axis=0)
        descriptions = [d for d in desc_order if d]
        graph.add_relation(Relation(
            endpoint_labels=key,
            embedding=embedding,
            weight=len(members),
            descriptions=descriptions,
        ))
    return graph


def consolidate(gateway, entity_mentions: list[EntityMention],
                relation_mentions: list[RelationMention], embeddings: dict,
                similarity_threshold: float = 0.9,
                use_llm: bool = False) -> tuple[KnowledgeGraph, dict[str, str]]:
    """Full consolidation: pool, cluster, merge, and build the graph.

    Returns the graph and the normalized-label -> canonical-label map.
    """
    pooled = pool_identical(entity_mentions, embeddings)
    by_label = {p.label: p for p in pooled}
    clusters = find_synonym_clusters(
        gateway, [p.label for p in pooled],
        {p.label: p.embedding for p in pooled},
        similarity_threshold=similarity_threshold,
        use_llm=use_llm,
    )
    entities = [merge_cluster([by_label[l] for l in cluster]) for cluster in clusters]
    canonical_of: dict[str, str] = {}
    for entity in entities:
        for member in entity.member_labels:
            canonical_of[member] = entity.canonical_label
    graph = build_graph(entities, relation_mentions, embeddings, canonical_of)
    return graph, canonical_of
