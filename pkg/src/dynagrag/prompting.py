"""Similarity-aware BFS traversal and hierarchical hard-prompt rendering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .consolidation import KnowledgeGraph, pair_key
from .errors import ConfigError
from .pruning import PrunedSubgraph
from .retrieval import cosine

TRUNCATION_MARKER = "[truncated]"


@dataclass
class TraversalTree:
    root: str
    parent: dict[str, str | None]
    children: dict[str, list[str]]
    visit_order: list[str]
    non_tree_edges: list[tuple[str, str]]


def dsa_bfs(pruned: PrunedSubgraph, graph: KnowledgeGraph, q,
            anchor: str = "query") -> TraversalTree:
    """Level-synchronous BFS dequeuing each frontier in descending similarity.

    Similarity is cosine against the query embedding by default; with
    anchor="parent" each node is compared to its discovering parent instead.
    Ties break lexicographically. First discoverer becomes parent; every other
    ego edge is recorded once as a non-tree edge.
    """
    ego = pruned.ego
    q = np.asarray(q, dtype=np.float64)
    adjacency: dict[str, set[str]] = {l: set() for l in ego.node_labels}
    for a, b in ego.edge_pairs:
        adjacency[a].add(b)
        adjacency[b].add(a)

    def similarity(node: str, parent_of: str | None) -> float:
        h = graph.entities[node].embedding
        if anchor == "parent" and parent_of is not None:
            return cosine(h, graph.entities[parent_of].embedding)
        return cosine(h, q)

    parent: dict[str, str | None] = {ego.center: None}
    visit_order: list[str] = []
    tree_edges: set[tuple[str, str]] = set()
    non_tree: list[tuple[str, str]] = []
    non_tree_seen: set[tuple[str, str]] = set()
    frontier = [ego.center]
    while frontier:
        frontier.sort(key=lambda l: (-similarity(l, parent[l]), l))
        next_frontier: list[str] = []
        in_next: set[str] = set()
        for u in frontier:
            visit_order.append(u)
            for v in sorted(adjacency[u]):
                pair = pair_key(u, v)
                if pair in tree_edges or pair in non_tree_seen:
                    continue
                if v not in parent and v not in in_next:
                    parent[v] = u
                    tree_edges.add(pair)
                    next_frontier.append(v)
                    in_next.add(v)
                else:
                    non_tree_seen.add(pair)
                    non_tree.append(pair)
        frontier = next_frontier

    children: dict[str, list[str]] = {l: [] for l in visit_order}
    for node, par in parent.items():
        if par is not None:
            children[par].append(node)
    for node in children:
        children[node].sort(key=lambda l: (-similarity(l, parent[l]), l))
    return TraversalTree(root=ego.center, parent=parent, children=children,
                         visit_order=visit_order, non_tree_edges=sorted(non_tree))


@dataclass
class HardPrompt:
    text: str
    node_count: int
    edge_count: int
    char_budget: int


def _node_lines(tree: TraversalTree, pruned: PrunedSubgraph, graph: KnowledgeGraph,
                node: str, depth: int, summaries_per_node: int) -> list[str]:
    indent = "  " * depth
    weight = pruned.pruned_node_weights[node]
    par = tree.parent[node]
    if par is None:
        head = f"{indent}- {node} (weight {weight:.2f})"
    else:
        pair = pair_key(par, node)
        relation = graph.relations[pair]
        desc = relation.descriptions[0] if relation.descriptions else "related to"
        edge_weight = pruned.pruned_edge_weights[pair]
        head = f"{indent}- {node} (weight {weight:.2f}) [via: {desc} (weight {edge_weight:.2f})]"
    lines = [head]
    for summary in graph.entities[node].summaries[:summaries_per_node]:
        lines.append(f"{indent}  note: {summary}")
    for child in tree.children[node]:
        lines.extend(_node_lines(tree, pruned, graph, child, depth + 1, summaries_per_node))
    return lines


def render_prompt(tree: TraversalTree, pruned: PrunedSubgraph, graph: KnowledgeGraph,
                  char_budget: int = 12000, summaries_per_node: int = 2) -> HardPrompt:
    """Render the pre-order outline plus a cross-links section, within budget.

    Truncation never cuts mid-line; a marker line is appended when cut.
    """
    lines = _node_lines(tree, pruned, graph, tree.root, 0, summaries_per_node)
    if tree.non_tree_edges:
        lines.append("Cross-links:")
        for a, b in tree.non_tree_edges:
            relation = graph.relations[pair_key(a, b)]
            desc = relation.descriptions[0] if relation.descriptions else "related to"
            weight = pruned.pruned_edge_weights[pair_key(a, b)]
            lines.append(f"- {a} -- {b}: {desc} (weight {weight:.2f})")

    if char_budget < len(lines[0]) + len(TRUNCATION_MARKER) + 1:
        raise ConfigError("char_budget smaller than the minimal prompt header")
    full = "\n".join(lines)
    if len(full) <= char_budget:
        text = full
    else:
        limit = char_budget - len(TRUNCATION_MARKER) - 1
        kept: list[str] = []
        used = 0
        for line in lines:
            cost = len(line) + (1 if kept else 0)
            if used + cost > limit:
                break
            kept.append(line)
            used += cost
        text = "\n".join(kept + [TRUNCATION_MARKER])
    return HardPrompt(text=text, node_count=len(pruned.ego.node_labels),
                      edge_count=len(pruned.ego.edge_pairs), char_budget=char_budget)
