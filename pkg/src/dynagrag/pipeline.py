"""End-to-end wiring shared by the CLI and the HTTP service."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import consolidation, egoindex, ingestion, orchestration, pruning, prompting
from .config import PipelineConfig
from .consolidation import KnowledgeGraph
from .errors import DynaGragError, InputError, JudgeError, StateError
from .gateway import make_gateway
from .retrieval import RetrievalRequest, retrieve
from .store import GraphStore


@dataclass
class IngestReport:
    chunks: int
    entity_mentions: int
    relation_mentions: int
    entities: int
    relations: int
    reencoded: int
    dropped_relations: int = 0
    failed_chunks: int = 0


def _extract_all(gateway, chunks, template, max_workers):
    """Extract every chunk in parallel, merging results in chunk order."""
    def run(chunk):
        try:
            return ingestion.extract_mentions(gateway, chunk, template)
        except DynaGragError:
            return None

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(run, chunks))
    failed = sum(1 for r in results if r is None)
    if chunks and failed > len(chunks) / 2:
        raise DynaGragError(
            f"ingest aborted: extraction failed on {failed}/{len(chunks)} chunks")
    entities, relations, dropped = [], [], 0
    for result in results:
        if result is None:
            continue
        entities.extend(result.entities)
        relations.extend(result.relations)
        dropped += result.dropped_relations
    return entities, relations, dropped, failed


def ingest(paths: list[str], config: PipelineConfig, store_dir,
           append: bool = False, gateway=None) -> IngestReport:
    """Chunk, extract, consolidate, persist, and (re)build the ego index."""
    files = ingestion.collect_input_files(paths)
    if not files:
        raise InputError("no input files")
    gateway = gateway or make_gateway(config.backend)
    templates = orchestration.load_templates(config.prompts_dir)

    chunks = []
    for path in files:
        chunks.extend(ingestion.chunk_document(
            str(path), path.read_text(encoding="utf-8"),
            config.chunk_tokens, config.overlap_tokens))
    entity_mentions, relation_mentions, dropped, failed = _extract_all(
        gateway, chunks, templates["extraction"], config.backend.max_parallel_requests)
    if not entity_mentions:
        raise DynaGragError("extraction produced no entities")
    embeddings = ingestion.embed_mentions(gateway, entity_mentions, relation_mentions)

    store = GraphStore(store_dir)
    if append and store.exists():
        graph, index, reencoded = _append(
            gateway, store, config, entity_mentions, relation_mentions, embeddings)
    else:
        graph, _ = consolidation.consolidate(
            gateway, entity_mentions, relation_mentions, embeddings,
            similarity_threshold=config.similarity_threshold,
            use_llm=config.use_llm_synonyms)
        index = egoindex.build_index(graph, k=config.k_hops, m=config.top_node_count)
        reencoded = len(index.entries)
    store.save_graph(graph)
    store.save_index(index)
    return IngestReport(
        chunks=len(chunks),
        entity_mentions=len(entity_mentions),
        relation_mentions=len(relation_mentions),
        entities=graph.node_count,
        relations=graph.edge_count,
        reencoded=reencoded,
        dropped_relations=dropped,
        failed_chunks=failed,
    )


def _append(gateway, store: GraphStore, config, entity_mentions,
            relation_mentions, embeddings):
    """Merge new mentions into the stored graph; re-encode only affected egos.

    Labels already known keep their entity; unknown labels join by exact
    normalized-label identity only (no re-clustering of the existing graph).
    """
    graph = store.load_graph()
    index = store.load_index(graph)
    canonical_of = {}
    for entity in graph.entities.values():
        for member in entity.member_labels:
            canonical_of[member] = entity.canonical_label

    changed: set[str] = set()
    pooled = consolidation.pool_identical(entity_mentions, embeddings)
    for pool in pooled:
        canonical = canonical_of.get(pool.label)
        if canonical is None:
            entity = consolidation.merge_cluster([pool])
            graph.add_entity(entity)
            canonical_of[pool.label] = entity.canonical_label
            changed.add(entity.canonical_label)
        else:
            entity = graph.entities[canonical]
            if pool.label in entity.member_labels:
                # blend step-one means by count; per-label history is not stored
                total = entity.weight + pool.count
                entity.embedding = (
                    entity.embedding * entity.weight + pool.embedding * pool.count
                ) / total
            else:
                entity.embedding = (entity.embedding + pool.embedding) / 2.0
                entity.member_labels.add(pool.label)
            entity.weight += pool.count
            for s in pool.summaries:
                if s not in entity.summaries:
                    entity.summaries.append(s)
            changed.add(canonical)

    groups: dict[tuple[str, str], list] = {}
    for m in relation_mentions:
        src = canonical_of[ingestion.normalize_label(m.source_label)]
        tgt = canonical_of[ingestion.normalize_label(m.target_label)]
        if src == tgt:
            continue
        groups.setdefault(consolidation.pair_key(src, tgt), []).append(m)
    for pair, members in groups.items():
        new_emb = np.mean([embeddings[m] for m in members], axis=0)
        existing = graph.relations.get(pair)
        if existing is None:
            graph.add_relation(consolidation.Relation(
                endpoint_labels=pair, embedding=new_emb,
                weight=len(members),
                descriptions=[d for d in dict.fromkeys(
                    m.description.strip() for m in members) if d],
            ))
        else:
            total = existing.weight + len(members)
            existing.embedding = (
                existing.embedding * existing.weight + new_emb * len(members)
            ) / total
            existing.weight = total
            for m in members:
                d = m.description.strip()
                if d and d not in existing.descriptions:
                    existing.descriptions.append(d)
        changed.update(pair)

    reencoded = index.refresh(graph, changed)
    return graph, index, reencoded


@dataclass
class QueryResult:
    answer: orchestration.FinalAnswer
    trace: dict | None = None


def run_query(query_text: str, config: PipelineConfig, store_dir,
              top_n: int | None = None, diversity: bool | None = None,
              trace: bool = False, dump_prompts_dir=None, gateway=None,
              loaded: tuple[KnowledgeGraph, "egoindex.EgoIndex"] | None = None) -> QueryResult:
    """Embed the query, retrieve/prune/traverse/render, and orchestrate the answer."""
    if not query_text.strip():
        raise InputError("query must be non-empty")
    gateway = gateway or make_gateway(config.backend)
    templates = orchestration.load_templates(config.prompts_dir)
    if loaded is not None:
        graph, index = loaded
    else:
        store = GraphStore(store_dir)
        if not store.exists():
            raise StateError(f"no graph store at {store_dir}; run ingest first")
        graph = store.load_graph()
        index = store.load_index(graph)

    q = gateway.embed([query_text])[0].values
    request = RetrievalRequest(
        query_text=query_text,
        query_embedding=q,
        top_n=top_n if top_n is not None else config.top_n,
        diversity_on=config.diversity_on if diversity is None else diversity,
        max_overlap=config.max_overlap,
    )
    result = retrieve(index, request)

    mlp = pruning.MlpParams.from_seed(config.mlp_seed)
    gcn = pruning.GcnParams.from_seed(config.gcn_seed)
    prompts = []
    trace_subgraphs = []
    for entry, sim in result.selected:
        pruned = pruning.prune(graph, entry.ego, q, mlp, gcn)
        tree = prompting.dsa_bfs(pruned, graph, q)
        hard = prompting.render_prompt(tree, pruned, graph, config.char_budget)
        prompts.append((entry.ego.center, hard))
        if trace:
            trace_subgraphs.append({
                "center": entry.ego.center,
                "similarity": sim,
                "node_scores": {k: v for k, v in sorted(pruned.pruning_scores.node_scores.items())},
                "edge_scores": {f"{a}--{b}": v for (a, b), v in sorted(pruned.pruning_scores.edge_scores.items())},
                "visit_order": tree.visit_order,
                "prompt": hard.text,
            })
    if dump_prompts_dir is not None:
        out = Path(dump_prompts_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, (_, hard) in enumerate(prompts):
            (out / f"prompt_{i:03d}.txt").write_text(hard.text, encoding="utf-8")

    workers = config.backend.max_parallel_requests
    with ThreadPoolExecutor(max_workers=workers) as pool:
        responses = list(pool.map(
            lambda item: orchestration.answer_subgraph(
                gateway, query_text, item[1], item[0], templates["intermediate"]),
            prompts))
        scored = list(pool.map(
            lambda r: orchestration.score_helpfulness(
                gateway, query_text, r, templates["helpfulness"]),
            responses))
    answer = orchestration.synthesize_final(gateway, query_text, scored, templates["synthesis"])

    trace_data = None
    if trace:
        trace_data = {
            "query": query_text,
            "skipped_for_diversity": result.skipped_for_diversity,
            "subgraphs": trace_subgraphs,
            "intermediate": [
                {"subgraph": r.subgraph_ref, "helpfulness": r.helpfulness,
                 "sub_scores": list(r.sub_scores), "text": r.text}
                for r in scored
            ],
        }
    return QueryResult(answer=answer, trace=trace_data)


@dataclass
class EvalReport:
    per_metric_means: dict[str, float]
    overall_mean: float
    rows: list[dict]
    failed: int

    @property
    def failure_rate(self) -> float:
        return self.failed / len(self.rows) if self.rows else 0.0


def run_eval(queries: list[str], config: PipelineConfig, store_dir,
             mode: str = "dynagrag", gateway=None) -> EvalReport:
    """Judge every query's answer with the nine-metric judge and average."""
    if mode not in ("dynagrag", "no-graph"):
        raise InputError(f"unknown eval mode: {mode!r}")
    if not queries:
        raise InputError("queries file is empty")
    gateway = gateway or make_gateway(config.backend)
    templates = orchestration.load_templates(config.prompts_dir)

    rows = []
    failed = 0
    for query in queries:
        row = {"query": query}
        try:
            if mode == "no-graph":
                answer_text = gateway.chat("You are a helpful assistant.", query).response_text
            else:
                answer_text = run_query(query, config, store_dir, gateway=gateway).answer.text
            report = orchestration.judge_nine_metrics(
                gateway, query, answer_text, templates["judge9"])
            row["scores"] = report.scores
            row["overall"] = report.overall
        except (JudgeError, DynaGragError) as exc:
            row["error"] = str(exc)
            failed += 1
        rows.append(row)

    ok = [r for r in rows if "scores" in r]
    per_metric = {}
    for name in orchestration.METRIC_NAMES:
        values = [r["scores"][name] for r in ok]
        per_metric[name] = sum(values) / len(values) if values else float("nan")
    overall = (sum(r["overall"] for r in ok) / len(ok)) if ok else float("nan")
    return EvalReport(per_metric_means=per_metric, overall_mean=overall,
                      rows=rows, failed=failed)


def export_graph(store_dir, fmt: str) -> str:
    """Render the stored graph as DOT or CSV text."""
    graph = GraphStore(store_dir).load_graph()
    if fmt == "dot":
        lines = ["graph knowledge {"]
        for label in sorted(graph.entities):
            e = graph.entities[label]
            lines.append(f'  "{label}" [weight={e.weight}];')
        for pair in sorted(graph.relations):
            r = graph.relations[pair]
            lines.append(f'  "{pair[0]}" -- "{pair[1]}" [weight={r.weight}];')
        lines.append("}")
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["type", "source", "target", "weight"])
        for label in sorted(graph.entities):
            writer.writerow(["node", label, "", graph.entities[label].weight])
        for pair in sorted(graph.relations):
            writer.writerow(["edge", pair[0], pair[1], graph.relations[pair].weight])
        return buf.getvalue()
    raise InputError(f"unknown export format: {fmt!r}")
