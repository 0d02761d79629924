"""Command-line interface for the graph-RAG engine."""

from __future__ import annotations

import json
import sys

import click

from .config import PipelineConfig
from .errors import DynaGragError
from .pipeline import export_graph, ingest, run_eval, run_query


def _load_config(path) -> PipelineConfig:
    return PipelineConfig.from_env_or_default(path)


@click.group()
def main():
    """Graph-retrieval-augmented generation over a weighted knowledge graph."""


@main.command("ingest")
@click.argument("paths", nargs=-1, required=True)
@click.option("--config", "config_path", default=None, help="Path to a JSON config file.")
@click.option("--store", "store_dir", default="dynagrag_store", show_default=True)
@click.option("--append", is_flag=True, help="Merge into an existing store.")
def cmd_ingest(paths, config_path, store_dir, append):
    """Build (or extend) the knowledge graph and ego index from text files."""
    config = _load_config(config_path)
    try:
        report = ingest(list(paths), config, store_dir, append=append)
    except DynaGragError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"chunks: {report.chunks}")
    click.echo(f"entity mentions: {report.entity_mentions}")
    click.echo(f"relation mentions: {report.relation_mentions}")
    click.echo(f"entities: {report.entities}")
    click.echo(f"relations: {report.relations}")
    click.echo(f"ego-graphs encoded: {report.reencoded}")
    if report.dropped_relations:
        click.echo(f"warning: dropped relations: {report.dropped_relations}", err=True)


@main.command("query")
@click.argument("query_text")
@click.option("--config", "config_path", default=None)
@click.option("--store", "store_dir", default="dynagrag_store", show_default=True)
@click.option("--trace", is_flag=True, help="Emit per-stage artifacts as JSON on stderr.")
@click.option("--top-n", type=int, default=None)
@click.option("--no-diversity", is_flag=True, help="Disable top-node diversity tracking.")
@click.option("--dump-prompts", "dump_dir", default=None, help="Write hard prompts to DIR.")
def cmd_query(query_text, config_path, store_dir, trace, top_n, no_diversity, dump_dir):
    """Answer a query against the persisted graph store."""
    config = _load_config(config_path)
    try:
        result = run_query(
            query_text, config, store_dir,
            top_n=top_n,
            diversity=False if no_diversity else None,
            trace=trace,
            dump_prompts_dir=dump_dir,
        )
    except DynaGragError as exc:
        raise click.ClickException(str(exc))
    click.echo(result.answer.text)
    if trace:
        click.echo(json.dumps(result.trace, indent=2, ensure_ascii=False), err=True)


@main.command("eval")
@click.argument("queries_file", type=click.Path(exists=True))
@click.option("--config", "config_path", default=None)
@click.option("--store", "store_dir", default="dynagrag_store", show_default=True)
@click.option("--mode", type=click.Choice(["dynagrag", "no-graph"]), default="dynagrag",
              show_default=True)
def cmd_eval(queries_file, config_path, store_dir, mode):
    """Judge answers for each query in a file (one query per line)."""
    config = _load_config(config_path)
    with open(queries_file, encoding="utf-8") as fh:
        queries = [line.strip() for line in fh if line.strip()]
    try:
        report = run_eval(queries, config, store_dir, mode=mode)
    except DynaGragError as exc:
        raise click.ClickException(str(exc))
    width = max(len(n) for n in report.per_metric_means)
    for name, mean in report.per_metric_means.items():
        click.echo(f"{name:<{width}}  {mean:.2f}")
    click.echo(f"{'Overall':<{width}}  {report.overall_mean:.2f}")
    if report.failed:
        click.echo(f"failed rows: {report.failed}/{len(report.rows)}", err=True)
    if report.failure_rate > 0.10:
        sys.exit(1)


@main.command("serve")
@click.option("--config", "config_path", default=None)
@click.option("--store", "store_dir", default="dynagrag_store", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
def cmd_serve(config_path, store_dir, host, port):
    """Run the HTTP service."""
    from .service import serve

    config = _load_config(config_path)
    serve(config, store_dir, host=host, port=port)


@main.command("export")
@click.option("--config", "config_path", default=None)
@click.option("--store", "store_dir", default="dynagrag_store", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["dot", "csv"]), default="dot",
              show_default=True)
@click.option("--output", "output", default=None, help="Write to a file instead of stdout.")
def cmd_export(config_path, store_dir, fmt, output):
    """Export the stored graph as DOT or CSV."""
    try:
        text = export_graph(store_dir, fmt)
    except DynaGragError as exc:
        raise click.ClickException(str(exc))
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
