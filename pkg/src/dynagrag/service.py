"""HTTP service exposing the shared pipeline."""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import PipelineConfig
from .errors import DynaGragError, InputError, StateError
from .pipeline import ingest, run_query
from .store import GraphStore


class QueryBody(BaseModel):
    query: str
    top_n: int | None = Field(default=None, ge=1)
    diversity: bool | None = None
    trace: bool = False


class IngestBody(BaseModel):
    paths: list[str]
    append: bool = False


class _Snapshot:
    """Immutable (graph, index) pair swapped atomically on re-ingest."""

    def __init__(self, store: GraphStore):
        self.graph = store.load_graph()
        self.index = store.load_index(self.graph)


def create_app(config: PipelineConfig, store_dir) -> FastAPI:
    app = FastAPI(title="dynagrag", version=__version__)
    store = GraphStore(store_dir)
    state = {"snapshot": None}
    lock = threading.Lock()

    def snapshot() -> _Snapshot:
        snap = state["snapshot"]
        if snap is None:
            with lock:
                if state["snapshot"] is None:
                    if not store.exists():
                        raise HTTPException(status_code=409, detail="no graph store; ingest first")
                    state["snapshot"] = _Snapshot(store)
                snap = state["snapshot"]
        return snap

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.get("/graph/stats")
    def graph_stats():
        try:
            return store.stats()
        except StateError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/query")
    def query(body: QueryBody):
        if not body.query.strip():
            raise HTTPException(status_code=400, detail="query must be non-empty")
        snap = snapshot()
        try:
            result = run_query(
                body.query, config, store_dir,
                top_n=body.top_n, diversity=body.diversity, trace=body.trace,
                loaded=(snap.graph, snap.index),
            )
        except InputError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except DynaGragError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        payload = {
            "answer": result.answer.text,
            "used_subgraphs": result.answer.used_responses,
        }
        if body.trace:
            payload["trace"] = result.trace
        return payload

    @app.post("/ingest")
    def ingest_endpoint(body: IngestBody):
        try:
            report = ingest(body.paths, config, store_dir, append=body.append)
        except InputError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except DynaGragError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        with lock:
            state["snapshot"] = _Snapshot(store)
        return {
            "chunks": report.chunks,
            "entities": report.entities,
            "relations": report.relations,
            "reencoded": report.reencoded,
        }

    return app


def serve(config: PipelineConfig, store_dir, host: str = "127.0.0.1", port: int = 8080):
    """Run the service under uvicorn; in-flight requests drain on shutdown."""
    import uvicorn

    app = create_app(config, store_dir)
    uvicorn.run(app, host=host, port=port)
