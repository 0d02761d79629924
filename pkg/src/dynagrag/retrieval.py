"""Cosine ranking of encoded ego-graphs with top-node diversity tracking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


def cosine(a, b) -> float:
    """Standard cosine similarity; 0.0 when either vector is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass
class RetrievalRequest:
    query_text: str
    query_embedding: np.ndarray
    top_n: int = 5
    diversity_on: bool = True
    max_overlap: int = 0

    def __post_init__(self):
        if self.top_n < 1:
            raise InputError("top_n must be >= 1")
        if self.max_overlap < 0:
            raise InputError("max_overlap must be >= 0")


@dataclass
class RetrievalResult:
    selected: list[tuple[object, float]]  # (EncodedEgoGraph, similarity)
    skipped_for_diversity: int = 0


def retrieve(index, request: RetrievalRequest, backfill: bool = True) -> RetrievalResult:
    """Select up to top_n ego-graphs by cosine, enforcing top-node diversity.

    Candidates are scanned in descending similarity (ties by center label).
    With diversity on, a candidate is accepted only when its top-node overlap
    with all previously accepted top nodes stays within max_overlap. Skipped
    candidates backfill remaining slots when fewer than top_n are accepted.
    """
    if not index.entries:
        raise InputError("index is empty")
    q = np.asarray(request.query_embedding, dtype=np.float64)
    if len(q) != index.dimension:
        raise InputError(
            f"query dimension {len(q)} does not match index dimension {index.dimension}"
        )
    scored = sorted(
        ((entry, cosine(entry.embedding, q)) for entry in index.entries),
        key=lambda pair: (-pair[1], pair[0].ego.center),
    )
    accepted: list[tuple[object, float]] = []
    skipped: list[tuple[object, float]] = []
    covered: set[str] = set()
    for entry, sim in scored:
        if len(accepted) >= request.top_n:
            break
        top = set(entry.top_nodes)
        if request.diversity_on and len(top & covered) > request.max_overlap:
            skipped.append((entry, sim))
            continue
        accepted.append((entry, sim))
        covered |= top
    skipped_count = len(skipped)
    if backfill and len(accepted) < request.top_n:
        accepted.extend(skipped[: request.top_n - len(accepted)])
    accepted.sort(key=lambda pair: (-pair[1], pair[0].ego.center))
    return RetrievalResult(selected=accepted, skipped_for_diversity=skipped_count)
