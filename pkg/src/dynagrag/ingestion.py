"""Document chunking and LLM-driven entity/relation mention extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import ConfigError, ExtractionError, InputError

# Token positions use a whitespace-word heuristic: one word ~ 4/3 tokens.
TOKENS_PER_WORD_NUM = 4
TOKENS_PER_WORD_DEN = 3


@dataclass(frozen=True)
class TextChunk:
    doc_id: str
    chunk_index: int
    text: str
    token_span: tuple[int, int]


@dataclass(frozen=True)
class EntityMention:
    label: str
    summary: str
    chunk_ref: tuple[str, int]


@dataclass(frozen=True)
class RelationMention:
    source_label: str
    target_label: str
    description: str
    chunk_ref: tuple[str, int]


@dataclass
class ExtractionResult:
    entities: list[EntityMention]
    relations: list[RelationMention]
    dropped_relations: int = 0


def normalize_label(label: str) -> str:
    return " ".join(label.split()).lower()


def tokens_to_words(tokens: int) -> int:
    return tokens * TOKENS_PER_WORD_DEN // TOKENS_PER_WORD_NUM


def word_to_token_start(word_index: int) -> int:
    return word_index * TOKENS_PER_WORD_NUM // TOKENS_PER_WORD_DEN


def word_to_token_end(word_index: int) -> int:
    return math.ceil(word_index * TOKENS_PER_WORD_NUM / TOKENS_PER_WORD_DEN)


def chunk_document(doc_id: str, text: str, chunk_tokens: int = 2400,
                   overlap_tokens: int = 200,
                   tokenizer: Callable[[str], list[str]] | None = None) -> list[TextChunk]:
    """Split a document into overlapping chunks over its token sequence.

    Chunk i starts at token i*(chunk_tokens - overlap_tokens). Without a
    custom tokenizer, words are the atomic units and token positions are
    scaled by the 4/3 heuristic.
    """
    if chunk_tokens <= 0:
        raise ConfigError("chunk_tokens must be positive")
    if overlap_tokens < 0 or overlap_tokens >= chunk_tokens:
        raise ConfigError("overlap_tokens must satisfy 0 <= overlap < chunk_tokens")

    if tokenizer is not None:
        units = tokenizer(text)
        unit_chunk, unit_overlap = chunk_tokens, overlap_tokens
        tok_start, tok_end = (lambda i: i), (lambda i: i)
    else:
        units = text.split()
        unit_chunk = tokens_to_words(chunk_tokens)
        unit_overlap = tokens_to_words(overlap_tokens)
        tok_start, tok_end = word_to_token_start, word_to_token_end
    if not units:
        return []
    if unit_chunk <= unit_overlap:
        raise ConfigError("overlap too close to chunk size for the token heuristic")

    stride = unit_chunk - unit_overlap
    chunks = []
    i = 0
    while True:
        start = i * stride
        end = min(start + unit_chunk, len(units))
        chunks.append(TextChunk(
            doc_id=doc_id,
            chunk_index=i,
            text=" ".join(units[start:end]),
            token_span=(tok_start(start), tok_end(end)),
        ))
        if end >= len(units):
            break
        i += 1
    return chunks


def _parse_mentions(reply: str, chunk_ref: tuple[str, int]) -> ExtractionResult:
    entities: list[EntityMention] = []
    relations: list[RelationMention] = []
    dropped = 0
    for line in reply.splitlines():
        line = line.strip()
        if line.upper().startswith("ENTITY |") or line.upper().startswith("ENTITY|"):
            parts = [p.strip() for p in line.split("|")]
            if len(parts) >= 2 and parts[1]:
                summary = parts[2] if len(parts) > 2 else ""
                entities.append(EntityMention(parts[1], summary, chunk_ref))
        elif line.upper().startswith("RELATION |") or line.upper().startswith("RELATION|"):
            parts = [p.strip() for p in line.split("|")]
            if len(parts) >= 3 and parts[1] and parts[2]:
                src, tgt = parts[1], parts[2]
                if normalize_label(src) == normalize_label(tgt):
                    dropped += 1  # self-loop rejected at mention level
                    continue
                desc = parts[3] if len(parts) > 3 else ""
                relations.append(RelationMention(src, tgt, desc, chunk_ref))
    known = {normalize_label(e.label) for e in entities}
    kept = []
    for rel in relations:
        if normalize_label(rel.source_label) in known and normalize_label(rel.target_label) in known:
            kept.append(rel)
        else:
            dropped += 1
    return ExtractionResult(entities, kept, dropped)


def extract_mentions(gateway, chunk: TextChunk, extraction_prompt: str,
                     system_text: str = "You extract entities and relations from text.") -> ExtractionResult:
    """Ask the LLM for structured mentions; one re-ask on an unparseable reply."""
    if "{chunk_text}" not in extraction_prompt:
        raise InputError("extraction prompt must contain a {chunk_text} placeholder")
    user_text = extraction_prompt.replace("{chunk_text}", chunk.text)
    last_reply = ""
    for _ in range(2):
        exchange = gateway.chat(system_text, user_text)
        last_reply = exchange.response_text
        result = _parse_mentions(last_reply, (chunk.doc_id, chunk.chunk_index))
        if result.entities:
            return result
    raise ExtractionError("could not parse extraction reply", raw_reply=last_reply)


def entity_embed_text(mention: EntityMention) -> str:
    return f"{mention.label}: {mention.summary}" if mention.summary else mention.label


def relation_embed_text(mention: RelationMention) -> str:
    mid = mention.description or "related to"
    return f"{mention.source_label} {mid} {mention.target_label}"


def embed_mentions(gateway, entities: list[EntityMention],
                   relations: list[RelationMention]) -> dict:
    """Embed every mention; the table is keyed by the mention record itself."""
    if not entities and not relations:
        raise InputError("no mentions to embed")
    mentions = list(entities) + list(relations)
    texts = [
        entity_embed_text(m) if isinstance(m, EntityMention) else relation_embed_text(m)
        for m in mentions
    ]
    vectors = gateway.embed(texts)
    return {m: v.values for m, v in zip(mentions, vectors)}


def collect_input_files(paths: list[str]) -> list[Path]:
    """Expand files and directories (recursing over *.txt) into a sorted file list."""
    files: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            files.extend(sorted(p.rglob("*.txt")))
        elif p.is_file():
            files.append(p)
        else:
            raise InputError(f"unreadable input path: {raw}")
    return sorted(set(files))
