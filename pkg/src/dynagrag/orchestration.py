"""Per-subgraph answer generation, helpfulness scoring, synthesis, and judging."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import GenerationError, InputError, JudgeError
from .prompting import HardPrompt
from .retrieval import cosine

METRIC_NAMES = [
    "Comprehensiveness",
    "Diversity",
    "Empowerment",
    "Directness",
    "Clarity and Brevity",
    "Depth and Specificity",
    "Subjectivity and Nuance",
    "Implication Focus",
    "Ethical Alignment",
]

ANSWER_SYSTEM_TEXT = (
    "You answer questions from a structured knowledge outline. "
    "Ground every claim in the outline."
)
JUDGE_SYSTEM_TEXT = "You are a strict evaluator. Follow the reply format exactly."
SYNTHESIS_SYSTEM_TEXT = (
    "You synthesize partial answers into one final answer without redundancy."
)

TEMPLATE_FILES = {
    "extraction": "extraction.txt",
    "intermediate": "intermediate.txt",
    "helpfulness": "helpfulness.txt",
    "synthesis": "synthesis.txt",
    "judge9": "judge9.txt",
}

_SCORE_LINE_RE = re.compile(r"SCORES?\s*:\s*([0-9 .\t]+)", re.IGNORECASE)


def fill(template: str, **values: str) -> str:
    """Placeholder substitution that tolerates braces inside the values."""
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


def load_templates(prompts_dir: str | None = None) -> dict[str, str]:
    """Load prompt templates from a directory, falling back to shipped defaults."""
    templates = {}
    for name, filename in TEMPLATE_FILES.items():
        if prompts_dir is not None:
            path = Path(prompts_dir) / filename
            if path.is_file():
                templates[name] = path.read_text(encoding="utf-8")
                continue
        templates[name] = (
            resources.files("dynagrag").joinpath("prompts", filename).read_text(encoding="utf-8")
        )
    return templates


@dataclass
class IntermediateResponse:
    subgraph_ref: str
    text: str
    helpfulness: float = 0.0
    sub_scores: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class FinalAnswer:
    text: str
    used_responses: list[str]
    query_text: str


@dataclass
class JudgeReport:
    scores: dict[str, float]
    overall: float


def _parse_scores(text: str, expected: int) -> list[float] | None:
    match = _SCORE_LINE_RE.search(text)
    if match:
        values = [float(v) for v in match.group(1).split()]
        if len(values) >= expected and all(0 <= v <= 10 for v in values[:expected]):
            return values[:expected]
    # tolerate a bare line of numbers
    for line in text.splitlines():
        parts = line.split()
        if len(parts) == expected:
            try:
                values = [float(p) for p in parts]
            except ValueError:
                continue
            if all(0 <= v <= 10 for v in values):
                return values
    return None


def answer_subgraph(gateway, query: str, prompt: HardPrompt, subgraph_ref: str,
                    template: str) -> IntermediateResponse:
    """Generate an (unscored) intermediate response for one hard prompt."""
    if not query.strip():
        raise InputError("query must be non-empty")
    if not prompt.text.strip():
        raise InputError("hard prompt must be non-empty")
    user = fill(template, query=query, context=prompt.text)
    exchange = gateway.chat(ANSWER_SYSTEM_TEXT, user)
    if not exchange.response_text.strip():
        raise GenerationError("empty completion for intermediate response")
    return IntermediateResponse(subgraph_ref=subgraph_ref, text=exchange.response_text)


def score_helpfulness(gateway, query: str, response: IntermediateResponse,
                      template: str) -> IntermediateResponse:
    """Judge relevance/coherence/detail; fall back to a heuristic on parse failure."""
    if not response.text.strip():
        raise InputError("response text must be non-empty")
    user = fill(template, query=query, response=response.text)
    scores = None
    for _ in range(2):
        reply = gateway.chat(JUDGE_SYSTEM_TEXT, user).response_text
        scores = _parse_scores(reply, 3)
        if scores is not None:
            break
    if scores is None:
        query_vec, resp_vec = (v.values for v in gateway.embed([query, response.text]))
        relevance = 10.0 * max(0.0, cosine(query_vec, resp_vec))
        coherence = 5.0
        detail = 10.0 * min(1.0, len(response.text.split()) / 300.0)
        scores = [relevance, coherence, detail]
    response.sub_scores = tuple(scores)
    response.helpfulness = sum(scores) / 3.0
    return response


def synthesize_final(gateway, query: str, scored: list[IntermediateResponse],
                     template: str) -> FinalAnswer:
    """Sort by helpfulness and synthesize one final answer."""
    if not scored:
        raise InputError("at least one scored response required")
    ordered = sorted(scored, key=lambda r: (-r.helpfulness, r.subgraph_ref))
    blocks = [
        f"### Response from subgraph '{r.subgraph_ref}' (helpfulness {r.helpfulness:.2f})\n{r.text}"
        for r in ordered
    ]
    user = fill(template, query=query, responses="\n\n".join(blocks))
    exchange = gateway.chat(SYNTHESIS_SYSTEM_TEXT, user)
    if not exchange.response_text.strip():
        raise GenerationError("empty completion for final answer")
    return FinalAnswer(text=exchange.response_text,
                       used_responses=[r.subgraph_ref for r in ordered],
                       query_text=query)


def judge_nine_metrics(gateway, query: str, answer: str, template: str) -> JudgeReport:
    """Single-call nine-metric judge; parse failure after one re-ask is an error."""
    if not answer.strip():
        raise InputError("answer must be non-empty")
    user = fill(template, query=query, answer=answer)
    scores = None
    last_reply = ""
    for _ in range(2):
        last_reply = gateway.chat(JUDGE_SYSTEM_TEXT, user).response_text
        scores = _parse_scores(last_reply, 9)
        if scores is not None:
            break
    if scores is None:
        raise JudgeError(f"could not parse nine scores from judge reply: {last_reply!r}")
    per_metric = dict(zip(METRIC_NAMES, scores))
    return JudgeReport(scores=per_metric, overall=sum(scores) / len(scores))
