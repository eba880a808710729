"""Cross-model scoring and candidate integration.

Every model's span candidates for a round are pooled (union, exact-text
deduplication), each pooled candidate is scored by every model as its
length-normalized negative log-likelihood, the per-model scores are
averaged, and the candidate minimizing that fused score wins.

Token counts are model-specific: heterogeneous tokenizers make a shared
count undefined, so each model normalizes by its own tokenization of the
span. A span one model cannot encode at all receives a fixed penalty from
that model rather than shrinking the ensemble average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .lm_core import (
    EmptyPoolError,
    EncodingMismatchError,
    LanguageModel,
    UnscorablePoolError,
)

# -ln(1e-9): NLL charged by a model that cannot encode a candidate
UNSCORABLE_PENALTY_NLL = -math.log(1e-9)

GREEDY_ORIGIN = "greedy"


@dataclass(frozen=True)
class SpanCandidate:
    """One model's committed word sequence for a round, text-canonical.

    ``span_text`` is the exact text that would be appended to the prefix
    if this candidate wins. ``origin`` is (model_id, branch label) for
    traceability; ``is_eos`` marks spans whose final word ended at EOS.
    """

    span_text: str
    word_count: int
    origin: tuple[str, str]
    is_eos: bool = False

    def key(self) -> tuple[str, bool]:
        return (self.span_text, self.is_eos)


@dataclass(frozen=True)
class FusionScore:
    """Ensemble-averaged normalized NLL of one pooled candidate."""

    candidate: SpanCandidate
    per_model_nll: dict[str, float]
    per_model_token_count: dict[str, int]
    fused: float
    unscorable_models: tuple[str, ...] = ()


def pool(candidates_by_model: Sequence[Sequence[SpanCandidate]]) -> list[SpanCandidate]:
    """Union of all models' candidates, deduplicated by exact span text.

    The earliest origin wins (model order, then branch order) and the
    output order is that first-seen order, which makes tie-breaking in
    :func:`select` deterministic.
    """
    seen: set[tuple[str, bool]] = set()
    pooled: list[SpanCandidate] = []
    for model_candidates in candidates_by_model:
        for candidate in model_candidates:
            if candidate.key() in seen:
                continue
            seen.add(candidate.key())
            pooled.append(candidate)
    if not pooled:
        raise EmptyPoolError("no span candidates were proposed by any model")
    return pooled


def span_nll(
    model: LanguageModel, prefix_text: str, candidate: SpanCandidate
) -> tuple[float, int]:
    """Normalized NLL of a candidate under one model.

    Returns (mean negative logprob, the model's token count for the span).
    EOS candidates are scored with the model's own EOS token closing the
    sequence, and that token counts toward the normalization.
    """
    logprobs = model.score_continuation(
        prefix_text, candidate.span_text, closing_eos=candidate.is_eos
    )
    if not logprobs:
        raise EncodingMismatchError(
            f"span {candidate.span_text!r} produced no scoreable tokens",
            model_id=model.model_id,
        )
    return -sum(logprobs) / len(logprobs), len(logprobs)


def select(
    pooled: Sequence[SpanCandidate],
    models: Sequence[LanguageModel],
    prefix_text: str,
) -> tuple[SpanCandidate, list[FusionScore]]:
    """Score every pooled candidate under every model and pick the argmin.

    Ties keep the earliest pooled candidate. A model that cannot encode a
    candidate contributes the fixed penalty NLL; candidates no model can
    score are dropped, and if that empties the pool the whole selection
    fails.
    """
    if not pooled:
        raise EmptyPoolError("cannot select from an empty candidate pool")
    scores: list[FusionScore] = []
    for candidate in pooled:
        per_nll: dict[str, float] = {}
        per_count: dict[str, int] = {}
        failed: list[str] = []
        for model in models:
            try:
                nll, count = span_nll(model, prefix_text, candidate)
            except EncodingMismatchError:
                nll, count = UNSCORABLE_PENALTY_NLL, 1
                failed.append(model.model_id)
            per_nll[model.model_id] = nll
            per_count[model.model_id] = count
        if len(failed) == len(models):
            continue  # dropped: no model could actually score it
        scores.append(
            FusionScore(
                candidate=candidate,
                per_model_nll=per_nll,
                per_model_token_count=per_count,
                fused=sum(per_nll.values()) / len(models),
                unscorable_models=tuple(failed),
            )
        )
    if not scores:
        raise UnscorablePoolError(
            "every pooled candidate failed to score under every model"
        )
    winner = min(scores, key=lambda s: s.fused)  # min() keeps the earliest tie
    return winner.candidate, scores
