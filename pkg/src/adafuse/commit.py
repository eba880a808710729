"""Adaptive word commitment: the start-of-word confidence gate.

The gate statistic is the margin between the top two probabilities of the
first token of a word. A margin at or above the threshold commits the word
and keeps generating; below it, the round either halts after the current
word or (with diversity enabled) branches into alternative words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .lm_core import InsufficientCandidatesError, TokenDistribution

COMMIT_AND_CONTINUE = "commit_and_continue"
COMMIT_AND_HALT = "commit_and_halt"
DIVERSIFY = "diversify"


@dataclass(frozen=True)
class MarginDecision:
    margin: float
    threshold: float
    verdict: str
    words_committed_so_far: int


def margin(dist: TokenDistribution) -> float:
    """Top-1 minus top-2 probability of a next-token distribution.

    A single-entry distribution is only legal when the provider's
    predictable vocabulary is a single token, in which case the margin is
    one by definition.
    """
    if not dist.entries:
        raise InsufficientCandidatesError("empty distribution has no margin")
    if len(dist.entries) == 1:
        return 1.0
    p1 = math.exp(dist.entries[0].logprob)
    p2 = math.exp(dist.entries[1].logprob)
    return p1 - p2


def decide(
    margin_value: float,
    words_committed: int,
    *,
    tau_delta: float,
    max_words_per_round: int,
    diversity_enabled: bool,
) -> MarginDecision:
    """Gate verdict for the word whose start-of-word margin is given.

    ``words_committed`` counts words already committed this round (before
    the word under decision). The comparison is inclusive: margin >= tau
    passes. The per-round cap itself is enforced by the caller's loop
    guard; a passing margin on the round's last allowed word still reads
    ``commit_and_continue`` and the round simply ends.
    """
    if not 0 <= words_committed <= max_words_per_round:
        raise ValueError(
            f"words_committed {words_committed} outside [0, {max_words_per_round}]"
        )
    if margin_value >= tau_delta:
        verdict = COMMIT_AND_CONTINUE
    elif diversity_enabled:
        verdict = DIVERSIFY
    else:
        verdict = COMMIT_AND_HALT
    return MarginDecision(
        margin=margin_value,
        threshold=tau_delta,
        verdict=verdict,
        words_committed_so_far=words_committed,
    )
