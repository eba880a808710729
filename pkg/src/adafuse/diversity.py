"""Two-stage diversity search: distinct first tokens, then greedy tails.

Exploration selects the top-B *distinct* first tokens of the next word by
conditional likelihood; exploitation extends each greedily to a word
boundary. A seed must be an available lexical entry point: EOS,
pure-whitespace surfaces, and effectively-zero probabilities are not
seeds (an EOS-favoring model contributes its end-of-sequence candidate
through the plain proposal path instead).

Distinctness is enforced at the token level, so two branches may still
decode to the same word text; text-level deduplication happens later when
candidates are pooled for fusion.
"""

from __future__ import annotations

from dataclasses import dataclass

from .lm_core import (
    FLOOR_LOGPROB,
    InsufficientCandidatesError,
    LanguageModel,
    TokenDistribution,
    TokenEntry,
)
from .segmenter import WordProposal, gen_word


def seed_entries(
    dist: TokenDistribution, eos_token_id: int, branching_factor: int
) -> list[TokenEntry]:
    """The top-B available word-start seeds of a distribution."""
    seeds = [
        entry
        for entry in dist.entries
        if entry.token != eos_token_id
        and not (entry.surface and entry.surface.isspace())
        and entry.logprob > FLOOR_LOGPROB
    ]
    return seeds[:branching_factor]


@dataclass(frozen=True)
class BranchSet:
    """Completed branch words for one diversified word slot.

    Branch order follows descending first-token logprob (ties by ascending
    token id), so branch one is always the plain greedy word and the set
    for B is a prefix of the set for B+1.
    """

    branches: tuple[WordProposal, ...]
    branching_factor: int


def explore_exploit(
    model: LanguageModel,
    prefix_text: str,
    committed_round_text: str = "",
    branching_factor: int = 3,
    *,
    max_word_tokens: int = 16,
    topk: int = 8,
    first_dist: TokenDistribution | None = None,
) -> BranchSet:
    """Enumerate up to B branch words with distinct initial tokens.

    The branch count clips silently to the number of distinct tokens the
    first-token distribution actually offers. ``first_dist`` may supply a
    pre-fetched first-token distribution (it must hold at least
    ``branching_factor`` entries or the provider's full vocabulary).
    """
    if branching_factor < 1:
        raise ValueError("branching_factor must be >= 1")
    k = max(branching_factor, topk, 2)
    if first_dist is None or (
        len(first_dist.entries) < branching_factor and first_dist.k < k
    ):
        first_dist = model.next_token_topk(
            prefix_text + committed_round_text, [], k
        )
    seeds = seed_entries(first_dist, model.eos_token_id, branching_factor)
    if not seeds:
        raise InsufficientCandidatesError(
            f"model {model.model_id!r} offers no word-start seeds here",
            model_id=model.model_id,
        )
    branches = tuple(
        gen_word(
            model,
            prefix_text,
            committed_round_text,
            seed_token=entry.token,
            max_word_tokens=max_word_tokens,
            topk=topk,
            first_dist=first_dist,
        )
        for entry in seeds
    )
    return BranchSet(branches=branches, branching_factor=branching_factor)
