"""Confidence-gated word-level ensemble decoding for causal language models.

Multiple models with incompatible tokenizers decode together: each round
every model proposes the words it would commit, the proposals are pooled
and scored by ensemble-averaged normalized NLL, and the winner extends a
shared text prefix. Commitment length adapts to a start-of-word confidence
margin, and uncertain word starts can branch into diversity-aware
exploration.
"""

from .commit import MarginDecision, decide, margin
from .diversity import BranchSet, explore_exploit
from .engine import (
    DecodeConfig,
    DecodeError,
    DecodeTrace,
    decode,
    decode_beam_round,
    decode_fixed,
)
from .fusion import FusionScore, SpanCandidate, pool, select, span_nll
from .harness import EvalRecord, bleu, exact_match, run_sweep, words_per_round_histogram
from .lm_core import (
    AdaFuseError,
    LanguageModel,
    ModelHandle,
    TokenDistribution,
    TokenEntry,
)
from .ngram_lm import FixtureLM, NgramLM, fixture_deterministic
from .remote_lm import RemoteLM
from .segmenter import WordProposal, gen_word

__version__ = "0.1.0"

__all__ = [
    "AdaFuseError",
    "BranchSet",
    "DecodeConfig",
    "DecodeError",
    "DecodeTrace",
    "EvalRecord",
    "FixtureLM",
    "FusionScore",
    "LanguageModel",
    "MarginDecision",
    "ModelHandle",
    "NgramLM",
    "RemoteLM",
    "SpanCandidate",
    "TokenDistribution",
    "TokenEntry",
    "WordProposal",
    "bleu",
    "decide",
    "decode",
    "decode_beam_round",
    "decode_fixed",
    "exact_match",
    "explore_exploit",
    "fixture_deterministic",
    "gen_word",
    "margin",
    "pool",
    "run_sweep",
    "select",
    "span_nll",
    "words_per_round_histogram",
    "__version__",
]
