"""Ensemble decoding loop: propose, gate, pool, score, commit.

Each round, every model builds one or more span candidates (a span is the
words it would commit this round). Candidates are pooled across models,
scored by ensemble-averaged normalized NLL, and the winner is appended to
the shared text prefix. Three modes share this skeleton:

* ``adafuse`` — confidence-gated word commitment with optional
  diversity-aware branching when the gate fails,
* ``fixed_length`` — every round commits exactly L words per model,
* ``beam_round`` — token-level beam search for a fixed number of tokens,
  truncated to the first complete word (ablation baseline).
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

from . import commit as commit_mod
from .diversity import explore_exploit
from .fusion import GREEDY_ORIGIN, FusionScore, SpanCandidate, pool, select
from .lm_core import AdaFuseError, ConfigError, LanguageModel
from .segmenter import WordProposal, gen_word

MODE_ADAFUSE = "adafuse"
MODE_FIXED_LENGTH = "fixed_length"
MODE_BEAM_ROUND = "beam_round"

MARGIN_WORD_START = "word_start"
MARGIN_NEXT_WORD = "next_word"

_BOUNDARY_RE = re.compile(r"^(\s*)(\S+)(\s)")


@dataclass(frozen=True)
class DecodeConfig:
    tau_delta: float = 0.7
    max_words_per_round: int = 3
    branching_factor: int = 3
    diversity_enabled: bool = False
    max_word_tokens: int = 16
    max_new_words: int = 128
    max_new_chars: int = 2048
    stop_sequences: tuple[str, ...] = ()
    mode: str = MODE_ADAFUSE
    fixed_length: int = 1
    beam_round_tokens: int = 5
    topk_for_margin: int = 8
    # which margin gates a word: the word's own first-token margin
    # ("word_start") or a fresh margin at the post-commit prefix
    # ("next_word")
    margin_source: str = MARGIN_WORD_START

    def validate(self) -> None:
        if self.max_words_per_round < 1:
            raise ConfigError("max_words_per_round must be >= 1")
        if self.branching_factor < 1:
            raise ConfigError("branching_factor must be >= 1")
        if self.topk_for_margin < 2:
            raise ConfigError("topk_for_margin must be >= 2")
        if self.max_word_tokens < 1:
            raise ConfigError("max_word_tokens must be >= 1")
        if self.max_new_words < 1 or self.max_new_chars < 1:
            raise ConfigError("generation budgets must be >= 1")
        if self.mode not in (MODE_ADAFUSE, MODE_FIXED_LENGTH, MODE_BEAM_ROUND):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == MODE_FIXED_LENGTH and self.fixed_length not in (1, 2, 3):
            raise ConfigError("fixed_length must be 1, 2, or 3")
        if self.beam_round_tokens < 1:
            raise ConfigError("beam_round_tokens must be >= 1")
        if self.margin_source not in (MARGIN_WORD_START, MARGIN_NEXT_WORD):
            raise ConfigError(f"unknown margin_source {self.margin_source!r}")


@dataclass
class ModelRoundRecord:
    model_id: str
    trigger: str
    margins: list[float] = field(default_factory=list)
    candidates: list[SpanCandidate] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "trigger": self.trigger,
            "margins": self.margins,
            "candidates": [
                {"span_text": c.span_text, "origin": list(c.origin),
                 "word_count": c.word_count, "is_eos": c.is_eos}
                for c in self.candidates
            ],
        }


@dataclass
class RoundRecord:
    index: int
    prefix_before: str
    per_model: list[ModelRoundRecord]
    pooled: list[SpanCandidate]
    scores: list[FusionScore]
    winner: SpanCandidate
    words_committed: int

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "prefix_before": self.prefix_before,
            "per_model": [m.to_dict() for m in self.per_model],
            "pooled": [c.span_text for c in self.pooled],
            "scores": [
                {
                    "span_text": s.candidate.span_text,
                    "origin": list(s.candidate.origin),
                    "is_eos": s.candidate.is_eos,
                    "per_model_nll": s.per_model_nll,
                    "per_model_token_count": s.per_model_token_count,
                    "fused": s.fused,
                    "unscorable_models": list(s.unscorable_models),
                }
                for s in self.scores
            ],
            "winner": {
                "span_text": self.winner.span_text,
                "origin": list(self.winner.origin),
                "is_eos": self.winner.is_eos,
            },
            "words_committed": self.words_committed,
        }


@dataclass
class DecodeTrace:
    prompt: str
    mode: str
    rounds: list[RoundRecord] = field(default_factory=list)
    output: str = ""
    stop_reason: str = ""
    provider_forward_calls: int = 0
    scoring_calls: int = 0
    words: int = 0
    wall_time: float = 0.0

    @property
    def generated(self) -> str:
        return self.output[len(self.prompt):]

    def replay_output(self) -> str:
        """Reconstruct the output from per-round winners (faithfulness check)."""
        return self.prompt + "".join(r.winner.span_text for r in self.rounds)

    def words_per_round(self) -> list[int]:
        """Committed word counts for rounds that committed at least one word."""
        return [r.words_committed for r in self.rounds if r.words_committed > 0]

    def to_dict(self, *, include_wall_time: bool = True) -> dict:
        totals = {
            "rounds": len(self.rounds),
            "provider_forward_calls": self.provider_forward_calls,
            "scoring_calls": self.scoring_calls,
            "words": self.words,
        }
        if include_wall_time:
            totals["wall_time"] = self.wall_time
        return {
            "prompt": self.prompt,
            "mode": self.mode,
            "output": self.output,
            "stop_reason": self.stop_reason,
            "rounds": [r.to_dict() for r in self.rounds],
            "totals": totals,
        }


class DecodeError(AdaFuseError):
    """A provider failed mid-decode; carries what was committed so far."""

    def __init__(self, message: str, *, round_index: int, partial_output: str,
                 trace: DecodeTrace):
        super().__init__(message)
        self.round_index = round_index
        self.partial_output = partial_output
        self.trace = trace


class _CountingProvider:
    """Delegating provider wrapper that counts calls for trace totals."""

    def __init__(self, inner: LanguageModel):
        self.inner = inner
        self.forward_calls = 0
        self.scoring_calls = 0

    @property
    def model_id(self) -> str:
        return self.inner.model_id

    @property
    def eos_token_id(self) -> int:
        return self.inner.eos_token_id

    @property
    def eos_surface(self) -> str:
        return self.inner.eos_surface

    @property
    def vocab_size(self) -> int:
        return self.inner.vocab_size

    @property
    def handle(self):
        return self.inner.handle

    def encode(self, text):
        return self.inner.encode(text)

    def decode(self, tokens):
        return self.inner.decode(tokens)

    def next_token_topk(self, prefix_text, partial_word_tokens, k):
        self.forward_calls += 1
        return self.inner.next_token_topk(prefix_text, partial_word_tokens, k)

    def score_continuation(self, prefix_text, continuation_text, *, closing_eos=False):
        self.scoring_calls += 1
        return self.inner.score_continuation(
            prefix_text, continuation_text, closing_eos=closing_eos
        )


def _append_word(prefix: str, span_so_far: str, proposal: WordProposal) -> str:
    """Append a word to the in-round span, restoring one separator when the
    model opened a new word against a prefix that lacks a trailing space."""
    text = proposal.word_text
    if (
        text
        and not span_so_far
        and proposal.leading_ws
        and prefix
        and not prefix[-1].isspace()
    ):
        text = " " + text
    return span_so_far + text


def _span_candidate(
    prefix: str,
    committed: Sequence[WordProposal],
    origin: tuple[str, str],
    *,
    is_eos: bool,
) -> SpanCandidate:
    text = ""
    for proposal in committed:
        text = _append_word(prefix, text, proposal)
    return SpanCandidate(
        span_text=text,
        word_count=sum(1 for p in committed if p.surface_word),
        origin=origin,
        is_eos=is_eos,
    )


def _spans_adafuse(
    model, prefix: str, allowance: int, config: DecodeConfig
) -> tuple[list[SpanCandidate], ModelRoundRecord]:
    record = ModelRoundRecord(model_id=model.model_id, trigger="round_cap")
    committed: list[WordProposal] = []
    span_text = ""
    spans: list[SpanCandidate] | None = None
    next_word_gate_open = True  # only used by the next_word margin source

    while len(committed) < allowance:
        proposal = gen_word(
            model,
            prefix,
            span_text,
            max_word_tokens=config.max_word_tokens,
            topk=config.topk_for_margin,
        )
        if proposal.is_eos:
            committed.append(proposal)
            record.trigger = "eos"
            spans = [
                _span_candidate(
                    prefix, committed, (model.model_id, GREEDY_ORIGIN), is_eos=True
                )
            ]
            break

        if config.margin_source == MARGIN_WORD_START:
            margin_value = commit_mod.margin(proposal.first_token_dist)
            record.margins.append(margin_value)
            decision = commit_mod.decide(
                margin_value,
                len(committed),
                tau_delta=config.tau_delta,
                max_words_per_round=config.max_words_per_round,
                diversity_enabled=config.diversity_enabled,
            )
            if decision.verdict == commit_mod.COMMIT_AND_CONTINUE:
                span_text = _append_word(prefix, span_text, proposal)
                committed.append(proposal)
                continue
            if decision.verdict == commit_mod.COMMIT_AND_HALT:
                span_text = _append_word(prefix, span_text, proposal)
                committed.append(proposal)
                record.trigger = "low_margin_halt"
                spans = [
                    _span_candidate(
                        prefix, committed, (model.model_id, GREEDY_ORIGIN),
                        is_eos=False,
                    )
                ]
                break
            # diversify: the greedy word is branch one of the exploration
            record.trigger = "diversify"
            branch_set = explore_exploit(
                model,
                prefix,
                span_text,
                config.branching_factor,
                max_word_tokens=config.max_word_tokens,
                topk=config.topk_for_margin,
            )
            spans = [
                _span_candidate(
                    prefix,
                    [*committed, branch],
                    (model.model_id, f"branch{i}"),
                    is_eos=branch.is_eos,
                )
                for i, branch in enumerate(branch_set.branches)
            ]
            break

        else:  # MARGIN_NEXT_WORD: the word is committed, then a fresh
            # margin at the new prefix gates the *next* word
            span_text = _append_word(prefix, span_text, proposal)
            committed.append(proposal)
            if len(committed) >= allowance:
                break
            dist = model.next_token_topk(
                prefix + span_text, [], config.topk_for_margin
            )
            margin_value = commit_mod.margin(dist)
            record.margins.append(margin_value)
            decision = commit_mod.decide(
                margin_value,
                len(committed),
                tau_delta=config.tau_delta,
                max_words_per_round=config.max_words_per_round,
                diversity_enabled=config.diversity_enabled,
            )
            if decision.verdict == commit_mod.COMMIT_AND_CONTINUE:
                continue
            if decision.verdict == commit_mod.COMMIT_AND_HALT:
                record.trigger = "low_margin_halt"
                spans = [
                    _span_candidate(
                        prefix, committed, (model.model_id, GREEDY_ORIGIN),
                        is_eos=False,
                    )
                ]
                break
            record.trigger = "diversify"
            branch_set = explore_exploit(
                model,
                prefix,
                span_text,
                config.branching_factor,
                max_word_tokens=config.max_word_tokens,
                topk=config.topk_for_margin,
                first_dist=dist,
            )
            spans = [
                _span_candidate(
                    prefix,
                    [*committed, branch],
                    (model.model_id, f"branch{i}"),
                    is_eos=branch.is_eos,
                )
                for i, branch in enumerate(branch_set.branches)
            ]
            break

    if spans is None:
        spans = [
            _span_candidate(
                prefix, committed, (model.model_id, GREEDY_ORIGIN), is_eos=False
            )
        ]
    record.candidates = spans
    return spans, record


def _spans_fixed(
    model, prefix: str, allowance: int, config: DecodeConfig
) -> tuple[list[SpanCandidate], ModelRoundRecord]:
    record = ModelRoundRecord(model_id=model.model_id, trigger="fixed")
    committed: list[WordProposal] = []
    span_text = ""
    is_eos = False
    length = min(config.fixed_length, allowance)
    for _ in range(length):
        proposal = gen_word(
            model,
            prefix,
            span_text,
            max_word_tokens=config.max_word_tokens,
            topk=config.topk_for_margin,
        )
        committed.append(proposal)
        span_text = _append_word(prefix, span_text, proposal)
        if proposal.is_eos:
            is_eos = True
            record.trigger = "eos"
            break
    spans = [
        _span_candidate(prefix, committed, (model.model_id, GREEDY_ORIGIN),
                        is_eos=is_eos)
    ]
    record.candidates = spans
    return spans, record


def _spans_beam_round(
    model, prefix: str, config: DecodeConfig
) -> tuple[list[SpanCandidate], ModelRoundRecord]:
    record = ModelRoundRecord(model_id=model.model_id, trigger="beam_round")
    width = config.branching_factor
    eos_id = model.eos_token_id
    # beams: (tokens, cumulative logprob, finished)
    beams: list[tuple[tuple[int, ...], float, bool]] = [((), 0.0, False)]
    for _ in range(config.beam_round_tokens):
        expanded: list[tuple[float, int, int, tuple[int, ...], bool]] = []
        alive = False
        for parent, (tokens, logprob, finished) in enumerate(beams):
            if finished:
                expanded.append((logprob, parent, -1, tokens, True))
                continue
            alive = True
            dist = model.next_token_topk(prefix, list(tokens), max(width, 2))
            for entry in dist.entries[:width]:
                if entry.token == eos_id:
                    expanded.append(
                        (logprob + entry.logprob, parent, entry.token, tokens, True)
                    )
                else:
                    expanded.append(
                        (
                            logprob + entry.logprob,
                            parent,
                            entry.token,
                            tokens + (entry.token,),
                            False,
                        )
                    )
        if not alive:
            break
        expanded.sort(key=lambda item: (-item[0], item[1], item[2]))
        beams = [(tokens, lp, fin) for lp, _, _, tokens, fin in expanded[:width]]

    spans: list[SpanCandidate] = []
    for index, (tokens, _, finished) in enumerate(beams):
        text = model.decode(tokens)
        match = _BOUNDARY_RE.match(text)
        if match:
            word_text = match.group(2) + " "
            leading = bool(match.group(1))
            is_eos = False
        else:
            run = text.strip()
            leading = text[:1].isspace()
            if finished:
                word_text = run  # EOS before any boundary: no separator
                is_eos = True
            elif run:
                word_text = run + " "  # truncation forces the boundary
                is_eos = False
            else:
                continue  # whitespace-only unfinished beam proposes nothing
        if word_text and leading and prefix and not prefix[-1].isspace():
            word_text = " " + word_text
        spans.append(
            SpanCandidate(
                span_text=word_text,
                word_count=1 if word_text.strip() else 0,
                origin=(model.model_id, f"beam{index}"),
                is_eos=is_eos,
            )
        )
    record.candidates = spans
    return spans, record


def decode(
    prompt: str,
    models: Sequence[LanguageModel],
    config: DecodeConfig | None = None,
) -> tuple[str, DecodeTrace]:
    """Run the full ensemble decoding loop; returns (output text, trace).

    The output includes the prompt. Stops when an EOS candidate wins
    fusion, when a stop sequence appears in the committed text, or when
    the word/character budget is exhausted.
    """
    config = config or DecodeConfig()
    config.validate()
    if not models:
        raise ConfigError("at least one model is required")
    ids = [m.model_id for m in models]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"model ids must be unique within an ensemble: {ids}")

    counted = [_CountingProvider(m) for m in models]
    trace = DecodeTrace(prompt=prompt, mode=config.mode)
    prefix = prompt
    words_total = 0
    started = time.perf_counter()

    def finalize(reason: str) -> tuple[str, DecodeTrace]:
        trace.output = prefix
        trace.stop_reason = reason
        trace.words = words_total
        trace.provider_forward_calls = sum(c.forward_calls for c in counted)
        trace.scoring_calls = sum(c.scoring_calls for c in counted)
        trace.wall_time = time.perf_counter() - started
        return prefix, trace

    round_index = 0
    while True:
        if words_total >= config.max_new_words:
            return finalize("max_words")
        if len(prefix) - len(prompt) >= config.max_new_chars:
            return finalize("max_chars")
        allowance = min(
            config.max_words_per_round, config.max_new_words - words_total
        )
        try:
            per_model: list[list[SpanCandidate]] = []
            records: list[ModelRoundRecord] = []
            for model in counted:
                if config.mode == MODE_ADAFUSE:
                    spans, rec = _spans_adafuse(model, prefix, allowance, config)
                elif config.mode == MODE_FIXED_LENGTH:
                    spans, rec = _spans_fixed(model, prefix, allowance, config)
                else:
                    spans, rec = _spans_beam_round(model, prefix, config)
                per_model.append(spans)
                records.append(rec)
            pooled = pool(per_model)
            winner, scores = select(pooled, counted, prefix)
        except AdaFuseError as exc:
            partial, trace_out = finalize(f"error:{type(exc).__name__}")
            raise DecodeError(
                f"round {round_index} failed: {exc}",
                round_index=round_index,
                partial_output=partial,
                trace=trace_out,
            ) from exc

        trace.rounds.append(
            RoundRecord(
                index=round_index,
                prefix_before=prefix,
                per_model=records,
                pooled=pooled,
                scores=scores,
                winner=winner,
                words_committed=winner.word_count,
            )
        )
        prefix += winner.span_text
        words_total += winner.word_count
        round_index += 1

        if winner.is_eos:
            return finalize("eos")
        generated = prefix[len(prompt):]
        for stop in config.stop_sequences:
            if stop and stop in generated:
                return finalize("stop_sequence")
        if winner.word_count == 0:
            # defensive: a non-EOS zero-word winner would never progress
            return finalize("no_progress")


def decode_fixed(
    prompt: str,
    models: Sequence[LanguageModel],
    config: DecodeConfig,
) -> tuple[str, DecodeTrace]:
    """Fixed-length ablation: every round commits exactly L words per model."""
    return decode(prompt, models, replace(config, mode=MODE_FIXED_LENGTH))


def decode_beam_round(
    prompt: str,
    models: Sequence[LanguageModel],
    config: DecodeConfig,
) -> tuple[str, DecodeTrace]:
    """Token-budgeted beam-round baseline: per round, width-B beam search
    for a fixed number of tokens, truncated to the first complete word."""
    return decode(prompt, models, replace(config, mode=MODE_BEAM_ROUND))
