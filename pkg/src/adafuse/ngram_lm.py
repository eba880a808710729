"""Deterministic reference language models for desk-scale testing.

:class:`NgramLM` is an additively smoothed n-gram model over either a
character tokenizer (every character, including whitespace, is a token) or
a whitespace-word tokenizer (maximal non-whitespace runs and whitespace
runs are tokens). Smoothing is closed-form, so every probability the
engine consumes can be recomputed independently from raw counts.

:class:`FixtureLM` drives tests that need exact control: an explicit map
from context text to the next token (probability one) or to a small
branching distribution.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .lm_core import (
    FLOOR_LOGPROB,
    ConfigError,
    EncodingMismatchError,
    InvalidTokenError,
    LanguageModel,
    TokenDistribution,
    UnreachableContextError,
    make_distribution,
)

FORMAT_NAME = "adafuse-ngram"
FORMAT_VERSION = 1

_WORD_TOKEN_RE = re.compile(r"\S+|\s+")

BOS_ID = 0
EOS_ID = 1
_BOS_SURFACE = ""


def tokenize(text: str, kind: str) -> list[str]:
    """Split text into token surfaces for the given tokenizer kind."""
    if kind == "char":
        return list(text)
    if kind == "word":
        return _WORD_TOKEN_RE.findall(text)
    raise ConfigError(f"unknown tokenizer kind {kind!r}")


class NgramLM(LanguageModel):
    """Additively smoothed n-gram model implementing the provider contract.

    Every training document contributes its token stream followed by the
    EOS token; contexts shorter than order-1 are padded with a BOS
    sentinel that is never predicted. For a context with total count T the
    probability of token v is (count(v) + alpha) / (T + alpha * P) where P
    is the number of predictable tokens (the vocabulary minus BOS), so the
    full distribution sums to one exactly.

    Immutable after construction; safe for unrestricted concurrent queries.
    """

    def __init__(
        self,
        *,
        model_id: str,
        order: int,
        alpha: float,
        tokenizer_kind: str,
        surfaces: Sequence[str],
        counts: Mapping[tuple[int, ...], Mapping[int, int]],
        max_context_tokens: int = 1_000_000,
    ):
        self.model_id = model_id
        self.order = order
        self.alpha = alpha
        self.tokenizer_kind = tokenizer_kind
        self.max_context_tokens = max_context_tokens
        self._surfaces = tuple(surfaces)
        self._ids = {s: i for i, s in enumerate(self._surfaces)}
        self._counts = {ctx: dict(table) for ctx, table in counts.items()}
        self._totals = {ctx: sum(t.values()) for ctx, t in self._counts.items()}

    # -- training -------------------------------------------------------

    @classmethod
    def train(
        cls,
        corpus: Iterable[str],
        *,
        order: int,
        alpha: float,
        tokenizer_kind: str,
        model_id: str = "ngram",
    ) -> "NgramLM":
        docs = list(corpus)
        if not docs:
            raise ConfigError("training corpus is empty")
        if order < 1:
            raise ConfigError("order must be >= 1")
        if alpha <= 0:
            raise ConfigError("alpha must be > 0")

        tokenized = [tokenize(doc, tokenizer_kind) for doc in docs]
        seen: set[str] = set()
        for toks in tokenized:
            seen.update(toks)
        if _BOS_SURFACE in seen or "</s>" in seen:
            raise ConfigError("corpus contains reserved token surfaces")
        # content surfaces get lower ids than whitespace surfaces, so the
        # ascending-id tie-break at uniform (unseen) contexts prefers words
        surfaces = [
            _BOS_SURFACE,
            "</s>",
            *sorted(seen, key=lambda s: (s.isspace(), s)),
        ]
        ids = {s: i for i, s in enumerate(surfaces)}

        counts: dict[tuple[int, ...], Counter[int]] = {}
        pad = (BOS_ID,) * (order - 1)
        for toks in tokenized:
            stream = pad + tuple(ids[t] for t in toks) + (EOS_ID,)
            for pos in range(order - 1, len(stream)):
                ctx = stream[pos - order + 1 : pos]
                counts.setdefault(ctx, Counter())[stream[pos]] += 1
        return cls(
            model_id=model_id,
            order=order,
            alpha=alpha,
            tokenizer_kind=tokenizer_kind,
            surfaces=surfaces,
            counts=counts,
        )

    # -- provider primitives ---------------------------------------------

    @property
    def vocab_size(self) -> int:
        return len(self._surfaces)

    @property
    def eos_token_id(self) -> int:
        return EOS_ID

    @property
    def eos_surface(self) -> str:
        return self._surfaces[EOS_ID]

    def encode(self, text: str) -> list[int]:
        out = []
        for surface in tokenize(text, self.tokenizer_kind):
            token = self._ids.get(surface)
            if token is None:
                raise EncodingMismatchError(
                    f"surface {surface!r} is outside the trained vocabulary",
                    model_id=self.model_id,
                )
            out.append(token)
        return out

    def decode(self, tokens: Sequence[int]) -> str:
        parts = []
        for token in tokens:
            if not 0 <= token < len(self._surfaces):
                raise InvalidTokenError(
                    f"token id {token} >= vocab size {len(self._surfaces)}",
                    model_id=self.model_id,
                )
            parts.append(self._surfaces[token])
        return "".join(parts)

    def context_key(self, context_tokens: Sequence[int]) -> tuple[int, ...]:
        """Pad/trim a token context to the order-1 tuple used as count key."""
        need = self.order - 1
        tail = tuple(context_tokens[-need:]) if need else ()
        if len(tail) < need:
            tail = (BOS_ID,) * (need - len(tail)) + tail
        return tail

    def probability(self, context_tokens: Sequence[int], token: int) -> float:
        """Smoothed P(token | context); exact closed form, no flooring."""
        ctx = self.context_key(context_tokens)
        table = self._counts.get(ctx, {})
        total = self._totals.get(ctx, 0)
        predictable = len(self._surfaces) - 1
        return (table.get(token, 0) + self.alpha) / (
            total + self.alpha * predictable
        )

    def topk_from_tokens(self, context_tokens: Sequence[int], k: int) -> TokenDistribution:
        ctx = self.context_key(context_tokens)
        table = self._counts.get(ctx, {})
        total = self._totals.get(ctx, 0)
        predictable = len(self._surfaces) - 1
        denom = total + self.alpha * predictable
        candidates = [
            (token, math.log((table.get(token, 0) + self.alpha) / denom),
             self._surfaces[token])
            for token in range(1, len(self._surfaces))  # BOS is never predicted
        ]
        return make_distribution(candidates, k)

    def logprobs_for_tokens(
        self, context_tokens: Sequence[int], target_tokens: Sequence[int]
    ) -> list[float]:
        out = []
        running = list(context_tokens)
        for token in target_tokens:
            if not 0 < token < len(self._surfaces):
                raise InvalidTokenError(
                    f"cannot score token id {token}", model_id=self.model_id
                )
            out.append(math.log(self.probability(running, token)))
            running.append(token)
        return out

    # -- raw views for independent oracles --------------------------------

    def vocab_surfaces(self) -> tuple[str, ...]:
        return self._surfaces

    def export_counts(self) -> dict[tuple[int, ...], dict[int, int]]:
        return {ctx: dict(table) for ctx, table in self._counts.items()}

    # -- serialization ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the versioned model file (stable bytes for identical models)."""
        payload = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "model_id": self.model_id,
            "order": self.order,
            "alpha": self.alpha,
            "tokenizer_kind": self.tokenizer_kind,
            "vocab": list(self._surfaces),
            "counts": [
                [list(ctx), sorted(table.items())]
                for ctx, table in sorted(self._counts.items())
            ],
        }
        Path(path).write_text(
            json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "NgramLM":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model file {path}: {exc}") from exc
        if payload.get("format") != FORMAT_NAME:
            raise ConfigError(f"{path} is not a {FORMAT_NAME} file")
        if payload.get("version") != FORMAT_VERSION:
            raise ConfigError(
                f"unsupported model file version {payload.get('version')}"
            )
        counts = {
            tuple(ctx): {int(t): int(n) for t, n in table}
            for ctx, table in payload["counts"]
        }
        return cls(
            model_id=payload["model_id"],
            order=int(payload["order"]),
            alpha=float(payload["alpha"]),
            tokenizer_kind=payload["tokenizer_kind"],
            surfaces=payload["vocab"],
            counts=counts,
        )


@dataclass(frozen=True)
class _Branch:
    token: int
    prob: float
    surface: str


class FixtureLM(LanguageModel):
    """Character-level provider driven by an explicit context-text map.

    ``transitions`` maps the full decoded context (prefix plus pending
    word) to either a single next character (probability one) or a list of
    (character, probability) pairs summing to one. The EOS surface may be
    used as a mapped value. Querying an unmapped context raises
    :class:`UnreachableContextError`; scoring off the mapped paths floors
    to ``FLOOR_LOGPROB`` instead so fusion arithmetic stays finite.
    """

    def __init__(
        self,
        transitions: Mapping[str, object],
        *,
        model_id: str = "fixture",
        eos: str = "</s>",
    ):
        self.model_id = model_id
        self._eos_surface = eos
        chars: set[str] = set()
        for key in transitions:
            chars.update(key)
        normalized: dict[str, tuple[tuple[str, float], ...]] = {}
        for key, value in transitions.items():
            if isinstance(value, str):
                pairs: tuple[tuple[str, float], ...] = ((value, 1.0),)
            else:
                pairs = tuple((s, float(p)) for s, p in value)  # type: ignore[union-attr]
            mass = sum(p for _, p in pairs)
            if abs(mass - 1.0) > 1e-6:
                raise ConfigError(
                    f"fixture branch probabilities at {key!r} sum to {mass}"
                )
            for surface, prob in pairs:
                if prob <= 0:
                    raise ConfigError("fixture probabilities must be positive")
                if surface == eos:
                    continue
                if len(surface) != 1:
                    raise ConfigError(
                        f"fixture tokens are single characters, got {surface!r}"
                    )
                chars.add(surface)
            normalized[key] = pairs
        self._transitions = normalized
        self._surfaces = (eos, *sorted(chars))
        self._ids = {s: i for i, s in enumerate(self._surfaces)}

    @property
    def vocab_size(self) -> int:
        return len(self._surfaces)

    @property
    def eos_token_id(self) -> int:
        return 0

    @property
    def eos_surface(self) -> str:
        return self._eos_surface

    def encode(self, text: str) -> list[int]:
        try:
            return [self._ids[ch] for ch in text]
        except KeyError as exc:
            raise EncodingMismatchError(
                f"character {exc.args[0]!r} is outside the fixture vocabulary",
                model_id=self.model_id,
            ) from exc

    def decode(self, tokens: Sequence[int]) -> str:
        parts = []
        for token in tokens:
            if not 0 <= token < len(self._surfaces):
                raise InvalidTokenError(
                    f"token id {token} >= vocab size {len(self._surfaces)}",
                    model_id=self.model_id,
                )
            parts.append(self._surfaces[token])
        return "".join(parts)

    def _branches_at(self, text: str) -> tuple[_Branch, ...] | None:
        pairs = self._transitions.get(text)
        if pairs is None:
            return None
        return tuple(
            _Branch(token=self._ids[s], prob=p, surface=s) for s, p in pairs
        )

    def topk_from_tokens(self, context_tokens: Sequence[int], k: int) -> TokenDistribution:
        text = self.decode(context_tokens)
        branches = self._branches_at(text)
        if branches is None:
            raise UnreachableContextError(
                f"fixture has no transition for context {text!r}",
                model_id=self.model_id,
            )
        mapped = {b.token: b for b in branches}
        candidates = []
        for token, surface in enumerate(self._surfaces):
            if token in mapped:
                candidates.append((token, math.log(mapped[token].prob), surface))
            else:
                candidates.append((token, FLOOR_LOGPROB, surface))
        return make_distribution(candidates, k)

    def logprobs_for_tokens(
        self, context_tokens: Sequence[int], target_tokens: Sequence[int]
    ) -> list[float]:
        out = []
        running = list(context_tokens)
        for token in target_tokens:
            if not 0 <= token < len(self._surfaces):
                raise InvalidTokenError(
                    f"cannot score token id {token}", model_id=self.model_id
                )
            branches = self._branches_at(self.decode(running))
            match = None
            if branches is not None:
                for branch in branches:
                    if branch.token == token:
                        match = branch
                        break
            out.append(math.log(match.prob) if match else FLOOR_LOGPROB)
            running.append(token)
        return out


def fixture_deterministic(
    transitions: Mapping[str, object], *, model_id: str = "fixture"
) -> FixtureLM:
    """Provider with probability-one transitions (or explicit branch lists)."""
    return FixtureLM(transitions, model_id=model_id)
