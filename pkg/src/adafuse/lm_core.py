"""Provider interface and shared token/text data model.

Every language model that participates in an ensemble implements
:class:`LanguageModel`. The committed decoding prefix is canonical *text*
(words separated by single spaces); each provider re-encodes that text with
its own tokenizer, so token ids from different providers are never mixed.

Providers differ in how their tokenizer attaches word separators:

* ``"explicit"`` — whitespace is its own token (character or
  whitespace-word tokenizers). The prefix is encoded exactly as stored and
  a span is scored including its trailing separator.
* ``"leading"`` — separators ride at the front of the next word's token
  (byte-level BPE vocabularies). Queries strip the single trailing space of
  the prefix and scoring shifts a span's separator to its front, so the
  conditioning seen by the model matches its native token stream.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence


# logprob at or below this is "effectively zero" (exp(-100) ~ 4e-44):
# fixtures use it to floor unmapped tokens, exploration treats such
# candidates as unavailable
FLOOR_LOGPROB = -100.0


class AdaFuseError(Exception):
    """Base class for all library errors."""


class ConfigError(AdaFuseError):
    """Invalid configuration value or combination."""


class ProviderError(AdaFuseError):
    """A language-model provider failed or rejected a request."""

    def __init__(self, message: str, *, model_id: str | None = None):
        super().__init__(message)
        self.model_id = model_id


class ContextOverflowError(ProviderError):
    """Encoded context exceeds the provider's declared capacity."""


class ProviderUnavailableError(ProviderError):
    """Provider cannot be reached (remote transport failure)."""


class EncodingMismatchError(ProviderError):
    """prefix+continuation does not decompose into prefix tokens plus
    continuation tokens under this provider's tokenizer."""


class InvalidTokenError(ProviderError):
    """A token id outside the provider's vocabulary was used."""


class InsufficientCandidatesError(ProviderError):
    """A distribution had fewer entries than the operation requires."""


class UnreachableContextError(ProviderError):
    """A deterministic fixture was queried at a context it does not map."""


class ProtocolError(ProviderError):
    """A remote server response violated the wire protocol."""


class EmptyWordError(AdaFuseError):
    """A word proposal ran out of token budget with only whitespace."""


class EmptyPoolError(AdaFuseError):
    """No span candidates were produced by any model."""


class UnscorablePoolError(AdaFuseError):
    """Every pooled candidate failed to score under every model."""


@dataclass(frozen=True)
class TokenEntry:
    """One candidate in a next-token distribution."""

    token: int
    logprob: float
    surface: str


@dataclass(frozen=True)
class TokenDistribution:
    """Top-k next-token candidates from one model at one context.

    ``entries`` are sorted by descending logprob, ties broken by ascending
    token id; the full-vocabulary distribution they are drawn from sums to
    one (certified by the provider). All logprobs are base-e and <= 0.
    """

    entries: tuple[TokenEntry, ...]
    k: int

    def top(self) -> TokenEntry:
        if not self.entries:
            raise InsufficientCandidatesError("empty token distribution")
        return self.entries[0]

    def find(self, token: int) -> TokenEntry | None:
        for entry in self.entries:
            if entry.token == token:
                return entry
        return None


def make_distribution(
    candidates: Sequence[tuple[int, float, str]], k: int
) -> TokenDistribution:
    """Sort candidates into a valid :class:`TokenDistribution` and slice to k."""
    ordered = sorted(candidates, key=lambda c: (-c[1], c[0]))
    entries = tuple(TokenEntry(t, lp, s) for t, lp, s in ordered[:k])
    return TokenDistribution(entries=entries, k=k)


@dataclass(frozen=True)
class ModelHandle:
    """Identity and capabilities of one ensemble member."""

    model_id: str
    eos_surface: str
    max_context_tokens: int


class LanguageModel(ABC):
    """Abstract causal-LM provider.

    All operations are pure functions of their arguments: repeated calls
    return identical results, and nothing mutates shared state, so
    providers are safe for concurrent read-only use unless a subclass
    documents otherwise.
    """

    model_id: str = "model"
    space_convention: str = "explicit"  # or "leading"
    max_context_tokens: int = 1_000_000

    # -- primitives each concrete provider supplies --------------------

    @abstractmethod
    def encode(self, text: str) -> list[int]:
        """Tokenize text; decode(encode(t)) must reproduce t exactly."""

    @abstractmethod
    def decode(self, tokens: Sequence[int]) -> str:
        """Detokenize; raises InvalidTokenError on out-of-range ids."""

    @abstractmethod
    def topk_from_tokens(self, context_tokens: Sequence[int], k: int) -> TokenDistribution:
        """Top-k next-token candidates after an explicit token context."""

    @abstractmethod
    def logprobs_for_tokens(
        self, context_tokens: Sequence[int], target_tokens: Sequence[int]
    ) -> list[float]:
        """Teacher-forced logprob of each target token given the context
        plus all earlier targets. Returns one value per target token."""

    @property
    @abstractmethod
    def vocab_size(self) -> int: ...

    @property
    @abstractmethod
    def eos_token_id(self) -> int: ...

    @property
    def eos_surface(self) -> str:
        return "</s>"

    # -- shared contract implementations -------------------------------

    @property
    def handle(self) -> ModelHandle:
        return ModelHandle(
            model_id=self.model_id,
            eos_surface=self.eos_surface,
            max_context_tokens=self.max_context_tokens,
        )

    def tokenizer_fingerprint(self) -> str:
        """Hash of the full id->surface table; equal fingerprints mean
        interchangeable tokenizers."""
        h = hashlib.sha256()
        for token in range(self.vocab_size):
            h.update(f"{token}:{self.decode([token])!r};".encode())
        return h.hexdigest()

    def next_token_topk(
        self, prefix_text: str, partial_word_tokens: Sequence[int], k: int
    ) -> TokenDistribution:
        """Top-k next-token candidates after prefix text plus an in-progress
        word given as this model's own tokens."""
        if k < 2:
            raise ValueError("k must be >= 2 (margin needs the top two)")
        context = self.encode(self._query_prefix(prefix_text))
        context.extend(partial_word_tokens)
        if len(context) > self.max_context_tokens:
            raise ContextOverflowError(
                f"context of {len(context)} tokens exceeds "
                f"{self.max_context_tokens}",
                model_id=self.model_id,
            )
        return self.topk_from_tokens(context, k)

    def score_continuation(
        self, prefix_text: str, continuation_text: str, *, closing_eos: bool = False
    ) -> list[float]:
        """Teacher-forced per-token logprobs of a text continuation.

        The continuation is tokenized in context via the boundary rule:
        encode(prefix+continuation) and split at the longest token prefix
        that decodes exactly to the prefix text. With ``closing_eos`` the
        model's own EOS token is appended and scored as the final token.
        """
        if not continuation_text and not closing_eos:
            raise ValueError("continuation_text must be non-empty")
        prefix_eff, continuation_eff = self._shift_for_scoring(
            prefix_text, continuation_text
        )
        if continuation_eff:
            prefix_tokens, continuation_tokens = self.split_continuation(
                prefix_eff, continuation_eff
            )
        else:
            prefix_tokens, continuation_tokens = self.encode(prefix_eff), []
        if closing_eos:
            continuation_tokens = list(continuation_tokens) + [self.eos_token_id]
        total = len(prefix_tokens) + len(continuation_tokens)
        if total > self.max_context_tokens:
            raise ContextOverflowError(
                f"scoring context of {total} tokens exceeds "
                f"{self.max_context_tokens}",
                model_id=self.model_id,
            )
        return self.logprobs_for_tokens(prefix_tokens, continuation_tokens)

    def split_continuation(
        self, prefix_text: str, continuation_text: str
    ) -> tuple[list[int], list[int]]:
        """Boundary rule: longest prefix encoding that decodes exactly to
        the prefix text; the remaining tokens are the continuation."""
        full = self.encode(prefix_text + continuation_text)
        for i in range(len(full), -1, -1):
            if self.decode(full[:i]) == prefix_text:
                return full[:i], full[i:]
        raise EncodingMismatchError(
            f"cannot split {prefix_text + continuation_text!r} at the "
            f"prefix boundary under model {self.model_id!r}",
            model_id=self.model_id,
        )

    # -- whitespace-convention adaptation -------------------------------

    def _query_prefix(self, prefix_text: str) -> str:
        if self.space_convention == "leading" and prefix_text.endswith(" "):
            return prefix_text[:-1]
        return prefix_text

    def _shift_for_scoring(self, prefix: str, continuation: str) -> tuple[str, str]:
        if self.space_convention != "leading":
            return prefix, continuation
        if prefix.endswith(" ") and not continuation.startswith(" "):
            prefix = prefix[:-1]
            continuation = " " + continuation
        if continuation.endswith(" "):
            # trailing separator is deferred: it becomes the next word's
            # leading token fragment under this convention
            continuation = continuation[:-1]
        return prefix, continuation
