"""Provider backed by any server speaking the logprob wire protocol.

The protocol is token-level: text is shipped only for /v1/encode, after
which the client works in the server's own token ids. Only top-k logprobs
cross the wire (margins need the top two, exploration needs the top B).
All endpoints are read-only, so retries are transparent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import httpx

from .lm_core import (
    ContextOverflowError,
    EncodingMismatchError,
    InvalidTokenError,
    LanguageModel,
    ProtocolError,
    ProviderUnavailableError,
    TokenDistribution,
    TokenEntry,
    UnreachableContextError,
)

_ERROR_CODE_MAP = {
    "invalid_token": InvalidTokenError,
    "encoding_mismatch": EncodingMismatchError,
    "unreachable_context": UnreachableContextError,
    "context_overflow": ContextOverflowError,
}

_CACHE_CAP = 8192


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.05


@dataclass(frozen=True)
class EndpointInfo:
    model_id: str
    vocab_size: int
    eos_token_id: int
    tokenizer_fingerprint: str


class RemoteLM(LanguageModel):
    """Language model proxied over the wire protocol.

    ``space_convention`` should be "leading" for servers whose tokenizer
    merges separators into the following word (byte-level BPE checkpoints)
    and "explicit" for tokenizers with standalone whitespace tokens.
    """

    def __init__(
        self,
        base_url: str,
        *,
        timeout: float = 30.0,
        retry: RetryPolicy | None = None,
        space_convention: str = "explicit",
        max_context_tokens: int = 1_000_000,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.retry = retry or RetryPolicy()
        self.space_convention = space_convention
        self.max_context_tokens = max_context_tokens
        self._client = client or httpx.Client(timeout=timeout)
        self._info: EndpointInfo | None = None
        self._encode_cache: dict[str, list[int]] = {}
        self._decode_cache: dict[tuple[int, ...], str] = {}

    # -- transport -------------------------------------------------------

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self.base_url + path
        last_error: Exception | None = None
        for attempt in range(self.retry.attempts):
            try:
                response = self._client.request(method, url, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                if attempt + 1 < self.retry.attempts:
                    time.sleep(self.retry.backoff * (2**attempt))
                continue
            if response.status_code >= 400:
                raise self._error_from_response(response)
            try:
                body = response.json()
            except ValueError as exc:
                raise ProtocolError(
                    f"{path}: response body is not JSON",
                    model_id=self._cached_model_id(),
                ) from exc
            if not isinstance(body, dict):
                raise ProtocolError(
                    f"{path}: response body must be an object",
                    model_id=self._cached_model_id(),
                )
            return body
        raise ProviderUnavailableError(
            f"{url} unreachable after {self.retry.attempts} attempts: {last_error}",
            model_id=self._cached_model_id(),
        )

    def _error_from_response(self, response: httpx.Response):
        try:
            payload = response.json()
            code = payload["error"]["code"]
            message = payload["error"]["message"]
        except (ValueError, KeyError, TypeError):
            return ProtocolError(
                f"HTTP {response.status_code} without a valid error body",
                model_id=self._cached_model_id(),
            )
        kind = _ERROR_CODE_MAP.get(code, ProtocolError)
        return kind(
            f"server error {code}: {message}", model_id=self._cached_model_id()
        )

    def _cached_model_id(self) -> str | None:
        return self._info.model_id if self._info else None

    @staticmethod
    def _field(body: dict, name: str, kind: type, path: str):
        if name not in body:
            raise ProtocolError(f"{path}: missing field {name!r}")
        value = body[name]
        if kind is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, kind) or isinstance(value, bool):
            raise ProtocolError(
                f"{path}: field {name!r} has type {type(value).__name__}, "
                f"expected {kind.__name__}"
            )
        return value

    # -- info --------------------------------------------------------------

    def info(self) -> EndpointInfo:
        if self._info is None:
            body = self._request("GET", "/v1/info")
            self._info = EndpointInfo(
                model_id=self._field(body, "model_id", str, "/v1/info"),
                vocab_size=self._field(body, "vocab_size", int, "/v1/info"),
                eos_token_id=self._field(body, "eos_token_id", int, "/v1/info"),
                tokenizer_fingerprint=self._field(
                    body, "tokenizer_fingerprint", str, "/v1/info"
                ),
            )
        return self._info

    @property
    def model_id(self) -> str:  # type: ignore[override]
        return self.info().model_id

    @property
    def vocab_size(self) -> int:
        return self.info().vocab_size

    @property
    def eos_token_id(self) -> int:
        return self.info().eos_token_id

    @property
    def eos_surface(self) -> str:
        surface = self.decode([self.eos_token_id])
        return surface or "<eos>"

    def tokenizer_fingerprint(self) -> str:
        return self.info().tokenizer_fingerprint

    # -- provider primitives -----------------------------------------------

    def encode(self, text: str) -> list[int]:
        cached = self._encode_cache.get(text)
        if cached is not None:
            return list(cached)
        body = self._request("POST", "/v1/encode", {"text": text})
        tokens = self._field(body, "tokens", list, "/v1/encode")
        if not all(isinstance(t, int) and not isinstance(t, bool) for t in tokens):
            raise ProtocolError(
                "/v1/encode: field 'tokens' must hold integers",
                model_id=self._cached_model_id(),
            )
        if len(self._encode_cache) >= _CACHE_CAP:
            self._encode_cache.clear()
        self._encode_cache[text] = list(tokens)
        return list(tokens)

    def decode(self, tokens: Sequence[int]) -> str:
        key = tuple(tokens)
        cached = self._decode_cache.get(key)
        if cached is not None:
            return cached
        body = self._request("POST", "/v1/decode", {"tokens": list(tokens)})
        text = self._field(body, "text", str, "/v1/decode")
        if len(self._decode_cache) >= _CACHE_CAP:
            self._decode_cache.clear()
        self._decode_cache[key] = text
        return text

    def topk_from_tokens(self, context_tokens: Sequence[int], k: int) -> TokenDistribution:
        body = self._request(
            "POST", "/v1/topk", {"tokens": list(context_tokens), "k": k}
        )
        raw = self._field(body, "candidates", list, "/v1/topk")
        entries = []
        for index, item in enumerate(raw):
            if not isinstance(item, dict):
                raise ProtocolError(
                    f"/v1/topk: candidates[{index}] is not an object",
                    model_id=self._cached_model_id(),
                )
            where = f"/v1/topk candidates[{index}]"
            entries.append(
                TokenEntry(
                    token=self._field(item, "token", int, where),
                    logprob=self._field(item, "logprob", float, where),
                    surface=self._field(item, "surface", str, where),
                )
            )
        if len(entries) > k:
            raise ProtocolError(
                f"/v1/topk: {len(entries)} candidates exceed k={k}",
                model_id=self._cached_model_id(),
            )
        for prev, cur in zip(entries, entries[1:]):
            if cur.logprob > prev.logprob or (
                cur.logprob == prev.logprob and cur.token <= prev.token
            ):
                raise ProtocolError(
                    "/v1/topk: candidates are not sorted by logprob desc "
                    "with token-id ascending tie-break",
                    model_id=self._cached_model_id(),
                )
        return TokenDistribution(entries=tuple(entries), k=k)

    def logprobs_for_tokens(
        self, context_tokens: Sequence[int], target_tokens: Sequence[int]
    ) -> list[float]:
        body = self._request(
            "POST",
            "/v1/score",
            {
                "prefix_tokens": list(context_tokens),
                "continuation_tokens": list(target_tokens),
            },
        )
        logprobs = self._field(body, "logprobs", list, "/v1/score")
        values = []
        for value in logprobs:
            if isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if not isinstance(value, float):
                raise ProtocolError(
                    "/v1/score: field 'logprobs' must hold floats",
                    model_id=self._cached_model_id(),
                )
            values.append(value)
        if len(values) != len(target_tokens):
            raise ProtocolError(
                f"/v1/score: got {len(values)} logprobs for "
                f"{len(target_tokens)} continuation tokens",
                model_id=self._cached_model_id(),
            )
        return values

    def check(self) -> EndpointInfo:
        """Fetch and validate endpoint info (serve-check fast path)."""
        return self.info()
