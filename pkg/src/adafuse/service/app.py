"""FastAPI app exposing any in-process provider behind the wire protocol.

This is both the conformance stub used by the test suite and a small
reference server for hosting n-gram model files (``python -m
adafuse.service``). Requests are stateless and read-only, so the app is
safe under concurrent clients.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from ..lm_core import (
    ContextOverflowError,
    EncodingMismatchError,
    InvalidTokenError,
    LanguageModel,
    ProviderError,
    UnreachableContextError,
)
from .schemas import (
    DecodeRequest,
    DecodeResponse,
    EncodeRequest,
    EncodeResponse,
    InfoResponse,
    ScoreRequest,
    ScoreResponse,
    TokenCandidate,
    TopkRequest,
    TopkResponse,
)

_ERROR_CODES: tuple[tuple[type, str, int], ...] = (
    (InvalidTokenError, "invalid_token", 400),
    (EncodingMismatchError, "encoding_mismatch", 400),
    (UnreachableContextError, "unreachable_context", 400),
    (ContextOverflowError, "context_overflow", 400),
    (ProviderError, "provider_error", 500),
)


def _error_response(code: str, message: str, status: int) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


def create_app(provider: LanguageModel) -> FastAPI:
    app = FastAPI(title="adafuse logprob protocol", version="1")

    @app.exception_handler(ProviderError)
    async def provider_error_handler(_: Request, exc: ProviderError):
        for kind, code, status in _ERROR_CODES:
            if isinstance(exc, kind):
                return _error_response(code, str(exc), status)
        return _error_response("provider_error", str(exc), 500)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_: Request, exc: RequestValidationError):
        return _error_response("invalid_request", str(exc.errors()), 400)

    @app.get("/v1/info", response_model=InfoResponse)
    def info() -> InfoResponse:
        return InfoResponse(
            model_id=provider.model_id,
            vocab_size=provider.vocab_size,
            eos_token_id=provider.eos_token_id,
            tokenizer_fingerprint=provider.tokenizer_fingerprint(),
        )

    @app.post("/v1/encode", response_model=EncodeResponse)
    def encode(request: EncodeRequest) -> EncodeResponse:
        return EncodeResponse(tokens=provider.encode(request.text))

    @app.post("/v1/decode", response_model=DecodeResponse)
    def decode(request: DecodeRequest) -> DecodeResponse:
        return DecodeResponse(text=provider.decode(request.tokens))

    @app.post("/v1/topk", response_model=TopkResponse)
    def topk(request: TopkRequest) -> TopkResponse:
        dist = provider.topk_from_tokens(request.tokens, request.k)
        return TopkResponse(
            candidates=[
                TokenCandidate(token=e.token, logprob=e.logprob, surface=e.surface)
                for e in dist.entries
            ]
        )

    @app.post("/v1/score", response_model=ScoreResponse)
    def score(request: ScoreRequest) -> ScoreResponse:
        return ScoreResponse(
            logprobs=provider.logprobs_for_tokens(
                request.prefix_tokens, request.continuation_tokens
            )
        )

    return app
