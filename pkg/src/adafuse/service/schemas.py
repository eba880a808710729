"""Request/response bodies for the logprob wire protocol.

All floats are base-e logprobs; all token ids are 0-based. Errors are
returned as ``{"error": {"code": ..., "message": ...}}`` with a non-2xx
status.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class InfoResponse(BaseModel):
    model_id: str
    vocab_size: int
    eos_token_id: int
    tokenizer_fingerprint: str


class EncodeRequest(BaseModel):
    text: str


class EncodeResponse(BaseModel):
    tokens: list[int]


class DecodeRequest(BaseModel):
    tokens: list[int]


class DecodeResponse(BaseModel):
    text: str


class TopkRequest(BaseModel):
    tokens: list[int]
    k: int = Field(ge=1)


class TokenCandidate(BaseModel):
    token: int
    logprob: float
    surface: str


class TopkResponse(BaseModel):
    candidates: list[TokenCandidate]


class ScoreRequest(BaseModel):
    prefix_tokens: list[int]
    continuation_tokens: list[int]


class ScoreResponse(BaseModel):
    logprobs: list[float]


class ErrorInfo(BaseModel):
    code: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorInfo
