"""Serve a pretrained causal language model behind the logprob protocol.

One model per process; an ensemble is N processes on N ports. Endpoints:

    GET  /v1/info    -> {model_id, vocab_size, eos_token_id, tokenizer_fingerprint}
    POST /v1/encode  {text} -> {tokens}
    POST /v1/decode  {tokens} -> {text}
    POST /v1/topk    {tokens, k} -> {candidates: [{token, logprob, surface}]}
    POST /v1/score   {prefix_tokens, continuation_tokens} -> {logprobs}

Logprobs are computed as float64 log-softmax over the model's logits and
serialized as 64-bit floats; /v1/score is a single teacher-forced forward
pass. In deterministic mode identical requests return identical bodies.
Request handling is sequential by default (correctness over throughput).
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field


class EncodeRequest(BaseModel):
    text: str


class DecodeRequest(BaseModel):
    tokens: list[int]


class TopkRequest(BaseModel):
    tokens: list[int]
    k: int = Field(ge=1)


class ScoreRequest(BaseModel):
    prefix_tokens: list[int]
    continuation_tokens: list[int]


class ServerError(Exception):
    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.status = status


class ServedModel:
    """A checkpoint plus its tokenizer, queried in full precision."""

    def __init__(
        self,
        checkpoint: str,
        *,
        topk_cap: int = 64,
        deterministic: bool = True,
        device: str = "cpu",
    ):
        from transformers import AutoModelForCausalLM, AutoTokenizer

        if deterministic:
            torch.manual_seed(0)
            torch.use_deterministic_algorithms(True)
        self.deterministic = deterministic
        self.topk_cap = topk_cap
        self.model_id = Path(str(checkpoint)).name or str(checkpoint)
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.model = AutoModelForCausalLM.from_pretrained(checkpoint)
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.vocab_size = int(self.model.get_output_embeddings().weight.shape[0])
        eos = self.model.config.eos_token_id
        if eos is None:
            eos = self.tokenizer.eos_token_id
        if eos is None:
            raise ValueError("checkpoint declares no EOS token")
        self.eos_token_id = int(eos)
        bos = self.model.config.bos_token_id
        if bos is None:
            bos = self.tokenizer.bos_token_id
        self.bos_token_id = int(bos) if bos is not None else self.eos_token_id

    def tokenizer_fingerprint(self) -> str:
        digest = hashlib.sha256()
        for surface, token in sorted(self.tokenizer.get_vocab().items()):
            digest.update(f"{token}:{surface!r};".encode())
        return digest.hexdigest()

    def _validate(self, tokens: list[int]) -> None:
        for token in tokens:
            if not 0 <= token < self.vocab_size:
                raise ServerError(
                    "invalid_token",
                    f"token id {token} >= vocab size {self.vocab_size}",
                )

    def encode(self, text: str) -> list[int]:
        if not text:
            return []
        try:
            return list(
                self.tokenizer(text, add_special_tokens=False)["input_ids"]
            )
        except Exception as exc:
            raise ServerError(
                "encoding_mismatch", f"cannot tokenize {text!r}: {exc}"
            ) from exc

    def decode(self, tokens: list[int]) -> str:
        self._validate(tokens)
        if not tokens:
            return ""
        return self.tokenizer.decode(
            tokens, skip_special_tokens=False, clean_up_tokenization_spaces=False
        )

    def _context(self, tokens: list[int]) -> list[int]:
        # an empty context still needs one position to condition on
        return tokens if tokens else [self.bos_token_id]

    @torch.no_grad()
    def _last_logprobs(self, tokens: list[int]) -> torch.Tensor:
        ids = torch.tensor([self._context(tokens)], device=self.device)
        logits = self.model(ids).logits[0, -1]
        return torch.log_softmax(logits.double(), dim=-1)

    def topk(self, tokens: list[int], k: int) -> list[dict]:
        self._validate(tokens)
        k = min(k, self.topk_cap, self.vocab_size)
        logprobs = self._last_logprobs(tokens)
        values = logprobs.tolist()
        order = sorted(range(self.vocab_size), key=lambda t: (-values[t], t))
        return [
            {
                "token": token,
                "logprob": values[token],
                "surface": self.decode([token]),
            }
            for token in order[:k]
        ]

    @torch.no_grad()
    def score(self, prefix_tokens: list[int], continuation_tokens: list[int]) -> list[float]:
        self._validate(prefix_tokens)
        self._validate(continuation_tokens)
        if not continuation_tokens:
            return []
        context = self._context(prefix_tokens)
        sequence = context + list(continuation_tokens)
        ids = torch.tensor([sequence], device=self.device)
        logits = self.model(ids).logits[0]
        logprobs = torch.log_softmax(logits.double(), dim=-1)
        start = len(context)
        out = []
        for offset, token in enumerate(continuation_tokens):
            # logits at position p predict the token at p+1
            out.append(float(logprobs[start + offset - 1, token]))
        return out


def create_app(served: ServedModel) -> FastAPI:
    app = FastAPI(title="adafuse model server", version="1")

    @app.exception_handler(ServerError)
    async def served_error(_: Request, exc: ServerError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": str(exc)}},
        )

    @app.exception_handler(RequestValidationError)
    async def invalid_request(_: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={
                "error": {"code": "invalid_request", "message": str(exc.errors())}
            },
        )

    @app.get("/v1/info")
    def info():
        return {
            "model_id": served.model_id,
            "vocab_size": served.vocab_size,
            "eos_token_id": served.eos_token_id,
            "tokenizer_fingerprint": served.tokenizer_fingerprint(),
        }

    @app.post("/v1/encode")
    def encode(request: EncodeRequest):
        return {"tokens": served.encode(request.text)}

    @app.post("/v1/decode")
    def decode(request: DecodeRequest):
        return {"text": served.decode(request.tokens)}

    @app.post("/v1/topk")
    def topk(request: TopkRequest):
        return {"candidates": served.topk(request.tokens, request.k)}

    @app.post("/v1/score")
    def score(request: ScoreRequest):
        return {
            "logprobs": served.score(
                request.prefix_tokens, request.continuation_tokens
            )
        }

    return app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="adafuse-model-server",
        description="host one causal-LM checkpoint behind the logprob protocol",
    )
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8500)
    parser.add_argument("--topk-cap", type=int, default=64)
    parser.add_argument(
        "--deterministic", action=argparse.BooleanOptionalAction, default=True
    )
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    try:
        served = ServedModel(
            args.checkpoint,
            topk_cap=args.topk_cap,
            deterministic=args.deterministic,
            device=args.device,
        )
    except Exception as exc:
        print(f"error: cannot load checkpoint {args.checkpoint}: {exc}",
              file=sys.stderr)
        return 1

    import uvicorn

    uvicorn.run(
        create_app(served), host=args.host, port=args.port, log_level="warning"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
