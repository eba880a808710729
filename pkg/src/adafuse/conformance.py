"""Wire-protocol conformance checks, runnable against any endpoint.

The same suite validates the in-process stub and a real model server:
schema and ordering of every endpoint, round-trip guarantees, determinism,
and consistency between stepwise greedy generation and teacher-forced
scoring. Probe inputs are derived from the served model's own vocabulary
so the checks hold for any tokenizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import httpx

from .lm_core import AdaFuseError
from .remote_lm import RemoteLM


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"[{status}] {self.name}" + (f": {self.detail}" if self.detail else "")


def all_ok(results: list[CheckResult]) -> bool:
    return all(r.ok for r in results)


def run_conformance(
    base_url: str,
    *,
    client: httpx.Client | None = None,
    score_tolerance: float = 1e-9,
    greedy_steps: int = 4,
) -> list[CheckResult]:
    """Run every protocol check against the endpoint; never raises."""
    remote = RemoteLM(base_url, client=client)
    results: list[CheckResult] = []

    def check(name: str, fn) -> None:
        try:
            detail = fn()
            results.append(CheckResult(name, True, detail or ""))
        except Exception as exc:  # report, never abort the suite
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))

    def info_fields() -> str:
        info = remote.info()
        if info.vocab_size < 2:
            raise AdaFuseError(f"vocab_size {info.vocab_size} < 2")
        if not 0 <= info.eos_token_id < info.vocab_size:
            raise AdaFuseError(f"eos_token_id {info.eos_token_id} out of range")
        if not info.tokenizer_fingerprint:
            raise AdaFuseError("empty tokenizer_fingerprint")
        return f"model_id={info.model_id} vocab={info.vocab_size}"

    check("info_fields", info_fields)
    if not results[0].ok:
        return results  # nothing else can run without /v1/info

    def probe_text() -> str:
        # build a probe string out of the model's own token surfaces
        vocab = remote.vocab_size
        pieces = []
        for token in range(min(vocab, 24)):
            if token == remote.eos_token_id:
                continue
            pieces.append(remote.decode([token]))
            if len("".join(pieces)) >= 8:
                break
        return "".join(pieces)

    def roundtrip() -> str:
        if remote.encode("") != []:
            raise AdaFuseError("encode('') must be empty")
        text = probe_text()
        tokens = remote.encode(text)
        back = remote.decode(tokens)
        if back != text:
            raise AdaFuseError(f"decode(encode({text!r})) == {back!r}")
        return f"text={text!r} ({len(tokens)} tokens)"

    check("encode_decode_roundtrip", roundtrip)

    def topk_contract() -> str:
        ctx: list[int] = []  # document-start distribution exists for any model
        dist = remote.topk_from_tokens(ctx, 4)  # validates sort order
        if not dist.entries:
            raise AdaFuseError("empty top-k")
        if any(e.logprob > 1e-9 for e in dist.entries):
            raise AdaFuseError("positive logprob in top-k")
        import math

        mass = sum(math.exp(e.logprob) for e in dist.entries)
        if mass > 1.0 + 1e-6:
            raise AdaFuseError(f"top-k probability mass {mass} > 1")
        again = remote.topk_from_tokens(ctx, 4)
        if again != dist:
            raise AdaFuseError("top-k is not deterministic")
        head = remote.topk_from_tokens(ctx, 2)
        if head.entries != dist.entries[: len(head.entries)]:
            raise AdaFuseError("top-2 is not a prefix of top-4")
        return f"{len(dist.entries)} candidates"

    check("topk_contract", topk_contract)

    def greedy_score_consistency() -> str:
        for ctx in ([], remote.encode(probe_text())):
            chosen: list[int] = []
            logprobs: list[float] = []
            for _ in range(greedy_steps):
                dist = remote.topk_from_tokens(ctx + chosen, 2)
                top = dist.entries[0]
                if top.token == remote.eos_token_id:
                    break
                chosen.append(top.token)
                logprobs.append(top.logprob)
            if not chosen:
                continue  # this context ends immediately; try the next
            scored = remote.logprobs_for_tokens(ctx, chosen)
            worst = max(abs(a - b) for a, b in zip(scored, logprobs))
            if worst > score_tolerance:
                raise AdaFuseError(
                    f"scored vs generated logprobs differ by {worst:.3e}"
                )
            return f"{len(chosen)} greedy tokens, max diff {worst:.1e}"
        return "immediate EOS at every probe context; nothing to score"

    check("greedy_score_consistency", greedy_score_consistency)

    def error_shape() -> str:
        http = client or httpx.Client(timeout=10.0)
        response = http.post(
            base_url.rstrip("/") + "/v1/decode",
            json={"tokens": [remote.vocab_size + 7]},
        )
        if response.status_code < 400:
            raise AdaFuseError(
                f"invalid token id accepted with HTTP {response.status_code}"
            )
        body = response.json()
        error = body.get("error")
        if (
            not isinstance(error, dict)
            or not isinstance(error.get("code"), str)
            or not isinstance(error.get("message"), str)
        ):
            raise AdaFuseError(f"malformed error body: {body}")
        return f"HTTP {response.status_code} code={error['code']}"

    check("error_shape", error_shape)
    return results
