"""Real-model loop acceptance: conformance, native-greedy match, K=2.

Run with ``pytest tests/test_acceptance_remote.py -v -s``. Logprob
comparisons use 1e-4 absolute tolerance.
"""

from __future__ import annotations

import time

import pytest
import torch
from transformers import AutoModelForCausalLM, AutoTokenizer

from adafuse.conformance import all_ok, run_conformance
from adafuse.engine import DecodeConfig, decode
from adafuse.remote_lm import RemoteLM

from adafuse_model_server import ServedModel, create_app

from util_live import LiveServer


def native_greedy(checkpoint: str, prompt: str, max_steps: int = 60):
    """Stepwise argmax in float64, matching the server's tie-break."""
    tokenizer = AutoTokenizer.from_pretrained(checkpoint)
    model = AutoModelForCausalLM.from_pretrained(checkpoint).eval()
    eos = model.config.eos_token_id
    ids = list(tokenizer(prompt, add_special_tokens=False)["input_ids"])
    generated = []
    reached_eos = False
    with torch.no_grad():
        for _ in range(max_steps):
            logits = model(torch.tensor([ids + generated])).logits[0, -1]
            logprobs = torch.log_softmax(logits.double(), -1).tolist()
            best = min(range(len(logprobs)), key=lambda t: (-logprobs[t], t))
            if best == eos:
                reached_eos = True
                break
            generated.append(best)
    return ids, generated, reached_eos


def test_criterion_10a_conformance_suite(checkpoint_a):
    started = time.perf_counter()
    served = ServedModel(checkpoint_a, deterministic=True)
    with LiveServer(create_app(served)) as server:
        results = run_conformance(server.url, score_tolerance=1e-4)
    for result in results:
        print(result.line())
    assert all_ok(results)
    print(f"[criterion 10a] PASS conformance against the model server "
          f"({time.perf_counter() - started:.2f}s)")


def test_criterion_10b_remote_greedy_matches_native(checkpoint_a, prompts):
    started = time.perf_counter()
    tokenizer = AutoTokenizer.from_pretrained(checkpoint_a)
    served = ServedModel(checkpoint_a, deterministic=True)
    config = DecodeConfig(tau_delta=0.0, max_new_words=8, max_word_tokens=8)
    with LiveServer(create_app(served)) as server:
        remote = RemoteLM(server.url, space_convention="leading")
        for prompt in prompts:
            prompt_ids, native_ids, native_eos = native_greedy(
                checkpoint_a, prompt
            )
            output, trace = decode(prompt, [remote], config)
            committed = output.rstrip(" ")
            engine_ids = list(
                tokenizer(committed, add_special_tokens=False)["input_ids"]
            )
            full_native = prompt_ids + native_ids
            assert engine_ids == full_native[: len(engine_ids)], prompt
            if trace.stop_reason == "eos":
                # the engine consumed the whole native stream and stopped
                # exactly where the checkpoint emits EOS
                assert engine_ids == full_native
                assert native_eos
    print(f"[criterion 10b] PASS remote greedy token-for-token on "
          f"{len(prompts)} prompts ({time.perf_counter() - started:.2f}s)")


def test_criterion_10c_two_model_remote_ensemble(checkpoint_a, checkpoint_b, prompts):
    started = time.perf_counter()
    served_a = ServedModel(checkpoint_a, deterministic=True)
    served_b = ServedModel(checkpoint_b, deterministic=True)
    config = DecodeConfig(tau_delta=0.7, max_new_words=6, max_word_tokens=8)
    with LiveServer(create_app(served_a)) as a, LiveServer(create_app(served_b)) as b:
        remote_a = RemoteLM(a.url, space_convention="leading")
        remote_b = RemoteLM(b.url, space_convention="leading")
        assert remote_a.model_id != remote_b.model_id
        completed = 0
        for prompt in prompts:
            output, trace = decode(prompt, [remote_a, remote_b], config)
            assert trace.replay_output() == output
            assert trace.stop_reason in ("eos", "max_words", "max_chars")
            assert trace.rounds, "at least one round must run"
            assert trace.provider_forward_calls > 0
            assert trace.scoring_calls > 0
            for round_record in trace.rounds:
                assert round_record.pooled
                assert len(round_record.scores) == len(round_record.pooled)
                for score in round_record.scores:
                    assert set(score.per_model_nll) == {"tiny-a", "tiny-b"}
            completed += 1
        assert completed == 10
    print(f"[criterion 10c] PASS K=2 remote ensemble, {completed} decodes "
          f"({time.perf_counter() - started:.2f}s)")
