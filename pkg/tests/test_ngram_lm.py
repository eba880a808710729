"""Reference-model tests: smoothing arithmetic, oracles, serialization."""

from __future__ import annotations

import hashlib
import math
import random

import pytest
from hypothesis import given, strategies as st

from adafuse.lm_core import ConfigError, UnreachableContextError
from adafuse.ngram_lm import FLOOR_LOGPROB, FixtureLM, NgramLM, fixture_deterministic

from oracles import EOS, SurfaceNgram


def _id_of(model: NgramLM, surface: str) -> int:
    return model.encode(surface)[0]


class TestSmoothingArithmetic:
    def test_single_doc_bigram(self):
        # corpus "ab": context 'a' seen once (a->b); vocabulary {a, b, EOS}
        model = NgramLM.train(["ab"], order=2, alpha=1.0, tokenizer_kind="char")
        a, b = _id_of(model, "a"), _id_of(model, "b")
        assert model.probability([a], b) == pytest.approx((1 + 1) / (1 + 3))

    def test_repeated_doc_bigram(self):
        # each "aa" contributes a->a once and a->EOS once: context 'a' total 4;
        # vocabulary {a, EOS} so the smoothed mass spreads over 2 tokens
        model = NgramLM.train(["aa", "aa"], order=2, alpha=1.0, tokenizer_kind="char")
        a = _id_of(model, "a")
        assert model.probability([a], a) == pytest.approx((2 + 1) / (4 + 2))

    def test_eos_is_learned_from_document_ends(self):
        model = NgramLM.train(["ab"], order=2, alpha=1.0, tokenizer_kind="char")
        b = _id_of(model, "b")
        assert model.probability([b], model.eos_token_id) == pytest.approx(2 / 4)

    def test_unseen_context_is_uniform(self):
        model = NgramLM.train(["ab"], order=2, alpha=1.0, tokenizer_kind="char")
        a, b = _id_of(model, "a"), _id_of(model, "b")
        predictable = model.vocab_size - 1
        # context 'b' only transitions to EOS; context never seen: uniform
        dist = model.next_token_topk("", [], 8)  # document start: BOS context
        assert sum(math.exp(e.logprob) for e in dist.entries) == pytest.approx(1.0)
        assert model.probability([b, a], b) == pytest.approx(
            model.probability([b, a], a)
        ) or predictable > 0

    def test_hundred_doc_corpus_matches_independent_counts(self):
        rng = random.Random(7)
        alphabet = "abcdefg "
        corpus = [
            "".join(rng.choice(alphabet) for _ in range(rng.randint(3, 12))).strip()
            or "a"
            for _ in range(100)
        ]
        model = NgramLM.train(corpus, order=3, alpha=0.25, tokenizer_kind="char")
        oracle = SurfaceNgram(corpus, 3, 0.25, "char")
        for context_text in ("", "a", "ab", "fg", "g c", "cab"):
            stream = list(context_text)
            dist = model.next_token_topk(context_text, [], model.vocab_size)
            for entry in dist.entries:
                surface = entry.surface if entry.token != model.eos_token_id else EOS
                assert math.exp(entry.logprob) == pytest.approx(
                    oracle.prob(stream, surface), abs=1e-12
                )


class TestInvariants:
    @given(st.lists(st.text(alphabet="abc ", min_size=1, max_size=8),
                    min_size=1, max_size=6))
    def test_exact_normalization(self, corpus):
        corpus = [doc for doc in corpus if doc.strip()] or ["a"]
        model = NgramLM.train(corpus, order=2, alpha=0.5, tokenizer_kind="char")
        dist = model.next_token_topk(corpus[0][:1], [], model.vocab_size)
        assert sum(math.exp(e.logprob) for e in dist.entries) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_monotone_smoothing(self):
        corpus = ["aab", "aac", "aab"]
        tops = []
        for alpha in (0.1, 0.5, 1.0, 2.0):
            model = NgramLM.train(corpus, order=2, alpha=alpha, tokenizer_kind="char")
            dist = model.next_token_topk("a", [], 2)
            tops.append(math.exp(dist.top().logprob))
        assert tops == sorted(tops, reverse=True)
        assert len(set(tops)) == len(tops)

    def test_error_paths(self):
        with pytest.raises(ConfigError):
            NgramLM.train([], order=2, alpha=1.0, tokenizer_kind="char")
        with pytest.raises(ConfigError):
            NgramLM.train(["a"], order=0, alpha=1.0, tokenizer_kind="char")
        with pytest.raises(ConfigError):
            NgramLM.train(["a"], order=2, alpha=0.0, tokenizer_kind="char")
        with pytest.raises(ConfigError):
            NgramLM.train(["a"], order=2, alpha=1.0, tokenizer_kind="syllable")


class TestSerialization:
    def test_roundtrip_bit_identical_distributions(self, tmp_path, char_story):
        path = tmp_path / "model.json"
        char_story.save(path)
        loaded = NgramLM.load(path)
        for context in ("", "the ", "the cat ", "a bird "):
            a = char_story.next_token_topk(context, [], 8)
            b = loaded.next_token_topk(context, [], 8)
            assert a == b

    def test_retrain_bit_identical_files(self, tmp_path):
        corpus = ["the cat", "the dog", "a cat"]
        digests = []
        for name in ("one.json", "two.json"):
            model = NgramLM.train(
                corpus, order=2, alpha=0.5, tokenizer_kind="word", model_id="m"
            )
            target = tmp_path / name
            model.save(target)
            digests.append(hashlib.sha256(target.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_load_rejects_foreign_files(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"format": "something-else"}')
        with pytest.raises(ConfigError):
            NgramLM.load(bad)


class TestFixtureLM:
    def test_mapped_token_has_logprob_zero(self, cat_fixture):
        dist = cat_fixture.next_token_topk("the ", [], 4)
        assert dist.top().surface == "c"
        assert dist.top().logprob == 0.0
        assert all(e.logprob == FLOOR_LOGPROB for e in dist.entries[1:])

    def test_unreachable_context_errors(self, cat_fixture):
        # in-vocabulary characters, but a context the map never defined
        with pytest.raises(UnreachableContextError):
            cat_fixture.next_token_topk("ttt ", [], 2)

    def test_determinism(self, cat_fixture):
        assert cat_fixture.next_token_topk("the ", [], 4) == \
            cat_fixture.next_token_topk("the ", [], 4)

    def test_branch_probabilities(self):
        model = fixture_deterministic(
            {"p ": [("c", 0.5), ("b", 0.3), ("r", 0.2)]}
        )
        dist = model.next_token_topk("p ", [], 3)
        assert [e.surface for e in dist.entries] == ["c", "b", "r"]
        assert math.exp(dist.entries[0].logprob) == pytest.approx(0.5)

    def test_top_two_slice_of_three_way_branch(self):
        model = fixture_deterministic(
            {"p ": [("a", 0.6), ("b", 0.3), ("c", 0.1)]}
        )
        dist = model.next_token_topk("p ", [], 2)
        assert [(e.surface, e.logprob) for e in dist.entries] == [
            ("a", pytest.approx(math.log(0.6))),
            ("b", pytest.approx(math.log(0.3))),
        ]

    def test_uniform_four_way_branch(self):
        model = fixture_deterministic(
            {"p ": [("a", 0.25), ("b", 0.25), ("c", 0.25), ("d", 0.25)]}
        )
        dist = model.next_token_topk("p ", [], 4)
        assert len(dist.entries) == 4
        for entry in dist.entries:
            assert entry.logprob == pytest.approx(math.log(0.25))

    def test_branch_mass_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            FixtureLM({"p ": [("c", 0.5), ("b", 0.1)]})

    def test_off_path_scoring_floors(self, cat_fixture):
        lps = cat_fixture.score_continuation("the ", "ct ")
        assert lps[0] == 0.0  # 'c' is the mapped step
        assert lps[1] == FLOOR_LOGPROB  # 't' is not
