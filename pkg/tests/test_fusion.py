"""Fusion tests: pooling, normalized NLL, selection, penalty paths."""

from __future__ import annotations

import math

import pytest

from adafuse.fusion import (
    UNSCORABLE_PENALTY_NLL,
    SpanCandidate,
    pool,
    select,
    span_nll,
)
from adafuse.lm_core import EmptyPoolError, UnscorablePoolError
from adafuse.ngram_lm import FixtureLM

from oracles import SurfaceNgram


def cand(text: str, model: str = "m", branch: str = "greedy", eos: bool = False):
    return SpanCandidate(
        span_text=text, word_count=max(1, len(text.split())),
        origin=(model, branch), is_eos=eos,
    )


class TestPool:
    def test_exact_duplicates_collapse(self):
        pooled = pool([[cand("cat ", "a")], [cand("cat ", "b")]])
        assert len(pooled) == 1
        assert pooled[0].origin == ("a", "greedy")

    def test_disjoint_union_preserves_order(self):
        pooled = pool([[cand("cat ", "a")], [cand("bat ", "b"), cand("rat ", "b")]])
        assert [c.span_text for c in pooled] == ["cat ", "bat ", "rat "]

    def test_whole_span_texts_differ(self):
        pooled = pool([[cand("big cat ", "a")], [cand("big ", "b"), cand("cat ", "b")]])
        assert len(pooled) == 3

    def test_empty_pool_rejected(self):
        with pytest.raises(EmptyPoolError):
            pool([[], []])


class TestSpanNLL:
    def test_two_token_arithmetic(self):
        # token probabilities 0.5 then 0.25
        model = FixtureLM({"p ": [("a", 0.5), ("b", 0.5)],
                           "p a": [("b", 0.25), ("a", 0.75)]})
        nll, count = span_nll(model, "p ", cand("ab"))
        assert count == 2
        assert nll == pytest.approx((0.6931471805599453 + 1.3862943611198906) / 2,
                                    abs=1e-4)

    def test_constant_probability_cancels_length(self):
        p = 0.3
        transitions = {"p " + "a" * i: [("a", p), ("b", 1 - p)] for i in range(8)}
        model = FixtureLM(transitions)
        for length in (1, 3, 5):
            nll, count = span_nll(model, "p ", cand("a" * length))
            assert count == length
            assert nll == pytest.approx(-math.log(p), rel=1e-12)

    def test_matches_independent_count_oracle(self, word_story):
        from adafuse.fixtures import story_corpus

        oracle = SurfaceNgram(story_corpus(), 3, 0.05, "word")
        candidate = cand("cat sat ")
        nll, count = span_nll(word_story, "the ", candidate)
        logprobs = oracle.seq_logprobs("the ", "cat sat ")
        assert count == len(logprobs)
        assert nll == pytest.approx(-sum(logprobs) / len(logprobs), rel=1e-9)

    def test_eos_candidate_scored_with_closing_token(self, char_story):
        closed, count_closed = span_nll(char_story, "the ", cand("cat", eos=True))
        plain, count_plain = span_nll(char_story, "the ", cand("cat"))
        assert count_closed == count_plain + 1
        assert closed != pytest.approx(plain)


class TestSelect:
    def test_single_model_mean_is_identity(self, char_story):
        pooled = [cand("cat "), cand("dog ")]
        winner, scores = select(pooled, [char_story], "the ")
        assert len(scores) == 2
        for score in scores:
            assert score.fused == pytest.approx(
                score.per_model_nll[char_story.model_id]
            )
        best = min(scores, key=lambda s: s.fused)
        assert winner.span_text == best.candidate.span_text

    def test_tie_breaks_by_pool_order(self):
        # both models score both candidates identically by construction
        model_x = FixtureLM({"p ": [("a", 0.5), ("b", 0.5)], "p a": " ", "p b": " "},
                            model_id="x")
        model_y = FixtureLM({"p ": [("a", 0.5), ("b", 0.5)], "p a": " ", "p b": " "},
                            model_id="y")
        pooled = [cand("a ", "x"), cand("b ", "y")]
        winner, scores = select(pooled, [model_x, model_y], "p ")
        assert scores[0].fused == pytest.approx(scores[1].fused)
        assert winner.span_text == "a "

    def test_permutation_invariance_of_value(self, char_story, word_story):
        pooled = [cand("cat "), cand("sat ")]
        _, forward = select(pooled, [char_story, word_story], "the ")
        _, backward = select(pooled, [word_story, char_story], "the ")
        for f, b in zip(forward, backward):
            assert f.fused == pytest.approx(b.fused, rel=1e-12)

    def test_offset_argmin_invariance(self, char_story):
        class Shifted(FixtureLM):
            """Adds a constant NLL offset to every candidate it scores."""

            def __init__(self, offset):
                super().__init__({"p ": "a"}, model_id=f"shift{offset}")
                self.offset = offset

            def score_continuation(self, prefix, text, *, closing_eos=False):
                base = char_story.score_continuation(
                    prefix, text, closing_eos=closing_eos
                )
                return [lp - self.offset for lp in base]

        pooled = [cand("cat "), cand("dog "), cand("sat ")]
        winners = []
        for offset in (0.0, 1.5, 7.0):
            winner, _ = select(pooled, [char_story, Shifted(offset)], "the ")
            winners.append(winner.span_text)
        assert len(set(winners)) == 1

    def test_unscorable_model_contributes_penalty(self, word_story, char_story):
        # "catdog" is a novel word (closed word vocabulary rejects it) but
        # spells fine character by character
        pooled = [cand("catdog "), cand("cat ")]
        winner, scores = select(pooled, [word_story, char_story], "the ")
        novel = scores[0]
        assert novel.unscorable_models == (word_story.model_id,)
        assert novel.per_model_nll[word_story.model_id] == pytest.approx(
            UNSCORABLE_PENALTY_NLL
        )
        assert novel.per_model_token_count[word_story.model_id] == 1
        assert winner.span_text == "cat "

    def test_candidate_unscorable_everywhere_is_dropped(self, word_story):
        pooled = [cand("catdog "), cand("cat ")]
        winner, scores = select(pooled, [word_story], "the ")
        assert len(scores) == 1
        assert winner.span_text == "cat "

    def test_all_candidates_unscorable_raises(self, word_story):
        with pytest.raises(UnscorablePoolError):
            select([cand("catdog "), cand("dogcat ")], [word_story], "the ")

    def test_winner_matches_exhaustive_recomputation(self, char_story, word_story):
        from oracles import fused_scores

        from adafuse.fixtures import story_corpus

        oracles = {
            "char3": SurfaceNgram(story_corpus(), 3, 0.05, "char"),
            "word3": SurfaceNgram(story_corpus(), 3, 0.05, "word"),
        }
        pooled = [cand("cat "), cand("sat on "), cand("dog ")]
        winner, scores = select(pooled, [char_story, word_story], "the ")
        want_idx, want_rows = fused_scores(
            oracles, "the ", [(c.span_text, c.is_eos) for c in pooled]
        )
        assert winner.span_text == pooled[want_idx].span_text
        for score, row in zip(scores, want_rows):
            for model_id, nll in row.items():
                assert score.per_model_nll[model_id] == pytest.approx(
                    nll, rel=1e-9
                )
