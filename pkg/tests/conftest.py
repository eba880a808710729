from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from adafuse.fixtures import story_corpus
from adafuse.ngram_lm import FixtureLM, NgramLM

settings.register_profile(
    "ci",
    deadline=None,
    max_examples=50,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def char_story() -> NgramLM:
    return NgramLM.train(
        story_corpus(), order=3, alpha=0.05, tokenizer_kind="char",
        model_id="char3",
    )


@pytest.fixture(scope="session")
def word_story() -> NgramLM:
    return NgramLM.train(
        story_corpus(), order=3, alpha=0.05, tokenizer_kind="word",
        model_id="word3",
    )


@pytest.fixture()
def cat_fixture() -> FixtureLM:
    return FixtureLM(
        {"the ": "c", "the c": "a", "the ca": "t", "the cat": " "},
        model_id="cat",
    )
