"""Deterministic scenario generators for tests, demos, and benchmarks.

Everything here is seeded and reproducible: the complementary-expert QA
ensemble, the tiered-margin word chains that exercise the confidence gate,
the cross-model handoff corpus where word-by-word fusion beats fixed-length
commitment, and the shared-first-token fixture that makes token-level beam
rounds collapse to redundant candidates.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .harness import EvalRecord
from .ngram_lm import FixtureLM, NgramLM

# enough distinct first names that every fact's first->last transition is
# unambiguous under a word-bigram (the key falls out of context by then)
_FIRST_NAMES = tuple(
    a + b
    for a in ("al", "be", "ca", "do", "el", "fi", "ga", "ho")
    for b in ("ra", "ne", "to", "mi", "sa", "lu")
)
_LAST_NAMES = (
    "adams", "baker", "chen", "davis", "evans", "fox",
    "garcia", "hill", "innes", "jones", "kim", "lopez",
)


# ---------------------------------------------------------------------------
# story corpus: plain single-spaced sentences for greedy/scoring oracles


def story_corpus() -> list[str]:
    return [
        "the cat sat on the mat",
        "the cat ran to the barn",
        "the dog sat on the rug",
        "the dog barked at the cat",
        "a bird flew over the barn",
        "a bird sang in the tree",
        "the farmer fed the old dog",
        "the farmer walked to the barn",
        "a child played near the tree",
        "the child fed the small bird",
        "rain fell on the quiet farm",
        "the sun rose over the hill",
        "the cat slept under the tree",
        "the dog ran down the hill",
        "a fox hid behind the barn",
        "the fox chased the small bird",
        "the farmer saw the red fox",
        "wind blew over the green hill",
        "the child saw the grey cat",
        "the old dog slept in the sun",
    ]


def story_prompts(count: int = 50) -> list[str]:
    """Word-boundary prefixes of the story corpus (with trailing space)."""
    prompts: list[str] = []
    for take in (1, 2, 3, 4, 5):
        for doc in story_corpus():
            words = doc.split()
            if len(words) > take:
                prompt = " ".join(words[:take]) + " "
                if prompt not in prompts:
                    prompts.append(prompt)
            if len(prompts) >= count:
                return prompts
    return prompts


# ---------------------------------------------------------------------------
# complementary expert QA ensemble


@dataclass
class ExpertQAScenario:
    """Two word-level experts trained on disjoint halves of a QA corpus.

    Each fact is one document "<key> <first> <last>"; expert A sees half
    the facts heavily, expert B the other half, and both see a one-word
    glossary of every surface so they can tokenize (and reject) each
    other's answers. Prompts are "<key> " and references the two-word
    answers.
    """

    corpus_a: list[str]
    corpus_b: list[str]
    records: list[EvalRecord]
    half_a_ids: list[str]
    half_b_ids: list[str]
    order: int = 3
    alpha: float = 0.01

    def build_models(self) -> tuple[NgramLM, NgramLM]:
        expert_a = NgramLM.train(
            self.corpus_a, order=self.order, alpha=self.alpha,
            tokenizer_kind="word", model_id="expert_a",
        )
        expert_b = NgramLM.train(
            self.corpus_b, order=self.order, alpha=self.alpha,
            tokenizer_kind="word", model_id="expert_b",
        )
        return expert_a, expert_b


def expert_qa_scenario(seed: int, *, facts_per_half: int = 24) -> ExpertQAScenario:
    rng = random.Random(seed)
    total = 2 * facts_per_half
    if total > len(_FIRST_NAMES):
        raise ValueError(f"at most {len(_FIRST_NAMES)} facts are supported")
    keys = [f"q{i:02d}" for i in range(total)]
    firsts = rng.sample(_FIRST_NAMES, total)
    answers = [
        (first, rng.choice(_LAST_NAMES)) for first in firsts
    ]
    fact_docs = [
        f"{key} {first} {last}" for key, (first, last) in zip(keys, answers)
    ]
    glossary = sorted(
        {w for doc in fact_docs for w in doc.split()}
    )

    scenario = ExpertQAScenario(
        corpus_a=[], corpus_b=[], records=[], half_a_ids=[], half_b_ids=[]
    )
    for index, (key, (first, last)) in enumerate(zip(keys, answers)):
        doc = fact_docs[index]
        # trailing-space copies teach the EOS transition at the committed
        # word boundary, so decoding stops after the answer
        docs = [doc] * 6 + [doc + " "] * 2
        if index < facts_per_half:
            scenario.corpus_a.extend(docs)
            scenario.half_a_ids.append(key)
        else:
            scenario.corpus_b.extend(docs)
            scenario.half_b_ids.append(key)
        scenario.records.append(
            EvalRecord(
                id=key, prompt=f"{key} ", references=[f"{first} {last}"]
            )
        )
    scenario.corpus_a.extend(glossary)
    scenario.corpus_b.extend(glossary)
    return scenario


# ---------------------------------------------------------------------------
# tiered-margin chains for the confidence-gate sweep


MARGIN_TIERS = (1.0, 0.8, 0.5, 0.15)

_CHAIN_WORDS = (
    "fa", "bo", "ci", "du", "fe", "ga", "hi", "jo", "ka", "lu", "me", "no",
)


def margin_chain_fixture(
    prompt: str = "run ",
    *,
    words: tuple[str, ...] = _CHAIN_WORDS,
    tiers: tuple[float, ...] = MARGIN_TIERS,
    model_id: str = "chain",
) -> tuple[FixtureLM, str, list[float]]:
    """Fixture whose greedy chain has a controlled margin at every word start.

    The committed word sequence is identical for every threshold (greedy,
    no diversity); only the round segmentation changes, which is exactly
    what a threshold sweep measures. Returns (model, prompt, the margin of
    each word start).
    """
    transitions: dict[str, object] = {}
    margins: list[float] = []
    text = prompt
    for index, word in enumerate(words):
        tier = tiers[index % len(tiers)]
        margins.append(tier)
        first = word[0]
        if tier >= 1.0:
            transitions[text] = first
        else:
            alt = "z" if first != "z" else "y"
            transitions[text] = [(first, (1 + tier) / 2), (alt, (1 - tier) / 2)]
        for i in range(1, len(word)):
            transitions[text + word[:i]] = word[i]
        transitions[text + word] = " "
        text = text + word + " "
    return FixtureLM(transitions, model_id=model_id), prompt, margins


# ---------------------------------------------------------------------------
# cross-model handoff: word-by-word fusion beats fixed-length commitment


@dataclass
class HandoffScenario:
    """Answer "alice runs beta" split across two models.

    Model P weakly knows the first word only; model Q strongly knows the
    continuation "runs beta" after "alice" but prefers a wrong first word.
    Adaptive commitment halts both models to one-word spans at the
    uncertain starts, so fusion picks "alice", after which Q confidently
    finishes. Fixed-length rounds commit three words at once and lock in
    junk tails from whichever model wins.
    """

    corpus_p: list[str]
    corpus_q: list[str]
    records: list[EvalRecord]
    order: int = 3
    alpha: float = 0.01

    def build_models(self) -> tuple[NgramLM, NgramLM]:
        model_p = NgramLM.train(
            self.corpus_p, order=self.order, alpha=self.alpha,
            tokenizer_kind="word", model_id="model_p",
        )
        model_q = NgramLM.train(
            self.corpus_q, order=self.order, alpha=self.alpha,
            tokenizer_kind="word", model_id="model_q",
        )
        return model_p, model_q


def handoff_scenario() -> HandoffScenario:
    glossary = ["alice", "bob", "carl", "runs", "beta", "zz", "aa"]
    corpus_p = (
        # separator-dominant so P completes "alice " at a boundary, with
        # EOS learned after the separator (P offers to stop next round)
        ["zz alice "] * 3
        + ["zz alice"]
        + ["zz bob"] * 2
        + glossary
    )
    corpus_q = (
        ["zz carl"] * 2
        + ["zz alice runs beta"]
        + ["alice runs beta"] * 6
        + ["alice runs beta "] * 2  # trailing-space variant covers EOS
        + ["carl aa"] * 2
        + glossary
    )
    records = [
        EvalRecord(id="handoff", prompt="zz ", references=["alice runs beta"])
    ]
    return HandoffScenario(corpus_p=corpus_p, corpus_q=corpus_q, records=records)


# ---------------------------------------------------------------------------
# shared-first-token fixture: beam rounds collapse, diversity does not


def redundancy_fixture(
    prompts: tuple[str, ...] = ("go ", "to ", "de "),
    *,
    model_id: str = "redundant",
) -> tuple[FixtureLM, tuple[str, ...]]:
    """Low-margin first token whose top path branches only after the word.

    Width-3 token beams all end up re-ranking continuations of "cat ", so
    truncation to the first complete word leaves two distinct candidates;
    distinct-first-token exploration keeps three.
    """
    transitions: dict[str, object] = {}
    for prompt in prompts:
        transitions[prompt] = [("c", 0.5), ("b", 0.3), ("r", 0.2)]
        for word in ("cat", "bat", "rat"):
            for i in range(1, len(word)):
                transitions[prompt + word[:i]] = word[i]
            transitions[prompt + word] = " "
        transitions[prompt + "cat "] = [("b", 0.5), ("r", 0.5)]
        transitions[prompt + "bat "] = "x"
        transitions[prompt + "rat "] = "z"
    return FixtureLM(transitions, model_id=model_id), prompts
