from __future__ import annotations

import pytest
import torch
from tokenizers import Regex, Tokenizer
from tokenizers.decoders import Fuse
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Split
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

CORPUS = [
    "hello world",
    "the cat sat on the mat",
    "the dog ran to the barn",
    "a bird flew over the hill",
    "the farmer fed the old dog",
    "rain fell on the quiet farm",
    "the sun rose over the green hill",
    "a fox hid behind the barn",
]


def build_checkpoint(path, seed: int) -> str:
    """Write a tiny causal-LM checkpoint with a drift-free tokenizer.

    Every vocabulary piece is a leading-space word (" cat"), so any token
    sequence decodes to text that re-encodes to exactly the same sequence;
    that makes text-level prefix re-encoding reproduce the model's native
    token stream, which the greedy-equivalence test relies on.
    """
    words = sorted({w for doc in CORPUS for w in doc.split()})
    vocab = {"<eos>": 0}
    for word in words:
        vocab[" " + word] = len(vocab)
    tokenizer = Tokenizer(WordLevel(vocab, unk_token=None))
    tokenizer.pre_tokenizer = Split(Regex(r" ?\S+"), behavior="isolated")
    tokenizer.decoder = Fuse()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer, eos_token="<eos>", bos_token="<eos>"
    )
    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=128,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=0,
        eos_token_id=0,
    )
    torch.manual_seed(seed)
    model = GPT2LMHeadModel(config)
    model.save_pretrained(path)
    fast.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def checkpoint_a(tmp_path_factory) -> str:
    return build_checkpoint(tmp_path_factory.mktemp("ck") / "tiny-a", seed=7)


@pytest.fixture(scope="session")
def checkpoint_b(tmp_path_factory) -> str:
    return build_checkpoint(tmp_path_factory.mktemp("ck") / "tiny-b", seed=23)


@pytest.fixture(scope="session")
def prompts() -> list[str]:
    # leading-space prompts: every piece of this tokenizer carries its
    # separator in front
    return [
        " the cat",
        " the dog",
        " a bird",
        " hello",
        " the farmer",
        " rain fell",
        " the sun",
        " a fox",
        " the cat sat",
        " the dog ran",
    ]
