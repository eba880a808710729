"""Word proposal: extend one model's generation until a word boundary.

The boundary is defined on decoded text, not token identity: a word is
complete at the first Unicode whitespace character following non-whitespace
content. This is the only definition portable across tokenizer conventions
(explicit space tokens, leading-space merges, multi-character pieces that
end in whitespace).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .lm_core import EmptyWordError, LanguageModel, TokenDistribution

TERMINAL_BOUNDARY = "boundary"
TERMINAL_EOS = "eos"
TERMINAL_TOKEN_CAP = "token_cap"

_BOUNDARY_RE = re.compile(r"^(\s*)(\S+)(\s)")


@dataclass(frozen=True)
class WordProposal:
    """A complete word produced by one model in one round.

    ``word_text`` is the word's non-whitespace run plus one trailing
    separator space, except EOS proposals (no trailing space, possibly
    empty). ``leading_ws`` records whether the model produced whitespace
    before the word started (absorbed from the surface but significant
    when the prefix does not already end at a word boundary).
    """

    word_text: str
    token_path: tuple[int, ...]
    first_token_dist: TokenDistribution
    terminal: str
    leading_ws: bool = False

    @property
    def is_eos(self) -> bool:
        return self.terminal == TERMINAL_EOS

    @property
    def surface_word(self) -> str:
        """The word without its separator."""
        return self.word_text.strip()


def gen_word(
    model: LanguageModel,
    prefix_text: str,
    committed_round_text: str = "",
    seed_token: int | None = None,
    *,
    max_word_tokens: int = 16,
    topk: int = 8,
    first_dist: TokenDistribution | None = None,
) -> WordProposal:
    """Greedily extend generation until a word boundary, EOS, or the cap.

    Token selection is argmax at every step; ``seed_token`` overrides the
    first step only (it must appear in the first-token distribution).
    ``first_dist`` optionally supplies a pre-fetched first-token
    distribution so branch exploration does not re-query the provider.
    """
    context = prefix_text + committed_round_text
    path: list[int] = []
    recorded_first: TokenDistribution | None = None

    while True:
        if not path and first_dist is not None:
            dist = first_dist
        else:
            dist = model.next_token_topk(context, path, topk)
        if not path:
            recorded_first = dist
            if seed_token is not None:
                entry = dist.find(seed_token)
                if entry is None:
                    raise ValueError(
                        f"seed token {seed_token} is not in the first-token "
                        f"distribution of model {model.model_id!r}"
                    )
                token = entry.token
            else:
                token = dist.top().token
        else:
            token = dist.top().token

        if token == model.eos_token_id:
            # pending text is ^\s*\S*$ here (a boundary would have ended
            # the loop already); EOS closes the word without a separator
            pending = model.decode(path)
            word = pending.strip()
            return WordProposal(
                word_text=word,
                token_path=tuple(path),
                first_token_dist=recorded_first,
                terminal=TERMINAL_EOS,
                leading_ws=pending[:1].isspace(),
            )

        path.append(token)
        text = model.decode(path)
        match = _BOUNDARY_RE.match(text)
        if match:
            return WordProposal(
                word_text=match.group(2) + " ",
                token_path=tuple(path),
                first_token_dist=recorded_first,
                terminal=TERMINAL_BOUNDARY,
                leading_ws=bool(match.group(1)),
            )
        if len(path) >= max_word_tokens:
            word = text.strip()
            if not word:
                raise EmptyWordError(
                    f"model {model.model_id!r} produced only whitespace "
                    f"within the {max_word_tokens}-token word cap"
                )
            return WordProposal(
                word_text=word + " ",
                token_path=tuple(path),
                first_token_dist=recorded_first,
                terminal=TERMINAL_TOKEN_CAP,
                leading_ws=text[:1].isspace(),
            )
