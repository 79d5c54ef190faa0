"""Subword vocabulary with greedy longest-match tokenization.

Units are whole words, "##"-prefixed continuation pieces, and single
characters as a total fallback.  Reserved entries (pad/start/end/unk and the
time-gap bucket tokens) occupy the lowest indices.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

PAD = "[pad]"
START = "[start]"
END = "[end]"
UNK = "[unk]"

N_TIMEGAP_TOKENS = 9  # TG0..TG8 for the default 8-boundary bucket table

CONTINUATION = "##"


def timegap_unit(i: int) -> str:
    return f"[tg{i}]"


RESERVED = [PAD, START, END, UNK] + [timegap_unit(i) for i in range(N_TIMEGAP_TOKENS)]

PAD_ID = RESERVED.index(PAD)
START_ID = RESERVED.index(START)
END_ID = RESERVED.index(END)
UNK_ID = RESERVED.index(UNK)
TIMEGAP_ID0 = RESERVED.index(timegap_unit(0))


class VocabError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Immutable after construction; unit strings are unique."""

    units: list[str]

    def __post_init__(self):
        if self.units[: len(RESERVED)] != RESERVED:
            raise VocabError("reserved entries must occupy the lowest indices")
        if len(set(self.units)) != len(self.units):
            raise VocabError("duplicate vocabulary units")
        self._index = {u: i for i, u in enumerate(self.units)}
        self._max_len = max((len(u.removeprefix(CONTINUATION)) for u in self.units), default=1)

    def __len__(self) -> int:
        return len(self.units)

    def __contains__(self, unit: str) -> bool:
        return unit in self._index

    def id(self, unit: str) -> int:
        return self._index[unit]

    def unit(self, token_id: int) -> str:
        return self.units[token_id]

    def encode(self, units: Iterable[str]) -> list[int]:
        return [self._index.get(u, UNK_ID) for u in units]

    def is_reserved_id(self, token_id: int) -> bool:
        return token_id < len(RESERVED)

    def is_timegap_id(self, token_id: int) -> bool:
        return TIMEGAP_ID0 <= token_id < TIMEGAP_ID0 + N_TIMEGAP_TOKENS

    @property
    def max_unit_len(self) -> int:
        return self._max_len

    def save(self, path: Path | str) -> None:
        Path(path).write_text("".join(u + "\n" for u in self.units))

    @classmethod
    def load(cls, path: Path | str) -> "Vocabulary":
        units = [line for line in Path(path).read_text().splitlines() if line]
        return cls(units)


def build_vocabulary(texts: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Frequency-ranked whole words above min_count, plus character fallbacks.

    Every character observed anywhere is added both as a plain unit and as a
    "##" continuation unit, so tokenization is total and word-internal pieces
    stay distinguishable from word starts.
    """
    word_counts: Counter[str] = Counter()
    chars: set[str] = set()
    for t in texts:
        for word in t.casefold().split():
            word_counts[word] += 1
            chars.update(word)

    words = [w for w, c in sorted(word_counts.items(), key=lambda kv: (-kv[1], kv[0]))
             if c >= min_count]
    char_units = sorted(chars)
    units = list(RESERVED)
    seen = set(units)
    for u in words + char_units + [CONTINUATION + c for c in char_units]:
        if u not in seen:
            units.append(u)
            seen.add(u)
    return Vocabulary(units)


def tokenize_word(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match over the vocabulary within a single word.

    Continuation units apply only at non-initial positions and win ties
    against plain units of the same length.  Characters absent from the
    vocabulary consume one position as [unk].
    """
    out: list[str] = []
    pos = 0
    while pos < len(word):
        match = None
        limit = min(vocab.max_unit_len, len(word) - pos)
        for length in range(limit, 0, -1):
            piece = word[pos:pos + length]
            if pos > 0 and CONTINUATION + piece in vocab:
                match = CONTINUATION + piece
                break
            if piece in vocab and not piece.startswith(CONTINUATION):
                match = piece
                break
        if match is None:
            out.append(UNK)
            pos += 1
        else:
            out.append(match)
            pos += len(match.removeprefix(CONTINUATION))
    return out


def tokenize(text: str, vocab: Vocabulary) -> list[str]:
    """Tokenize casefolded text word by word; never fails."""
    units: list[str] = []
    for word in text.casefold().split():
        units.extend(tokenize_word(word, vocab))
    return units


def detokenize(units: Iterable[str]) -> str:
    """Rejoin subword units into space-separated words."""
    words: list[str] = []
    for u in units:
        if u.startswith(CONTINUATION) and words:
            words[-1] += u.removeprefix(CONTINUATION)
        else:
            words.append(u)
    return " ".join(words)
