"""Run-length encoded words and the weight homomorphism.

``RleWord`` stores a word as a tuple of ``(letter, count)`` runs.  Every
operation touches runs rather than letters, which keeps the large
counterexample words of :mod:`edtlab.witness` manageable.

Sentential forms of grammars use plain tuples of symbols instead; the
helpers at the bottom of this module convert between those and strings.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from itertools import accumulate, cycle, starmap
from operator import itemgetter, mul
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import EmptyWordError, FactorRangeError, ParseError


class Letter(str, Enum):
    A = "a"
    B = "b"


class Side(Enum):
    LEFT = "L"
    RIGHT = "R"

    @property
    def mirror(self) -> "Side":
        return Side.RIGHT if self is Side.LEFT else Side.LEFT

    @property
    def order(self) -> int:
        return 0 if self is Side.LEFT else 1

    def __lt__(self, other: "Side") -> bool:
        return self.order < other.order

    @classmethod
    def parse(cls, text: str) -> "Side":
        key = text.strip().lower()
        if key in ("l", "left", "⊢"):
            return cls.LEFT
        if key in ("r", "right", "⊣"):
            return cls.RIGHT
        raise ParseError(f"unknown side {text!r}")


Run = tuple[str, int]

_RUN_TOKEN = re.compile(r"^(.)\^(\d+)$")
_SAME_LETTER = re.compile(r"(.)\1*", re.S)
_SHORT = 64
_LETTER, _COUNT = itemgetter(0), itemgetter(1)


@dataclass(frozen=True)
class RleWord:
    """An immutable word in canonical run-length form."""

    runs: tuple[Run, ...] = ()

    def __post_init__(self) -> None:
        prev = None
        for run in self.runs:
            if len(run) != 2:
                raise ValueError(f"malformed run {run!r}")
            letter, count = run
            if not isinstance(letter, str) or len(letter) != 1:
                raise ValueError(f"run letter must be a single character, got {letter!r}")
            if not isinstance(count, int) or count < 1:
                raise ValueError(f"run count must be a positive integer, got {count!r}")
            if letter == prev:
                raise ValueError(f"adjacent runs share letter {letter!r}")
            prev = letter

    @classmethod
    def _trusted(cls, runs: tuple[Run, ...]) -> "RleWord":
        obj = object.__new__(cls)
        object.__setattr__(obj, "runs", runs)
        return obj

    @classmethod
    def from_runs(cls, runs: Iterable[tuple[str, int]]) -> "RleWord":
        """Build a word from arbitrary runs, merging neighbours and dropping zeros."""
        out: list[list] = []
        for letter, count in runs:
            if count < 0:
                raise ValueError("negative run count")
            if count == 0:
                continue
            if out and out[-1][0] == letter:
                out[-1][1] += count
            else:
                out.append([letter, count])
        return cls(tuple((l, c) for l, c in out))

    @classmethod
    def from_string(cls, text: str) -> "RleWord":
        if len(text) <= _SHORT:
            return cls._trusted(tuple([(m[0][0], len(m[0])) for m in _SAME_LETTER.finditer(text)]))
        # long inputs: find run boundaries with one vectorized comparison
        codes = np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)
        starts = np.concatenate(([0], np.flatnonzero(codes[1:] != codes[:-1]) + 1))
        counts = np.diff(np.append(starts, len(codes))).tolist()
        heads = codes[starts]
        if len(heads) < 3 or (heads[2:] == heads[:-2]).all():
            # at most two letters, so the runs alternate between them
            second = text[int(starts[1])] if len(starts) > 1 else text[0]
            return cls._trusted(tuple(zip(cycle((text[0], second)), counts)))
        return cls._trusted(tuple(zip([text[i] for i in starts.tolist()], counts)))

    @classmethod
    def power(cls, letter: str, count: int) -> "RleWord":
        return cls.from_runs([(letter, count)])

    @classmethod
    def parse(cls, text: str) -> "RleWord":
        """Read either run syntax (``a^12 b^3``) or raw letters; tokens may mix."""
        text = text.strip()
        if text in ("", "ε"):
            return cls()
        runs: list[tuple[str, int]] = []
        for token in text.split():
            m = _RUN_TOKEN.match(token)
            if m:
                runs.append((m.group(1), int(m.group(2))))
            elif "^" in token:
                raise ParseError(f"bad run token {token!r}")
            else:
                runs.extend((l, 1) for l in token)
        return cls.from_runs(runs)

    def to_run_string(self) -> str:
        return " ".join(f"{l}^{c}" for l, c in self.runs)

    def __str__(self) -> str:
        if self.length <= _SHORT:
            return self.expand()
        return self.to_run_string()

    def __repr__(self) -> str:
        return f"RleWord({str(self)!r})"

    def expand(self) -> str:
        return "".join(starmap(mul, self.runs))

    @cached_property
    def _ends(self) -> tuple[int, ...]:
        return tuple(accumulate(map(_COUNT, self.runs)))

    @cached_property
    def length(self) -> int:
        return sum(map(_COUNT, self.runs))

    def __len__(self) -> int:
        return self.length

    def __bool__(self) -> bool:
        return bool(self.runs)

    @cached_property
    def _letter_stats(self) -> dict[str, tuple[int, int]]:
        """Per letter: total count and longest run."""
        runs = self.runs
        out: dict[str, tuple[int, int]] = {}
        if len(set(map(_LETTER, runs))) <= 2:
            # canonical runs over two letters alternate, so each letter owns every other run
            for part in (runs[0::2], runs[1::2]):
                if part:
                    counts = list(map(_COUNT, part))
                    out[part[0][0]] = (sum(counts), max(counts))
            return out
        for l, c in runs:
            total, best = out.get(l, (0, 0))
            out[l] = (total + c, max(best, c))
        return out

    def count(self, letter: str) -> int:
        return self._letter_stats.get(letter, (0, 0))[0]

    @cached_property
    def delta(self) -> int:
        return self.count("a") - self.count("b")

    def __add__(self, other: "RleWord") -> "RleWord":
        if not self.runs:
            return other
        if not other.runs:
            return self
        (l1, c1), (l2, c2) = self.runs[-1], other.runs[0]
        if l1 == l2:
            return RleWord._trusted(self.runs[:-1] + ((l1, c1 + c2),) + other.runs[1:])
        return RleWord._trusted(self.runs + other.runs)

    def reverse(self) -> "RleWord":
        return RleWord._trusted(self.runs[::-1])

    def end_letter(self, side: Side) -> str:
        if not self.runs:
            raise EmptyWordError("empty word has no end letter")
        return self.runs[0][0] if side is Side.LEFT else self.runs[-1][0]

    def affix_length(self, side: Side, letter: str = "a") -> int:
        if not self.runs:
            return 0
        l, c = self.runs[0] if side is Side.LEFT else self.runs[-1]
        return c if l == letter else 0

    def affix(self, side: Side, letter: str = "a") -> "RleWord":
        n = self.affix_length(side, letter)
        return RleWord._trusted(((letter, n),)) if n else RleWord()

    def strip(self, letter: str = "a") -> "RleWord":
        runs = self.runs
        if runs and runs[0][0] == letter:
            runs = runs[1:]
        if runs and runs[-1][0] == letter:
            runs = runs[:-1]
        return RleWord._trusted(runs)

    def delete_end_letter(self, side: Side) -> "RleWord":
        if not self.runs:
            raise EmptyWordError("cannot delete a letter from the empty word")
        if side is Side.LEFT:
            l, c = self.runs[0]
            rest = self.runs[1:]
            return RleWord._trusted(((l, c - 1),) + rest if c > 1 else rest)
        l, c = self.runs[-1]
        rest = self.runs[:-1]
        return RleWord._trusted(rest + ((l, c - 1),) if c > 1 else rest)

    def factor_at(self, start: int, stop: int) -> "RleWord":
        """The factor occupying letter positions ``start .. stop-1``."""
        if not 0 <= start <= stop <= self.length:
            raise FactorRangeError(f"factor [{start}, {stop}) outside word of length {self.length}")
        if start == stop:
            return RleWord()
        ends = self._ends
        i = bisect_right(ends, start)
        j = bisect_right(ends, stop - 1)
        if i == j:
            return RleWord._trusted(((self.runs[i][0], stop - start),))
        first_len = ends[i] - start
        last_len = stop - (ends[j - 1])
        runs = ((self.runs[i][0], first_len),) + self.runs[i + 1 : j] + ((self.runs[j][0], last_len),)
        return RleWord._trusted(runs)

    def max_run(self, letter: str = "a") -> int:
        return self._letter_stats.get(letter, (0, 0))[1]

    def contains_a_run(self, threshold: int) -> bool:
        """True iff some run of ``a`` has length at least ``threshold``."""
        if threshold <= 0:
            return True
        return self.max_run("a") >= threshold

    def iter_factors(self, include_empty: bool = False) -> Iterator[tuple[int, int, "RleWord"]]:
        """Every factor together with its position; O(n²) factors."""
        if include_empty:
            yield 0, 0, RleWord()
        for i in range(self.length):
            for j in range(i + 1, self.length + 1):
                yield i, j, self.factor_at(i, j)


EMPTY = RleWord()


def word(text: str | RleWord) -> RleWord:
    return text if isinstance(text, RleWord) else RleWord.parse(text)


def delta(w: RleWord) -> int:
    return w.delta


def delta_tuple(ws: Iterable[RleWord]) -> int:
    return sum(w.delta for w in ws)


def affix(w: RleWord, side: Side) -> RleWord:
    return w.affix(side)


def strip(w: RleWord) -> RleWord:
    return w.strip()


def reverse_word(w: RleWord) -> RleWord:
    return w.reverse()


def concat(*ws: RleWord) -> RleWord:
    out = EMPTY
    for w in ws:
        out = out + w
    return out


def delete_end_letter(w: RleWord, side: Side) -> RleWord:
    return w.delete_end_letter(side)


def factor_at(w: RleWord, start: int, stop: int) -> RleWord:
    return w.factor_at(start, stop)


def contains_a_run(w: RleWord, threshold: int) -> bool:
    return w.contains_a_run(threshold)


# Sentential forms: tuples of symbols.

Symbol = object
SymbolWord = tuple


def tokenize(text: str, alphabet: Iterable[str] | None = None) -> tuple[str, ...]:
    """Split an image string into symbols.

    Whitespace-separated text is split on whitespace.  Otherwise the text
    is read by longest match against ``alphabet``, or character by
    character when no alphabet is given.
    """
    text = text.strip()
    if text in ("", "ε"):
        return ()
    if any(ch.isspace() for ch in text):
        return tuple(text.split())
    if alphabet is None:
        return tuple(text)
    symbols = sorted(set(alphabet), key=len, reverse=True)
    if all(len(s) == 1 for s in symbols):
        out = tuple(text)
        unknown = [ch for ch in out if ch not in symbols]
        if unknown:
            raise ParseError(f"unknown symbols {unknown!r} in {text!r}")
        return out
    out: list[str] = []
    pos = 0
    while pos < len(text):
        for s in symbols:
            if s and text.startswith(s, pos):
                out.append(s)
                pos += len(s)
                break
        else:
            raise ParseError(f"cannot tokenize {text!r} at position {pos}")
    return tuple(out)


def format_symbols(symbols: Sequence[Symbol], spaced: bool | None = None) -> str:
    """Inverse of :func:`tokenize`; uses spaces when any symbol is longer than one character."""
    names = [str(s) for s in symbols]
    if spaced is None:
        spaced = any(len(n) != 1 for n in names)
    return " ".join(names) if spaced else "".join(names)
