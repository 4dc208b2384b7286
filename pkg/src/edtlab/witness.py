"""The counterexample family for the weight-zero language of ℤ.

For parameters ``(m, k, C)`` the towers are ``T_0 = bb`` and
``T_n = a^(m^n) T_(n-1)^(2m) a^(m^n)``; the witness is
``W = a^(m^2k) T_2k a^(m^2k)``.  Level constants, heaviness, segments and
remainders are defined per level ``n`` in ``1..2k``.

Two representations are offered.  Functions taking an ``RleWord`` work on
any word.  :class:`WitnessText` indexes ``W`` once with numpy run arrays
and answers the same questions for factors given as position intervals,
which is what the decomposition calculus needs at full parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import WitnessError
from .words import RleWord, Side

# Minimum m at which each family of bounds is proved.  The strip bound's
# argument needs m > 3; everything downstream of it inherits that floor.
LEMMA_FLOORS = {
    "level-constant-chain": 2,
    "tower-closed-forms": 2,
    "affix-closed-forms": 2,
    "strip-bound": 4,
    "light-factor-bound": 4,
    "remainder-bound": 4,
}


@dataclass(frozen=True)
class WitnessParams:
    m: int
    k: int
    C: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise WitnessError(f"k must be positive, got {self.k}")
        if self.C < 0:
            raise WitnessError(f"C must be nonnegative, got {self.C}")
        if self.m < 2:
            raise WitnessError(f"m must be at least 2, got {self.m}")

    @staticmethod
    def required_m(k: int, C: int) -> int:
        return 24 * k + 2 * C + 5

    @classmethod
    def full(cls, k: int, C: int) -> "WitnessParams":
        return cls(cls.required_m(k, C), k, C)

    @property
    def full_strength(self) -> bool:
        # The transfer arguments only use lower bounds on m.
        return self.m >= self.required_m(self.k, self.C)

    @property
    def valid_lemmas(self) -> tuple[str, ...]:
        names = [name for name, floor in LEMMA_FLOORS.items() if self.m >= floor]
        if self.full_strength:
            names.append("decomposition-transfer")
        return tuple(names)

    @property
    def levels(self) -> range:
        return range(1, 2 * self.k + 1)

    def check_level(self, n: int) -> None:
        if not 1 <= n <= 2 * self.k:
            raise WitnessError(f"level {n} outside 1..{2 * self.k}")


@dataclass(frozen=True)
class LevelConstants:
    n: int
    lambda_n: int
    b_n: int
    sigma_n: int

    @property
    def heavy_threshold(self) -> int:
        return 2 * self.lambda_n

    def chain_holds(self) -> bool:
        lam, b, sig = self.lambda_n, self.b_n, self.sigma_n
        return 12 * lam > 6 * b >= 6 * lam > sig > 0


def _geometric(m: int, top: int) -> int:
    """m + m^2 + ... + m^top, by exact division."""
    num = m ** (top + 1) - m
    q, r = divmod(num, m - 1)
    if r:
        raise WitnessError("inexact division in geometric sum")
    return q


def level_constants(params: WitnessParams, n: int) -> LevelConstants:
    params.check_level(n)
    m, k = params.m, params.k
    lam = m ** (2 * k + 1 - n)
    b = _geometric(m, 2 * k + 1 - n)
    lc = LevelConstants(n, lam, b, 2 * lam + 2 * b)
    if params.full_strength and not lc.chain_holds():
        raise WitnessError(f"constant chain fails at level {n} for {params}")
    return lc


@lru_cache(maxsize=64)
def _tower(m: int, n: int) -> RleWord:
    if n == 0:
        return RleWord._trusted((("b", 2),))
    inner = _tower(m, n - 1)
    runs = list(inner.runs)
    body: list = []
    for _ in range(2 * m):
        if body and body[-1][0] == runs[0][0]:
            body[-1] = (runs[0][0], body[-1][1] + runs[0][1])
            body.extend(runs[1:])
        else:
            body.extend(runs)
    pad = m**n
    out = RleWord.from_runs([("a", pad)] + body + [("a", pad)])
    return out


def build_T(params: WitnessParams, n: int) -> RleWord:
    if not 0 <= n <= 2 * params.k:
        raise WitnessError(f"tower level {n} outside 0..{2 * params.k}")
    return _tower(params.m, n)


def build_tower(m: int, n: int) -> RleWord:
    """The tower T_n for a bare m, without the level range check."""
    if m < 2 or n < 0:
        raise WitnessError("tower needs m >= 2 and n >= 0")
    return _tower(m, n)


def build_W(params: WitnessParams) -> RleWord:
    pad = RleWord.power("a", params.m ** (2 * params.k))
    return pad + _tower(params.m, 2 * params.k) + pad


def is_heavy(w: RleWord, params: WitnessParams, n: int) -> bool:
    return w.contains_a_run(level_constants(params, n).heavy_threshold)


def light_indices(ws, params: WitnessParams, n: int) -> frozenset[int]:
    """1-based indices of the n-light components."""
    t = level_constants(params, n).heavy_threshold
    return frozenset(i for i, w in enumerate(ws, 1) if not w.contains_a_run(t))


def segment(w: RleWord, params: WitnessParams, n: int, side: Side) -> RleWord:
    """Shortest prefix (or suffix) preceding the first (last) heavy a-run."""
    t = level_constants(params, n).heavy_threshold
    runs = w.runs
    hits = [i for i, (l, c) in enumerate(runs) if l == "a" and c >= t]
    if not hits:
        raise WitnessError(f"segment requires an {n}-heavy word")
    if side is Side.LEFT:
        return RleWord._trusted(runs[: hits[0]])
    return RleWord._trusted(runs[hits[-1] + 1 :])


def rem(w: RleWord, params: WitnessParams, n: int) -> RleWord:
    if not is_heavy(w, params, n):
        return w
    return segment(w, params, n, Side.LEFT) + segment(w, params, n, Side.RIGHT)


# Interval index over a fixed word.

_A, _B = 1, -1


def _canonical(letters: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = counts > 0
    letters, counts = letters[keep], counts[keep]
    if len(letters) == 0:
        return letters, counts
    starts = np.concatenate(([0], np.flatnonzero(letters[1:] != letters[:-1]) + 1))
    return letters[starts], np.add.reduceat(counts, starts)


def _tower_arrays(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    letters = np.array([_B], dtype=np.int8)
    counts = np.array([2], dtype=np.int64)
    for level in range(1, n + 1):
        pad = m**level
        letters = np.concatenate(([_A], np.tile(letters, 2 * m), [_A])).astype(np.int8)
        counts = np.concatenate(([pad], np.tile(counts, 2 * m), [pad])).astype(np.int64)
        letters, counts = _canonical(letters, counts)
    return letters, counts


class WitnessText:
    """Run arrays of a word over {a, b} plus interval queries on its factors.

    Factors are half-open position intervals ``(s, e)``.  Every query runs
    in logarithmic time in the number of runs.
    """

    def __init__(self, letters: np.ndarray, counts: np.ndarray, params: WitnessParams | None = None):
        letters, counts = _canonical(np.asarray(letters, dtype=np.int8), np.asarray(counts, dtype=np.int64))
        self.letters = letters
        self.counts = counts
        self.ends = np.cumsum(counts)
        self.starts = self.ends - counts
        self.length = int(self.ends[-1]) if len(counts) else 0
        signed = counts * letters.astype(np.int64)
        self.prefix_delta = np.concatenate(([0], np.cumsum(signed)))
        self.params = params
        self._qualifying: dict[int, np.ndarray] = {}

    @classmethod
    def from_word(cls, w: RleWord, params: WitnessParams | None = None) -> "WitnessText":
        letters = np.array([_A if l == "a" else _B for l, _ in w.runs], dtype=np.int8)
        counts = np.array([c for _, c in w.runs], dtype=np.int64)
        if any(l not in "ab" for l, _ in w.runs):
            raise WitnessError("interval index supports only the letters a and b")
        return cls(letters, counts, params)

    @classmethod
    def for_params(cls, params: WitnessParams) -> "WitnessText":
        return _witness_text(params)

    @property
    def run_count(self) -> int:
        return len(self.counts)

    @cached_property
    def total_delta(self) -> int:
        return int(self.prefix_delta[-1])

    def _run(self, p: int) -> int:
        """Index of the run containing position p (requires 0 <= p < length)."""
        return int(np.searchsorted(self.ends, p, side="right"))

    def letter_at(self, p: int) -> str:
        if not 0 <= p < self.length:
            raise IndexError(p)
        return "a" if self.letters[self._run(p)] == _A else "b"

    def _prefix(self, p: int) -> int:
        if p >= self.length:
            return self.total_delta
        r = self._run(p)
        return int(self.prefix_delta[r]) + int(self.letters[r]) * (p - int(self.starts[r]))

    def delta(self, s: int, e: int) -> int:
        return self._prefix(e) - self._prefix(s)

    def affix_length(self, s: int, e: int, side: Side) -> int:
        if s >= e:
            return 0
        if side is Side.LEFT:
            r = self._run(s)
            return min(e, int(self.ends[r])) - s if self.letters[r] == _A else 0
        r = self._run(e - 1)
        return e - max(s, int(self.starts[r])) if self.letters[r] == _A else 0

    def _qualifying_runs(self, t: int) -> np.ndarray:
        idx = self._qualifying.get(t)
        if idx is None:
            idx = np.flatnonzero((self.letters == _A) & (self.counts >= t))
            self._qualifying[t] = idx
        return idx

    def _heavy_runs(self, s: int, e: int, t: int) -> tuple[int, int] | None:
        """Clipped span of the first and last a-runs of length >= t inside [s, e).

        Returns (start of first such run, end of last such run) or None.
        """
        if s >= e:
            return None
        if t <= 0:
            return s, e
        r1, r2 = self._run(s), self._run(e - 1)
        if r1 == r2:
            return (s, e) if self.letters[r1] == _A and e - s >= t else None

        def clipped(r: int) -> tuple[int, int]:
            return max(s, int(self.starts[r])), min(e, int(self.ends[r]))

        first = last = None
        a, b = clipped(r1)
        if self.letters[r1] == _A and b - a >= t:
            first = (a, b)
        idx = self._qualifying_runs(t)
        lo = int(np.searchsorted(idx, r1 + 1, side="left"))
        hi = int(np.searchsorted(idx, r2, side="left"))
        if lo < hi:
            inner_first = clipped(int(idx[lo]))
            inner_last = clipped(int(idx[hi - 1]))
            first = first or inner_first
            last = inner_last
        a, b = clipped(r2)
        if self.letters[r2] == _A and b - a >= t:
            last = (a, b)
            first = first or (a, b)
        if first is None:
            return None
        if last is None:
            last = first
        return first[0], last[1]

    def heavy(self, s: int, e: int, t: int) -> bool:
        return self._heavy_runs(s, e, t) is not None

    def segment(self, s: int, e: int, t: int, side: Side) -> tuple[int, int]:
        span = self._heavy_runs(s, e, t)
        if span is None:
            raise WitnessError("segment requires a heavy factor")
        return (s, span[0]) if side is Side.LEFT else (span[1], e)

    def rem_delta(self, s: int, e: int, t: int) -> int:
        span = self._heavy_runs(s, e, t)
        if span is None:
            return self.delta(s, e)
        return self.delta(s, span[0]) + self.delta(span[1], e)

    def word(self, s: int, e: int) -> RleWord:
        if not 0 <= s <= e <= self.length:
            raise IndexError((s, e))
        if s == e:
            return RleWord()
        r1, r2 = self._run(s), self._run(e - 1)
        out = []
        for r in range(r1, r2 + 1):
            a = max(s, int(self.starts[r]))
            b = min(e, int(self.ends[r]))
            out.append(("a" if self.letters[r] == _A else "b", b - a))
        return RleWord._trusted(tuple(out))

    def find(self, pattern: RleWord, pos: int = 0) -> int | None:
        """Start of the first occurrence of ``pattern`` beginning at or after ``pos``."""
        n = pattern.length
        if n == 0:
            return pos if pos <= self.length else None
        if pos + n > self.length:
            return None
        if any(l not in "ab" for l, _ in pattern.runs):
            return None
        pl = np.array([_A if l == "a" else _B for l, _ in pattern.runs], dtype=np.int8)
        pc = np.array([c for _, c in pattern.runs], dtype=np.int64)
        r0 = self._run(pos)
        R = len(pl)
        # available length of each text run once clipped at pos
        if R == 1:
            avail = self.counts.copy()
            avail[r0] = int(self.ends[r0]) - pos
            cand = np.flatnonzero((self.letters == pl[0]) & (avail >= pc[0]))
            cand = cand[cand >= r0]
            if len(cand) == 0:
                return None
            r = int(cand[0])
            return max(pos, int(self.starts[r]))
        nruns = self.run_count
        last_first = nruns - R
        if last_first < r0:
            return None
        js = np.arange(r0, last_first + 1)
        ok = (self.letters[js] == pl[0]) & (self.counts[js] >= pc[0])
        ok &= (self.letters[js + R - 1] == pl[-1]) & (self.counts[js + R - 1] >= pc[-1])
        for off in range(1, R - 1):
            ok &= (self.letters[js + off] == pl[off]) & (self.counts[js + off] == pc[off])
        for j in js[ok]:
            start = int(self.ends[j]) - int(pc[0])
            if start >= pos:
                return start
        return None


@lru_cache(maxsize=8)
def _witness_text(params: WitnessParams) -> WitnessText:
    letters, counts = _tower_arrays(params.m, 2 * params.k)
    pad = params.m ** (2 * params.k)
    letters = np.concatenate(([_A], letters, [_A])).astype(np.int8)
    counts = np.concatenate(([pad], counts, [pad])).astype(np.int64)
    return WitnessText(letters, counts, params)


def witness_summary(params: WitnessParams, level: int | None = None) -> dict:
    """Statistics of ``W`` (and of ``T_level`` when given) as plain JSON data.

    Tower statistics come from the run-length form, so large levels stay cheap.
    """
    text = WitnessText.for_params(params)
    out: dict = {
        "params": {"m": params.m, "k": params.k, "C": params.C,
                   "required_m": params.required_m(params.k, params.C),
                   "full_strength": params.full_strength},
        "W": {
            "length": text.length,
            "delta": text.total_delta,
            "runs": text.run_count,
            "affix_left": text.affix_length(0, text.length, Side.LEFT),
            "affix_right": text.affix_length(0, text.length, Side.RIGHT),
        },
        "constants": [
            {"n": lc.n, "lambda": lc.lambda_n, "B": lc.b_n, "sigma": lc.sigma_n,
             "heavy_threshold": lc.heavy_threshold}
            for lc in (level_constants(params, n) for n in params.levels)
        ],
    }
    if level is not None:
        t = build_T(params, level)
        out["T"] = {
            "level": level,
            "length": t.length,
            "delta": t.delta,
            "count_a": t.count("a"),
            "count_b": t.count("b"),
            "runs": len(t.runs),
            "affix_left": t.affix_length(Side.LEFT),
            "affix_right": t.affix_length(Side.RIGHT),
        }
    return out
