"""Decompositions of word tuples and their transfer along reverse derivation steps.

A sentential tuple is a ``k``-tuple of factors of ``W`` appearing in
order, with total weight at most ``C`` in absolute value.  Components are
stored as position intervals into the indexed witness
(:class:`~edtlab.witness.WitnessText`), so every query is logarithmic in
the run count even for the largest parameters.

A decomposition at level ``n`` is a set of ``n`` (component, side) pairs
whose a-affixes all clear one common threshold.  Reverse derivation steps
(deleting an end letter, splitting a component into an empty neighbour)
carry a decomposition to one of at least the same level; :func:`transfer`
computes it by explicit case analysis, and the auditor chains transfers
along a whole trace.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import StepError, TransferError, WeightBoundError, WitnessError
from .words import RleWord, Side
from .witness import WitnessParams, WitnessText, level_constants

L, R = Side.LEFT, Side.RIGHT
Span = tuple[int, int]


# Tuples.


@dataclass(frozen=True)
class SententialTuple:
    spans: tuple
    params: WitnessParams

    @cached_property
    def text(self) -> WitnessText:
        return WitnessText.for_params(self.params)

    @property
    def k(self) -> int:
        return len(self.spans)

    def length(self, i: int) -> int:
        s, e = self.spans[i - 1]
        return e - s

    def is_empty(self, i: int) -> bool:
        return self.length(i) == 0

    def all_empty(self) -> bool:
        return all(s == e for s, e in self.spans)

    @cached_property
    def delta(self) -> int:
        return sum(self.text.delta(s, e) for s, e in self.spans)

    def within_bound(self) -> bool:
        return abs(self.delta) <= self.params.C

    def affix(self, i: int, side: Side) -> int:
        s, e = self.spans[i - 1]
        return self.text.affix_length(s, e, side)

    def end_letter(self, i: int, side: Side) -> str:
        s, e = self.spans[i - 1]
        if s == e:
            raise StepError(f"component {i} is empty")
        return self.text.letter_at(s if side is L else e - 1)

    def heavy(self, i: int, n: int) -> bool:
        s, e = self.spans[i - 1]
        return self.text.heavy(s, e, 2 * level_constants(self.params, n).lambda_n)

    def rem_delta(self, i: int, n: int) -> int:
        s, e = self.spans[i - 1]
        return self.text.rem_delta(s, e, 2 * level_constants(self.params, n).lambda_n)

    def segment_empty(self, i: int, n: int, side: Side) -> bool:
        s, e = self.spans[i - 1]
        a, b = self.text.segment(s, e, 2 * level_constants(self.params, n).lambda_n, side)
        return a == b

    def light(self, n: int) -> frozenset:
        return frozenset(i for i in range(1, self.k + 1) if not self.heavy(i, n))

    def words(self) -> tuple[RleWord, ...]:
        return tuple(self.text.word(s, e) for s, e in self.spans)

    def threshold(self, n: int) -> int:
        """Right-hand side of the decomposition inequality at level ``n``."""
        p = self.params
        lower = level_constants(p, n - 1).lambda_n
        sigma = level_constants(p, n).sigma_n
        rems = sum(self.rem_delta(i, n) for i in range(1, self.k + 1))
        return lower - (p.C - self.delta) - (2 * p.k - n - len(self.light(n))) * sigma - rems

    def reverse(self) -> "SententialTuple":
        N = self.text.length
        return SententialTuple(tuple((N - e, N - s) for s, e in reversed(self.spans)), self.params)

    def to_dict(self) -> dict:
        return {"spans": [list(sp) for sp in self.spans], "delta": self.delta,
                "lengths": [e - s for s, e in self.spans]}


def _validate_spans(spans: Sequence[Span], params: WitnessParams) -> tuple:
    spans = tuple((int(s), int(e)) for s, e in spans)
    if len(spans) != params.k:
        raise WitnessError(f"tuple arity {len(spans)} differs from k = {params.k}")
    N = WitnessText.for_params(params).length
    prev = 0
    for s, e in spans:
        if s == e:
            continue
        if not (prev <= s < e <= N):
            raise WitnessError(f"spans {spans} are not ordered factors of W")
        prev = e
    return spans


def tuple_from_spans(spans: Sequence[Span], params: WitnessParams, check_weight: bool = True) -> SententialTuple:
    t = SententialTuple(_validate_spans(spans, params), params)
    if check_weight and not t.within_bound():
        raise WeightBoundError(f"|Δ| = {abs(t.delta)} exceeds C = {params.C}")
    return t


def check_tuple(ws: Sequence[RleWord | str], params: WitnessParams) -> SententialTuple:
    """Locate the words as ordered factors of W and validate the weight bound.

    Leftmost matching is enough: taking the earliest occurrence of each
    component leaves the most room for the rest.
    """
    ws = [w if isinstance(w, RleWord) else RleWord.parse(w) for w in ws]
    if len(ws) != params.k:
        raise WitnessError(f"tuple arity {len(ws)} differs from k = {params.k}")
    text = WitnessText.for_params(params)
    pos = 0
    spans = []
    for i, w in enumerate(ws, 1):
        if not w:
            spans.append((pos, pos))
            continue
        at = text.find(w, pos)
        if at is None:
            raise WitnessError(f"component {i} does not occur in W after the previous components")
        spans.append((at, at + w.length))
        pos = at + w.length
    return tuple_from_spans(spans, params)


def initial_tuple(params: WitnessParams) -> SententialTuple:
    N = WitnessText.for_params(params).length
    return SententialTuple(((0, N),) + ((N, N),) * (params.k - 1), params)


# Decompositions.


@dataclass(frozen=True)
class Decomposition:
    level: int
    edges: frozenset

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", frozenset(self.edges))
        if len(self.edges) != self.level:
            raise WitnessError(f"a level-{self.level} decomposition needs {self.level} sides, got {len(self.edges)}")

    @classmethod
    def of(cls, edges: Iterable[tuple[int, Side]]) -> "Decomposition":
        edges = frozenset(edges)
        return cls(len(edges), edges)

    def sorted_edges(self) -> list:
        return sorted(self.edges, key=lambda e: (e[0], e[1].order))

    def reverse(self, k: int) -> "Decomposition":
        return Decomposition(self.level, frozenset((k + 1 - i, s.mirror) for i, s in self.edges))

    def to_dict(self) -> dict:
        return {"level": self.level, "edges": [[i, s.value] for i, s in self.sorted_edges()]}


def is_decomposition(t: SententialTuple, d: Decomposition) -> bool:
    n = d.level
    if not 2 <= n <= 2 * t.params.k or len(d.edges) != n:
        return False
    if any(not 1 <= i <= t.k for i, _ in d.edges):
        return False
    if any(not t.heavy(i, n) for i, _ in d.edges):
        return False
    rhs = t.threshold(n)
    return all(t.affix(i, s) >= rhs for i, s in d.edges)


def qualifying_sides(t: SententialTuple, n: int) -> list:
    """Every side that may belong to a level-``n`` decomposition, in (i, side) order."""
    rhs = t.threshold(n)
    out = []
    for i in range(1, t.k + 1):
        if not t.heavy(i, n):
            continue
        for s in (L, R):
            if t.affix(i, s) >= rhs:
                out.append((i, s))
    return out


def find_maximal_decomposition(t: SententialTuple) -> Decomposition | None:
    """A decomposition of the largest level, ties broken by (i, side).

    The threshold depends only on the tuple and the level, so any ``n``
    qualifying sides form a level-``n`` decomposition.  At full strength the
    result is checked against the ``5Λ_n`` affix lower bound.
    """
    p = t.params
    for n in range(2 * p.k, 1, -1):
        sides = qualifying_sides(t, n)
        if len(sides) >= n:
            d = Decomposition(n, frozenset(sides[:n]))
            if p.full_strength and t.within_bound():
                lam = level_constants(p, n).lambda_n
                weak = [(i, s) for i, s in d.edges if t.affix(i, s) < 5 * lam]
                if weak:
                    raise TransferError(f"decomposition sides {weak} have affix below 5Λ_{n}")
            return d
    return None


def maximal_form_holds(t: SententialTuple, d: Decomposition) -> bool:
    """For heavy components, an empty segment on a side iff that side is in ``d``."""
    n = d.level
    for i in range(1, t.k + 1):
        if not t.heavy(i, n):
            continue
        for s in (L, R):
            if t.segment_empty(i, n, s) != ((i, s) in d.edges):
                return False
    return True


# Steps.


class StepKind(str, Enum):
    DELETE_A_LEFT = "DeleteALeft"
    DELETE_A_RIGHT = "DeleteARight"
    DELETE_B_LEFT = "DeleteBLeft"
    DELETE_B_RIGHT = "DeleteBRight"
    SPLIT_LEFT = "SplitLeft"
    SPLIT_RIGHT = "SplitRight"

    @property
    def side(self) -> Side:
        return L if self.value.endswith("Left") else R

    @property
    def letter(self) -> str | None:
        if self.value.startswith("DeleteA"):
            return "a"
        if self.value.startswith("DeleteB"):
            return "b"
        return None

    @property
    def is_split(self) -> bool:
        return self.letter is None

    @property
    def mirror(self) -> "StepKind":
        return _MIRROR[self]


_MIRROR = {
    StepKind.DELETE_A_LEFT: StepKind.DELETE_A_RIGHT,
    StepKind.DELETE_A_RIGHT: StepKind.DELETE_A_LEFT,
    StepKind.DELETE_B_LEFT: StepKind.DELETE_B_RIGHT,
    StepKind.DELETE_B_RIGHT: StepKind.DELETE_B_LEFT,
    StepKind.SPLIT_LEFT: StepKind.SPLIT_RIGHT,
    StepKind.SPLIT_RIGHT: StepKind.SPLIT_LEFT,
}


@dataclass(frozen=True)
class ReverseStep:
    """One reverse derivation step.

    Deletions remove the named letter from one end of component ``x``.
    ``SplitLeft`` needs component ``x`` empty and cuts component ``x+1``
    after ``cut`` letters; ``SplitRight`` needs component ``x+1`` empty and
    cuts component ``x``.
    """

    kind: StepKind
    component: int
    cut: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StepKind(self.kind))
        if self.kind.is_split and self.cut is None:
            raise StepError("split steps need a cut position")
        if not self.kind.is_split and self.cut is not None:
            raise StepError("deletion steps take no cut position")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "component": self.component}
        if self.cut is not None:
            d["cut"] = self.cut
        return d

    @classmethod
    def from_dict(cls, data) -> "ReverseStep":
        try:
            return cls(StepKind(data["kind"]), int(data["component"]), data.get("cut"))
        except (KeyError, TypeError, ValueError) as exc:
            raise StepError(f"malformed step record {data!r}") from exc

    def mirrored(self, t: SententialTuple) -> "ReverseStep":
        """The step acting on the reversed tuple that corresponds to this one."""
        k = t.k
        if not self.kind.is_split:
            return ReverseStep(self.kind.mirror, k + 1 - self.component)
        x = self.component
        joined = x + 1 if self.kind is StepKind.SPLIT_LEFT else x
        return ReverseStep(self.kind.mirror, k - x, t.length(joined) - self.cut)


def apply_reverse_step(t: SententialTuple, step: ReverseStep, check_weight: bool = True) -> SententialTuple:
    k = t.k
    x = step.component
    spans = list(t.spans)
    if step.kind.is_split:
        if not 1 <= x <= k - 1:
            raise StepError(f"split position {x} outside 1..{k - 1}")
        if step.kind is StepKind.SPLIT_LEFT:
            empty, joined = x, x + 1
        else:
            empty, joined = x + 1, x
        if not t.is_empty(empty):
            raise StepError(f"{step.kind.value} at {x} needs component {empty} empty")
        s, e = spans[joined - 1]
        if not 0 <= step.cut <= e - s:
            raise StepError(f"cut {step.cut} outside 0..{e - s}")
        spans[x - 1] = (s, s + step.cut)
        spans[x] = (s + step.cut, e)
    else:
        if not 1 <= x <= k:
            raise StepError(f"component {x} outside 1..{k}")
        if t.is_empty(x):
            raise StepError(f"component {x} is empty")
        letter = t.end_letter(x, step.kind.side)
        if letter != step.kind.letter:
            raise StepError(f"component {x} has {letter!r} at its {step.kind.side.name.lower()} end")
        s, e = spans[x - 1]
        spans[x - 1] = (s + 1, e) if step.kind.side is L else (s, e - 1)
    out = SententialTuple(tuple(spans), t.params)
    if check_weight and not out.within_bound():
        raise WeightBoundError(f"step {step.kind.value} at {x} gives |Δ| = {abs(out.delta)} > C = {t.params.C}")
    return out


def reverse_tuple(t: SententialTuple) -> SententialTuple:
    return t.reverse()


def reverse_decomposition(d: Decomposition, k: int) -> Decomposition:
    return d.reverse(k)


# The five-way split classification.


def split_cases(t: SententialTuple, i: int, cut: int, n: int) -> frozenset:
    """Which of the five split conditions hold for component ``i`` cut after ``cut`` letters.

    1: the left part ends in at least Λ_n a's; 2: the right part starts
    with at least Λ_n a's; 3: both parts heavy and the remainder weights
    drop by at most σ_n; 4: left light, right heavy, remainder weight
    preserved; 5: left heavy, right light, remainder weight preserved.
    """
    text = t.text
    s, e = t.spans[i - 1]
    c = s + cut
    lc = level_constants(t.params, n)
    lam, sigma, thr = lc.lambda_n, lc.sigma_n, 2 * lc.lambda_n
    rem_w = text.rem_delta(s, e, thr)
    hu, hv = text.heavy(s, c, thr), text.heavy(c, e, thr)
    total = text.rem_delta(s, c, thr) + text.rem_delta(c, e, thr)
    out = set()
    if text.affix_length(s, c, R) >= lam:
        out.add(1)
    if text.affix_length(c, e, L) >= lam:
        out.add(2)
    if hu and hv and total >= rem_w - sigma:
        out.add(3)
    if not hu and hv and total == rem_w:
        out.add(4)
    if hu and not hv and total == rem_w:
        out.add(5)
    return frozenset(out)


# Transfer.


@dataclass(frozen=True)
class TransferResult:
    decomposition: Decomposition
    case: str
    tuple_after: SententialTuple


def _maximal(t: SententialTuple, d: Decomposition) -> Decomposition:
    best = find_maximal_decomposition(t)
    if best is None or best.level < d.level:
        raise TransferError(f"a valid level-{d.level} decomposition exists but the maximal search found {best}")
    return best


def _split_left_edges(t: SententialTuple, E: frozenset, n: int, x: int, cut: int) -> tuple[set, str]:
    """New sides after splitting component ``x+1`` into an empty component ``x``."""
    lc = level_constants(t.params, n)
    lam = lc.lambda_n
    J = x + 1
    size = t.length(J)
    aL, aR = t.affix(J, L), t.affix(J, R)
    E = set(E)
    has_l, has_r = (J, L) in E, (J, R) in E
    if not t.heavy(J, n):
        return E, "joined-light"
    if not has_l and not has_r:
        cases = split_cases(t, J, cut, n)
        if 1 in cases:
            return E | {(x, R)}, "unmarked/left-part-ends-long"
        if 2 in cases:
            return E | {(J, L)}, "unmarked/right-part-starts-long"
        if cases & {3, 4, 5}:
            return E, f"unmarked/remainder-{min(cases & {3, 4, 5})}"
        raise TransferError("no split condition applies to an unmarked heavy component")
    if has_l and not has_r:
        if cut <= aL:
            if cut >= lam:
                return (E - {(J, L)}) | {(x, L), (x, R)}, "left-marked/cut-in-affix/long"
            return E, "left-marked/cut-in-affix/short"
        cases = split_cases(t, J, cut, n)
        if 1 in cases:
            return (E - {(J, L)}) | {(x, L), (x, R)}, "left-marked/left-part-ends-long"
        if 2 in cases:
            return E | {(x, L)}, "left-marked/right-part-starts-long"
        if cases & {3, 5}:
            return (E - {(J, L)}) | {(x, L)}, "left-marked/move-left-side"
        raise TransferError("no split condition applies with the left side marked")
    if has_r and not has_l:
        q = size - cut
        if q <= aR:
            if q >= lam:
                return E | {(J, L)}, "right-marked/cut-in-affix/long"
            return (E - {(J, R)}) | {(x, R)}, "right-marked/cut-in-affix/short"
        cases = split_cases(t, J, cut, n)
        if 1 in cases:
            return E | {(x, R)}, "right-marked/left-part-ends-long"
        if 2 in cases:
            return E | {(J, L)}, "right-marked/right-part-starts-long"
        if cases & {3, 4}:
            return E, f"right-marked/remainder-{min(cases & {3, 4})}"
        raise TransferError("no split condition applies with the right side marked")
    # both sides of the joined component are marked
    both_j = {(J, L), (J, R)}
    both_x = {(x, L), (x, R)}
    if aL == size:
        if lam <= cut <= size - lam:
            return E | {(x, L)}, "both-marked/all-a/middle"
        if cut < lam:
            return E, "both-marked/all-a/short-left"
        return (E - both_j) | both_x, "both-marked/all-a/short-right"
    if cut < 2 * lam:
        return E, "both-marked/left-part-light"
    if cut <= aL:
        return (E - {(J, L)}) | both_x, "both-marked/cut-in-left-affix"
    if cut <= size - aR:
        cases = split_cases(t, J, cut, n)
        if 1 in cases:
            return (E - {(J, L)}) | both_x, "both-marked/middle/left-part-ends-long"
        if 2 in cases:
            return E | {(x, L)}, "both-marked/middle/right-part-starts-long"
        if 3 in cases:
            return (E - {(J, L)}) | {(x, L)}, "both-marked/middle/remainder"
        raise TransferError("no split condition applies in the middle of a doubly marked component")
    if cut <= size - 2 * lam:
        return E | {(x, L)}, "both-marked/cut-in-right-affix"
    return (E - both_j) | both_x, "both-marked/right-part-light"


def _transfer_left(t: SententialTuple, d: Decomposition, step: ReverseStep, after: SententialTuple) -> tuple[Decomposition, str]:
    kind = step.kind
    if kind is StepKind.DELETE_B_LEFT:
        return d, "delete-b"
    E = _maximal(t, d)
    if kind is StepKind.DELETE_A_LEFT:
        x = step.component
        if (x, L) in E.edges:
            label = "delete-a/marked"
        elif t.heavy(x, E.level):
            label = "delete-a/heavy-unmarked"
        else:
            label = "delete-a/light"
        return E, label
    edges, label = _split_left_edges(t, E.edges, E.level, step.component, step.cut)
    return Decomposition.of(edges), "split/" + label


def transfer(t: SententialTuple, d: Decomposition, step: ReverseStep) -> TransferResult:
    """Carry a decomposition of ``t`` across ``step``.

    Right-hand steps are handled on the reversed tuple.  The output is
    always re-validated; a failure raises :class:`TransferError`.
    """
    if not is_decomposition(t, d):
        raise TransferError("transfer needs a valid decomposition of the tuple before the step")
    after = apply_reverse_step(t, step)
    if step.kind.side is L:
        new, label = _transfer_left(t, d, step, after)
    else:
        rt, rstep = t.reverse(), step.mirrored(t)
        rnew, label = _transfer_left(rt, d.reverse(t.k), rstep, apply_reverse_step(rt, rstep))
        new = rnew.reverse(t.k)
        label = "mirrored/" + label
    if not is_decomposition(after, new):
        raise TransferError(f"case {label!r} produced {new.to_dict()}, which is not a decomposition after {step.to_dict()}")
    if new.level < d.level:
        raise TransferError(f"case {label!r} lowered the level from {d.level} to {new.level}")
    return TransferResult(new, label, after)


# Anchor.


@dataclass(frozen=True)
class Anchor:
    decomposition: Decomposition
    by_definition: bool
    by_affix_route: bool
    affix: int
    lambda_1: int


def initial_anchor(params: WitnessParams) -> Anchor:
    """The two-sided decomposition of ``(W, ε, ..., ε)``, checked two ways.

    Directly against the definition, and through the affix route: both
    affixes of ``W`` equal ``B_1 + m^2k``, which is at least ``Λ_1``, and
    two sides with affix at least ``Λ_1`` form a level-2 decomposition.
    """
    t = initial_tuple(params)
    d = Decomposition(2, frozenset({(1, L), (1, R)}))
    lc = level_constants(params, 1)
    affix = min(t.affix(1, L), t.affix(1, R))
    closed = lc.b_n + params.m ** (2 * params.k)
    return Anchor(d, is_decomposition(t, d), affix == closed and affix >= lc.lambda_n, affix, lc.lambda_n)


# Auditing.


class Verdict(str, Enum):
    CONTRADICTION = "CONTRADICTION"
    WEIGHT_VIOLATION = "WEIGHT_VIOLATION"
    INCOMPLETE = "INCOMPLETE"


@dataclass
class AuditReport:
    params: WitnessParams
    anchor: dict
    entries: list = field(default_factory=list)
    verdict: Verdict = Verdict.INCOMPLETE
    violation_step: int | None = None
    complete: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "params": {"m": p.m, "k": p.k, "C": p.C, "full_strength": p.full_strength},
            "anchor": self.anchor,
            "steps": self.entries,
            "verdict": self.verdict.value,
            "violation_step": self.violation_step,
            "complete": self.complete,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def audit_trace(grammar, steps: Sequence[ReverseStep], params: WitnessParams) -> AuditReport:
    """Carry the initial decomposition along ``steps`` starting from ``(W, ε, ..., ε)``.

    After a weight violation the decomposition is no longer carried, but
    the remaining steps are still applied so the report says whether the
    trace reaches the all-empty tuple.  ``grammar`` is accepted for
    interface symmetry with grammar-derived traces and is not consulted.
    """
    anchor = initial_anchor(params)
    report = AuditReport(params, {
        **anchor.decomposition.to_dict(),
        "valid": anchor.by_definition,
        "affix_route": anchor.by_affix_route,
        "affix": anchor.affix,
        "lambda_1": anchor.lambda_1,
    })
    t = initial_tuple(params)
    d: Decomposition | None = anchor.decomposition if anchor.by_definition else None
    if d is None:
        report.notes.append("initial tuple has no two-sided decomposition at these parameters")
    obstruction = False
    for idx, step in enumerate(steps):
        after = apply_reverse_step(t, step, check_weight=False)
        entry = {"index": idx, "step": step.to_dict(), "delta": after.delta,
                 "within_bound": after.within_bound()}
        if report.violation_step is None and not after.within_bound():
            report.violation_step = idx
            d = None
        if d is not None:
            try:
                res = transfer(t, d, step)
                d = res.decomposition
                entry.update({"case": res.case, "level": d.level,
                              "edges": d.to_dict()["edges"], "valid": True})
            except TransferError as exc:
                if after.all_empty():
                    obstruction = True
                    entry.update({"case": "obstruction", "valid": False,
                                  "level": None, "note": "the all-empty tuple admits no decomposition"})
                elif params.full_strength:
                    raise
                else:
                    entry.update({"case": "lost", "valid": False, "level": None, "note": str(exc)})
                    report.notes.append(f"decomposition lost at step {idx} (relaxed parameters)")
                d = None
        report.entries.append(entry)
        t = after
    report.complete = t.all_empty()
    if report.violation_step is not None:
        report.verdict = Verdict.WEIGHT_VIOLATION
    elif report.complete and obstruction:
        report.verdict = Verdict.CONTRADICTION
    else:
        report.verdict = Verdict.INCOMPLETE
    return report


def steps_from_json(text: str) -> list[ReverseStep]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StepError(f"invalid JSON: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("steps")
    if not isinstance(data, list):
        raise StepError("a trace is a list of step records")
    return [ReverseStep.from_dict(r) for r in data]


def steps_to_json(steps: Sequence[ReverseStep]) -> str:
    return json.dumps([s.to_dict() for s in steps], indent=1) + "\n"


def steps_from_derivation(nf, trace) -> list[ReverseStep]:
    """Reverse steps read off a normal-form derivation, from the accepting end down."""
    from .mcfg import RuleKind, Var, classify_rule

    steps = []
    cfgs = trace.configs
    rules = trace.rules
    for j in range(len(rules) - 1, 0, -1):
        rule = rules[j]
        kind = classify_rule(rule, nf.start)
        if kind is RuleKind.ACCEPTING:
            continue
        before = cfgs[j - 1][1]
        changed = [i for i, c in enumerate(rule.components) if c != (Var(i + 1),)]
        if kind in (RuleKind.INSERT_LEFT, RuleKind.INSERT_RIGHT):
            i = changed[0]
            comp = rule.components[i]
            letter = comp[0] if kind is RuleKind.INSERT_LEFT else comp[1]
            if letter not in ("a", "b"):
                raise StepError(f"insertion of {letter!r} is outside the alphabet a, b")
            side = "Left" if kind is RuleKind.INSERT_LEFT else "Right"
            steps.append(ReverseStep(StepKind(f"Delete{letter.upper()}{side}"), i + 1))
        elif kind is RuleKind.MERGE_LEFT:
            i = changed[0]
            steps.append(ReverseStep(StepKind.SPLIT_RIGHT, i + 1, len(before[i])))
        elif kind is RuleKind.MERGE_RIGHT:
            i = changed[0]
            steps.append(ReverseStep(StepKind.SPLIT_LEFT, i + 1, len(before[i])))
        else:
            raise StepError(f"rule {rule} is not a normal-form step")
    return steps


# Synthetic traces and random tuples.


@dataclass
class SyntheticTrace:
    steps: list
    within_bound: bool
    forced: list  # indices of steps taken against the weight bound


def synthetic_trace(params: WitnessParams, rng: random.Random, max_steps: int | None = None) -> SyntheticTrace:
    """A complete top-down trace from ``(W, ε, ...)`` to the all-empty tuple.

    Deletions are chosen to keep ``|Δ| <= C``, steering towards zero.  When
    no deletion fits, an empty component is used for a split that exposes
    a letter of the needed kind.  If neither is possible a deletion is
    forced and recorded.
    """
    t = initial_tuple(params)
    C = params.C
    steps: list = []
    forced: list = []
    limit = max_steps if max_steps is not None else 4 * t.text.length + 16
    while not t.all_empty():
        if len(steps) >= limit:
            raise StepError("synthetic trace did not finish within its step limit")
        delta = t.delta
        options = []
        for i in range(1, t.k + 1):
            if t.is_empty(i):
                continue
            for side in (L, R):
                letter = t.end_letter(i, side)
                change = -1 if letter == "a" else 1
                kind = StepKind(f"Delete{letter.upper()}{'Left' if side is L else 'Right'}")
                options.append((abs(delta + change), t.affix(i, side) if letter == "a" else 0,
                                ReverseStep(kind, i)))
        fitting = [o for o in options if o[0] <= C]
        if fitting:
            # stay near zero, and finish off short a-runs first to expose b's
            best = min(o[:2] for o in fitting)
            choice = rng.choice([o for o in fitting if o[:2] == best])[2]
        else:
            choice = _exposing_split(t, rng, need="b" if delta < 0 else "a")
            if choice is None:
                choice = rng.choice(options)[2]
                forced.append(len(steps))
        steps.append(choice)
        t = apply_reverse_step(t, choice, check_weight=False)
    return SyntheticTrace(steps, not forced, forced)


def _exposing_split(t: SententialTuple, rng: random.Random, need: str) -> ReverseStep | None:
    text = t.text
    for x in range(1, t.k):
        for kind, empty, joined in ((StepKind.SPLIT_LEFT, x, x + 1), (StepKind.SPLIT_RIGHT, x + 1, x)):
            if not t.is_empty(empty) or t.length(joined) < 2:
                continue
            s, e = t.spans[joined - 1]
            r1, r2 = text._run(s), text._run(e - 1)
            if r1 == r2:
                continue
            sign = 1 if need == "a" else -1
            # cut at a run boundary next to a run of the needed letter
            bounds = [int(text.ends[r]) - s for r in range(r1, min(r2, r1 + 64))
                      if (text.letters[r] == sign or text.letters[r + 1] == sign)]
            if bounds:
                return ReverseStep(kind, x, rng.choice(bounds))
    return None


def position_with_prefix(text: WitnessText, lo: int, target: int, min_run: int = 1,
                         rng: random.Random | None = None, spread: int = 8) -> int | None:
    """A position ``p >= lo`` with ``Δ(W[0:p]) = target`` inside an a-run of length at least ``min_run``.

    Without ``rng`` the smallest such position is returned; with it, one of
    the first ``spread`` qualifying runs is picked at random.
    """
    if not 0 <= lo <= text.length:
        return None
    pre = text.prefix_delta
    r0 = text._run(lo) if lo < text.length else text.run_count
    runs = np.arange(r0, text.run_count)
    if len(runs) == 0:
        return None
    lows = pre[runs].copy()
    lows[0] = text.delta(0, lo)
    highs = pre[runs + 1]
    ok = (text.letters[r0:] == 1) & (text.counts[r0:] >= min_run) & (lows <= target) & (target <= highs)
    hit = np.flatnonzero(ok)
    if len(hit) == 0:
        return None
    j = int(hit[0]) if rng is None else int(rng.choice(hit[:spread]))
    base = lo if j == 0 else int(text.starts[r0 + j])
    return base + target - int(lows[j])


def _tower_lengths(m: int, top: int) -> list[int]:
    lens = [2]
    for n in range(1, top + 1):
        lens.append(2 * m ** n + 2 * m * lens[-1])
    return lens


def random_block(params: WitnessParams, rng: random.Random, j: int) -> tuple[int, int]:
    """Position interval of a random copy of ``T_j`` inside ``W``."""
    m, top = params.m, 2 * params.k
    lens = _tower_lengths(m, top)
    pos = m ** top
    for level in range(top, j, -1):
        pos += m ** level + rng.randrange(2 * m) * lens[level - 1]
    return pos, pos + lens[j]


def balanced_factor(text: WitnessText, block: tuple[int, int], weight: int,
                    rng: random.Random) -> tuple[int, int] | None:
    """Extend ``block`` by a's on both sides so the factor has the given weight."""
    P, Q = block
    before = text.affix_length(0, P, R) if P else 0
    after = text.affix_length(Q, text.length, L) if Q < text.length else 0
    need = weight - text.delta(P, Q)
    lo, hi = max(0, need - after), min(before, need)
    if lo > hi:
        return None
    p = rng.randint(lo, hi)
    return P - p, Q + need - p


def random_tuple(params: WitnessParams, rng: random.Random, empty: Sequence[int] = (),
                 levels: Sequence[int] | None = None) -> SententialTuple | None:
    """A random sentential tuple, or None if the draw failed.

    Components listed in ``empty`` are ε.  Every other component is a copy
    of some ``T_j`` padded with a's on both sides to a small weight, which
    is the shape that carries large affixes.  ``levels`` fixes the ``j``
    of each nonempty component; by default they are random.
    """
    text = WitnessText.for_params(params)
    k = params.k
    empty = set(empty)
    live = [i for i in range(1, k + 1) if i not in empty]
    if levels is None:
        levels = [rng.randint(0, 2 * k) for _ in live]
    total = rng.randint(-params.C, params.C)
    weights = [rng.randint(-params.C, params.C) for _ in live[:-1]]
    weights.append(total - sum(weights))
    pieces = []
    for j, w in zip(levels, weights):
        f = balanced_factor(text, random_block(params, rng, j), w, rng)
        if f is None:
            return None
        pieces.append(f)
    pieces.sort()
    spans = []
    pos = 0
    it = iter(pieces)
    for i in range(1, k + 1):
        if i in empty:
            spans.append((pos, pos))
        else:
            sp = next(it)
            spans.append(sp)
            pos = sp[1]
    try:
        _validate_spans(spans, params)
    except WitnessError:
        return None
    t = SententialTuple(tuple(spans), params)
    return t if t.within_bound() else None


def applicable_steps(t: SententialTuple) -> list[ReverseStep]:
    """Deletions that keep the weight bound; splits are drawn separately with a cut."""
    out = []
    for i in range(1, t.k + 1):
        if t.is_empty(i):
            continue
        for side in (L, R):
            letter = t.end_letter(i, side)
            change = -1 if letter == "a" else 1
            if abs(t.delta + change) <= t.params.C:
                out.append(ReverseStep(StepKind(f"Delete{letter.upper()}{'Left' if side is L else 'Right'}"), i))
    return out


def split_cut_candidates(t: SententialTuple, joined: int, n: int) -> list[int]:
    """Cut positions near the thresholds the split case analysis depends on."""
    size = t.length(joined)
    lam = level_constants(t.params, n).lambda_n
    aL, aR = t.affix(joined, L), t.affix(joined, R)
    pts = {0, size, lam, 2 * lam, aL, size - aR, size - lam, size - 2 * lam, size // 2}
    for base in list(pts):
        for d in (-2, -1, 1, 2):
            pts.add(base + d)
    s, e = t.spans[joined - 1]
    text = t.text
    r1 = text._run(s) if size else 0
    for r in range(r1, min(r1 + 6, text.run_count)):
        pts.add(int(text.ends[r]) - s)
    r2 = text._run(e - 1) if size else 0
    for r in range(max(r2 - 6, 0), r2 + 1):
        pts.add(int(text.starts[r]) - s)
    return sorted(p for p in pts if 0 <= p <= size)
