import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from edtlab.decomp import (
    Decomposition,
    ReverseStep,
    StepKind,
    Verdict,
    apply_reverse_step,
    applicable_steps,
    audit_trace,
    check_tuple,
    find_maximal_decomposition,
    initial_anchor,
    initial_tuple,
    is_decomposition,
    maximal_form_holds,
    qualifying_sides,
    random_tuple,
    reverse_decomposition,
    reverse_tuple,
    split_cases,
    split_cut_candidates,
    steps_from_derivation,
    steps_from_json,
    steps_to_json,
    synthetic_trace,
    transfer,
    tuple_from_spans,
)
from edtlab.errors import StepError, TransferError, WeightBoundError, WitnessError
from edtlab.mcfg import Rmcfg, Rule, Var, find_trace, normalize
from edtlab.witness import WitnessParams, level_constants
from edtlab.words import Side

L, R = Side.LEFT, Side.RIGHT
FULL = WitnessParams.full(1, 1)
FULL2 = WitnessParams.full(2, 1)


def both(i):
    return Decomposition.of({(i, L), (i, R)})


def test_check_tuple_examples():
    N = initial_tuple(FULL).text.length
    assert check_tuple([oracles.witness(31, 1)], FULL).spans == ((0, N),)
    assert check_tuple([""], FULL).all_empty()
    with pytest.raises(WeightBoundError):
        check_tuple(["aa"], FULL)
    with pytest.raises(WitnessError):
        check_tuple(["b^125"], FULL)
    with pytest.raises(WitnessError):
        check_tuple(["", ""], FULL)
    p = WitnessParams(3, 2, 2)
    t = check_tuple(["a b", "b a"], p)
    assert t.spans[0][1] <= t.spans[1][0]


def test_spans_must_be_ordered():
    p = WitnessParams(3, 2, 5)
    with pytest.raises(WitnessError):
        tuple_from_spans([(10, 12), (4, 6)], p)
    assert tuple_from_spans([(10, 12), (3, 3)], p, check_weight=False).k == 2


def test_anchor_at_full_strength():
    a = initial_anchor(FULL)
    assert a.by_definition and a.by_affix_route
    assert a.affix == level_constants(FULL, 1).b_n + 31**2
    assert is_decomposition(initial_tuple(FULL), both(1))
    assert find_maximal_decomposition(initial_tuple(FULL)) == both(1)
    assert initial_anchor(FULL2).by_definition


def test_all_empty_tuple_has_no_decomposition():
    for p in (FULL, FULL2):
        t = tuple_from_spans([(0, 0)] * p.k, p)
        assert find_maximal_decomposition(t) is None
        assert qualifying_sides(t, 2) == []


def test_light_side_is_rejected():
    t = check_tuple(["a"], FULL)
    assert not is_decomposition(t, both(1))
    with pytest.raises(WitnessError):
        Decomposition(3, frozenset({(1, L)}))


def test_reverse_step_examples():
    p = WitnessParams(3, 2, 5)
    t = tuple_from_spans([(0, 5), (5, 5)], p)
    after = apply_reverse_step(t, ReverseStep(StepKind.DELETE_A_LEFT, 1))
    assert after.spans == ((1, 5), (5, 5)) and after.delta == t.delta - 1
    w = oracles.witness(3, 2)
    b_at = w.index("b")
    tb = tuple_from_spans([(b_at - 2, b_at + 1), (b_at + 1, b_at + 1)], p)
    out = apply_reverse_step(tb, ReverseStep(StepKind.DELETE_B_RIGHT, 1))
    assert out.delta == tb.delta + 1
    ts = tuple_from_spans([(0, 0), (2, 9)], p, check_weight=False)
    split = apply_reverse_step(ts, ReverseStep(StepKind.SPLIT_LEFT, 1, 3), check_weight=False)
    assert split.spans == ((2, 5), (5, 9))
    with pytest.raises(StepError):
        apply_reverse_step(ts, ReverseStep(StepKind.SPLIT_RIGHT, 1, 3), check_weight=False)
    with pytest.raises(StepError):
        apply_reverse_step(t, ReverseStep(StepKind.DELETE_B_LEFT, 1))
    with pytest.raises(StepError):
        ReverseStep(StepKind.SPLIT_LEFT, 1)


def test_transfer_examples():
    t = initial_tuple(FULL)
    res = transfer(t, both(1), ReverseStep(StepKind.DELETE_A_LEFT, 1))
    assert res.decomposition == both(1)
    assert res.case == "delete-a/marked"
    w = oracles.witness(3, 1)
    p = WitnessParams(3, 1, 40)
    t = tuple_from_spans([(0, len(w))], p)
    d = find_maximal_decomposition(t)
    assert d is not None
    t2 = tuple_from_spans([(w.index("b"), len(w))], p, check_weight=False)
    assert t2.within_bound()
    assert transfer(t2, find_maximal_decomposition(t2), ReverseStep(StepKind.DELETE_B_LEFT, 1)).case == "delete-b"


def test_split_raises_the_level():
    # relaxed k = 2 tuple (ε, W): cutting inside the long left affix marks both sides of the new part
    p = WitnessParams(31, 2, 1)
    N = initial_tuple(p).text.length
    t = tuple_from_spans([(0, 0), (0, N)], p)
    d = both(2)
    assert is_decomposition(t, d)
    res = transfer(t, d, ReverseStep(StepKind.SPLIT_LEFT, 1, t.affix(2, L) // 2))
    assert res.decomposition.level == 3
    assert is_decomposition(res.tuple_after, res.decomposition)


def test_transfer_rejects_bad_input():
    t = check_tuple(["a"], FULL)
    with pytest.raises(TransferError):
        transfer(t, both(1), ReverseStep(StepKind.DELETE_A_LEFT, 1))


def test_reverse_symmetry():
    p = WitnessParams(3, 2, 2)
    w = oracles.witness(3, 2)
    t = check_tuple(["a b", "b a"], p)
    r = reverse_tuple(t)
    assert [x.expand() for x in r.words()] == [x.expand()[::-1] for x in reversed(t.words())]
    assert reverse_tuple(r) == t
    d = Decomposition.of({(1, L), (2, R)})
    assert reverse_decomposition(d, 2) == Decomposition.of({(1, L), (2, R)})
    assert reverse_decomposition(Decomposition.of({(1, L), (1, R)}), 2) == both(2)
    assert w == w[::-1]
    t0 = initial_tuple(FULL2)
    assert is_decomposition(reverse_tuple(t0), reverse_decomposition(both(1), 2))


# String-level cross-checks at small parameters.

SMALL = [WitnessParams(2, 1, 3), WitnessParams(3, 1, 2), WitnessParams(2, 2, 4)]


@st.composite
def small_tuples(draw):
    p = draw(st.sampled_from(SMALL))
    w = oracles.witness(p.m, p.k)
    cuts = sorted(draw(st.lists(st.integers(0, len(w)), min_size=2 * p.k, max_size=2 * p.k)))
    spans = [(cuts[2 * i], cuts[2 * i + 1]) for i in range(p.k)]
    return p, spans


@settings(max_examples=300, deadline=None)
@given(small_tuples())
def test_decomposition_matches_string_oracle(pt):
    p, spans = pt
    w = oracles.witness(p.m, p.k)
    t = tuple_from_spans(spans, p, check_weight=False)
    ws = [w[s:e] for s, e in spans]
    found = oracles.all_decompositions(ws, p.m, p.k, p.C)
    for edges in found:
        d = Decomposition.of((i, L if s == "L" else R) for i, s in edges)
        assert is_decomposition(t, d)
    best = find_maximal_decomposition(t)
    assert (best is None) == (not found)
    if best is not None:
        assert best.level == max(len(e) for e in found)
        assert is_decomposition(t, best)
        assert sorted((i, s.value) for i, s in best.edges) in [sorted(e) for e in found]


def oracle_split_cases(u: str, cut: int, m: int, k: int, n: int) -> set:
    lam, sig = oracles.lam(m, k, n), oracles.sigma(m, k, n)
    x, y = u[:cut], u[cut:]
    rem = lambda v: oracles.delta(oracles.rem(v, m, k, n))
    hx, hy = oracles.heavy(x, m, k, n), oracles.heavy(y, m, k, n)
    out = set()
    if len(oracles.affix(x, "R")) >= lam:
        out.add(1)
    if len(oracles.affix(y, "L")) >= lam:
        out.add(2)
    if hx and hy and rem(x) + rem(y) >= rem(u) - sig:
        out.add(3)
    if not hx and hy and rem(x) + rem(y) == rem(u):
        out.add(4)
    if hx and not hy and rem(x) + rem(y) == rem(u):
        out.add(5)
    return out


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_split_cases_match_oracle_and_cover(data):
    p = WitnessParams(4, 1, 1)
    w = oracles.witness(4, 1)
    n = data.draw(st.integers(1, 2))
    s = data.draw(st.integers(0, len(w) - 1))
    e = data.draw(st.integers(s + 1, len(w)))
    u = w[s:e]
    if not oracles.heavy(u, 4, 1, n):
        return
    t = tuple_from_spans([(s, e)], p, check_weight=False)
    for cut in range(len(u) + 1):
        got = split_cases(t, 1, cut, n)
        assert set(got) == oracle_split_cases(u, cut, 4, 1, n)
        assert got


def test_split_cases_cover_at_full_strength():
    rng = random.Random(5)
    text = initial_tuple(FULL).text
    done = 0
    while done < 8:
        s = rng.randrange(text.length)
        e = min(text.length, s + rng.randrange(1, 2500))
        thr = 2 * level_constants(FULL, 2).lambda_n
        if not text.heavy(s, e, thr):
            continue
        t = tuple_from_spans([(s, e)], FULL, check_weight=False)
        assert all(split_cases(t, 1, c, 2) for c in range(e - s + 1))
        done += 1


@pytest.mark.parametrize("p", [FULL, FULL2], ids=["m31k1", "m55k2"])
def test_maximal_form_on_random_tuples(p):
    rng = random.Random(11)
    checked = 0
    for _ in range(300):
        t = random_tuple(p, rng)
        if t is None:
            continue
        d = find_maximal_decomposition(t)
        if d is not None:
            assert maximal_form_holds(t, d)
            checked += 1
    assert checked > 20


def _random_walk_steps(p, seed, pairs, walk):
    """Seeded transfer walks from random (tuple, maximal decomposition) pairs."""
    rng = random.Random(seed)
    cases = Counter()
    while sum(cases.values()) < pairs * walk // 4:
        t = random_tuple(p, rng, rng.choice([()] + [(i,) for i in range(1, p.k + 1)]))
        if t is None:
            continue
        d = find_maximal_decomposition(t)
        if d is None:
            continue
        for _ in range(walk):
            options = applicable_steps(t)
            for x in range(1, t.k):
                for kind, empty, joined in ((StepKind.SPLIT_LEFT, x, x + 1), (StepKind.SPLIT_RIGHT, x + 1, x)):
                    if t.is_empty(empty) and not t.is_empty(joined):
                        options += [ReverseStep(kind, x, c) for c in split_cut_candidates(t, joined, d.level)]
            options = [s for s in options if apply_reverse_step(t, s, check_weight=False).within_bound()]
            if not options:
                break
            step = rng.choice(options)
            res = transfer(t, d, step)
            assert is_decomposition(res.tuple_after, res.decomposition)
            assert res.decomposition.level >= d.level
            cases[res.case] += 1
            t, d = res.tuple_after, res.decomposition
    return cases


def test_transfer_soundness_full_strength_k1():
    cases = _random_walk_steps(FULL, 1, 400, 10)
    assert cases["delete-a/marked"] and cases["mirrored/delete-a/marked"]


def test_transfer_soundness_k2_run_length():
    cases = _random_walk_steps(FULL2, 2, 200, 10)
    assert any(c.startswith("split/both-marked") for c in cases)
    assert any(c.startswith("mirrored/split/") for c in cases)


def test_transfer_from_anchor_walk_k2():
    rng = random.Random(3)
    t = initial_tuple(FULL2)
    d = initial_anchor(FULL2).decomposition
    for _ in range(300):
        options = applicable_steps(t)
        for kind, empty, joined in ((StepKind.SPLIT_LEFT, 1, 2), (StepKind.SPLIT_RIGHT, 2, 1)):
            if t.is_empty(empty) and not t.is_empty(joined):
                options += [ReverseStep(kind, 1, c) for c in split_cut_candidates(t, joined, d.level)]
        options = [s for s in options if apply_reverse_step(t, s, check_weight=False).within_bound()]
        if not options:
            break
        res = transfer(t, d, rng.choice(options))
        assert res.decomposition.level >= d.level
        t, d = res.tuple_after, res.decomposition


def test_audit_weight_violation():
    steps = [ReverseStep(StepKind.DELETE_A_LEFT, 1)] * (FULL.C + 1)
    rep = audit_trace(None, steps, FULL)
    assert rep.verdict is Verdict.WEIGHT_VIOLATION
    assert rep.violation_step == FULL.C
    assert rep.entries[0]["valid"] and rep.entries[0]["level"] == 2


def test_audit_empty_trace():
    rep = audit_trace(None, [], FULL)
    assert rep.verdict is Verdict.INCOMPLETE
    assert rep.anchor["valid"] and rep.anchor["level"] == 2
    assert json.loads(rep.to_json())["steps"] == []


def test_synthetic_traces_at_full_strength_break_the_bound():
    for seed in range(3):
        tr = synthetic_trace(FULL, random.Random(seed))
        rep = audit_trace(None, tr.steps, FULL)
        assert rep.complete
        assert not tr.within_bound and rep.verdict is Verdict.WEIGHT_VIOLATION
        assert rep.violation_step == 1


def test_relaxed_trace_is_audited_without_errors():
    p = WitnessParams(2, 1, 10)
    tr = synthetic_trace(p, random.Random(0))
    assert tr.within_bound
    rep = audit_trace(None, tr.steps, p)
    assert rep.complete and rep.violation_step is None
    assert rep.verdict in (Verdict.INCOMPLETE, Verdict.CONTRADICTION)


def test_steps_json_round_trip():
    steps = [ReverseStep(StepKind.DELETE_A_LEFT, 1), ReverseStep(StepKind.SPLIT_RIGHT, 1, 4)]
    text = steps_to_json(steps)
    assert steps_from_json(text) == steps
    assert steps_from_json(json.dumps({"steps": [s.to_dict() for s in steps]})) == steps
    with pytest.raises(StepError):
        steps_from_json('[{"kind": "Jump", "component": 1}]')
    with pytest.raises(StepError):
        steps_from_json("{")


def test_mirrored_steps_commute_with_reverse():
    p = WitnessParams(3, 2, 50)
    t = tuple_from_spans([(0, 0), (3, 40)], p, check_weight=False)
    step = ReverseStep(StepKind.SPLIT_LEFT, 1, 7)
    left = reverse_tuple(apply_reverse_step(t, step, check_weight=False))
    right = apply_reverse_step(reverse_tuple(t), step.mirrored(t), check_weight=False)
    assert left == right


def test_steps_from_normal_form_derivation():
    p = WitnessParams(2, 2, 10**4)
    w = oracles.witness(2, 2)
    half = len(w) // 2
    X1, X2 = Var(1), Var(2)
    g = Rmcfg("ab", {"S": 1, "H": 2, "K": 2}, "S", [
        Rule("H", ((), ())),
        Rule("K", (tuple(w[:half]) + (X1,), (X2,) + tuple(w[half:])), "H"),
        Rule("S", ((X1, X2),), "K"),
    ])
    nf = normalize(g)
    trace = find_trace(nf.grammar, tuple(w), max_steps=4 * len(w))
    assert trace is not None
    steps = steps_from_derivation(nf, trace)
    t = initial_tuple(p)
    for s in steps:
        t = apply_reverse_step(t, s, check_weight=False)
    assert t.all_empty()
    kinds = {s.kind for s in steps}
    assert StepKind.DELETE_A_LEFT in kinds or StepKind.DELETE_A_RIGHT in kinds
    rep = audit_trace(nf, steps, p)
    assert rep.complete and len(rep.entries) == len(steps)


def test_random_tuple_respects_invariants():
    rng = random.Random(0)
    for _ in range(50):
        t = random_tuple(FULL2, rng, (1,))
        if t is None:
            continue
        assert t.is_empty(1) and t.within_bound()
        assert t.spans[1][0] >= t.spans[0][1]
