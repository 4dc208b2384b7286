"""Grammar-to-grammar constructions.

* :func:`apply_transducer` builds a grammar for the image of a language
  under a deterministic transducer;
* :func:`lult_to_finite_index` builds a finite-index grammar generating
  the same language as a LULT grammar;
* :func:`shuffle_quotient` erases a terminal after every table;
* :func:`wp_finite_index_pipeline` chains the antichain transducer, the
  transducer closure, the quotient and the finite-index construction.

The first two produce lazy grammars.  Their table families are far too
large to list, so tables are instantiated on demand for the nonterminals
present in a sentential form.  :func:`materialize` turns a lazy grammar
into an explicit :class:`~edtlab.edt0l.Edt0lGrammar` when it is small.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterator

from .edt0l import Edt0lGrammar, LultWitness, Nt, TableSystem, enumerate_language, find_derivation, sort_key
from .errors import BudgetExceeded, GrammarError
from .transducer import AntichainSpec, Transducer, antichain_transducer, z_antichain

DEAD = Nt("⊥")
START = Nt("I'")


def grammar_id(g: TableSystem) -> str:
    if isinstance(g, Edt0lGrammar):
        return "edt0l:" + hashlib.sha256(g.to_json().encode()).hexdigest()[:12]
    return getattr(g, "ident", type(g).__name__)


@dataclass
class TransformReport:
    stage: str
    input_id: str
    output_id: str
    input_nonterminals: int | None
    output_nonterminals: int | None
    theoretical_bound: int | None
    index_certificate: int | None
    notes: list[str] = field(default_factory=list)

    def within_bound(self) -> bool:
        if self.theoretical_bound is None or self.output_nonterminals is None:
            return True
        return self.output_nonterminals <= self.theoretical_bound

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "input": self.input_id,
            "output": self.output_id,
            "input_nonterminals": self.input_nonterminals,
            "output_nonterminals": self.output_nonterminals,
            "theoretical_bound": self.theoretical_bound,
            "index_certificate": self.index_certificate,
            "within_bound": self.within_bound(),
            "notes": list(self.notes),
        }


class LazyGrammar(TableSystem):
    """Common bookkeeping for constructed grammars with structured nonterminals."""

    stage = "lazy"

    def __init__(self, base: TableSystem, max_nonterminals: int | None):
        self.base = base
        self.start = START
        self.dead = frozenset({DEAD})
        self.max_nonterminals = max_nonterminals
        self.seen: set = {START}
        self.ident = f"{self.stage}({grammar_id(base)})"

    def is_nonterminal(self, symbol) -> bool:
        return isinstance(symbol, Nt)

    def _note(self, symbols) -> None:
        for s in symbols:
            if isinstance(s, Nt) and s not in self.seen:
                self.seen.add(s)
                if self.max_nonterminals is not None and len(self.seen) > self.max_nonterminals:
                    raise BudgetExceeded(
                        f"{self.stage}: more than {self.max_nonterminals} nonterminals instantiated "
                        f"(theoretical bound {self.theoretical_bound()})",
                        self.theoretical_bound(),
                    )

    def theoretical_bound(self) -> int | None:
        return None

    def report(self) -> TransformReport:
        return TransformReport(
            self.stage,
            grammar_id(self.base),
            self.ident,
            self.base.nonterminal_universe(),
            len(self.seen),
            self.theoretical_bound(),
            self.index_certificate,
            list(getattr(self, "notes", [])),
        )


# Transducer closure.


class TransducedGrammar(LazyGrammar):
    """Grammar for ``M(L(base))``.

    A nonterminal ``X[v,q,q']`` stands for an occurrence of ``v`` whose
    eventual terminal word drives the transducer from ``q`` to ``q'``.
    Tables are pairs of a base table and a choice of one image per
    nonterminal; only nonterminals of the current form are chosen for,
    and equal nonterminals receive equal images.
    """

    stage = "apply-transducer"

    def __init__(self, base: TableSystem, t: Transducer, max_nonterminals: int | None = None):
        bad = set(base.terminals) - set(t.input_alphabet)
        if bad:
            raise GrammarError(f"grammar terminals {sorted(bad)} are outside the transducer's input alphabet")
        super().__init__(base, max_nonterminals)
        self.t = t
        self.terminals = frozenset(t.output_alphabet)
        self.states = sorted(t.states, key=sort_key)
        self._cache: dict = {}
        self.notes = [
            "tables t_(h,r) instantiated lazily per sentential form; r ranges over the image sets "
            "when they are nonempty and is the dead end otherwise",
            "I' is sent to the dead end by every non-initial table",
        ]

    def nonterminal_universe(self) -> int | None:
        v = self.base.nonterminal_universe()
        return None if v is None else v * len(self.states) ** 2 + 2

    def theoretical_bound(self) -> int | None:
        return self.nonterminal_universe()

    def _images(self, img: tuple, q, q_end) -> list[tuple]:
        key = (img, q, q_end)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        base, t = self.base, self.t
        pieces: list[list] = [[]]
        nts: list = []
        for x in img:
            if base.is_nonterminal(x):
                nts.append(x)
                pieces.append([])
            else:
                pieces[-1].append(x)
        if any(x in base.dead for x in nts) or any(
            g not in t.input_alphabet for piece in pieces for g in piece
        ):
            self._cache[key] = []
            return []
        out: list[tuple] = []

        def rec(i: int, state, acc: tuple) -> None:
            emitted, after = t.path(state, pieces[i])
            acc = acc + emitted
            if i == len(nts):
                if after == q_end:
                    out.append(acc)
                return
            for q_next in self.states:
                rec(i + 1, q_next, acc + (Nt("X", (nts[i], after, q_next)),))

        rec(0, q, ())
        self._cache[key] = out
        return out

    def actions(self, symbols: frozenset) -> Iterator[tuple]:
        triples = sorted((s for s in symbols if s.kind == "X"), key=sort_key)
        has_start = START in symbols
        if has_start:
            for a in sorted(self.t.accepting, key=sort_key):
                act = {START: (Nt("X", (self.base.start, self.t.initial, a)),)}
                for s in triples:
                    act[s] = (DEAD,)
                self._note(act[START])
                yield ("init", a), act
        kill = {s: (DEAD,) for s in triples}
        if has_start:
            kill[START] = (DEAD,)
        if kill:
            yield ("kill",), kill
        if not triples:
            return
        vs = frozenset(s.args[0] for s in triples)
        for label, rho in self.base.actions(vs):
            choices = []
            for s in triples:
                v, q, q_end = s.args
                imgs = self._images(tuple(rho[v]), q, q_end)
                choices.append(imgs or [(DEAD,)])
            for combo in product(*choices):
                act = dict(zip(triples, combo))
                if has_start:
                    act[START] = (DEAD,)
                for img in combo:
                    self._note(img)
                yield ("h", label, combo), act


def apply_transducer(g: TableSystem, t: Transducer, max_nonterminals: int | None = None) -> TransducedGrammar:
    return TransducedGrammar(g, t, max_nonterminals)


# Finite index from LULT.


def _partial(f: dict) -> frozenset:
    return frozenset(f.items())


class FiniteIndexGrammar(LazyGrammar):
    """Finite-index grammar for the language of a LULT grammar.

    Live sentential forms are ``I'`` or a word containing one
    ``X[a,A,f]`` per ``a`` in ``A`` followed by a final ``Y[A,f]``.  ``A``
    holds the base nonterminals that still have a long future.  The
    partial map ``f`` commits single-letter-or-empty futures of all other
    present nonterminals; every step checks those commitments.
    """

    stage = "lult-fi"

    def __init__(self, base: TableSystem, max_nonterminals: int | None = 200_000):
        super().__init__(base, max_nonterminals)
        self.terminals = frozenset(base.terminals)
        self.sigma = sorted(base.terminals, key=sort_key)
        self.values = [()] + [(s,) for s in self.sigma]
        v = base.nonterminal_universe()
        self.index_certificate = None if v is None else v + 1
        self._valid_cache: dict = {}
        self.notes = [
            "(h,B,g) tables instantiated on demand; dom(g) is restricted to nonterminals "
            "present after the step, which loses no derivation",
        ]

    def nonterminal_universe(self) -> int | None:
        return self.theoretical_bound()

    def theoretical_bound(self) -> int | None:
        v = self.base.nonterminal_universe()
        if v is None:
            return None
        s = len(self.sigma)
        return 2 + v * 2**v * (s + 2) ** v + 2**v * (s + 2) ** v

    def _valid(self, rho: dict, A: frozenset, f: frozenset) -> list[tuple[frozenset, frozenset]]:
        """All (B, g) satisfying the four step properties for context (A, f)."""
        base = self.base
        fmap = dict(f)
        key = (tuple(sorted(((v, rho[v]) for v in A | fmap.keys()), key=sort_key)), A, f)
        hit = self._valid_cache.get(key)
        if hit is not None:
            return hit
        counts: Counter = Counter(
            x for a in sorted(A, key=sort_key) for x in rho[a] if base.is_nonterminal(x)
        )
        committed = {x for v in fmap for x in rho[v] if base.is_nonterminal(x)}
        if any(x in base.dead for x in counts) or any(x in base.dead for x in committed):
            self._valid_cache[key] = []
            return []
        once = {x for x, c in counts.items() if c == 1}
        many = {x for x, c in counts.items() if c >= 2}
        required = many | committed
        optional = sorted(once - required, key=sort_key)
        out = []
        for r in range(len(optional) + 1):
            for extra in combinations(optional, r):
                dom = sorted(required | set(extra), key=sort_key)
                B = frozenset(once - set(dom))
                for vals in product(self.values, repeat=len(dom)):
                    g = dict(zip(dom, vals))
                    if all(
                        tuple(y for x in rho[v] for y in (g[x] if base.is_nonterminal(x) else (x,))) == fmap[v]
                        for v in fmap
                    ):
                        out.append((B, _partial(g)))
        self._valid_cache[key] = out
        return out

    def _image_x(self, rho: dict, a, B: frozenset, g: frozenset) -> tuple:
        gmap = dict(g)
        out: list = []
        for x in rho[a]:
            if not self.base.is_nonterminal(x):
                out.append(x)
            elif x in B:
                out.append(Nt("X", (x, B, g)))
            else:
                out.extend(gmap[x])
        return tuple(out)

    def actions(self, symbols: frozenset) -> Iterator[tuple]:
        has_start = START in symbols
        xs = sorted((s for s in symbols if s.kind == "X"), key=sort_key)
        ys = sorted((s for s in symbols if s.kind == "Y"), key=sort_key)
        if has_start:
            I = self.base.start
            act = {START: (Nt("X", (I, frozenset({I}), frozenset())), Nt("Y", (frozenset({I}), frozenset())))}
            self._note(act[START])
            yield ("init",), act
        end: dict = {}
        if has_start:
            end[START] = (DEAD,)
        for y in ys:
            A, f = y.args
            end[y] = (DEAD,) if (A or f) else ()
        for x in xs:
            end[x] = ()
        if end:
            yield ("end",), end
        kill = {s: () for s in xs}
        kill.update({y: (DEAD,) for y in ys})
        if has_start:
            kill[START] = (DEAD,)
        if kill:
            yield ("kill",), kill
        contexts = sorted({x.args[1:] for x in xs} | {y.args for y in ys}, key=sort_key)
        if not contexts:
            return
        union = frozenset().union(*(A | dict(f).keys() for A, f in contexts))
        for label, rho in self.base.actions(union):
            valid = {c: set(self._valid(rho, *c)) for c in contexts}
            candidates = sorted(set().union(*valid.values()), key=sort_key)
            for B, g in candidates:
                act: dict = {}
                if has_start:
                    act[START] = (DEAD,)
                for x in xs:
                    a, A, f = x.args
                    act[x] = self._image_x(rho, a, B, g) if (B, g) in valid[(A, f)] else ()
                for y in ys:
                    act[y] = (Nt("Y", (B, g)),) if (B, g) in valid[y.args] else (DEAD,)
                for img in act.values():
                    self._note(img)
                yield ("t", label, B, g), act


def lult_to_finite_index(g: TableSystem, max_nonterminals: int | None = 200_000) -> FiniteIndexGrammar:
    return FiniteIndexGrammar(g, max_nonterminals)


def form_shape(form: tuple) -> str:
    """Classify a sentential form of a finite-index output grammar.

    Returns ``"terminal"``, ``"start"``, ``"dead"``, ``"live"`` or ``"invalid"``.
    """
    nts = [s for s in form if isinstance(s, Nt)]
    if not nts:
        return "terminal"
    if form == (START,):
        return "start"
    if len(nts) == 1 and nts[0] == DEAD:
        return "dead"
    if not nts or nts[-1].kind != "Y" or form[-1] != nts[-1]:
        return "invalid"
    A, f = nts[-1].args
    xs = nts[:-1]
    if any(x.kind != "X" or x.args[1:] != (A, f) for x in xs):
        return "invalid"
    if sorted((x.args[0] for x in xs), key=sort_key) != sorted(A, key=sort_key):
        return "invalid"
    return "live"


# Shuffle quotient.


class ErasedGrammar(TableSystem):
    """A lazy grammar with one terminal erased after every table."""

    stage = "shuffle"

    def __init__(self, base: TableSystem, letter: str):
        self.base = base
        self.letter = letter
        self.terminals = frozenset(base.terminals) - {letter}
        self.start = base.start
        self.dead = base.dead
        self.index_certificate = base.index_certificate
        self.ident = f"shuffle({grammar_id(base)},{letter})"

    def is_nonterminal(self, symbol) -> bool:
        return self.base.is_nonterminal(symbol)

    def nonterminal_universe(self) -> int | None:
        return self.base.nonterminal_universe()

    def actions(self, symbols: frozenset) -> Iterator[tuple]:
        c = self.letter
        for label, act in self.base.actions(symbols):
            yield label, {v: tuple(x for x in img if x != c) for v, img in act.items()}

    @property
    def seen(self):
        return getattr(self.base, "seen", set())

    def report(self) -> TransformReport:
        n = self.base.nonterminal_universe()
        return TransformReport(self.stage, grammar_id(self.base), self.ident, n, n, n, self.index_certificate)


def shuffle_quotient(g: TableSystem, letter: str) -> TableSystem:
    """Post-compose every table with the homomorphism erasing ``letter``."""
    if letter not in g.terminals:
        raise GrammarError(f"{letter!r} is not a terminal of the grammar")
    if not isinstance(g, Edt0lGrammar):
        return ErasedGrammar(g, letter)
    tables = {
        name: {v: tuple(x for x in img if x != letter) for v, img in row.items()}
        for name, row in g.tables.items()
    }
    out = Edt0lGrammar(g.terminals - {letter}, g.nonterminals, g.start, tables)
    out.index_certificate = g.index_certificate
    return out


def shuffle_report(g: Edt0lGrammar, out: Edt0lGrammar, letter: str) -> TransformReport:
    n = len(g.nonterminals)
    return TransformReport("shuffle", grammar_id(g), grammar_id(out), n, len(out.nonterminals), n,
                           out.index_certificate, [f"erased terminal {letter!r}"])


def padded_word(word: tuple, letter: str) -> tuple:
    """``w1 c w2 c c ... wk c^k``: distinct gap lengths make any derivation LULT after erasure."""
    out: list = []
    for i, x in enumerate(word, 1):
        out.append(x)
        out.extend([letter] * i)
    return tuple(out)


def shuffle_lult_witness(g: Edt0lGrammar, quotient: Edt0lGrammar, word, letter: str,
                         max_depth: int = 40, max_forms: int = 200_000) -> LultWitness | None:
    """Derive ``padded_word(word)`` in ``g`` and reuse the table names in the quotient.

    The quotient keeps ``g``'s table names, so the mapped sequence is the
    same list of names.  Returns None when the bounded search finds nothing.
    """
    seq = find_derivation(g, padded_word(tuple(word), letter), max_depth, max_forms)
    if seq is None:
        return None
    return LultWitness(tuple(word), tuple(seq))


# Word-problem pipeline.


def wp_antichain_spec(letter: str = "c") -> AntichainSpec:
    """Antichain {w1 a, w2 b, w3} mapped to a, b and the padding letter."""
    w1a, w2b, w3 = z_antichain(["a", "b", ""])
    return AntichainSpec([(w1a, "a"), (w2b, "b"), (w3, letter)])


@dataclass
class PipelineResult:
    grammar: TableSystem
    stages: list
    spec: AntichainSpec
    transducer: Transducer

    def reports(self) -> list[dict]:
        return [s.report().to_dict() for s in self.stages]


def wp_finite_index_pipeline(g: TableSystem, letter: str = "c", max_nonterminals: int | None = 200_000) -> PipelineResult:
    if set(g.terminals) != {"a", "b"}:
        raise GrammarError("the word-problem pipeline expects terminals {a, b}")
    spec = wp_antichain_spec(letter)
    t = antichain_transducer(spec, input_alphabet={"a", "b"})
    stage3 = apply_transducer(g, t, max_nonterminals)
    stage4 = shuffle_quotient(stage3, letter)
    stage5 = lult_to_finite_index(stage4, max_nonterminals)
    return PipelineResult(stage5, [stage3, stage4, stage5], spec, t)


# Materialization.


def materialize(g: TableSystem, max_nonterminals: int = 5_000, max_tables: int = 5_000) -> Edt0lGrammar:
    """Explicit grammar over the nonterminals reachable from the start symbol.

    Tables are the distinct restrictions of ``g``'s tables to that set.
    Raises :class:`BudgetExceeded` when either count passes its cap.
    """
    if isinstance(g, Edt0lGrammar):
        return g
    reach = {g.start}
    queue = [g.start]
    while queue:
        v = queue.pop()
        for _, act in g.actions(frozenset({v})):
            for x in act.get(v, ()):
                if g.is_nonterminal(x) and x not in reach:
                    reach.add(x)
                    queue.append(x)
                    if len(reach) > max_nonterminals:
                        raise BudgetExceeded(f"more than {max_nonterminals} reachable nonterminals", max_nonterminals)
    ordered = sorted(reach, key=sort_key)
    names = {v: str(v) for v in ordered}
    if len(set(names.values())) != len(names):
        raise GrammarError("nonterminal names collide after stringification")
    if set(names.values()) & set(g.terminals):
        raise GrammarError("nonterminal names collide with terminals")
    tables = {}
    seen = set()
    for label, act in g.actions(frozenset(ordered)):
        key = tuple(act.get(v, (v,)) for v in ordered)
        if key in seen:
            continue
        seen.add(key)
        if len(seen) > max_tables:
            raise BudgetExceeded(f"more than {max_tables} distinct tables", max_tables)
        tables[f"t{len(tables):04d}"] = {
            names[v]: tuple(names.get(x, x) if g.is_nonterminal(x) else x for x in act.get(v, (v,)))
            for v in ordered
        }
    out = Edt0lGrammar(g.terminals, names.values(), names[g.start], tables)
    out.index_certificate = g.index_certificate
    return out


# Bounded language comparison.


@dataclass
class Comparison:
    equal: bool
    max_len: int
    max_depth: int
    only_a: list
    only_b: list
    complete: bool

    def to_dict(self) -> dict:
        return {"equal": self.equal, "max_len": self.max_len, "max_depth": self.max_depth,
                "only_a": self.only_a, "only_b": self.only_b, "complete": self.complete}


def bounded_language(g, max_len: int, max_depth: int, erase: str | None = None) -> tuple[set, bool]:
    """Words of length at most ``max_len`` of an EDT0L grammar or an R-MCFG.

    With ``erase``, that letter is deleted from every word and does not
    count towards the length bound (EDT0L grammars only).
    """
    from .mcfg import Rmcfg, enumerate_mcfg

    if isinstance(g, Rmcfg):
        if erase is not None:
            raise GrammarError("erasing a letter is supported for EDT0L grammars only")
        sample = enumerate_mcfg(g, max_len, max_depth)
        return {"".join(w) for w in sample.words}, sample.complete
    sample = enumerate_language(g, max_len, max_depth, uncounted=() if erase is None else (erase,))
    words = {"".join(str(x) for x in w if x != erase) for w in sample.words}
    return words, sample.complete


def compare_languages(a, b, max_len: int, max_depth: int, erase: str | None = None) -> Comparison:
    wa, ca = bounded_language(a, max_len, max_depth, erase)
    wb, cb = bounded_language(b, max_len, max_depth)
    key = lambda w: (len(w), w)
    return Comparison(wa == wb, max_len, max_depth, sorted(wa - wb, key=key), sorted(wb - wa, key=key), ca and cb)
