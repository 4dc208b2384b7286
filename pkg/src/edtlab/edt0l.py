"""EDT0L grammars: tables, derivations, bounded enumeration and LULT checks.

A grammar is anything implementing :class:`TableSystem`.  The engine only
asks a grammar for its tables restricted to the nonterminals present in a
sentential form, which lets constructed grammars with astronomically many
tables (see :mod:`edtlab.transforms`) be explored lazily.
:class:`Edt0lGrammar` is the explicit, serializable implementation.

Tables act on the right: ``I·(h1 h2)`` applies ``h1`` first.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

from .errors import BudgetExceeded, DerivationError, GrammarError, ParseError
from .words import format_symbols, tokenize

Form = tuple
Action = Mapping[Hashable, tuple]

DEFAULT_MAX_FORMS = 500_000


@dataclass(frozen=True)
class Nt:
    """Structured nonterminal used by constructed grammars."""

    kind: str
    args: tuple = ()

    def __str__(self) -> str:
        if not self.args:
            return self.kind
        return f"{self.kind}[{','.join(_fmt(a) for a in self.args)}]"


def _fmt(x) -> str:
    if isinstance(x, frozenset):
        return "{" + ",".join(sorted(_fmt(y) for y in x)) + "}"
    if isinstance(x, tuple):
        return "(" + ",".join(_fmt(y) for y in x) + ")"
    if x is None:
        return "-"
    if x == "":
        return "ε"
    return str(x)


def sort_key(x) -> str:
    return _fmt(x)


class TableSystem:
    """Interface shared by explicit and lazily constructed grammars."""

    terminals: frozenset
    start: Hashable
    dead: frozenset = frozenset()

    def is_nonterminal(self, symbol) -> bool:
        raise NotImplementedError

    def actions(self, symbols: frozenset) -> Iterator[tuple[Hashable, dict]]:
        """Every distinct table, restricted to ``symbols``, with a label."""
        raise NotImplementedError

    def nonterminal_universe(self) -> int | None:
        """Size of the full nonterminal alphabet, when finite and known."""
        return None

    index_certificate: int | None = None

    def nonterminals_of(self, form: Form) -> frozenset:
        return frozenset(s for s in form if self.is_nonterminal(s))


def apply_action(form: Form, action: Action) -> Form:
    out: list = []
    for s in form:
        img = action.get(s)
        if img is None:
            out.append(s)
        else:
            out.extend(img)
    return tuple(out)


@dataclass(frozen=True)
class SententialForm:
    word: tuple
    nonterminal_count: int

    def __str__(self) -> str:
        return format_symbols(self.word)


class Edt0lGrammar(TableSystem):
    """Explicit grammar with named tables.

    Tables map every nonterminal to a word; terminals are fixed.  A table
    given without an entry for some nonterminal fixes that nonterminal.
    """

    def __init__(
        self,
        terminals: Iterable[str],
        nonterminals: Iterable[str],
        start: str,
        tables: Mapping[str, Mapping[str, Sequence[str]]],
    ):
        self.terminals = frozenset(terminals)
        self.nonterminals = frozenset(nonterminals)
        self.start = start
        clash = self.terminals & self.nonterminals
        if clash:
            raise GrammarError(f"terminal and nonterminal alphabets overlap: {sorted(clash)}")
        if start not in self.nonterminals:
            raise GrammarError(f"start symbol {start!r} is not a nonterminal")
        alphabet = self.terminals | self.nonterminals
        built: dict[str, dict[str, tuple]] = {}
        for name, table in tables.items():
            row: dict[str, tuple] = {v: (v,) for v in self.nonterminals}
            for sym, img in table.items():
                img = tuple(img)
                bad = [x for x in img if x not in alphabet]
                if bad:
                    raise GrammarError(f"table {name!r} maps {sym!r} to unknown symbols {bad}")
                if sym in self.terminals:
                    if img != (sym,):
                        raise GrammarError(f"table {name!r} moves terminal {sym!r}")
                    continue
                if sym not in self.nonterminals:
                    raise GrammarError(f"table {name!r} maps unknown symbol {sym!r}")
                row[sym] = img
            built[name] = row
        self.tables = built

    def is_nonterminal(self, symbol) -> bool:
        return symbol in self.nonterminals

    def nonterminal_universe(self) -> int:
        return len(self.nonterminals)

    def actions(self, symbols: frozenset) -> Iterator[tuple[str, dict]]:
        seen = set()
        ordered = sorted(symbols, key=sort_key)
        for name in sorted(self.tables):
            row = self.tables[name]
            act = {v: row[v] for v in ordered}
            key = tuple(act[v] for v in ordered)
            if key in seen:
                continue
            seen.add(key)
            yield name, act

    def image(self, table: str, symbol: str) -> tuple:
        if table not in self.tables:
            raise GrammarError(f"unknown table {table!r}")
        if symbol in self.terminals:
            return (symbol,)
        return self.tables[table][symbol]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Edt0lGrammar)
            and self.terminals == other.terminals
            and self.nonterminals == other.nonterminals
            and self.start == other.start
            and self.tables == other.tables
        )

    def __repr__(self) -> str:
        return (
            f"Edt0lGrammar(|Σ|={len(self.terminals)}, |V|={len(self.nonterminals)}, "
            f"start={self.start!r}, tables={sorted(self.tables)})"
        )

    # serialization

    def to_dict(self) -> dict:
        spaced = any(len(s) != 1 for s in self.terminals | self.nonterminals)
        return {
            "terminals": sorted(self.terminals),
            "nonterminals": sorted(self.nonterminals),
            "start": self.start,
            "tables": {
                name: {v: format_symbols(img, spaced) for v, img in sorted(row.items())}
                for name, row in sorted(self.tables.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "Edt0lGrammar":
        try:
            terminals = list(data["terminals"])
            nonterminals = list(data["nonterminals"])
            start = data["start"]
            raw_tables = data["tables"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"grammar document lacks field {exc}") from exc
        alphabet = set(terminals) | set(nonterminals)
        tables = {
            name: {sym: tokenize(img, alphabet) for sym, img in row.items()}
            for name, row in raw_tables.items()
        }
        return cls(terminals, nonterminals, start, tables)

    @classmethod
    def from_json(cls, text: str) -> "Edt0lGrammar":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)


def apply_tables(g: Edt0lGrammar, seq: Sequence[str], form: Form | None = None) -> SententialForm:
    """Apply a sequence of table names, left to right, to ``form`` (default: the start symbol)."""
    word = (g.start,) if form is None else tuple(form)
    for name in seq:
        if name not in g.tables:
            raise GrammarError(f"unknown table {name!r}")
        word = apply_action(word, g.tables[name])
    return SententialForm(word, sum(1 for s in word if g.is_nonterminal(s)))


@dataclass
class LanguageSample:
    """Result of a bounded enumeration.

    ``complete`` is true when no sentential form was cut off by the depth
    budget, in which case ``words`` is exactly the language restricted to
    length ``max_len``.
    """

    words: tuple
    max_len: int
    max_depth: int
    complete: bool
    forms_visited: int

    def as_strings(self) -> list[str]:
        return ["".join(map(str, w)) for w in self.words]

    def __contains__(self, w) -> bool:
        return tuple(w) in set(self.words)


def _word_key(w: tuple):
    return (len(w), tuple(map(str, w)))


def enumerate_language(
    g: TableSystem, max_len: int, max_depth: int, max_forms: int = DEFAULT_MAX_FORMS,
    uncounted: Iterable = (),
) -> LanguageSample:
    """Breadth-first bounded enumeration of terminal words.

    Forms carrying more than ``max_len`` terminals are dropped, which is
    sound since tables never erase terminals.  Letters in ``uncounted`` do
    not count towards the length, for comparisons that erase them later.
    Forms containing an absorbing dead-end symbol are dropped as well.
    """
    uncounted = frozenset(uncounted)
    if max_len < 0 or max_depth < 0:
        raise ValueError("budgets must be nonnegative")
    start: Form = (g.start,)
    seen = {start}
    frontier = [start]
    words = set()
    complete = True
    dead = g.dead
    for depth in range(max_depth + 1):
        nxt = []
        for form in frontier:
            nts = g.nonterminals_of(form)
            if not nts:
                words.add(form)
                continue
            if depth == max_depth:
                complete = False
                continue
            for _, act in g.actions(nts):
                new = apply_action(form, act)
                if new in seen:
                    continue
                if dead and any(s in dead for s in new):
                    continue
                if sum(1 for s in new if not g.is_nonterminal(s) and s not in uncounted) > max_len:
                    continue
                seen.add(new)
                nxt.append(new)
                if len(seen) > max_forms:
                    raise BudgetExceeded(f"enumeration visited more than {max_forms} sentential forms", max_forms)
        frontier = nxt
        if not frontier:
            break
    return LanguageSample(tuple(sorted(words, key=_word_key)), max_len, max_depth, complete, len(seen))


def reachable_forms(
    g: TableSystem,
    max_depth: int,
    max_forms: int = DEFAULT_MAX_FORMS,
    max_terminals: int | None = None,
) -> Iterator[tuple[int, Form]]:
    """Every sentential form reachable within ``max_depth`` steps, with its depth."""
    start: Form = (g.start,)
    seen = {start}
    frontier = [start]
    yield 0, start
    for depth in range(1, max_depth + 1):
        nxt = []
        for form in frontier:
            nts = g.nonterminals_of(form)
            if not nts:
                continue
            for _, act in g.actions(nts):
                new = apply_action(form, act)
                if new in seen:
                    continue
                if max_terminals is not None and sum(1 for s in new if not g.is_nonterminal(s)) > max_terminals:
                    continue
                seen.add(new)
                if len(seen) > max_forms:
                    raise BudgetExceeded(f"exploration visited more than {max_forms} sentential forms", max_forms)
                nxt.append(new)
                yield depth, new
        frontier = nxt
        if not frontier:
            break


def observed_index(g: TableSystem, max_depth: int, max_forms: int = DEFAULT_MAX_FORMS,
                   max_terminals: int | None = None) -> int:
    """Largest nonterminal count among forms reachable within ``max_depth``; a lower bound on the index."""
    return max(
        sum(1 for s in form if g.is_nonterminal(s))
        for _, form in reachable_forms(g, max_depth, max_forms, max_terminals)
    )


def _is_subsequence(small: Sequence, big: Sequence) -> bool:
    it = iter(big)
    return all(any(x == y for y in it) for x in small)


def find_derivation(
    g: TableSystem, target: Sequence, max_depth: int, max_forms: int = DEFAULT_MAX_FORMS
) -> list | None:
    """Shortest table sequence deriving ``target``, by pruned breadth-first search."""
    target = tuple(target)
    start: Form = (g.start,)
    parent: dict[Form, tuple] = {start: (None, None)}
    frontier = [start]
    found = start if start == target else None
    depth = 0
    while found is None and frontier and depth < max_depth:
        depth += 1
        nxt = []
        for form in frontier:
            nts = g.nonterminals_of(form)
            if not nts:
                continue
            for label, act in g.actions(nts):
                new = apply_action(form, act)
                if new in parent:
                    continue
                if g.dead and any(s in g.dead for s in new):
                    continue
                terms = [s for s in new if not g.is_nonterminal(s)]
                if len(terms) > len(target) or not _is_subsequence(terms, target):
                    continue
                parent[new] = (form, label)
                if len(parent) > max_forms:
                    raise BudgetExceeded(f"derivation search visited more than {max_forms} forms", max_forms)
                if new == target:
                    found = new
                    break
                nxt.append(new)
            if found is not None:
                break
        frontier = nxt
    if found is None:
        return None
    labels = []
    node = found
    while parent[node][0] is not None:
        prev, label = parent[node]
        labels.append(label)
        node = prev
    return labels[::-1]


@dataclass(frozen=True)
class LultWitness:
    target: tuple
    tables: tuple


def check_lult_witness(g: Edt0lGrammar, w: LultWitness) -> bool:
    """Check the LULT disjunction at every split of the witness's table sequence.

    For each factorization ``α = α1 α2`` and each nonterminal ``v``, either
    ``v`` occurs at most once in ``I·α1`` or ``v·α2`` has length at most 1.
    """
    seq = list(w.tables)
    final = apply_tables(g, seq)
    if final.word != tuple(w.target):
        raise DerivationError(
            f"witness derives {format_symbols(final.word)!r}, not {format_symbols(w.target)!r}"
        )
    nts = sorted(g.nonterminals)
    # future[i][v] = |v·(h_i ... h_last)|
    future = [dict.fromkeys(nts, 1)]
    for name in reversed(seq):
        nxt = future[-1]
        row = g.tables[name]
        future.append({v: sum(nxt.get(x, 1) for x in row[v]) for v in nts})
    future.reverse()
    form: tuple = (g.start,)
    for i in range(len(seq) + 1):
        for v in nts:
            if form.count(v) > 1 and future[i][v] > 1:
                return False
        if i < len(seq):
            form = apply_action(form, g.tables[seq[i]])
    return True


@dataclass(frozen=True)
class Dfa:
    """Total deterministic finite automaton."""

    states: frozenset
    alphabet: frozenset
    initial: Hashable
    accepting: frozenset
    delta: Mapping = field(hash=False)

    def __post_init__(self) -> None:
        if self.initial not in self.states:
            raise GrammarError("initial state not among states")
        if not self.accepting <= self.states:
            raise GrammarError("accepting states not among states")
        for q in self.states:
            for a in self.alphabet:
                if self.delta.get((q, a)) not in self.states:
                    raise GrammarError(f"transition function undefined at ({q!r}, {a!r})")

    @classmethod
    def build(cls, states, alphabet, initial, accepting, delta) -> "Dfa":
        return cls(frozenset(states), frozenset(alphabet), initial, frozenset(accepting), dict(delta))

    def accepts(self, word: Iterable) -> bool:
        q = self.initial
        for a in word:
            if a not in self.alphabet:
                return False
            q = self.delta[(q, a)]
        return q in self.accepting


def regular_to_edt0l(dfa: Dfa) -> Edt0lGrammar:
    """Index-1 grammar whose single nonterminal tracks the automaton state."""
    name = {q: f"Q{q}" for q in dfa.states}
    if len(set(name.values())) != len(name) or set(name.values()) & set(map(str, dfa.alphabet)):
        name = {q: f"Q<{i}>" for i, q in enumerate(sorted(dfa.states, key=str))}
    tables: dict[str, dict[str, tuple]] = {}
    for a in sorted(dfa.alphabet, key=str):
        tables[f"read_{a}"] = {name[q]: (a, name[dfa.delta[(q, a)]]) for q in dfa.states}
    for f in sorted(dfa.accepting, key=str):
        tables[f"finish_{f}"] = {name[f]: ()}
    g = Edt0lGrammar(dfa.alphabet, name.values(), name[dfa.initial], tables)
    g.index_certificate = 1
    return g
