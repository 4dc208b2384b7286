"""Restricted (non-branching, non-permuting, non-erasing) multiple context-free grammars.

A rule is ``head(u_1, ..., u_m) <- body(x_1, ..., x_n)``, or an initiating
rule with no body.  Components are tuples of terminals and :class:`Var`
objects; ``Var(1)`` is ``x_1``.  Validation rejects rules whose variables
are repeated, dropped or reordered, so every :class:`Rmcfg` value is
automatically restricted.

Derivations run in generation order: an initiating rule first, then
propagating rules, ending at the start nonterminal.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations_with_replacement
from typing import Iterable, Iterator, Mapping, Sequence

from .edt0l import TableSystem, apply_action
from .errors import BudgetExceeded, DerivationError, EdtlabError, GrammarError, ParseError
from .words import format_symbols

DEFAULT_MAX_CONFIGS = 500_000


class IndexViolation(EdtlabError):
    """A reachable configuration needs more nonterminals than the asserted index."""


@dataclass(frozen=True, order=True)
class Var:
    index: int

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("variables are numbered from 1")

    def __str__(self) -> str:
        return f"${self.index}"


Component = tuple


def _vars(comps: Sequence[Component]) -> list[int]:
    return [s.index for c in comps for s in c if isinstance(s, Var)]


@dataclass(frozen=True)
class Rule:
    head: str
    components: tuple
    body: str | None = None

    def __post_init__(self) -> None:
        comps = tuple(tuple(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise GrammarError(f"rule for {self.head!r} has no components")
        vs = _vars(comps)
        if self.body is None:
            if vs:
                raise GrammarError(f"initiating rule for {self.head!r} uses variables")
            return
        if len(vs) != len(set(vs)):
            raise GrammarError(f"rule {self} uses a variable more than once")
        if vs != list(range(1, len(vs) + 1)):
            raise GrammarError(f"rule {self} drops or reorders variables")

    @property
    def initiating(self) -> bool:
        return self.body is None

    @property
    def arity(self) -> int:
        return len(self.components)

    @property
    def body_rank(self) -> int:
        """Rank of the body; non-erasing rules mention every body variable."""
        return len(_vars(self.components))

    def apply(self, values: Sequence[tuple] = ()) -> tuple:
        out = []
        for comp in self.components:
            word: list = []
            for s in comp:
                if isinstance(s, Var):
                    word.extend(values[s.index - 1])
                else:
                    word.append(s)
            out.append(tuple(word))
        return tuple(out)

    def is_identity(self) -> bool:
        return self.body is not None and self.components == tuple((Var(i),) for i in range(1, self.arity + 1))

    def __str__(self) -> str:
        comps = ", ".join(_comp_str(c) for c in self.components)
        if self.body is None:
            return f"{self.head}({comps}) <-"
        xs = ", ".join(f"${i}" for i in range(1, self.body_rank + 1))
        return f"{self.head}({comps}) <- {self.body}({xs})"


def _comp_str(comp: Component) -> str:
    if not comp:
        return "ε"
    spaced = any(not isinstance(s, Var) and len(s) != 1 for s in comp)
    return format_symbols([str(s) for s in comp], spaced or None)


_TOKEN = re.compile(r"\$(\d+)|(\S)")


def parse_component(text: str) -> Component:
    text = text.strip()
    if text in ("", "ε"):
        return ()
    if any(ch.isspace() for ch in text):
        toks = text.split()
        return tuple(Var(int(t[1:])) if re.fullmatch(r"\$\d+", t) else t for t in toks)
    out: list = []
    for m in _TOKEN.finditer(text):
        out.append(Var(int(m.group(1))) if m.group(1) else m.group(2))
    return tuple(out)


class RuleKind(str, Enum):
    INITIATING_EMPTY = "InitiatingEmpty"
    INSERT_LEFT = "InsertLeft"
    INSERT_RIGHT = "InsertRight"
    MERGE_LEFT = "MergeLeft"
    MERGE_RIGHT = "MergeRight"
    ACCEPTING = "Accepting"
    GENERAL = "General"


def classify_rule(rule: Rule, start: str | None = None) -> RuleKind:
    """Syntactic kind of a rule.  ``start`` enables the accepting shape."""
    comps = rule.components
    if rule.initiating:
        return RuleKind.INITIATING_EMPTY if all(not c for c in comps) else RuleKind.GENERAL
    k = rule.body_rank
    xs = tuple(Var(i) for i in range(1, k + 1))
    if start is not None and rule.head == start and comps == (xs,):
        return RuleKind.ACCEPTING
    if len(comps) != k:
        return RuleKind.GENERAL
    diff = [i for i in range(k) if comps[i] != (xs[i],)]
    if len(diff) == 1:
        i = diff[0]
        c = comps[i]
        if len(c) == 2 and c[1] == xs[i] and not isinstance(c[0], Var):
            return RuleKind.INSERT_LEFT
        if len(c) == 2 and c[0] == xs[i] and not isinstance(c[1], Var):
            return RuleKind.INSERT_RIGHT
        return RuleKind.GENERAL
    if len(diff) == 2 and diff[1] == diff[0] + 1:
        i = diff[0]
        joined = (xs[i], xs[i + 1])
        if comps[i] == joined and comps[i + 1] == ():
            return RuleKind.MERGE_LEFT
        if comps[i] == () and comps[i + 1] == joined:
            return RuleKind.MERGE_RIGHT
    return RuleKind.GENERAL


class Rmcfg:
    def __init__(self, terminals: Iterable[str], ranks: Mapping[str, int], start: str, rules: Iterable[Rule]):
        self.terminals = frozenset(terminals)
        self.ranks = dict(ranks)
        self.start = start
        self.rules = tuple(dict.fromkeys(rules))
        if start not in self.ranks:
            raise GrammarError(f"start nonterminal {start!r} is undeclared")
        if self.ranks[start] != 1:
            raise GrammarError("the start nonterminal must have rank 1")
        clash = self.terminals & set(self.ranks)
        if clash:
            raise GrammarError(f"names used as both terminal and nonterminal: {sorted(clash)}")
        for name, r in self.ranks.items():
            if not isinstance(r, int) or r < 1:
                raise GrammarError(f"rank of {name!r} must be a positive integer")
        for rule in self.rules:
            self._check(rule)
        self._by_body: dict = defaultdict(list)
        for rule in self.rules:
            self._by_body[rule.body].append(rule)

    def _check(self, rule: Rule) -> None:
        if rule.head not in self.ranks:
            raise GrammarError(f"rule {rule} has unknown head")
        if rule.arity != self.ranks[rule.head]:
            raise GrammarError(f"rule {rule}: head {rule.head!r} has rank {self.ranks[rule.head]}")
        if rule.body is not None:
            if rule.body not in self.ranks:
                raise GrammarError(f"rule {rule} has unknown body")
            if rule.body_rank != self.ranks[rule.body]:
                raise GrammarError(f"rule {rule}: body {rule.body!r} has rank {self.ranks[rule.body]}")
        for comp in rule.components:
            for s in comp:
                if not isinstance(s, Var) and s not in self.terminals:
                    raise GrammarError(f"rule {rule} uses unknown terminal {s!r}")

    def rules_from(self, body: str | None) -> list[Rule]:
        return self._by_body.get(body, [])

    @property
    def initiating(self) -> list[Rule]:
        return self.rules_from(None)

    def kinds(self) -> list[RuleKind]:
        return [classify_rule(r, self.start) for r in self.rules]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Rmcfg)
            and self.terminals == other.terminals
            and self.ranks == other.ranks
            and self.start == other.start
            and set(self.rules) == set(other.rules)
        )

    def __repr__(self) -> str:
        return f"Rmcfg(|Q|={len(self.ranks)}, rules={len(self.rules)}, start={self.start!r})"

    # serialization

    def to_dict(self) -> dict:
        rules = []
        for r in self.rules:
            entry = {"head": r.head, "components": [_comp_str(c) for c in r.components]}
            if r.body is not None:
                entry["body"] = r.body
            rules.append(entry)
        return {
            "terminals": sorted(self.terminals),
            "nonterminals": dict(sorted(self.ranks.items())),
            "start": self.start,
            "rules": rules,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "Rmcfg":
        try:
            ranks = data["nonterminals"]
            start = data["start"]
            raw = data["rules"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"grammar document lacks field {exc}") from exc
        rules = []
        for entry in raw:
            try:
                comps = [parse_component(c) for c in entry["components"]]
                rules.append(Rule(entry["head"], tuple(comps), entry.get("body")))
            except (KeyError, TypeError) as exc:
                raise ParseError(f"malformed rule {entry!r}") from exc
        terminals = data.get("terminals")
        if terminals is None:
            terminals = sorted({s for r in rules for c in r.components for s in c if not isinstance(s, Var)})
        return cls(terminals, ranks, start, rules)

    @classmethod
    def from_json(cls, text: str) -> "Rmcfg":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc


# Derivations.

Config = tuple  # (nonterminal, tuple of component words)


@dataclass(frozen=True)
class DerivationTrace:
    """Configurations in generation order, each with the rule that produced it."""

    steps: tuple  # of (Rule, Config)

    @property
    def rules(self) -> tuple:
        return tuple(r for r, _ in self.steps)

    @property
    def configs(self) -> tuple:
        return tuple(c for _, c in self.steps)


def trace_from_rules(g: Rmcfg, rules: Sequence[Rule]) -> DerivationTrace:
    """Compute the configurations produced by a rule sequence."""
    steps = []
    cur: Config | None = None
    for i, r in enumerate(rules):
        if i == 0:
            if not r.initiating:
                raise DerivationError("a derivation must start with an initiating rule")
            cur = (r.head, r.apply())
        else:
            if r.initiating:
                raise DerivationError(f"step {i} uses an initiating rule")
            if r.body != cur[0]:
                raise DerivationError(f"step {i}: rule {r} expects {r.body!r}, configuration is {cur[0]!r}")
            if len(cur[1]) != r.body_rank:
                raise DerivationError(f"step {i}: rank mismatch for {r}")
            cur = (r.head, r.apply(cur[1]))
        steps.append((r, cur))
    return DerivationTrace(tuple(steps))


def derive(g: Rmcfg, trace: DerivationTrace | Sequence[Rule]) -> tuple:
    """Validate a derivation and return its word; raises on any mismatch."""
    if not isinstance(trace, DerivationTrace):
        trace = trace_from_rules(g, list(trace))
    if not trace.steps:
        raise DerivationError("empty derivation")
    known = set(g.rules)
    recomputed = trace_from_rules(g, trace.rules)
    for i, ((rule, cfg), (_, want)) in enumerate(zip(trace.steps, recomputed.steps)):
        if rule not in known:
            raise DerivationError(f"step {i}: rule {rule} is not in the grammar")
        if g.ranks.get(cfg[0]) != len(cfg[1]):
            raise DerivationError(f"step {i}: configuration {cfg[0]!r} has the wrong rank")
        if tuple(map(tuple, cfg[1])) != want[1] or cfg[0] != want[0]:
            raise DerivationError(f"step {i}: configuration does not follow from the rule")
    head, comps = trace.steps[-1][1]
    if head != g.start:
        raise DerivationError(f"derivation ends at {head!r}, not the start nonterminal {g.start!r}")
    return comps[0]


@dataclass
class McfgSample:
    words: tuple
    max_len: int
    max_steps: int
    complete: bool
    configs: int

    def as_strings(self) -> list[str]:
        return ["".join(w) for w in self.words]


@dataclass
class ConfigGraph:
    """Configurations reachable within budget and the rule edges between them."""

    nodes: dict  # config -> depth
    edges: list  # (parent or None, rule, child)
    complete: bool

    def accepted(self, start: str) -> list:
        return [c for c in self.nodes if c[0] == start]

    def useful(self, start: str) -> set:
        """Configurations lying on some derivation that reaches the start nonterminal."""
        back: dict = defaultdict(list)
        for parent, _, child in self.edges:
            if parent is not None:
                back[child].append(parent)
        seen = set(self.accepted(start))
        queue = list(seen)
        while queue:
            c = queue.pop()
            for p in back[c]:
                if p not in seen:
                    seen.add(p)
                    queue.append(p)
        return seen


def explore(g: Rmcfg, max_len: int, max_steps: int, max_configs: int = DEFAULT_MAX_CONFIGS) -> ConfigGraph:
    """Breadth-first closure over configurations.

    Configurations longer than ``max_len`` are dropped; rules never shorten
    a configuration, so nothing within the length budget is lost.
    """
    if max_len < 0 or max_steps < 0:
        raise ValueError("budgets must be nonnegative")
    nodes: dict = {}
    edges: list = []
    frontier = []
    for r in g.initiating:
        cfg = (r.head, r.apply())
        if sum(map(len, cfg[1])) > max_len:
            continue
        edges.append((None, r, cfg))
        if cfg not in nodes:
            nodes[cfg] = 1
            frontier.append(cfg)
    complete = True
    depth = 1
    while frontier:
        if depth >= max_steps:
            if any(g.rules_from(c[0]) for c in frontier):
                complete = False
            break
        depth += 1
        nxt = []
        for cfg in frontier:
            for r in g.rules_from(cfg[0]):
                new = (r.head, r.apply(cfg[1]))
                if sum(map(len, new[1])) > max_len:
                    continue
                edges.append((cfg, r, new))
                if new not in nodes:
                    nodes[new] = depth
                    nxt.append(new)
                    if len(nodes) > max_configs:
                        raise BudgetExceeded(f"explored more than {max_configs} configurations", max_configs)
        frontier = nxt
    return ConfigGraph(nodes, edges, complete)


def enumerate_mcfg(g: Rmcfg, max_len: int, max_steps: int, max_configs: int = DEFAULT_MAX_CONFIGS) -> McfgSample:
    graph = explore(g, max_len, max_steps, max_configs)
    words = sorted({c[1][0] for c in graph.accepted(g.start)}, key=lambda w: (len(w), w))
    return McfgSample(tuple(words), max_len, max_steps, graph.complete, len(graph.nodes))


def find_trace(g: Rmcfg, word: Sequence[str], max_steps: int = 64) -> DerivationTrace | None:
    word = tuple(word)
    graph = explore(g, len(word), max_steps)
    parent = {}
    for p, r, c in graph.edges:
        if c not in parent:
            parent[c] = (p, r)
    target = (g.start, (word,))
    if target not in parent:
        return None
    rules = []
    node = target
    while node is not None:
        p, r = parent[node]
        rules.append(r)
        node = p
    return trace_from_rules(g, rules[::-1])


# From finite-index EDT0L.


def _config_name(vs: tuple) -> str:
    return "H_ε" if not vs else "H_⟨" + "|".join(map(str, vs)) + "⟩"


def from_finite_index_edt0l(
    g: TableSystem, index: int | None = None, max_nonterminals: int = 50_000
) -> Rmcfg:
    """Simulate a finite-index grammar with an R-MCFG.

    ``H_⟨v1|...|vj⟩(u0, ..., uj)`` stands for the sentential form
    ``u0 v1 u1 ... vj uj``.  Only configurations reachable from ``H_⟨I⟩``
    are built.  Images through dead-end symbols and tables that fix a
    whole configuration are omitted; neither contributes a word.
    """
    n = index if index is not None else g.index_certificate
    if n is None:
        raise GrammarError("an index bound is required: pass one or use a grammar carrying a certificate")
    if n < 1:
        raise GrammarError("the index must be positive")
    start_seq = (g.start,)
    ranks = {"H_ε": 1, _config_name(start_seq): 2}
    rules = [Rule(_config_name(start_seq), ((), ()))]
    seen = {start_seq}
    queue = deque([start_seq])
    while queue:
        vs = queue.popleft()
        name = _config_name(vs)
        form: list = [Var(1)]
        for i, v in enumerate(vs):
            form += [v, Var(i + 2)]
        form_t = tuple(form)
        for _, act in g.actions(frozenset(vs)):
            img = apply_action(form_t, act)
            if img == form_t:
                continue
            if g.dead and any(s in g.dead for s in img if not isinstance(s, Var)):
                continue
            nts = tuple(s for s in img if not isinstance(s, Var) and g.is_nonterminal(s))
            if len(nts) > n:
                raise IndexViolation(
                    f"a reachable form {' '.join(map(str, vs))} becomes one with {len(nts)} "
                    f"nonterminals, more than the asserted index {n}"
                )
            comps: list[list] = [[]]
            for s in img:
                if not isinstance(s, Var) and g.is_nonterminal(s):
                    comps.append([])
                else:
                    comps[-1].append(s)
            if nts not in seen:
                seen.add(nts)
                if len(seen) > max_nonterminals:
                    raise BudgetExceeded(f"more than {max_nonterminals} configuration nonterminals", max_nonterminals)
                queue.append(nts)
                ranks[_config_name(nts)] = len(nts) + 1
            rules.append(Rule(_config_name(nts), tuple(map(tuple, comps)), name))
    out = Rmcfg(g.terminals, ranks, "H_ε", rules)
    return out


# Normal form.


@dataclass
class NormalFormGrammar:
    grammar: Rmcfg
    k: int
    kinds: dict
    report: dict = field(default_factory=dict)

    @property
    def start(self) -> str:
        return self.grammar.start

    def kind_counts(self) -> dict:
        out: dict = defaultdict(int)
        for kind in self.kinds.values():
            out[kind.value] += 1
        return dict(sorted(out.items()))


def _fresh(name: str, taken: set) -> str:
    while name in taken:
        name += "′"
    taken.add(name)
    return name


def _uniform_rank(g: Rmcfg) -> int | None:
    ranks = {r for n, r in g.ranks.items() if n != g.start}
    if len(ranks) != 1:
        return None
    (k,) = ranks
    return k if k >= 2 else None


def _mask_step(kind: RuleKind, rule: Rule, mask: tuple) -> tuple:
    """Which components can be nonempty after applying ``rule``."""
    out = []
    for comp in rule.components:
        filled = any(not isinstance(s, Var) for s in comp)
        out.append(filled or any(mask[s.index - 1] for s in comp if isinstance(s, Var)))
    return tuple(out)


def is_normal_form(g: Rmcfg) -> bool:
    """Syntactic normal-form check plus the final-configuration shape.

    The shape part tracks, per nonterminal, which components can be
    nonempty; every accepting rule must read a configuration whose
    components after the first are always empty.
    """
    k = _uniform_rank(g)
    if k is None:
        return False
    kinds = {r: classify_rule(r, g.start) for r in g.rules}
    for r, kind in kinds.items():
        if kind is RuleKind.GENERAL:
            return False
        if r.head == g.start and kind is not RuleKind.ACCEPTING:
            return False
        if kind is RuleKind.INITIATING_EMPTY and r.arity != k:
            return False
        if r.body == g.start:
            return False
    masks: dict = defaultdict(set)
    queue = []
    for r in g.initiating:
        masks[r.head].add((False,) * k)
        queue.append((r.head, (False,) * k))
    while queue:
        name, mask = queue.pop()
        for r in g.rules_from(name):
            if kinds[r] is RuleKind.ACCEPTING:
                if any(mask[1:]):
                    return False
                continue
            new = _mask_step(kinds[r], r, mask)
            if new not in masks[r.head]:
                masks[r.head].add(new)
                queue.append((r.head, new))
    return True


def _merge_vectors(k: int, target: tuple) -> list[tuple[tuple, RuleKind, int]]:
    """Shortest merge sequence from ``(x1, ..., xk)`` to ``target``.

    Vectors are tuples of tuples of variable indices.  Returns the list of
    (vector after the step, merge kind, i) with 1-based ``i``.
    """
    src = tuple((i,) for i in range(1, k + 1))
    parent = {src: None}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        if v == target:
            break
        for i in range(k - 1):
            joined = v[i] + v[i + 1]
            for kind, new in (
                (RuleKind.MERGE_LEFT, v[:i] + (joined, ()) + v[i + 2 :]),
                (RuleKind.MERGE_RIGHT, v[:i] + ((), joined) + v[i + 2 :]),
            ):
                if new not in parent:
                    parent[new] = (v, kind, i + 1)
                    queue.append(new)
    if target not in parent:
        raise GrammarError(f"vector {target} is unreachable by merges")
    path = []
    node = target
    while parent[node] is not None:
        prev, kind, i = parent[node]
        path.append((node, kind, i))
        node = prev
    return path[::-1]


def _all_vectors(k: int) -> list[tuple]:
    """Every split of x1..xk into k consecutive, possibly empty groups."""
    out = []
    for cuts in combinations_with_replacement(range(k + 1), k - 1):
        bounds = (0,) + cuts + (k,)
        out.append(tuple(tuple(range(bounds[j] + 1, bounds[j + 1] + 1)) for j in range(k)))
    return out


def _vec_str(v: tuple) -> str:
    return "(" + ",".join("".join(f"x{i}" for i in grp) or "ε" for grp in v) + ")"


def _merge_rule(head: str, body: str, k: int, kind: RuleKind, i: int) -> Rule:
    xs = [(Var(j),) for j in range(1, k + 1)]
    joined = (Var(i), Var(i + 1))
    if kind is RuleKind.MERGE_LEFT:
        comps = xs[: i - 1] + [joined, ()] + xs[i + 1 :]
    else:
        comps = xs[: i - 1] + [(), joined] + xs[i + 1 :]
    return Rule(head, tuple(comps), body)


def _identity(head: str, body: str, k: int) -> Rule:
    return Rule(head, tuple((Var(j),) for j in range(1, k + 1)), body)


def normalize(g: Rmcfg, eager_vectors: bool = False) -> NormalFormGrammar:
    """Compile an R-MCFG into normal form.

    Step 1 pads every nonterminal to rank ``k`` and adds the fresh start
    and all-empty initiator.  Step 2 breaks each rule into right
    insertions, merges and left insertions chained through identity rules.
    Step 3 removes the identity rules.  Grammars already in normal form
    are returned unchanged.
    """
    if is_normal_form(g):
        kinds = {r: classify_rule(r, g.start) for r in g.rules}
        k = _uniform_rank(g)
        return NormalFormGrammar(g, k, kinds, {"already_normal": True})
    k = max([2] + [r.arity for r in g.rules] + [r.body_rank for r in g.rules if r.body])
    report: dict = {"k": k, "already_normal": False, "vectors": "eager" if eager_vectors else "on-demand"}

    # Step 1.
    taken = set(g.ranks) | set(g.terminals)
    copy: dict = {}

    def rank_copy(a: str, i: int) -> str:
        if (a, i) not in copy:
            copy[(a, i)] = _fresh(f"{a}_{i}", taken)
        return copy[(a, i)]

    s_new = _fresh("S′", taken)
    f_new = _fresh("F′", taken)
    xs = tuple((Var(j),) for j in range(1, k + 1))
    step1 = [Rule(s_new, (tuple(Var(j) for j in range(1, k + 1)),), rank_copy(g.start, 1)),
             Rule(f_new, ((),) * k)]
    for r in g.rules:
        if r.initiating:
            ell = r.arity
            comps = [r.components[j] + (Var(j + 1),) for j in range(ell)] + list(xs[ell:])
            step1.append(Rule(rank_copy(r.head, ell), tuple(comps), f_new))
        else:
            n, m = r.arity, r.body_rank
            comps = list(r.components[:-1]) + [r.components[-1] + tuple(Var(j) for j in range(m + 1, k + 1))]
            comps += [()] * (k - n)
            step1.append(Rule(rank_copy(r.head, n), tuple(comps), rank_copy(r.body, m)))
    report["step1_rules"] = len(step1)

    # Step 2.
    rules: list[Rule] = []
    ranks = {s_new: 1}
    ranks.update({name: k for name in copy.values()})
    ranks[f_new] = k
    vectors_used = 0
    for p, r in enumerate(step1):
        if r.head == s_new or r.initiating:
            rules.append(r)
            continue
        t: list[tuple] = []
        u: dict[int, tuple] = {}
        Z: list[tuple] = []
        for comp in r.components:
            lead: list = []
            grp: list[int] = []
            cur = None
            for s in comp:
                if isinstance(s, Var):
                    cur = s.index
                    grp.append(cur)
                    u[cur] = ()
                elif cur is None:
                    lead.append(s)
                else:
                    u[cur] = u[cur] + (s,)
            t.append(tuple(lead))
            Z.append(tuple(grp))
        Z_t = tuple(Z)

        def name(kind: str, *args) -> str:
            n = _fresh(f"{kind}[{p}," + ",".join(map(str, args)) + "]", taken)
            ranks[n] = k
            return n

        prev = name("C", 1, 0)
        rules.append(_identity(prev, r.body, k))
        for n_ in range(1, k + 1):
            word = u.get(n_, ())
            for m_ in range(len(word)):
                cur = name("C", n_, m_ + 1)
                comps = list(xs)
                comps[n_ - 1] = (Var(n_), word[m_])
                rules.append(Rule(cur, tuple(comps), prev))
                prev = cur
            if n_ < k:
                cur = name("C", n_ + 1, 0)
                rules.append(_identity(cur, prev, k))
                prev = cur
        src = tuple((j,) for j in range(1, k + 1))
        d_names: dict = {}
        if eager_vectors:
            for v in _all_vectors(k):
                d_names[v] = name("D", _vec_str(v))
            for v in d_names:
                for i in range(1, k):
                    joined = v[i - 1] + v[i]
                    for kind, new in (
                        (RuleKind.MERGE_LEFT, v[: i - 1] + (joined, ()) + v[i + 1 :]),
                        (RuleKind.MERGE_RIGHT, v[: i - 1] + ((), joined) + v[i + 1 :]),
                    ):
                        rules.append(_merge_rule(d_names[new], d_names[v], k, kind, i))
            rules.append(_identity(d_names[src], prev, k))
            prev = d_names[Z_t]
            vectors_used += len(d_names)
        else:
            d_names[src] = name("D", _vec_str(src))
            rules.append(_identity(d_names[src], prev, k))
            prev = d_names[src]
            for vec, kind, i in _merge_vectors(k, Z_t):
                cur = name("D", _vec_str(vec))
                rules.append(_merge_rule(cur, prev, k, kind, i))
                prev = cur
            vectors_used += 1 + len(_merge_vectors(k, Z_t))
        cur = name("G", 1, len(t[0]))
        rules.append(_identity(cur, prev, k))
        prev = cur
        for n_ in range(1, k + 1):
            for m_ in range(len(t[n_ - 1]), 0, -1):
                cur = name("G", n_, m_ - 1)
                comps = list(xs)
                comps[n_ - 1] = (t[n_ - 1][m_ - 1], Var(n_))
                rules.append(Rule(cur, tuple(comps), prev))
                prev = cur
            if n_ < k:
                cur = name("G", n_ + 1, len(t[n_]))
                rules.append(_identity(cur, prev, k))
                prev = cur
        rules.append(_identity(r.head, prev, k))
    report["vectors_generated"] = vectors_used
    report["step2_rules"] = len(rules)
    report["step2_identity_rules"] = sum(1 for r in rules if r.is_identity())

    # Step 3.
    rules, passes = _remove_identities(rules, s_new)
    report["step3_identity_counts"] = passes
    rules = _prune(rules, s_new)
    used = {s_new} | {r.head for r in rules} | {r.body for r in rules if r.body}
    out = Rmcfg(g.terminals, {n: ranks[n] for n in used}, s_new, rules)
    kinds = {r: classify_rule(r, s_new) for r in out.rules}
    report["rules"] = len(out.rules)
    report["nonterminals"] = len(out.ranks)
    return NormalFormGrammar(out, k, kinds, report)


def _remove_identities(rules: list[Rule], start: str) -> tuple[list[Rule], list[int]]:
    """Drop every identity rule ``H(x) <- K(x)``.

    A rule is contracted by renaming when that cannot add derivations:
    either ``K`` has no other consumer or ``H`` has no other producer.
    Whatever remains is removed by unit closure, copying each rule out of
    ``H`` onto every ``K`` with ``K =>* H``.  The returned counts are the
    identity rules left after each sweep.
    """
    rules = list(dict.fromkeys(rules))
    parent: dict = {}

    def find(x):
        while x in parent:
            x = parent[x]
        return x

    prod: dict = defaultdict(int)
    cons: dict = defaultdict(int)
    for r in rules:
        prod[r.head] += 1
        if r.body is not None:
            cons[r.body] += 1
    pending = [r for r in rules if r.is_identity()]
    counts = [len(pending)]
    removed: set = set()
    progress = True
    while progress and pending:
        progress = False
        keep = []
        for r in pending:
            h, kk = find(r.head), find(r.body)
            if h == kk:
                prod[h] -= 1
                cons[kk] -= 1
            elif cons[kk] == 1:
                parent[kk] = h
                prod[h] += prod[kk] - 1
            elif prod[h] == 1:
                parent[h] = kk
                cons[kk] += cons[h] - 1
            else:
                keep.append(r)
                continue
            removed.add(r)
            progress = True
        pending = keep
        if progress:
            counts.append(len(pending))
    rules = [Rule(find(q.head), q.components, None if q.body is None else find(q.body))
             for q in rules if q not in removed]
    rules = [q for q in dict.fromkeys(rules) if not (q.is_identity() and q.head == q.body)]
    idents = [r for r in rules if r.is_identity()]
    if idents:
        up: dict = defaultdict(set)  # K -> every H with K =>* H through identities
        for r in idents:
            up[r.body].add(r.head)
        changed = True
        while changed:
            changed = False
            for kk in list(up):
                for h in list(up[kk]):
                    extra = up.get(h, set()) - up[kk]
                    if extra:
                        up[kk] |= extra
                        changed = True
        rest = [r for r in rules if not r.is_identity()]
        closure = list(rest)
        for kk, targets in up.items():
            for h in targets:
                for r in rest:
                    if r.body == h:
                        closure.append(Rule(r.head, r.components, kk))
        rules = list(dict.fromkeys(closure))
        counts.append(0)
    return rules, counts


def _prune(rules: list[Rule], start: str) -> list[Rule]:
    """Keep rules whose head is derivable and whose head can reach ``start``."""
    live = set()
    changed = True
    while changed:
        changed = False
        for r in rules:
            if r.head not in live and (r.body is None or r.body in live):
                live.add(r.head)
                changed = True
    useful = {start}
    changed = True
    while changed:
        changed = False
        for r in rules:
            if r.body is not None and r.head in useful and r.body not in useful:
                useful.add(r.body)
                changed = True
    return [r for r in rules if r.head in live and r.head in useful and (r.body is None or r.body in live)]


def derivation_shape_ok(nf: NormalFormGrammar, trace: DerivationTrace) -> bool:
    """All-empty first configuration and ``S(w) <- H(w, ε, ..., ε)`` at the end."""
    cfgs = trace.configs
    if not cfgs or any(cfgs[0][1]):
        return False
    if len(cfgs[0][1]) != nf.k:
        return False
    if cfgs[-1][0] != nf.start:
        return False
    if len(cfgs) < 2:
        return False
    pen = cfgs[-2][1]
    return len(pen) == nf.k and not any(pen[1:]) and pen[0] == cfgs[-1][1][0]


def shape_violations(nf: NormalFormGrammar, max_len: int, max_steps: int) -> int:
    """Count explored edges breaking the normal-form derivation shape."""
    graph = explore(nf.grammar, max_len, max_steps)
    bad = 0
    for parent, rule, child in graph.edges:
        if parent is None and any(child[1]):
            bad += 1
        if child[0] == nf.start and parent is not None and any(parent[1][1:]):
            bad += 1
    return bad


# Weights.


@dataclass
class WeightProfile:
    weights: dict  # nonterminal -> sorted list of observed tuple weights
    C: int
    flagged: list
    complete: bool

    def to_dict(self) -> dict:
        return {"weights": self.weights, "C": self.C, "non_singleton": self.flagged, "complete": self.complete}


def weight_profile(g: Rmcfg, max_len: int, max_steps: int) -> WeightProfile:
    bad = g.terminals - {"a", "b"}
    if bad:
        raise GrammarError(f"weights need terminals within {{a, b}}, found {sorted(bad)}")
    graph = explore(g, max_len, max_steps)
    seen: dict = defaultdict(set)
    for cfg in graph.useful(g.start):
        word = [x for comp in cfg[1] for x in comp]
        seen[cfg[0]].add(word.count("a") - word.count("b"))
    weights = {n: sorted(v) for n, v in sorted(seen.items())}
    C = max((abs(w) for v in weights.values() for w in v), default=0)
    flagged = [n for n, v in weights.items() if len(v) > 1]
    return WeightProfile(weights, C, flagged, graph.complete)
