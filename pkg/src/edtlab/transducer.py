"""Deterministic string transducers and the antichain constructions.

A transducer reads one input letter per step, emits a (possibly empty)
output word and moves to the next state.  The run accepts when it ends in
an accepting state.  Words are tuples of symbols; plain strings are
accepted as input and split into characters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import GrammarError, ParseError
from .words import format_symbols, tokenize


def _as_word(w) -> tuple:
    return tuple(w)


@dataclass(frozen=True)
class Transducer:
    input_alphabet: frozenset
    output_alphabet: frozenset
    states: frozenset
    accepting: frozenset
    initial: Hashable
    delta: Mapping = field(hash=False, compare=False)

    def __post_init__(self) -> None:
        if self.initial not in self.states:
            raise GrammarError(f"initial state {self.initial!r} is not a state")
        if not self.accepting <= self.states:
            raise GrammarError("accepting states must be states")
        for g in self.input_alphabet:
            for q in self.states:
                entry = self.delta.get((g, q))
                if entry is None:
                    raise GrammarError(f"transition undefined at ({g!r}, {q!r})")
                out, nxt = entry
                if nxt not in self.states:
                    raise GrammarError(f"transition ({g!r}, {q!r}) targets unknown state {nxt!r}")
                bad = [x for x in out if x not in self.output_alphabet]
                if bad:
                    raise GrammarError(f"transition ({g!r}, {q!r}) emits unknown letters {bad}")
        extra = [key for key in self.delta if key[0] not in self.input_alphabet or key[1] not in self.states]
        if extra:
            raise GrammarError(f"transitions outside the alphabet or state set: {extra[:3]}")

    @classmethod
    def build(cls, input_alphabet, output_alphabet, states, accepting, initial, delta) -> "Transducer":
        fixed = {(g, q): (tuple(out), nxt) for (g, q), (out, nxt) in dict(delta).items()}
        return cls(frozenset(input_alphabet), frozenset(output_alphabet), frozenset(states),
                   frozenset(accepting), initial, fixed)

    def step(self, letter, state) -> tuple[tuple, Hashable]:
        try:
            return self.delta[(letter, state)]
        except KeyError:
            raise GrammarError(f"letter {letter!r} is not in the input alphabet") from None

    def path(self, state, w: Iterable) -> tuple[tuple, Hashable]:
        """The unique (output, end state) with ``state --(w, output)--> end``."""
        out: list = []
        q = state
        for g in w:
            emitted, q = self.step(g, q)
            out.extend(emitted)
        return tuple(out), q

    def run(self, w: Iterable) -> tuple[tuple, bool]:
        out, q = self.path(self.initial, w)
        return out, q in self.accepting

    def image(self, w: Iterable) -> tuple | None:
        """Output on ``w`` when accepted, else None."""
        out, ok = self.run(w)
        return out if ok else None

    # serialization

    def to_dict(self) -> dict:
        spaced = any(len(str(s)) != 1 for s in self.input_alphabet | self.output_alphabet)
        key = lambda x: str(x)
        rows = [
            [g, q, format_symbols(out, spaced), nxt]
            for (g, q), (out, nxt) in sorted(self.delta.items(), key=lambda kv: (key(kv[0][0]), key(kv[0][1])))
        ]
        return {
            "input_alphabet": sorted(self.input_alphabet, key=key),
            "output_alphabet": sorted(self.output_alphabet, key=key),
            "states": sorted(self.states, key=key),
            "initial": self.initial,
            "accepting": sorted(self.accepting, key=key),
            "delta": rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "Transducer":
        try:
            rows = data["delta"]
            states = data["states"]
            initial = data["initial"]
            accepting = data["accepting"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"transducer document lacks field {exc}") from exc
        gamma = data.get("input_alphabet") or sorted({r[0] for r in rows})
        sigma = data.get("output_alphabet")
        delta = {}
        for row in rows:
            if len(row) != 4:
                raise ParseError(f"transition row must have four entries: {row!r}")
            g, q, out, nxt = row
            if (g, q) in delta:
                raise ParseError(f"duplicate transition for ({g!r}, {q!r})")
            delta[(g, q)] = (out, nxt)
        if sigma is None:
            sigma = sorted({ch for out, _ in delta.values() for ch in tokenize(out)})
        delta = {key: (tokenize(out, sigma), nxt) for key, (out, nxt) in delta.items()}
        return cls.build(gamma, sigma, states, accepting, initial, delta)

    @classmethod
    def from_json(cls, text: str) -> "Transducer":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc


def build_successor_machine() -> Transducer:
    """The five-state binary successor machine, loaded from the bundled fixture."""
    text = resources.files("edtlab").joinpath("data/successor.json").read_text(encoding="utf-8")
    return Transducer.from_json(text)


def encode_binary(v: int) -> str:
    """Least significant bit first, no trailing zeros, then ``$``; zero is ``$``."""
    if v < 0:
        raise ValueError("only nonnegative integers are encoded")
    bits = ""
    while v:
        bits += str(v & 1)
        v >>= 1
    return bits + "$"


def decode_binary(w: Sequence[str]) -> int | None:
    """Inverse of :func:`encode_binary`; None for anything non-canonical."""
    w = "".join(w)
    if not w.endswith("$") or w.count("$") != 1:
        return None
    bits = w[:-1]
    if any(b not in "01" for b in bits) or bits.endswith("0"):
        return None
    return sum(1 << i for i, b in enumerate(bits) if b == "1")


def identity_transducer(alphabet: Iterable[str]) -> Transducer:
    alphabet = frozenset(alphabet)
    return Transducer.build(alphabet, alphabet, {"q"}, {"q"}, "q", {(a, "q"): ((a,), "q") for a in alphabet})


def letter_map_transducer(mapping: Mapping[str, Sequence[str]]) -> Transducer:
    """One-state transducer applying a letter-to-word homomorphism."""
    out_alpha = {x for img in mapping.values() for x in img}
    return Transducer.build(mapping, out_alpha, {"q"}, {"q"}, "q",
                            {(a, "q"): (tuple(img), "q") for a, img in mapping.items()})


@dataclass(frozen=True)
class AntichainSpec:
    """Patterns with their outputs; no pattern may be a prefix of another."""

    entries: tuple

    def __init__(self, entries: Iterable[tuple]):
        fixed = tuple((_as_word(p), _as_word(x)) for p, x in entries)
        object.__setattr__(self, "entries", fixed)
        pats = [p for p, _ in fixed]
        for p in pats:
            if not p:
                raise GrammarError("antichain patterns must be nonempty")
        for i, p in enumerate(pats):
            for j, q in enumerate(pats):
                if i != j and len(p) <= len(q) and q[: len(p)] == p:
                    raise GrammarError(
                        f"pattern {format_symbols(p)!r} is a prefix of {format_symbols(q)!r}"
                    )

    @property
    def patterns(self) -> tuple:
        return tuple(p for p, _ in self.entries)

    def output_of(self, pattern: tuple) -> tuple:
        return dict(self.entries)[tuple(pattern)]


def _prefix_state(u: tuple) -> str:
    return "q_" + ("·".join(map(str, u)) if u else "ε")


FAIL = "q_fail"


def antichain_transducer(spec: AntichainSpec, input_alphabet: Iterable[str] | None = None) -> Transducer:
    """Transducer computing the factor-by-factor map of an antichain.

    States are the proper prefixes of patterns plus a failure sink; the
    only accepting state is the empty prefix, reached after each complete
    pattern.
    """
    patterns = {p: x for p, x in spec.entries}
    gamma = set(input_alphabet) if input_alphabet is not None else {g for p in patterns for g in p}
    gamma |= {g for p in patterns for g in p}
    sigma = {y for x in patterns.values() for y in x}
    prefixes = {p[:i] for p in patterns for i in range(len(p))} or {()}
    prefixes.add(())
    delta = {}
    for u in prefixes:
        for g in gamma:
            ug = u + (g,)
            if ug in patterns:
                delta[(g, _prefix_state(u))] = (patterns[ug], _prefix_state(()))
            elif ug in prefixes:
                delta[(g, _prefix_state(u))] = ((), _prefix_state(ug))
            else:
                delta[(g, _prefix_state(u))] = ((), FAIL)
    for g in gamma:
        delta[(g, FAIL)] = ((), FAIL)
    states = {_prefix_state(u) for u in prefixes} | {FAIL}
    accepting = {_prefix_state(())} if patterns else set()
    return Transducer.build(gamma, sigma, states, accepting, _prefix_state(()), delta)


def geodesic_Z(g: int) -> str:
    """The geodesic for ``g`` in ℤ with generators a = 1, b = -1."""
    return "a" * g if g >= 0 else "b" * (-g)


def z_antichain(us: Sequence[str]) -> list[str]:
    """Words ``w_i u_i`` pairwise prefix-incomparable, with each ``w_i`` of weight zero.

    ``w_1 = ab`` and ``w_i = a^p b^p`` with ``p = |w_(i-1)| + 1``.
    """
    if not us:
        raise ValueError("need at least one generator word")
    out = []
    prev_len = 0
    for i, u in enumerate(us):
        p = 1 if i == 0 else prev_len + 1
        w = geodesic_Z(p) + geodesic_Z(-p)
        prev_len = len(w)
        out.append(w + u)
    for i, x in enumerate(out):
        for j, y in enumerate(out):
            if i != j and y.startswith(x):
                raise AssertionError(f"antichain construction failed: {x!r} is a prefix of {y!r}")
    return out
