"""Command-line entry point.

Every subcommand reads its inputs, calls one library function and writes
the result.  Reports are JSON files; short summaries go to stdout.  Exit
status is 0 on success, 1 on a domain error (with a JSON message on
stderr) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import decomp, edt0l, mcfg, transducer, transforms, witness
from .errors import EdtlabError, ParseError


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _dump(data) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def _say(**fields) -> None:
    print(json.dumps(fields, ensure_ascii=False))


def _load_grammar(path: str):
    text = _read(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if isinstance(data, dict) and "tables" in data:
        return edt0l.Edt0lGrammar.from_dict(data)
    if isinstance(data, dict) and "rules" in data:
        return mcfg.Rmcfg.from_dict(data)
    raise ParseError(f"{path}: neither an EDT0L grammar (tables) nor an R-MCFG (rules)")


def _load_edt0l(path: str) -> edt0l.Edt0lGrammar:
    g = _load_grammar(path)
    if not isinstance(g, edt0l.Edt0lGrammar):
        raise ParseError(f"{path}: expected an EDT0L grammar")
    return g


def _load_mcfg(path: str) -> mcfg.Rmcfg:
    g = _load_grammar(path)
    if not isinstance(g, mcfg.Rmcfg):
        raise ParseError(f"{path}: expected an R-MCFG")
    return g


def _params(text: str, grammar=None, args=None) -> witness.WitnessParams:
    parts = text.split(",")
    try:
        values = [int(x) for x in parts]
    except ValueError:
        raise UsageError(f"--params expects integers m,k,C, got {text!r}") from None
    if len(values) == 3:
        return witness.WitnessParams(*values)
    if len(values) == 2 and grammar is not None:
        C = mcfg.weight_profile(grammar, args.max_len, args.max_depth).C
        return witness.WitnessParams(values[0], values[1], C)
    raise UsageError("--params needs m,k,C (C may be omitted when --grammar is given)")


# Subcommands.


def cmd_edt0l(args) -> int:
    g = _load_edt0l(args.input)
    if args.action == "enumerate":
        sample = edt0l.enumerate_language(g, args.max_len, args.max_depth)
        _write(args.out, _dump({"words": sample.as_strings(), "complete": sample.complete,
                                "max_len": args.max_len, "max_depth": args.max_depth}))
    elif args.action == "index":
        _say(observed_index=edt0l.observed_index(g, args.max_depth, max_terminals=args.max_len),
             max_depth=args.max_depth)
    else:
        _write(args.out, g.to_json())
    return 0


def cmd_transducer(args) -> int:
    t = transducer.Transducer.from_json(_read(args.input)) if args.input else transducer.build_successor_machine()
    if args.action == "show":
        _write(args.out, t.to_json())
        return 0
    if args.word is None:
        raise UsageError("transducer run needs --word")
    word = list(args.word)
    out, ok = t.run(word)
    _say(input=args.word, output="".join(map(str, out)), accepted=ok)
    return 0


def cmd_transform(args) -> int:
    g = _load_edt0l(args.input)
    cap = args.max_nonterminals
    if args.action == "apply-transducer":
        if not args.transducer:
            raise UsageError("apply-transducer needs --transducer")
        lazy = transforms.apply_transducer(g, transducer.Transducer.from_json(_read(args.transducer)), cap)
        out = transforms.materialize(lazy, cap)
        report = lazy.report().to_dict()
    elif args.action == "lult-fi":
        lazy = transforms.lult_to_finite_index(g, cap)
        out = transforms.materialize(lazy, cap)
        report = lazy.report().to_dict()
    elif args.action == "shuffle":
        out = transforms.materialize(transforms.shuffle_quotient(g, args.letter), cap)
        report = transforms.shuffle_report(g, out, args.letter).to_dict()
    else:
        result = transforms.wp_finite_index_pipeline(g, args.letter, cap)
        out = transforms.materialize(result.grammar, cap)
        report = {"stages": result.reports()}
    _write(args.out, out.to_json())
    if args.report:
        _write(args.report, _dump(report))
    _say(stage=args.action, nonterminals=len(out.nonterminals), tables=len(out.tables))
    return 0


def cmd_mcfg(args) -> int:
    if args.action == "from-edt0l":
        out = mcfg.from_finite_index_edt0l(_load_edt0l(args.input), args.index)
        _write(args.out, out.to_json())
        _say(nonterminals=len(out.ranks), rules=len(out.rules))
        return 0
    g = _load_mcfg(args.input)
    if args.action == "normalize":
        nf = mcfg.normalize(g)
        _write(args.out, nf.grammar.to_json())
        if args.report:
            _write(args.report, _dump({**nf.report, "kinds": nf.kind_counts()}))
        _say(k=nf.k, rules=len(nf.grammar.rules), normal_form=mcfg.is_normal_form(nf.grammar))
    elif args.action == "enumerate":
        sample = mcfg.enumerate_mcfg(g, args.max_len, args.max_depth)
        _write(args.out, _dump({"words": sample.as_strings(), "complete": sample.complete,
                                "max_len": args.max_len, "max_steps": args.max_depth}))
    elif args.action == "weights":
        _write(args.out, _dump(mcfg.weight_profile(g, args.max_len, args.max_depth).to_dict()))
    else:
        kinds = [{"rule": str(r), "kind": mcfg.classify_rule(r, g.start).value} for r in g.rules]
        _write(args.out, _dump({"rules": kinds, "normal_form": mcfg.is_normal_form(g)}))
    return 0


def cmd_witness(args) -> int:
    params = witness.WitnessParams(args.m, args.k, args.C)
    summary = witness.witness_summary(params, args.level)
    _write(args.out, _dump(summary))
    return 0


def cmd_audit(args) -> int:
    if args.action == "synth":
        params = _params(args.params)
        trace = decomp.synthetic_trace(params, random.Random(args.seed))
        _write(args.out, decomp.steps_to_json(trace.steps))
        _say(seed=args.seed, steps=len(trace.steps), within_bound=trace.within_bound,
             forced=len(trace.forced))
        return 0
    if not args.trace:
        raise UsageError("audit run needs --trace")
    grammar = _load_mcfg(args.grammar) if args.grammar else None
    params = _params(args.params, grammar, args)
    steps = decomp.steps_from_json(_read(args.trace))
    report = decomp.audit_trace(grammar, steps, params)
    _write(args.report, report.to_json())
    _say(verdict=report.verdict.value, steps=len(steps), violation_step=report.violation_step,
         complete=report.complete)
    return 0


def cmd_compare(args) -> int:
    a, b = _load_grammar(args.a), _load_grammar(args.b)
    result = transforms.compare_languages(a, b, args.max_len, args.max_depth, args.erase)
    if args.report:
        _write(args.report, _dump(result.to_dict()))
    if result.equal:
        print(f"equal up to length {args.max_len}")
        return 0
    print(f"differ up to length {args.max_len}: "
          f"{len(result.only_a)} words only in a, {len(result.only_b)} only in b")
    return 1


# Parser.


def _nonnegative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("budgets must be nonnegative")
    return v


def build_parser() -> argparse.ArgumentParser:
    def globals_parser(suppress: bool) -> argparse.ArgumentParser:
        # subcommands repeat the global flags without overriding earlier values
        g = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
        g.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0)
        g.add_argument("--max-len", type=_nonnegative, default=argparse.SUPPRESS if suppress else 8)
        g.add_argument("--max-depth", type=_nonnegative, default=argparse.SUPPRESS if suppress else 12)
        return g

    p = argparse.ArgumentParser(prog="edtlab", parents=[globals_parser(False)], allow_abbrev=False,
                                description="EDT0L grammars, transducers, R-MCFGs and decomposition audits")
    sub = p.add_subparsers(dest="command", required=True)
    repeated = globals_parser(True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[repeated], help=help_text, allow_abbrev=False)

    e = add("edt0l", "enumerate or inspect an EDT0L grammar")
    e.add_argument("action", choices=["enumerate", "index", "format"])
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_edt0l)

    t = add("transducer", "run a transducer (the successor machine by default)")
    t.add_argument("action", choices=["run", "show"])
    t.add_argument("--in", dest="input", default=None)
    t.add_argument("--word", default=None)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_transducer)

    tr = add("transform", "grammar transformations")
    tr.add_argument("action", choices=["apply-transducer", "lult-fi", "shuffle", "wp-pipeline"])
    tr.add_argument("--in", dest="input", required=True)
    tr.add_argument("--transducer", default=None)
    tr.add_argument("--letter", default="c")
    tr.add_argument("--out", required=True)
    tr.add_argument("--report", default=None)
    tr.add_argument("--max-nonterminals", type=_nonnegative, default=5000)
    tr.set_defaults(func=cmd_transform)

    m = add("mcfg", "R-MCFG tools")
    m.add_argument("action", choices=["normalize", "enumerate", "weights", "classify", "from-edt0l"])
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--out", default=None)
    m.add_argument("--report", default=None)
    m.add_argument("--index", type=_nonnegative, default=None)
    m.set_defaults(func=cmd_mcfg)

    w = add("witness", "statistics of the witness word")
    w.add_argument("action", choices=["dump"])
    w.add_argument("--m", type=int, required=True)
    w.add_argument("--k", type=int, required=True)
    w.add_argument("--C", type=int, required=True)
    w.add_argument("--level", type=_nonnegative, default=None)
    w.add_argument("--out", default=None)
    w.set_defaults(func=cmd_witness)

    a = add("audit", "decomposition audits of reverse derivation traces")
    a.add_argument("action", choices=["run", "synth"])
    a.add_argument("--params", required=True, help="m,k,C")
    a.add_argument("--trace", default=None)
    a.add_argument("--grammar", default=None)
    a.add_argument("--report", default=None)
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_audit)

    c = add("compare", "bounded language equality of two grammars")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--erase", default=None, help="letter deleted from the words of --a")
    c.add_argument("--report", default=None)
    c.set_defaults(func=cmd_compare)
    return p


def _check_paths(args) -> None:
    ins = [getattr(args, n, None) for n in ("input", "transducer", "trace", "grammar", "a", "b")]
    outs = [getattr(args, n, None) for n in ("out", "report")]
    ins = {str(Path(x).resolve()) for x in ins if x}
    outs_r = [str(Path(x).resolve()) for x in outs if x]
    if set(outs_r) & ins or len(outs_r) != len(set(outs_r)):
        raise UsageError("output paths must differ from inputs and from each other")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _check_paths(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"edtlab: error: {exc}", file=sys.stderr)
        return 2
    except (EdtlabError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, ensure_ascii=False), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
