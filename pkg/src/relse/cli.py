"""Command-line front end: ``relse analyze | bench | oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import report as R
from .concrete import BudgetExceeded, ct_oracle
from .engine import AnalysisConfig, Mode, explore
from .ir import IRError, load_program, parse_program
from .randprog import random_program_text
from .solver import SmtSolver, SolverError

EXIT_SECURE, EXIT_INSECURE, EXIT_UNKNOWN, EXIT_ERROR = 0, 1, 2, 3
EXIT_BY_STATUS = {"secure": EXIT_SECURE, "insecure": EXIT_INSECURE, "unknown": EXIT_UNKNOWN}
EXPECTATIONS = ("secure", "insecure", "unknown")


class MissingExpectation(Exception):
    pass


class CrossCheckFailed(Exception):
    pass


def _add_engine_flags(ap: argparse.ArgumentParser, default_depth: int = 1000) -> None:
    ap.add_argument("--flyrow", action=argparse.BooleanOptionalAction, default=None,
                    help="on-the-fly read-over-write (default: set by mode)")
    ap.add_argument("--untaint", action=argparse.BooleanOptionalAction, default=None,
                    help="untainting (default: set by mode)")
    ap.add_argument("--fault-pack", action=argparse.BooleanOptionalAction, default=None,
                    help="pack insecurity checks per basic block (default: set by mode)")
    ap.add_argument("--depth", type=int, default=default_depth, metavar="K",
                    help="instructions per path (default %(default)s)")
    ap.add_argument("--timeout", type=float, default=None, metavar="S", help="per-query solver timeout")
    ap.add_argument("--global-timeout", type=float, default=None, metavar="S")
    ap.add_argument("--djump-bound", type=int, default=16, metavar="N",
                    help="dynamic jump targets enumerated before giving up")
    ap.add_argument("--solver", default=None, metavar="CMD",
                    help="solver command line (default: $RELSE_SOLVER or 'z3 -in -smt2')")
    ap.add_argument("--memory-default", type=lambda s: int(s, 0), default=None, metavar="BYTE",
                    help="concrete initial memory byte instead of a symbolic array")
    ap.add_argument("--input-bits", type=int, default=None, metavar="N",
                    help="restrict every input to its low N bits")
    ap.add_argument("--stop-at-first", action="store_true")


def _config(args, mode: str, **over) -> AnalysisConfig:
    kw = dict(
        flyrow=args.flyrow, untaint=args.untaint, fault_pack=args.fault_pack,
        depth=args.depth, solver_timeout=args.timeout, global_timeout=args.global_timeout,
        djump_enum_bound=args.djump_bound, solver_command=args.solver,
        memory_default=args.memory_default, input_bits=args.input_bits,
        stop_at_first=args.stop_at_first,
    )
    kw.update(over)
    return AnalysisConfig(Mode(mode), **kw)


def _write_json(path: Optional[str], doc: dict) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- analyze ------------------------------------------------------------------

def cmd_analyze(args) -> int:
    p = load_program(args.path)
    cfg = _config(args, args.mode)
    v = explore(p, cfg)
    doc = R.analysis_report(args.path, cfg, v)
    print(R.render_analysis(doc))
    _write_json(args.json, doc)
    return EXIT_BY_STATUS[v.name]


# -- bench --------------------------------------------------------------------

def read_expectation(ir_path: Path) -> str:
    side = ir_path.with_suffix(".expected")
    if not side.exists():
        raise MissingExpectation(f"{ir_path}: no sidecar {side.name}")
    value = side.read_text(encoding="utf-8").strip()
    if value not in EXPECTATIONS:
        raise MissingExpectation(f"{side}: expected one of {', '.join(EXPECTATIONS)}, found {value!r}")
    return value


def run_bench(directory: str, modes: Sequence[str], make_cfg) -> dict:
    programs = sorted(Path(directory).glob("*.ir"))
    loaded = [(f, load_program(f), read_expectation(f)) for f in programs]
    rows = []
    if loaded:
        with SmtSolver(make_cfg(modes[0]).solver_command) as solver:
            for mode in modes:
                cfg = make_cfg(mode)
                row = dict(mode=mode, instrs=0, queries_total=0, queries_explore=0, queries_insecurity=0,
                           time_total=0.0, timeouts=0, secure=0, insecure=0, unknown=0, mismatches=[])
                for f, p, expected in loaded:
                    v = explore(p, cfg, solver)
                    m = v.stats
                    row["instrs"] += m.instrs
                    row["queries_total"] += m.queries_total
                    row["queries_explore"] += m.queries_explore
                    row["queries_insecurity"] += m.queries_insecurity
                    row["time_total"] += m.time_total
                    row["timeouts"] += m.timeouts
                    row[v.name] += 1
                    # single-execution SE cannot see leaks; only relational modes are checked
                    if cfg.relational and v.name != expected:
                        row["mismatches"].append(f"{f.name}: expected {expected}, got {v.name}")
                t = row["time_total"]
                row["instrs_per_sec"] = row["instrs"] / t if t > 0 else 0.0
                rows.append(row)
    return R.bench_report(str(directory), len(loaded), rows)


def cmd_bench(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        Mode(m)
    doc = run_bench(args.dir, modes, lambda mode: _config(args, mode))
    print(R.render_bench(doc))
    _write_json(args.json, doc)
    return EXIT_INSECURE if any(r["mismatches"] for r in doc["rows"]) else 0


# -- oracle -------------------------------------------------------------------

def oracle_check(name: str, p, args, solver: Optional[SmtSolver] = None) -> dict:
    o = ct_oracle(p, args.depth, bits=args.bits)
    engine = agrees = None
    if args.cross_check:
        cfg = _config(args, args.mode, memory_default=0, input_bits=args.bits)
        engine = explore(p, cfg, solver)
        agrees = engine.name == ("secure" if o.ct else "insecure") and all(
            x.validated for x in engine.violations)
    return R.oracle_report(name, o, engine, agrees)


def cmd_oracle(args) -> int:
    items = []
    if args.random:
        rng = random.Random(args.seed)
        for i in range(args.random):
            text = random_program_text(rng)
            items.append((f"random-{args.seed}-{i}", parse_program(text)))
    for path in args.paths:
        items.append((path, load_program(path)))
    if not items:
        raise IRError("no program given (pass paths or --random N)")
    docs = []
    solver = SmtSolver(args.solver) if args.cross_check else None
    try:
        for name, p in items:
            doc = oracle_check(name, p, args, solver)
            docs.append(doc)
            if len(items) == 1 or doc["oracle"]["agrees"] is False:
                print(R.render_oracle(doc))
    finally:
        if solver is not None:
            solver.close()
    disagreements = [d for d in docs if d["oracle"]["agrees"] is False]
    if len(items) > 1:
        ct = sum(d["oracle"]["status"] == "CT" for d in docs)
        line = f"{len(docs)} programs: {ct} CT, {len(docs) - ct} NotCT"
        if args.cross_check:
            line += f", {len(disagreements)} disagreements"
        print(line)
    _write_json(args.json, docs[0] if len(docs) == 1 else R.oracle_batch_report(docs))
    if disagreements:
        raise CrossCheckFailed(f"engine and oracle disagree on {len(disagreements)} program(s)")
    if len(docs) == 1:
        return EXIT_SECURE if docs[0]["oracle"]["status"] == "CT" else EXIT_INSECURE
    return 0


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relse", description="Constant-time analysis by relational symbolic execution.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    modes = [m.value for m in Mode]

    a = sub.add_parser("analyze", help="analyze one program")
    a.add_argument("path")
    a.add_argument("--mode", choices=modes, default=Mode.BINSEC_REL.value)
    _add_engine_flags(a)
    a.add_argument("--json", metavar="PATH", help="also write the JSON report here")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bench", help="run modes over a corpus with expected-status sidecars")
    b.add_argument("dir")
    b.add_argument("--modes", default="sc,relse,binsec-rel", help="comma-separated (default %(default)s)")
    _add_engine_flags(b)
    b.add_argument("--json", metavar="PATH")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle", help="decide CT by brute-force enumeration")
    o.add_argument("paths", nargs="*")
    o.add_argument("--bits", type=int, default=4, help="bits per input (default %(default)s)")
    o.add_argument("--cross-check", action="store_true", help="also run the engine and compare")
    o.add_argument("--random", type=int, default=0, metavar="N", help="check N random programs")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--mode", choices=[m for m in modes if m != "se"], default=Mode.BINSEC_REL.value)
    _add_engine_flags(o, default_depth=64)
    o.add_argument("--json", metavar="PATH")
    o.set_defaults(func=cmd_oracle)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IRError, OSError, BudgetExceeded, MissingExpectation, CrossCheckFailed,
            SolverError, ValueError) as exc:
        print(f"relse: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
