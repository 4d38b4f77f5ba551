"""Command-line interface.

Exit codes: 0 success, 1 internal error, 2 bad input or violated
precondition, 3 a check ran and came out negative (graph fails the DISC
test, traces differ).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__
from .baseline import ALGORITHMS, bench_scaling, write_csv
from .compaction import CompactionError, CopyScript, compact, loose_compact
from .distribution import PreconditionError, distribute, tight_compact
from .expander import (
    ExpanderError,
    FamilySpec,
    build_base,
    family,
    load_graph,
    save_graph,
    verify_disc_exhaustive,
    verify_disc_spectral,
)
from .formats import (
    FormatError,
    MarkedArray,
    load_array,
    load_config,
    load_trace,
    save_array,
    save_trace,
)
from .matching import MatchingError
from .memory import WORD_MARK, AccessTrace, SimMemory

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_NEGATIVE = 0, 1, 2, 3


class _Negative(Exception):
    def __init__(self, report):
        self.report = report


def _emit(args, report: dict, text: str) -> None:
    if args.json:
        print(json.dumps(report, default=str))
    else:
        print(text)


# subcommands ----------------------------------------------------------------------

def cmd_gen_expander(args) -> dict:
    if args.base == "complete":
        g = build_base(args.n, "complete")
    else:
        g = family(args.n, FamilySpec(args.epsilon, args.base, args.degree, args.seed))
    save_graph(g, args.out)
    return {"n": g.n, "degree": g.d, "base": args.base, "out": args.out,
            "lam_bound": g.lam_bound}


def cmd_verify_expander(args) -> dict:
    g = load_graph(args.inp)
    report = {"n": g.n, "degree": g.d, "epsilon": args.epsilon}
    if args.exhaustive:
        r = verify_disc_exhaustive(g, args.epsilon)
        report.update(method="exhaustive", holds=r.passed, worst_ratio=r.worst_ratio)
    else:
        c = verify_disc_spectral(g, args.epsilon)
        report.update(method=c.method, holds=c.passed, lam=c.lam, lam_upper=c.lam_upper, gap=c.gap)
    if not report["holds"]:
        raise _Negative(report)
    return report


def cmd_gen_array(args) -> dict:
    rng = np.random.default_rng(args.seed)
    if not 0 <= args.m <= args.n:
        raise PreconditionError("need 0 <= m <= n")
    values = rng.integers(0, 1 << min(args.word_bits, 63), args.n, dtype=np.uint64)
    wm = np.zeros(args.n, bool)
    wm[rng.choice(args.n, args.m, replace=False)] = True
    pm = np.zeros(args.n, bool)
    pm[rng.choice(args.n, args.m, replace=False)] = True
    save_array(MarkedArray(values, wm, pm, args.word_bits), args.out)
    return {"n": args.n, "m": args.m, "out": args.out}


def _trace_mode(args):
    return "full" if getattr(args, "emit_trace", None) else "digest"


def _finish(args, arr: MarkedArray, trace: AccessTrace, extra: dict) -> dict:
    save_array(arr, args.out)
    if getattr(args, "emit_trace", None):
        save_trace(trace, args.emit_trace)
    return {"n": len(arr), "accesses": trace.count, "digest": trace.digest(), "out": args.out, **extra}


def cmd_distribute(args) -> dict:
    cfg = load_config(args.config)
    a = load_array(args.inp)
    r = distribute(a.values, a.word_marks, a.pos_marks, cfg.dist, trace_mode=_trace_mode(args))
    return _finish(args, MarkedArray(r.values, r.word_marks, r.pos_marks, a.word_bits), r.trace, {})


def cmd_tight_compact(args) -> dict:
    cfg = load_config(args.config)
    a = load_array(args.inp)
    r = tight_compact(a.values, a.word_marks, cfg.dist, trace_mode=_trace_mode(args))
    out = MarkedArray(r.values, r.word_marks, None, a.word_bits)
    return _finish(args, out, r.trace, {"marked": int(r.word_marks.sum())})


def cmd_compact(args) -> dict:
    cfg = load_config(args.config)
    comp = cfg.compaction
    a = load_array(args.inp)
    n = len(a)
    if n & (n - 1):
        raise PreconditionError("compaction needs a power-of-two array length")
    rec = AccessTrace(_trace_mode(args))
    mem = SimMemory(comp.word_bits, rec)
    region = mem.alloc(n)
    mem.load(region, a.values, np.where(a.word_marks, WORD_MARK, 0).astype(np.uint8))
    script = CopyScript()
    extra = {"mode": args.mode}
    if args.mode == "loose":
        ell = args.ell or cfg.loose_ell
        extra["prefix"] = loose_compact(mem, region, int(a.word_marks.sum()), ell, comp, script)
    else:
        compact(mem, region, comp, script, scheme=args.mode)
    p, f, _ = mem.peek(region)
    if args.script:
        script.save(args.script)
        extra["script"] = args.script
    extra["script_records"] = len(script)
    return _finish(args, MarkedArray(p, (f & WORD_MARK) != 0, None, a.word_bits), rec, extra)


_RECORDERS = {
    "distribute": lambda a, cfg, mode: distribute(a.values, a.word_marks, a.pos_marks, cfg.dist, mode).trace,
    "tight-compact": lambda a, cfg, mode: tight_compact(a.values, a.word_marks, cfg.dist, mode).trace,
}


def cmd_trace(args) -> dict:
    if args.action == "record":
        cfg = load_config(args.config)
        t = _RECORDERS[args.algo](load_array(args.inp), cfg, "full")
        save_trace(t, args.out)
        return {"algo": args.algo, "records": t.count, "digest": t.digest(), "out": args.out}
    a, b = load_trace(args.a), load_trace(args.b)
    report = {"equal": a == b, "length_a": a.count, "length_b": b.count}
    if not report["equal"]:
        ca, cb = a.codes(), b.codes()
        k = min(ca.size, cb.size)
        diff = np.flatnonzero(ca[:k] != cb[:k])
        report["first_difference"] = int(diff[0]) if diff.size else k
        raise _Negative(report)
    return report


def cmd_bench(args) -> dict:
    cfg = load_config(args.config)
    algos = args.algos.split(",")
    unknown = set(algos) - set(ALGORITHMS)
    if unknown:
        raise PreconditionError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")
    sizes = [int(s) for s in args.sizes.split(",")]
    recs = bench_scaling(algos, sizes, cfg.dist)
    if args.csv:
        write_csv(recs, args.csv)
    return {"records": [r.__dict__ for r in recs]}


# parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oblidist", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--json", action="store_true", help="machine-readable report on stdout")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-expander", help="build a certified bipartite expander")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--epsilon", type=float, default=1 / 8)
    s.add_argument("--base", choices=("permutation", "affine", "complete"), default="permutation")
    s.add_argument("--degree", type=int, default=288)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_expander)

    s = sub.add_parser("verify-expander", help="check the DISC property of a graph file")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--epsilon", type=float, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exhaustive", action="store_true")
    g.add_argument("--spectral", action="store_true")
    s.set_defaults(func=cmd_verify_expander)

    s = sub.add_parser("gen-array", help="write a random marked array")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--word-bits", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_array)

    for name, func in (("distribute", cmd_distribute), ("tight-compact", cmd_tight_compact)):
        s = sub.add_parser(name)
        s.add_argument("--in", dest="inp", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--config")
        s.add_argument("--emit-trace", metavar="PATH")
        s.set_defaults(func=func)

    s = sub.add_parser("compact", help="2-fold or loose compaction")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=("small", "medium", "general", "loose"), required=True)
    s.add_argument("--ell", type=int)
    s.add_argument("--config")
    s.add_argument("--emit-trace", metavar="PATH")
    s.add_argument("--script", metavar="PATH", help="write the copy script here")
    s.set_defaults(func=cmd_compact)

    s = sub.add_parser("trace", help="record or compare access traces")
    tsub = s.add_subparsers(dest="action", required=True)
    r = tsub.add_parser("record")
    r.add_argument("--algo", choices=sorted(_RECORDERS), required=True)
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--config")
    c = tsub.add_parser("compare")
    c.add_argument("a")
    c.add_argument("b")
    s.set_defaults(func=cmd_trace)

    s = sub.add_parser("bench", help="access counts and timings over sizes")
    s.add_argument("--algos", default="distribute,bitonic")
    s.add_argument("--sizes", default="1024,4096")
    s.add_argument("--csv")
    s.add_argument("--config")
    s.set_defaults(func=cmd_bench)
    return p


def _text(report: dict) -> str:
    return "\n".join(f"{k}: {v}" for k, v in report.items() if k != "records") or "ok"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        report = args.func(args)
        code = EXIT_OK
    except _Negative as e:
        report, code = e.report, EXIT_NEGATIVE
    except (PreconditionError, FormatError, ExpanderError, CompactionError, MatchingError, OSError) as e:
        report, code = {"error": type(e).__name__, "message": str(e)}, EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        report, code = {"error": type(e).__name__, "message": str(e)}, EXIT_INTERNAL
    report = {"command": args.command, "exit_code": code, **report,
              "seconds": round(time.perf_counter() - t0, 4)}
    if args.command == "bench" and not args.json and code == EXIT_OK:
        lines = [f"{r['algo']:>16} n={r['n']:<8} accesses={r['accesses']:<12} {r['seconds']:.3f}s"
                 for r in report["records"]]
        _emit(args, report, "\n".join(lines))
    else:
        _emit(args, report, _text(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
