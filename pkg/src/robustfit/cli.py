"""Command-line entry point.

    robustfit run --method asker --synthetic cameras=10,points=200,outliers=0.2 --out t.csv
    robustfit profile traces/*.csv
    robustfit escape --trials 100 --methods irls,asker,regemm

``run`` is implied when the first argument is an option.  Exit codes: 0
converged, 2 iteration limit, 3 stalled, 64 usage error, 65 unreadable data.
"""
from __future__ import annotations

import argparse
import sys

from .bench import METHODS, RunSpec, escape_experiment, profile, run, trace_rows
from .errors import EvaluationFailure, InvalidArgument, ParseError, ValidationError
from .lm import CONVERGED, MAX_ITER, STALLED, LMConfig
from .mean1d import MeanFamily

EXIT = {CONVERGED: 0, MAX_ITER: 2, STALLED: 3}
EX_USAGE = 64
EX_DATAERR = 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustfit", description="Robust least-squares solvers and benchmarks")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="run one solver and write its trace")
    r.add_argument("--method", required=True, choices=METHODS)
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="BAL problem file (.bz2/.gz accepted)")
    src.add_argument("--synthetic", help="key=value list, e.g. cameras=10,points=200,outliers=0.2,noise=1")
    r.add_argument("--tau", type=float, default=1.0)
    r.add_argument("--max-iter", type=int, default=50)
    r.add_argument("--eta", type=float, default=0.5)
    r.add_argument("--mu-f", type=float, default=0.9)
    r.add_argument("--alpha", type=float, default=0.01)
    r.add_argument("--init-scale", type=float, default=5.0)
    r.add_argument("--gnc-levels", type=int, default=5)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--inlier-threshold", type=float, default=1.0)
    r.add_argument("--out", help="trace CSV path (stdout when omitted)")

    p = sub.add_parser("profile", help="performance profiles from <instance>__<method>.csv traces")
    p.add_argument("traces", nargs="+")
    p.add_argument("--ratios", default="1,1.01,1.1,1.5,2,5,10")

    e = sub.add_parser("escape", help="1-D robust-mean escape experiment")
    e.add_argument("--trials", type=int, default=100)
    e.add_argument("--methods", default="irls,asker,regemm")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--max-iter", type=int, default=50)
    return parser


def _cmd_run(args) -> int:
    spec = RunSpec(args.method, args.input, args.synthetic, args.tau, args.max_iter, args.eta, args.mu_f,
                   args.alpha, args.init_scale, args.gnc_levels, args.seed, args.inlier_threshold, args.out)
    trace = run(spec)
    if args.out is None:
        header, rows = trace_rows(trace)
        print(",".join(header))
        for row in rows:
            print(",".join(row))
    f = trace.final
    print(f"{trace.method}: {trace.status} after {trace.iterations} iterations, psi={f.psi:.6g}, "
          f"inlier_rate={f.inlier_rate:.4f}", file=sys.stderr)
    return EXIT[trace.status]


def _cmd_profile(args) -> int:
    ts = [float(t) for t in args.ratios.split(",")]
    obj, inl = profile(args.traces)
    for name, table in (("objective", obj), ("inlier_rate", inl)):
        print(f"# {name} profile over {len(table.instances)} instances")
        print("method," + ",".join(f"rho({t:g})" for t in ts))
        for m in table.methods:
            print(m + "," + ",".join(f"{v:.4f}" for v in table.curve(m, ts)))
        for inst, m in table.missing:
            print(f"# missing or failed: {inst} / {m}", file=sys.stderr)
    return 0


def _cmd_escape(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s): {', '.join(bad)}")
    res = escape_experiment(args.trials, MeanFamily(), methods, args.seed, lm=LMConfig(max_iter=args.max_iter))
    print("method,success_rate")
    for m, v in res.items():
        print(f"{m},{v:.4f}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].startswith("--") and argv[0] not in ("--help",):
        argv.insert(0, "run")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EX_USAGE
        return {"run": _cmd_run, "profile": _cmd_profile, "escape": _cmd_escape}[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EX_USAGE
    except InvalidArgument as exc:
        print(f"robustfit: {exc}", file=sys.stderr)
        return EX_USAGE
    except (OSError, ParseError, ValidationError, EvaluationFailure) as exc:
        print(f"robustfit: {exc}", file=sys.stderr)
        return EX_DATAERR


if __name__ == "__main__":
    sys.exit(main())
