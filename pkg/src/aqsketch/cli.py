"""Command-line entry point: build, merge, query, check and experiment."""

from __future__ import annotations

import argparse
import sys

from . import persistence
from .compactor import validate_params
from .diagnostics import check_invariants, potential
from .errors import (EmptySketchError, FormatError, IncompatibleParametersError,
                     InvalidKeyError, InvariantViolationError, ParameterError, StreamParseError)
from .experiments import DISTRIBUTIONS, EXPERIMENTS, SHAPES, ExperimentConfig, run_experiment, write_csv
from .keys import KeyKind
from .sketch import Sketch

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4

_DATA_ERRORS = (OSError, FormatError, IncompatibleParametersError, InvalidKeyError,
                StreamParseError, EmptySketchError, ParameterError, ValueError)


def _epsilon(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"epsilon must lie in (0, 1), got {text}")
    return value


def _delta(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 0.125:
        raise argparse.ArgumentTypeError(f"delta must lie in (0, 1/8], got {text}")
    return value


def _parse_key(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def cmd_build(args) -> int:
    validate_params(args.eps, args.delta)
    sketch = Sketch.create(args.eps, args.delta, args.seed, key_kind=args.key_kind,
                           lazy_factor=args.lazy)
    source = sys.stdin.buffer if args.input == "-" else args.input
    keys = persistence.read_stream_array(source, args.format, args.key_kind)
    sketch.extend(keys)
    persistence.save(sketch, args.output)
    items, markers, c_max = sketch.memory_footprint()
    print(f"N={sketch.n_items} H={sketch.num_levels} stored_items={items} "
          f"stored_markers={markers} c_max={c_max}")
    return EXIT_OK


def cmd_merge(args) -> int:
    a = persistence.load(args.a, lazy_factor=args.lazy)
    b = persistence.load(args.b, lazy_factor=args.lazy)
    a.merge(b)
    report = check_invariants(a)
    if not report.ok:
        print("\n".join(report.lines()), file=sys.stderr)
        return EXIT_INVARIANT
    persistence.save(a, args.output)
    items, _, c_max = a.memory_footprint()
    print(f"N={a.n_items} H={a.num_levels} stored_items={items} c_max={c_max}")
    return EXIT_OK


def cmd_query(args) -> int:
    sketch = persistence.load(args.sketch)
    snap = sketch.snapshot()
    for text in args.rank or ():
        print(f"rank {text} {snap.rank(_parse_key(text))}")
    for phi in args.quantile or ():
        print(f"quantile {phi} {snap.quantile(phi)}")
    return EXIT_OK


def cmd_check(args) -> int:
    sketch = persistence.load(args.sketch, check=False)
    report = check_invariants(sketch)
    print(f"N={sketch.n_items} H={sketch.num_levels}")
    for h, comp in enumerate(sketch.levels):
        try:
            phi = f"{potential(comp).total:.6g}"
        except Exception as exc:  # marking may not exist on a corrupted file
            phi = f"unavailable ({exc})"
        print(f"level {h}: C={comp.capacity} K={comp.section_len} |B|={len(comp)} "
              f"|M|={len(comp.markers)} phi={phi}")
    print("\n".join(report.lines()))
    return EXIT_OK if report.ok else EXIT_INVARIANT


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(
        experiment=args.experiment, epsilon=args.eps, delta=args.delta, n=args.n, dist=args.dist,
        shape=args.shape, trials=args.trials, seed=args.seed, leaf_size=args.leaf_size,
        lazy_factor=args.lazy, fixed_input=args.fixed_input, workers=args.workers,
        query_grid=args.query_grid, abs_ranks=args.abs_ranks)
    rows, summary = run_experiment(cfg)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            write_csv(rows, summary, fh)
        print(", ".join(f"{k}={v}" for k, v in summary.items()))
    else:
        write_csv(rows, summary, sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqsketch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_params=True):
        if with_params:
            p.add_argument("--eps", type=_epsilon, default=0.1)
            p.add_argument("--delta", type=_delta, default=0.125)
        p.add_argument("--lazy", type=int, choices=(1, 2), default=1,
                       help="compact at |B| >= lazy*C")

    p = sub.add_parser("build", help="stream a file into a new sketch")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", required=True, help="input path, or - for stdin")
    p.add_argument("--format", choices=persistence.STREAM_FORMATS, default="text-lines")
    p.add_argument("--key-kind", type=KeyKind.parse, default=KeyKind.U64,
                   help="u64 (default) or f64")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("merge", help="merge two sketch files")
    common(p, with_params=False)
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("query", help="rank or quantile queries")
    p.add_argument("sketch")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--rank", nargs="+", metavar="KEY")
    group.add_argument("--quantile", nargs="+", type=float, metavar="PHI")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("check", help="run the invariant suite on a sketch file")
    p.add_argument("sketch")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("experiment", help="run an experiment and emit CSV")
    common(p)
    p.add_argument("--experiment", choices=EXPERIMENTS, default="error")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--dist", choices=DISTRIBUTIONS, default="uniform")
    p.add_argument("--shape", choices=SHAPES, default="stream")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--leaf-size", type=int, default=1)
    p.add_argument("--fixed-input", action="store_true", help="same data in every trial")
    p.add_argument("--query-grid", type=float, nargs="+", help="rank fractions of N")
    p.add_argument("--abs-ranks", type=int, help="also query absolute ranks 1..K (default C0)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolationError as exc:
        print(f"error: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
