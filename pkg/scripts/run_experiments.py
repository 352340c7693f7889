"""Run each experiment through the CLI and write one CSV per experiment."""

import argparse
import pathlib
import sys

from aqsketch.cli import main as cli_main

PLANS = {
    "error": ["--experiment", "error", "--eps", "0.05", "--delta", "0.05", "--n", "1000000"],
    "space": ["--experiment", "space", "--eps", "0.05", "--delta", "0.05", "--n", "1000000"],
    "merge-shape": ["--experiment", "merge-shape", "--eps", "0.1", "--delta", "0.125",
                    "--n", "100000", "--leaf-size", "16"],
    "potential": ["--experiment", "potential", "--eps", "0.1", "--delta", "0.125", "--n", "100000"],
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--only", choices=sorted(PLANS), nargs="+")
    args = parser.parse_args(argv)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only or PLANS:
        csv = out / f"{name}.csv"
        print(f"[{name}] -> {csv}")
        code = cli_main(["experiment", *PLANS[name], "--trials", str(args.trials),
                         "--seed", str(args.seed), "--workers", str(args.workers), "--csv", str(csv)])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
