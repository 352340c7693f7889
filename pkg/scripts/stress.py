"""Randomized update/merge stress with invariant and potential checks after every operation."""

import argparse
import sys
import time

from aqsketch import compactor
from aqsketch.experiments import StressConfig, run_stress


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=8)
    parser.add_argument("--first-seed", type=int, default=0)
    parser.add_argument("--ops", type=int, default=100_000)
    parser.add_argument("--debug", action="store_true",
                        help="assert exactly K unmarked items at each parameter change")
    parser.add_argument("-v", "--verbose", action="store_true", help="print per-invariant lines")
    args = parser.parse_args(argv)
    compactor.DEBUG = compactor.DEBUG or args.debug
    bad = 0
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        cfg = StressConfig.for_seed(seed, args.ops)
        start = time.perf_counter()
        res = run_stress(cfg)
        ok = res.invariants.ok and res.potential.ok and res.level_failures == 0
        bad += not ok
        print(f"seed {seed} mode={cfg.key_mode} kind={cfg.key_kind} lazy={cfg.lazy_factor} "
              f"eps={cfg.epsilon}: {'ok' if ok else 'FAIL'} merges={res.merges} "
              f"max_C={res.max_capacity} warnings={len(res.invariants.warnings)} "
              f"{time.perf_counter() - start:.1f}s")
        if args.verbose or not ok:
            for line in res.invariants.lines() + res.potential.lines():
                print("   ", line)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
