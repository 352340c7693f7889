"""Measure stored items and per-level capacity against the space envelopes.

Prints the envelope constant each workload would need (the envelopes use 10).
"""

import argparse
import sys

from aqsketch.experiments import DISTRIBUTIONS, capacity_envelope, generate, space_envelope
from aqsketch.rng import derive_seed
from aqsketch.sketch import Sketch, SketchParams


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--eps", type=float, default=0.05)
    parser.add_argument("--delta", type=float, default=0.05)
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--checkpoints", type=int, nargs="+", default=[10 ** 4, 10 ** 5, 10 ** 6])
    args = parser.parse_args(argv)
    params = SketchParams(args.eps, args.delta)
    print("dist,seed,n,stored_items,items_constant,worst_level,C,P,capacity_constant")
    for dist in DISTRIBUTIONS:
        for seed in range(args.seeds):
            keys = generate(dist, args.checkpoints[-1], derive_seed(seed, 1))
            sketch = Sketch(params, derive_seed(seed, 2))
            done = 0
            for n in args.checkpoints:
                sketch.extend(keys[done:n])
                done = n
                items = sketch.memory_footprint()[0]
                items_c = 10 * items / space_envelope(args.eps, args.delta, n)
                worst = max(((10 * c.capacity / capacity_envelope(args.eps, args.delta, c.compaction_count), h)
                             for h, c in enumerate(sketch.levels) if c.compaction_count >= 2),
                            default=(0.0, -1))
                lvl = sketch.levels[worst[1]]
                print(f"{dist},{seed},{n},{items},{items_c:.2f},{worst[1]},{lvl.capacity},"
                      f"{lvl.compaction_count},{worst[0]:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
