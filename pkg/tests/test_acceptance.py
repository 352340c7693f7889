"""Acceptance criteria A1-A10.

Each test records a one-line result in ``helpers.ACCEPTANCE``; conftest prints
one pass/fail line per criterion at the end of the run. These are long
statistical and stress runs (tens of minutes on one core in total).
"""

import math
import time

import numpy as np
import pytest

from aqsketch import compactor as compactor_module
from aqsketch.compactor import NAIVE, SPECIAL, STANDARD, initial_params
from aqsketch.experiments import (StressConfig, build_balanced, build_random, capacity_envelope,
                                  generate, leaf_sketches, run_stress, space_envelope)
from aqsketch.oracle import ExactOracle
from aqsketch.rng import derive_seed
from aqsketch.sketch import Sketch, SketchParams

from helpers import record_acceptance

pytestmark = pytest.mark.slow

A1_RUNS = 200
A1_N = 100_000
A1_LEAF = 64  # chunk leaves stay below C0, so each is an exact merge of single-item sketches
A2_SEEDS = 500
A2_N = 1_000_000
A3_SEEDS = 2000
A3_N = 100_000
A7_SEEDS = 50
A7_OPS = 100_000
A9_SKETCHES = 100


class KindCounter:
    """Minimal observer counting compactions by kind."""

    def __init__(self):
        self.kinds = {STANDARD: 0, SPECIAL: 0, NAIVE: 0}
        self.changes = 0

    def before_insert(self, sketch, h, comp):
        return None

    def after_insert(self, sketch, h, comp, token):
        pass

    def before_compact(self, sketch, h, comp):
        return None

    def after_compact(self, sketch, h, comp, token, outcome):
        self.kinds[outcome.kind] += 1
        self.changes += int(outcome.params_changed)

    def before_merge(self, sketch, h, a, b):
        return None

    def after_merge(self, sketch, h, merged, token):
        pass


def small_rank_queries(oracle: ExactOracle, limit: int) -> np.ndarray:
    """Inserted keys and their neighbours whose true rank is at most ``limit``."""
    codes = np.unique(oracle.codes[:limit])
    cand = np.unique(np.concatenate((codes, codes[codes > 0] - np.uint64(1), codes + np.uint64(1))))
    return cand[oracle.ranks(cand) <= limit]


def test_a1_small_rank_exactness():
    params = SketchParams(0.1, 0.125)
    assert params.c0 == 128
    dists = ("uniform", "zipf", "clustered", "sorted-asc", "sorted-desc")
    start = time.perf_counter()
    checked = mismatched = 0
    first_bad = ""
    for run in range(A1_RUNS):
        keys = generate(dists[run % len(dists)], A1_N, derive_seed(0xA1, run))
        oracle = ExactOracle.from_keys(keys)
        queries = small_rank_queries(oracle, 64)
        truth = oracle.ranks(queries)
        stream = Sketch(params, derive_seed(0xA1A, run))
        stream.extend(keys)
        tree = build_random(leaf_sketches(keys, params, derive_seed(0xA1B, run), A1_LEAF),
                            derive_seed(0xA1C, run))
        for label, sketch in (("stream", stream), ("tree", tree)):
            est = sketch.snapshot().ranks(queries)
            bad = est != truth
            checked += len(queries)
            mismatched += int(bad.sum())
            if bad.any() and not first_bad:
                i = int(np.argmax(bad))
                first_bad = f"{label} run {run}: rank {truth[i]} estimated {est[i]}"
    elapsed = time.perf_counter() - start
    record_acceptance("A1", f"{checked} queries with rank <= 64, {mismatched} inexact; "
                            f"runtime {elapsed:.0f}s (budget 60s, informational)")
    assert mismatched == 0, first_bad


def test_a2_relative_error_failure_rate():
    eps = delta = 0.05
    params = SketchParams(eps, delta)
    targets = np.unique(np.round(np.geomspace(32, A2_N // 2, 12)).astype(np.int64))
    assert len(targets) == 12
    fails = np.zeros(len(targets))
    for seed in range(A2_SEEDS):
        keys = generate("uniform", A2_N, derive_seed(0xA2, seed))
        oracle = ExactOracle.from_keys(keys)
        queries = np.array([oracle.key_at_rank(int(r)) for r in targets], dtype=np.uint64)
        truth = oracle.ranks(queries)
        sketch = Sketch(params, derive_seed(0xA2A, seed))
        sketch.extend(keys)
        err = sketch.snapshot().ranks(queries).astype(np.int64) - truth.astype(np.int64)
        fails += np.abs(err) > eps * truth
    rate = fails / A2_SEEDS
    slack = delta + 3 * math.sqrt(delta * (1 - delta) / A2_SEEDS)
    worst = int(np.argmax(rate))
    record_acceptance("A2", f"max failure rate {rate[worst]:.4f} at rank {targets[worst]} "
                            f"(limit 0.08, slack formula {slack:.4f})")
    assert rate.max() < 0.08, dict(zip(targets.tolist(), rate.tolist()))


def test_a3_unbiasedness():
    params = SketchParams(0.05, 0.05)
    keys = generate("uniform", A3_N, 0xA3)
    oracle = ExactOracle.from_keys(keys)
    query = oracle.key_at_rank(A3_N // 4)
    true_rank = oracle.rank(query)
    start = time.perf_counter()
    errs = np.empty(A3_SEEDS)
    for seed in range(A3_SEEDS):
        sketch = Sketch(params, derive_seed(0xA3A, seed))
        sketch.extend(keys)
        errs[seed] = sketch.rank(query) - true_rank
    elapsed = time.perf_counter() - start
    mean, sd = errs.mean(), errs.std(ddof=1)
    bound = 4 * sd / math.sqrt(A3_SEEDS)
    record_acceptance("A3", f"mean err {mean:.3f}, sd {sd:.2f}, bound {bound:.3f}; "
                            f"runtime {elapsed:.0f}s (budget 120s, informational)")
    assert abs(mean) <= bound


def test_a4_space_envelope():
    eps = delta = 0.05
    params = SketchParams(eps, delta)
    checkpoints = (10 ** 4, 10 ** 5, 10 ** 6)
    seeds = 5
    worst_items = 0.0  # stored_items / envelope
    worst_cap = 0.0  # C / envelope over levels with P >= 2
    cap_fail = []
    items_fail = []
    for seed in range(seeds):
        keys = generate("uniform", checkpoints[-1], derive_seed(0xA4, seed))
        sketch = Sketch(params, derive_seed(0xA4A, seed))
        done = 0
        for n in checkpoints:
            sketch.extend(keys[done:n])
            done = n
            items = sketch.memory_footprint()[0]
            ratio = items / space_envelope(eps, delta, n)
            worst_items = max(worst_items, ratio)
            if ratio > 1:
                items_fail.append((seed, n, items))
            for h, c in enumerate(sketch.levels):
                if c.compaction_count < 2:  # log2 P is not positive
                    continue
                ratio = c.capacity / capacity_envelope(eps, delta, c.compaction_count)
                worst_cap = max(worst_cap, ratio)
                if ratio > 1:
                    cap_fail.append((seed, n, h, c.capacity, c.compaction_count))
    record_acceptance("A4", f"stored/envelope max {worst_items:.3f}; per-level C/envelope max "
                            f"{worst_cap:.3f} (constant needed {10 * worst_cap:.1f}), "
                            f"{len(cap_fail)} level violations")
    assert not items_fail, items_fail
    assert not cap_fail, cap_fail[:10]


@pytest.mark.parametrize("eps, delta", [(0.1, 0.125), (0.05, 0.05)])
def test_a5_reverse_sorted_never_adapts(eps, delta):
    n = 1_000_000
    params = SketchParams(eps, delta)
    k0, c0 = initial_params(eps, delta)
    keys = generate("sorted-desc", n, 0)
    assert (np.diff(keys.astype(np.int64)) < 0).all()
    sketch = Sketch(params, seed=5)
    counter = KindCounter()
    sketch.observer = counter
    sketch.extend(keys)
    items = sketch.memory_footprint()[0]
    bound = c0 * (math.log2(eps * n) + 2)
    params_ok = all((c.section_len, c.capacity) == (k0, c0) for c in sketch.levels)
    record_acceptance("A5", f"eps={eps}: {counter.kinds[STANDARD]} standard, "
                            f"{counter.kinds[SPECIAL]} special; stored {items} <= {bound:.0f}")
    assert counter.kinds[SPECIAL] == 0 and counter.kinds[NAIVE] == 0
    assert params_ok
    assert items <= bound


def test_a6_balanced_merge_depth_and_capacity():
    n = 1 << 20
    params = SketchParams(0.1, 0.125)
    keys = generate("uniform", n, 0xA6)
    balanced = build_balanced(leaf_sketches(keys, params, 0xA6A, 1))
    stream = Sketch(params, 0xA6A)
    stream.extend(keys)
    depth = max(c.depth for c in balanced.levels)
    cap_b = max(c.capacity for c in balanced.levels)
    cap_s = max(c.capacity for c in stream.levels)
    record_acceptance("A6", f"balanced max depth {depth} (limit 20); max C balanced {cap_b} "
                            f"vs streaming {cap_s}")
    assert balanced.n_items == n
    assert depth <= 20
    assert cap_b <= cap_s


@pytest.fixture(scope="module")
def stress_runs():
    old = compactor_module.DEBUG
    compactor_module.DEBUG = True  # also assert exactly K unmarked items at every parameter change
    try:
        return [run_stress(StressConfig.for_seed(seed, A7_OPS)) for seed in range(A7_SEEDS)]
    finally:
        compactor_module.DEBUG = old


def test_a7_invariant_stress(stress_runs):
    failures = [(r.config.seed, r.invariants.summary()) for r in stress_runs if not r.invariants.ok]
    checks = sum(r.level_checks for r in stress_runs)
    merges = sum(r.merges for r in stress_runs)
    warnings = sum(len(r.invariants.warnings) for r in stress_runs)
    k_bound = sum(r.k_bound_failures for r in stress_runs)
    record_acceptance("A7", f"{A7_SEEDS} seeds x {A7_OPS} ops, {checks} checks, {merges} merges, "
                            f"{len(failures)} failing seeds; soft warnings {warnings}; "
                            f"K lower-bound misses {k_bound}")
    assert not failures, failures[:3]
    assert k_bound == 0


def test_a8_potential_properties(stress_runs):
    total = stress_runs[0].potential
    for r in stress_runs[1:]:
        total.merge(r.potential)
    summary = ", ".join(f"{name} {total[name].checked - total[name].failed}/{total[name].checked}"
                        for name in ("P1", "P2", "P3", "P4", "P5"))
    record_acceptance("A8", f"{summary}; max compaction increase {total['P4'].worst:.6f} "
                            f"(bound {2 + math.sqrt(2):.6f})")
    assert total.ok, total.lines()
    for name in ("P1", "P3", "P4", "P5"):
        assert total[name].checked > 0


def random_ops_sketch(seed: int, ops: int) -> Sketch:
    rng = np.random.default_rng(seed)
    kind = ("u64", "f64")[seed % 2]
    eps, delta = ((0.1, 0.125), (0.2, 0.1), (0.05, 0.05))[seed % 3]
    lazy = 1 + (seed // 2) % 2
    pool = [Sketch.create(eps, delta, seed=seed * 7 + i, key_kind=kind, lazy_factor=lazy)
            for i in range(3)]
    for _ in range(ops):
        if rng.random() < 0.01:
            i, j = rng.choice(3, 2, replace=False)
            pool[i].merge(pool[j])
        else:
            batch = rng.integers(0, int(rng.choice([50, 1 << 40])), int(rng.integers(1, 200)))
            if kind == "f64":
                batch = batch.astype(np.float64) / 3.0 - 7.0
            pool[int(rng.integers(0, 3))].extend(batch)
    return pool[0]


def test_a9_determinism_and_persistence():
    same = all(random_ops_sketch(seed, 300).to_bytes() == random_ops_sketch(seed, 300).to_bytes()
               for seed in range(10))
    roundtrip_ok = 0
    for seed in range(A9_SKETCHES):
        sketch = random_ops_sketch(seed, int(np.random.default_rng(seed).integers(1, 400)))
        data = sketch.to_bytes()
        back = Sketch.from_bytes(data)
        again = back.to_bytes()
        roundtrip_ok += int(again == data and back.n_items == sketch.n_items)
    record_acceptance("A9", f"repeat runs identical: {same}; roundtrips byte-identical "
                            f"{roundtrip_ok}/{A9_SKETCHES}")
    assert same
    assert roundtrip_ok == A9_SKETCHES


def test_a10_level_bound(stress_runs):
    checks = sum(r.level_checks for r in stress_runs)
    fails = sum(r.level_failures for r in stress_runs)
    record_acceptance("A10", f"{checks} level-bound checks after operations, {fails} failures")
    assert checks >= A7_SEEDS * A7_OPS
    assert fails == 0
