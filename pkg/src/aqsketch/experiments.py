"""Workload generators, merge-tree builders and the four experiment drivers.

Every driver returns ``(rows, summary)``: one dict per (trial, query) or
(trial, checkpoint) plus one aggregate dict. ``write_csv`` turns both into a
single CSV table whose last row has ``row=summary``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .diagnostics import (EventTrace, check_invariants, k_lower_bound_ok,
                          verify_potential_properties)
from .keys import KeyKind
from .oracle import ExactOracle, measure_error
from .rng import derive_seed
from .sketch import Sketch, SketchParams

EXPERIMENTS = ("error", "space", "merge-shape", "potential")
DISTRIBUTIONS = ("uniform", "sorted-asc", "sorted-desc", "zipf", "clustered")
SHAPES = ("stream", "balanced", "caterpillar", "random")

ZIPF_S = 1.1
N_CLUSTERS = 100
KEY_RANGE = 1 << 62


@dataclass
class ExperimentConfig:
    experiment: str = "error"
    epsilon: float = 0.1
    delta: float = 0.125
    n: int = 100_000
    dist: str = "uniform"
    shape: str = "stream"
    trials: int = 1
    seed: int = 0
    query_grid: list | None = None  # rank fractions in (0, 1]; default: powers of two
    abs_ranks: int | None = None  # absolute ranks 1..abs_ranks; default C0
    leaf_size: int = 1
    lazy_factor: int = 1
    fixed_input: bool = False  # same data in every trial (only the coins vary)
    checkpoints: list | None = None
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        if self.dist not in DISTRIBUTIONS:
            raise ValueError(f"dist must be one of {DISTRIBUTIONS}")
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.leaf_size < 1:
            raise ValueError("leaf_size must be at least 1")
        self.params  # validates epsilon and delta

    @property
    def params(self) -> SketchParams:
        return SketchParams(self.epsilon, self.delta, KeyKind.U64, self.lazy_factor)

    def trial_seed(self, trial: int) -> int:
        return derive_seed(self.seed, trial)

    def data_seed(self, trial: int) -> int:
        return derive_seed(self.seed ^ 0xDA7A, 0 if self.fixed_input else trial)

    def query_ranks(self, n: int) -> list[int]:
        """Target ranks: fractions of ``n`` plus small absolute ranks, deduplicated."""
        fracs = self.query_grid if self.query_grid is not None else [2.0 ** -j for j in range(1, 21)]
        k = self.abs_ranks if self.abs_ranks is not None else self.params.c0
        ranks = {max(1, int(round(f * n))) for f in fracs}
        ranks.update(range(1, min(k, n) + 1))
        return sorted(r for r in ranks if r <= n)


# -- workloads -------------------------------------------------------------------

def generate(dist: str, n: int, seed: int) -> np.ndarray:
    """``n`` unsigned keys from the named distribution."""
    rng = np.random.default_rng(seed)
    if dist == "uniform":
        return rng.integers(0, KEY_RANGE, n, dtype=np.uint64)
    if dist == "sorted-asc":
        return np.sort(rng.integers(0, KEY_RANGE, n, dtype=np.uint64))
    if dist == "sorted-desc":
        # strictly decreasing
        return np.arange(n, 0, -1, dtype=np.uint64)
    if dist == "zipf":
        return rng.zipf(ZIPF_S, n).astype(np.uint64)
    if dist == "clustered":
        centers = rng.normal(0.0, 1e12, N_CLUSTERS) + 2.0 ** 50
        jitter = rng.integers(-1000, 1001, n)
        return (centers[rng.integers(0, N_CLUSTERS, n)].astype(np.int64) + jitter).astype(np.uint64)
    raise ValueError(f"unknown distribution {dist!r}")


# -- merge shapes ----------------------------------------------------------------

def leaf_sketches(keys: np.ndarray, params: SketchParams, seed: int, leaf_size: int = 1):
    """Yield one sketch per consecutive chunk, each with its own coin substream."""
    seeds = np.random.default_rng(seed).integers(0, 1 << 63, -(-len(keys) // leaf_size), dtype=np.int64)
    for seed_i, start in zip(seeds.tolist(), range(0, len(keys), leaf_size)):
        s = Sketch(params, seed_i)
        s.extend(keys[start:start + leaf_size])
        yield s


def build_balanced(leaves) -> Sketch:
    """Binary-counter merging: only sketches built from equally many leaves meet."""
    stack: list[tuple[int, Sketch]] = []
    for leaf in leaves:
        node, size = leaf, 1
        while stack and stack[-1][0] == size:
            _, left = stack.pop()
            node = left.merge(node)
            size *= 2
        stack.append((size, node))
    _, node = stack.pop()
    while stack:
        _, left = stack.pop()
        node = left.merge(node)
    return node


def build_caterpillar(leaves) -> Sketch:
    it = iter(leaves)
    acc = next(it)
    for leaf in it:
        acc.merge(leaf)
    return acc


def build_random(leaves, seed: int) -> Sketch:
    """Merge two uniformly chosen sketches of a work-list until one is left."""
    rng = np.random.default_rng(seed)
    work = list(leaves)
    while len(work) > 1:
        i, j = rng.choice(len(work), 2, replace=False)
        if i > j:
            i, j = j, i
        work[i].merge(work[j])
        work[j] = work[-1]
        work.pop()
    return work[0]


def build_sketch(keys: np.ndarray, params: SketchParams, shape: str, seed: int,
                 leaf_size: int = 1, observer=None) -> Sketch:
    if shape == "stream":
        s = Sketch(params, seed)
        s.observer = observer
        s.extend(keys)
        return s

    def leaves():
        for leaf in leaf_sketches(keys, params, seed, leaf_size):
            leaf.observer = observer
            yield leaf

    if shape == "balanced":
        return build_balanced(leaves())
    if shape == "caterpillar":
        return build_caterpillar(leaves())
    if shape == "random":
        return build_random(leaves(), derive_seed(seed, 1 << 40))
    raise ValueError(f"unknown shape {shape!r}")


# -- drivers ------------------------------------------------------------------------

def _level_columns(sketch: Sketch) -> dict:
    levels = sketch.levels
    return dict(
        H=len(levels),
        level_C=";".join(str(c.capacity) for c in levels),
        level_K=";".join(str(c.section_len) for c in levels),
        level_P=";".join(str(c.compaction_count) for c in levels),
        level_depth=";".join(str(c.depth) for c in levels),
    )


def _error_trial(cfg: ExperimentConfig, trial: int) -> list[dict]:
    keys = generate(cfg.dist, cfg.n, cfg.data_seed(trial))
    sketch = build_sketch(keys, cfg.params, cfg.shape, cfg.trial_seed(trial), cfg.leaf_size)
    oracle = ExactOracle.from_keys(keys)
    targets = cfg.query_ranks(cfg.n)
    queries = np.array([oracle.key_at_rank(r) for r in targets], dtype=np.uint64)
    rows = []
    for target, (rank, est, err, rel) in zip(targets, measure_error(oracle, sketch.snapshot(), queries)):
        rows.append(dict(row="trial", trial=trial, target_rank=target, rank=rank, estrank=est,
                         err=err, rel_err=rel, fail=int(abs(err) > cfg.epsilon * rank)))
    return rows


def _error_summary(cfg: ExperimentConfig, rows: list[dict]) -> dict:
    by_target: dict[int, list[int]] = {}
    for r in rows:
        by_target.setdefault(r["target_rank"], []).append(r["fail"])
    freqs = {t: sum(v) / len(v) for t, v in by_target.items()}
    worst = max(freqs, key=freqs.get)
    return dict(row="summary", trials=cfg.trials, queries=len(freqs),
                max_fail_freq=freqs[worst], worst_target_rank=worst, delta=cfg.delta,
                all_below_delta=int(all(f < cfg.delta for f in freqs.values())))


def space_envelope(epsilon: float, delta: float, n: int) -> float:
    """Stored-items envelope 10 * eps^-1 * sqrt(ln 1/delta) * log2(eps N)^1.5."""
    return 10.0 / epsilon * math.sqrt(math.log(1.0 / delta)) * max(0.0, math.log2(epsilon * n)) ** 1.5


def capacity_envelope(epsilon: float, delta: float, p: int) -> float:
    """Per-level capacity envelope 10 * sqrt(log2 P) * (eps^-1 sqrt(ln 1/delta) + ln 1/delta)."""
    lid = math.log(1.0 / delta)
    return 10.0 * math.sqrt(math.log2(p)) * (math.sqrt(lid) / epsilon + lid)


def space_row(sketch: Sketch, cfg: ExperimentConfig, trial: int, n: int) -> dict:
    items, markers, c_max = sketch.memory_footprint()
    env = space_envelope(cfg.epsilon, cfg.delta, n)
    cap_ok = all(c.capacity <= capacity_envelope(cfg.epsilon, cfg.delta, c.compaction_count)
                 for c in sketch.levels if c.compaction_count >= 2)
    return dict(row="trial", trial=trial, n=n, stored_items=items, stored_markers=markers,
                c_max=c_max, space_envelope=round(env, 3), within_space=int(items <= env),
                within_capacity=int(cap_ok), **_level_columns(sketch))


def _space_trial(cfg: ExperimentConfig, trial: int) -> list[dict]:
    keys = generate(cfg.dist, cfg.n, cfg.data_seed(trial))
    checkpoints = cfg.checkpoints or sorted({10 ** j for j in range(1, 19) if 10 ** j < cfg.n} | {cfg.n})
    sketch = Sketch(cfg.params, cfg.trial_seed(trial))
    rows = []
    done = 0
    for cp in checkpoints:
        sketch.extend(keys[done:cp])
        done = cp
        rows.append(space_row(sketch, cfg, trial, cp))
    return rows


def _space_summary(cfg: ExperimentConfig, rows: list[dict]) -> dict:
    return dict(row="summary", trials=cfg.trials, max_stored_items=max(r["stored_items"] for r in rows),
                max_c_max=max(r["c_max"] for r in rows),
                all_within_space=int(all(r["within_space"] for r in rows)),
                all_within_capacity=int(all(r["within_capacity"] for r in rows)))


def _merge_shape_trial(cfg: ExperimentConfig, trial: int) -> list[dict]:
    keys = generate(cfg.dist, cfg.n, cfg.data_seed(trial))
    rows = []
    shapes = SHAPES if cfg.shape == "stream" else ("stream", cfg.shape)
    for shape in shapes:
        sketch = build_sketch(keys, cfg.params, shape, cfg.trial_seed(trial), cfg.leaf_size)
        row = space_row(sketch, cfg, trial, cfg.n)
        row["shape"] = shape
        row["max_depth"] = max(c.depth for c in sketch.levels)
        row["invariants_ok"] = int(check_invariants(sketch).ok)
        rows.append(row)
    return rows


def _merge_shape_summary(cfg: ExperimentConfig, rows: list[dict]) -> dict:
    out = dict(row="summary", trials=cfg.trials)
    for shape in sorted({r["shape"] for r in rows}):
        sub = [r for r in rows if r["shape"] == shape]
        out[f"{shape}_max_c_max"] = max(r["c_max"] for r in sub)
        out[f"{shape}_max_stored"] = max(r["stored_items"] for r in sub)
        out[f"{shape}_max_depth"] = max(r["max_depth"] for r in sub)
    out["invariants_ok"] = int(all(r["invariants_ok"] for r in rows))
    return out


def _potential_trial(cfg: ExperimentConfig, trial: int) -> list[dict]:
    keys = generate(cfg.dist, cfg.n, cfg.data_seed(trial))
    trace = EventTrace()
    sketch = build_sketch(keys, cfg.params, cfg.shape, cfg.trial_seed(trial), cfg.leaf_size,
                          observer=trace)
    props = verify_potential_properties(trace.records)
    compact = [r for r in trace.records if r.kind == "compact"]
    row = dict(row="trial", trial=trial, n=cfg.n, compactions=len(compact),
               special=sum(r.compaction == "special" for r in compact),
               param_changes=sum(r.params_changed for r in compact),
               max_dphi=max((r.phi_after - r.phi_before for r in compact), default=0.0),
               k_bound_ok=int(all(k_lower_bound_ok(c) for c in sketch.levels)),
               invariants_ok=int(check_invariants(sketch, trace.records).ok))
    for name, res in props.results.items():
        row[f"{name}_checked"] = res.checked
        row[f"{name}_failed"] = res.failed
    return [row]


def _potential_summary(cfg: ExperimentConfig, rows: list[dict]) -> dict:
    out = dict(row="summary", trials=cfg.trials, max_dphi=max(r["max_dphi"] for r in rows))
    for name in ("P1", "P2", "P3", "P4", "P5"):
        out[f"{name}_checked"] = sum(r[f"{name}_checked"] for r in rows)
        out[f"{name}_failed"] = sum(r[f"{name}_failed"] for r in rows)
    out["invariants_ok"] = int(all(r["invariants_ok"] for r in rows))
    return out


_DRIVERS = {
    "error": (_error_trial, _error_summary),
    "space": (_space_trial, _space_summary),
    "merge-shape": (_merge_shape_trial, _merge_shape_summary),
    "potential": (_potential_trial, _potential_summary),
}


def _run_one(args):
    cfg, trial = args
    return _DRIVERS[cfg.experiment][0](cfg, trial)


def run_experiment(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Run all trials (in worker processes if ``cfg.workers > 1``), rows in trial order."""
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_trial = list(pool.map(_run_one, jobs))
    else:
        per_trial = [_run_one(j) for j in jobs]
    rows = [r for chunk in per_trial for r in chunk]
    summary = _DRIVERS[cfg.experiment][1](cfg, rows)
    summary.update(epsilon=cfg.epsilon, delta=cfg.delta, lazy_factor=cfg.lazy_factor, seed=cfg.seed)
    return rows, summary


def run_error(cfg: ExperimentConfig):
    return run_experiment(_with(cfg, "error"))


def run_space(cfg: ExperimentConfig):
    return run_experiment(_with(cfg, "space"))


def run_merge_shape(cfg: ExperimentConfig):
    return run_experiment(_with(cfg, "merge-shape"))


def run_potential(cfg: ExperimentConfig):
    return run_experiment(_with(cfg, "potential"))


def _with(cfg: ExperimentConfig, experiment: str) -> ExperimentConfig:
    if cfg.experiment == experiment:
        return cfg
    return ExperimentConfig(**{**asdict(cfg), "experiment": experiment})


def write_csv(rows: list[dict], summary: dict | None, sink=None) -> str:
    """Write rows (and the summary as the last row) as CSV; returns the text."""
    table = list(rows) + ([summary] if summary else [])
    fields: dict[str, None] = {}
    for r in table:
        fields.update(dict.fromkeys(r))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for r in table:
        writer.writerow({k: _fmt(v) for k, v in r.items()})
    text = buf.getvalue()
    if sink is not None:
        sink.write(text)
    return text


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return v


# -- randomized update/merge stress ----------------------------------------------------

@dataclass
class StressConfig:
    seed: int = 0
    ops: int = 100_000
    pool: int = 6
    merge_prob: float = 0.03
    epsilon: float = 0.1
    delta: float = 0.125
    key_kind: str = "u64"
    lazy_factor: int = 1
    key_mode: str = "random"  # random, small-range, ascending, descending or mixed

    @classmethod
    def for_seed(cls, seed: int, ops: int = 100_000) -> "StressConfig":
        """Deterministic variety of parameters and workloads across seeds."""
        variants = [
            dict(),
            dict(key_mode="small-range"),
            dict(key_mode="ascending"),
            dict(key_mode="mixed", key_kind="f64"),
            dict(lazy_factor=2, key_mode="mixed"),
            dict(key_mode="descending"),
            dict(epsilon=0.05, delta=0.05, key_mode="mixed"),
            dict(merge_prob=0.1, key_mode="ascending"),
        ]
        return cls(seed=seed, ops=ops, **variants[seed % len(variants)])


class _KeySource:
    def __init__(self, mode: str, rng: np.random.Generator, kind: str):
        self.mode = mode
        self.rng = rng
        self.kind = kind
        self.counter = 0
        self.block = np.empty(0)
        self.pos = 0

    def _refill(self):
        rng, n = self.rng, 4096
        mode = self.mode
        if mode == "mixed":
            mode = ("random", "small-range", "ascending", "descending")[int(rng.integers(0, 4))]
        if mode == "random":
            block = rng.integers(0, 1 << 40, n)
        elif mode == "small-range":
            block = rng.integers(0, 64, n)
        elif mode == "ascending":
            block = np.arange(self.counter, self.counter + n)
        else:
            block = np.arange(self.counter + n, self.counter, -1) + (1 << 41)
        self.counter += n
        if self.kind == "f64":
            block = block.astype(np.float64) * 0.5 - 1e9
        self.block, self.pos = block, 0

    def next(self):
        if self.pos >= len(self.block):
            self._refill()
        v = self.block[self.pos]
        self.pos += 1
        return v.item()


@dataclass
class StressResult:
    config: StressConfig
    invariants: object
    potential: object
    level_checks: int = 0
    level_failures: int = 0
    merges: int = 0
    updates: int = 0
    max_capacity: int = 0
    k_bound_failures: int = 0


def run_stress(cfg: StressConfig, check_every: int = 1) -> StressResult:
    """Random update/merge sequence over a pool of sketches with full tracing.

    After every operation the touched levels of the touched sketch are checked,
    together with the sketch-wide invariants (levels the operation did not touch
    are unchanged since their last check).
    """
    from .diagnostics import InvariantReport, PotentialPropertyReport, verify_potential_properties

    rng = np.random.default_rng(derive_seed(cfg.seed, 0xC0FFEE))
    params = SketchParams(cfg.epsilon, cfg.delta, KeyKind.parse(cfg.key_kind), cfg.lazy_factor)
    keys = _KeySource(cfg.key_mode, rng, cfg.key_kind)
    trace = EventTrace()
    born = 0

    def fresh():
        nonlocal born
        s = Sketch(params, derive_seed(cfg.seed, born))
        s.observer = trace
        born += 1
        return s

    pool = [fresh() for _ in range(cfg.pool)]
    inv = InvariantReport()
    props = verify_potential_properties([])
    result = StressResult(cfg, inv, props)
    for op in range(cfg.ops):
        if rng.random() < cfg.merge_prob:
            i, j = (int(x) for x in rng.choice(cfg.pool, 2, replace=False))
            a, b = pool[i], pool[j]
            baseline = {}
            for h in range(max(a.num_levels, b.num_levels)):
                cs = [s.levels[h] for s in (a, b) if h < s.num_levels]
                baseline[h] = (max(c.capacity for c in cs), min(c.section_len for c in cs))
            a.merge(b)
            pool[j] = fresh()
            sketch = a
            touched = None
            result.merges += 1
        else:
            sketch = pool[int(rng.integers(0, cfg.pool))]
            baseline = {h: (c.capacity, c.section_len) for h, c in enumerate(sketch.levels)}
            sketch.update(keys.next())
            touched = {0}
            result.updates += 1
        records = trace.drain()
        if touched is not None:
            touched.update(r.level for r in records)
            touched.update(h for h in range(len(baseline), sketch.num_levels))
        if op % check_every == 0 or records:
            rep = check_invariants(sketch, records, baseline=baseline, levels=touched)
            inv.merge(rep)
            result.level_checks += 1
            result.level_failures += int(rep.failed("levels"))
        props.merge(verify_potential_properties(records))
        for c in sketch.levels:
            result.max_capacity = max(result.max_capacity, c.capacity)
            if not k_lower_bound_ok(c):
                result.k_bound_failures += 1
    return result
