import numpy as np
import pytest

from aqsketch.diagnostics import check_invariants
from aqsketch.experiments import (DISTRIBUTIONS, SHAPES, ExperimentConfig, build_sketch, generate,
                                  run_experiment, write_csv)
from aqsketch.oracle import ExactOracle
from aqsketch.sketch import SketchParams


@pytest.mark.parametrize("dist", DISTRIBUTIONS)
def test_generators_are_seeded(dist):
    a, b = generate(dist, 1000, 5), generate(dist, 1000, 5)
    assert a.dtype == np.uint64 and len(a) == 1000
    assert (a == b).all()


def test_sorted_desc_is_strictly_decreasing():
    keys = generate("sorted-desc", 1000, 0)
    assert (np.diff(keys.astype(np.int64)) < 0).all()


@pytest.mark.parametrize("shape", SHAPES)
def test_every_shape_ingests_all_items(shape):
    keys = generate("uniform", 3000, 1)
    s = build_sketch(keys, SketchParams(0.1, 0.125), shape, 1, leaf_size=5)
    assert s.n_items == 3000
    assert check_invariants(s).ok
    o = ExactOracle.from_keys(keys)
    q = np.sort(keys)[:64]
    assert (s.snapshot().ranks(q) == o.ranks(q)).all()


def test_query_grid_defaults():
    cfg = ExperimentConfig(n=10 ** 6)
    ranks = cfg.query_ranks(10 ** 6)
    assert ranks[:128] == list(range(1, 129))
    assert 500_000 in ranks and round(10 ** 6 / 2 ** 20) in ranks


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(dist="normal")
    with pytest.raises(ValueError):
        ExperimentConfig(epsilon=1.5)


def test_runs_are_reproducible():
    cfg = ExperimentConfig("error", n=5000, trials=2, seed=3)
    assert write_csv(*run_experiment(cfg)) == write_csv(*run_experiment(cfg))


def test_space_experiment_reverse_sorted_keeps_initial_parameters():
    rows, summary = run_experiment(ExperimentConfig("space", n=100_000, dist="sorted-desc"))
    for r in rows:
        assert set(r["level_C"].split(";")) == {"128"}
        assert set(r["level_K"].split(";")) == {"16"}
    assert summary["max_c_max"] == 128


def test_merge_shape_balanced_not_larger_than_stream():
    rows, summary = run_experiment(ExperimentConfig("merge-shape", n=2 ** 14, shape="balanced"))
    assert summary["balanced_max_c_max"] <= summary["stream_max_c_max"]
    assert summary["balanced_max_depth"] <= 14
    assert summary["invariants_ok"] == 1


def test_potential_experiment_all_properties_hold():
    rows, summary = run_experiment(ExperimentConfig("potential", n=20_000, trials=2, dist="sorted-asc"))
    for p in ("P1", "P2", "P3", "P4", "P5"):
        assert summary[f"{p}_failed"] == 0
    assert summary["P3_checked"] > 0


def test_parallel_workers_match_serial():
    cfg = ExperimentConfig("error", n=3000, trials=3, seed=4)
    par = ExperimentConfig("error", n=3000, trials=3, seed=4, workers=2)
    assert run_experiment(cfg) == run_experiment(par)
