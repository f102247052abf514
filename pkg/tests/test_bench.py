import json
import os

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from sketchlab import bench
from sketchlab import multipliers as mp
from sketchlab.rangefinder import theoretical_error_bound
from sketchlab.utils.utils import InvalidArgument, RngStream, SketchlabError

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "config")


def small_config(**kwargs):
    settings = dict(name="small", input="svd", input_params={"n": 64, "r": 4}, multiplier="3-ASPH", trials=3, seed=3)
    settings.update(kwargs)
    return bench.ExperimentConfig(**settings)


def test_experiment_config_validation():
    with pytest.raises(InvalidArgument):
        bench.ExperimentConfig(sample_count=3)
    with pytest.raises(InvalidArgument):
        bench.ExperimentConfig(trials=0)
    with pytest.raises(InvalidArgument):
        bench.ExperimentConfig(tau=-1.0)
    with pytest.raises(InvalidArgument):
        bench.ExperimentConfig(estimator="hutchinson")
    with pytest.raises(InvalidArgument):
        bench.ExperimentConfig(tau="bound", block_sizes=[8, 8])
    with pytest.raises(InvalidArgument):
        bench.ExperimentConfig(tau_bound="tight")
    with pytest.raises(InvalidArgument):
        bench.ExperimentConfig(failure_probability=1.0)
    with pytest.raises(InvalidArgument):
        bench.ExperimentConfig(block_sizes="halving")
    assert bench.ExperimentConfig(block_sizes="doubling").block_sizes == "doubling"
    cfg = bench.ExperimentConfig(block_sizes=8)
    assert cfg.block_sizes == [8]
    assert cfg.replace(trials=4).trials == 4 and cfg.trials == 10


def test_build_multiplier_from_descriptor_and_recipe():
    B = bench.build_multiplier("3-AH", 32, RngStream(0))
    rebuilt = bench.build_multiplier(B.to_json(), 32, RngStream(1))
    assert rebuilt.shape == (32, 32)
    with pytest.raises(InvalidArgument):
        bench.build_multiplier(B.to_json(), 64, RngStream(1))


def test_trivial_tolerance_succeeds_and_echoes_config():
    report = bench.run_experiment(small_config(trials=1, tau=1.0), progress=False)
    assert report.success_rate == 1.0
    assert report.config["multiplier"] == "3-ASPH" and report.config["tau"] == 1.0
    assert report.outcomes[0].l_used == 4 + 12


def test_runs_are_deterministic_across_worker_counts():
    first = bench.run_experiment(small_config(), progress=False)
    again = bench.run_experiment(small_config(), progress=False)
    threaded = bench.run_experiment(small_config(workers=2), progress=False)
    assert first.seeds == [3 ^ i for i in range(3)] == threaded.seeds
    assert_allclose(first.deltas, again.deltas, rtol=0, atol=0)
    assert_allclose(first.deltas, threaded.deltas, rtol=1e-10)
    assert first.aggregates_consistent()
    assert first.outcomes[0].tau == 10 * 1e-10


def test_report_json_and_csv(tmp_path):
    report = bench.run_experiment(small_config(), progress=False)
    path = str(tmp_path / "report.json")
    report.save(path)
    with open(path) as fp:
        data = json.load(fp)
    assert data["schema_version"] == bench.SCHEMA_VERSION
    assert len(data["deltas"]) == 3 and len(data["seeds"]) == 3
    loaded = bench.ExperimentReport.load(path)
    assert_allclose(loaded.deltas, report.deltas)
    assert loaded.mean == report.mean and loaded.aggregates_consistent()

    csv_path = str(tmp_path / "report.csv")
    report.save(csv_path, fmt="csv")
    frame = pd.read_csv(csv_path)
    assert list(frame["index"]) == [0, 1, 2]
    assert_allclose(frame["delta"], report.deltas)
    with pytest.raises(InvalidArgument):
        report.save(str(tmp_path / "report.xml"), fmt="xml")

    data["schema_version"] = 99
    with pytest.raises(InvalidArgument):
        bench.ExperimentReport.from_dict(data)


def test_recursive_experiment():
    cfg = small_config(input_params={"n": 128, "r": 8}, block_sizes=[8, 8, 16, 32, 64], tau=1e-6, trials=2)
    report = bench.run_experiment(cfg, progress=False)
    assert report.success_rate == 1.0
    assert all(o.l_used in (8, 16, 32) and o.stage >= 1 for o in report.outcomes)


def test_doubling_blocks_cover_the_order():
    cfg = small_config(input_params={"n": 128, "r": 8}, block_sizes="doubling", tau=1e-6, trials=2)
    report = bench.run_experiment(cfg, progress=False)
    assert report.success_rate == 1.0
    assert all(o.l_used in (8, 16, 32, 64, 128) for o in report.outcomes)


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIG_DIR)))
def test_shipped_config_runs(name):
    cfg = bench.load_experiment_config(os.path.join(CONFIG_DIR, name), trials=2)
    report = bench.run_experiment(cfg, progress=False)
    assert len(report.outcomes) == 2 and report.aggregates_consistent()
    if cfg.block_sizes:
        assert sum(cfg.block_sizes) == cfg.input_params["n"]


def test_bound_tolerance_uses_the_dual_factor():
    B = mp.restrict_columns(mp.abridged_hadamard(512, 3), l=24)
    expected = theoretical_error_bound(512, 512, 16, 24, 1.0, "dual").expected_f_dual * 1e-12 / 0.05
    assert_allclose(bench.bound_tolerance(512, 512, 16, B, 1e-12), expected)
    G = mp.restrict_columns(mp.gaussian(64, RngStream(1)), l=12)
    kappa = np.linalg.cond(mp.densify(G))
    primal = theoretical_error_bound(64, 64, 4, 12, kappa, "primal").expected_f
    assert_allclose(bench.bound_tolerance(64, 64, 4, G, 1e-10, "primal", 0.1), primal * 1e-10 / 0.1)


def test_dual_factor_gaussian_fails_at_most_five_percent():
    cfg = bench.load_experiment_config(os.path.join(CONFIG_DIR, "dual_bound.json"), trials=60)
    report = bench.run_experiment(cfg, progress=False)
    assert 1.0 - report.success_rate <= 0.05
    bound = theoretical_error_bound(512, 512, 16, 24, kind="dual").expected_f_dual
    assert all(o.tau > bound * 1e-13 / 0.05 for o in report.outcomes)


def test_fixed_laplacian_input_uses_numerical_rank():
    cfg = bench.ExperimentConfig(input="laplacian", input_params={"n": 200}, multiplier="gaussian", oversampling=0,
                                 power_iterations=3, fresh_input=False, trials=2)
    report = bench.run_experiment(cfg, progress=False)
    r = report.outcomes[0].r
    assert 20 <= r <= 30
    assert all(o.l_used == r for o in report.outcomes)
    low, high = bench.BRACKETS[6]
    assert low <= report.mean <= high


def test_failing_trial_reports_index_and_seed():
    with pytest.raises(SketchlabError, match=r"trial 0 \(seed 3\) failed"):
        bench.run_experiment(small_config(l=100), progress=False)


def test_logdir_writes_tensorboard_events(tmp_path):
    bench.run_experiment(small_config(trials=2, logdir=str(tmp_path)), progress=False)
    events = [name for _, _, files in os.walk(str(tmp_path)) for name in files if "tfevents" in name]
    assert events


def test_table2_cell_lies_in_bracket():
    cfg = bench._svd_config(256, 8, "3-AH", trials=5, seed=0, workers=1)
    report = bench.run_experiment(cfg, progress=False)
    low, high = bench.BRACKETS[2]
    assert low <= report.mean <= high
    assert report.outcomes[0].l_used == 8 + bench.SVD_OVERSAMPLING


@pytest.mark.parametrize("table_id", [2, 3, 4, 5, 6, 7, 8, 9])
def test_desk_cell_of_every_table_lies_in_bracket(table_id):
    table = bench.reproduce_table(table_id, trials=3, rows=[0])
    assert len(table.rows) == 1
    assert table.all_within(), table.to_frame()[["column", "mean"]].to_dict("records")


def test_reproduce_table_layout(tmp_path):
    table = bench.reproduce_table(2, trials=1)
    assert len(table.rows) == 6
    assert all(list(row.cells) == bench.SVD_TABLE_MULTIPLIERS[2] for row in table.rows)
    assert len(table.reports) == 18
    frame = table.to_frame()
    assert len(frame) == 18 and set(frame["column"]) == {"3-AH", "3-ASPH", "ternary"}
    table.save(str(tmp_path / "table.json"))
    table.print_table()
    with pytest.raises(InvalidArgument):
        bench.reproduce_table(11)
    with pytest.raises(InvalidArgument):
        bench.reproduce_table(2, scale="huge")
    with pytest.raises(InvalidArgument):
        bench.reproduce_table(2, rows=[6])


def test_table_layouts():
    assert len(bench._table_layout(6, "desk")) == 10
    assert len(bench._table_layout(6, "full")) == 20
    assert len(bench._table_layout(7, "desk")) == 15
    eight = bench._table_layout(8, "desk")
    assert len(eight) == 6 and len(eight[0][1]) == 8
    nine = bench._table_layout(9, "full")
    assert len(nine) == 18 and list(nine[0][1]) == ["SVD", "Laplacian", "FD"]
    assert list(bench._table_layout(9, "desk")[0][1]) == ["SVD"]


@pytest.mark.parametrize("n", [128, 512, 1024])
def test_flop_audit_matches_the_table(n):
    rows = bench.flop_audit(n=n)
    assert [row.family for row in rows] == list(bench.AUDIT_FAMILIES)
    assert all(row.ok for row in rows), [row.family for row in rows if not row.ok]
    ah = rows[0]
    assert ah.additions == 3 * n and ah.multiplications == 0
    bench.print_audit(rows)


def test_flop_audit_rejects_unknown_family():
    with pytest.raises(InvalidArgument):
        bench.flop_audit(["fft"], n=64)


def test_gaussian_norms_rectangular():
    summary = bench.monte_carlo_gaussian_norms(200, 100, trials=200, rng=1)
    assert summary.norm_ok and summary.pinv_ok and summary.tail_ok
    assert summary.pinv_tail_ok is None and summary.notice == ""
    assert bench.norms_ok(summary)
    vector = bench.monte_carlo_gaussian_norms(100, 1, trials=200, rng=2)
    assert bench.norms_ok(vector)
    assert_allclose(vector.mean_norm, np.sqrt(100), rtol=0.05)


def test_gaussian_norms_square_skips_expectation():
    summary = bench.monte_carlo_gaussian_norms(100, 100, trials=200, rng=3)
    assert summary.pinv_ok is None and "m != n" in summary.notice
    assert np.isnan(summary.pinv_bound)
    assert summary.pinv_tail_ok
    assert bench.norms_ok(summary)
    with pytest.raises(InvalidArgument):
        bench.monte_carlo_gaussian_norms(0, 3)
