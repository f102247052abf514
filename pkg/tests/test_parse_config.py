import os

import pytest

from sketchlab.bench import load_experiment_config
from sketchlab.utils.parse_config import load_config, parse_experiment_config, parse_value
from sketchlab.utils.utils import InvalidArgument

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "config")


def test_parse_value_coercions():
    assert parse_value("12") == 12
    assert parse_value("1e-5") == 1e-5
    assert parse_value("true") is True
    assert parse_value("None") is None
    assert parse_value("8,8,16") == [8, 8, 16]
    assert parse_value(" 3-AH ") == "3-AH"


def test_blocks_keep_order_and_comments(tmp_path):
    path = tmp_path / "x.cfg"
    path.write_text("# header\n[experiment]\ntrials=5\n\n[input]\nkind=svd\nn = 64\n")
    blocks = parse_experiment_config(str(path))
    assert blocks == [{"type": "experiment", "trials": 5}, {"type": "input", "kind": "svd", "n": 64}]


def test_malformed_files(tmp_path):
    orphan = tmp_path / "orphan.cfg"
    orphan.write_text("trials=5\n")
    with pytest.raises(InvalidArgument):
        parse_experiment_config(str(orphan))
    header = tmp_path / "header.cfg"
    header.write_text("[experiment\ntrials=5\n")
    with pytest.raises(InvalidArgument):
        parse_experiment_config(str(header))
    with pytest.raises(InvalidArgument):
        load_config(str(tmp_path / "missing.cfg"))


def test_shipped_configs_load():
    cfg = load_experiment_config(os.path.join(CONFIG_DIR, "table2_ah.cfg"))
    assert cfg.input == "svd" and cfg.input_params["n"] == 256 and cfg.multiplier == "3-AH"
    lap = load_experiment_config(os.path.join(CONFIG_DIR, "laplacian.cfg"), trials=3)
    assert lap.trials == 3 and lap.power_iterations == 3 and lap.fresh_input is False
    rec = load_experiment_config(os.path.join(CONFIG_DIR, "recursive.cfg"))
    assert rec.block_sizes == [8, 8, 16, 32, 64, 128, 256] and rec.estimator == "frievalds"
    assert sum(rec.block_sizes) == rec.input_params["n"]
    dual = load_experiment_config(os.path.join(CONFIG_DIR, "dual_bound.json"))
    assert dual.input == "factor-gaussian" and dual.l == 24 and dual.input_params["normalize"] is True
    assert dual.tau == "bound" and dual.tau_bound == "dual" and dual.failure_probability == 0.05


def test_unknown_setting_is_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[experiment]\nwidth=3\n")
    with pytest.raises(InvalidArgument):
        load_experiment_config(str(path))
