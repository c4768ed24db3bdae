import json
import math
import os
import subprocess
import sys

import pytest

from dgreedy.errors import ConfigError
from dgreedy.experiments import (
    ExperimentConfig,
    ReportTable,
    TABLE_HEADER,
    emit_outputs,
    make_synthetic_saddle,
    parse_config,
    run_experiment,
)


def test_default_config():
    cfg = parse_config(text="")
    assert cfg.problem == "cd"
    assert cfg.trial_level == 5 and cfg.test_level == 6
    assert cfg.sample_count == 100
    assert cfg.zeta == 0.5 and cfg.delta == 0.5 and cfg.omega == 1e-2
    assert cfg.parameter_interval == pytest.approx((0.2, math.pi - 0.2))


def test_config_validation_messages():
    with pytest.raises(ConfigError) as err:
        parse_config(text="epsilon = -1.0")
    assert "epsilon" in str(err.value)
    with pytest.raises(ConfigError):
        parse_config(text="trial_level = 5\ntest_level = 5")
    with pytest.raises(ConfigError):
        parse_config(text="parameter_interval = [0.0, 1.0]")
    with pytest.raises(ConfigError):
        parse_config(text="bogus_key = 3")


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(
        problem="transport",
        trial_level=2,
        test_level=3,
        sample_count=13,
        parameter_interval=(0.2, 1.4),
        tol=3.25e-7,
        n_max=4,
    )
    path = tmp_path / "cfg.txt"
    path.write_text(cfg.to_text())
    cfg2 = parse_config(path=str(path))
    assert cfg2 == cfg


def test_table_csv_round_trip():
    table = ReportTable()
    table.add_row(0, 1, 3, 0.25, 1.5e-2, 2.0e-2, 1.0e-2, 0.75)
    table.add_row(0, 2, 5, 0.3, 1.0e-3, float("nan"), 1.0e-3, 0.5)
    text = table.to_csv()
    parsed = ReportTable.from_csv(text)
    assert parsed.header == TABLE_HEADER
    assert parsed.rows[0] == pytest.approx(table.rows[0])
    assert math.isnan(parsed.rows[1][5])


def _tiny_transport_cfg(**kw):
    base = dict(
        problem="transport",
        trial_level=2,
        test_level=3,
        sample_count=10,
        parameter_interval=(0.2, 1.4),
        tol=1e-9,
        n_max=3,
        output_dir="out",
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_rows_and_determinism(tmp_path):
    cfg = _tiny_transport_cfg()
    res1 = run_experiment(cfg)
    res2 = run_experiment(cfg)
    assert res1.table.to_csv() == res2.table.to_csv()
    assert len(res1.table.rows) == sum(len(h.records) for h in res1.histories)
    for row in res1.table.rows:
        assert row[1] <= cfg.n_max


def test_run_experiment_two_pieces():
    cfg = ExperimentConfig(
        problem="transport_jump",
        trial_level=2,
        test_level=3,
        sample_count=12,
        parameter_interval=(0.2, math.pi - 0.2),
        tol=1e-9,
        n_max=2,
    )
    res = run_experiment(cfg)
    pieces = {row[0] for row in res.table.rows}
    assert pieces == {0, 1}


def test_emit_outputs(tmp_path):
    cfg = _tiny_transport_cfg(output_dir=str(tmp_path / "out"))
    res = run_experiment(cfg)
    paths = emit_outputs(res, cfg.output_dir)
    for p in paths.values():
        assert os.path.exists(p)
    decay = open(paths["decay"]).read().splitlines()
    assert decay[0] == "piece,n,max_surrogate"
    assert len(decay) - 1 == sum(len(h.records) for h in res.histories)
    with open(paths["history"]) as fh:
        hist = json.load(fh)
    assert hist["config"]["problem"] == "transport"
    assert len(hist["pieces"][0]["records"]) == len(res.histories[0].records)
    parsed = ReportTable.from_csv(open(paths["table"]).read())
    assert parsed.rows == pytest.approx(res.table.rows)


def test_emitted_csv_byte_identical(tmp_path):
    cfg = _tiny_transport_cfg(output_dir=str(tmp_path / "a"))
    res1 = run_experiment(cfg)
    emit_outputs(res1, cfg.output_dir)
    cfg2 = _tiny_transport_cfg(output_dir=str(tmp_path / "b"))
    res2 = run_experiment(cfg2)
    emit_outputs(res2, cfg2.output_dir)
    a = open(os.path.join(str(tmp_path / "a"), "table.csv"), "rb").read()
    b = open(os.path.join(str(tmp_path / "b"), "table.csv"), "rb").read()
    assert a == b


def test_synthetic_saddle_experiment():
    cfg = ExperimentConfig(
        problem="synthetic_saddle", trial_level=2, test_level=3,
        sample_count=30, tol=1e-6, n_max=12,
    )
    res = run_experiment(cfg)
    assert res.histories[0].records[-1].max_surrogate <= 1e-6


def test_synthetic_factory_beta():
    prob = make_synthetic_saddle(seed=1)
    assert prob.beta_N > 0


def _run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "dgreedy.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


def test_cli_run_and_exit_codes(tmp_path):
    out = tmp_path / "run"
    r = _run_cli(
        [
            "run", "--problem", "transport", "--trial-level", "2", "--test-level", "3",
            "--samples", "10", "--interval", "0.2", "1.4", "--n-max", "2",
            "--tol", "1e-9", "--out", str(out),
        ],
        cwd=str(tmp_path),
    )
    assert r.returncode == 0, r.stderr
    assert (out / "table.csv").exists()
    assert (out / "decay.png").exists()

    r = _run_cli(["run", "--problem", "cd", "--epsilon", "-1"], cwd=str(tmp_path))
    assert r.returncode == 2


def test_cli_verify(tmp_path):
    r = _run_cli(["verify"], cwd=str(tmp_path))
    assert r.returncode == 0, r.stdout + r.stderr
    assert "PASS" in r.stdout and "FAIL" not in r.stdout
