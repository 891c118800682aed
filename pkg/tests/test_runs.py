"""Experiment drivers: config validation, output files, determinism, CLI."""

import json
import math
import os

import numpy as np
import pytest

from rankbounds import ConfigError, RunConfig, execute
from rankbounds.cli import main
from rankbounds.runs import _csv_cell, _eps_tag, _inf_flag, run_montecarlo

DGP_SMALL = {"model": "model2", "support": "i", "draws": 1500}
TUNING_FAST = {"R": 1, "n_reps": 100}


# -- config validation -----------------------------------------------------------


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"command": "test", "out_dir": "x", "bogus": 1})


def test_config_requires_command_and_out_dir(tmp_path):
    with pytest.raises(ConfigError, match="command"):
        RunConfig.from_dict({"out_dir": str(tmp_path)})
    with pytest.raises(ConfigError, match="out_dir"):
        RunConfig.from_dict({"command": "identify", "dgp": DGP_SMALL})
    with pytest.raises(ConfigError, match="one of"):
        RunConfig.from_dict({"command": "frobnicate", "out_dir": str(tmp_path)})


def test_config_montecarlo_requirements(tmp_path):
    base = {"command": "montecarlo", "out_dir": str(tmp_path), "dgp": {"model": "dgp1"}}
    with pytest.raises(ConfigError, match="replications"):
        RunConfig.from_dict({**base, "n": 50, "beta_points": [[1, 3]]})
    with pytest.raises(ConfigError, match="beta_points"):
        RunConfig.from_dict({**base, "n": 50, "replications": 2})
    with pytest.raises(ConfigError, match="sample size"):
        RunConfig.from_dict({**base, "replications": 2, "beta_points": [[1, 3]]})


def test_config_data_and_dgp_are_exclusive(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text("t,e,x\n1,1,0\n")
    with pytest.raises(ConfigError, match="not both"):
        RunConfig.from_dict(
            {
                "command": "test",
                "out_dir": str(tmp_path),
                "data_path": str(csv),
                "dgp": {"model": "dgp1"},
                "beta": [1, 3],
            }
        )


def test_config_validates_epsilons_and_threads(tmp_path):
    base = {"command": "identify", "out_dir": str(tmp_path), "dgp": DGP_SMALL}
    with pytest.raises(ConfigError, match="epsilons"):
        RunConfig.from_dict({**base, "epsilons": [0.0]})
    with pytest.raises(ConfigError, match="threads"):
        RunConfig.from_dict({**base, "threads": 0})


def test_config_echo_excludes_runtime_knobs(tmp_path):
    cfg = RunConfig.from_dict(
        {
            "command": "identify",
            "out_dir": str(tmp_path),
            "dgp": DGP_SMALL,
            "threads": 4,
            "base_seed": 9,
        }
    )
    echo = cfg.echo()
    assert "threads" not in echo and "out_dir" not in echo
    assert echo["base_seed"] == 9


# -- serialization helpers ----------------------------------------------------------


def test_csv_cell_formats():
    assert _csv_cell(0.1) == "0.1"
    assert _csv_cell(True) == "true" and _csv_cell(False) == "false"
    assert _csv_cell(None) == ""
    assert _csv_cell(np.float64(0.25)) == "0.25"
    assert _csv_cell(math.nan) == ""
    with pytest.raises(ValueError):
        _csv_cell(math.inf)


def test_inf_flag_and_eps_tag():
    assert _inf_flag(math.inf) == "inf"
    assert _inf_flag(-math.inf) == "-inf"
    assert _inf_flag(1.0) == ""
    assert _eps_tag(1e-4) == "0p0001"
    assert _eps_tag(1e-3) == "0p001"


# -- drivers ---------------------------------------------------------------------


def read_outputs(out_dir):
    files = {}
    for name in sorted(os.listdir(out_dir)):
        if name == "run_meta.json":
            continue
        with open(os.path.join(out_dir, name), "rb") as fh:
            files[name] = fh.read()
    return files


def test_identify_driver_payload_and_rerun_bytes(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    raw = {
        "command": "identify",
        "dgp": DGP_SMALL,
        "grid": {"coord_ranges": [[2.0, 4.0, 0.1]], "sign1_values": [1]},
        "y_values": [0.5, 0.77, 1.5],
        "t_values": [-2.0, 0.0, 2.0],
        "base_seed": 0,
    }
    cfg = RunConfig.from_dict({**raw, "out_dir": str(out1)})
    bundle = execute(cfg)
    assert (out1 / "result.json").exists()
    assert (out1 / "bi_membership.csv").exists()
    assert (out1 / "tbi_envelope.csv").exists()
    assert (out1 / "run_meta.json").exists()
    doc = json.loads((out1 / "result.json").read_text())
    assert doc["command"] == "identify"
    payload = doc["payload"]
    assert payload["model"] == "model2"
    lo, hi = payload["beta2_interval"]
    assert 2.0 <= lo <= hi <= 4.0
    # reruns produce byte-identical payload files
    execute(RunConfig.from_dict({**raw, "out_dir": str(out2)}))
    assert read_outputs(out1) == read_outputs(out2)


def test_identify_dry_run_writes_nothing(tmp_path):
    out = tmp_path / "dry"
    cfg = RunConfig.from_dict(
        {"command": "identify", "out_dir": str(out), "dgp": DGP_SMALL}
    )
    summary = execute(cfg, dry_run=True)
    assert summary["support_points"] == 22
    assert not out.exists()


def test_test_driver_simulated_sample(tmp_path):
    cfg = RunConfig.from_dict(
        {
            "command": "test",
            "out_dir": str(tmp_path / "t"),
            "dgp": {"model": "dgp1"},
            "n": 60,
            "beta": [1.0, 3.0],
            "base_seed": 12,
            "tuning": TUNING_FAST,
            "epsilons": [1e-3, 1e-4],
        }
    )
    bundle = execute(cfg)
    outs = bundle.payload["outcomes"]
    assert [o["epsilon"] for o in outs] == [1e-3, 1e-4]
    for o in outs:
        assert o["reject"] == (o["statistic"] > o["critical_value"])


def test_montecarlo_workers_do_not_change_bytes(tmp_path):
    raw = {
        "command": "montecarlo",
        "dgp": {"model": "dgp1"},
        "n": 40,
        "replications": 3,
        "beta_points": [[1.0, 3.0], [1.0, 0.0]],
        "tuning": TUNING_FAST,
        "base_seed": 77,
    }
    dirs = []
    for threads in (1, 2):
        out = tmp_path / f"w{threads}"
        cfg = RunConfig.from_dict({**raw, "out_dir": str(out), "threads": threads})
        execute(cfg)
        dirs.append(out)
    assert read_outputs(dirs[0]) == read_outputs(dirs[1])
    doc = json.loads((dirs[0] / "result.json").read_text())
    rows = doc["payload"]["rejection_frequencies"]
    assert {tuple(r["beta"]) for r in rows} == {(1.0, 3.0), (1.0, 0.0)}
    for r in rows:
        assert 0.0 <= r["frequency"] <= 1.0


def test_montecarlo_dry_run_counts():
    cfg = RunConfig.from_dict(
        {
            "command": "montecarlo",
            "out_dir": "unused",
            "dgp": {"model": "dgp1"},
            "n": 40,
            "replications": 5,
            "beta_points": [[1.0, 3.0]],
            "epsilons": [1e-3, 1e-4],
        }
    )
    summary = run_montecarlo(cfg, dry_run=True)
    assert summary["tests_total"] == 10


# -- CLI -------------------------------------------------------------------------


def write_json(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def test_cli_identify_succeeds(tmp_path, capsys):
    cfg = write_json(
        tmp_path,
        "id.json",
        {
            "dgp": DGP_SMALL,
            "grid": {"coord_ranges": [[2.5, 3.5, 0.25]], "sign1_values": [1]},
            "y_values": [0.77],
            "t_values": [0.0],
        },
    )
    out = tmp_path / "out"
    code = main(["identify", "--config", cfg, "--out", str(out)])
    assert code == 0
    assert (out / "result.json").exists()
    assert "wrote identify results" in capsys.readouterr().out


def test_cli_dry_run_prints_summary(tmp_path, capsys):
    cfg = write_json(tmp_path, "id.json", {"dgp": DGP_SMALL})
    out = tmp_path / "out"
    code = main(["identify", "--config", cfg, "--out", str(out), "--dry-run"])
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["command"] == "identify"
    assert not out.exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write_json(tmp_path, "bad.json", {"dgp": DGP_SMALL, "bogus": 3})
    assert main(["identify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err
    missing = str(tmp_path / "absent.json")
    assert main(["identify", "--config", missing, "--out", str(tmp_path / "o")]) == 2


def test_cli_numeric_failure_exit_code(tmp_path, capsys):
    # collinear continuous covariates sink the standardization step
    rows = ["t,e,x1,x2"]
    rng = np.random.default_rng(3)
    for i in range(30):
        x = rng.normal()
        rows.append(f"{1.0 + i},1,{x},{2 * x}")
    data = tmp_path / "collinear.csv"
    data.write_text("\n".join(rows) + "\n")
    cfg = write_json(
        tmp_path,
        "conf.json",
        {
            "data_path": str(data),
            "csv_schema": {
                "duration": "t",
                "event": "e",
                "continuous": ["x1", "x2"],
            },
            "grid": {"coord_ranges": [[0.0, 1.0, 0.5]], "sign1_values": [1]},
            "tuning": TUNING_FAST,
        },
    )
    code = main(["confset", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 3
    assert "numeric failure" in capsys.readouterr().err


def test_cli_seed_override_lands_in_echo(tmp_path):
    cfg = write_json(
        tmp_path,
        "id.json",
        {
            "dgp": DGP_SMALL,
            "grid": {"coord_ranges": [[2.5, 3.5, 0.5]], "sign1_values": [1]},
            "y_values": [0.77],
            "t_values": [0.0],
        },
    )
    out = tmp_path / "seeded"
    assert main(["identify", "--config", cfg, "--out", str(out), "--seed", "123"]) == 0
    doc = json.loads((out / "result.json").read_text())
    assert doc["config"]["base_seed"] == 123
