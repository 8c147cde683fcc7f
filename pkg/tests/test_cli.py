import csv
import json

import numpy as np
import pytest

import trapflow.config as config_module
from trapflow import solve_equilibrium
from trapflow.cli import CSV_COLUMNS, EXIT_OK, EXIT_PROPERTY, EXIT_SOLVER, EXIT_VALIDATION, main

SMALL = """
model: {eps: 0.05}
grid: {dim: 1, cells: 32}
fields:
  doping: {profile: cosine, amplitude: 0.3, offset: 0.1}
  v_n: {profile: cosine, amplitude: 0.4, mode: 2}
initial: {kind: equilibrium-perturbed, seed: 3, zero_n_cells: [4], trap_full_cells: [7]}
stepper: {dt: 0.01, t_end: 2.0, sample_every: 5}
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL)
    return path


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_outputs(small_config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(small_config), "--out-dir", str(out), "--quiet"]) == EXIT_OK
    rows = _read_csv(out / "trajectory.csv")
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 1 + 200 // 5
    assert float(rows[1][0]) == 0.0 and float(rows[-1][0]) == pytest.approx(2.0)
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    cols = {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}
    assert cols["E_rel"].min() >= -1e-12 and cols["P"].min() >= -1e-12
    assert np.max(np.abs(cols["Q"] - cols["Q"][0])) <= 1e-10 * (1 + abs(cols["Q"][0]))
    assert np.isinf(cols["P"][0])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["rate"] > 0 and summary["r2"] > 0.99
    assert summary["drift"] <= 1e-12
    assert summary["E_rel_max_increase"] <= 1e-12
    assert summary["bounds"]["min_n"] == 0.0 and summary["bounds"]["max_ntr"] == 1.0


def test_run_is_deterministic(small_config, tmp_path):
    for name in ("a", "b"):
        assert main(["--quiet", "--out-dir", str(tmp_path / name), "run", str(small_config)]) == EXIT_OK
    for f in ("trajectory.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_equilibrium_command(tmp_path):
    cfg = tmp_path / "flat.yaml"
    cfg.write_text("model: {eps: 0.1}\nfields: {doping: 0.05}\ninitial: {kind: equilibrium}\n")
    out = tmp_path / "eq"
    assert main(["equilibrium", str(cfg), "--out-dir", str(out), "--quiet"]) == EXIT_OK
    payload = json.loads((out / "equilibrium.json").read_text())
    assert payload["n_star"] == pytest.approx(1.0, abs=1e-12)
    assert payload["p_star"] == pytest.approx(1.0, abs=1e-12)
    assert payload["max_abs_psi"] <= 1e-12
    rows = _read_csv(out / "ntr_inf.csv")
    assert rows[0] == ["cell", "x", "value"]
    assert all(float(r[2]) == pytest.approx(0.5) for r in rows[1:])
    for name in ("psi_inf", "n_inf", "p_inf"):
        assert (out / f"{name}.csv").exists()


def test_sweep_eps(small_config, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep-eps", str(small_config), "--eps", "0.01,0.05", "--out-dir", str(out), "--quiet"]) == EXIT_OK
    table = json.loads((out / "sweep.json").read_text())
    assert table["eps"] == [0.01, 0.05]
    assert table["uniform"] and table["ratio"] < 1.5
    assert (out / "eps_01" / "trajectory.csv").exists()
    assert len(_read_csv(out / "sweep.csv")) == 3


def test_sweep_with_workers_matches_serial(small_config, tmp_path):
    main(["sweep-eps", str(small_config), "--eps", "0.01,0.05", "--out-dir", str(tmp_path / "s"), "--quiet"])
    main(["sweep-eps", str(small_config), "--eps", "0.01,0.05", "--jobs", "2", "--out-dir", str(tmp_path / "p"), "--quiet"])
    assert (tmp_path / "s" / "sweep.json").read_bytes() == (tmp_path / "p" / "sweep.json").read_bytes()


def test_single_eps_ratio_one(small_config, tmp_path):
    assert main(["sweep-eps", str(small_config), "--eps", "0.02", "--out-dir", str(tmp_path), "--quiet"]) == EXIT_OK
    assert json.loads((tmp_path / "sweep.json").read_text())["ratio"] == 1.0


def test_verify_command(tmp_path):
    assert main(["verify", "--samples", "2000", "--out-dir", str(tmp_path), "--quiet"]) == EXIT_OK
    assert json.loads((tmp_path / "verify.json").read_text())["passed"] is True
    assert main(["verify", "--samples", "2000", "--flip", "--quiet"]) == EXIT_PROPERTY


@pytest.mark.parametrize(
    "text",
    [
        "model: {eps: -1.0}",
        "model: {eps: 2.0}",
        "model: {unknown: 1}",
        "neutralize: false\ninitial: {kind: profiles, n: 2.0, p: 1.0}",
    ],
)
def test_validation_exit_code(text, tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(text)
    assert main(["run", str(cfg), "--out-dir", str(tmp_path), "--quiet"]) == EXIT_VALIDATION


def test_missing_file_and_bad_eps(tmp_path, small_config):
    assert main(["run", str(tmp_path / "absent.yaml"), "--quiet"]) == EXIT_VALIDATION
    assert main(["sweep-eps", str(small_config), "--eps", "0.01,2.0", "--out-dir", str(tmp_path), "--quiet"]) == EXIT_VALIDATION
    with pytest.raises(SystemExit):
        main(["sweep-eps", str(small_config), "--eps", "a,b"])


def test_solver_failure_reports_trace(tmp_path, monkeypatch, capsys):
    def starved(*args, **kwargs):
        kwargs["max_iter"] = 1
        return solve_equilibrium(*args, **kwargs)

    monkeypatch.setattr(config_module, "solve_equilibrium", starved)
    cfg = tmp_path / "hard.yaml"
    cfg.write_text("fields: {doping: {profile: cosine, amplitude: 30.0}}\ninitial: {kind: equilibrium}\n")
    assert main(["equilibrium", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_SOLVER
    trace = [line for line in capsys.readouterr().err.splitlines() if line.startswith("residual trace")]
    assert trace
    values = [float(v) for v in trace[0].split(":")[1].split()]
    assert len(values) >= 2 and np.all(np.isfinite(values))
