import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from torus_canards.cli import main
from torus_canards.config import RunConfig


def _run(tmp_path, *argv, config=None):
    args = list(argv) + ["--out", str(tmp_path)]
    if config is not None:
        tmp_path.mkdir(parents=True, exist_ok=True)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return main(args)


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_validate_default(tmp_path):
    assert _run(tmp_path, "validate") == 0
    rep = json.loads((tmp_path / "validation.json").read_text())
    assert rep["ok"] is True and rep["orientation"] == "flipped"
    assert rep["config_hash"] == RunConfig.from_dict({}).hash
    assert "version" in rep


def test_validate_empty_curve(tmp_path, capsys):
    assert _run(tmp_path, "validate", config={"k": 2.5}) == 1
    rep = json.loads((tmp_path / "validation.json").read_text())
    assert rep["ok"] is False
    assert "empty" in rep["details"]["slow_curve_error"]
    assert "empty" in capsys.readouterr().err


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["validate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main(["frobnicate"]) == 2
    assert main([]) == 2
    assert _run(tmp_path, "validate", config={"colour": 1}) == 2
    assert _run(tmp_path, "graph", "--jobs", "0") == 2
    assert _run(tmp_path, "graph", "--eps", "-0.1") == 2
    assert _run(tmp_path, "verify", "--checks", "shape,bogus") == 2


def test_numerical_failure_exit_code(tmp_path, capsys):
    assert _run(tmp_path, "graph", config={"tolerances": {"max_steps": 5}}) == 3
    assert "StepLimitExceeded" in capsys.readouterr().err


def test_geometry_failure_exit_code(tmp_path):
    assert _run(tmp_path, "graph", config={"k": 2.5}) == 1


def test_graph_outputs(tmp_path):
    assert _run(tmp_path, "graph", "--eps", "0.12", config={"graph": {"n_uniform": 64}}) == 0
    header, rows = _read_csv(tmp_path / "graph.csv")
    assert header == ["x", "Px", "logJ"]
    data = np.array(rows, dtype=float)
    lm = json.loads((tmp_path / "landmarks.json").read_text())
    seg = lm["segments"]
    assert lm["eps"] == 0.12 and lm["n_rows"] == len(data)
    # end points: the first row is p+ and the table spans one period
    assert data[0, 0] == pytest.approx(seg["p_plus"])
    assert data[-1, 0] < seg["p_plus"] + 2 * np.pi
    assert np.all(np.diff(data[:, 1]) >= -1e-9)
    # every sample lies in one of the two rings D+ x S^1 or S^1 x D-
    two_pi = 2 * np.pi

    def in_seg(v, lo, hi):
        r = lo + (v - lo) % two_pi
        return r <= hi + 1e-9 or r >= lo + two_pi - 1e-9

    for x, px, _ in data:
        assert in_seg(x, seg["p_plus"], seg["q_plus"]) or in_seg(px, seg["p_minus"], seg["q_minus"])
    for name in ("A_minus", "A_plus", "B_minus", "B_plus", "E_minus", "E_plus"):
        assert lm["landmarks"][name] is not None


def test_windows_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = {"windows": {"eps_lo": 0.075, "eps_hi": 0.1, "n_grid": 8, "n_census": 1}}
    assert _run(a, "windows", "--n-min", "13", "--n-max", "13", config=cfg) == 1  # one window only
    assert _run(b, "windows", "--n-min", "13", "--n-max", "13", config=cfg) == 1
    assert (a / "windows.json").read_bytes() == (b / "windows.json").read_bytes()
    assert (a / "scaling.csv").read_bytes() == (b / "scaling.csv").read_bytes()
    rep = json.loads((a / "windows.json").read_text())
    (w,) = rep["windows"]
    assert w["n"] == 13 and w["alpha"] < w["beta"]
    assert all("regime" in c for c in w["census"])
    assert rep["scaling"]["sufficient"] is False


def test_verify_subset(tmp_path, capsys):
    assert _run(tmp_path, "verify", "--checks", "symmetry") == 0
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert list(rep["checks"]) == ["symmetry"]
    assert rep["passed"] is True
    assert "symmetry: PASS" in capsys.readouterr().out


def test_verify_tightened_tolerance_runs(tmp_path):
    cfg = {"tolerances": {"rel_tol": 1e-13, "abs_tol": 1e-15}}
    assert _run(tmp_path, "verify", "--checks", "symmetry", config=cfg) in (0, 1)


def test_balance_outputs(tmp_path):
    code = _run(tmp_path, "balance", "--eps", "0.15")
    assert code in (0, 1)
    rep = json.loads((tmp_path / "balance.json").read_text())
    assert abs(rep["balance"]["y_balance"]) < 1e-8
    assert rep["check"]["subchecks"]["balance_at_zero"] is True
    header, rows = _read_csv(tmp_path / "jump_heights.csv")
    assert header == ["x0", "y_plus", "direction"]
    assert {r[2] for r in rows} <= {"up", "down", "none"}
    assert {"up", "down"} <= {r[2] for r in rows}


def test_sweep(tmp_path):
    assert _run(tmp_path, "sweep", config={"sweep": {"eps_lo": 0.1, "eps_hi": 0.3, "n": 3,
                                                     "n_iter": 30}}) == 0
    header, rows = _read_csv(tmp_path / "sweep.csv")
    assert header[:3] == ["eps", "rotation", "regime"]
    assert len(rows) == 3
    rot = [float(r[1]) for r in rows]
    assert rot[0] > rot[1] > rot[2]


def test_console_script(tmp_path):
    out = subprocess.run([sys.executable, "-m", "torus_canards.cli", "validate", "--out",
                          str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0
    assert (tmp_path / "validation.json").exists()
