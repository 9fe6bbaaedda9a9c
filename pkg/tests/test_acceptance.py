"""Acceptance suite for the default system (k = 1.5, symmetric sections).

Each test prints one ``CRITERION n: PASS|FAIL`` line with the measured
numbers, then asserts at the stated tolerance.
"""
import json
import math

import numpy as np
import pytest

from oracles import rk4_transit
from torus_canards.cli import main
from torus_canards.flow import transit
from torus_canards.verify import (
    check_balance,
    check_convexity,
    check_derivative_asymptotics,
    check_monotonicity,
    check_shape,
    check_slow_manifold,
    check_symmetry,
)

pytestmark = pytest.mark.slow

PI = math.pi


@pytest.fixture
def report(capsys):
    def _report(n, ok, summary):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'}  {summary}")
        assert ok, summary

    return _report


def _failed(res):
    return [k for k, v in res.subchecks.items() if not v]


@pytest.fixture(scope="module")
def windows_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("windows")
    code = main(["windows", "--out", str(out)])
    return code, json.loads((out / "windows.json").read_text())


def test_criterion_1_integrator_oracle(sys_, report):
    rng = np.random.default_rng(2024)
    m = 100
    eps = rng.uniform(0.2, 0.5, m)
    x0 = rng.uniform(-PI, PI, m)
    y0 = rng.uniform(-PI, 0.0, m)
    y1 = y0 + rng.uniform(1.0, 2 * PI, m)
    # reference at n and 10 n uniform steps; the refined run is the oracle
    coarse = rk4_transit(x0, y0, y1, eps, 4000, s=-1.0)
    xr, lr = rk4_transit(x0, y0, y1, eps, 40000, s=-1.0)
    ref_drift = float(np.max(np.abs(coarse[0] - xr)))
    dx = dl = 0.0
    for i in range(m):
        r = transit(sys_, eps[i], y0[i], y1[i], x0[i])
        dx = max(dx, abs(r.x_lifted - xr[i]))
        dl = max(dl, abs(r.log_jacobian - lr[i]))
    fd_rel = 0.0
    for x in np.linspace(-PI, PI, 9)[:-1]:
        h = 1e-6
        fd = (transit(sys_, 0.3, -PI, PI, x + h).x_lifted
              - transit(sys_, 0.3, -PI, PI, x - h).x_lifted) / (2 * h)
        fd_rel = max(fd_rel, abs(math.exp(transit(sys_, 0.3, -PI, PI, x).log_jacobian) / fd - 1))
    ok = dx < 1e-8 and dl < 1e-6 and fd_rel < 1e-3
    report(1, ok, f"max|dx|={dx:.2e} max|dL|={dl:.2e} fd_rel={fd_rel:.2e} "
                  f"(reference n vs 10n drift {ref_drift:.1e})")


def test_criterion_2_shape(sys_, geom, report):
    res = check_shape(sys_, geom)
    d = res.details
    report(2, res.passed, f"failed={_failed(res)} width_fit={d['width_fit']} "
                          f"flatness_fit={d['flatness_fit']} ring_failures={sum(d['ring_failures'])} "
                          f"(rectified chart width_fit={d['rectified_width_fit']})")


def test_criterion_3_monotonicity(sys_, geom, report):
    res = check_monotonicity(sys_, geom)
    d = res.details
    report(3, res.passed, f"failed={_failed(res)} slope_ratio={d['slope_ratio']:.3f} "
                          f"eps*gap variation={d['relative_variation']:.3f}")


def test_criterion_4_convexity(sys_, geom, report):
    res = check_convexity(sys_, geom)
    crossings = [r["slope_one_crossings"] for r in res.details["per_eps"]]
    report(4, res.passed, f"failed={_failed(res)} slope-1 crossings per eps={crossings}")


def test_criterion_5_window_structure(windows_report, report):
    _, rep = windows_report
    ws = sorted(rep["windows"], key=lambda w: w["n"])
    ns = [w["n"] for w in ws]
    in_range = [w for w in ws if 0.04 <= w["alpha"] and w["beta"] <= 0.3]
    consecutive = len(in_range) >= 3 and ns == list(range(ns[0], ns[-1] + 1))
    ordered = all(w["alpha"] < w["beta"] for w in ws) and all(
        b["beta"] < a["alpha"] for a, b in zip(ws, ws[1:]))

    def two_cycles(rec, both_canards):
        cyc = rec["cycles"]
        if len(cyc) != 2 or not all(c["hyperbolic"] for c in cyc):
            return False
        if sorted(c["stable"] for c in cyc) != [False, True]:
            return False
        if both_canards:
            return all(c["canard"] for c in cyc)
        return next(c for c in cyc if not c["stable"])["canard"]

    between = rep["between"]
    between_ok = len(between) == len(ws) - 1 and all(
        two_cycles(r, False) and r["rotation"] == round(r["rotation"]) for r in between)
    inside = [r for w in ws for r in w["census"]]
    inside_ok = bool(inside) and all(two_cycles(r, True) for r in inside)
    ok = consecutive and ordered and between_ok and inside_ok
    report(5, ok, f"windows n={ns[0]}..{ns[-1]} ({len(ws)}), ordered={ordered}, "
                  f"between censuses ok={between_ok} ({len(between)}), "
                  f"inside censuses ok={inside_ok} ({len(inside)}), skipped={rep['skipped']}")


def test_criterion_6_window_scalings(windows_report, report):
    _, rep = windows_report
    table = rep["scaling"]["table"]
    n = np.array([r["n"] for r in table], dtype=float)
    logw = np.log([r["width"] for r in table])
    slope, icpt = np.polyfit(n, logw, 1)
    r2 = 1 - np.sum((logw - (slope * n + icpt)) ** 2) / np.sum((logw - logw.mean()) ** 2)
    prod = np.array([r["alpha"] * r["n"] for r in table])
    med = float(np.median(prod))
    band = bool(np.all(np.abs(prod / med - 1) <= 0.5))
    ok = len(table) >= 3 and slope < 0 and r2 >= 0.95 and band
    report(6, ok, f"slope={slope:.4f} R2={r2:.4f} alpha_n*n in [{prod.min():.4f}, "
                  f"{prod.max():.4f}] median={med:.4f}")


def test_criterion_7_balance(sys_, geom, report):
    res = check_balance(sys_, geom)
    d = res.details
    dist = [round(j["distance"], 4) for j in d["jumps"]]
    report(7, res.passed, f"failed={_failed(res)} y_balance={d['y_balance']:.1e} "
                          f"distances={dist}")


def test_criterion_8_derivative_asymptotics(sys_, geom, report):
    res = check_derivative_asymptotics(sys_, geom)
    fit = res.details["fit"]
    gaps = [f"{g:.2e}" for g in fit["successive_gaps"]]
    report(8, res.passed, f"failed={_failed(res)} successive_gaps={gaps} "
                          f"spread={fit['relative_spread']:.3f} "
                          f"constants={[round(c, 4) for c in res.details['constants']]}")


def test_criterion_9_slow_manifold_exponent(sys_, geom, report):
    res = check_slow_manifold(sys_, geom)
    q = res.details["fold_window"]["exponent"]
    report(9, 0.5 <= q <= 1.1, f"q={q:.4f} (fixed-y exponent "
                               f"{res.details['fixed_y']['exponent']:.4f}, subchecks {res.subchecks})")


def test_criterion_10_determinism_and_symmetry(sys_, geom, tmp_path, report):
    runs = [["validate"], ["graph"], ["verify", "--checks", "symmetry"],
            ["windows", "--n-min", "13", "--n-max", "14"]]
    identical = True
    for argv in runs:
        a, b = tmp_path / (argv[0] + "_a"), tmp_path / (argv[0] + "_b")
        main(argv + ["--out", str(a)])
        main(argv + ["--out", str(b)])
        for f in sorted(a.iterdir()):
            identical &= f.read_bytes() == (b / f.name).read_bytes()
    sym = check_symmetry(sys_, geom, eps=0.1, n=20)
    ok = identical and sym.passed
    report(10, ok, f"byte-identical={identical} symmetry max error="
                   f"{sym.details['max_error']:.2e}")
