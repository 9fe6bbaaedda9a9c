"""``torus-canards`` command-line harness.

Subcommands write JSON and CSV reports into ``--out``.  Every JSON report
carries the config hash and the package version.  Exit codes: 0 success,
1 property or validation failure, 2 usage or config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys as _sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import CanardError, ConfigError, GeometryError, NeverExits, NumericalFailure
from .retmap import graph_sample, landmarks, scan_d_plus
from .system import validate_genericity
from .verify import CHECKS, run_suite
from .wayinout import _tube, balance_point, jump_height
from .windows import (
    between_windows,
    bracket_windows,
    census,
    find_window,
    scaling_report,
)

log = logging.getLogger("torus_canards")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(out_dir: str, name: str, payload: dict, cfg: RunConfig) -> str:
    body = {**_clean(payload), **cfg.stamp()}
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _write_csv(out_dir: str, name: str, header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
    return path


def _lifted(p):
    return None if p is None else {"x": p.x, "y": p.y}


# subcommands -----------------------------------------------------------------

def cmd_validate(cfg: RunConfig, args) -> int:
    rep = validate_genericity(cfg.raw_system())
    _write_json(args.out, "validation.json", rep.to_dict(), cfg)
    if not rep.ok:
        bad = [k for k, v in rep.conditions.items() if not v]
        print(f"validation failed: {', '.join(bad)}", file=_sys.stderr)
        for key, val in rep.details.items():
            if key.endswith("error"):
                print(f"  {val}", file=_sys.stderr)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_graph(cfg: RunConfig, args) -> int:
    sys_ = cfg.system()
    geom = cfg.geometry(sys_)
    icfg = cfg.integrator()
    tol = cfg.tolerances()
    eps = args.eps if args.eps is not None else float(cfg["graph"]["eps"])
    scan = scan_d_plus(sys_, eps, geom, icfg, tol.n_refine)
    rows = graph_sample(sys_, eps, geom, icfg, int(cfg["graph"]["n_uniform"]), scan=scan)
    _write_csv(args.out, "graph.csv", ["x", "Px", "logJ"], rows.tolist())
    lm = landmarks(sys_, eps, geom, icfg, tol, scan=scan)
    seg = lm.segments
    payload = {
        "eps": eps,
        "segments": {"p_plus": seg.p_plus, "q_plus": seg.q_plus,
                     "p_minus": seg.p_minus, "q_minus": seg.q_minus,
                     "width_plus": seg.width_plus, "width_minus": seg.width_minus},
        "u_star": lm.u_star,
        "landmarks": {name: _lifted(getattr(lm, name))
                      for name in ("A_minus", "A_plus", "B_minus", "B_plus", "E_minus", "E_plus")},
        "notes": list(lm.notes),
        "n_rows": int(len(rows)),
    }
    _write_json(args.out, "landmarks.json", payload, cfg)
    return EXIT_OK


def _window_job(data: dict, n: int, bracket: tuple[float, float]):
    cfg = RunConfig.from_dict(data)
    sys_ = cfg.system()
    try:
        rec = find_window(sys_, n, bracket, cfg.geometry(sys_), cfg.integrator(),
                          cfg.tolerances(), int(cfg["windows"]["n_census"]))
    except CanardError as exc:
        if isinstance(exc, NumericalFailure):
            raise
        return n, None, f"{type(exc).__name__}: {exc}"
    return n, rec, None


def cmd_windows(cfg: RunConfig, args) -> int:
    sys_ = cfg.system()
    geom = cfg.geometry(sys_)
    icfg = cfg.integrator()
    w = cfg["windows"]
    brackets = bracket_windows(sys_, float(w["eps_lo"]), float(w["eps_hi"]), geom, icfg,
                               int(w["n_grid"]))
    n_min = args.n_min if args.n_min is not None else w["n_min"]
    n_max = args.n_max if args.n_max is not None else w["n_max"]
    todo = [(n, br) for n, br in brackets.items()
            if (n_min is None or n >= n_min) and (n_max is None or n <= n_max)]
    if args.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_window_job, [cfg.data] * len(todo),
                                    [n for n, _ in todo], [br for _, br in todo]))
    else:
        results = [_window_job(cfg.data, n, br) for n, br in todo]
    results.sort(key=lambda r: r[0])
    located = [rec for _, rec, _ in results if rec is not None]
    skipped = {str(n): msg for n, _, msg in results if msg is not None}
    between = between_windows(sys_, located, geom, icfg, cfg.tolerances())
    report = scaling_report(located)
    payload = {
        "brackets": {str(n): list(br) for n, br in brackets.items()},
        "windows": [r.to_dict() for r in located],
        "skipped": skipped,
        "between": [c.to_dict() for c in between],
        "scaling": report.to_dict(),
    }
    _write_json(args.out, "windows.json", payload, cfg)
    with open(os.path.join(args.out, "scaling.csv"), "w", encoding="utf-8") as fh:
        fh.write(report.csv())
    return EXIT_OK if report.sufficient else EXIT_FAIL


def cmd_verify(cfg: RunConfig, args) -> int:
    sys_ = cfg.system()
    geom = cfg.geometry(sys_)
    names = args.checks or cfg["verify"]["checks"]
    if isinstance(names, str):
        names = [s for s in names.split(",") if s]
    if names is not None:
        unknown = [n for n in names if n not in CHECKS]
        if unknown:
            raise ConfigError(f"unknown checks {unknown}; available: {sorted(CHECKS)}")
    symmetric = cfg["g_amp"] == 0 and cfg["f1_amp"] == 0
    results = run_suite(sys_, geom, cfg.integrator(), names, symmetric=symmetric,
                        seed=int(cfg["seed"]))
    passed = all(r.passed for r in results)
    payload = {"passed": passed, "symmetric": symmetric,
               "checks": {r.name: r.to_dict() for r in results}}
    _write_json(args.out, "verify.json", payload, cfg)
    for r in results:
        print(f"{r.name}: {'PASS' if r.passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_balance(cfg: RunConfig, args) -> int:
    sys_ = cfg.system()
    geom = cfg.geometry(sys_)
    icfg = cfg.integrator()
    bal = cfg["balance"]
    bd = balance_point(sys_, geom)
    eps = args.eps if args.eps is not None else float(cfg["graph"]["eps"])
    b = float(bal["b"])
    scan = scan_d_plus(sys_, eps, geom, icfg, cfg.tolerances().n_refine)
    tube = _tube(sys_, eps, geom, icfg)
    rows = []
    for x0 in scan.x:
        try:
            y_plus, direction = jump_height(sys_, eps, float(x0), b, geom, icfg, tube=tube)
        except NeverExits:
            y_plus, direction = float("nan"), "none"
        rows.append((float(x0), y_plus, direction))
    _write_csv(args.out, "jump_heights.csv", ["x0", "y_plus", "direction"], rows)
    from .verify import check_balance

    res = check_balance(sys_, geom, icfg, eps_list=tuple(bal["eps"]), b=b,
                        symmetric=cfg["g_amp"] == 0 and cfg["f1_amp"] == 0)
    payload = {"balance": bd.to_dict(), "sweep_eps": eps, "check": res.to_dict()}
    _write_json(args.out, "balance.json", payload, cfg)
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_sweep(cfg: RunConfig, args) -> int:
    sys_ = cfg.system()
    geom = cfg.geometry(sys_)
    icfg = cfg.integrator()
    tol = cfg.tolerances()
    sw = cfg["sweep"]
    if args.eps is not None:
        grid = [args.eps]
    else:
        grid = np.linspace(float(sw["eps_lo"]), float(sw["eps_hi"]), int(sw["n"])).tolist()
    rows = []
    for eps in grid:
        rec = census(sys_, float(eps), geom, icfg, tol, n_iter=int(sw["n_iter"]))
        cyc = rec.cycles
        rows.append((float(eps), rec.rotation, rec.regime, rec.n, len(cyc),
                     sum(c.stable for c in cyc), sum(c.canard for c in cyc),
                     sum(c.hyperbolic for c in cyc)))
    _write_csv(args.out, "sweep.csv",
               ["eps", "rotation", "regime", "n", "n_cycles", "n_stable", "n_canard",
                "n_hyperbolic"], rows)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "graph": cmd_graph,
    "windows": cmd_windows,
    "verify": cmd_verify,
    "balance": cmd_balance,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torus-canards",
                                description="Canard cycles of slow-fast systems on the torus.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("graph", "balance", "sweep"):
            sp.add_argument("--eps", type=float)
        if name == "windows":
            sp.add_argument("--n-min", type=int)
            sp.add_argument("--n-max", type=int)
        if name == "verify":
            sp.add_argument("--checks", type=lambda s: [c for c in s.split(",") if c],
                            help="comma-separated subset of " + ",".join(CHECKS))
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if getattr(args, "eps", None) is not None and not args.eps > 0:
            raise ConfigError("--eps must be positive")
        args.out = args.out or cfg["out"]
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_NUMERIC
    except GeometryError as exc:
        print(f"geometry error: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_FAIL
    except CanardError as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
