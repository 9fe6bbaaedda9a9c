"""The lemma suite: numerical checks of the shape, monotonicity and convexity
properties of the return map, the balance point, and the asymptotic fits.

Each check returns a :class:`CheckResult` holding named boolean sub-checks and
the numbers behind them.  The CLI ``verify`` command and the acceptance tests
both run these functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .flow import IntegratorConfig, transit_reduced
from .retmap import (
    LN2,
    Tolerances,
    canard_segments,
    poincare_map,
    scan_d_plus,
    unit_slope_set,
    landmarks,
)
from .system import TWO_PI, SectionGeometry, SlowFastSystem, make_geometry
from .wayinout import balance_point, derivative_asymptotics, jump_height, slow_manifold_error
from .windows import _b_point, _Ctx, _gap, linear_fit

__all__ = ["CheckResult", "CHECKS", "run_suite"]


@dataclass
class CheckResult:
    name: str
    subchecks: dict[str, bool] = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.subchecks) and all(self.subchecks.values())

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "subchecks": self.subchecks,
                "details": self.details}


def _setup(sys, geom, cfg):
    return geom or make_geometry(sys), cfg or IntegratorConfig()


def check_shape(sys: SlowFastSystem, geom: SectionGeometry | None = None,
                cfg: IntegratorConfig | None = None, eps_lo: float = 0.05, eps_hi: float = 0.3,
                n_eps: int = 8, n_ring: int = 50, n_flat: int = 64, r2_min: float = 0.98,
                seed: int = 0) -> CheckResult:
    """Widths of D+, flatness of the map off D+, and ring containment."""
    geom, cfg = _setup(sys, geom, cfg)
    rng = np.random.default_rng(seed)
    eps_grid = np.geomspace(eps_lo, eps_hi, n_eps)
    widths, rect_widths, flat, ring_fail = [], [], [], []
    for eps in eps_grid:
        eps = float(eps)
        seg = canard_segments(sys, eps, geom, cfg)
        widths.append(seg.width_plus)
        # same width in the flow-time chart of y = -pi, as a diagnostic
        F = lambda x: sys.rhs(x, -math.pi, eps)[0]
        xs = np.linspace(seg.p_plus, seg.q_plus, 33)
        rect_widths.append(float(np.trapezoid([1.0 / F(x) for x in xs], xs)))
        outside = np.linspace(seg.q_plus, seg.p_plus + TWO_PI, n_flat + 2)[1:-1]
        flat.append(max(poincare_map(sys, eps, float(x), cfg)[1] for x in outside))
        pts = seg.q_plus + rng.uniform(0, 1, n_ring) * (seg.p_plus + TWO_PI - seg.q_plus)
        bad = [float(x) for x in pts
               if not seg.contains_minus(poincare_map(sys, eps, float(x), cfg)[0])]
        ring_fail.append(len(bad))
    inv = 1.0 / eps_grid
    s_w, c_w, r2_w = linear_fit(inv, np.log(widths))
    s_r, c_r, r2_r = linear_fit(inv, np.log(rect_widths))
    s_f, c_f, r2_f = linear_fit(inv, flat)
    res = CheckResult("shape")
    res.subchecks = {
        "width_decay_slope_negative": s_w < 0,
        "width_fit_r2": r2_w >= r2_min,
        "flatness_slope_negative": s_f < 0,
        "flatness_fit_r2": r2_f >= r2_min,
        "ring_containment": sum(ring_fail) == 0,
    }
    res.details = {
        "eps": eps_grid.tolist(), "widths": widths, "width_fit": [s_w, c_w, r2_w],
        "rectified_widths": rect_widths, "rectified_width_fit": [s_r, c_r, r2_r],
        "max_log_slope_outside": flat, "flatness_fit": [s_f, c_f, r2_f],
        "ring_failures": ring_fail,
    }
    return res


def check_monotonicity(sys: SlowFastSystem, geom: SectionGeometry | None = None,
                       cfg: IntegratorConfig | None = None, eps_lo: float = 0.03,
                       eps_hi: float = 0.4, n_eps: int = 60, h_rel: float = 1e-3) -> CheckResult:
    """``gap(E-)`` decreasing in eps with steepening slope and ``eps gap ~ const``."""
    geom, cfg = _setup(sys, geom, cfg)
    ctx = _Ctx(sys, geom, cfg, None)
    grid = np.linspace(eps_lo, eps_hi, n_eps)
    gaps = np.array([_gap(ctx, float(e), "E-") for e in grid])

    def slope(e):
        h = h_rel * e
        return (_gap(ctx, e + h, "E-") - _gap(ctx, e - h, "E-")) / (2 * h)

    s_small, s_large = slope(0.05), slope(0.3)
    octave = np.geomspace(eps_lo, 2 * eps_lo, 9)
    prod = np.array([e * _gap(ctx, float(e), "E-") for e in octave])
    variation = float((prod.max() - prod.min()) / prod.mean())
    res = CheckResult("monotonicity")
    res.subchecks = {
        "strictly_decreasing": bool(np.all(np.diff(gaps) < 0)),
        "slope_ratio_at_least_3": abs(s_small) >= 3 * abs(s_large),
        "eps_gap_variation_below_20pct": variation < 0.2,
    }
    res.details = {"eps": grid.tolist(), "gap_E_minus": gaps.tolist(),
                   "slope_at_0.05": s_small, "slope_at_0.3": s_large,
                   "slope_ratio": s_small / s_large, "octave_eps": octave.tolist(),
                   "eps_times_gap": prod.tolist(), "relative_variation": variation}
    return res


def check_convexity(sys: SlowFastSystem, geom: SectionGeometry | None = None,
                    cfg: IntegratorConfig | None = None, tol: Tolerances | None = None,
                    eps_lo: float = 0.04, eps_hi: float = 0.15, n_eps: int = 10) -> CheckResult:
    """Two unit-slope arcs inside D+ with opposite trends, two slope-1 points."""
    geom, cfg = _setup(sys, geom, cfg)
    tol = tol or Tolerances()
    rows = []
    ok_arcs = ok_inside = ok_trend = ok_roots = True
    for eps in np.linspace(eps_lo, eps_hi, n_eps):
        eps = float(eps)
        scan = scan_d_plus(sys, eps, geom, cfg, tol.n_refine)
        seg = scan.segments
        arcs = unit_slope_set(sys, eps, geom, cfg, tol, scan=scan)
        lm = landmarks(sys, eps, geom, cfg, tol, scan=scan)
        ls = scan.log_slope
        crossings = int(np.sum((ls[:-1] < 0) != (ls[1:] < 0)))
        inside = all(seg.p_plus <= a["x_lo"] <= a["x_hi"] <= seg.q_plus for a in arcs)
        trends = sorted(a["trend"] for a in arcs)
        ok_arcs &= len(arcs) == 2
        ok_inside &= inside
        ok_trend &= trends == [-1, 1] and all(a["monotone"] for a in arcs)
        ok_roots &= crossings == 2 and lm.B_minus is not None and lm.B_plus is not None
        rows.append({"eps": eps, "arcs": arcs, "slope_one_crossings": crossings,
                     "B_minus": None if lm.B_minus is None else [lm.B_minus.x, lm.B_minus.y],
                     "B_plus": None if lm.B_plus is None else [lm.B_plus.x, lm.B_plus.y],
                     "max_log_slope": float(ls.max()), "ln2": LN2})
    res = CheckResult("convexity")
    res.subchecks = {"two_arcs": ok_arcs, "arcs_inside_D_plus": ok_inside,
                     "opposite_monotonicity": ok_trend, "two_slope_one_roots": ok_roots}
    res.details = {"per_eps": rows}
    return res


def check_balance(sys: SlowFastSystem, geom: SectionGeometry | None = None,
                  cfg: IntegratorConfig | None = None,
                  eps_list=(0.2, 0.14, 0.1, 0.07, 0.05), b: float = 0.1,
                  symmetric: bool = True, y_tol: float = 1e-8,
                  final_max: float = 0.1) -> CheckResult:
    """Balance root, and jump heights of the slope-1 canard B- approaching it."""
    geom, cfg = _setup(sys, geom, cfg)
    bd = balance_point(sys, geom)
    ctx = _Ctx(sys, geom, cfg, None)
    heights = []
    for eps in eps_list:
        seg = canard_segments(sys, eps, geom, cfg)
        x_b, _ = _b_point(ctx, eps, "-", seg)
        y_plus, direction = jump_height(sys, eps, x_b, b, geom, cfg)
        heights.append({"eps": eps, "y_plus": y_plus, "direction": direction,
                        "distance": abs(y_plus - bd.y_balance)})
    dist = [h["distance"] for h in heights]
    res = CheckResult("balance")
    if symmetric:
        res.subchecks["balance_at_zero"] = abs(bd.y_balance) <= y_tol
    res.subchecks["distance_decreasing"] = all(dist[i + 1] < dist[i] for i in range(len(dist) - 1))
    res.subchecks["final_distance_below_bound"] = dist[-1] < final_max
    res.details = {"y_balance": bd.y_balance, "I": bd.I, "b": b, "jumps": heights}
    return res


def check_derivative_asymptotics(sys: SlowFastSystem, geom: SectionGeometry | None = None,
                                 cfg: IntegratorConfig | None = None,
                                 eps_list=tuple(0.2 * 0.75 ** k for k in range(9)),
                                 fractions=(0.1, 0.15, 0.2), spread_max: float = 0.1,
                                 chart: str = "x") -> CheckResult:
    """``eps ln R'`` on D+: Cauchy in eps, flat in x, constant growing with delta+.

    ``fractions`` are the values of ``delta+`` as fractions of the fold strip.
    """
    geom, cfg = _setup(sys, geom, cfg)
    fit = derivative_asymptotics(sys, eps_list, geom, cfg, chart=chart)
    consts = []
    for fr in fractions:
        g2 = make_geometry(sys, fraction=fr, delta_minus=geom.delta_minus)
        consts.append(derivative_asymptotics(sys, eps_list, g2, cfg, chart=chart).constant)
    mags = [abs(c) for c in consts]
    res = CheckResult("derivative_asymptotics")
    res.subchecks = {
        "cauchy": fit.cauchy,
        "x_spread_within_10pct": fit.relative_spread <= spread_max,
        "constant_grows_with_delta": all(mags[i] < mags[i + 1] for i in range(len(mags) - 1)),
    }
    res.details = {"fit": fit.to_dict(), "chart": chart, "delta_fractions": list(fractions),
                   "constants": consts}
    return res


def check_slow_manifold(sys: SlowFastSystem, geom: SectionGeometry | None = None,
                        cfg: IntegratorConfig | None = None,
                        eps_list=(0.0005, 0.001, 0.002, 0.004, 0.008, 0.016),
                        q_band=(0.5, 1.1), y_frac: float = 0.3) -> CheckResult:
    """Power law of the slow-manifold error near the fold, plus the O(eps) law at a fixed y.

    The fixed ``y`` sits ``y_frac`` of the way from ``alpha+`` to ``alpha-``;
    the midpoint is avoided because ``s1`` vanishes there for symmetric systems.
    """
    geom, cfg = _setup(sys, geom, cfg)
    fit = slow_manifold_error(sys, eps_list, geom, cfg)
    y_in = geom.alpha_plus + y_frac * (geom.alpha_minus - geom.alpha_plus)
    inner = slow_manifold_error(sys, eps_list, geom, cfg, y_fixed=y_in)
    errs = fit.errors
    res = CheckResult("slow_manifold")
    res.subchecks = {
        "exponent_in_band": q_band[0] <= fit.exponent <= q_band[1],
        "error_monotone_in_eps": all(errs[i] < errs[i + 1] for i in range(len(errs) - 1)),
        "fixed_y_exponent_near_one": abs(inner.exponent - 1.0) < 0.1,
    }
    res.details = {"fold_window": fit.to_dict(), "fixed_y": inner.to_dict()}
    return res


def check_symmetry(sys: SlowFastSystem, geom: SectionGeometry | None = None,
                   cfg: IntegratorConfig | None = None, eps: float = 0.1, n: int = 20,
                   tol: float = 1e-6, seed: int = 0, rel_tol: float = 1e-14) -> CheckResult:
    """``P(-P(x)) = -x`` for systems invariant under ``(x, y) -> (-x, -y)``.

    ``-P(x)`` usually lands in D+, where ``P`` expands by ``exp(C/eps)``, so
    the intermediate lift is carried as an exact ``(x_reduced, turns)`` pair
    rather than a rounded real, and the transits run at ``rel_tol``: an error
    in the first image is multiplied by ``1/P'(x)`` in the second.
    """
    geom, cfg = _setup(sys, geom, cfg)
    cfg = IntegratorConfig(rel_tol, rel_tol * 1e-2, cfg.max_steps, cfg.initial_step)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-math.pi, math.pi, n)
    errs = []
    for x in xs:
        first = transit_reduced(sys, eps, -math.pi, math.pi, float(x), 0, cfg)
        z, k = -first.x_reduced, -first.turns
        if z >= math.pi:
            z, k = z - TWO_PI, k + 1
        second = transit_reduced(sys, eps, -math.pi, math.pi, z, k, cfg)
        errs.append(abs(second.x_reduced + x + TWO_PI * second.turns))
    res = CheckResult("symmetry")
    res.subchecks = {"involution": max(errs) < tol}
    res.details = {"eps": eps, "max_error": float(max(errs)), "rel_tol": rel_tol}
    return res


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "shape": check_shape,
    "monotonicity": check_monotonicity,
    "convexity": check_convexity,
    "balance": check_balance,
    "derivative_asymptotics": check_derivative_asymptotics,
    "slow_manifold": check_slow_manifold,
    "symmetry": check_symmetry,
}


def run_suite(sys: SlowFastSystem, geom: SectionGeometry | None = None,
              cfg: IntegratorConfig | None = None, names=None, symmetric: bool = True,
              seed: int = 0) -> list[CheckResult]:
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}")
    out = []
    for name in names:
        kwargs: dict = {}
        if name == "balance":
            kwargs["symmetric"] = symmetric
        if name in ("shape", "symmetry"):
            kwargs["seed"] = seed
        if name == "symmetry" and not symmetric:
            continue
        out.append(CHECKS[name](sys, geom, cfg, **kwargs))
    return out
