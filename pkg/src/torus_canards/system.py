"""Slow-fast vector fields on the two-torus.

The system is

    x' = f(x, y, eps),    y' = eps * g(x, y, eps),    (x, y) in T^2,

with ``g > 0``.  This module holds the evaluation interface, the built-in
``cosine_oval`` family, the slow curve ``f(x, y, 0) = 0`` with its two fold
points, and the genericity validator that normalises the orientation of the
x-axis for every downstream computation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .errors import BranchLost, GeometryError, NoFolds, TooManyFolds

TWO_PI = 2.0 * math.pi

__all__ = [
    "TorusPoint",
    "LiftedPoint",
    "SlowFastSystem",
    "CosineOval",
    "FlippedSystem",
    "Folds",
    "SlowCurveModel",
    "SectionGeometry",
    "ValidationReport",
    "wrap",
    "eval_field",
    "find_folds",
    "compute_slow_curve",
    "validate_genericity",
    "make_geometry",
]


def wrap(v: float) -> float:
    """Reduce an angle into [-pi, pi)."""
    r = math.fmod(v + math.pi, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    return r - math.pi


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", wrap(float(self.x)))
        object.__setattr__(self, "y", wrap(float(self.y)))


@dataclass(frozen=True)
class LiftedPoint:
    """A point of the universal cover; ``x`` and ``y`` are not reduced."""

    x: float
    y: float

    def project(self) -> TorusPoint:
        return TorusPoint(self.x, self.y)


class SlowFastSystem:
    """Evaluation interface for ``(f, g)`` and the partials the tools need.

    Subclasses supply ``f, g, f_x, f_y, f_xx, g_x``; each takes
    ``(x, y, eps)`` and must be 2*pi periodic in ``x`` and ``y``.  Numpy
    broadcasting is used by the validator's grid checks, so array inputs
    should work where convenient.

    A subclass may also expose ``kernel()`` returning a numba-compiled
    ``rhs(x, y, eps, params) -> (F, F_x)`` with ``F = f / g`` and its
    parameter array; the integrator then runs compiled.  Without it the
    integrator falls back to the interpreted path built on ``rhs``.
    """

    name = "custom"

    def f(self, x, y, eps):
        raise NotImplementedError

    def g(self, x, y, eps):
        raise NotImplementedError

    def f_x(self, x, y, eps):
        raise NotImplementedError

    def f_y(self, x, y, eps):
        raise NotImplementedError

    def f_xx(self, x, y, eps):
        raise NotImplementedError

    def g_x(self, x, y, eps):
        raise NotImplementedError

    @property
    def family_params(self) -> dict:
        return {}

    def rhs(self, x: float, y: float, eps: float) -> tuple[float, float]:
        """``F = f/g`` and ``dF/dx`` at one point."""
        fv = self.f(x, y, eps)
        gv = self.g(x, y, eps)
        fx = self.f_x(x, y, eps)
        gx = self.g_x(x, y, eps)
        return fv / gv, (fx * gv - fv * gx) / (gv * gv)

    def kernel(self):
        return None

    def flipped(self) -> "SlowFastSystem":
        return FlippedSystem(self)


@njit(cache=True)
def _cosine_oval_rhs(x, y, eps, p):
    # p = (k, g_amp, f1_amp, s); s = -1 applies x -> -x
    k, g_amp, f1_amp, s = p[0], p[1], p[2], p[3]
    u = s * x
    f = s * (math.cos(u) + math.cos(y) - k + eps * f1_amp * math.sin(u + y))
    fx = -math.sin(u) + eps * f1_amp * math.cos(u + y)
    g = 1.0 + g_amp * math.cos(u - y)
    gx = -s * g_amp * math.sin(u - y)
    return f / g, (fx * g - f * gx) / (g * g)


class CosineOval(SlowFastSystem):
    """``f = cos x + cos y - k + eps*f1_amp*sin(x+y)``, ``g = 1 + g_amp*cos(x-y)``.

    For ``1 < k < 2`` the slow curve is a convex oval confined to the region
    where cosine is concave.  ``orientation=-1`` is the same system seen in
    the coordinate ``x -> -x``.
    """

    name = "cosine_oval"

    def __init__(self, k: float = 1.5, g_amp: float = 0.0, f1_amp: float = 0.0,
                 orientation: int = 1):
        if orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        self.k = float(k)
        self.g_amp = float(g_amp)
        self.f1_amp = float(f1_amp)
        self.orientation = orientation
        self._params = np.array([self.k, self.g_amp, self.f1_amp, float(orientation)])

    @property
    def family_params(self) -> dict:
        return {"k": self.k, "g_amp": self.g_amp, "f1_amp": self.f1_amp,
                "orientation": self.orientation}

    def f(self, x, y, eps):
        s = self.orientation
        u = s * x
        return s * (np.cos(u) + np.cos(y) - self.k + eps * self.f1_amp * np.sin(u + y))

    def g(self, x, y, eps):
        return 1.0 + self.g_amp * np.cos(self.orientation * x - y)

    def f_x(self, x, y, eps):
        u = self.orientation * x
        return -np.sin(u) + eps * self.f1_amp * np.cos(u + y)

    def f_y(self, x, y, eps):
        s = self.orientation
        u = s * x
        return s * (-np.sin(y) + eps * self.f1_amp * np.cos(u + y))

    def f_xx(self, x, y, eps):
        s = self.orientation
        u = s * x
        return s * (-np.cos(u) - eps * self.f1_amp * np.sin(u + y))

    def g_x(self, x, y, eps):
        s = self.orientation
        return -s * self.g_amp * np.sin(s * x - y)

    def rhs(self, x, y, eps):
        return _cosine_oval_rhs(x, y, eps, self._params)

    def kernel(self):
        return _cosine_oval_rhs, self._params

    def flipped(self) -> "CosineOval":
        return CosineOval(self.k, self.g_amp, self.f1_amp, -self.orientation)

    def __repr__(self):
        return (f"CosineOval(k={self.k}, g_amp={self.g_amp}, f1_amp={self.f1_amp}, "
                f"orientation={self.orientation})")


class FlippedSystem(SlowFastSystem):
    """``base`` written in the coordinate ``x' = -x``: f'(x') = -f(-x')."""

    def __init__(self, base: SlowFastSystem):
        self.base = base
        self.name = base.name

    @property
    def family_params(self) -> dict:
        return dict(self.base.family_params, flipped=True)

    def f(self, x, y, eps):
        return -self.base.f(-x, y, eps)

    def g(self, x, y, eps):
        return self.base.g(-x, y, eps)

    def f_x(self, x, y, eps):
        return self.base.f_x(-x, y, eps)

    def f_y(self, x, y, eps):
        return -self.base.f_y(-x, y, eps)

    def f_xx(self, x, y, eps):
        return -self.base.f_xx(-x, y, eps)

    def g_x(self, x, y, eps):
        return -self.base.g_x(-x, y, eps)

    def flipped(self) -> SlowFastSystem:
        return self.base


def eval_field(sys: SlowFastSystem, p: TorusPoint, eps: float) -> tuple[float, float]:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return float(sys.f(p.x, p.y, eps)), float(sys.g(p.x, p.y, eps))


# ---------------------------------------------------------------------------
# slow curve and folds


@dataclass(frozen=True)
class Folds:
    """Fold points; ``plus`` is the lower fold (tau+), ``minus`` the upper."""

    plus: TorusPoint
    minus: TorusPoint

    @property
    def sigma_plus(self) -> float:
        return self.plus.x

    @property
    def sigma_minus(self) -> float:
        return self.minus.x

    @property
    def tau_plus(self) -> float:
        return self.plus.y

    @property
    def tau_minus(self) -> float:
        return self.minus.y


def _count_roots(sys: SlowFastSystem, y: float, xs: np.ndarray) -> np.ndarray:
    vals = np.asarray(sys.f(xs, y, 0.0), dtype=float)
    s = np.sign(vals)
    return np.flatnonzero(s[:-1] * s[1:] < 0)


def _polish_fold(sys, x, y, tol):
    # Newton on (f, f_x) = 0; f_xy by a central difference of f_x
    for _ in range(50):
        F1 = float(sys.f(x, y, 0.0))
        F2 = float(sys.f_x(x, y, 0.0))
        if abs(F1) < tol and abs(F2) < tol:
            break
        h = 1e-6
        fxy = (float(sys.f_x(x, y + h, 0.0)) - float(sys.f_x(x, y - h, 0.0))) / (2 * h)
        a, b = F2, float(sys.f_y(x, y, 0.0))
        c, d = float(sys.f_xx(x, y, 0.0)), fxy
        det = a * d - b * c
        if det == 0.0:
            break
        dx = (d * F1 - b * F2) / det
        dy = (-c * F1 + a * F2) / det
        x -= dx
        y -= dy
    return x, y


def find_folds(sys: SlowFastSystem, tol: float = 1e-12, n_grid: int = 512) -> Folds:
    """Locate the two points of the slow curve where ``f_x = 0``.

    The lower fold (smaller y) is ``G+``, the upper fold, reached by the
    slow upward drift along the stable branch, is ``G-``.
    """
    xs = np.linspace(-math.pi, math.pi, n_grid + 1)
    ys = np.linspace(-math.pi, math.pi, n_grid, endpoint=False)
    counts = []
    mids = []
    for y in ys:
        idx = _count_roots(sys, y, xs)
        counts.append(len(idx))
        mids.append(0.5 * (xs[idx[0]] + xs[idx[-1] + 1]) if len(idx) else np.nan)
    counts = np.array(counts)
    if not counts.any():
        raise NoFolds("slow curve is empty: f(., ., 0) has no sign change on the torus")
    if counts.max() > 2:
        raise TooManyFolds(f"a horizontal line meets the slow curve {counts.max()} times")
    on = counts > 0
    edges = np.flatnonzero(on != np.roll(on, 1))
    if len(edges) != 2:
        raise TooManyFolds(f"slow curve has {len(edges)} fold candidates, expected 2")
    first, last = np.flatnonzero(on)[[0, -1]]
    if on[0] and on[-1]:
        raise GeometryError("slow curve crosses y = -pi")
    lo = _polish_fold(sys, mids[first], ys[first], tol)
    hi = _polish_fold(sys, mids[last], ys[last], tol)
    for xf, yf in (lo, hi):
        if abs(sys.f(xf, yf, 0.0)) > 100 * tol or abs(sys.f_x(xf, yf, 0.0)) > 100 * tol:
            raise NoFolds(f"fold polishing did not converge near ({xf:.6g}, {yf:.6g})")
    if lo[1] > hi[1]:
        lo, hi = hi, lo
    return Folds(TorusPoint(*lo), TorusPoint(*hi))


@dataclass
class SlowCurveModel:
    """Both branches of ``f(x, y, 0) = 0`` over ``(tau+, tau-)``.

    ``stable`` holds the branch with ``f_x < 0`` and ``unstable`` the one with
    ``f_x > 0``; arrays are sampled at ``ys``.  Calling ``stable_at`` or
    ``unstable_at`` solves the branch afresh at any interior ``y``.
    """

    sys: SlowFastSystem
    folds: Folds
    ys: np.ndarray
    stable: np.ndarray
    unstable: np.ndarray
    tol: float = 1e-12

    def _centre(self, y: float) -> float:
        # critical point of f(., y, 0) between the branches, Newton on f_x
        f0 = self.folds
        t = (y - f0.tau_plus) / (f0.tau_minus - f0.tau_plus)
        xc = f0.sigma_plus + t * (f0.sigma_minus - f0.sigma_plus)
        for _ in range(60):
            fxx = float(self.sys.f_xx(xc, y, 0.0))
            if fxx == 0.0:
                break
            step = float(self.sys.f_x(xc, y, 0.0)) / fxx
            xc -= step
            if abs(step) < 1e-15:
                break
        return xc

    def branches_at(self, y: float) -> tuple[float, float]:
        """Return ``(s_minus(y), s_plus(y))``: stable and unstable branch points."""
        f0 = self.folds
        if not f0.tau_plus <= y <= f0.tau_minus:
            raise BranchLost(f"y={y} lies outside the slow strip")
        if y == f0.tau_plus:
            return f0.sigma_plus, f0.sigma_plus
        if y == f0.tau_minus:
            return f0.sigma_minus, f0.sigma_minus
        xc = self._centre(y)
        fc = float(self.sys.f(xc, y, 0.0))
        fo = float(self.sys.f(math.pi, y, 0.0))
        if fc == 0.0:
            return xc, xc
        if fc * fo >= 0:
            raise BranchLost(f"no bracket for the slow curve at y={y}")
        fn = lambda x: float(self.sys.f(x, y, 0.0))
        roots = []
        for a, b in ((-math.pi, xc), (xc, math.pi)):
            r = brentq(fn, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            d = float(self.sys.f_x(r, y, 0.0))
            if d != 0.0:
                r2 = r - fn(r) / d
                if abs(fn(r2)) <= abs(fn(r)):
                    r = r2
            roots.append(r)
        labels = [float(self.sys.f_x(r, y, 0.0)) for r in roots]
        if labels[0] < 0 < labels[1]:
            return roots[0], roots[1]
        if labels[1] < 0 < labels[0]:
            return roots[1], roots[0]
        # both roots agree to rounding: at the fold within tolerance
        m = 0.5 * (roots[0] + roots[1])
        return m, m

    def stable_at(self, y: float) -> float:
        return self.branches_at(y)[0]

    def unstable_at(self, y: float) -> float:
        return self.branches_at(y)[1]

    def slope(self, y: float, branch: str) -> float:
        """``ds/dy = -f_y / f_x`` on the requested branch."""
        x = self.stable_at(y) if branch == "stable" else self.unstable_at(y)
        return -float(self.sys.f_y(x, y, 0.0)) / float(self.sys.f_x(x, y, 0.0))


def compute_slow_curve(sys: SlowFastSystem, n_samples: int = 257,
                       folds: Folds | None = None, tol: float = 1e-12) -> SlowCurveModel:
    """Sample both branches at ``n_samples`` interior y values.

    Samples are clustered towards the folds (cosine spacing) where the
    branches turn.
    """
    folds = folds or find_folds(sys, tol=tol)
    t = 0.5 * (1 - np.cos(np.linspace(0, math.pi, n_samples + 2)[1:-1]))
    ys = folds.tau_plus + t * (folds.tau_minus - folds.tau_plus)
    model = SlowCurveModel(sys, folds, ys, np.empty(n_samples), np.empty(n_samples), tol)
    for i, y in enumerate(ys):
        model.stable[i], model.unstable[i] = model.branches_at(float(y))
    return model


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    conditions: dict[str, bool] = field(default_factory=dict)
    details: dict[str, object] = field(default_factory=dict)
    orientation: str = "unknown"
    normalized: SlowFastSystem | None = None

    @property
    def ok(self) -> bool:
        return bool(self.conditions) and all(self.conditions.values())

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "conditions": dict(self.conditions),
            "orientation": self.orientation,
            "details": self.details,
        }


_CONDITIONS = ("1_slow_speed_positive", "2_smooth_curve", "3_convex_in_square",
               "4_nondegenerate_branches", "5_nondegenerate_folds")


def _polygon_turns(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    dx = np.diff(np.append(xs, xs[0]))
    dy = np.diff(np.append(ys, ys[0]))
    return dx * np.roll(dy, -1) - dy * np.roll(dx, -1)


def validate_genericity(sys: SlowFastSystem, eps_max: float = 0.5, n_grid: int = 256,
                        n_curve: int = 257, tol: float = 1e-12,
                        fold_margin: float = 1e-8) -> ValidationReport:
    """Check the five genericity conditions and normalise the x orientation.

    Failures are recorded in the report; nothing is raised.  When the fold
    sign pattern only holds after ``x -> -x`` the flipped system is stored
    in ``report.normalized``.
    """
    rep = ValidationReport()
    cond = dict.fromkeys(_CONDITIONS, False)
    rep.conditions = cond

    g_grid = np.linspace(-math.pi, math.pi, n_grid, endpoint=False)
    X, Y = np.meshgrid(g_grid, g_grid)
    g_min = min(float(np.min(sys.g(X, Y, e))) for e in (0.0, eps_max))
    rep.details["min_g"] = g_min
    cond["1_slow_speed_positive"] = g_min > 0

    try:
        folds = find_folds(sys, tol=tol)
        curve = compute_slow_curve(sys, n_curve, folds=folds, tol=tol)
    except (NoFolds, TooManyFolds, BranchLost, GeometryError) as exc:
        rep.details["slow_curve_error"] = f"{type(exc).__name__}: {exc}"
        return rep

    rep.details["G_plus"] = [folds.sigma_plus, folds.tau_plus]
    rep.details["G_minus"] = [folds.sigma_minus, folds.tau_minus]
    resid = max(abs(float(sys.f(x, y, 0.0))) for x, y in
                list(zip(curve.stable, curve.ys)) + list(zip(curve.unstable, curve.ys)))
    rep.details["curve_residual"] = resid
    cond["2_smooth_curve"] = resid < 1e3 * tol

    # closed polygon: stable branch bottom->top, fold, unstable branch top->bottom
    px = np.concatenate([[folds.sigma_plus], curve.stable, [folds.sigma_minus], curve.unstable[::-1]])
    py = np.concatenate([[folds.tau_plus], curve.ys, [folds.tau_minus], curve.ys[::-1]])
    turns = _polygon_turns(px, py)
    scale = np.max(np.abs(turns))
    signif = turns[np.abs(turns) > 1e-9 * scale]
    convex = bool(np.all(signif > 0) or np.all(signif < 0))
    inside = bool(np.max(np.abs(px)) < math.pi and np.max(np.abs(py)) < math.pi)
    rep.details["convex"] = convex
    rep.details["inside_square"] = inside
    cond["3_convex_in_square"] = convex and inside

    fx_s = np.array([float(sys.f_x(x, y, 0.0)) for x, y in zip(curve.stable, curve.ys)])
    fx_u = np.array([float(sys.f_x(x, y, 0.0)) for x, y in zip(curve.unstable, curve.ys)])
    cond["4_nondegenerate_branches"] = bool(np.all(fx_s < 0) and np.all(fx_u > 0))

    fy_p = float(sys.f_y(folds.sigma_plus, folds.tau_plus, 0.0))
    fy_m = float(sys.f_y(folds.sigma_minus, folds.tau_minus, 0.0))
    fxx_p = float(sys.f_xx(folds.sigma_plus, folds.tau_plus, 0.0))
    fxx_m = float(sys.f_xx(folds.sigma_minus, folds.tau_minus, 0.0))
    rep.details["fold_partials"] = {"f_y(G+)": fy_p, "f_y(G-)": fy_m,
                                    "f_xx(G+)": fxx_p, "f_xx(G-)": fxx_m}
    cond["5_nondegenerate_folds"] = min(abs(fy_p), abs(fy_m), abs(fxx_p), abs(fxx_m)) > fold_margin

    direct = fy_p < 0 < fy_m and fxx_p > 0 and fxx_m > 0
    flipped = fy_p > 0 > fy_m and fxx_p < 0 and fxx_m < 0
    if direct:
        rep.orientation = "direct"
        rep.normalized = sys
    elif flipped:
        rep.orientation = "flipped"
        rep.normalized = sys.flipped()
    else:
        rep.orientation = "inconsistent"
        cond["5_nondegenerate_folds"] = False
    return rep


# ---------------------------------------------------------------------------
# sections


@dataclass(frozen=True)
class SectionGeometry:
    """Cross-sections near the folds for a normalised system.

    ``J+ = [sigma+, pi]`` on ``y = alpha+`` and ``J- = [-pi, sigma-]`` on
    ``y = alpha-``; the global section is ``y = -pi``.
    """

    folds: Folds
    delta_plus: float
    delta_minus: float

    @property
    def alpha_plus(self) -> float:
        return self.folds.tau_plus + self.delta_plus

    @property
    def alpha_minus(self) -> float:
        return self.folds.tau_minus - self.delta_minus

    @property
    def J_plus(self) -> tuple[float, float]:
        return self.folds.sigma_plus, math.pi

    @property
    def J_minus(self) -> tuple[float, float]:
        return -math.pi, self.folds.sigma_minus

    gamma_base = -math.pi


def make_geometry(sys: SlowFastSystem, delta_plus: float | None = None,
                  delta_minus: float | None = None, folds: Folds | None = None,
                  fraction: float = 0.15) -> SectionGeometry:
    """Sections for a normalised system; ``delta`` defaults to ``fraction`` of the strip."""
    folds = folds or find_folds(sys)
    width = folds.tau_minus - folds.tau_plus
    dp = fraction * width if delta_plus is None else float(delta_plus)
    dm = fraction * width if delta_minus is None else float(delta_minus)
    if dp <= 0 or dm <= 0:
        raise GeometryError("delta_plus and delta_minus must be positive")
    geom = SectionGeometry(folds, dp, dm)
    if not folds.tau_plus < geom.alpha_plus < geom.alpha_minus < folds.tau_minus:
        raise GeometryError("sections must satisfy tau+ < alpha+ < alpha- < tau-")
    model = SlowCurveModel(sys, folds, np.empty(0), np.empty(0), np.empty(0))
    sm, sp = model.branches_at(geom.alpha_plus)
    if not (sm < folds.sigma_plus < sp):
        raise GeometryError("J+ must meet the unstable branch and miss the stable one; "
                            "is the system normalised?")
    sm, sp = model.branches_at(geom.alpha_minus)
    if not (sm < folds.sigma_minus < sp):
        raise GeometryError("J- must meet the stable branch and miss the unstable one")
    return geom
