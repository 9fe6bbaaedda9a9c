"""Way-in/way-out quantities along the slow curve.

``a(y)`` is the normal rate of attraction or repulsion of a branch, measured
per unit of the slow clock ``y``: ``a = f_x / g``.  Its integrals from the
sections give the balance functions

    Phi+(y) = int_{alpha+}^{y} a+(v) dv,     Phi-(y) = int_{alpha-}^{y} a-(v) dv,

both positive on ``(alpha+, alpha-)``.  A canard that tracks the unstable
branch from ``alpha+`` to ``y`` has gathered expansion ``Phi+(y)/eps``; it is
paid back after the jump by contraction ``Phi-(y)/eps`` along the stable
branch.  Their equality fixes the height of slope-one canards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import NeverExits, NoRoot, OutOfStrip
from .flow import IntegratorConfig, trajectory, transit
from .retmap import canard_segments
from .system import (
    TWO_PI,
    Folds,
    SectionGeometry,
    SlowCurveModel,
    SlowFastSystem,
    compute_slow_curve,
    find_folds,
    make_geometry,
)
from .windows import linear_fit

__all__ = [
    "SlowManifoldModel",
    "BalanceData",
    "a_coefficient",
    "balance_point",
    "jump_height",
    "derivative_asymptotics",
    "slow_manifold_error",
    "DerivativeFit",
    "PowerFit",
]

_BRANCHES = ("stable", "unstable")


@dataclass
class SlowManifoldModel:
    """First-order representative ``s0(y) + eps s1(y)`` of a true slow curve.

    ``s1`` follows from the invariance equation ``f(s, y, eps) = eps g s'``
    expanded to first order: ``f_x s1 + f_eps = g s0'``.
    """

    sys: SlowFastSystem
    branch: str
    folds: Folds
    margin: float = 0.05
    _curve: SlowCurveModel = field(init=False, repr=False)

    def __post_init__(self):
        if self.branch not in _BRANCHES:
            raise ValueError(f"branch must be one of {_BRANCHES}")
        self._curve = compute_slow_curve(self.sys, 9, self.folds)

    @property
    def strip(self) -> tuple[float, float]:
        return self.folds.tau_plus + self.margin, self.folds.tau_minus - self.margin

    def in_strip(self, y: float) -> bool:
        lo, hi = self.strip
        return lo <= y <= hi

    def s0(self, y: float) -> float:
        if self.branch == "stable":
            return self._curve.stable_at(y)
        return self._curve.unstable_at(y)

    def ds0(self, y: float) -> float:
        x = self.s0(y)
        return -float(self.sys.f_y(x, y, 0.0)) / float(self.sys.f_x(x, y, 0.0))

    def _f_eps(self, x, y, h=1e-6):
        return (float(self.sys.f(x, y, h)) - float(self.sys.f(x, y, 0.0))) / h

    def s1(self, y: float) -> float:
        x = self.s0(y)
        g = float(self.sys.g(x, y, 0.0))
        return (g * self.ds0(y) - self._f_eps(x, y)) / float(self.sys.f_x(x, y, 0.0))

    def __call__(self, y: float, eps: float) -> float:
        if not self.in_strip(y):
            raise OutOfStrip(f"y={y} outside the validity strip {self.strip}")
        return self.s0(y) + eps * self.s1(y)

    def residual(self, y: float, eps: float, h: float = 1e-5) -> float:
        """``|f(s, y, eps) - eps g(s, y, eps) s'(y)|`` with ``s'`` by central difference."""
        s = self(y, eps)
        ds = (self(y + h, eps) - self(y - h, eps)) / (2 * h)
        return abs(float(self.sys.f(s, y, eps)) - eps * float(self.sys.g(s, y, eps)) * ds)


def a_coefficient(sys: SlowFastSystem, eps: float, y: float, branch: str,
                  folds: Folds | None = None, margin: float = 0.05,
                  model: SlowManifoldModel | None = None) -> float:
    """``f_x`` at the first-order slow-manifold point of ``branch``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    model = model or SlowManifoldModel(sys, branch, folds or find_folds(sys), margin)
    x = model(y, eps)
    return float(sys.f_x(x, y, eps))


@dataclass
class BalanceData:
    geom: SectionGeometry
    y_balance: float
    I: float
    _plus: SlowManifoldModel = field(repr=False)
    _minus: SlowManifoldModel = field(repr=False)
    quad_tol: float = 1e-10

    def _rate(self, model: SlowManifoldModel, v: float) -> float:
        x = model.s0(v)
        sys = model.sys
        return float(sys.f_x(x, v, 0.0)) / float(sys.g(x, v, 0.0))

    def phi_plus(self, y: float) -> float:
        val, _ = integrate.quad(lambda v: self._rate(self._plus, v), self.geom.alpha_plus, y,
                                epsabs=self.quad_tol, epsrel=self.quad_tol, limit=200)
        return val

    def phi_minus(self, y: float) -> float:
        val, _ = integrate.quad(lambda v: self._rate(self._minus, v), self.geom.alpha_minus, y,
                                epsabs=self.quad_tol, epsrel=self.quad_tol, limit=200)
        return val

    def to_dict(self) -> dict:
        return {
            "alpha_plus": self.geom.alpha_plus,
            "alpha_minus": self.geom.alpha_minus,
            "y_balance": self.y_balance,
            "I": self.I,
            "phi_at_balance": self.phi_plus(self.y_balance),
        }


def balance_point(sys: SlowFastSystem, geom: SectionGeometry | None = None,
                  quad_tol: float = 1e-10, xtol: float = 1e-13) -> BalanceData:
    """Root of ``Phi+(y) = Phi-(y)`` on ``(alpha+, alpha-)`` at ``eps = 0``."""
    geom = geom or make_geometry(sys)
    margin = 0.5 * min(geom.delta_plus, geom.delta_minus)
    plus = SlowManifoldModel(sys, "unstable", geom.folds, margin)
    minus = SlowManifoldModel(sys, "stable", geom.folds, margin)
    data = BalanceData(geom, math.nan, math.nan, plus, minus, quad_tol)
    diff = lambda y: data.phi_plus(y) - data.phi_minus(y)
    lo, hi = geom.alpha_plus, geom.alpha_minus
    d_lo, d_hi = diff(lo), diff(hi)
    if not d_lo < 0 < d_hi:
        raise NoRoot(f"Phi+ - Phi- does not change sign on ({lo}, {hi})")
    y_b = optimize.brentq(diff, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
    data.y_balance = y_b
    data.I = 2.0 * data.phi_plus(y_b)
    return data


def _tube(sys, eps, geom, cfg, n=2001):
    """A representative of the true unstable slow curve over ``[alpha+, alpha-]``.

    The unstable branch attracts in reverse time, so a trajectory started on
    the first-order curve at ``alpha-`` and run backwards is exponentially
    close to an invariant curve by the time it reaches the strip below.
    """
    model = SlowManifoldModel(sys, "unstable", geom.folds, 0.5 * geom.delta_minus)
    x_top = model(geom.alpha_minus, eps)
    tr = trajectory(sys, eps, geom.alpha_minus, geom.alpha_plus, x_top, n, cfg)
    return tr[::-1, 0].copy(), tr[::-1, 1].copy()


def jump_height(sys: SlowFastSystem, eps: float, x0: float, b: float = 0.1,
                geom: SectionGeometry | None = None, cfg: IntegratorConfig | None = None,
                n: int = 4001, tube=None) -> tuple[float, str]:
    """First ``y > alpha+`` where the orbit of ``(x0, -pi)`` leaves the ``b``-tube of ``S+``.

    Returns ``(y_plus, direction)``: ``down`` when it leaves towards the
    stable branch (smaller x), ``up`` otherwise.
    """
    geom = geom or make_geometry(sys)
    cfg = cfg or IntegratorConfig()
    ys_t, xs_t = tube if tube is not None else _tube(sys, eps, geom, cfg)
    xa = transit(sys, eps, -math.pi, geom.alpha_plus, x0, cfg).x_lifted
    tr = trajectory(sys, eps, geom.alpha_plus, geom.alpha_minus, xa, n, cfg)
    ys, xs = tr[:, 0], tr[:, 1]
    s = np.interp(ys, ys_t, xs_t)
    shift = TWO_PI * round((xs[0] - s[0]) / TWO_PI)
    dev = xs - shift - s
    out = np.flatnonzero(np.abs(dev) > b)
    if out.size == 0:
        raise NeverExits(f"orbit of x0={x0} stays within {b} of the unstable branch")
    i = int(out[0])
    if i == 0:
        return float(ys[0]), "down" if dev[0] < 0 else "up"
    # linear interpolation of the crossing of |dev| = b
    d0, d1 = abs(dev[i - 1]), abs(dev[i])
    t = (b - d0) / (d1 - d0)
    return float(ys[i - 1] + t * (ys[i] - ys[i - 1])), "down" if dev[i] < 0 else "up"


@dataclass
class DerivativeFit:
    eps: list[float]
    fractions: tuple[float, ...]
    products: list[list[float]]
    midpoint: list[float]
    constant: float
    slope: float
    spread_at_smallest: float
    successive_gaps: list[float]

    @property
    def cauchy(self) -> bool:
        g = self.successive_gaps
        return all(g[i + 1] < g[i] for i in range(len(g) - 1))

    @property
    def relative_spread(self) -> float:
        return self.spread_at_smallest / abs(self.constant)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps, "fractions": list(self.fractions), "products": self.products,
            "constant": self.constant, "slope": self.slope,
            "spread_at_smallest": self.spread_at_smallest,
            "relative_spread": self.relative_spread,
            "successive_gaps": self.successive_gaps, "cauchy": self.cauchy,
        }


def derivative_asymptotics(sys: SlowFastSystem, eps_list, geom: SectionGeometry | None = None,
                           cfg: IntegratorConfig | None = None,
                           fractions=(0.25, 0.5, 0.75), chart: str = "x") -> DerivativeFit:
    """``eps * ln`` of the derivative of the transit ``y=-pi -> y=alpha+`` on D+.

    The constant is the intercept of a linear fit of the midpoint product
    against ``eps``; its sign is reported as found.

    ``chart="x"`` differentiates with respect to ``x`` on ``y = -pi``.
    ``chart="rectified"`` uses the flow-time chart ``d theta = dx / F(x, -pi)``
    there instead, which removes the O(1) term ``ln F`` that oscillates with
    the number of fast turns.
    """
    if chart not in ("x", "rectified"):
        raise ValueError("chart must be 'x' or 'rectified'")
    geom = geom or make_geometry(sys)
    cfg = cfg or IntegratorConfig()
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    products = []
    mid = []
    for eps in eps_list:
        seg = canard_segments(sys, eps, geom, cfg)

        def prod(x):
            L = transit(sys, eps, -math.pi, geom.alpha_plus, x, cfg).log_jacobian
            if chart == "rectified":
                L += math.log(sys.rhs(x, -math.pi, eps)[0])
            return eps * L

        products.append([prod(seg.p_plus + fr * seg.width_plus) for fr in fractions])
        mid.append(prod(seg.p_plus + 0.5 * seg.width_plus))
    if len(eps_list) > 1:
        slope, icpt, _ = linear_fit(eps_list, mid)
    else:
        slope, icpt = 0.0, mid[0]
    gaps = [abs(mid[i + 1] - mid[i]) for i in range(len(mid) - 1)]
    spread = max(products[-1]) - min(products[-1])
    return DerivativeFit(eps_list, tuple(fractions), products, mid, icpt, slope, spread, gaps)


@dataclass
class PowerFit:
    eps: list[float]
    errors: list[float]
    exponent: float
    prefactor: float
    r2: float
    where: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def slow_manifold_error(sys: SlowFastSystem, eps_list, geom: SectionGeometry | None = None,
                        cfg: IntegratorConfig | None = None, y_fixed: float | None = None,
                        n: int = 4001) -> PowerFit:
    """Distance of the attracting trajectory along ``S+`` from ``s0`` near the fold.

    The unstable branch attracts in reverse time, so the trajectory is run
    from the first-order curve at ``alpha-`` down towards ``tau+``.  The error
    is the largest ``|x - s0|`` on ``[tau+ + eps^(1/3), tau+ + delta+]``, or
    the value at ``y_fixed`` when given.  A power law ``C eps^q`` is fitted.
    Every ``eps`` must satisfy ``eps^(1/3) < delta+``.
    """
    geom = geom or make_geometry(sys)
    cfg = cfg or IntegratorConfig()
    folds = geom.folds
    curve = compute_slow_curve(sys, 9, folds)
    model = SlowManifoldModel(sys, "unstable", folds, 0.5 * geom.delta_minus)
    eps_list = sorted(float(e) for e in eps_list)
    errs = []
    for eps in eps_list:
        lo = folds.tau_plus + eps ** (1.0 / 3.0)
        hi = folds.tau_plus + geom.delta_plus
        if y_fixed is None and lo >= hi:
            raise OutOfStrip(f"eps={eps}: eps^(1/3) exceeds delta+; the window is empty")
        x_top = model(geom.alpha_minus, eps)
        if y_fixed is not None:
            x = transit(sys, eps, geom.alpha_minus, y_fixed, x_top, cfg).x_lifted
            errs.append(abs(x - curve.unstable_at(y_fixed)))
            continue
        x_lo = transit(sys, eps, geom.alpha_minus, hi, x_top, cfg).x_lifted
        tr = trajectory(sys, eps, hi, lo, x_lo, n, cfg)
        dev = [abs(xv - curve.unstable_at(yv)) for yv, xv in tr[:, :2]]
        errs.append(max(dev))
    q, c, r2 = linear_fit(np.log(eps_list), np.log(errs))
    where = "fixed y" if y_fixed is not None else "fold window"
    return PowerFit(eps_list, errs, q, math.exp(c), r2, where)
