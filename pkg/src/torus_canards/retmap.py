"""The return map of the global section ``y = -pi`` and its landmarks.

All x values are lifts to the real line.  The map ``P`` takes ``x`` on
``y = -pi`` to the lifted endpoint on ``y = +pi``; ``P(x + 2 pi) = P(x) + 2 pi``.

The canard segment ``D+`` is exponentially thin, so its interior is sampled
through the crossing point ``u`` on ``J+``: ``x(u)`` comes from a reverse
transit from ``alpha+`` (a contraction, hence well conditioned) and ``P(x(u))``
from a forward transit starting on ``J+``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoBracket, SlopeOneNotFound
from .flow import IntegratorConfig, transit
from .system import (TWO_PI, LiftedPoint, SectionGeometry, SlowFastSystem, compute_slow_curve,
                     make_geometry, wrap)

__all__ = [
    "Tolerances",
    "CanardSegments",
    "GraphLandmarks",
    "CycleRecord",
    "DPlusScan",
    "poincare_map",
    "inverse_map",
    "canard_segments",
    "scan_d_plus",
    "landmarks",
    "fixed_points",
    "is_canard",
    "rotation_number",
    "unit_slope_set",
    "graph_sample",
    "LN2",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class Tolerances:
    tol_curve: float = 1e-12
    tol_fix: float = 1e-9
    tol_hyp: float = 1e-3
    tol_slope: float = 1e-6
    tol_tangent: float = 1e-6
    n_scan: int = 256
    n_refine: int = 256


@dataclass(frozen=True)
class CanardSegments:
    """``D+ = [p_plus, q_plus)`` on ``y = -pi`` and ``D- = [p_minus, q_minus)`` on ``y = +pi``."""

    eps: float
    p_plus: float
    q_plus: float
    p_minus: float
    q_minus: float

    @property
    def width_plus(self) -> float:
        return self.q_plus - self.p_plus

    @property
    def width_minus(self) -> float:
        return self.q_minus - self.p_minus

    def contains_plus(self, x: float, slack: float = 0.0) -> bool:
        """Membership of ``x`` (any lift) in D+."""
        r = self.p_plus + ((x - self.p_plus) % TWO_PI)
        return r <= self.q_plus + slack or r >= self.p_plus + TWO_PI - slack

    def contains_minus(self, y: float, slack: float = 0.0) -> bool:
        r = self.p_minus + ((y - self.p_minus) % TWO_PI)
        return r <= self.q_minus + slack or r >= self.p_minus + TWO_PI - slack

    def to_sheet(self, y: float) -> float:
        """The lift of ``y`` nearest to the lift ``[p_minus, q_minus]`` of D-."""
        mid = 0.5 * (self.p_minus + self.q_minus)
        return y - TWO_PI * round((y - mid) / TWO_PI)


@dataclass(frozen=True)
class GraphLandmarks:
    """Landmarks of the graph, y values in the sheet of ``[p_minus, q_minus]``."""

    eps: float
    segments: CanardSegments
    A_minus: LiftedPoint
    A_plus: LiftedPoint
    B_minus: LiftedPoint | None
    B_plus: LiftedPoint | None
    E_minus: LiftedPoint
    E_plus: LiftedPoint
    u_star: float
    notes: tuple[str, ...] = ()

    def in_rectangle(self, pt: LiftedPoint, slack: float = 0.0) -> bool:
        s = self.segments
        return (s.p_plus - slack <= pt.x <= s.q_plus + slack
                and s.p_minus - slack <= pt.y <= s.q_minus + slack)


@dataclass(frozen=True)
class CycleRecord:
    x_fixed: float
    winding_n: int
    log_multiplier: float
    stable: bool
    canard: bool
    residual: float
    hyperbolic: bool


@dataclass
class DPlusScan:
    """Dense samples of the graph over D+, ordered by ``u`` (hence by ``x``)."""

    eps: float
    segments: CanardSegments
    u_star: float
    u: np.ndarray
    x: np.ndarray
    px: np.ndarray
    log_slope: np.ndarray
    extra: dict = field(default_factory=dict)


def _cfg(cfg):
    return cfg or IntegratorConfig()


def poincare_map(sys: SlowFastSystem, eps: float, x0: float,
                 cfg: IntegratorConfig | None = None) -> tuple[float, float]:
    """Lifted ``P(x0)`` and ``ln P'(x0)``."""
    r = transit(sys, eps, -math.pi, math.pi, x0, _cfg(cfg))
    return r.x_lifted, r.log_jacobian


def inverse_map(sys: SlowFastSystem, eps: float, y0: float,
                cfg: IntegratorConfig | None = None) -> tuple[float, float]:
    """Lifted ``P^-1(y0)`` and ``ln (P^-1)'(y0)``."""
    r = transit(sys, eps, math.pi, -math.pi, y0, _cfg(cfg))
    return r.x_lifted, r.log_jacobian


def canard_segments(sys: SlowFastSystem, eps: float, geom: SectionGeometry | None = None,
                    cfg: IntegratorConfig | None = None) -> CanardSegments:
    geom = geom or make_geometry(sys)
    cfg = _cfg(cfg)
    lo, hi = geom.J_plus
    p_plus = transit(sys, eps, geom.alpha_plus, -math.pi, lo, cfg).x_lifted
    q_plus = transit(sys, eps, geom.alpha_plus, -math.pi, hi, cfg).x_lifted
    lo, hi = geom.J_minus
    p_minus = transit(sys, eps, geom.alpha_minus, math.pi, lo, cfg).x_lifted
    q_minus = transit(sys, eps, geom.alpha_minus, math.pi, hi, cfg).x_lifted
    return CanardSegments(eps, p_plus, q_plus, p_minus, q_minus)


def _maximal_canard(sys, eps, geom, cfg, target):
    """Crossing ``u`` on J+ whose orbit meets ``alpha-`` at the unstable branch.

    The forward position on ``alpha-`` is increasing in ``u``; bisection to
    machine resolution.
    """
    lo, hi = geom.J_plus
    fwd = lambda u: transit(sys, eps, geom.alpha_plus, geom.alpha_minus, u, cfg).x_lifted - target
    f_lo, f_hi = fwd(lo), fwd(hi)
    if not f_lo < 0 < f_hi:
        # the unstable branch is not separated at this eps; fall back to J+ midpoint
        return 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fwd(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _u_grid(geom: SectionGeometry, u_star: float, n: int) -> np.ndarray:
    lo, hi = geom.J_plus
    n_uni = max(n // 4, 8)
    n_side = max((n - n_uni) // 2, 8)
    uni = np.linspace(lo, hi, n_uni)
    left = u_star - np.geomspace(1e-15 * max(1.0, abs(u_star)), u_star - lo, n_side)
    right = u_star + np.geomspace(1e-15 * max(1.0, abs(u_star)), hi - u_star, n_side)
    g = np.unique(np.concatenate([uni, left, right, [u_star]]))
    return g[(g >= lo) & (g <= hi)]


def _through_jplus(sys, eps, geom, cfg, u):
    back = transit(sys, eps, geom.alpha_plus, -math.pi, u, cfg)
    fwd = transit(sys, eps, geom.alpha_plus, math.pi, u, cfg)
    return back.x_lifted, fwd.x_lifted, fwd.log_jacobian - back.log_jacobian


def scan_d_plus(sys: SlowFastSystem, eps: float, geom: SectionGeometry | None = None,
                cfg: IntegratorConfig | None = None, n: int = 256,
                segments: CanardSegments | None = None) -> DPlusScan:
    """Sample ``x, P(x), ln P'(x)`` over D+ with points clustered at the maximal canard."""
    geom = geom or make_geometry(sys)
    cfg = _cfg(cfg)
    segments = segments or canard_segments(sys, eps, geom, cfg)
    target = compute_slow_curve(sys, 9, geom.folds).unstable_at(geom.alpha_minus)
    u_star = _maximal_canard(sys, eps, geom, cfg, target)
    us = _u_grid(geom, u_star, n)
    xs = np.empty(len(us))
    px = np.empty(len(us))
    ls = np.empty(len(us))
    for i, u in enumerate(us):
        xs[i], px[i], ls[i] = _through_jplus(sys, eps, geom, cfg, float(u))
    return DPlusScan(eps, segments, u_star, us, xs, px, ls)


def _bisect(fun, a, b, fa, fb, tol_val, max_iter=200):
    """Bisection on a bracket with ``fa * fb < 0``; returns ``(root, value)``."""
    best = (a, fa) if abs(fa) < abs(fb) else (b, fb)
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        if m <= min(a, b) or m >= max(a, b):
            break
        fm = fun(m)
        if abs(fm) < abs(best[1]):
            best = (m, fm)
        if abs(fm) <= tol_val:
            return m, fm
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return best


def _slope_one(sys, eps, geom, cfg, scan, tol_slope):
    """Roots of ``ln P' = 0`` on each flank of the maximal canard."""
    ls = scan.log_slope
    i_max = int(np.argmax(ls))
    out = []
    notes = []
    for side, idx in (("minus", range(0, i_max)), ("plus", range(i_max, len(ls) - 1))):
        crossings = [i for i in idx if (ls[i] < 0) != (ls[i + 1] < 0)]
        if not crossings:
            out.append(None)
            notes.append(f"no slope-1 point on the {side} flank")
            continue
        if len(crossings) > 1:
            notes.append(f"{len(crossings)} slope-1 crossings on the {side} flank")
        i = crossings[0] if side == "minus" else crossings[-1]
        fun = lambda u: _through_jplus(sys, eps, geom, cfg, u)[2]
        u, _ = _bisect(fun, scan.u[i], scan.u[i + 1], ls[i], ls[i + 1], tol_slope)
        x, y, _ = _through_jplus(sys, eps, geom, cfg, u)
        out.append((u, x, y))
    return out, notes


def landmarks(sys: SlowFastSystem, eps: float, geom: SectionGeometry | None = None,
              cfg: IntegratorConfig | None = None, tol: Tolerances | None = None,
              scan: DPlusScan | None = None) -> GraphLandmarks:
    """A, B, E points of the graph inside the rectangle ``K = D+ x D-``.

    Missing slope-1 points are returned as ``None`` with a note; use
    ``require_b`` on the result via :func:`slope_one_points` to make that fatal.
    """
    geom = geom or make_geometry(sys)
    cfg = _cfg(cfg)
    tol = tol or Tolerances()
    scan = scan or scan_d_plus(sys, eps, geom, cfg, tol.n_refine)
    seg = scan.segments
    a_m = poincare_map(sys, eps, seg.p_plus, cfg)[0]
    a_p = poincare_map(sys, eps, seg.q_plus, cfg)[0]
    (bm, bp), notes = _slope_one(sys, eps, geom, cfg, scan, tol.tol_slope)
    B_minus = None if bm is None else LiftedPoint(bm[1], seg.to_sheet(bm[2]))
    B_plus = None if bp is None else LiftedPoint(bp[1], seg.to_sheet(bp[2]))
    return GraphLandmarks(
        eps=eps,
        segments=seg,
        A_minus=LiftedPoint(seg.p_plus, seg.to_sheet(a_m)),
        A_plus=LiftedPoint(seg.q_plus, seg.to_sheet(a_p)),
        B_minus=B_minus,
        B_plus=B_plus,
        E_minus=LiftedPoint(seg.p_plus, seg.q_minus),
        E_plus=LiftedPoint(seg.q_plus, seg.p_minus),
        u_star=scan.u_star,
        notes=tuple(notes),
    )


def slope_one_points(lm: GraphLandmarks) -> tuple[LiftedPoint, LiftedPoint]:
    if lm.B_minus is None or lm.B_plus is None:
        raise SlopeOneNotFound(f"eps={lm.eps}: " + "; ".join(lm.notes))
    return lm.B_minus, lm.B_plus


def is_canard(sys: SlowFastSystem, eps: float, x_fixed: float,
              geom: SectionGeometry | None = None, cfg: IntegratorConfig | None = None,
              segments: CanardSegments | None = None, both: bool = False):
    """Does the orbit of ``x_fixed`` cross J+?

    Two independent tests: the crossing point on ``alpha+`` and membership
    in D+.  With ``both=True`` the pair ``(crossing, membership)`` is returned.
    """
    geom = geom or make_geometry(sys)
    cfg = _cfg(cfg)
    xa = transit(sys, eps, -math.pi, geom.alpha_plus, x_fixed, cfg).x_lifted
    lo, hi = geom.J_plus
    w = wrap(xa)
    crossing = lo <= w <= hi or (hi == math.pi and w == -math.pi)
    if not both:
        return crossing
    segments = segments or canard_segments(sys, eps, geom, cfg)
    return crossing, segments.contains_plus(x_fixed)


def _refine_root(sys, eps, geom, cfg, a, b, m, unstable):
    """Fixed point on branch ``m`` between two scan points ``a, b``.

    Scan points are ``(kind, param, x, Px, logJ)``.  Inside D+ the crossing
    parameter ``u`` on J+ is used for stable roots, so that ``x`` is not
    limited by its own rounding.  Unstable roots are solved on ``P^-1``,
    which contracts there; their residual is that of the inverse map.
    Returns ``(x, log multiplier, residual)``.
    """
    shift = TWO_PI * m
    if unstable:
        fun = lambda y: inverse_map(sys, eps, y, cfg)[0] - (y - shift)
        y, r = _bisect(fun, a[3], b[3], a[2] - (a[3] - shift), b[2] - (b[3] - shift), 0.0)
        xi, lj = inverse_map(sys, eps, y, cfg)
        return xi, -lj, abs(r)
    if a[0] == "u" and b[0] == "u":
        def fun(u):
            x, px, _ = _through_jplus(sys, eps, geom, cfg, u)
            return px - x - shift
        u, r = _bisect(fun, a[1], b[1], a[3] - a[2] - shift, b[3] - b[2] - shift, 0.0)
        x, _, logm = _through_jplus(sys, eps, geom, cfg, u)
        return x, logm, abs(r)
    fun = lambda x: poincare_map(sys, eps, x, cfg)[0] - x - shift
    x, r = _bisect(fun, a[2], b[2], a[3] - a[2] - shift, b[3] - b[2] - shift, 0.0)
    return x, poincare_map(sys, eps, x, cfg)[1], abs(r)


def _scan_points(sys, eps, cfg, tol, scan):
    """One period of samples starting at ``p+``: D+ in ``u`` order, then the rest."""
    seg = scan.segments
    pts = [("u", float(u), float(x), float(p), float(l))
           for u, x, p, l in zip(scan.u, scan.x, scan.px, scan.log_slope)]
    xs_out = np.linspace(seg.q_plus, seg.p_plus + TWO_PI, tol.n_scan + 2)[1:-1]
    for x in xs_out:
        pts.append(("x", float(x), float(x), *poincare_map(sys, eps, float(x), cfg)))
    k, u, x, p, l = pts[0]
    pts.append(("x", x + TWO_PI, x + TWO_PI, p + TWO_PI, l))
    return pts


def fixed_points(sys: SlowFastSystem, eps: float, geom: SectionGeometry | None = None,
                 cfg: IntegratorConfig | None = None, tol: Tolerances | None = None,
                 scan: DPlusScan | None = None, strict: bool = False) -> list[CycleRecord]:
    """All fixed points of the circle map ``P`` (any winding branch).

    The displacement ``P(x) - x`` is scanned over one period: a uniform grid
    off D+ plus the dense D+ scan.  Each sign change of ``P(x) - x - 2 pi n``
    is refined by bisection.  An empty list is legal (no fixed point); with
    ``strict=True`` it raises ``NoBracket`` instead.
    """
    geom = geom or make_geometry(sys)
    cfg = _cfg(cfg)
    tol = tol or Tolerances()
    scan = scan or scan_d_plus(sys, eps, geom, cfg, tol.n_refine)
    pts = _scan_points(sys, eps, cfg, tol, scan)
    disp = np.array([p[3] - p[2] for p in pts])
    records: list[CycleRecord] = []
    base = pts[0][2]
    for m in range(math.floor(disp.min() / TWO_PI), math.ceil(disp.max() / TWO_PI) + 1):
        d = disp - TWO_PI * m
        for i in range(len(pts) - 1):
            if not ((d[i] < 0) != (d[i + 1] < 0)):
                continue
            x, logm, res = _refine_root(sys, eps, geom, cfg, pts[i], pts[i + 1], m,
                                        unstable=d[i] < d[i + 1])
            x_red = x - TWO_PI * math.floor((x - base) / TWO_PI)
            records.append(CycleRecord(
                x_fixed=x_red, winding_n=m, log_multiplier=logm,
                stable=logm < 0, canard=is_canard(sys, eps, x_red, geom, cfg),
                residual=res, hyperbolic=abs(logm) > tol.tol_hyp))
    records.sort(key=lambda r: r.x_fixed)
    if strict and not records:
        raise NoBracket(f"no fixed point at eps={eps}")
    return records


def rotation_number(sys: SlowFastSystem, eps: float, n_iter: int = 200,
                    geom: SectionGeometry | None = None, cfg: IntegratorConfig | None = None,
                    tol: Tolerances | None = None, cycles: list[CycleRecord] | None = None) -> float:
    """Rotation number of the lift, in turns per return."""
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if cycles is None:
        cycles = fixed_points(sys, eps, geom, cfg, tol)
    hyp = [c for c in cycles if c.hyperbolic]
    if hyp:
        return float(hyp[0].winding_n)
    x = 0.0
    for _ in range(n_iter):
        x = poincare_map(sys, eps, x, cfg)[0]
    return x / (TWO_PI * n_iter)


def unit_slope_set(sys: SlowFastSystem, eps: float, geom: SectionGeometry | None = None,
                   cfg: IntegratorConfig | None = None, tol: Tolerances | None = None,
                   scan: DPlusScan | None = None) -> list[dict]:
    """Arcs of ``{x : ln P'(x) in [-ln 2, ln 2]}`` found in D+.

    Each arc is a dict with ``x_lo, x_hi`` and ``trend`` (+1 if ``ln P'``
    increases along the arc, -1 if it decreases).
    """
    geom = geom or make_geometry(sys)
    cfg = _cfg(cfg)
    tol = tol or Tolerances()
    scan = scan or scan_d_plus(sys, eps, geom, cfg, tol.n_refine)
    ls = scan.log_slope
    inside = np.abs(ls) <= LN2
    fun = lambda u: _through_jplus(sys, eps, geom, cfg, u)[2]

    def edge(i, level):
        u, _ = _bisect(lambda v: fun(v) - level, scan.u[i], scan.u[i + 1],
                       ls[i] - level, ls[i + 1] - level, 1e-9)
        return _through_jplus(sys, eps, geom, cfg, u)[0]

    arcs = []
    i = 0
    n = len(ls)
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and inside[j + 1]:
            j += 1
        lo_level = LN2 if i > 0 and ls[i - 1] > LN2 else -LN2
        hi_level = LN2 if j + 1 < n and ls[j + 1] > LN2 else -LN2
        x_lo = edge(i - 1, lo_level) if i > 0 else scan.x[i]
        x_hi = edge(j, hi_level) if j + 1 < n else scan.x[j]
        seg = ls[i:j + 1]
        trend = int(np.sign(seg[-1] - seg[0])) if j > i else int(np.sign(hi_level - lo_level))
        monotone = bool(np.all(np.diff(seg) * trend >= 0)) if j > i else True
        arcs.append({"x_lo": float(x_lo), "x_hi": float(x_hi), "trend": trend,
                     "monotone": monotone, "n_samples": j - i + 1})
        i = j + 1
    return arcs


def graph_sample(sys: SlowFastSystem, eps: float, geom: SectionGeometry | None = None,
                 cfg: IntegratorConfig | None = None, n_uniform: int = 256,
                 scan: DPlusScan | None = None) -> np.ndarray:
    """Rows ``(x_lifted, Px_lifted, logJ)`` over one period, refined inside D+."""
    geom = geom or make_geometry(sys)
    cfg = _cfg(cfg)
    scan = scan or scan_d_plus(sys, eps, geom, cfg)
    seg = scan.segments
    xs = np.linspace(seg.q_plus, seg.p_plus + TWO_PI, n_uniform + 2)[1:-1]
    rows = [(float(x), *poincare_map(sys, eps, float(x), cfg)) for x in xs]
    rows += list(zip(scan.x.tolist(), scan.px.tolist(), scan.log_slope.tolist()))
    rows.sort()
    return np.array(rows)
