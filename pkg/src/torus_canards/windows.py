"""Canard windows ``R_n = [alpha_n, beta_n]`` and the regime census.

Gaps are measured at the corners and landmarks of ``K = D+ x D-``.  The
landmark y values are taken in the sheet of ``[p-, q-]`` and shifted by one
turn, so a gap is ``y - x + 2 pi``.  With this anchoring the gaps are
positive, grow as ``eps`` decreases, and the rotation number equals ``n`` on
``(beta_{n+1}, alpha_n)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BracketInvalid, SlopeOneNotFound, WindowBelowFloor
from .flow import EPS_FLOOR, IntegratorConfig, transit
from .retmap import (
    CanardSegments,
    CycleRecord,
    Tolerances,
    _maximal_canard,
    _through_jplus,
    canard_segments,
    fixed_points,
    rotation_number,
    scan_d_plus,
)
from .system import TWO_PI, SectionGeometry, SlowFastSystem, compute_slow_curve, make_geometry

__all__ = [
    "CORNERS",
    "CensusRecord",
    "WindowRecord",
    "ScalingReport",
    "corner_gap",
    "corner_gaps",
    "bracket_windows",
    "find_window",
    "census",
    "between_windows",
    "scaling_report",
]

CORNERS = ("E-", "E+", "A-", "A+", "B-", "B+")


@dataclass
class CensusRecord:
    eps: float
    regime: int
    n: int
    cycles: list[CycleRecord]
    gaps: dict[str, float | None]
    rotation: float

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "regime": self.regime,
            "n": self.n,
            "rotation": self.rotation,
            "gaps": self.gaps,
            "cycles": [asdict(c) for c in self.cycles],
        }


@dataclass
class WindowRecord:
    n: int
    alpha: float
    beta: float
    c_minus: tuple[float, float] | None = None
    c_plus: tuple[float, float] | None = None
    census: list[CensusRecord] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.beta - self.alpha

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "beta": self.beta,
            "width": self.width,
            "c_minus": list(self.c_minus) if self.c_minus else None,
            "c_plus": list(self.c_plus) if self.c_plus else None,
            "census": [c.to_dict() for c in self.census],
            "notes": list(self.notes),
        }


class _Ctx:
    """Shared pieces for one system: geometry, integrator settings, a slow-curve point."""

    def __init__(self, sys, geom, cfg, tol):
        self.sys = sys
        self.geom = geom or make_geometry(sys)
        self.cfg = cfg or IntegratorConfig()
        self.tol = tol or Tolerances()
        self.target = compute_slow_curve(sys, 9, self.geom.folds).unstable_at(self.geom.alpha_minus)


def _b_point(ctx: _Ctx, eps: float, side: str, seg: CanardSegments):
    """Slope-1 point on one flank by bisection in the J+ parameter.

    The log-slope rises from ``sigma+`` up to the maximal canard ``u*`` and
    falls from there to ``pi``; each flank is bracketed by its ends.
    """
    sys, geom, cfg = ctx.sys, ctx.geom, ctx.cfg
    u_star = _maximal_canard(sys, eps, geom, cfg, ctx.target)
    lo, hi = geom.J_plus
    a, b = (lo, u_star) if side == "-" else (u_star, hi)
    la = _through_jplus(sys, eps, geom, cfg, a)[2]
    lb = _through_jplus(sys, eps, geom, cfg, b)[2]
    if not (la < 0) != (lb < 0):
        raise SlopeOneNotFound(f"eps={eps}: no slope-1 point on the {side} flank")
    for _ in range(200):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        lm = _through_jplus(sys, eps, geom, cfg, m)[2]
        if abs(lm) <= ctx.tol.tol_slope:
            a = b = m
            break
        if (lm < 0) == (la < 0):
            a, la = m, lm
        else:
            b, lb = m, lm
    x, px, _ = _through_jplus(sys, eps, geom, cfg, 0.5 * (a + b))
    return x, seg.to_sheet(px)


def _gap(ctx: _Ctx, eps: float, which: str, seg: CanardSegments | None = None) -> float:
    if which not in CORNERS:
        raise ValueError(f"unknown landmark {which!r}; expected one of {CORNERS}")
    seg = seg or canard_segments(ctx.sys, eps, ctx.geom, ctx.cfg)
    if which == "E-":
        x, y = seg.p_plus, seg.q_minus
    elif which == "E+":
        x, y = seg.q_plus, seg.p_minus
    elif which in ("A-", "A+"):
        x = seg.p_plus if which == "A-" else seg.q_plus
        y = seg.to_sheet(transit(ctx.sys, eps, -math.pi, math.pi, x, ctx.cfg).x_lifted)
    else:
        x, y = _b_point(ctx, eps, which[1], seg)
    return y - x + TWO_PI


def corner_gap(sys: SlowFastSystem, eps: float, which: str,
               geom: SectionGeometry | None = None, cfg: IntegratorConfig | None = None,
               tol: Tolerances | None = None) -> float:
    """Lifted gap ``(y - x)`` at a corner (E), an edge point (A) or a slope-1 point (B)."""
    return _gap(_Ctx(sys, geom, cfg, tol), eps, which)


def corner_gaps(sys: SlowFastSystem, eps: float, geom: SectionGeometry | None = None,
                cfg: IntegratorConfig | None = None, tol: Tolerances | None = None,
                ctx: _Ctx | None = None) -> dict[str, float | None]:
    """All six gaps; missing slope-1 points give ``None``."""
    ctx = ctx or _Ctx(sys, geom, cfg, tol)
    seg = canard_segments(ctx.sys, eps, ctx.geom, ctx.cfg)
    out: dict[str, float | None] = {}
    for w in CORNERS:
        try:
            out[w] = _gap(ctx, eps, w, seg)
        except SlopeOneNotFound:
            out[w] = None
    return out


def _bisect_eps(fun, lo, hi, rel_tol):
    """Root of ``fun`` in ``[lo, hi]``; the endpoint signs must differ."""
    f_lo, f_hi = fun(lo), fun(hi)
    if not (f_lo < 0) != (f_hi < 0):
        raise BracketInvalid(f"no sign change of the gap equation on [{lo}, {hi}]")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = fun(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)


def bracket_windows(sys: SlowFastSystem, eps_lo: float, eps_hi: float,
                    geom: SectionGeometry | None = None, cfg: IntegratorConfig | None = None,
                    n_grid: int = 60) -> dict[int, tuple[float, float]]:
    """Coarse geometric scan of ``gap(E-)``: brackets of ``beta_n`` for every n crossed."""
    ctx = _Ctx(sys, geom, cfg, None)
    grid = np.geomspace(eps_lo, eps_hi, n_grid)
    gaps = [_gap(ctx, float(e), "E-") for e in grid]
    if np.any(np.diff(gaps) >= 0):
        raise BracketInvalid("gap(E-) is not monotone on the scan grid")
    out = {}
    for i in range(n_grid - 1):
        hi_n = math.floor(gaps[i] / TWO_PI)
        lo_n = math.floor(gaps[i + 1] / TWO_PI)
        for n in range(lo_n + 1, hi_n + 1):
            out[n] = (float(grid[i]), float(grid[i + 1]))
    return dict(sorted(out.items()))


def _active_n(gaps: dict) -> tuple[int, bool]:
    """Window index for this eps, and whether eps lies in ``R_n``."""
    lo, hi = gaps["E+"], gaps["E-"]
    n = math.floor(hi / TWO_PI)
    return n, TWO_PI * n >= lo


def _classify(gaps: dict, n: int, inside: bool, tol_tangent: float) -> int:
    if not inside:
        return 1
    t = TWO_PI * n
    if t > gaps["A-"] or t < gaps["A+"]:
        return 2
    b_m, b_p = gaps["B-"], gaps["B+"]
    if b_m is None or b_p is None:
        return 0
    if abs(b_m - t) < tol_tangent or abs(b_p - t) < tol_tangent:
        return 4
    if t > b_m or t < b_p:
        return 3
    return 5


def census(sys: SlowFastSystem, eps: float, geom: SectionGeometry | None = None,
           cfg: IntegratorConfig | None = None, tol: Tolerances | None = None,
           n_iter: int = 200, ctx: _Ctx | None = None) -> CensusRecord:
    """Regime 1..5 of the diagonal against the graph, with the cycles found.

    Regime 0 is returned when eps lies between the A gaps but a slope-1 point
    is missing, so the B-based split cannot be made.
    """
    ctx = ctx or _Ctx(sys, geom, cfg, tol)
    gaps = corner_gaps(ctx.sys, eps, ctx=ctx)
    n, inside = _active_n(gaps)
    regime = _classify(gaps, n, inside, ctx.tol.tol_tangent)
    scan = scan_d_plus(ctx.sys, eps, ctx.geom, ctx.cfg, ctx.tol.n_refine)
    cycles = fixed_points(ctx.sys, eps, ctx.geom, ctx.cfg, ctx.tol, scan=scan)
    rho = rotation_number(ctx.sys, eps, n_iter, ctx.geom, ctx.cfg, ctx.tol, cycles=cycles)
    return CensusRecord(eps=eps, regime=regime, n=n, cycles=cycles, gaps=gaps, rotation=rho)


def find_window(sys: SlowFastSystem, n: int, eps_bracket: tuple[float, float],
                geom: SectionGeometry | None = None, cfg: IntegratorConfig | None = None,
                tol: Tolerances | None = None, n_census: int = 5,
                rel_tol: float = 1e-14, sub_rel_tol: float = 1e-10) -> WindowRecord:
    """Solve the corner-gap equations for window ``n``.

    ``eps_bracket`` must contain the root of ``gap(E-) = 2 pi n``.  The
    ``C~`` sub-intervals are solved to ``sub_rel_tol``; each gets a census at
    ``n_census`` interior samples.
    """
    ctx = _Ctx(sys, geom, cfg, tol)
    target = TWO_PI * n
    g = lambda which: (lambda e: _gap(ctx, e, which) - target)
    lo, hi = sorted(eps_bracket)
    beta = _bisect_eps(g("E-"), lo, hi, rel_tol)
    if beta < EPS_FLOOR:
        raise WindowBelowFloor(f"beta_{n} = {beta} is below the working floor {EPS_FLOOR}")
    # gap(E+) < 2 pi n at beta; walk down until it exceeds it
    lo = beta
    step = 0.97
    while g("E+")(lo) <= 0:
        lo *= step
        if lo < EPS_FLOOR:
            raise WindowBelowFloor(f"alpha_{n} lies below the working floor {EPS_FLOOR}")
    alpha = _bisect_eps(g("E+"), lo, beta, rel_tol)
    rec = WindowRecord(n=n, alpha=alpha, beta=beta)

    def sub(w_a, w_b):
        try:
            e1 = _bisect_eps(g(w_a), alpha, beta, sub_rel_tol)
            e2 = _bisect_eps(g(w_b), alpha, beta, sub_rel_tol)
        except (SlopeOneNotFound, BracketInvalid) as exc:
            rec.notes.append(f"{w_a}/{w_b}: {exc}")
            return None
        return (min(e1, e2), max(e1, e2))

    rec.c_minus = sub("B-", "A-")
    rec.c_plus = sub("A+", "B+")
    for interval in (rec.c_minus, rec.c_plus):
        if interval is None:
            continue
        for e in np.linspace(interval[0], interval[1], n_census + 2)[1:-1]:
            rec.census.append(census(sys, float(e), ctx=ctx))
    return rec


def between_windows(sys: SlowFastSystem, windows: list[WindowRecord],
                    geom: SectionGeometry | None = None, cfg: IntegratorConfig | None = None,
                    tol: Tolerances | None = None) -> list[CensusRecord]:
    """Census at the midpoint of each gap ``(beta_{n+1}, alpha_n)`` between located windows."""
    ctx = _Ctx(sys, geom, cfg, tol)
    by_n = {w.n: w for w in windows}
    out = []
    for n in sorted(by_n):
        nxt = by_n.get(n + 1)
        if nxt is None or nxt.beta >= by_n[n].alpha:
            continue
        out.append(census(sys, 0.5 * (nxt.beta + by_n[n].alpha), ctx=ctx))
    return out


@dataclass
class ScalingReport:
    table: list[dict]
    decay_rate: float | None
    decay_intercept: float | None
    decay_r2: float | None
    alpha_n_products: list[float]
    alpha_n_median: float | None
    alpha_n_spread: float | None
    sufficient: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def csv(self) -> str:
        lines = ["n,alpha,beta,width"]
        for row in self.table:
            lines.append(f"{row['n']},{row['alpha']!r},{row['beta']!r},{row['width']!r}")
        return "\n".join(lines) + "\n"


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line; returns ``(slope, intercept, R^2)``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), r2


def scaling_report(windows: list[WindowRecord]) -> ScalingReport:
    """Fit ``ln|R_n| = -C n + const`` and the spread of ``alpha_n n``.

    ``decay_rate`` is ``C`` (positive when widths shrink with n).  The spread
    is the largest ``|alpha_n n / median - 1|``.
    """
    ws = sorted(windows, key=lambda w: w.n)
    table = [{"n": w.n, "alpha": w.alpha, "beta": w.beta, "width": w.width} for w in ws]
    prods = [w.alpha * w.n for w in ws]
    if len(ws) < 3:
        return ScalingReport(table, None, None, None, prods, None, None, False)
    slope, icpt, r2 = linear_fit([w.n for w in ws], [math.log(w.width) for w in ws])
    med = float(np.median(prods))
    spread = max(abs(p / med - 1.0) for p in prods)
    return ScalingReport(table, -slope, icpt, r2, prods, med, spread, True)
