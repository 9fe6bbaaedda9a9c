"""Transit maps between horizontal sections ``y = const``.

Because ``g > 0`` the slow coordinate is a valid clock, so the flow is
integrated as

    dx/dy = f / (eps g),      dL/dy = (1/eps) d/dx (f/g),

on the universal cover of ``x``.  ``L`` is the logarithm of the derivative
of the transit map with respect to the initial point; carrying it in log
space keeps multipliers of size ``exp(+-C/eps)`` representable.

The stepper is the Dormand-Prince 5(4) pair with its 4th order dense
output and error control on ``(x, L)`` jointly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NonFiniteState, StepLimitExceeded
from .system import SlowFastSystem

__all__ = ["IntegratorConfig", "TransitResult", "transit", "transit_reduced", "trajectory",
           "EPS_FLOOR"]

EPS_FLOOR = 0.02
PI = math.pi
TWO_PI = 2.0 * math.pi

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_steps: int = 10_000_000
    initial_step: float = 1e-3

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps <= 0 or self.initial_step <= 0:
            raise ValueError("max_steps and initial_step must be positive")

    def scaled(self, factor: float) -> "IntegratorConfig":
        return IntegratorConfig(self.rel_tol * factor, self.abs_tol * factor,
                                self.max_steps, self.initial_step)


@dataclass(frozen=True)
class TransitResult:
    """End state of a transit.

    ``x_lifted = x_reduced + 2 pi turns`` continues ``x0`` on the real line;
    ``winding = x_lifted - x0``.  Keep the ``(x_reduced, turns)`` pair when
    full precision matters, since ``x_lifted`` loses bits as it grows.
    """

    x_lifted: float
    winding: float
    log_jacobian: float
    steps: int
    est_error: float
    x_reduced: float = 0.0
    turns: int = 0


def _dopri(rhs, params, eps, y0, y1, x0, rtol, atol, max_steps, h0, y_out, x_out, l_out):
    """Integrate from ``y0`` to ``y1``; returns ``(x, turns, L, steps, status, err)``.

    ``x`` is kept in ``[-pi, pi)`` and whole turns are counted in ``turns``,
    so the lifted position is ``x + 2 pi turns`` and its precision does not
    degrade with the number of turns.  ``x0`` must already lie in that range.
    status: 0 success, 1 step limit, 2 non-finite state.  ``err`` is the
    largest accepted local error of ``x`` measured against ``1 + |x|``.
    Dense output (lifted) is written at the sorted abscissae ``y_out``.
    """
    x = x0
    turns = 0
    L = 0.0
    comp_x = 0.0  # compensated-summation carries for x and L
    comp_l = 0.0
    y = y0
    span = y1 - y0
    n_out = y_out.shape[0]
    j = 0
    while j < n_out and y_out[j] == y0:
        x_out[j] = x
        l_out[j] = L
        j += 1
    if span == 0.0:
        return x, turns, L, 0, 0, 0.0
    direction = 1.0 if span > 0 else -1.0
    inv = 1.0 / eps
    h = min(h0, abs(span)) * direction
    F, Fx = rhs(x, y, eps, params)
    k1x, k1l = F * inv, Fx * inv
    steps = 0
    worst = 0.0
    rejected = False
    while True:
        if steps >= max_steps:
            return x, turns, L, steps, 1, worst
        last = False
        # finish when the remainder is below the resolution of the clock
        if direction * (y + h - y1) >= -1e-14 * max(1.0, abs(y1)):
            h = y1 - y
            last = True
        # make h exactly representable as a difference of clock values
        yn = y1 if last else y + h
        h = yn - y
        F, Fx = rhs(x + h * A21 * k1x, y + C2 * h, eps, params)
        k2x, k2l = F * inv, Fx * inv
        F, Fx = rhs(x + h * (A31 * k1x + A32 * k2x), y + C3 * h, eps, params)
        k3x, k3l = F * inv, Fx * inv
        F, Fx = rhs(x + h * (A41 * k1x + A42 * k2x + A43 * k3x), y + C4 * h, eps, params)
        k4x, k4l = F * inv, Fx * inv
        F, Fx = rhs(x + h * (A51 * k1x + A52 * k2x + A53 * k3x + A54 * k4x), y + C5 * h, eps, params)
        k5x, k5l = F * inv, Fx * inv
        F, Fx = rhs(x + h * (A61 * k1x + A62 * k2x + A63 * k3x + A64 * k4x + A65 * k5x),
                    y + h, eps, params)
        k6x, k6l = F * inv, Fx * inv
        ix = h * (B1 * k1x + B3 * k3x + B4 * k4x + B5 * k5x + B6 * k6x) - comp_x
        il = h * (B1 * k1l + B3 * k3l + B4 * k4l + B5 * k5l + B6 * k6l) - comp_l
        xn = x + ix
        ln = L + il
        F, Fx = rhs(xn, yn, eps, params)
        k7x, k7l = F * inv, Fx * inv
        if not (math.isfinite(xn) and math.isfinite(ln)):
            return x, turns, L, steps, 2, worst
        ex = h * (E1 * k1x + E3 * k3x + E4 * k4x + E5 * k5x + E6 * k6x + E7 * k7x)
        el = h * (E1 * k1l + E3 * k3l + E4 * k4l + E5 * k5l + E6 * k6l + E7 * k7l)
        sx = atol + rtol * max(abs(x), abs(xn))
        sl = atol + rtol * max(abs(L), abs(ln))
        err = max(abs(ex) / sx, abs(el) / sl)
        steps += 1
        if err <= 1.0:
            if j < n_out:
                dx = xn - x
                dl = ln - L
                bx = h * k1x - dx
                bl = h * k1l - dl
                cx = dx - h * k7x - bx
                cl = dl - h * k7l - bl
                qx = h * (D1 * k1x + D3 * k3x + D4 * k4x + D5 * k5x + D6 * k6x + D7 * k7x)
                ql = h * (D1 * k1l + D3 * k3l + D4 * k4l + D5 * k5l + D6 * k6l + D7 * k7l)
                base = turns * TWO_PI
                while j < n_out and direction * (y_out[j] - yn) <= 0.0:
                    th = (y_out[j] - y) / h
                    t1 = 1.0 - th
                    x_out[j] = base + x + th * (dx + t1 * (bx + th * (cx + t1 * qx)))
                    l_out[j] = L + th * (dl + t1 * (bl + th * (cl + t1 * ql)))
                    j += 1
            w = abs(ex) / (1.0 + max(abs(x), abs(xn)))
            if w > worst:
                worst = w
            comp_x = (xn - x) - ix
            comp_l = (ln - L) - il
            x, L, y = xn, ln, yn
            while x >= PI:
                x -= TWO_PI
                turns += 1
            while x < -PI:
                x += TWO_PI
                turns -= 1
            k1x, k1l = k7x, k7l
            if last:
                return x, turns, L, steps, 0, worst
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if rejected:
                fac = min(fac, 1.0)
            rejected = False
            h = h * fac
        else:
            rejected = True
            h = h * max(0.2, 0.9 * err ** -0.2)
            if abs(h) < 1e-14 * max(1.0, abs(y)):
                return x, turns, L, steps, 1, worst


_dopri_jit = njit(cache=True)(_dopri)
_EMPTY = np.empty(0)


def _reduce(x0: float) -> tuple[float, int]:
    k = math.floor((x0 + PI) / TWO_PI)
    r = x0 - k * TWO_PI
    # guard the half-open range against rounding
    if r >= PI:
        r -= TWO_PI
        k += 1
    elif r < -PI:
        r += TWO_PI
        k -= 1
    return r, k


def _run(sys: SlowFastSystem, eps, y_from, y_to, x0, cfg, y_out, x_out, l_out, turns0=None):
    """Returns ``(x_reduced, turns, L, steps, err)``.

    ``x0`` is reduced to ``[-pi, pi)`` first unless ``turns0`` is given, in
    which case ``x0`` must already be reduced and ``turns0`` is its turn count.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if turns0 is None:
        x0, turns0 = _reduce(float(x0))
    kern = sys.kernel()
    if kern is not None:
        rhs, params = kern
        out = _dopri_jit(rhs, params, float(eps), float(y_from), float(y_to), float(x0),
                         cfg.rel_tol, cfg.abs_tol, cfg.max_steps, cfg.initial_step,
                         y_out, x_out, l_out)
    else:
        rhs = lambda x, y, e, p: sys.rhs(x, y, e)  # noqa: E731
        out = _dopri(rhs, None, float(eps), float(y_from), float(y_to), float(x0),
                     cfg.rel_tol, cfg.abs_tol, cfg.max_steps, cfg.initial_step,
                     y_out, x_out, l_out)
    x, turns, L, steps, status, worst = out
    if status == 1:
        raise StepLimitExceeded(
            f"step budget exhausted at eps={eps} after {steps} steps ({y_from} -> {y_to})")
    if status == 2:
        raise NonFiniteState(f"non-finite state at eps={eps} ({y_from} -> {y_to}, x0={x0})")
    if y_out.shape[0]:
        x_out += turns0 * TWO_PI
    return x, turns + turns0, L, steps, worst


def transit(sys: SlowFastSystem, eps: float, y_from: float, y_to: float, x0: float,
            cfg: IntegratorConfig | None = None) -> TransitResult:
    """Flow ``x0`` on section ``y_from`` to section ``y_to`` (either direction)."""
    cfg = cfg or IntegratorConfig()
    x, turns, L, steps, worst = _run(sys, eps, y_from, y_to, x0, cfg, _EMPTY, _EMPTY, _EMPTY)
    xl = x + turns * TWO_PI
    return TransitResult(xl, xl - x0, L, steps, worst, x, turns)


def transit_reduced(sys: SlowFastSystem, eps: float, y_from: float, y_to: float,
                    x_red: float, turns: int = 0,
                    cfg: IntegratorConfig | None = None) -> TransitResult:
    """Like :func:`transit` for a start given as ``x_red + 2 pi turns``, ``x_red`` in ``[-pi, pi)``."""
    if not -PI <= x_red < PI:
        raise ValueError("x_red must lie in [-pi, pi)")
    cfg = cfg or IntegratorConfig()
    x, t, L, steps, worst = _run(sys, eps, y_from, y_to, x_red, cfg, _EMPTY, _EMPTY, _EMPTY,
                                 turns0=int(turns))
    xl = x + t * TWO_PI
    return TransitResult(xl, xl - (x_red + turns * TWO_PI), L, steps, worst, x, t)


def trajectory(sys: SlowFastSystem, eps: float, y_from: float, y_to: float, x0: float,
               n_samples: int, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Dense samples ``(y, x_lifted, log_jacobian)`` at ``n_samples`` uniform y values.

    Returns an ``(n_samples, 3)`` array; the first row is the initial point
    and the last row agrees with ``transit`` at ``y_to``.
    """
    cfg = cfg or IntegratorConfig()
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    ys = np.linspace(y_from, y_to, n_samples)
    xs = np.empty(n_samples)
    ls = np.empty(n_samples)
    x, turns, L, _, _ = _run(sys, eps, y_from, y_to, x0, cfg, ys, xs, ls)
    xs[-1], ls[-1] = x + turns * TWO_PI, L
    return np.column_stack([ys, xs, ls])
