import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import closed_form_field
from torus_canards.errors import BranchLost, GeometryError, NoFolds
from torus_canards.system import (
    CosineOval,
    FlippedSystem,
    SlowFastSystem,
    TorusPoint,
    compute_slow_curve,
    eval_field,
    find_folds,
    make_geometry,
    validate_genericity,
    wrap,
)

finite = st.floats(-50, 50, allow_nan=False)


@given(finite)
def test_wrap_range_and_congruence(v):
    w = wrap(v)
    assert -math.pi <= w < math.pi
    k = (v - w) / (2 * math.pi)
    assert abs(k - round(k)) < 1e-9


@given(finite, finite, st.floats(0, 0.5))
def test_cosine_oval_matches_closed_form(x, y, eps):
    sys = CosineOval(k=1.3, g_amp=0.2, f1_amp=0.4)
    f, g = closed_form_field(x, y, eps, k=1.3, g_amp=0.2, f1_amp=0.4)
    assert sys.f(x, y, eps) == pytest.approx(f, abs=1e-12)
    assert sys.g(x, y, eps) == pytest.approx(g, abs=1e-12)
    F, Fx = sys.rhs(x, y, eps)
    assert F == pytest.approx(f / g, abs=1e-12)
    h = 1e-6
    fd = (closed_form_field(x + h, y, eps, 1.3, 0.2, 0.4)[0] / closed_form_field(x + h, y, eps, 1.3, 0.2, 0.4)[1]
          - closed_form_field(x - h, y, eps, 1.3, 0.2, 0.4)[0] / closed_form_field(x - h, y, eps, 1.3, 0.2, 0.4)[1]) / (2 * h)
    assert Fx == pytest.approx(fd, abs=1e-6)


@given(finite, finite)
def test_partials_by_finite_differences(x, y):
    sys = CosineOval(k=1.5, g_amp=0.3, f1_amp=0.5)
    eps, h = 0.2, 1e-6
    assert sys.f_x(x, y, eps) == pytest.approx(
        (sys.f(x + h, y, eps) - sys.f(x - h, y, eps)) / (2 * h), abs=1e-7)
    assert sys.f_y(x, y, eps) == pytest.approx(
        (sys.f(x, y + h, eps) - sys.f(x, y - h, eps)) / (2 * h), abs=1e-7)
    assert sys.f_xx(x, y, eps) == pytest.approx(
        (sys.f_x(x + h, y, eps) - sys.f_x(x - h, y, eps)) / (2 * h), abs=1e-7)
    assert sys.g_x(x, y, eps) == pytest.approx(
        (sys.g(x + h, y, eps) - sys.g(x - h, y, eps)) / (2 * h), abs=1e-7)


@given(finite, finite)
def test_flipped_is_the_mirror_image(x, y):
    base = CosineOval(k=1.4, g_amp=0.1, f1_amp=0.2)
    for flip in (base.flipped(), FlippedSystem(base)):
        assert flip.f(x, y, 0.1) == pytest.approx(-base.f(-x, y, 0.1), abs=1e-12)
        assert flip.g(x, y, 0.1) == pytest.approx(base.g(-x, y, 0.1), abs=1e-12)
        assert flip.f_x(x, y, 0.1) == pytest.approx(base.f_x(-x, y, 0.1), abs=1e-12)
        F, Fx = flip.rhs(x, y, 0.1)
        Fb, Fxb = base.rhs(-x, y, 0.1)
        assert F == pytest.approx(-Fb, abs=1e-12)
        assert Fx == pytest.approx(Fxb, abs=1e-12)
    assert base.flipped().flipped().orientation == 1
    assert FlippedSystem(base).flipped() is base


def test_eval_field_rejects_negative_eps(raw_sys):
    with pytest.raises(ValueError):
        eval_field(raw_sys, TorusPoint(0.0, 0.0), -0.1)


def test_folds_closed_form(raw_sys):
    # cos x + cos y = k and sin x = 0 give x = 0, cos y = k - 1
    folds = find_folds(raw_sys)
    y0 = math.acos(0.5)
    assert folds.sigma_plus == pytest.approx(0.0, abs=1e-10)
    assert folds.sigma_minus == pytest.approx(0.0, abs=1e-10)
    assert folds.tau_plus == pytest.approx(-y0, abs=1e-10)
    assert folds.tau_minus == pytest.approx(y0, abs=1e-10)


@pytest.mark.parametrize("k", [1.2, 1.5, 1.8])
def test_folds_other_k(k):
    folds = find_folds(CosineOval(k=k))
    assert folds.tau_minus == pytest.approx(math.acos(k - 1), abs=1e-10)


def test_empty_slow_curve_raises():
    with pytest.raises(NoFolds):
        find_folds(CosineOval(k=2.5))


def test_validation_default_is_flipped(raw_sys):
    rep = validate_genericity(raw_sys)
    assert rep.ok
    assert rep.orientation == "flipped"
    norm = rep.normalized
    # after normalisation the fold sign pattern is the direct one
    f = find_folds(norm)
    assert norm.f_y(f.sigma_plus, f.tau_plus, 0) < 0 < norm.f_y(f.sigma_minus, f.tau_minus, 0)
    assert norm.f_xx(f.sigma_plus, f.tau_plus, 0) > 0
    assert validate_genericity(norm).orientation == "direct"


def test_validation_reports_failures():
    rep = validate_genericity(CosineOval(k=2.5))
    assert not rep.ok
    assert rep.normalized is None
    assert "empty" in rep.details["slow_curve_error"]
    rep = validate_genericity(CosineOval(g_amp=1.5))
    assert not rep.conditions["1_slow_speed_positive"]


def test_validation_to_dict_is_plain(raw_sys):
    d = validate_genericity(raw_sys).to_dict()
    assert d["ok"] is True
    assert set(d["conditions"]) == {"1_slow_speed_positive", "2_smooth_curve",
                                    "3_convex_in_square", "4_nondegenerate_branches",
                                    "5_nondegenerate_folds"}


def test_slow_curve_branches(sys_):
    curve = compute_slow_curve(sys_, 65)
    for y, xs, xu in zip(curve.ys, curve.stable, curve.unstable):
        assert abs(sys_.f(xs, y, 0)) < 1e-12
        assert abs(sys_.f(xu, y, 0)) < 1e-12
        assert sys_.f_x(xs, y, 0) < 0 < sys_.f_x(xu, y, 0)
    # normalised system: k - cos x - cos y with f_x = sin x, so at y = 0 the
    # unstable branch is x = pi/3 and the stable one x = -pi/3
    assert curve.unstable_at(0.0) == pytest.approx(math.pi / 3, abs=1e-12)
    assert curve.stable_at(0.0) == pytest.approx(-math.pi / 3, abs=1e-12)


@given(st.floats(-1.0, 1.0))
def test_slow_curve_slope_matches_difference(y):
    sys_ = validate_genericity(CosineOval()).normalized
    curve = compute_slow_curve(sys_, 9)
    h = 1e-6
    for br, at in (("stable", curve.stable_at), ("unstable", curve.unstable_at)):
        fd = (at(y + h) - at(y - h)) / (2 * h)
        assert curve.slope(y, br) == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_branches_outside_strip(sys_):
    curve = compute_slow_curve(sys_, 9)
    with pytest.raises(BranchLost):
        curve.branches_at(2.0)


def test_geometry_defaults(sys_, geom):
    delta = 0.15 * 2 * math.pi / 3
    assert geom.delta_plus == pytest.approx(delta)
    assert geom.alpha_plus == pytest.approx(-math.pi / 3 + delta)
    assert geom.alpha_minus == pytest.approx(math.pi / 3 - delta)
    assert geom.J_plus == (pytest.approx(0.0, abs=1e-10), math.pi)
    assert geom.J_minus == (-math.pi, pytest.approx(0.0, abs=1e-10))


def test_geometry_rejects_bad_sections(sys_, raw_sys):
    with pytest.raises(GeometryError):
        make_geometry(sys_, delta_plus=-0.1)
    with pytest.raises(GeometryError):
        make_geometry(sys_, delta_plus=1.5, delta_minus=1.5)
    with pytest.raises(GeometryError):
        make_geometry(raw_sys)


def test_interpreted_system_without_kernel():
    class Plain(SlowFastSystem):
        def f(self, x, y, eps):
            return 1.5 - np.cos(x) - np.cos(y)

        def g(self, x, y, eps):
            return 1.0 + 0 * x

        def f_x(self, x, y, eps):
            return np.sin(x)

        def f_y(self, x, y, eps):
            return np.sin(y)

        def f_xx(self, x, y, eps):
            return np.cos(x)

        def g_x(self, x, y, eps):
            return 0 * x

    rep = validate_genericity(Plain())
    assert rep.ok and rep.orientation == "direct"
