from __future__ import annotations

import math

import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from lightgame.costs import (
    Affine, Blocking, Constant, CostError, EdgeCost, LightCycle, Polynomial, SimpleExponential, SumoFitted, Zero,
    eval_cost, eval_fitted_journey, integral_cost, marginal_cost,
)


def test_affine_zero_waiting():
    assert eval_cost(EdgeCost(Affine(0.4, 44), Zero()), 10) == pytest.approx(48.0)


def test_simple_exp_at_zero_red():
    assert eval_cost(EdgeCost(Affine(1, 0), SimpleExponential(), 0.0), 0.5) == 0.5


def test_blocking_is_infinite():
    ec = EdgeCost(Affine(1, 0), Blocking(), 1.0)
    assert ec.blocked
    assert eval_cost(ec, 0.0) == math.inf
    assert eval_cost(ec, 3.0) == math.inf


def test_negative_load_rejected():
    with pytest.raises(CostError):
        eval_cost(EdgeCost(), -0.1)


def test_sumo_family_refuses_high_red():
    with pytest.raises(CostError):
        EdgeCost(Affine(1, 0), SumoFitted(), 0.9)


def test_fitted_journey_values():
    assert eval_fitted_journey(0, 0) == pytest.approx(48.0)
    # hand evaluation of each term
    slope = 0.12 * math.exp(6.12 * 0.5) + 0.16
    want = 44 + 40 + slope * 100 - 10.51 * math.exp(1.525) + 14.51
    assert eval_fitted_journey(100, 0.5) == pytest.approx(want, rel=1e-12)
    with pytest.raises(CostError):
        eval_fitted_journey(10, 0.9)


def test_fitted_family_is_not_zero_at_green():
    # the fitted surface breaks w(x, 0) = 0: it leaves 0.28x + 4
    fam = SumoFitted()
    for x in (0.0, 1.0, 7.5):
        assert fam.value(x, 0.0) == pytest.approx(0.28 * x + 4.0)


def test_clamp_at_zero():
    # the fitted intercept is negative for larger p; total cost never is
    ec = EdgeCost(Affine(0, 0), SumoFitted(), 0.8)
    assert SumoFitted().intercept(0.8) < 0
    assert eval_cost(ec, 0.0) == 0.0


def test_integral_examples():
    assert integral_cost(EdgeCost(Affine(1, 0), Zero()), 1.0) == pytest.approx(0.5)
    assert integral_cost(EdgeCost(Affine(0, 1), Zero()), 2.5) == pytest.approx(2.5)
    ec = EdgeCost(Affine(1, 0), SimpleExponential(), math.log(2))
    assert integral_cost(ec, 1.0) == pytest.approx(1.0)
    quad, _ = integrate.quad(lambda z: eval_cost(ec, z), 0, 1)
    assert integral_cost(ec, 1.0) == pytest.approx(quad, rel=1e-10)


def test_integral_of_clamped_cost_matches_quadrature():
    ec = EdgeCost(Affine(0, 0), SumoFitted(), 0.7)
    a, b = ec.affine_coeffs()
    kink = -b / a  # cost is zero below this load
    for f in (0.5, 3.0, 40.0):
        pts = [kink] if kink < f else None
        quad, _ = integrate.quad(lambda z: eval_cost(ec, z), 0, f, limit=200, points=pts)
        assert integral_cost(ec, f) == pytest.approx(quad, rel=1e-8, abs=1e-9)


def test_marginal_examples():
    assert marginal_cost(EdgeCost(Affine(1, 0), Zero()), 0.5) == pytest.approx(1.0)
    assert marginal_cost(EdgeCost(Affine(0, 1), Zero()), 7.0) == pytest.approx(1.0)
    p, x = 0.3, 0.8
    ec = EdgeCost(Affine(1, 0), SimpleExponential(), p)
    h = 1e-6
    fd = ((x + h) * eval_cost(ec, x + h) - (x - h) * eval_cost(ec, x - h)) / (2 * h)
    assert marginal_cost(ec, x) == pytest.approx(2 * x * math.exp(p), rel=1e-12)
    assert marginal_cost(ec, x) == pytest.approx(fd, rel=1e-7)


def test_polynomial_base():
    ec = EdgeCost(Polynomial((1.0, 0.0, 2.0)), Zero())
    assert eval_cost(ec, 2.0) == pytest.approx(9.0)
    assert integral_cost(ec, 3.0) == pytest.approx(3 + 2 * 27 / 3)
    assert marginal_cost(ec, 1.0) == pytest.approx(1 + 3 * 2)


def test_light_cycle():
    c = LightCycle.from_p(0.25, 80)
    assert (c.t_r, c.t_g, c.T) == (20, 60, 80)
    assert c.p == 0.25
    # 17 s red + 3 s amber, 17 s green + 3 s amber
    c = LightCycle.from_phases(17, 17)
    assert (c.t_r, c.t_g) == (20, 20)
    assert c.p == 0.5
    with pytest.raises(CostError):
        LightCycle(0, 0)
    with pytest.raises(CostError):
        LightCycle.from_p(0.9, 60).check_bounds()


families = st.sampled_from(["zero", "simple_exp", "sumo_fitted"])


def _edge(fam: str, a: float, b: float, p: float) -> EdgeCost:
    w = {"zero": Zero(), "simple_exp": SimpleExponential(), "sumo_fitted": SumoFitted()}[fam]
    return EdgeCost(Affine(a, b), w, p if fam != "zero" else 0.0)


@settings(max_examples=200, deadline=None)
@given(fam=families, a=st.floats(0, 5), b=st.floats(0, 5), p=st.floats(0, 0.84),
       xs=st.lists(st.floats(0, 50), min_size=2, max_size=20))
def test_cost_is_nondecreasing(fam, a, b, p, xs):
    ec = _edge(fam, a, b, p)
    vals = [eval_cost(ec, x) for x in sorted(xs)]
    assert all(v2 >= v1 - 1e-12 for v1, v2 in zip(vals, vals[1:]))


@settings(max_examples=200, deadline=None)
@given(fam=families, a=st.floats(0, 5), b=st.floats(0, 5), p=st.floats(0, 0.84), x=st.floats(0, 50))
def test_marginal_dominates_cost(fam, a, b, p, x):
    ec = _edge(fam, a, b, p)
    assert marginal_cost(ec, x) >= eval_cost(ec, x) - 1e-9


@settings(max_examples=100, deadline=None)
@given(p=st.floats(0, 1), x1=st.floats(0.01, 100), x2=st.floats(0.01, 100))
def test_simple_exp_separable(p, x1, x2):
    w = SimpleExponential()
    assert w.value(x1, p) / x1 == pytest.approx(w.value(x2, p) / x2, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(0, 100))
def test_axiomatic_families_vanish_at_green(x):
    assert Zero().value(x, 0.0) == 0.0
    assert SimpleExponential().value(x, 0.0) == 0.0


def test_constant_and_dict_roundtrip():
    from lightgame.costs import base_from_dict

    for base in (Affine(2, 3), Constant(4), Polynomial((1, 2, 3))):
        assert base_from_dict(base.to_dict()) == base
