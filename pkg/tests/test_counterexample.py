import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pinched.boundary import boundary_values
from pinched.counterexample import (
    POW2, SQUARE, CounterexampleSpec, build_g, build_intervals, check_ftilde, choose_n1,
    counterexample_system, default_ftilde, exact_returns, golden_rule, isolated_point_certificate,
    ladder_span, log_boundary_values, log_min_ax, rule_from_name, smooth_variant, verify_claim1,
    verify_claim2,
)
from pinched.errors import DepthInsufficient, LadderInconsistent, VariantPreconditionFailed
from pinched.systems import check_structure


@pytest.fixture(scope="module")
def spec():
    return CounterexampleSpec()


@pytest.fixture(scope="module")
def g(spec):
    return build_g(spec)


def test_default_spec_expansion(spec):
    cf = spec.cf
    assert cf.coeffs[:5] == (1, 4, 9, 16, 25)
    assert cf.denominators[:6] == (1, 1, 5, 46, 741, 18571)
    assert spec.n1 == 2
    assert spec.omega == pytest.approx(0.8043185611171579, abs=1e-15)


def test_rules():
    assert SQUARE.coeffs(4) == [1, 4, 9, 16]
    assert POW2.coeffs(3) == [2, 4, 8]
    assert golden_rule().coeffs(3) == [1, 1, 1]
    assert rule_from_name("golden") == golden_rule()
    assert rule_from_name("constant:3").coeffs(2) == [3, 3]
    assert SQUARE.tail_bound(10) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        rule_from_name("cubes")
    with pytest.raises(ValueError):
        SQUARE.coeff(0)


def test_golden_rule_has_no_n1():
    with pytest.raises(DepthInsufficient, match="diverges"):
        CounterexampleSpec(golden_rule()).n1


def test_pow2_rule_spec():
    assert CounterexampleSpec(POW2).n1 == 2


def test_n1_summability_condition(spec):
    cf, n1 = spec.cf, spec.n1
    q = cf.denominators
    tail = sum(Fraction(q[i], q[i + 1]) for i in range(n1, spec.depth_K))
    assert float(tail) + SQUARE.tail_bound(spec.depth_K) < 0.5
    assert exact_returns(cf)[n1] > 0
    assert choose_n1(cf, SQUARE, spec.depth_K) == n1


def test_ladder_tiles_I_exactly(spec, g):
    sig = exact_returns(spec.cf)
    lo, hi = ladder_span(g.rungs)
    assert (lo, hi) == (-sig[2], -sig[3])
    assert float(lo) == pytest.approx(-0.0215928, abs=1e-7)
    assert float(hi) == pytest.approx(0.00134619, abs=1e-8)
    for side in (-1, 1):
        rs = sorted((r for r in g.rungs if r.side == side), key=lambda r: r.n)
        assert all(a.inner == b.outer for a, b in zip(rs, rs[1:]))
    with pytest.raises(ValueError):
        build_intervals(spec.cf, spec.n1, spec.n1 + 1)
    with pytest.raises(LadderInconsistent):
        build_intervals(spec.cf, 3, 10)  # sigma_3 < 0 sits left of 0


def test_g_levels(spec, g):
    log3 = math.log(3)
    assert g(0.0) == 0.0
    assert g.log_g(0.3) == 0.0
    for r in g.rungs[:4]:
        mid = float(r.side * (r.inner + r.outer - r.inner) / 2)
        assert g.log_g(mid) == pytest.approx(-spec.cf.denominators[r.n] * log3, rel=1e-12)


@given(st.floats(1e-12, 0.03), st.floats(1e-12, 0.03), st.sampled_from([-1, 1]))
@settings(max_examples=200, deadline=None)
def test_g_radially_monotone_and_bounded(r1, r2, side):
    g = build_g(CounterexampleSpec())
    lo, hi = sorted((r1, r2))
    a, b = g.log_g(side * lo), g.log_g(side * hi)
    assert a <= b + 1e-12 * abs(a)
    assert b <= 0.0


def test_integral_log_g_exact_vs_quadrature(g):
    exact = g.integral_log()
    assert exact == pytest.approx(g.integral_log_quadrature(), abs=1e-8)
    assert abs(exact) <= 0.5 * math.log(3)


def test_counterexample_system_structure(spec):
    sys = counterexample_system(spec)
    assert sys.L == 1.0
    assert check_structure(sys).passed


def test_log_boundary_values_match_linear_space(spec, g):
    sys = counterexample_system(spec, g)
    th = np.linspace(0.05, 0.95, 9)
    lin = boundary_values(sys, 3, th)
    log_ = np.exp(log_boundary_values(g, spec.omega, log_min_ax(3.0), 3, th))
    np.testing.assert_allclose(log_, lin, rtol=1e-12, atol=1e-300)


def test_claim1(spec, g):
    rep = verify_claim1(spec, 100, g)
    assert rep.all_one and rep.diagnostic_ok and rep.passed
    assert rep.tau_minus1_outside


def test_claim2_and_certificate(spec, g):
    c1 = verify_claim1(spec, 200, g)
    c2 = verify_claim2(spec, 200, grid_n=2001, g=g)
    assert c2.passed
    assert c2.max_on_mirror <= 1 / 3 + 1e-10
    cert = isolated_point_certificate(c1, c2)
    assert cert["isolated"] and cert["gap"] >= 0.6


def test_ftilde_preconditions():
    check_ftilde(default_ftilde(3.0), 3.0)
    with pytest.raises(VariantPreconditionFailed) as err:
        check_ftilde(lambda x: 2.0 * np.asarray(x), 3.0)
    assert err.value.clause == "agree"
    with pytest.raises(VariantPreconditionFailed) as err:
        check_ftilde(lambda x: np.minimum(1.0, 3.0 * np.asarray(x)), 3.0)
    assert err.value.clause == "increasing"
    with pytest.raises(VariantPreconditionFailed) as err:
        check_ftilde(lambda x: np.where(np.asarray(x) <= 1 / 3, 3 * np.asarray(x), 3 * np.asarray(x) ** 2 + 2 / 3), 3.0)
    assert err.value.clause == "range"


def test_smooth_variant(spec, g):
    sys, rep = smooth_variant(spec, n_iter=200, grid_n=2001, g=g)
    assert sys.L == 2.0
    assert rep.passed
    assert rep.region_max <= 2 / 3 + 1e-10


def test_spec_validation():
    with pytest.raises(ValueError):
        CounterexampleSpec(base_a=2.0)
    with pytest.raises(ValueError):
        CounterexampleSpec(depth_K=2)
