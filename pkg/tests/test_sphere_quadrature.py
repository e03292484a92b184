import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weylglue import series_correction as sc
from weylglue import sphere_quadrature as sq
from weylglue import tensor_core as tc
from weylglue.errors import CapabilityError, DomainError

seeds = st.integers(min_value=0, max_value=2**32 - 1)
powers4 = st.tuples(*[st.integers(0, 4)] * 4)


def gamma_formula(powers):
    # 2 prod Gamma((a+1)/2) / Gamma(sum (a+1)/2), in floating point via lgamma
    if any(p % 2 for p in powers):
        return 0.0
    halves = [(p + 1) / 2.0 for p in powers]
    return 2.0 * math.exp(sum(math.lgamma(h) for h in halves) - math.lgamma(sum(halves)))


def test_reference_moments():
    assert sq.monomial_integral_s3_exact((0, 0, 0, 0)) == 2
    assert sq.monomial_integral_s3_exact((2, 0, 0, 0)) == Fraction(1, 2)
    assert sq.monomial_integral_s3_exact((2, 2, 0, 0)) == Fraction(1, 12)
    assert sq.monomial_integral_s3_exact((4, 0, 0, 0)) == Fraction(1, 4)


@settings(max_examples=60, deadline=None)
@given(powers4)
def test_exact_moments_match_gamma_formula(powers):
    assert sq.monomial_integral_s3(powers) == pytest.approx(gamma_formula(powers), rel=1e-13, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(powers4)
def test_product_rule_is_exact_up_to_its_degree(powers):
    if sum(powers) > 16:
        return
    poly = sq.SpherePolynomial({powers: 1.0})
    product = sq.integrate_s3(poly, 16).value
    assert product == pytest.approx(poly.integral_exact(), abs=1e-13)


def test_from_tensor_collects_symmetric_terms():
    t = np.zeros((4, 4))
    t[0, 1] = t[1, 0] = 0.5
    assert sq.SpherePolynomial.from_tensor(t).terms == {(1, 1, 0, 0): 1.0}


def test_exact_path_requires_polynomial():
    with pytest.raises(CapabilityError):
        sq.integrate_s3(lambda x: x[:, 0] ** 2, "exact")


def test_monte_carlo_is_reproducible_and_thread_independent():
    f = lambda x: x[:, 0] ** 2 * x[:, 1] ** 2
    rule = sq.MonteCarlo(100_000, seed=9)
    one = sq.integrate_s3(f, rule, threads=1)
    four = sq.integrate_s3(f, rule, threads=4)
    assert one == four
    assert abs(one.value - math.pi**2 / 12.0) < 5.0 * one.error


def test_monte_carlo_needs_two_samples():
    with pytest.raises(DomainError):
        sq.MonteCarlo(1)


# -- boundary integrals ------------------------------------------------------------------


@pytest.fixture(scope="module")
def weyl_and_jet():
    w = tc.WeylData.random(np.random.default_rng(21))
    return w, sc.correction_jet_cylinder(w, sc.CylinderParams(2.0))


def test_leading_coefficients_match_sphere_term(weyl_and_jet):
    w, jet = weyl_and_jet
    div = sq.divergence_boundary_integral(jet, w, 0.05)
    nondiv = sq.nondivergence_boundary_integral(jet, w, 0.05)
    assert 2.0 * (nondiv.leading_coeff - div.leading_coeff) == pytest.approx(
        math.pi**2 / 2.0 * w.norm_sq, rel=1e-12)


def test_zero_jet_has_zero_order_one_part(weyl_and_jet):
    w, _ = weyl_and_jet
    zero = sc.CorrectionJet.zero()
    for integral in (sq.divergence_boundary_integral, sq.nondivergence_boundary_integral):
        assert integral(zero, w, 0.05).order_one == pytest.approx(0.0, abs=1e-12 * w.norm_sq)


@pytest.mark.parametrize("kind", ["divergence", "nondivergence"])
def test_gamma_sweep_recovers_order_one_coefficient(weyl_and_jet, kind):
    w, jet = weyl_and_jet
    fit = sq.gamma_sweep(jet, w, kind=kind)
    assert fit.r_squared > 0.99
    assert fit.expected == pytest.approx(sq.expected_order_one(w, jet))
    assert fit.intercept == pytest.approx(fit.expected, rel=1e-2)


@pytest.mark.parametrize("gamma", [0.0, -0.1, 0.3, math.nan])
def test_bad_radius_rejected(weyl_and_jet, gamma):
    w, jet = weyl_and_jet
    with pytest.raises(DomainError):
        sq.divergence_boundary_integral(jet, w, gamma)


def test_small_radius_amplifying_truncation_rejected():
    w = tc.WeylData.random(np.random.default_rng(2))
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(1.05))
    with pytest.raises(DomainError):
        sq.divergence_boundary_integral(jet, w, 1e-4)


@settings(max_examples=5, deadline=None)
@given(seeds)
def test_coefficient_gap_agrees_on_both_paths(seed):
    w = tc.WeylData.random(np.random.default_rng(seed))
    gap = sq.c2_minus_c1(w)
    closed = math.pi**2 / 4.0 * w.norm_sq
    assert gap.boundary == pytest.approx(closed, rel=1e-9)
    assert gap.scaling == pytest.approx(closed, rel=1e-9)
