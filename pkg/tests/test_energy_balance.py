import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from weylglue import chart_geometry as cg
from weylglue import energy_balance as eb
from weylglue import series_correction as sc
from weylglue import tensor_core as tc
from weylglue.errors import (
    ConfigurationError,
    DomainError,
    InputMismatchError,
    NoDecayWarning,
    SymmetryViolationError,
)
from weylglue.fields import smoothstep

seeds = st.integers(min_value=0, max_value=2**32 - 1)
GENERIC = ([2.0, -0.5, -1.5], [1.0, 0.3, -1.3])


@pytest.fixture(scope="module")
def generic_setup():
    w = tc.WeylData.from_eigenvalues(*GENERIC)
    verdict = eb.interaction_sign(w, t=1.05)
    aligned = w.rotated(verdict.frame)
    return aligned, sc.correction_jet_cylinder(aligned, sc.CylinderParams(1.05))


# -- configuration -------------------------------------------------------------------------


def test_default_config_is_valid():
    cfg = eb.GluingConfig()
    assert cfg.b == cfg.a


@pytest.mark.parametrize("kwargs", [
    {"a": 6e-3, "gamma": 5e-2},
    {"gamma": 0.1},
    {"a": -1.0},
    {"delta_chart": 0.2},
    {"chi_start": 0.8, "chi_end": 0.5},
])
def test_config_constraints(kwargs):
    with pytest.raises(ConfigurationError):
        eb.GluingConfig(**kwargs)


# -- M-side correction ---------------------------------------------------------------


def test_h_correction_of_zero_jet_is_zero():
    field_ = eb.h_correction(sc.CorrectionJet.zero(), 0.5)
    pts = np.random.default_rng(0).normal(size=(5, 4)) * 0.4
    assert not np.any(field_.value(pts))


def test_h_correction_rejects_gauge_part():
    a = tc.random_pairwise(np.random.default_rng(1))
    jet = sc.CorrectionJet.from_derivatives(2.0 * np.einsum("kijl->ijkl", a))
    with pytest.raises(SymmetryViolationError):
        eb.h_correction(jet, 0.5)


def test_h_correction_is_c2_across_cutoff_edges(generic_setup):
    _, jet = generic_setup
    field_ = eb.h_correction(jet, 0.5)
    direction = np.array([0.3, -0.5, 0.6, 0.55])
    direction /= np.linalg.norm(direction)
    def second_difference_jump(edge, h):
        radii = edge + h * np.arange(-3, 4)
        vals = field_.value(radii[:, None] * direction)
        second = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / h**2
        return np.max(np.abs(np.diff(second, axis=0)))

    # a jump in the second derivative would not shrink with the step
    for edge in (0.5, 1.0):
        coarse, fine = second_difference_jump(edge, 2e-4), second_difference_jump(edge, 1e-4)
        assert fine < 0.7 * coarse


def test_h_correction_matches_quadratic_inside_cutoff(generic_setup):
    _, jet = generic_setup
    z = np.array([[0.1, 0.2, -0.1, 0.05]])
    expected = np.einsum("kijl,nk,nl->nij", jet.hessian, z, z) / np.sum(z * z) ** 2
    assert np.allclose(eb.h_correction(jet, 0.5).value(z), expected)


def test_exact_sphere_coefficients():
    assert eb.sphere_cancellation_coefficient() == 0
    assert eb.interaction_boundary_coefficient() == pytest.approx(1.0 / 3.0)


def test_model_chart_has_requested_weyl_tensor():
    w = tc.WeylData.random(np.random.default_rng(4), scale=0.1)
    curv = cg.curvature_on_points(eb.model_chart(w), np.zeros((1, 4)))
    assert np.max(np.abs(curv["weyl"][0] - w.tensor)) < 1e-13


def test_v_prime_rejects_inconsistent_model():
    rng = np.random.default_rng(5)
    w = tc.WeylData.random(rng, scale=0.05)
    other = eb.model_chart(tc.WeylData.random(rng, scale=0.05))
    with pytest.raises(InputMismatchError):
        eb.v_prime_zero(w, sc.CorrectionJet.zero(), 0.05, m_model=other)


# -- glued metric -------------------------------------------------------------------


def test_glued_pieces_coincide_on_overlaps(generic_setup):
    w, jet = generic_setup
    cfg = eb.GluingConfig(a=1e-4, gamma=5e-3)
    glued = eb.build_glued_metric(w, jet, cfg)
    direction = np.array([[0.5, 0.5, 0.5, 0.5]])
    overlaps = [
        ("g_a", "g_tilde_a", np.geomspace(cfg.a / cfg.eps_chart, cfg.gamma, 5)),
        ("g_tilde_a", "g_hat_b", np.linspace(cfg.gamma / 2.0, cfg.gamma * (1 + cfg.chi_start), 5)),
        ("g_hat_b", "g_b", np.linspace(cfg.gamma * (1 + cfg.chi_end), cfg.delta_chart, 5)),
    ]
    for left, right, radii in overlaps:
        pts = radii[:, None] * direction
        diff = glued.pieces[left].value(pts) - glued.pieces[right].value(pts)
        assert np.max(np.abs(diff)) < 1e-15, (left, right)
    assert [glued.piece_at(r) for r in (1e-4, 1e-3, 0.1, 0.3)] == ["g_a", "g_tilde_a", "g_hat_b", "g_b"]


def test_glued_metric_is_continuous_across_piece_edges(generic_setup):
    w, jet = generic_setup
    glued = eb.build_glued_metric(w, jet, eb.GluingConfig(a=1e-4, gamma=5e-3))
    unit = np.array([0.5, -0.5, 0.5, 0.5])
    for edge in glued.edges:
        below = glued.metric.eval((edge * (1 - 1e-12)) * unit)
        above = glued.metric.eval((edge * (1 + 1e-12)) * unit)
        assert np.max(np.abs(below - above)) < 1e-12


# -- energy balance -----------------------------------------------------------------------


def test_generic_balance_is_negative_and_cancels(generic_setup):
    w, jet = generic_setup
    report = eb.energy_balance(w, jet, eb.GluingConfig(a=1e-4, gamma=5e-3), neck=False)
    assert abs(report.leading_cancellation) <= 1e-10 * w.norm_sq
    assert report.sign is eb.Sign.NEGATIVE
    assert report.predicted_balance == pytest.approx(
        eb.BALANCE_COEFFICIENT * 1e-16 * report.interaction_term)
    assert report.consistent


def test_predicted_balance_scales_as_a_to_the_fourth(generic_setup):
    w, jet = generic_setup
    small = eb.energy_balance(w, jet, eb.GluingConfig(a=1e-4, gamma=5e-3), neck=False)
    large = eb.energy_balance(w, jet, eb.GluingConfig(a=3e-4, gamma=5e-3), neck=False)
    assert large.predicted_balance / small.predicted_balance == pytest.approx(81.0, rel=1e-12)


def test_self_dual_balance_is_indeterminate():
    w = tc.WeylData.from_eigenvalues(GENERIC[0], [0.0, 0.0, 0.0])
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(1.05))
    report = eb.energy_balance(w, jet, eb.GluingConfig(a=1e-4, gamma=5e-3), neck=False)
    assert report.sign is eb.Sign.INDETERMINATE
    assert abs(report.interaction_term) < 1e-14 * jet.c2 * w.norm_sq


def test_budget_lines_are_labelled(generic_setup):
    w, jet = generic_setup
    report = eb.energy_balance(w, jet, eb.GluingConfig(a=1e-4, gamma=5e-3), neck=False)
    kinds = {line.kind for line in report.error_budget}
    assert kinds == {"measured", "declared", "uncertified"}
    record = report.record()
    assert list(record)[:5] == ["z_side", "m_side", "neck_correction", "interaction_term", "predicted_balance"]


# -- sign of the interaction -------------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_optimal_frame_attains_sorted_pairing(seed):
    w = tc.WeylData.random(np.random.default_rng(seed))
    best, frame = eb.optimal_frame(w)
    frame_data = tc.derdzinski_diagonalize(w)
    sd, asd = np.sort(frame_data.sd_eigenvalues), np.sort(frame_data.asd_eigenvalues)
    assert best == pytest.approx(float(np.dot(sd, asd)), rel=1e-10, abs=1e-12)
    assert tc.reflection_contraction(w.rotated(frame)) == pytest.approx(8.0 * best, rel=1e-10, abs=1e-12)


def test_sign_verdict_for_generic_and_self_dual_input():
    generic = eb.interaction_sign(tc.WeylData.from_eigenvalues(*GENERIC), t=1.05)
    assert generic.sign is eb.Sign.NEGATIVE
    assert generic.star == pytest.approx(1.5 * generic.contraction)
    assert generic.interaction < 0.0
    self_dual = eb.interaction_sign(tc.WeylData.from_eigenvalues(GENERIC[0], [0, 0, 0]), t=1.05)
    assert self_dual.sign is eb.Sign.INDETERMINATE


def test_admissible_t_scan_on_a_quotient_model():
    rot = np.eye(4)
    rot[2:, 2:] = [[math.cos(1.0), -math.sin(1.0)], [math.sin(1.0), math.cos(1.0)]]
    model = sc.QuotientModel.from_pairs(1.2, [(1.0, np.eye(4)), (1.2**0.5, rot)])
    report = eb.admissible_t(tc.WeylData.from_eigenvalues(*GENERIC), model, t_grid=(1.05, 1.1, 1.2))
    assert report.t_grid == (1.05, 1.1, 1.2)
    assert report.dominated()[0]
    assert report.t_star is not None


# -- capacity cutoff --------------------------------------------------------------------


def direct_capacity_energy(delta, delta_tilde):
    big_l = math.log(delta / delta_tilde)

    def integrand(u):
        s = u / big_l
        r = delta_tilde * math.exp(u)
        d1 = float(smoothstep(np.array(s), 1)) / (big_l * r)
        d2 = float(smoothstep(np.array(s), 2)) / (big_l * r) ** 2 - d1 / r
        # |D^2 chi|^2 + |D chi|^4 for a radial function on R^4, times the area element
        density = d2**2 + 3.0 * (d1 / r) ** 2 + d1**4
        return density * 2.0 * math.pi**2 * r**3 * r

    return integrate.quad(integrand, 0.0, big_l, limit=200)[0]


def test_capacity_energy_matches_direct_quadrature():
    cut = eb.capacity_cutoff(1.0, 1e-4)
    assert cut.energy == pytest.approx(direct_capacity_energy(1.0, 1e-4), rel=1e-10)


def test_capacity_profile_endpoints():
    cut = eb.capacity_cutoff(0.5, 1e-4)
    assert cut(np.array([1e-5, 1e-4]))[1] == pytest.approx(0.0)
    assert cut(np.array([0.5, 1.0])) == pytest.approx([1.0, 1.0])


def test_capacity_energy_halves_with_doubled_log_ratio():
    short = eb.capacity_cutoff(1.0, math.exp(-6.9)).energy
    long = eb.capacity_cutoff(1.0, math.exp(-13.8)).energy
    assert short / long == pytest.approx(2.0, rel=0.1)


def test_capacity_rejects_bad_radii_and_warns_without_decay():
    with pytest.raises(DomainError):
        eb.capacity_cutoff(1.0, 0.5)
    with pytest.raises(DomainError):
        eb.capacity_cutoff(1.0, 0.0)
    with pytest.warns(NoDecayWarning):
        eb.capacity_cutoff(1.0, 0.05)


def test_cutoff_weyl_estimate_is_finite():
    w = tc.WeylData.random(np.random.default_rng(7))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cut = eb.capacity_cutoff(0.5, 5e-4)
    from weylglue.fields import PolynomialField

    second = -(np.einsum("kijl->ijkl", w.tensor) + np.einsum("lijk->ijkl", w.tensor)) / 3.0
    check = eb.cutoff_weyl_estimate(cut, PolynomialField([np.zeros((4, 4)), np.zeros((4, 4, 4)), second]), 1.0)
    assert math.isfinite(check.max_ratio)
    assert check.weyl_energy <= check.bound_energy * max(1.0, check.max_ratio)
