import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weylglue import series_correction as sc
from weylglue import tensor_core as tc
from weylglue.errors import ConfigurationError, DivergenceError, NearFixedPointWarning

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def brute_c2(t, n_max=4000):
    # t^{2n} / (1 - t^n)^4 = u^2 / (1 - u)^4 with u = t^-n, summed smallest first
    u = float(t) ** -np.arange(n_max, 0, -1, dtype=float)
    return math.fsum(2.0 * u**2 / (1.0 - u) ** 4)


def rotation_fixing_e4(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1.0
    out = np.eye(4)
    out[:3, :3] = q
    return out


# -- coefficients ------------------------------------------------------------------


@pytest.mark.parametrize("t", [1.3, 2.0, 5.0])
def test_c2_matches_brute_force_sum(t):
    assert sc.coeff_c2(t).value == pytest.approx(brute_c2(t), rel=1e-11)


def test_c2_reference_value_at_two():
    assert sc.coeff_c2(2.0).value == pytest.approx(8.4615, abs=5e-4)


def test_c1_is_half_of_c0():
    for t in (1.1, 2.0, 7.0):
        assert sc.coeff_c1(t).value == pytest.approx(sc.coeff_c0(t).value / 2.0, rel=1e-13)


def test_c2_asymptotic_ratio_tends_to_one():
    ratios = [sc.coeff_c2(t).value / sc.c2_asymptotic(t) for t in (1.2, 1.1, 1.05, 1.02)]
    assert all(abs(b - 1.0) < abs(a - 1.0) for a, b in zip(ratios, ratios[1:]))
    assert 0.5 < ratios[2] < 1.5


@pytest.mark.parametrize("t", [1.0, 0.5, -2.0])
def test_t_at_most_one_diverges(t):
    with pytest.raises(DivergenceError):
        sc.coeff_c2(t)


def test_ungauged_series_reports_divergence():
    w = tc.WeylData.from_eigenvalues([1.0, 0.0, -1.0], [0.5, 0.5, -1.0])
    with pytest.raises(DivergenceError):
        sc.naive_partial_sums(np.array([0.05, 0.0, 0.0, -1.0]), w, 2.0, 200)


# -- cylinder jet ------------------------------------------------------------------------


@settings(max_examples=8, deadline=None)
@given(seeds, st.sampled_from([1.5, 2.0, 3.0]))
def test_jet_value_and_gradient_vanish(seed, t):
    jet = sc.correction_jet_cylinder(tc.WeylData.random(np.random.default_rng(seed)), sc.CylinderParams(t))
    assert not np.any(jet.value)
    assert not np.any(jet.gradient)


@settings(max_examples=8, deadline=None)
@given(seeds)
def test_hessian_is_projected_closed_form(seed):
    w = tc.WeylData.random(np.random.default_rng(seed))
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(2.0))
    closed = sc.abar_hessian_formula(w, jet.c2)
    assert np.allclose(jet.abar_hessian, closed, atol=1e-12 * np.max(np.abs(closed)))
    assert np.allclose(jet.hessian, 0.5 * tc.decompose_pairwise(closed).t_part)


def test_contraction_matches_bracket_formula():
    w = tc.WeylData.random(np.random.default_rng(3))
    for t in (1.5, 2.0, 3.0):
        jet = sc.correction_jet_cylinder(w, sc.CylinderParams(t))
        expected = -(jet.c2 / 3.0) * sc.interaction_bracket(w)
        assert sc.interaction_contraction(w, jet) == pytest.approx(expected, rel=1e-10)


def test_evaluator_second_differences_match_hessian():
    w = tc.WeylData.random(np.random.default_rng(4))
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(2.0))
    eye, base, h = np.eye(4), -np.eye(4)[3], 1e-3
    ref = np.einsum("kijl->ijkl", jet.abar_hessian)
    for k, l in [(0, 0), (1, 3), (3, 3), (2, 1)]:
        pts = np.array([base + h * (eye[k] + eye[l]), base + h * (eye[k] - eye[l]),
                        base - h * (eye[k] - eye[l]), base - h * (eye[k] + eye[l])])
        v = jet.evaluator(pts)
        num = (v[0] - v[1] - v[2] + v[3]) / (4 * h * h)
        assert np.max(np.abs(num - ref[:, :, k, l])) < 1e-4 * np.max(np.abs(ref))


@settings(max_examples=6, deadline=None)
@given(seeds)
def test_jet_is_equivariant_under_rotations_fixing_e4(seed):
    rng = np.random.default_rng(seed)
    w = tc.WeylData.random(rng)
    rot = tc.FrameRotation(rotation_fixing_e4(rng))
    params = sc.CylinderParams(2.0)
    direct = sc.correction_jet_cylinder(w.rotated(rot), params)
    moved = sc.correction_jet_cylinder(w, params).rotated(rot)
    scale = np.max(np.abs(direct.hessian))
    assert np.max(np.abs(direct.hessian - moved.hessian)) < 1e-10 * scale
    assert np.max(np.abs(direct.third - moved.third)) < 1e-10 * max(1.0, np.max(np.abs(direct.third)))


def test_self_dual_input_has_zero_interaction():
    w = tc.WeylData.from_eigenvalues([1.0, 0.5, -1.5], [0.0, 0.0, 0.0])
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(1.05))
    assert abs(sc.interaction_contraction(w, jet)) < 1e-14 * jet.c2 * w.norm_sq


def test_scaled_jet_is_linear():
    w = tc.WeylData.random(np.random.default_rng(5))
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(2.0))
    assert sc.interaction_contraction(w, jet.scaled(2.0)) == pytest.approx(
        2.0 * sc.interaction_contraction(w, jet), rel=1e-14)


def test_collar_radius_stays_inside_taylor_radius():
    params = sc.CylinderParams(1.05)
    assert params.taylor_radius == pytest.approx(0.5 * (1.0 - 1.0 / 1.05))
    assert params.taylor_radius <= params.collar_radius


# -- quotient models -----------------------------------------------------------------------


def test_cylinder_quotient_reproduces_cylinder_jet():
    w = tc.WeylData.random(np.random.default_rng(6))
    qjet, rem = sc.correction_jet_quotient(w, sc.QuotientModel.cylinder(2.0))
    cjet = sc.correction_jet_cylinder(w, sc.CylinderParams(2.0))
    assert rem == []
    assert np.max(np.abs(qjet.hessian - cjet.hessian)) < 1e-9 * np.max(np.abs(cjet.hessian))


def test_parse_accepts_nine_and_sixteen_entries():
    text = """
    t = 2.0   # dilation
    s = 1.0 o = 1 0 0 0 1 0 0 0 1
    s = 1.2 o = 1 0 0 0  0 0 -1 0  0 1 0 0  0 0 0 1
    """
    model = sc.QuotientModel.parse(text)
    assert model.t == 2.0
    assert [el.scale for el in model.elements] == [1.0, 1.2]


@pytest.mark.parametrize("text", [
    "t = 2\ns = 1 o = 1 0 0",
    "t = 2\ns = 1.2 o = 1 0 0 0 1 0 0 0 1",
    "s = 1 o = 1 0 0 0 1 0 0 0 1",
    "t = 2\ns = 1 o = 1 0 0 0 1 0 0 0 1\ns = 5 o = 1 0 0 0 1 0 0 0 1",
])
def test_parse_rejects_bad_models(text):
    with pytest.raises(ConfigurationError):
        sc.QuotientModel.parse(text)


def test_at_t_keeps_scale_exponents():
    model = sc.QuotientModel.from_pairs(2.0, [(1.0, np.eye(4)), (2.0**0.25, np.eye(4)[[1, 0, 2, 3]] * [[1], [-1], [1], [1]])])
    moved = model.at_t(1.1)
    assert moved.elements[1].scale == pytest.approx(1.1**0.25)


def test_near_fixed_point_element_warns():
    rot = np.eye(4)
    rot[:2, :2] = [[0.0, -1.0], [1.0, 0.0]]
    model = sc.QuotientModel.from_pairs(1.5, [(1.0, np.eye(4)), (1.2, rot)])
    with pytest.warns(NearFixedPointWarning):
        sc.correction_jet_quotient(tc.WeylData.random(np.random.default_rng(1)), model)


def test_quotient_deviation_is_bounded_and_shrinks_relative_to_c2():
    w = tc.WeylData.from_eigenvalues([2.0, -0.5, -1.5], [1.0, 0.3, -1.3])
    rot = np.eye(4)
    rot[2:, 2:] = [[math.cos(1.0), -math.sin(1.0)], [math.sin(1.0), math.cos(1.0)]]
    base = sc.QuotientModel.from_pairs(1.2, [(1.0, np.eye(4)), (1.2**0.5, rot)])
    scaled, relative = [], []
    for t in (1.2, 1.1, 1.05):
        qjet, _ = sc.correction_jet_quotient(w, base.at_t(t))
        cjet = sc.correction_jet_cylinder(w, sc.CylinderParams(t))
        dev = float(np.max(np.abs(qjet.hessian - cjet.hessian)))
        scaled.append(dev * (t - 1.0) ** 3)
        relative.append(dev / cjet.c2)
    assert all(b < a for a, b in zip(scaled, scaled[1:]))
    assert all(b < a for a, b in zip(relative, relative[1:]))
