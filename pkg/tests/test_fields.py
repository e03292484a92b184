import itertools
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from weylglue.fields import (
    PolynomialField,
    RadialCutoff,
    RadialProfileField,
    SingularQuadraticField,
    leibniz,
    smoothstep,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def loop_polynomial_jet(coeffs, u, k):
    # k-th derivative of sum_m c_m u^m / m!, contracting one slot at a time
    out = np.zeros((4, 4) + (4,) * k)
    for m in range(k, len(coeffs)):
        term = coeffs[m]
        for _ in range(m - k):
            term = np.tensordot(term, u, axes=([term.ndim - 1], [0]))
        out += term / math.factorial(m - k)
    return out


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_polynomial_jet_matches_slotwise_contraction(seed):
    rng = np.random.default_rng(seed)
    coeffs = [rng.normal(size=(4, 4) + (4,) * m) for m in range(5)]
    field_ = PolynomialField(coeffs, center=rng.normal(size=4))
    x = rng.normal(size=(3, 4))
    jets = field_.analytic_jet(x, 3)
    for n in range(3):
        for k in range(4):
            ref = loop_polynomial_jet(coeffs, x[n] - field_.center, k)
            assert np.max(np.abs(jets[k][n] - ref)) < 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_leibniz_matches_product_rule_by_hand():
    rng = np.random.default_rng(0)
    a = [rng.normal(size=(2, 4, 4)), rng.normal(size=(2, 4, 4, 4)), rng.normal(size=(2, 4, 4, 4, 4))]
    s = [rng.normal(size=2), rng.normal(size=(2, 4)), rng.normal(size=(2, 4, 4))]
    out = leibniz(a, s, 2)
    assert np.allclose(out[0], a[0] * s[0][:, None, None])
    first = a[1] * s[0][:, None, None, None] + a[0][..., None] * s[1][:, None, None, :]
    assert np.allclose(out[1], first)
    second = np.zeros((2, 4, 4, 4, 4))
    for p, q in itertools.product(range(4), range(4)):
        second[..., p, q] = (a[2][..., p, q] * s[0][:, None, None]
                             + a[1][..., p] * s[1][:, None, None, q]
                             + a[1][..., q] * s[1][:, None, None, p]
                             + a[0] * s[2][:, None, None, p, q])
    assert np.allclose(out[2], second)


def test_smoothstep_endpoints_and_flatness():
    s = np.array([0.0, 1.0])
    assert np.allclose(smoothstep(s), [0.0, 1.0])
    for order in (1, 2):
        assert np.allclose(smoothstep(s, order), 0.0)


def test_radial_profile_jet_matches_finite_differences():
    rng = np.random.default_rng(1)
    base = SingularQuadraticField(rng.normal(size=(4, 4, 4, 4)), coefficient=1.0)
    field_ = RadialProfileField(base, RadialCutoff(1.0, 0.5))
    x = np.array([[0.4, 0.3, -0.2, 0.35]])
    jet = field_.analytic_jet(x, 1)[1][0]
    h = 1e-6
    fd = np.stack([(field_.value(x + h * e) - field_.value(x - h * e))[0] / (2 * h) for e in np.eye(4)], -1)
    assert np.max(np.abs(jet - fd)) < 1e-6 * max(1.0, np.max(np.abs(jet)))
