"""Acceptance checks, one per numbered criterion.

Run ``pytest tests/test_acceptance.py -s`` to see the PASS/FAIL lines, or run
this file directly with ``python3 tests/test_acceptance.py``.
"""

import math
import os
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from weylglue import energy_balance as eb
from weylglue import series_correction as sc
from weylglue import sphere_quadrature as sq
from weylglue import tensor_core as tc
from weylglue import verification


def sphere_moments():
    start = time.perf_counter()
    cases = {(2, 0, 0, 0): math.pi**2 / 2.0, (2, 2, 0, 0): math.pi**2 / 12.0,
             (4, 0, 0, 0): math.pi**2 / 4.0, (0, 0, 0, 0): 2.0 * math.pi**2}
    worst = max(abs(sq.monomial_integral_s3(p) - ref) for p, ref in cases.items())
    quadrature = max(abs(sq.integrate_s3(sq.SpherePolynomial({p: 1.0}), 8).value - ref)
                     for p, ref in cases.items())
    elapsed = time.perf_counter() - start
    return max(worst, quadrature) < 1e-12 and elapsed < 1.0, \
        f"max error {max(worst, quadrature):.1e}, {elapsed:.2f} s"


def biharmonicity():
    start = time.perf_counter()
    w = tc.WeylData.random(np.random.default_rng(101))
    residual = verification.biharmonic_residual(w, np.random.default_rng(102), 20)
    elapsed = time.perf_counter() - start
    return residual < 1e-6 and elapsed < 5.0, f"relative residual {residual:.1e}, {elapsed:.2f} s"


def pairwise_round_trip():
    rng = np.random.default_rng(103)
    trip = idem = 0.0
    for _ in range(100):
        a = tc.random_pairwise(rng)
        dec = tc.decompose_pairwise(a)
        trip = max(trip, float(np.max(np.abs(dec.t_part + dec.gauge_part - a))))
        p = tc.riemann_projector(a)
        idem = max(idem, float(np.max(np.abs(tc.riemann_projector(p) - p))))
    return trip < 1e-12 and idem < 1e-12, f"round trip {trip:.1e}, idempotence {idem:.1e}"


def correction_jet():
    rng = np.random.default_rng(104)
    details, ok = [], True
    for t in (1.5, 2.0, 3.0):
        w = tc.WeylData.random(rng)
        jet = sc.correction_jet_cylinder(w, sc.CylinderParams(t))
        zero_jet = not np.any(jet.value) and not np.any(jet.gradient)
        hess_err = verification._evaluator_hessian_error(jet)
        closed = -(jet.c2 / 3.0) * sc.interaction_bracket(w)
        contraction_err = abs(sc.interaction_contraction(w, jet) - closed) / abs(closed)
        ok &= zero_jet and hess_err < jet.truncation_bound + 1e-6 and contraction_err < 1e-10
        details.append(f"t={t}: hessian {hess_err:.1e}, contraction {contraction_err:.1e}")
    return ok, "; ".join(details)


def c2_asymptotics():
    ratios = [sc.coeff_c2(t).value * 45.0 * (t - 1.0) ** 4 / math.pi**4 for t in (1.2, 1.1, 1.05, 1.02)]
    monotone = all(abs(b - 1.0) < abs(a - 1.0) for a, b in zip(ratios, ratios[1:]))
    return monotone and 0.5 < ratios[2] < 1.5, "ratios " + ", ".join(f"{r:.4f}" for r in ratios)


def coefficient_gap():
    start = time.perf_counter()
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(10):
        w = tc.WeylData.random(rng)
        gap = sq.c2_minus_c1(w)
        closed = math.pi**2 / 4.0 * w.norm_sq
        worst = max(worst, abs(gap.boundary - closed) / w.norm_sq, abs(gap.scaling - closed) / w.norm_sq)
    elapsed = time.perf_counter() - start
    return worst < 1e-3 and elapsed < 60.0, f"worst relative gap error {worst:.1e}, {elapsed:.1f} s"


def gamma_sweep():
    w = tc.WeylData.random(np.random.default_rng(107))
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(2.0))
    fits = [sq.gamma_sweep(jet, w, (0.02, 0.04, 0.08), kind=kind) for kind in ("divergence", "nondivergence")]
    ok = all(f.r_squared > 0.99 and abs(f.intercept - f.expected) <= 1e-2 * abs(f.expected) for f in fits)
    return ok, "; ".join(f"{f.kind}: R^2 {f.r_squared:.6f}, intercept {f.intercept:.5g} vs {f.expected:.5g}"
                         for f in fits)


def v_prime():
    w = tc.WeylData.random(np.random.default_rng(3), scale=0.05)
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(2.0))
    report = eb.v_prime_zero(w, jet, 0.05)
    relative_budget = report.budget / abs(report.analytic)
    exact = report.sphere_coefficient == 0
    ok = report.agrees and relative_budget < 0.01 and exact
    return ok, (f"analytic {report.analytic:.6g}, numeric {report.numeric:.6g}, "
                f"deviation {report.deviation / abs(report.analytic):.2%} within budget {relative_budget:.2%}")


def pipeline():
    w = tc.WeylData.from_eigenvalues([2.0, -0.5, -1.5], [1.0, 0.3, -1.3])
    verdict = eb.interaction_sign(w, t=1.05)
    aligned = w.rotated(verdict.frame)
    jet = sc.correction_jet_cylinder(aligned, sc.CylinderParams(1.05))
    report = eb.energy_balance(aligned, jet, eb.GluingConfig(a=1e-4, gamma=5e-3))
    doubled = eb.energy_balance(aligned, jet, eb.GluingConfig(a=2e-4, gamma=5e-3), neck=False)
    scaling = doubled.predicted_balance / report.predicted_balance
    self_dual = tc.WeylData.from_eigenvalues([2.0, -0.5, -1.5], [0.0, 0.0, 0.0])
    sd_jet = sc.correction_jet_cylinder(self_dual, sc.CylinderParams(1.05))
    sd_interaction = sc.interaction_contraction(self_dual, sd_jet) / (sd_jet.c2 * self_dual.norm_sq)
    cancellation = abs(report.leading_cancellation) / w.norm_sq
    ok = (cancellation < 1e-10 and abs(scaling - 16.0) < 1e-9 and report.sign is eb.Sign.NEGATIVE
          and abs(sd_interaction) < 1e-10)
    return ok, (f"cancellation {cancellation:.1e}, a^4 ratio {scaling:.12g}, sign {report.sign.value}, "
                f"self-dual interaction {sd_interaction:.1e}")


def eigenvalue_contraction():
    rng = np.random.default_rng(110)
    worst = 0.0
    for _ in range(50):
        w = tc.WeylData.random(rng)
        diag = w.rotated(tc.derdzinski_diagonalize(w).frame)
        eig = 8.0 * float(np.dot(np.diag(diag.sd_block), np.diag(diag.asd_block)))
        worst = max(worst, abs(tc.reflection_contraction(diag) - eig) / max(1.0, abs(eig)))
    planted = tc.WeylData.from_eigenvalues([1.0, 0.2, -1.2], [0.7, -0.1, -0.6])
    star = tc.star_product(planted.tensor, tc.reflect(planted))
    star_err = abs(star - 1.5 * tc.reflection_contraction(planted)) / abs(star)
    return worst < 1e-10 and star_err < 1e-10, f"contraction {worst:.1e}, star {star_err:.1e}"


def quotient_remainder():
    w = tc.WeylData.from_eigenvalues([2.0, -0.5, -1.5], [1.0, 0.3, -1.3])
    rot = np.eye(4)
    rot[2:, 2:] = [[math.cos(1.0), -math.sin(1.0)], [math.sin(1.0), math.cos(1.0)]]
    base = sc.QuotientModel.from_pairs(1.2, [(1.0, np.eye(4)), (1.2**0.5, rot)])
    scaled, relative = [], []
    for t in (1.2, 1.15, 1.1, 1.05):
        qjet, _ = sc.correction_jet_quotient(w, base.at_t(t))
        cjet = sc.correction_jet_cylinder(w, sc.CylinderParams(t))
        dev = float(np.max(np.abs(qjet.hessian - cjet.hessian)))
        scaled.append(dev * (t - 1.0) ** 3)
        relative.append(dev / cjet.c2)
    decreasing = all(b < a for a, b in zip(scaled, scaled[1:])) and all(b < a for a, b in zip(relative, relative[1:]))
    bounded = all(math.isfinite(v) for v in scaled + relative)
    return decreasing and bounded, ("dev (t-1)^3 " + ", ".join(f"{v:.2g}" for v in scaled)
                                    + "; dev / C2 " + ", ".join(f"{v:.2g}" for v in relative))


def capacity_halving():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        short = eb.capacity_cutoff(1.0, math.exp(-6.9)).energy
        long = eb.capacity_cutoff(1.0, math.exp(-13.8)).energy
    return abs(short / long - 2.0) <= 0.2, f"energy ratio {short / long:.4f}"


def determinism():
    outputs = []
    for threads in (1, 4):
        env = dict(os.environ, WEYL_GLUE_THREADS=str(threads))
        proc = subprocess.run([sys.executable, "-m", "weylglue", "verify", "--seed", "13"],
                              capture_output=True, env=env, timeout=600)
        outputs.append(proc.stdout)
    same = outputs[0] == outputs[1] and len(outputs[0]) > 0
    return same, f"{len(outputs[0])} bytes, identical: {same}"


CRITERIA = {
    1: ("sphere moments", sphere_moments),
    2: ("biharmonicity of h", biharmonicity),
    3: ("pairwise round trip", pairwise_round_trip),
    4: ("correction jet", correction_jet),
    5: ("C2 asymptotics", c2_asymptotics),
    6: ("C2 - C1 gap", coefficient_gap),
    7: ("gamma sweep", gamma_sweep),
    8: ("V'(0) against difference quotient", v_prime),
    9: ("energy balance pipeline", pipeline),
    10: ("eigenvalue contraction", eigenvalue_contraction),
    11: ("quotient remainder", quotient_remainder),
    12: ("capacity cutoff halving", capacity_halving),
    13: ("determinism across thread caps", determinism),
}


def evaluate(number):
    label, check = CRITERIA[number]
    passed, detail = check()
    print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'} {label}: {detail}")
    return passed


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    assert evaluate(number)


if __name__ == "__main__":
    results = [evaluate(n) for n in sorted(CRITERIA)]
    sys.exit(0 if all(results) else 1)
