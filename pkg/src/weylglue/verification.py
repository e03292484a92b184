"""Seeded invariant suites behind ``weyl-glue verify``.

Each check records a descriptive anchor naming the identity it exercises, the
measured value, the reference and the tolerance. Tolerances can be overridden
by name; an unknown name is a configuration error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import chart_geometry as cg
from . import energy_balance as eb
from . import series_correction as sc
from . import sphere_quadrature as sq
from . import tensor_core as tc
from .errors import ConfigurationError
from .fields import DiffScheme, FunctionField

SUITES = ("tensor", "series", "boundary", "balance")

DEFAULT_TOLERANCES: dict[str, float] = {
    "tensor.round_trip": 1e-12,
    "tensor.idempotent": 1e-12,
    "tensor.eigen_contraction": 1e-10,
    "tensor.star_three_halves": 1e-10,
    "series.c2_reference": 1e-3,
    "series.c2_asymptotic": 0.5,
    "series.evaluator_hessian": 1e-6,
    "series.contraction": 1e-10,
    "series.biharmonic": 1e-6,
    "boundary.sphere_moments": 1e-12,
    "boundary.coefficient_gap": 1e-3,
    "boundary.sweep_r_squared": 0.99,
    "boundary.sweep_intercept": 1e-2,
    "balance.cancellation": 1e-10,
    "balance.a4_scaling": 1e-12,
    "balance.self_dual": 1e-12,
    "balance.capacity_halving": 0.1,
}


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    value: float
    reference: float
    tolerance: float
    passed: bool

    def record(self) -> dict[str, object]:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "value": self.value,
            "reference": self.reference,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def resolve_tolerances(overrides: Mapping[str, float] | None) -> dict[str, float]:
    tol = dict(DEFAULT_TOLERANCES)
    for key, value in (overrides or {}).items():
        if key not in tol:
            raise ConfigurationError(f"unknown tolerance {key!r}")
        tol[key] = float(value)
    return tol


def _within(name, anchor, value, reference, tol, relative=True) -> Check:
    scale = max(1.0, abs(reference)) if relative else 1.0
    err = abs(value - reference)
    return Check(name, anchor, float(value), float(reference), tol, bool(err <= tol * scale))


def _at_least(name, anchor, value, bound) -> Check:
    return Check(name, anchor, float(value), float(bound), float(bound), bool(value >= bound))


# ---------------------------------------------------------------------------


def tensor_suite(rng: np.random.Generator, tol: Mapping[str, float]) -> list[Check]:
    checks = []
    worst_trip = worst_idem = 0.0
    for _ in range(20):
        a = tc.random_pairwise(rng)
        dec = tc.decompose_pairwise(a)
        worst_trip = max(worst_trip, float(np.max(np.abs(dec.t_part + dec.gauge_part - a))))
        p = tc.riemann_projector(a)
        worst_idem = max(worst_idem, float(np.max(np.abs(tc.riemann_projector(p) - p))))
    checks.append(_within("pairwise_round_trip", "pairwise tensor = curvature part + gauge part",
                          worst_trip, 0.0, tol["tensor.round_trip"], relative=False))
    checks.append(_within("projector_idempotent", "curvature projector is idempotent",
                          worst_idem, 0.0, tol["tensor.idempotent"], relative=False))
    worst_eig = 0.0
    for _ in range(10):
        w = tc.WeylData.random(rng)
        frame = tc.derdzinski_diagonalize(w).frame
        diag = w.rotated(frame)
        eig = 8.0 * float(np.dot(np.diag(diag.sd_block), np.diag(diag.asd_block)))
        worst_eig = max(worst_eig, abs(tc.reflection_contraction(diag) - eig) / max(1.0, abs(eig)))
    checks.append(_within("reflection_contraction", "reflected contraction = 8 sum of eigenvalue products",
                          worst_eig, 0.0, tol["tensor.eigen_contraction"], relative=False))
    w = tc.WeylData.from_eigenvalues(*_planted_eigenvalues(rng))
    star = tc.star_product(w.tensor, tc.reflect(w))
    checks.append(_within("star_three_halves", "star product with the reflection = 3/2 contraction",
                          star, 1.5 * tc.reflection_contraction(w), tol["tensor.star_three_halves"]))
    return checks


def _planted_eigenvalues(rng: np.random.Generator):
    def triple():
        v = rng.normal(size=3)
        return v - v.mean()
    return triple(), triple()


def series_suite(rng: np.random.Generator, tol: Mapping[str, float]) -> list[Check]:
    checks = [_within("c2_at_two", "tower coefficient C2 at t = 2", sc.coeff_c2(2.0).value, 8.4615,
                      tol["series.c2_reference"] / 8.4615)]
    t = 1.05
    ratio = sc.coeff_c2(t).value / sc.c2_asymptotic(t)
    checks.append(_within("c2_asymptotic_ratio", "C2 against its t -> 1 asymptote", ratio, 1.0,
                          tol["series.c2_asymptotic"]))
    w = tc.WeylData.random(rng)
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(2.0))
    err = _evaluator_hessian_error(jet)
    checks.append(_within("evaluator_hessian", "second differences of the regular part = closed hessian",
                          err, 0.0, tol["series.evaluator_hessian"] + jet.truncation_bound, relative=False))
    closed = -(jet.c2 / 3.0) * sc.interaction_bracket(w)
    checks.append(_within("interaction_contraction", "W contracted with the hessian of A",
                          sc.interaction_contraction(w, jet), closed, tol["series.contraction"]))
    checks.append(_within("biharmonic_h", "finite-difference bi-Laplacian of the singular field",
                          biharmonic_residual(w, rng, 20), 0.0, tol["series.biharmonic"], relative=False))
    return checks


def _evaluator_hessian_error(jet: sc.CorrectionJet, step: float = 4e-3) -> float:
    eye = np.eye(4)
    base = -eye[3]

    def second_differences(h):
        out = np.zeros((4, 4, 4, 4))
        for k in range(4):
            for l in range(4):
                pts = np.array([base + h * (eye[k] + eye[l]), base + h * (eye[k] - eye[l]),
                                base - h * (eye[k] - eye[l]), base - h * (eye[k] + eye[l])])
                v = jet.evaluator(pts)
                out[:, :, k, l] = (v[0] - v[1] - v[2] + v[3]) / (4.0 * h * h)
        return out

    coarse, fine = second_differences(step), second_differences(step / 2.0)
    richardson = fine + (fine - coarse) / 3.0
    ref = np.einsum("kijl->ijkl", jet.abar_hessian)
    return float(np.max(np.abs(richardson - ref)) / max(1.0, float(np.max(np.abs(ref)))))


def biharmonic_residual(w, rng: np.random.Generator, count: int, step: float = 0.03) -> float:
    """Largest ``|lap^2 h| / sum|terms|`` at random points with radii in ``[0.5, 2]``."""
    field_ = FunctionField(sc.singular_h_field(w).value)
    x = rng.normal(size=(count, 4))
    x *= (rng.uniform(0.5, 2.0, size=count) / np.linalg.norm(x, axis=1))[:, None]
    bilap, scale = cg.bilaplacian(field_, x, DiffScheme(step=step, richardson_levels=1))
    return float(np.max(np.abs(bilap)) / np.max(scale))


def boundary_suite(rng: np.random.Generator, tol: Mapping[str, float]) -> list[Check]:
    moments = {
        "x1^2": ((2, 0, 0, 0), math.pi**2 / 2.0),
        "x1^2 x2^2": ((2, 2, 0, 0), math.pi**2 / 12.0),
        "x1^4": ((4, 0, 0, 0), math.pi**2 / 4.0),
        "1": ((0, 0, 0, 0), 2.0 * math.pi**2),
    }
    checks = []
    for label, (powers, ref) in moments.items():
        checks.append(_within(f"sphere_moment[{label}]", f"integral of {label} over the unit 3-sphere",
                              sq.monomial_integral_s3(powers), ref, tol["boundary.sphere_moments"]))
    w = tc.WeylData.random(rng)
    gap = sq.c2_minus_c1(w)
    for path in ("boundary", "scaling"):
        checks.append(_within(f"coefficient_gap[{path}]", f"C2 - C1 = (pi^2/4)|W|^2 via the {path} path",
                              getattr(gap, path) / w.norm_sq, math.pi**2 / 4.0,
                              tol["boundary.coefficient_gap"]))
    jet = sc.correction_jet_cylinder(w, sc.CylinderParams(2.0))
    for kind in ("divergence", "nondivergence"):
        fit = sq.gamma_sweep(jet, w, kind=kind)
        checks.append(_at_least(f"gamma_sweep_r2[{kind}]", f"order-one {kind} boundary term is affine in gamma^2",
                                fit.r_squared, tol["boundary.sweep_r_squared"]))
        checks.append(_within(f"gamma_sweep_intercept[{kind}]",
                              f"{kind} order-one intercept = (pi^2/6) W . d^2 A(0)",
                              fit.intercept, fit.expected, tol["boundary.sweep_intercept"]))
    return checks


def balance_suite(rng: np.random.Generator, tol: Mapping[str, float]) -> list[Check]:
    sd, asd = _planted_eigenvalues(rng)
    w = tc.WeylData.from_eigenvalues(sd, asd)
    verdict = eb.interaction_sign(w, t=1.05)
    aligned = w.rotated(verdict.frame)
    jet = sc.correction_jet_cylinder(aligned, sc.CylinderParams(1.05))
    cfg = eb.GluingConfig(a=1e-4, gamma=5e-3)
    report = eb.energy_balance(aligned, jet, cfg, neck=False)
    checks = [
        _within("gamma4_cancellation", "gamma^-4 terms of both sides cancel",
                report.leading_cancellation, 0.0, tol["balance.cancellation"]),
        Check("generic_sign", "aligned generic Weyl tensor at t = 1.05 gives a negative balance",
              1.0 if report.sign is eb.Sign.NEGATIVE else 0.0, 1.0, 0.0, report.sign is eb.Sign.NEGATIVE),
    ]
    doubled = eb.energy_balance(aligned, jet, eb.GluingConfig(a=2e-4, gamma=5e-3), neck=False)
    checks.append(_within("a4_scaling", "predicted balance scales like a^4",
                          doubled.predicted_balance / report.predicted_balance, 16.0, tol["balance.a4_scaling"]))
    self_dual = tc.WeylData.from_eigenvalues(sd, np.zeros(3))
    sd_jet = sc.correction_jet_cylinder(self_dual, sc.CylinderParams(1.05))
    sd_scale = abs(sd_jet.c2) * self_dual.norm_sq
    checks.append(_within("self_dual_interaction", "self-dual input has zero interaction (relative to C2 |W|^2)",
                          sc.interaction_contraction(self_dual, sd_jet) / sd_scale, 0.0,
                          tol["balance.self_dual"], relative=False))
    checks.append(_within("sphere_cancellation", "exact sphere coefficient in the derivative of V",
                          float(eb.sphere_cancellation_coefficient()), 0.0, 0.0, relative=False))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        short = eb.capacity_cutoff(1.0, math.exp(-6.9)).energy
        long = eb.capacity_cutoff(1.0, math.exp(-13.8)).energy
    checks.append(_within("capacity_halving", "cutoff energy halves when the log radius ratio doubles",
                          short / long, 2.0, tol["balance.capacity_halving"] * 2.0, relative=False))
    return checks


SUITE_FUNCTIONS: dict[str, Callable[[np.random.Generator, Mapping[str, float]], list[Check]]] = {
    "tensor": tensor_suite,
    "series": series_suite,
    "boundary": boundary_suite,
    "balance": balance_suite,
}


def run_suites(suite: str, seed: int, overrides: Mapping[str, float] | None = None) -> dict[str, list[Check]]:
    if suite != "all" and suite not in SUITE_FUNCTIONS:
        raise ConfigurationError(f"unknown suite {suite!r}; choose all, {', '.join(SUITES)}")
    tol = resolve_tolerances(overrides)
    names = SUITES if suite == "all" else (suite,)
    out = {}
    for offset, name in enumerate(SUITES):
        if name in names:
            # one independent stream per suite so subsets reproduce the full run
            out[name] = SUITE_FUNCTIONS[name](np.random.default_rng([seed, offset]), tol)
    return out
