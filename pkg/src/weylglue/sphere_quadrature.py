"""Integration over the unit three-sphere and the boundary integrals of the glued Weyl energy.

Two routes are offered for ``int_{S^3} f``: an exact one for polynomials, via the
closed Gamma-function moments, and a seeded Monte Carlo estimate. The tensor-product
rule in Hopf coordinates integrates polynomials exactly up to its degree and is the
workhorse for the boundary integrals.

On a sphere ``|x| = gamma`` both the singular field ``K`` and the Taylor polynomial
of ``A`` restrict to polynomials in the unit normal. Each boundary integrand is then
a polynomial, so the product rule evaluates it exactly. The bilinear pieces
``(K, K)``, ``(K, A)`` and ``(A, A)`` are kept apart, which separates the
``gamma^-4`` coefficient from the order-one part without cancellation.

Normals point out of the ball ``B_gamma``: ``nu = x / |x|``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from . import tensor_core as tc
from ._parallel import chunk_slices, ordered_map
from .errors import CapabilityError, ConsistencyError, DomainError

SPHERE_AREA = 2.0 * math.pi**2
BOUNDARY_DEGREE = 16
TRUNCATION_POLLUTION = 1e-6
MC_CHUNK = 1 << 15


# ---------------------------------------------------------------------------
# exact moments


def _validate_powers(powers) -> tuple[int, int, int, int]:
    powers = tuple(int(p) for p in powers)
    if len(powers) != 4 or any(p < 0 for p in powers):
        raise DomainError("a monomial on S^3 needs four non-negative exponents")
    return powers  # type: ignore[return-value]


def monomial_integral_s3_exact(powers) -> Fraction:
    """``int_{S^3} x^a dsigma / pi^2`` as an exact rational (zero when any exponent is odd)."""
    powers = _validate_powers(powers)
    if any(p % 2 for p in powers):
        return Fraction(0)
    # Gamma(k + 1/2) = sqrt(pi) (2k)! / (4^k k!), and Gamma(|a|/2 + 2) is a factorial.
    num = Fraction(2)
    for p in powers:
        k = p // 2
        num *= Fraction(math.factorial(2 * k), 4**k * math.factorial(k))
    return num / math.factorial(sum(powers) // 2 + 1)


def monomial_integral_s3(powers) -> float:
    """``int_{S^3} x^a dsigma = 2 prod Gamma((a_i+1)/2) / Gamma(sum (a_i+1)/2)``."""
    return float(monomial_integral_s3_exact(powers)) * math.pi**2


@dataclass(frozen=True)
class SpherePolynomial:
    """A polynomial in the ambient coordinates, stored as ``{exponents: coefficient}``."""

    terms: Mapping[tuple[int, int, int, int], float]

    def __post_init__(self):
        clean = {}
        for powers, coeff in dict(self.terms).items():
            key = _validate_powers(powers)
            clean[key] = clean.get(key, 0.0) + float(coeff)
        object.__setattr__(self, "terms", clean)

    @classmethod
    def from_tensor(cls, tensor) -> "SpherePolynomial":
        """``sum T_{a_1 ... a_m} x^a_1 ... x^a_m`` for a rank-``m`` array over R^4."""
        tensor = np.asarray(tensor, dtype=float)
        terms: dict[tuple[int, int, int, int], float] = {}
        for index in itertools.product(range(4), repeat=tensor.ndim):
            coeff = float(tensor[index])
            if coeff == 0.0:
                continue
            powers = tuple(index.count(axis) for axis in range(4))
            terms[powers] = terms.get(powers, 0.0) + coeff
        return cls(terms)

    @property
    def degree(self) -> int:
        return max((sum(p) for p in self.terms), default=0)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for powers, coeff in self.terms.items():
            out += coeff * np.prod(pts ** np.asarray(powers), axis=1)
        return out

    def integral_exact(self) -> float:
        return math.pi**2 * sum(c * float(monomial_integral_s3_exact(p)) for p, c in self.terms.items())


# ---------------------------------------------------------------------------
# product rule and Monte Carlo


@dataclass(frozen=True)
class S3Rule:
    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=32)
def s3_product_rule(degree: int) -> S3Rule:
    """Rule exact for polynomials of total degree ``<= degree`` on the unit three-sphere.

    Hopf coordinates ``(cos th e^{i phi1}, sin th e^{i phi2})`` give
    ``dsigma = du dphi1 dphi2 / 2`` with ``u = sin^2 th``. Gauss-Legendre in ``u`` and
    the trapezoid rule in both angles are exact for the resulting integrands.
    """
    degree = int(degree)
    if degree < 0:
        raise DomainError("quadrature degree must be non-negative")
    n_u = degree // 4 + 1
    n_phi = degree + 1
    gl_x, gl_w = np.polynomial.legendre.leggauss(n_u)
    u = 0.5 * (gl_x + 1.0)
    wu = 0.5 * gl_w
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    uu, p1, p2 = np.meshgrid(u, phi, phi, indexing="ij")
    ww = np.broadcast_to(wu[:, None, None], uu.shape)
    c, s = np.sqrt(1.0 - uu), np.sqrt(uu)
    nodes = np.stack([c * np.cos(p1), c * np.sin(p1), s * np.cos(p2), s * np.sin(p2)], axis=-1)
    weights = 0.5 * ww * (2.0 * math.pi / n_phi) ** 2
    nodes = nodes.reshape(-1, 4)
    weights = weights.reshape(-1).copy()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return S3Rule(nodes, weights, degree)


@dataclass(frozen=True)
class MonteCarlo:
    """Uniform sampling on S^3 with ``samples`` points, reproducible from ``seed``.

    Samples are drawn in fixed chunks, each from its own counter-based stream keyed
    by ``(seed, chunk index)``, so results do not depend on the thread count.
    """

    samples: int
    seed: int = 0

    def __post_init__(self):
        if int(self.samples) < 2:
            raise DomainError("Monte Carlo needs at least two samples")


@dataclass(frozen=True)
class S3Integral:
    value: float
    error: float
    method: str


def sample_s3(count: int, seed: int, chunk_index: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(chunk_index)]))
    pts = gen.standard_normal((count, 4))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def integrate_s3(f, rule="exact", threads: int | None = None) -> S3Integral:
    """Integrate ``f`` over the unit three-sphere.

    ``rule="exact"`` needs a :class:`SpherePolynomial`. An integer rule applies the
    product rule of that degree to a vectorized callable. A :class:`MonteCarlo`
    rule returns the sample mean times ``2 pi^2`` with its standard error.
    """
    if isinstance(rule, str) and rule == "exact":
        if not isinstance(f, SpherePolynomial):
            raise CapabilityError("the exact path integrates SpherePolynomial inputs only")
        return S3Integral(f.integral_exact(), 0.0, "exact")
    if isinstance(rule, (int, np.integer)) and not isinstance(rule, bool):
        prod = s3_product_rule(int(rule))
        return S3Integral(float(prod.integrate(np.asarray(f(prod.nodes), dtype=float))), 0.0,
                          f"product-{int(rule)}")
    if isinstance(rule, MonteCarlo):
        return _monte_carlo(f, rule, threads)
    raise CapabilityError(f"unknown integration rule {rule!r}")


def _monte_carlo(f: Callable, rule: MonteCarlo, threads: int | None) -> S3Integral:
    slices = chunk_slices(int(rule.samples), MC_CHUNK)

    def run(item):
        index, sl = item
        vals = np.asarray(f(sample_s3(sl.stop - sl.start, rule.seed, index)), dtype=float)
        return float(np.sum(vals)), float(np.sum(vals**2))

    parts = ordered_map(run, list(enumerate(slices)), threads)
    n = int(rule.samples)
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    mean = total / n
    var = max(total_sq / n - mean**2, 0.0) * n / (n - 1)
    return S3Integral(SPHERE_AREA * mean, SPHERE_AREA * math.sqrt(var / n), "monte-carlo")


# ---------------------------------------------------------------------------
# boundary integrals


@dataclass(frozen=True)
class BoundaryIntegralReport:
    """One boundary integral on ``|x| = gamma``.

    ``leading_coeff`` multiplies ``gamma^-4``; ``order_one`` is everything else at
    this radius; ``residual`` is ``order_one`` minus its predicted limit
    ``(pi^2/6) W^kijl d_k d_l A_ij(0)`` and is of size ``O(gamma^2)``.
    """

    kind: str
    gamma: float
    leading_coeff: float
    order_one: float
    residual: float
    quadrature_error: float

    @property
    def total(self) -> float:
        return self.leading_coeff * self.gamma**-4 + self.order_one


def _k_field(weyl):
    from .fields import SingularQuadraticField

    return SingularQuadraticField(weyl, coefficient=-1.0 / 3.0)


def _check_radius(jet, gamma: float) -> float:
    gamma = float(gamma)
    if not math.isfinite(gamma) or gamma <= 0.0:
        raise DomainError(f"boundary radius must be positive, got {gamma!r}")
    if gamma >= jet.collar_radius:
        raise DomainError(f"boundary radius {gamma} leaves the collar of radius {jet.collar_radius:.4g}")
    if jet.truncation_bound / gamma**2 > TRUNCATION_POLLUTION:
        raise DomainError(
            f"boundary radius {gamma} too small: series truncation {jet.truncation_bound:.3g} "
            "is amplified past the order-one term")
    return gamma


def _pairing(kind: str, first: list[np.ndarray], second: list[np.ndarray], normals: np.ndarray) -> np.ndarray:
    """Pointwise density of the bilinear boundary form for jets ``first`` and ``second``."""
    from .chart_geometry import linearized_weyl_divergence_from_jet, linearized_weyl_from_jet

    if kind == "divergence":
        div = linearized_weyl_divergence_from_jet(first[3])
        return np.einsum("nijb,nij,nb->n", div, second[0], normals)
    lin = linearized_weyl_from_jet(first[0], first[1], first[2])
    return np.einsum("naijb,nijb,na->n", lin, second[1], normals)


def _pieces(kind: str, weyl: np.ndarray, jet, gamma: float, degree: int) -> tuple[float, float]:
    """``(gamma^4 * KK, rest)`` on the sphere of radius ``gamma``."""
    rule = s3_product_rule(degree)
    pts = gamma * rule.nodes
    k_jet = _k_field(weyl).jet(pts, 3)
    a_jet = jet.taylor_field(4).jet(pts, 3)
    measure = rule.weights * gamma**3
    kk = float(measure @ _pairing(kind, k_jet, k_jet, rule.nodes))
    rest = (_pairing(kind, k_jet, a_jet, rule.nodes) + _pairing(kind, a_jet, k_jet, rule.nodes)
            + _pairing(kind, a_jet, a_jet, rule.nodes))
    return kk * gamma**4, float(measure @ rest)


def expected_order_one(w, jet) -> float:
    """``(pi^2/6) W^kijl d_k d_l A_ij(0)``."""
    weyl = tc.as_weyl(w).tensor
    return math.pi**2 / 6.0 * float(np.einsum("kijl,ijkl->", weyl, jet.second))


def _boundary(kind: str, jet, w, gamma: float, degree: int) -> BoundaryIntegralReport:
    weyl = tc.as_weyl(w).tensor
    gamma = _check_radius(jet, gamma)
    lead, rest = _pieces(kind, weyl, jet, gamma, degree)
    lead_fine, rest_fine = _pieces(kind, weyl, jet, gamma, degree + 4)
    err = abs(lead_fine - lead) * gamma**-4 + abs(rest_fine - rest)
    return BoundaryIntegralReport(kind, gamma, lead, rest, rest - expected_order_one(weyl, jet), err)


def divergence_boundary_integral(jet, w, gamma: float, degree: int = BOUNDARY_DEGREE) -> BoundaryIntegralReport:
    """``int_{|x|=gamma} d^alpha W'_{alpha i j beta}(F) F^ij nu^beta`` with ``F = K + A``."""
    return _boundary("divergence", jet, w, gamma, degree)


def nondivergence_boundary_integral(jet, w, gamma: float, degree: int = BOUNDARY_DEGREE) -> BoundaryIntegralReport:
    """``int_{|x|=gamma} W'_{eta i j beta}(F) d^beta F^ij nu^eta`` with ``F = K + A``."""
    return _boundary("nondivergence", jet, w, gamma, degree)


@dataclass(frozen=True)
class GammaSweepFit:
    """Least-squares fit ``order_one(gamma) = intercept + slope * gamma^2``."""

    kind: str
    gammas: tuple[float, ...]
    order_one: tuple[float, ...]
    intercept: float
    slope: float
    r_squared: float
    expected: float

    @property
    def intercept_error(self) -> float:
        return abs(self.intercept - self.expected)


def gamma_sweep(jet, w, gammas=(0.02, 0.04, 0.08), kind: str = "divergence") -> GammaSweepFit:
    if kind not in ("divergence", "nondivergence"):
        raise DomainError(f"unknown boundary integral {kind!r}")
    gammas = tuple(float(g) for g in gammas)
    if len(gammas) < 3:
        raise DomainError("a sweep needs at least three radii")
    reports = [_boundary(kind, jet, w, g, BOUNDARY_DEGREE) for g in gammas]
    x = np.array(gammas) ** 2
    y = np.array([r.order_one for r in reports])
    design = np.stack([np.ones_like(x), x], axis=1)
    (intercept, slope), *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ np.array([intercept, slope])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - fitted) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return GammaSweepFit(kind, gammas, tuple(float(v) for v in y), float(intercept), float(slope), r2,
                         expected_order_one(w, jet))


# ---------------------------------------------------------------------------
# C2 - C1


@dataclass(frozen=True)
class CoefficientGap:
    boundary: float
    scaling: float
    closed_form: float
    c1: float
    c2: float


def exterior_energy_coefficient(w, degree: int = BOUNDARY_DEGREE) -> float:
    """``lim gamma^4 int_{|x|>gamma} |W'(K)|^2 / 2``.

    ``W'(K)`` is homogeneous of degree ``-4``, so the exterior integral is
    ``gamma^-4 / 4`` times its sphere integral.
    """
    weyl = tc.as_weyl(w).tensor
    rule = s3_product_rule(degree)
    from .chart_geometry import linearized_weyl_from_jet

    k_jet = _k_field(weyl).jet(rule.nodes, 2)
    lin = linearized_weyl_from_jet(*k_jet)
    sphere = float(rule.weights @ np.einsum("naijb,naijb->n", lin, lin))
    return sphere / 8.0


def c2_minus_c1(w, rtol: float = 1e-9) -> CoefficientGap:
    """``C2 - C1`` from the boundary integrals and from the exterior energy scaling.

    Raises :class:`ConsistencyError` if the two disagree beyond ``rtol * |W|^2``.
    """
    data = tc.as_weyl(w)
    zero = _ZeroJet()
    c1 = _pieces("divergence", data.tensor, zero, 1.0, BOUNDARY_DEGREE)[0]
    c2 = _pieces("nondivergence", data.tensor, zero, 1.0, BOUNDARY_DEGREE)[0]
    boundary = c2 - c1
    scaling = exterior_energy_coefficient(data)
    norm = data.norm_sq
    if abs(boundary - scaling) > rtol * max(norm, 1e-300):
        raise ConsistencyError(f"C2 - C1 disagrees: boundary {boundary!r} vs scaling {scaling!r}")
    return CoefficientGap(boundary, scaling, math.pi**2 / 4.0 * norm, c1, c2)


class _ZeroJet:
    """Stand-in for a vanishing correction, used when only ``K`` matters."""

    collar_radius = math.inf
    truncation_bound = 0.0
    second = np.zeros((4,) * 4)

    @staticmethod
    def taylor_field(order: int = 4):
        from .fields import ConstantField

        return ConstantField(np.zeros((4, 4)))
