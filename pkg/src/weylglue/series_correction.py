"""The singular correction tensor on S^1_t x S^3 and on its quotients.

Near the gluing point ``-e4`` the correction is a tower of dilated (and, on
quotients, rotated) copies of the Euclidean TT tensor

    h(x) = -(1/3) W_kijl (x + e4)^k (x + e4)^l / |x + e4|^4,

gauged by Lie derivatives so that the tower converges and its regular part
``A`` vanishes to first order at the gluing point.  Everything here is
expressed through the raw quadratic ``K(v) = W_mijn v^m v^n / |v|^4`` which is
homogeneous of degree -2 and even.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import tensor_core as tc
from .errors import (
    ConfigurationError,
    DivergenceError,
    DomainError,
    NearFixedPointWarning,
    PoleError,
)
from .fields import (
    BandCutoff,
    PolynomialField,
    RadialCutoff,
    SingularQuadraticField,
    TensorField,
    radial_scalar_jet,
)

E4 = tc.E4
_IDX = 3  # array index of the distinguished direction e4

COEFF_TOL = 1e-12
FIELD_TOL = 1e-10


# ---------------------------------------------------------------------------
# coefficient series


@dataclass(frozen=True)
class SeriesValue:
    """A truncated positive series: partial sum, rigorous tail bound, term count."""

    value: float
    bound: float
    terms: int

    def __float__(self) -> float:
        return self.value


def _check_t(t: float) -> float:
    t = float(t)
    if not t > 1.0:
        raise DivergenceError(f"the dilation factor must exceed 1 (got t = {t})")
    return t


def _geometric_sum(term: Callable[[np.ndarray], np.ndarray], ratio: float, tol: float,
                   block: int = 256, max_terms: int = 10_000_000) -> SeriesValue:
    """Sum ``term(n)`` for ``n = 1, 2, ...`` whose terms eventually decay at least like ``ratio^n``.

    Stops once the next term is below ``tol``; the bound is ``next / (1 - ratio)``.
    """
    total = 0.0
    start = 1
    parts: list[float] = []
    while start <= max_terms:
        n = np.arange(start, start + block, dtype=float)
        vals = term(n)
        small = np.nonzero(np.abs(vals) < tol)[0]
        if small.size:
            # first index whose term is small and stays geometrically small
            stop = int(small[0])
            parts.append(math.fsum(vals[:stop]))
            nxt = abs(float(vals[stop]))
            total = math.fsum(parts)
            return SeriesValue(total, nxt / (1.0 - ratio), start + stop - 1)
        parts.append(math.fsum(vals))
        start += block
    raise DivergenceError("series did not reach the truncation tolerance")


def _decay_ratio(t: float, power: float) -> float:
    return t**-power


def tower_coefficient(t: float, order: int, tol: float = COEFF_TOL) -> SeriesValue:
    """``sum_{n != 0} t^{m n} / (1 - t^n)^{m+2}`` over both dilation directions, ``m = order``.

    This is the factor multiplying the m-th derivative of ``K`` at ``e4`` in the
    m-th derivative of the dilation tower at the gluing point.  Written with
    ``u = t^-n`` each summand is ``((-1)^m u^2 + u^m) / (1 - u)^{m+2}``.
    """
    t = _check_t(t)
    logt = math.log(t)
    sign = (-1.0) ** order
    lowest = min(2, order) if order > 0 else 0

    def term(n):
        u = np.exp(-n * logt)
        one_minus = -np.expm1(-n * logt)
        return (sign * u**2 + u**order) / one_minus ** (order + 2)

    ratio = _decay_ratio(t, max(lowest, 1))
    return _geometric_sum(term, ratio, tol)


def coeff_c0(t: float, tol: float = COEFF_TOL) -> SeriesValue:
    """``C0(t) = sum_{n>0} [ (1 - t^n)^-2 + (1 - t^-n)^-2 - 1 ] = sum 2 t^n / (t^n - 1)^2``."""
    t = _check_t(t)
    logt = math.log(t)
    return _geometric_sum(
        lambda n: 2.0 * np.exp(-n * logt) / np.expm1(-n * logt) ** 2, 1.0 / t, tol)


def coeff_c1(t: float, tol: float = COEFF_TOL) -> SeriesValue:
    """``C1(t) = sum_{n>0} [ t^n/(1 - t^n)^3 + t^-n/(1 - t^-n)^3 ] = sum t^n / (t^n - 1)^2``."""
    t = _check_t(t)
    logt = math.log(t)
    return _geometric_sum(
        lambda n: np.exp(-n * logt) / np.expm1(-n * logt) ** 2, 1.0 / t, tol)


def coeff_c2(t: float, tol: float = COEFF_TOL) -> SeriesValue:
    """``C2(t) = 2 sum_{n>0} t^{2n} / (1 - t^n)^4``."""
    t = _check_t(t)
    logt = math.log(t)
    return _geometric_sum(
        lambda n: 2.0 * np.exp(-2.0 * n * logt) / np.expm1(-n * logt) ** 4, t**-2, tol)


def c2_asymptotic(t: float) -> float:
    """Leading behaviour ``pi^4 / (45 (t - 1)^4)`` of C2 as ``t -> 1+``."""
    t = _check_t(t)
    return math.pi**4 / (45.0 * (t - 1.0) ** 4)


# ---------------------------------------------------------------------------
# the Euclidean singular tensor


def _raw_k(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    r2 = np.sum(v * v, axis=-1)
    return np.einsum("mijn,km,kn->kij", w, v, v) / (r2**2)[:, None, None]


def singular_h(x, w) -> np.ndarray:
    """``h(x) = -(1/3) W_kijl (x+e4)^k (x+e4)^l / |x+e4|^4`` (vectorized over leading axis)."""
    weyl = tc.as_weyl(w).tensor
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    u = pts + E4
    if np.any(np.linalg.norm(u, axis=-1) <= 1e-12):
        raise PoleError("h evaluated at its pole -e4")
    out = -_raw_k(weyl, u) / 3.0
    return out[0] if x.ndim == 1 else out


def singular_h_field(w) -> SingularQuadraticField:
    return SingularQuadraticField(tc.as_weyl(w).tensor, center=-E4, coefficient=-1.0 / 3.0)


# ---------------------------------------------------------------------------
# parameters and gauge one-forms


@dataclass(frozen=True)
class CylinderParams:
    t: float
    truncation_tol: float = FIELD_TOL

    def __post_init__(self):
        _check_t(self.t)
        if not (0.0 < self.truncation_tol <= 1e-6):
            raise ValueError("truncation_tol must lie in (0, 1e-6]")

    @property
    def collar_radius(self) -> float:
        """Radius around ``-e4`` where the local tower formula is used."""
        return 0.25 * self.t**-0.5

    @property
    def taylor_radius(self) -> float:
        """Radius where the Taylor jet of the regular part is trusted.

        The nearest poles of the tower sit at distance ``1 - 1/t`` from ``-e4``;
        half of that keeps the dropped Taylor terms geometrically small.
        """
        return min(self.collar_radius, 0.5 * (1.0 - 1.0 / self.t))

    def eta0(self) -> RadialCutoff:
        return RadialCutoff(self.t ** (-1.0 / 8.0), self.t ** (-3.0 / 8.0), logarithmic=True)

    def eta1(self) -> BandCutoff:
        t = self.t
        return BandCutoff(RadialCutoff(t ** (-3.0 / 8.0), t ** (-1.0 / 8.0), logarithmic=True),
                          RadialCutoff(t ** (3.0 / 8.0), t ** (1.0 / 8.0), logarithmic=True))


@dataclass(frozen=True)
class PolynomialOneForm:
    """``omega_i(y) = cutoff(|y|) * P_i(y - center)`` with ``P`` of degree at most three.

    ``linear[i, k]``, ``quadratic[i, k, l]`` and ``cubic[i, s, t, u]`` are the
    coefficients of the monomials in ``u = y - center``.
    """

    linear: np.ndarray
    quadratic: np.ndarray
    cubic: np.ndarray
    center: np.ndarray
    cutoff: object | None = None

    def _poly(self, y):
        u = np.atleast_2d(y) - self.center
        lin, quad, cub = self.linear, self.quadratic, self.cubic
        val = (u @ lin.T + np.einsum("ikl,nk,nl->ni", quad, u, u)
               + np.einsum("istu,ns,nt,nu->ni", cub, u, u, u))
        sym_cub = cub + np.einsum("itsu->istu", cub) + np.einsum("iuts->istu", cub)
        grad = (lin[None] + np.einsum("ijl,nl->nij", quad, u) + np.einsum("ilj,nl->nij", quad, u)
                + np.einsum("ijtu,nt,nu->nij", sym_cub, u, u))
        return val, grad  # grad[n, i, j] = d_j P_i

    def value(self, y) -> np.ndarray:
        val, _ = self._poly(y)
        if self.cutoff is None:
            return val
        return self.cutoff(np.linalg.norm(np.atleast_2d(y), axis=-1))[:, None] * val

    def derivative(self, y) -> np.ndarray:
        """``[n, i, j] = d_j omega_i``."""
        y = np.atleast_2d(y)
        val, grad = self._poly(y)
        if self.cutoff is None:
            return grad
        eta, deta = radial_scalar_jet(self.cutoff, y, 1)
        return eta[:, None, None] * grad + np.einsum("ni,nj->nij", val, deta)

    def lie_derivative(self, y) -> np.ndarray:
        """``(L_X delta)_ij = d_i omega_j + d_j omega_i`` for the dual field ``X``."""
        d = self.derivative(y)
        return d + np.swapaxes(d, 1, 2)


def _zero_form_parts():
    return np.zeros((4, 4)), np.zeros((4, 4, 4)), np.zeros((4, 4, 4, 4))


@dataclass(frozen=True)
class GaugeForms:
    omega0: PolynomialOneForm
    omega1: PolynomialOneForm
    omega2: PolynomialOneForm | None = None

    def lie_total(self, y) -> np.ndarray:
        out = self.omega0.lie_derivative(y) + self.omega1.lie_derivative(y)
        if self.omega2 is not None:
            out = out + self.omega2.lie_derivative(y)
        return out


def cylinder_gauge_forms(w, params: CylinderParams, x_gauge: np.ndarray | None = None) -> GaugeForms:
    """The one-forms removing the divergent tail and fixing the 1-jet at ``-e4``.

    With ``x_gauge`` (the gauge array of the hessian decomposition) the third
    form projecting the hessian to curvature type is included.
    """
    weyl = tc.as_weyl(w).tensor
    c0 = coeff_c0(params.t).value
    c1 = coeff_c1(params.t).value
    w4ik4 = weyl[_IDX, :, :, _IDX]
    lin0, quad0, cub0 = _zero_form_parts()
    lin0 = w4ik4 / 6.0
    omega0 = PolynomialOneForm(lin0, quad0, cub0, np.zeros(4), params.eta0())

    lin1 = 0.5 * c0 * w4ik4 / 3.0
    quad1 = (np.einsum("kil->ikl", weyl[:, :, :, _IDX]) + np.einsum("ilk->ikl", weyl[_IDX])
             - 2.0 * np.einsum("ik,l->ikl", w4ik4, E4)
             + np.einsum("i,kl->ikl", E4, w4ik4))
    quad1 = c1 * quad1 / 3.0
    omega1 = PolynomialOneForm(lin1, quad1, np.zeros((4, 4, 4, 4)), -E4, params.eta1())

    omega2 = None
    if x_gauge is not None:
        cub2 = -np.asarray(x_gauge, dtype=float) / 6.0
        omega2 = PolynomialOneForm(np.zeros((4, 4)), np.zeros((4, 4, 4)), cub2, -E4, params.eta1())
    return GaugeForms(omega0, omega1, omega2)


def gauged_xi(x, w, params: CylinderParams, forms: GaugeForms | None = None) -> np.ndarray:
    """``xi = h + L_{X0} delta + L_{X1} delta`` (plus ``L_{X2} delta`` when present)."""
    forms = forms or cylinder_gauge_forms(w, params)
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    out = singular_h(pts, w) + forms.lie_total(pts)
    return out[0] if x.ndim == 1 else out


# ---------------------------------------------------------------------------
# dilation tower near -e4


def _tower_terms(weyl, y, logt, ns, sign):
    """``K(t^{sign n} y + e4)`` for the given ``n`` values: array ``[len(ns), N, 4, 4]``."""
    scales = np.exp(sign * ns * logt)
    v = scales[:, None, None] * y[None, :, :] + E4
    flat = v.reshape(-1, 4)
    return _raw_k(weyl, flat).reshape(len(ns), y.shape[0], 4, 4)


def _tower_sum(weyl, y, logt, sign, subtract, tol, min_terms, block=128):
    """Sum the one-sided tower until the sup-norm of a term drops below ``tol``.

    Returns ``(sum, bound, terms)``; the tail is bounded geometrically with the
    ratio of the last two term norms (capped by the asymptotic ratio).
    """
    total = np.zeros((y.shape[0], 4, 4))
    start = 1
    prev_norm = None
    asymptotic = math.exp(-(2.0 if sign > 0 else 1.0) * logt)
    while True:
        ns = np.arange(start, start + block, dtype=float)
        terms = _tower_terms(weyl, y, logt, ns, sign)
        if subtract is not None:
            terms = terms - subtract
        norms = np.max(np.abs(terms), axis=(1, 2, 3))
        for k in range(len(ns)):
            n = start + k
            if n > min_terms and norms[k] < tol:
                total = total + np.sum(terms[:k], axis=0)
                ratio = asymptotic
                if prev_norm is not None and prev_norm > 0:
                    ratio = max(ratio, min(norms[k] / prev_norm, 0.999))
                return total, norms[k] / (1.0 - ratio), n - 1
            prev_norm = norms[k]
        total = total + np.sum(terms, axis=0)
        start += block
        if start > 5_000_000:
            raise DivergenceError("dilation tower did not converge")


def _check_collar(y: np.ndarray, params: CylinderParams) -> None:
    dist = np.linalg.norm(y + E4, axis=-1)
    if np.any(dist >= params.collar_radius):
        raise DomainError(
            f"point outside the Euclidean collar |y + e4| < {params.collar_radius:.4g}")


@dataclass(frozen=True)
class TowerValue:
    value: np.ndarray
    bound: float
    terms: tuple[int, int]


def _regular_part_cylinder(y, weyl, params: CylinderParams, min_terms: int = 0) -> TowerValue:
    t = params.t
    logt = math.log(t)
    u = y + E4
    c0 = coeff_c0(t).value
    c1 = coeff_c1(t).value
    w4ij4 = weyl[_IDX, :, :, _IDX]
    tol = params.truncation_tol
    pos, pos_bound, pos_n = _tower_sum(weyl, y, logt, +1, None, tol, min_terms)
    neg, neg_bound, neg_n = _tower_sum(weyl, y, logt, -1, w4ij4, tol, min_terms)
    gauge = c0 * w4ij4 + c1 * (
        np.einsum("kij,nk->nij", weyl[:, :, :, _IDX] + weyl[_IDX].transpose(2, 0, 1), u)
        - 4.0 * np.einsum("ij,n->nij", w4ij4, u[:, _IDX])
    )
    value = -(pos + neg) / 3.0 + gauge / 3.0
    bound = (pos_bound + neg_bound) / 3.0 + 2.0 * tol
    return TowerValue(value, bound, (pos_n, neg_n))


def tbar_cylinder(y, w, params: CylinderParams, min_terms: int = 0) -> tuple[np.ndarray, float]:
    """The periodic correction near ``-e4``: ``-(1/3) K(y + e4) + Abar(y)``.

    Returns the value and the truncation bound of the two dilation tails.
    """
    weyl = tc.as_weyl(w).tensor
    y_arr = np.asarray(y, dtype=float)
    pts = np.atleast_2d(y_arr)
    _check_collar(pts, params)
    reg = _regular_part_cylinder(pts, weyl, params, min_terms)
    value = -_raw_k(weyl, pts + E4) / 3.0 + reg.value
    return (value[0] if y_arr.ndim == 1 else value), reg.bound


def naive_partial_sums(y, w, t: float, n_terms: int, guard: bool = True) -> np.ndarray:
    """Partial sums of the ungauged pullback tower ``sum_{n != 0} h(t^n y)``.

    The negative-dilation tail tends to ``W_4ij4`` per term so the partial sums
    grow linearly.  With ``guard`` the growth is detected and reported as a
    divergence error instead of returning the partial sums.
    """
    t = _check_t(t)
    weyl = tc.as_weyl(w).tensor
    pts = np.atleast_2d(np.asarray(y, dtype=float))
    logt = math.log(t)
    ns = np.arange(1, n_terms + 1, dtype=float)
    pos = _tower_terms(weyl, pts, logt, ns, +1)
    neg = _tower_terms(weyl, pts, logt, ns, -1)
    sums = -np.cumsum(pos + neg, axis=0) / 3.0
    if guard:
        increments = np.max(np.abs(neg[-8:]), axis=(1, 2, 3))
        if np.min(increments) > 1e-3 * np.max(np.abs(weyl)):
            raise DivergenceError(
                "ungauged pullback series diverges: terms approach -W_4ij4/3 instead of 0")
    return sums[:, 0] if np.asarray(y).ndim == 1 else sums


# ---------------------------------------------------------------------------
# global periodic evaluation (for the dilation equivariance check)


def _conformal_factor(x, t):
    """``exp(2 phi)``: ``t^{-2n}`` near ``|x| = t^n`` and ``|x|^-2`` in between."""
    r = np.log(np.linalg.norm(x, axis=-1))
    big_r = math.log(t)
    n = np.round(r / big_r)
    rt = r - n * big_r
    blend = 1.0 - RadialCutoff(big_r / 100.0, big_r / 10.0)(np.abs(rt))
    return np.exp(-2.0 * r) * (blend * np.exp(2.0 * rt) + 1.0 - blend)


def tbar_global(y, w, params: CylinderParams, n_max: int | None = None) -> np.ndarray:
    """``sum_n psi_n^*(exp(2 phi) xi)`` evaluated by brute force at arbitrary ``y != 0``.

    Terms decay geometrically in both directions; ``n_max`` defaults to the
    depth at which ``t^{-|n|}`` drops below the truncation tolerance.
    """
    t = params.t
    forms = cylinder_gauge_forms(w, params)
    pts = np.atleast_2d(np.asarray(y, dtype=float))
    if n_max is None:
        n_max = int(math.ceil(math.log(1.0 / params.truncation_tol) / math.log(t))) + 2
    total = np.zeros((pts.shape[0], 4, 4))
    for n in range(-n_max, n_max + 1):
        x = t**n * pts
        if np.any(np.linalg.norm(x + E4, axis=-1) < 1e-12):
            raise PoleError("tower evaluated at a pole")
        factor = _conformal_factor(x, t) * t ** (2 * n)
        total = total + factor[:, None, None] * gauged_xi(x, w, params, forms)
    return total[0] if np.asarray(y).ndim == 1 else total


# ---------------------------------------------------------------------------
# jets at the gluing point


def k_derivatives_at(weyl: np.ndarray, points: np.ndarray, order: int) -> list[np.ndarray]:
    """Jets of the raw quadratic ``K`` (coefficient 1) at the given points."""
    field_ = SingularQuadraticField(weyl, coefficient=1.0)
    return field_.analytic_jet(np.atleast_2d(points), order)


def abar_hessian_formula(w, c2: float) -> np.ndarray:
    """Closed-form hessian ``d_k d_l Abar_ij`` at the gluing point, in ``[k, i, j, l]`` layout."""
    weyl = tc.as_weyl(w).tensor
    d4 = E4
    wl_ij4 = weyl[:, :, :, _IDX]  # W_{l i j 4} indexed [l, i, j]
    w4ijl = weyl[_IDX]  # W_{4 i j l} indexed [i, j, l]
    w4ij4 = weyl[_IDX, :, :, _IDX]
    pair = wl_ij4 + np.einsum("ijl->lij", w4ijl)  # (W_lij4 + W_4ijl)[l, i, j]
    bracket = (
        weyl + np.einsum("lijk->kijl", weyl)
        - 4.0 * np.einsum("k,lij->kijl", d4, pair)
        - 4.0 * np.einsum("l,kij->kijl", d4, pair)
        - 4.0 * np.einsum("kl,ij->kijl", np.eye(4), w4ij4)
        + 24.0 * np.einsum("k,l,ij->kijl", d4, d4, w4ij4)
    )
    return -c2 * bracket / 3.0


def interaction_bracket(w) -> float:
    """``W^kijl (W_kijl + W_lijk) - 4 W^4ijl(...) - 4 W^kij4(...) + 24 W^4ij4 W_4ij4``."""
    weyl = tc.as_weyl(w).tensor
    return float(np.einsum("kijl,kijl->", weyl, abar_hessian_formula(weyl, -3.0)))


@dataclass(frozen=True)
class CorrectionJet:
    """Taylor data of the regular part ``A`` of the correction at the gluing point.

    ``hessian`` is ``T_kijl = (1/2) d_k d_l A_ij(0)`` (curvature type after the
    final gauge); ``abar_hessian`` is the raw ``d_k d_l Abar_ij`` before it.
    ``third`` and ``fourth`` hold ``d^3 A_ij`` and ``d^4 A_ij`` as ``[i, j, a, b, ...]``.
    ``evaluator`` returns the regular part ``Abar(y)`` near ``-e4``.
    """

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    abar_hessian: np.ndarray
    x_gauge: np.ndarray
    third: np.ndarray
    fourth: np.ndarray
    evaluator: Callable[[np.ndarray], np.ndarray]
    truncation_bound: float
    t: float
    c2: float
    remainder_bound: float = 0.0
    notes: tuple[str, ...] = ()
    collar_radius: float = math.inf

    @property
    def second(self) -> np.ndarray:
        """``d_k d_l A_ij(0)`` as ``[i, j, k, l]``."""
        return 2.0 * np.einsum("kijl->ijkl", self.hessian)

    def taylor_field(self, order: int = 4) -> PolynomialField:
        coeffs = [self.value, np.einsum("ijk->ijk", self.gradient), self.second, self.third, self.fourth]
        return PolynomialField(coeffs[: order + 1])

    def scaled(self, factor: float) -> "CorrectionJet":
        evaluator = self.evaluator
        return replace(
            self, value=factor * self.value, gradient=factor * self.gradient,
            hessian=factor * self.hessian, abar_hessian=factor * self.abar_hessian,
            x_gauge=factor * self.x_gauge, third=factor * self.third, fourth=factor * self.fourth,
            evaluator=lambda y: factor * evaluator(y),
            truncation_bound=abs(factor) * self.truncation_bound,
            remainder_bound=abs(factor) * self.remainder_bound)

    def rotated(self, frame) -> "CorrectionJet":
        """The jet seen in coordinates ``x' = O^T x`` (every slot transformed by ``O``)."""
        rot = tc.FrameRotation(np.asarray(getattr(frame, "matrix", frame), dtype=float)).matrix

        def turn(arr):
            out = arr
            for axis in range(arr.ndim):
                out = np.moveaxis(np.tensordot(out, rot, axes=([axis], [0])), -1, axis)
            return out

        evaluator = self.evaluator

        def rotated_eval(y):
            pts = np.atleast_2d(np.asarray(y, dtype=float))
            vals = evaluator((pts + E4) @ rot.T - E4)
            return np.einsum("ai,nab,bj->nij", rot, vals, rot)

        return replace(
            self, value=turn(self.value), gradient=turn(self.gradient), hessian=turn(self.hessian),
            abar_hessian=turn(self.abar_hessian), x_gauge=turn(self.x_gauge),
            third=turn(self.third), fourth=turn(self.fourth), evaluator=rotated_eval)

    @classmethod
    def from_derivatives(cls, second, third=None, fourth=None, t: float = 2.0,
                         collar_radius: float = math.inf) -> "CorrectionJet":
        """A synthetic jet with vanishing value and gradient and the given higher derivatives.

        ``second[i, j, k, l] = d_k d_l A_ij(0)``; no projection is applied, so the
        hessian field need not be of curvature type.
        """
        second = np.asarray(second, dtype=float)
        third = np.zeros((4,) * 5) if third is None else np.asarray(third, dtype=float)
        fourth = np.zeros((4,) * 6) if fourth is None else np.asarray(fourth, dtype=float)
        hess = 0.5 * np.einsum("ijkl->kijl", second)
        poly = PolynomialField([np.zeros((4, 4)), np.zeros((4, 4, 4)), second, third, fourth],
                               center=-E4)
        return cls(np.zeros((4, 4)), np.zeros((4, 4, 4)), hess, 2.0 * hess, np.zeros((4,) * 4),
                   third, fourth, poly.value, 0.0, float(t), 0.0, collar_radius=collar_radius)

    @classmethod
    def zero(cls, t: float = 2.0) -> "CorrectionJet":
        return cls.from_derivatives(np.zeros((4,) * 4), t=t)


def _project_hessian(abar_hess: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dec = tc.decompose_pairwise(abar_hess)
    return 0.5 * dec.t_part, dec.x_gauge


def correction_jet_cylinder(w, params: CylinderParams) -> CorrectionJet:
    """Regular-part jet of the cylinder correction at the gluing point.

    Value and gradient vanish identically by the choice of ``C0`` and ``C1``;
    the hessian is the closed ``C2`` formula, projected to curvature type by
    the final gauge.  Third and fourth derivatives come from the same tower
    coefficients applied to the derivatives of ``K`` at ``e4``.
    """
    weyl = tc.as_weyl(w).tensor
    t = params.t
    c2v = coeff_c2(t, min(COEFF_TOL, params.truncation_tol))
    abar_hess = abar_hessian_formula(weyl, c2v.value)
    hessian, x_gauge = _project_hessian(abar_hess)
    jets_e4 = k_derivatives_at(weyl, E4[None, :], 4)
    s3 = tower_coefficient(t, 3)
    s4 = tower_coefficient(t, 4)
    third = -s3.value * jets_e4[3][0] / 3.0
    fourth = -s4.value * jets_e4[4][0] / 3.0

    def evaluator(y, _weyl=weyl, _params=params):
        pts = np.atleast_2d(np.asarray(y, dtype=float))
        _check_collar(pts, _params)
        return _regular_part_cylinder(pts, _weyl, _params).value

    bound = max(c2v.bound, s3.bound, s4.bound)
    return CorrectionJet(
        value=np.zeros((4, 4)), gradient=np.zeros((4, 4, 4)), hessian=hessian,
        abar_hessian=abar_hess, x_gauge=x_gauge, third=third, fourth=fourth,
        evaluator=evaluator, truncation_bound=bound, t=t, c2=c2v.value,
        collar_radius=params.taylor_radius)


def interaction_contraction(w, jet: CorrectionJet) -> float:
    """``W^kijl d_k d_l A_ij(0)``."""
    weyl = tc.as_weyl(w).tensor
    return float(2.0 * np.einsum("kijl,kijl->", weyl, jet.hessian))


# ---------------------------------------------------------------------------
# quotient models


@dataclass(frozen=True)
class QuotientElement:
    scale: float
    rotation: np.ndarray

    @property
    def is_identity(self) -> bool:
        return abs(self.scale - 1.0) < 1e-14 and np.allclose(self.rotation, np.eye(4), atol=1e-14)

    @property
    def tau(self) -> float:
        return float(self.rotation[_IDX, _IDX])


@dataclass(frozen=True)
class QuotientModel:
    """Orbit data ``t^n s_a O_a`` of a quotient of the cylinder, as Moebius maps."""

    t: float
    elements: tuple[QuotientElement, ...]

    def __post_init__(self):
        _check_t(self.t)
        if not self.elements:
            raise ConfigurationError("a quotient model needs at least the identity element")
        lo, hi = self.t**-0.5, self.t**0.5
        for el in self.elements:
            if not (lo < el.scale <= hi * (1 + 1e-12)):
                raise ConfigurationError(
                    f"scale {el.scale} outside the fundamental range ({lo:.6g}, {hi:.6g}]")
            tc.FrameRotation(el.rotation)
        scales = [el.scale for el in self.elements]
        if any(b < a for a, b in zip(scales, scales[1:])):
            raise ConfigurationError("element scales must be listed in non-decreasing order")
        ids = sum(el.is_identity for el in self.elements)
        if ids != 1:
            raise ConfigurationError(f"identity element must appear exactly once (found {ids})")

    @classmethod
    def cylinder(cls, t: float) -> "QuotientModel":
        return cls(t, (QuotientElement(1.0, np.eye(4)),))

    @classmethod
    def from_pairs(cls, t: float, pairs: Sequence[tuple[float, np.ndarray]]) -> "QuotientModel":
        elems = sorted((QuotientElement(float(s), np.asarray(o, dtype=float)) for s, o in pairs),
                       key=lambda e: e.scale)
        return cls(float(t), tuple(elems))

    @classmethod
    def parse(cls, text: str, t: float | None = None) -> "QuotientModel":
        """Read the one-element-per-line format ``s=<scale> o=<rotation entries>``.

        Rotation entries are 16 numbers (a 4x4 matrix, row-major) or 9 numbers
        (a rotation of the first three axes fixing ``e4``).  A line ``t=<value>``
        sets the dilation factor; ``#`` starts a comment.
        """
        pairs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields_ = dict(re.findall(r"(\w+)\s*=\s*([^=]*?)(?=\s+\w+\s*=|$)", line))
            if set(fields_) == {"t"}:
                t = float(fields_["t"])
                continue
            if set(fields_) != {"s", "o"}:
                raise ConfigurationError(f"line {lineno}: expected 's=' and 'o=' fields")
            nums = [float(v) for v in re.split(r"[,\s]+", fields_["o"].strip()) if v]
            if len(nums) == 16:
                rot = np.array(nums).reshape(4, 4)
            elif len(nums) == 9:
                rot = np.eye(4)
                rot[:3, :3] = np.array(nums).reshape(3, 3)
            else:
                raise ConfigurationError(f"line {lineno}: rotation needs 9 or 16 numbers, got {len(nums)}")
            pairs.append((float(fields_["s"]), rot))
        if t is None:
            raise ConfigurationError("quotient model has no 't=' line and no t was supplied")
        try:
            return cls.from_pairs(t, pairs)
        except (ValueError, tc.InvalidFrameError) as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path, t: float | None = None) -> "QuotientModel":
        return cls.parse(Path(path).read_text(encoding="utf-8"), t)

    def at_t(self, t_new: float) -> "QuotientModel":
        """The same group shape at another dilation factor.

        Each scale keeps its exponent ``log s / log t``; rotations are unchanged.
        """
        _check_t(t_new)
        ratio = math.log(t_new) / math.log(self.t)
        return QuotientModel.from_pairs(
            t_new, [(math.exp(math.log(el.scale) * ratio), el.rotation) for el in self.elements])

    def orbit_gap(self) -> float:
        """Smallest cylinder distance from the gluing point to another orbit point."""
        gaps = []
        for el in self.elements:
            if el.is_identity:
                continue
            angle = math.acos(max(-1.0, min(1.0, el.tau)))
            gaps.append(math.hypot(math.log(el.scale), angle))
        return min(gaps) if gaps else math.log(self.t)


def _element_terms(weyl, el: QuotientElement, logt, ns, order, y=None):
    """Derivatives up to ``order`` of ``O^T K(lambda O y + e4) O`` for ``lambda = t^n s``.

    With ``y=None`` they are evaluated at ``-e4``.  Returns a list over orders of
    arrays ``[len(ns), N, i, j, a...]`` with all slots in the original frame.
    """
    rot = el.rotation
    lam = np.exp(ns * logt) * el.scale
    pts = -E4[None, :] if y is None else np.atleast_2d(y)
    v = lam[:, None, None] * np.einsum("ab,nb->na", rot, pts)[None] + E4
    flat = v.reshape(-1, 4)
    jets = k_derivatives_at(weyl, flat, order)
    out = []
    for m, jet in enumerate(jets):
        jet = jet.reshape((len(ns), pts.shape[0]) + jet.shape[1:])
        # pull every slot back with O: T'_{i j a..} = O_{alpha i} O_{beta j} O_{mu a} ... T_{alpha beta mu..}
        arr = jet
        for axis in range(2, 4 + m):
            arr = np.moveaxis(np.tensordot(arr, rot, axes=([axis], [0])), -1, axis)
        scale = lam**m
        out.append(arr * scale.reshape((-1,) + (1,) * (arr.ndim - 1)))
    return out


@dataclass(frozen=True)
class QuotientRemainder:
    """Per-element bound on the hessian contribution of non-identity towers."""

    element: int
    tau: float
    scale: float
    bound: float
    riemann_sum: float
    integral_limit: float


def _tau_integral(tau: float, s: float) -> float:
    """``I(tau, s) = int_0^inf r / (r^2 - 2 tau r / s + s^-2)^2 dr``."""
    val, _ = integrate.quad(lambda r: r / (r * r - 2.0 * tau * r / s + s**-2) ** 2, 0.0, np.inf,
                            limit=200)
    return float(val)


def _element_tower(weyl, el, logt, order, y, subtract_limit, tol, identity: bool):
    """Two-sided sum over ``n`` of element terms (minus the ``n -> -inf`` limit for order 0)."""
    totals = None
    bound = 0.0
    for sign in (+1, -1):
        start = 0 if (sign > 0 and not identity) else 1
        block = 128
        last = None
        while True:
            ns = sign * np.arange(start, start + block, dtype=float)
            terms = _element_terms(weyl, el, logt, ns, order, y)
            if sign < 0 and subtract_limit is not None:
                terms[0] = terms[0] - subtract_limit[None, None]
            norms = np.max(np.abs(np.concatenate([t.reshape(len(ns), -1) for t in terms], axis=1)), axis=1)
            block_sum = [np.sum(t, axis=0) for t in terms]
            small = np.nonzero(norms < tol)[0]
            stop = None
            for k in small:
                if start + k > 2:
                    stop = int(k)
                    break
            if stop is not None:
                block_sum = [np.sum(t[:stop], axis=0) for t in terms]
                ratio = math.exp(-logt)
                bound += float(norms[stop]) / (1.0 - ratio)
                totals = block_sum if totals is None else [a + b for a, b in zip(totals, block_sum)]
                break
            totals = block_sum if totals is None else [a + b for a, b in zip(totals, block_sum)]
            start += block
            if start > 5_000_000:
                raise DivergenceError("quotient tower did not converge")
    return totals, bound


def _quotient_regular_part_data(weyl, model: QuotientModel, tol: float, order: int, y=None):
    """Sum of all towers (identity tower without its ``n = 0`` singular term)."""
    logt = math.log(model.t)
    total = None
    bound = 0.0
    w4 = weyl[_IDX, :, :, _IDX]
    for el in model.elements:
        limit = el.rotation.T @ w4 @ el.rotation
        sums, b = _element_tower(weyl, el, logt, order, y, limit, tol, el.is_identity)
        total = sums if total is None else [a + c for a, c in zip(total, sums)]
        bound += b
    return [-s / 3.0 for s in total], bound / 3.0


def correction_jet_quotient(w, model: QuotientModel, truncation_tol: float = FIELD_TOL
                            ) -> tuple[CorrectionJet, list[QuotientRemainder]]:
    """Regular-part jet of the quotient correction at the gluing point.

    The raw tower sum ``Abar0`` has a nonzero value ``S`` and gradient ``S_k``
    at ``-e4``; the quadratic gauge form built from them removes both, so the
    returned value and gradient are zero.  The hessian is the full tower sum
    (the gauge is at most quadratic, with vanishing Lie-derivative hessian).
    The returned remainder list bounds, per non-identity element, the hessian
    contribution of that element's tower.
    """
    weyl = tc.as_weyl(w).tensor
    t = model.t
    for idx, el in enumerate(model.elements):
        if not el.is_identity and el.tau > 1.0 - 1e-8:
            warnings.warn(
                f"element {idx} nearly fixes the gluing direction (O_44 = {el.tau:.12g}); "
                "its remainder bound blows up", NearFixedPointWarning, stacklevel=2)
    data, bound = _quotient_regular_part_data(weyl, model, truncation_tol, 4)
    s_value, s_grad, abar_hess_ij, third, fourth = (d[0] for d in data)
    abar_hess = np.einsum("ijkl->kijl", abar_hess_ij)
    hessian, x_gauge = _project_hessian(abar_hess)
    # the gauge quadratic is invisible at second order; third/fourth orders pick up
    # only the degree-three projection form, whose Lie derivative is quadratic
    logt = math.log(t)
    remainders = []
    for idx, el in enumerate(model.elements):
        if el.is_identity:
            continue
        depth = int(math.ceil(math.log(1e12) / (2.0 * logt)))
        ns = np.arange(-depth, depth + 1, dtype=float)
        lam = np.exp(ns * logt) * el.scale
        dens = lam**2 / (lam**2 - 2.0 * lam * el.tau + 1.0) ** 2
        hterms = _element_terms(weyl, el, logt, ns, 2)[2]
        actual = float(np.sum(np.max(np.abs(hterms.reshape(len(ns), -1)), axis=1))) / 3.0
        remainders.append(QuotientRemainder(
            element=idx, tau=el.tau, scale=el.scale, bound=actual,
            riemann_sum=float(logt * np.sum(dens) * el.scale**2),
            integral_limit=_tau_integral(el.tau, el.scale) if el.tau < 1.0 - 1e-8 else math.inf))

    def evaluator(y, _weyl=weyl, _model=model, _tol=truncation_tol, _s=s_value, _sg=s_grad):
        pts = np.atleast_2d(np.asarray(y, dtype=float))
        raw = _quotient_regular_part_data(_weyl, _model, _tol, 0, pts)[0][0]
        u = pts + E4
        return raw - _s[None] - np.einsum("ijk,nk->nij", _sg, u)

    c2 = coeff_c2(t).value
    jet = CorrectionJet(
        value=np.zeros((4, 4)), gradient=np.zeros((4, 4, 4)), hessian=hessian,
        abar_hessian=abar_hess, x_gauge=x_gauge, third=third, fourth=fourth,
        evaluator=evaluator, truncation_bound=bound, t=t, c2=c2,
        remainder_bound=float(sum(r.bound for r in remainders)),
        notes=tuple(f"element {r.element}: tau={r.tau:.6g} bound={r.bound:.6g}" for r in remainders),
        collar_radius=min(0.25 * t**-0.5, 0.25 * model.orbit_gap(), 0.5 * (1.0 - 1.0 / t)))
    return jet, remainders
