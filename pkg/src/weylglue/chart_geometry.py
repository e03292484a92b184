"""Differential geometry of metrics written in a coordinate chart of R^4.

Curvature is computed from the 2-jet of the metric (closed form when the metric
field provides it, finite differences otherwise); Bach-type quantities take two
further derivatives of the Weyl tensor on a small stencil around the point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor_core as tc
from ._parallel import chunk_slices, ordered_map
from .errors import AccuracyError, DomainError, SingularMetricError, SymmetryViolationError
from .fields import (
    ConstantField,
    DiffScheme,
    FunctionField,
    PolynomialField,
    RadialCutoff,
    SingularQuadraticField,
    SumField,
    TensorField,
    derivatives_from_grid,
    fd_jet,
    grid_offsets,
    leibniz,
)

__all__ = [
    "ChartRegion",
    "MetricField",
    "CurvaturePoint",
    "DiffScheme",
    "curvature_batch",
    "curvature_at",
    "linearized_weyl_flat",
    "linearized_weyl_divergence_flat",
    "linearized_bach_flat",
    "bach_variation",
    "conformal_bach_transform",
    "NormalChartExpansion",
    "BlowUpProfile",
    "invert_chart",
    "EnergyQuadrature",
    "weyl_energy",
]


# ---------------------------------------------------------------------------
# metric fields


@dataclass(frozen=True)
class ChartRegion:
    """Annulus ``inner <= |x - center| <= outer`` (a ball when ``inner == 0``)."""

    inner: float = 0.0
    outer: float = math.inf
    center: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (0.0 <= self.inner < self.outer):
            raise DomainError(f"invalid region radii {self.inner}, {self.outer}")

    def distance_to_boundary(self, x) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(x) - np.asarray(self.center), axis=-1)
        inner_gap = r - self.inner if self.inner > 0 else np.full_like(r, np.inf)
        return np.minimum(inner_gap, self.outer - r)


class MetricField:
    """A Riemannian metric on a chart region, given as a symmetric-tensor field."""

    def __init__(self, components: TensorField, domain: ChartRegion | None = None,
                 name: str = "metric"):
        self.components = components
        self.domain = domain or ChartRegion()
        self.name = name

    @classmethod
    def flat(cls, domain: ChartRegion | None = None) -> "MetricField":
        return cls(ConstantField(np.eye(4)), domain, "flat")

    @classmethod
    def from_callable(cls, func: Callable[[np.ndarray], np.ndarray],
                      domain: ChartRegion | None = None,
                      first: Callable | None = None, second: Callable | None = None,
                      scheme: DiffScheme | None = None) -> "MetricField":
        """Wrap a vectorized callable, optionally with closed-form derivative callables.

        ``first(x)[n, i, j, a] = d_a g_ij`` and ``second(x)[n, i, j, a, b]``.
        """
        if first is not None and second is not None:
            return cls(_CallableJetField(func, first, second), domain)
        return cls(FunctionField(func, scheme), domain)

    def perturbed(self, perturbation: TensorField, amount: float) -> "MetricField":
        return MetricField(self.components + amount * perturbation, self.domain,
                           f"{self.name}+perturbation")

    def eval(self, x) -> np.ndarray:
        return self.components(x)

    def jet2(self, x: np.ndarray, scheme: DiffScheme | None = None) -> list[np.ndarray]:
        return self.components.jet(np.atleast_2d(x), 2, scheme)

    @property
    def has_analytic_derivatives(self) -> bool:
        return self.components.analytic_order >= 2


class _CallableJetField(TensorField):
    analytic_order = 2

    def __init__(self, func, first, second):
        self._func, self._first, self._second = func, first, second

    def value(self, x):
        return np.asarray(self._func(np.atleast_2d(x)), dtype=float)

    def analytic_jet(self, x, order):
        x = np.atleast_2d(x)
        out = [self.value(x), np.asarray(self._first(x)), np.asarray(self._second(x))]
        return out[: order + 1]


# ---------------------------------------------------------------------------
# curvature from jets


def _inverse_and_check(g: np.ndarray) -> np.ndarray:
    eig = np.linalg.eigvalsh(g)
    if np.any(eig[:, 0] <= 1e-14 * np.maximum(1.0, eig[:, -1])):
        raise SingularMetricError("metric is not positive definite at some evaluation point")
    return np.linalg.inv(g)


def _raise_all(t: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    out = t
    for axis in range(1, t.ndim):
        out = np.moveaxis(_contract_axis(out, g_inv, axis), -1, axis)
    return out


def _contract_axis(t: np.ndarray, g_inv: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(t, axis, -1)
    shape = moved.shape
    return np.matmul(moved.reshape(shape[0], -1, 4), g_inv).reshape(shape)


def batch_weyl(riemann: np.ndarray, g: np.ndarray, g_inv: np.ndarray) -> tuple[np.ndarray, ...]:
    n = riemann.shape[0]
    # Ric_ij = R_kijl g^kl
    ricci = np.matmul(riemann.transpose(0, 2, 3, 1, 4).reshape(n, 16, 16),
                      g_inv.reshape(n, 16, 1)).reshape(n, 4, 4)
    scalar = np.einsum("nij,nij->n", ricci, g_inv)
    # Ric_jk g_il + Ric_il g_jk, antisymmetrized in (i, j)
    mixed = (ricci[:, None, :, :, None] * g[:, :, None, None, :]
             + g[:, None, :, :, None] * ricci[:, :, None, None, :])
    ricci_part = mixed - mixed.transpose(0, 2, 1, 3, 4)
    gg = g[:, None, :, :, None] * g[:, :, None, None, :]
    scalar_part = gg - gg.transpose(0, 2, 1, 3, 4)
    weyl = riemann - 0.5 * ricci_part + (scalar / 6.0)[:, None, None, None, None] * scalar_part
    return weyl, ricci, scalar


def curvature_batch(g: np.ndarray, dg: np.ndarray, d2g: np.ndarray) -> dict[str, np.ndarray]:
    """Curvature quantities at ``N`` points from the metric 2-jet.

    Returns a dict with ``g_inv``, ``christoffel[n, m, i, j] = Gamma^m_ij``,
    ``riemann`` (all indices down), ``ricci``, ``scalar``, ``weyl`` (coordinate
    components), ``weyl_norm_sq`` and ``volume`` (``sqrt det g``).
    """
    g_inv = _inverse_and_check(g)
    # first-kind symbols Gamma_{k,ij} and their derivatives
    first = 0.5 * (np.einsum("njki->nkij", dg) + np.einsum("nikj->nkij", dg) - dg.transpose(0, 3, 1, 2))
    dfirst = 0.5 * (
        np.einsum("njkia->nkija", d2g) + np.einsum("nikja->nkija", d2g) - np.einsum("nijka->nkija", d2g)
    )
    n = g.shape[0]
    gamma = np.matmul(g_inv, first.reshape(n, 4, 16)).reshape(n, 4, 4, 4)
    # d_a g^{mq} = -g^{mp} d_a g_pr g^{rq}, stored [n, a, m, q]
    dg_inv = -np.matmul(np.matmul(g_inv[:, None], dg.transpose(0, 3, 1, 2)), g_inv[:, None])
    dgamma = (np.matmul(dg_inv, first.reshape(n, 1, 4, 16)).reshape(n, 4, 4, 4, 4).transpose(0, 2, 3, 4, 1)
              + np.matmul(g_inv, dfirst.reshape(n, 4, 64)).reshape(n, 4, 4, 4, 4))
    # Gamma^m_ip Gamma^p_jk as [n, m, i, j, k]
    quad = np.matmul(gamma.reshape(n, 16, 4), gamma.reshape(n, 4, 16)).reshape(n, 4, 4, 4, 4)
    # R_{ijk}^m = d_i Gamma^m_jk - d_j Gamma^m_ik + Gamma^m_ip Gamma^p_jk - Gamma^m_jp Gamma^p_ik
    r_up = (
        dgamma.transpose(0, 4, 2, 3, 1)
        - dgamma.transpose(0, 2, 4, 3, 1)
        + quad.transpose(0, 2, 3, 4, 1)
        - quad.transpose(0, 3, 2, 4, 1)
    )
    riemann = np.matmul(r_up.reshape(n, 64, 4), g).reshape(n, 4, 4, 4, 4)
    weyl, ricci, scalar = batch_weyl(riemann, g, g_inv)
    weyl_up = _raise_all(weyl, g_inv)
    norm_sq = np.einsum("nijkl,nijkl->n", weyl, weyl_up)
    volume = np.sqrt(np.linalg.det(g))
    return {
        "g": g,
        "g_inv": g_inv,
        "christoffel": gamma,
        "riemann": riemann,
        "ricci": ricci,
        "scalar": scalar,
        "weyl": weyl,
        "weyl_norm_sq": norm_sq,
        "volume": volume,
    }


def curvature_on_points(metric: MetricField, points: np.ndarray,
                        scheme: DiffScheme | None = None) -> dict[str, np.ndarray]:
    g, dg, d2g = metric.jet2(points, scheme)
    return curvature_batch(g, dg, d2g)


# ---------------------------------------------------------------------------
# pointwise curvature with Bach tensor


@dataclass(frozen=True)
class CurvaturePoint:
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    weyl: tc.WeylData
    weyl_coordinates: np.ndarray
    weyl_norm_sq: float
    bach: np.ndarray | None
    bianchi_residual: float | None
    bach_trace: float | None
    errors: dict = field(default_factory=dict)


def _orthonormal_frame(g: np.ndarray) -> np.ndarray:
    eig, vec = np.linalg.eigh(g)
    return vec @ np.diag(eig**-0.5) @ vec.T


def _weyl_in_frame(weyl: np.ndarray, g: np.ndarray) -> tc.WeylData:
    frame = _orthonormal_frame(g)
    out = weyl
    for axis in range(4):
        out = np.moveaxis(np.tensordot(out, frame, axes=([axis], [0])), -1, axis)
    return tc.WeylData.from_tensor(out, tol=1e-6)


def _stencil_curvature(metric: MetricField, x: np.ndarray, step: float,
                       inner_scheme: DiffScheme | None) -> dict[str, np.ndarray]:
    half = 2
    offsets = grid_offsets(half)
    width = 2 * half + 1
    pts = x[None, :] + step * offsets
    curv = curvature_on_points(metric, pts, inner_scheme)

    def grid(name):
        arr = curv[name]
        return arr.reshape((width,) * 4 + arr.shape[1:])

    weyl_d = derivatives_from_grid(grid("weyl"), half, step, 2, 4)
    gamma_d = derivatives_from_grid(grid("christoffel"), half, step, 1, 4)
    ricci_d = derivatives_from_grid(grid("ricci"), half, step, 1, 4)
    scalar_d = derivatives_from_grid(grid("scalar"), half, step, 1, 4)
    center = tuple([half] * 4)
    g = grid("g")[center]
    g_inv = grid("g_inv")[center]
    w, dw, d2w = weyl_d
    gam, dgam = gamma_d
    ric, dric = ricci_d
    # first covariant derivative V[n, a, b, c, d] = nabla_n W_abcd
    v = (
        np.einsum("abcdn->nabcd", dw)
        - np.einsum("sna,sbcd->nabcd", gam, w)
        - np.einsum("snb,ascd->nabcd", gam, w)
        - np.einsum("snc,absd->nabcd", gam, w)
        - np.einsum("snd,abcs->nabcd", gam, w)
    )
    dv = (
        np.einsum("abcdnm->mnabcd", d2w)
        - np.einsum("snam,sbcd->mnabcd", dgam, w)
        - np.einsum("sna,sbcdm->mnabcd", gam, dw)
        - np.einsum("snbm,ascd->mnabcd", dgam, w)
        - np.einsum("snb,ascdm->mnabcd", gam, dw)
        - np.einsum("sncm,absd->mnabcd", dgam, w)
        - np.einsum("snc,absdm->mnabcd", gam, dw)
        - np.einsum("sndm,abcs->mnabcd", dgam, w)
        - np.einsum("snd,abcsm->mnabcd", gam, dw)
    )
    nnw = (
        dv
        - np.einsum("smn,sabcd->mnabcd", gam, v)
        - np.einsum("sma,nsbcd->mnabcd", gam, v)
        - np.einsum("smb,nascd->mnabcd", gam, v)
        - np.einsum("smc,nabsd->mnabcd", gam, v)
        - np.einsum("smd,nabcs->mnabcd", gam, v)
    )
    ricci_up = g_inv @ ric @ g_inv
    bach = -4.0 * (
        np.einsum("am,bn,mnaijb->ij", g_inv, g_inv, nnw)
        + 0.5 * np.einsum("ab,aijb->ij", ricci_up, w)
    )
    # contracted Bianchi: nabla^i R_ij - (1/2) d_j R
    nabla_ric = (
        np.einsum("ijk->kij", dric)
        - np.einsum("ski,sj->kij", gam, ric)
        - np.einsum("skj,is->kij", gam, ric)
    )
    bianchi = np.einsum("ki,kij->j", g_inv, nabla_ric) - 0.5 * scalar_d[1]
    return {"bach": bach, "bianchi": bianchi, "g_inv": g_inv, "g": g}


def curvature_at(metric: MetricField, x, scheme: DiffScheme | None = None,
                 with_bach: bool = True) -> CurvaturePoint:
    """All curvature quantities of ``metric`` at the point ``x``.

    Second derivatives of the metric come from its closed-form jet when
    available.  The Bach tensor and the contracted Bianchi residual need two
    more derivatives, taken by order-4 central differences on a 5^4 stencil
    with one Richardson level; ``errors`` holds the Richardson differences.
    """
    x = np.asarray(x, dtype=float).reshape(4)
    scheme = scheme or DiffScheme.for_radius(max(1e-3, float(metric.domain.distance_to_boundary(x)[0])
                                                 if np.isfinite(metric.domain.distance_to_boundary(x)[0])
                                                 else 1.0))
    inner_scheme = None if metric.has_analytic_derivatives else DiffScheme(
        step=scheme.step / 4.0, order=scheme.order, richardson_levels=scheme.richardson_levels)
    margin = 2.0 * scheme.step * 2
    if inner_scheme is not None:
        margin += inner_scheme.reach(2)
    if float(metric.domain.distance_to_boundary(x)[0]) < margin:
        raise DomainError("point too close to the boundary of the chart region")
    curv = curvature_on_points(metric, x[None, :], inner_scheme)
    g = curv["g"][0]
    weyl = curv["weyl"][0]
    errors: dict[str, float] = {}
    bach = bianchi_res = bach_trace = None
    if with_bach:
        coarse = _stencil_curvature(metric, x, scheme.step, inner_scheme)
        if scheme.richardson_levels >= 1:
            fine = _stencil_curvature(metric, x, scheme.step / 2.0, inner_scheme)
            factor = 2.0**4 - 1.0
            bach = fine["bach"] + (fine["bach"] - coarse["bach"]) / factor
            bianchi = fine["bianchi"] + (fine["bianchi"] - coarse["bianchi"]) / factor
            errors["bach"] = float(np.max(np.abs(fine["bach"] - coarse["bach"])) / factor)
            errors["bianchi"] = float(np.max(np.abs(fine["bianchi"] - coarse["bianchi"])) / factor)
        else:
            bach, bianchi = coarse["bach"], coarse["bianchi"]
        bianchi_res = float(np.max(np.abs(bianchi)))
        bach_trace = float(np.einsum("ij,ij->", curv["g_inv"][0], bach))
    return CurvaturePoint(
        christoffel=curv["christoffel"][0],
        riemann=curv["riemann"][0],
        ricci=curv["ricci"][0],
        scalar=float(curv["scalar"][0]),
        weyl=_weyl_in_frame(weyl, g),
        weyl_coordinates=weyl,
        weyl_norm_sq=float(curv["weyl_norm_sq"][0]),
        bach=bach,
        bianchi_residual=bianchi_res,
        bach_trace=bach_trace,
        errors=errors,
    )


# ---------------------------------------------------------------------------
# flat-background linearized operators


def _as_field(f) -> TensorField:
    if isinstance(f, TensorField):
        return f
    if callable(f):
        return FunctionField(f)
    raise TypeError("expected a TensorField or a vectorized callable")


def _points(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def _jet(f, x, order, scheme):
    field_ = _as_field(f)
    pts, single = _points(x)
    if order > field_.analytic_order and scheme is None:
        # local radius: one unit unless the field knows better
        scheme = field_.fd_scheme or DiffScheme(step=2e-2)
    return field_.jet(pts, order, scheme), single


def linearized_weyl_from_jet(f0, d1, d2) -> np.ndarray:
    """Linearized Weyl tensor at the flat metric, as an ``[n, alpha, i, j, beta]`` array."""
    eye = np.eye(4)
    lap = np.einsum("nijaa->nij", d2)
    ddiv = np.einsum("nijia->nja", d2)  # d_a (div F)_j, stored [j, a]
    d2tr = np.einsum("niiab->nab", d2)
    laptr = np.einsum("naa->n", d2tr)
    div2 = np.einsum("nijij->n", d2)
    y = np.einsum("nba->nab", ddiv) + ddiv - d2tr  # Y_ab = d_a(dF)_b + d_b(dF)_a - d_ab trF
    first = 0.5 * (
        np.einsum("nibaj->naijb", d2)
        + np.einsum("najib->naijb", d2)
        - np.einsum("nijab->naijb", d2)
        - np.einsum("nabij->naijb", d2)
    )
    second = 0.25 * (
        np.einsum("ab,nij->naijb", eye, lap)
        + np.einsum("ij,nab->naijb", eye, lap)
        - np.einsum("ib,naj->naijb", eye, lap)
        - np.einsum("aj,nib->naijb", eye, lap)
    )
    third = 0.25 * (
        np.einsum("naj,ib->naijb", y, eye)
        + np.einsum("nib,aj->naijb", y, eye)
        - np.einsum("nab,ij->naijb", y, eye)
        - np.einsum("nij,ab->naijb", y, eye)
    )
    block = np.einsum("ab,ij->aijb", eye, eye) - np.einsum("aj,bi->aijb", eye, eye)
    fourth = ((div2 - laptr) / 6.0)[:, None, None, None, None] * block
    return first + second + third + fourth


def linearized_weyl_flat(f, x, scheme: DiffScheme | None = None) -> np.ndarray:
    """Linearized Weyl tensor ``W'_{alpha i j beta}`` of the flat metric along ``f``."""
    jets, single = _jet(f, x, 2, scheme)
    out = linearized_weyl_from_jet(*jets)
    return out[0] if single else out


def linearized_weyl_divergence_from_jet(d3) -> np.ndarray:
    """``d^alpha W'_{alpha i j beta}`` as an ``[n, i, j, beta]`` array, from the third derivatives."""
    eye = np.eye(4)
    dlap = np.einsum("nijaac->nijc", d3)
    d2div = np.einsum("nkjkab->njab", d3)  # d_a d_b (div F)_j
    ddiv2 = np.einsum("nijijc->nc", d3)
    dlaptr = np.einsum("niiaac->nc", d3)
    scal = ddiv2 - dlaptr
    return 0.25 * (
        np.einsum("nibj->nijb", dlap)
        - dlap
        + np.einsum("njib->nijb", d2div)
        - np.einsum("nbij->nijb", d2div)
    ) + (1.0 / 12.0) * (
        np.einsum("nj,ib->nijb", scal, eye) - np.einsum("nb,ij->nijb", scal, eye)
    )


def linearized_weyl_divergence_flat(f, x, scheme: DiffScheme | None = None) -> np.ndarray:
    jets, single = _jet(f, x, 3, scheme)
    out = linearized_weyl_divergence_from_jet(jets[3])
    return out[0] if single else out


def linearized_bach_from_jet(d4) -> np.ndarray:
    """First variation of the Bach tensor at the flat metric, from fourth derivatives."""
    eye = np.eye(4)
    bilap = np.einsum("nijaabb->nij", d4)
    lapdiv = np.einsum("nkikaac->nic", d4)  # d_c Lap (div F)_i
    dd_div2 = np.einsum("nijijab->nab", d4)
    dd_laptr = np.einsum("niiccab->nab", d4)
    lap_div2 = np.einsum("naa->n", dd_div2)
    bilap_tr = np.einsum("naa->n", dd_laptr)
    bracket = 0.25 * (lapdiv + np.einsum("nji->nij", lapdiv) - bilap - dd_div2) + (1.0 / 12.0) * (
        dd_div2 - dd_laptr - np.einsum("n,ij->nij", lap_div2 - bilap_tr, eye)
    )
    return -4.0 * bracket


def linearized_bach_flat(f, x, scheme: DiffScheme | None = None) -> np.ndarray:
    """``d/ds B(delta + s f)`` at ``s = 0``; equals the bi-Laplacian on TT fields."""
    jets, single = _jet(f, x, 4, scheme)
    out = linearized_bach_from_jet(jets[4])
    return out[0] if single else out


def bilaplacian(f, x, scheme: DiffScheme | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise bi-Laplacian and the sum of absolute values of its terms."""
    jets, single = _jet(f, x, 4, scheme)
    d4 = jets[4]
    bilap = np.einsum("nijaabb->nij", d4)
    scale = np.einsum("nijaabb->nij", np.abs(d4))
    return (bilap[0], scale[0]) if single else (bilap, scale)


def bach_variation(background: MetricField, perturbation: TensorField, x,
                   scheme: DiffScheme | None = None, amount: float = 1e-3) -> np.ndarray:
    """Difference quotient of the full Bach tensor along a perturbation.

    Central differences at ``+-amount`` and ``+-amount/2`` combined by Richardson.
    """
    def quotient(s):
        plus = curvature_at(background.perturbed(perturbation, s), x, scheme).bach
        minus = curvature_at(background.perturbed(perturbation, -s), x, scheme).bach
        return (plus - minus) / (2.0 * s)

    coarse, fine = quotient(amount), quotient(amount / 2.0)
    return fine + (fine - coarse) / 3.0


class _ConformalProductField(TensorField):
    """``exp(k * phi) * base`` for the quadratic ``phi`` of a conformally flat field."""

    def __init__(self, conformal, exponent: float, base: TensorField):
        self.conformal = conformal
        self.exponent = exponent
        self.base = base
        self.analytic_order = min(2, base.analytic_order)
        self.fd_scheme = base.fd_scheme

    def _scalar_jet(self, x, order):
        k = self.exponent
        e = np.exp(k * self.conformal.phi(x))
        grad = self.conformal.c1 + x @ self.conformal.c2
        out = [e]
        if order >= 1:
            out.append(k * e[:, None] * grad)
        if order >= 2:
            out.append(e[:, None, None] * (k * k * np.einsum("na,nb->nab", grad, grad)
                                           + k * self.conformal.c2))
        return out

    def value(self, x):
        x = np.atleast_2d(x)
        return np.exp(self.exponent * self.conformal.phi(x))[:, None, None] * self.base.value(x)

    def analytic_jet(self, x, order):
        x = np.atleast_2d(x)
        return leibniz(self.base.analytic_jet(x, order), self._scalar_jet(x, order), order)


def conformal_bach_transform(conformal, perturbation: TensorField, x,
                             base_variation: Callable[[TensorField, np.ndarray], np.ndarray]
                             ) -> np.ndarray:
    """Right-hand side of the conformal covariance law of the linearized Bach operator.

    Given the linearized Bach operator ``base_variation`` of a background ``g``
    and a conformal factor ``exp(2 phi)``, returns
    ``exp(-2 phi(x)) * base_variation(exp(-2 phi) T)(x)``, which equals the
    linearized Bach operator of ``exp(2 phi) g`` applied to ``T``.
    """
    x = np.asarray(x, dtype=float).reshape(4)
    scaled = _ConformalProductField(conformal, -2.0, perturbation)
    factor = float(np.exp(-2.0 * conformal.phi(x[None, :])[0]))
    return factor * np.asarray(base_variation(scaled, x))


# ---------------------------------------------------------------------------
# inverted normal coordinates


@dataclass(frozen=True)
class BlowUpProfile:
    """``f(z) = |z|^-2`` for ``|z| <= 3 eps``, blended to a constant by ``6 eps``."""

    eps: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        blend = RadialCutoff(3.0 * self.eps, 6.0 * self.eps)(r)
        cap = (6.0 * self.eps) ** -2
        with np.errstate(divide="ignore"):
            inner = np.where(r > 0, 1.0 / np.maximum(r, 1e-300) ** 2, np.inf)
        return (1.0 - blend) * inner + blend * cap


@dataclass(frozen=True)
class NormalChartExpansion:
    """``g(z) = delta - (1/3) R_kijl z^k z^l + t T_kijl z^k z^l / |z|^4 + remainder(z)``."""

    riemann: np.ndarray
    t_tensor: np.ndarray
    t: float = 1.0
    remainder: TensorField | None = None

    def field(self) -> TensorField:
        parts: list[TensorField] = [ConstantField(np.eye(4))]
        r = np.asarray(self.riemann, dtype=float)
        hess = -(np.einsum("aijb->ijab", r) + np.einsum("bija->ijab", r)) / 3.0
        parts.append(PolynomialField([np.zeros((4, 4)), np.zeros((4, 4, 4)), hess]))
        if self.t != 0.0 and np.any(self.t_tensor):
            parts.append(SingularQuadraticField(self.t_tensor, coefficient=self.t))
        if self.remainder is not None:
            parts.append(self.remainder)
        return SumField(parts)

    def metric(self, domain: ChartRegion | None = None) -> MetricField:
        return MetricField(self.field(), domain, "normal chart")

    def inverted_leading(self, y: np.ndarray) -> np.ndarray:
        """``delta - (1/3) R yy/|y|^4 + t T yy``: the leading terms after inversion."""
        y = np.atleast_2d(y)
        r4 = np.sum(y * y, axis=-1) ** 2
        quad_r = np.einsum("kijl,nk,nl->nij", self.riemann, y, y)
        quad_t = np.einsum("kijl,nk,nl->nij", self.t_tensor, y, y)
        return np.eye(4) - quad_r / (3.0 * r4[:, None, None]) + self.t * quad_t


class InvertedMetric(TensorField):
    """``f(I(y))^2 (I^* g)(y)`` with ``I(y) = y / |y|^2``."""

    def __init__(self, base: TensorField, profile: BlowUpProfile):
        self.base = base
        self.profile = profile
        self.analytic_order = 0

    def value(self, y):
        y = np.atleast_2d(y)
        r2 = np.sum(y * y, axis=-1)
        z = y / r2[:, None]
        unit = y / np.sqrt(r2)[:, None]
        reflect = np.eye(4) - 2.0 * np.einsum("na,nb->nab", unit, unit)
        jac = reflect / r2[:, None, None]
        f = self.profile(np.sqrt(1.0 / r2))
        return (f**2)[:, None, None] * np.einsum("nai,nab,nbj->nij", jac, self.base.value(z), jac)


@dataclass(frozen=True)
class InvertedChart:
    metric: MetricField
    sample_radii: tuple[float, ...]
    residuals: tuple[float, ...]
    decay_exponent: float


def invert_chart(expansion: NormalChartExpansion, profile: BlowUpProfile | None = None,
                 sample_radii: Sequence[float] = (10.0, 20.0, 40.0),
                 rng: np.random.Generator | None = None) -> InvertedChart:
    """Rewrite a normal-coordinate chart in inverted coordinates ``y = z/|z|^2``.

    The tensor multiplying ``t`` must be curvature-type (the projected form);
    a merely pairwise-symmetric tensor would produce terms growing quadratically
    at infinity, which is reported as an error.  The residual against the
    leading expansion is sampled on spheres of the given radii and its decay
    exponent is fitted.
    """
    t_tensor = np.asarray(expansion.t_tensor, dtype=float)
    if np.any(t_tensor):
        dec = tc.decompose_pairwise(t_tensor)
        if np.max(np.abs(dec.gauge_part)) > 1e-10 * max(1.0, np.max(np.abs(t_tensor))):
            raise SymmetryViolationError(
                "perturbation tensor is not of curvature type: the inverted metric would "
                "pick up terms growing quadratically at infinity")
    profile = profile or BlowUpProfile(eps=1.0 / (3.0 * min(sample_radii)) * 0.999)
    inverted = InvertedMetric(expansion.field(), profile)
    rng = rng or np.random.default_rng(0)
    dirs = rng.normal(size=(64, 4))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    residuals = []
    for radius in sample_radii:
        y = radius * dirs
        residuals.append(float(np.max(np.abs(inverted.value(y) - expansion.inverted_leading(y)))))
    logs = np.log(np.maximum(residuals, 1e-300))
    slope = float(np.polyfit(np.log(sample_radii), logs, 1)[0])
    return InvertedChart(
        metric=MetricField(inverted, ChartRegion(inner=1.0 / (3.0 * profile.eps))),
        sample_radii=tuple(float(r) for r in sample_radii),
        residuals=tuple(residuals),
        decay_exponent=slope,
    )


# ---------------------------------------------------------------------------
# Weyl energy


@dataclass(frozen=True)
class EnergyQuadrature:
    """Tensor-product rule: Gauss-Legendre in ``r`` per decade times an S^3 product rule."""

    radial_nodes: int = 32
    angular_degree: int = 12
    rtol: float = 1e-6
    chunk: int = 4096

    def refined(self) -> "EnergyQuadrature":
        return EnergyQuadrature(self.radial_nodes + 16, self.angular_degree + 6, self.rtol, self.chunk)


@dataclass(frozen=True)
class EnergyEstimate:
    value: float
    error: float


def radial_pieces(inner: float, outer: float) -> list[tuple[float, float]]:
    """Split ``[inner, outer]`` at powers of ten (a single piece for a ball)."""
    if inner == 0.0:
        return [(0.0, outer)]
    cuts = [inner]
    nxt = inner * 10.0
    while nxt < outer:
        cuts.append(nxt)
        nxt *= 10.0
    cuts.append(outer)
    return list(zip(cuts[:-1], cuts[1:]))


def _energy_once(metric: MetricField, region: ChartRegion, quad: EnergyQuadrature,
                 baseline: MetricField | None = None, breaks: tuple[float, ...] = (),
                 threads: int | None = None) -> float:
    from .sphere_quadrature import s3_product_rule

    rule = s3_product_rule(quad.angular_degree)
    gl_x, gl_w = np.polynomial.legendre.leggauss(quad.radial_nodes)
    cuts = sorted({region.inner, region.outer, *(b for b in breaks if region.inner < b < region.outer)})
    pieces = [piece for lo, hi in zip(cuts[:-1], cuts[1:]) for piece in radial_pieces(lo, hi)]
    radii, weights = [], []
    for lo, hi in pieces:
        radii.append(0.5 * (hi - lo) * gl_x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * gl_w)
    radii = np.concatenate(radii)
    weights = np.concatenate(weights) * radii**3
    pts = (radii[:, None, None] * rule.nodes[None, :, :]).reshape(-1, 4) + np.asarray(region.center)
    wts = (weights[:, None] * rule.weights[None, :]).reshape(-1)

    def work(sl: slice) -> float:
        curv = curvature_on_points(metric, pts[sl])
        dens = curv["weyl_norm_sq"] * curv["volume"]
        if baseline is not None:
            base = curvature_on_points(baseline, pts[sl])
            dens = dens - base["weyl_norm_sq"] * base["volume"]
        return float(np.sum(dens * wts[sl]))

    parts = ordered_map(work, chunk_slices(len(pts), quad.chunk), threads)
    return float(math.fsum(parts))


def weyl_energy(metric: MetricField, region: ChartRegion, quad: EnergyQuadrature | None = None,
                threads: int | None = None, check: bool = True) -> EnergyEstimate:
    """``int |W|^2 dV`` over an annulus or ball, with an error bar from rule refinement."""
    return _checked_energy(metric, region, quad, None, (), threads, check)


def weyl_energy_difference(metric: MetricField, baseline: MetricField, region: ChartRegion,
                           quad: EnergyQuadrature | None = None, breaks: tuple[float, ...] = (),
                           threads: int | None = None, check: bool = True) -> EnergyEstimate:
    """``int (|W_g|^2 dV_g - |W_h|^2 dV_h)`` with both densities taken on the same nodes.

    Pointwise subtraction keeps small perturbation effects out of the rounding
    noise of the two energies. ``breaks`` adds radial break points, for example
    where a cutoff switches on.
    """
    return _checked_energy(metric, region, quad, baseline, breaks, threads, check)


def _checked_energy(metric, region, quad, baseline, breaks, threads, check) -> EnergyEstimate:
    quad = quad or EnergyQuadrature()
    coarse = _energy_once(metric, region, quad, baseline, breaks, threads)
    fine = _energy_once(metric, region, quad.refined(), baseline, breaks, threads)
    err = abs(fine - coarse)
    if check and err > quad.rtol * abs(fine) + 1e-300 and err > 1e-14:
        raise AccuracyError(
            f"Weyl energy quadrature not converged: {coarse!r} vs {fine!r}")
    return EnergyEstimate(value=fine, error=err)
