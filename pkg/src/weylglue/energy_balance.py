"""Energy balance of the glued metric on the connected sum.

The pipeline has five stages:

* the M-side correction ``H``;
* the derivative ``V'(0)`` of the truncated Weyl energy;
* the glued metric on the neck;
* the assembled expansion ``W(g_X) - W(g_M)``;
* the sign of the interaction term.

The capacity cutoff used to attach further summands lives here too.

The M-side interaction coefficient is ``4 pi^2 / 3``, so the predicted balance
is ``(2 pi^2 / 3) a^4 W^kijl d_k d_l A_ij(0)``. :func:`v_prime_zero` measures
the coefficient directly by differencing the Weyl energy.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import chart_geometry as cg
from . import series_correction as sc
from . import sphere_quadrature as sq
from . import tensor_core as tc
from .errors import (
    ConfigurationError,
    ConsistencyError,
    DomainError,
    InputMismatchError,
    NoDecayWarning,
    SymmetryViolationError,
)
from .fields import (
    ConstantField,
    PolynomialField,
    RadialCutoff,
    RadialProfileField,
    ScaledField,
    SingularQuadraticField,
    SumField,
    TensorField,
    smoothstep,
)

SPHERE_LEADING = math.pi**2 / 2.0
M_INTERACTION_COEFFICIENT = 4.0 * math.pi**2 / 3.0
BALANCE_COEFFICIENT = 2.0 * math.pi**2 / 3.0
CANCELLATION_TOL = 1e-10


class Sign(str, enum.Enum):
    NEGATIVE = "negative"
    POSITIVE = "positive"
    INDETERMINATE = "indeterminate"


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GluingConfig:
    """Scales of the gluing: ``0 < a << gamma << eps_chart, delta_chart << 1``.

    ``b`` equals ``a``. The neck cutoff ``chi_gamma`` switches from 0 to 1 on
    ``[chi_start, chi_end] * gamma``, so its k-th derivative is ``O(gamma^-k)``.
    """

    a: float = 1e-3
    gamma: float = 5e-2
    eps_chart: float = 0.5
    delta_chart: float = 0.5
    chi_start: float = 0.25
    chi_end: float = 0.75

    def __post_init__(self):
        vals = (self.a, self.gamma, self.eps_chart, self.delta_chart)
        if not all(math.isfinite(v) and v > 0.0 for v in vals):
            raise ConfigurationError("a, gamma, eps_chart and delta_chart must be positive")
        if self.a / self.gamma >= 0.1:
            raise ConfigurationError(
                f"a/gamma = {self.a / self.gamma:.3g} must stay below 0.1: the shrunk manifold "
                "has to sit well inside the neck")
        for name, chart in (("eps_chart", self.eps_chart), ("delta_chart", self.delta_chart)):
            # the desk defaults sit exactly on the boundary, so equality is allowed here
            if self.gamma / chart > 0.1 * (1.0 + 1e-12):
                raise ConfigurationError(
                    f"gamma/{name} = {self.gamma / chart:.3g} must not exceed 0.1: the neck "
                    "has to sit well inside the chart")
            if chart > 1.0:
                raise ConfigurationError(f"{name} must not exceed 1")
        if not 0.0 < self.chi_start < self.chi_end < 1.0:
            raise ConfigurationError("need 0 < chi_start < chi_end < 1")

    @property
    def b(self) -> float:
        return self.a

    def chi_gamma(self) -> RadialCutoff:
        """``chi_gamma(|x| - gamma)`` as a profile in ``|x|``."""
        g = self.gamma
        return RadialCutoff(g * (1.0 + self.chi_start), g * (1.0 + self.chi_end))


# ---------------------------------------------------------------------------
# M-side correction


def model_chart(w) -> cg.MetricField:
    """The zero-remainder conformal normal chart ``delta - (1/3) W_kijl z^k z^l``."""
    weyl = tc.as_weyl(w).tensor
    second = -(np.einsum("kijl->ijkl", weyl) + np.einsum("lijk->ijkl", weyl)) / 3.0
    return cg.MetricField(PolynomialField([np.eye(4), np.zeros((4, 4, 4)), second]), name="model chart")


def _curvature_type_hessian(jet) -> np.ndarray:
    hess = np.asarray(jet.hessian, dtype=float)
    scale = max(1.0, float(np.max(np.abs(hess))))
    try:
        gauge = np.max(np.abs(tc.decompose_pairwise(hess).t_part - hess))
    except SymmetryViolationError:
        gauge = math.inf
    if gauge > 1e-9 * scale:
        raise SymmetryViolationError(
            "jet hessian still carries a gauge part; project it before building H")
    return hess


def h_correction(jet, eps: float) -> TensorField:
    """``H_ij(z) = T_kijl z^k z^l |z|^-4 phi(|z|)`` with ``phi`` = 1 below ``eps`` and 0 beyond ``2 eps``."""
    if not eps > 0.0:
        raise DomainError("eps must be positive")
    hess = _curvature_type_hessian(jet)
    return RadialProfileField(SingularQuadraticField(hess, coefficient=1.0), RadialCutoff(2.0 * eps, eps))


@dataclass(frozen=True)
class VPrimeReport:
    """``V'(0)`` analytically and from difference quotients of ``V``.

    ``ball_parts`` and ``annulus_parts`` split each quotient into the energy lost
    by removing the small ball and the change of energy outside it.
    """

    analytic: float
    analytic_leading: float
    analytic_interaction: float
    numeric: float
    s_values: tuple[float, ...]
    quotients: tuple[float, ...]
    ball_parts: tuple[float, ...]
    annulus_parts: tuple[float, ...]
    budget: float
    interaction_budget: float
    sphere_coefficient: Fraction
    boundary_coefficient: Fraction

    @property
    def deviation(self) -> float:
        return self.numeric - self.analytic

    @property
    def interaction_deviation(self) -> float:
        return self.annulus_parts[-1] - self.analytic_interaction

    @property
    def agrees(self) -> bool:
        return (abs(self.deviation) <= self.budget
                and abs(self.interaction_deviation) <= self.interaction_budget)


def sphere_cancellation_coefficient() -> Fraction:
    """Exact ``(int 1 - 4 int x1^2 - 4 int x1^2 + 24 int x1^2 x2^2) / pi^2`` over S^3.

    It multiplies ``W . (T + T)`` in the boundary term of ``V'`` and vanishes.
    """
    whole = sq.monomial_integral_s3_exact((0, 0, 0, 0))
    pair = sq.monomial_integral_s3_exact((2, 0, 0, 0))
    mixed = sq.monomial_integral_s3_exact((2, 2, 0, 0))
    return whole - 4 * pair - 4 * pair + 24 * mixed


def interaction_boundary_coefficient() -> Fraction:
    """Exact ``c`` in ``int_{S^3} W_{a i j b} d^b H^ij x^a = c pi^2 W . T``."""
    pair = sq.monomial_integral_s3_exact((2, 0, 0, 0))
    mixed = sq.monomial_integral_s3_exact((2, 2, 0, 0))
    # (T + T) contracted once with the pair moment and once with four mixed moments
    return 2 * (pair - 4 * mixed)


def _check_model(m_model: cg.MetricField, weyl: np.ndarray) -> None:
    curv = cg.curvature_on_points(m_model, np.zeros((1, 4)))
    mismatch = float(np.max(np.abs(curv["weyl"][0] - weyl)))
    if mismatch > 1e-8 * max(1.0, float(np.max(np.abs(weyl)))):
        raise InputMismatchError(f"model chart Weyl tensor at 0 differs from w by {mismatch:.3g}")


def v_prime_zero(w, jet, gamma: float, m_model: cg.MetricField | None = None, eps: float = 0.5,
                 s_values: Sequence[float] = (1e-8, 1e-9), quad: cg.EnergyQuadrature | None = None,
                 threads: int | None = None) -> VPrimeReport:
    """``V'(0) = -(pi^2/2) gamma^-4 |W|^2 + (4 pi^2/3) W . T`` against ``(V(s) - V(0)) / s``.

    ``V(s)`` is the Weyl energy of ``g_M + s H`` outside the ball of radius
    ``s^(1/4) / gamma``. Only the chart ball of radius ``2 eps`` changes, so the
    quotient is the energy change on the annulus minus the energy of the
    removed ball, divided by ``s``.
    """
    data = tc.as_weyl(w)
    weyl = data.tensor
    m_model = m_model or model_chart(data)
    _check_model(m_model, weyl)
    hess = _curvature_type_hessian(jet)
    h_field = h_correction(jet, eps)
    quad = quad or cg.EnergyQuadrature(radial_nodes=16, angular_degree=10, rtol=1e-3)
    s_values = tuple(sorted((float(s) for s in s_values), reverse=True))
    if len(s_values) < 2 or s_values[-1] <= 0.0:
        raise DomainError("need at least two positive differencing steps")
    w_dot_t = float(np.einsum("kijl,kijl->", weyl, hess))
    leading = -SPHERE_LEADING * gamma**-4 * data.norm_sq
    interaction = M_INTERACTION_COEFFICIENT * w_dot_t
    quotients, balls, annuli, errs = [], [], [], []
    for s in s_values:
        radius = s**0.25 / gamma
        if radius >= eps:
            raise DomainError(f"removed ball radius {radius:.3g} reaches the cutoff region at {eps}")
        ball = cg.weyl_energy(m_model, cg.ChartRegion(0.0, radius), quad, threads=threads, check=False)
        ann = cg.weyl_energy_difference(m_model.perturbed(h_field, s), m_model,
                                        cg.ChartRegion(radius, 2.0 * eps), quad, breaks=(eps,),
                                        threads=threads, check=False)
        balls.append(-ball.value / s)
        annuli.append(ann.value / s)
        quotients.append((ann.value - ball.value) / s)
        errs.append((ball.error + ann.error) / s)
    declared = gamma**4 * (data.norm_sq + math.sqrt(data.norm_sq) * float(np.linalg.norm(hess)))
    budget = 2.0 * abs(quotients[-2] - quotients[-1]) + max(errs) + declared
    interaction_budget = 2.0 * abs(annuli[-2] - annuli[-1]) + max(errs) + declared
    return VPrimeReport(
        analytic=leading + interaction, analytic_leading=leading, analytic_interaction=interaction,
        numeric=quotients[-1], s_values=s_values, quotients=tuple(quotients), ball_parts=tuple(balls),
        annulus_parts=tuple(annuli), budget=budget, interaction_budget=interaction_budget,
        sphere_coefficient=sphere_cancellation_coefficient(),
        boundary_coefficient=interaction_boundary_coefficient())


# ---------------------------------------------------------------------------
# glued metric


class _InvertedCutoff:
    """``r -> phi(a / r)``: the M-side cutoff seen in inverted coordinates."""

    def __init__(self, a: float, eps: float):
        self.a = a
        self.phi = RadialCutoff(2.0 * eps, eps)

    def __call__(self, r):
        return self.phi(self.a / np.asarray(r, dtype=float))

    def derivatives(self, r, order: int = 2) -> list[np.ndarray]:
        r = np.asarray(r, dtype=float)
        u = self.a / r
        d = self.phi.derivatives(u, order)
        out = [d[0]]
        if order >= 1:
            out.append(-d[1] * self.a / r**2)
        if order >= 2:
            out.append(d[2] * self.a**2 / r**4 + 2.0 * d[1] * self.a / r**3)
        return out[: order + 1]


class _PiecewiseField(TensorField):
    """Picks one of several fields by ``|x|``; ``edges`` separate consecutive pieces."""

    def __init__(self, pieces: Sequence[TensorField], edges: Sequence[float]):
        self.pieces = tuple(pieces)
        self.edges = np.asarray(edges, dtype=float)
        self.analytic_order = min(p.analytic_order for p in self.pieces)

    def _index(self, x):
        return np.searchsorted(self.edges, np.linalg.norm(np.atleast_2d(x), axis=-1), side="right")

    def value(self, x):
        x = np.atleast_2d(x)
        idx = self._index(x)
        out = np.empty((x.shape[0], 4, 4))
        for k, piece in enumerate(self.pieces):
            sel = idx == k
            if np.any(sel):
                out[sel] = piece.value(x[sel])
        return out

    def analytic_jet(self, x, order):
        x = np.atleast_2d(x)
        idx = self._index(x)
        out = [np.empty((x.shape[0], 4, 4) + (4,) * m) for m in range(order + 1)]
        for k, piece in enumerate(self.pieces):
            sel = idx == k
            if np.any(sel):
                for m, arr in enumerate(piece.analytic_jet(x[sel], order)):
                    out[m][sel] = arr
        return out


@dataclass(frozen=True)
class GluedMetric:
    """The competitor metric ``g_X`` on the neck chart and its four defining pieces.

    In increasing ``|x|`` the pieces are ``g_a``, ``g_tilde_a``, ``g_hat_b`` and
    ``g_b``, separated at ``2a/eps``, ``gamma`` and ``delta/2``. The chart remainders
    of both sides are zero at desk scale, so ``g_a`` and ``g_tilde_a`` agree
    wherever the M-side cutoff equals one.
    """

    config: GluingConfig
    pieces: dict[str, TensorField]
    edges: tuple[float, float, float]
    metric: cg.MetricField

    def piece_at(self, radius: float) -> str:
        names = list(self.pieces)
        return names[int(np.searchsorted(np.asarray(self.edges), radius, side="right"))]

    def piece_metric(self, name: str) -> cg.MetricField:
        return cg.MetricField(self.pieces[name], self.metric.domain, name)


def build_glued_metric(w, jet, cfg: GluingConfig) -> GluedMetric:
    if not isinstance(cfg, GluingConfig):
        raise ConfigurationError("a GluingConfig is required")
    weyl = tc.as_weyl(w).tensor
    a2 = cfg.a**2
    flat = ConstantField(np.eye(4))
    k_part = ScaledField(SingularQuadraticField(weyl, coefficient=-1.0 / 3.0), a2)
    quad = PolynomialField([np.zeros((4, 4)), np.zeros((4, 4, 4)), np.asarray(jet.second)])
    eta = PolynomialField([np.zeros((4, 4)), np.zeros((4, 4, 4)), np.zeros((4,) * 4),
                           np.asarray(jet.third), np.asarray(jet.fourth)])
    t_cut = ScaledField(RadialProfileField(quad, _InvertedCutoff(cfg.a, cfg.eps_chart)), a2)
    t_full = ScaledField(quad, a2)
    eta_cut = ScaledField(RadialProfileField(eta, cfg.chi_gamma()), a2)
    eta_full = ScaledField(eta, a2)
    pieces = {
        "g_a": SumField((flat, k_part, t_cut)),
        "g_tilde_a": SumField((flat, k_part, t_full)),
        "g_hat_b": SumField((flat, k_part, t_full, eta_cut)),
        "g_b": SumField((flat, k_part, t_full, eta_full)),
    }
    edges = (2.0 * cfg.a / cfg.eps_chart, cfg.gamma, cfg.delta_chart / 2.0)
    domain = cg.ChartRegion(cfg.a / (4.0 * cfg.eps_chart), cfg.delta_chart)
    metric = cg.MetricField(_PiecewiseField(list(pieces.values()), edges), domain, "glued")
    return GluedMetric(cfg, pieces, edges, metric)


# ---------------------------------------------------------------------------
# energy balance


@dataclass(frozen=True)
class BudgetLine:
    name: str
    value: float
    kind: str  # "measured", "declared" or "uncertified"
    note: str = ""


@dataclass(frozen=True)
class EnergyReport:
    z_side: float
    m_side: float
    neck_correction: float
    interaction_term: float
    predicted_balance: float
    sign: Sign
    error_budget: tuple[BudgetLine, ...]
    z_leading_coeff: float
    m_leading_coeff: float
    leading_cancellation: float
    boundary_divergence: sq.BoundaryIntegralReport | None = None
    boundary_nondivergence: sq.BoundaryIntegralReport | None = None
    notes: tuple[str, ...] = ()

    @property
    def assembled(self) -> float:
        return self.z_side + self.m_side + self.neck_correction

    @property
    def budget_total(self) -> float:
        return float(sum(line.value for line in self.error_budget))

    @property
    def consistent(self) -> bool:
        return abs(self.assembled - self.predicted_balance) <= self.budget_total * (1.0 + 1e-9) + 1e-300

    def record(self) -> dict[str, object]:
        """Flat key-value view with a stable key order."""
        out: dict[str, object] = {
            "z_side": self.z_side,
            "m_side": self.m_side,
            "neck_correction": self.neck_correction,
            "interaction_term": self.interaction_term,
            "predicted_balance": self.predicted_balance,
            "assembled": self.assembled,
            "sign": self.sign.value,
            "z_leading_coeff": self.z_leading_coeff,
            "m_leading_coeff": self.m_leading_coeff,
            "leading_cancellation": self.leading_cancellation,
            "budget_total": self.budget_total,
            "consistent": self.consistent,
        }
        for line in self.error_budget:
            out[f"budget.{line.name}"] = line.value
            out[f"budget.{line.name}.kind"] = line.kind
        return out


def _neck_difference(glued: GluedMetric, quad: cg.EnergyQuadrature, threads) -> tuple[float, float]:
    cfg = glued.config
    g = cfg.gamma
    chi = cfg.chi_gamma()
    outer = cg.weyl_energy_difference(
        glued.piece_metric("g_hat_b"), glued.piece_metric("g_b"), cg.ChartRegion(g, 2.0 * g), quad,
        breaks=(chi.start, chi.end), threads=threads, check=False)
    inner_edge = max(g / 8.0, cfg.a / (4.0 * cfg.eps_chart) * 1.0001)
    inner = cg.weyl_energy_difference(
        glued.piece_metric("g_tilde_a"), glued.piece_metric("g_a"), cg.ChartRegion(inner_edge, g), quad,
        breaks=(cfg.a / cfg.eps_chart, 2.0 * cfg.a / cfg.eps_chart), threads=threads, check=False)
    return outer.value + inner.value, outer.error + inner.error


def energy_balance(w, jet, cfg: GluingConfig, neck: bool = True,
                   quad: cg.EnergyQuadrature | None = None, threads: int | None = None) -> EnergyReport:
    """Assemble ``W(g_X) - W(g_M)`` from its Z-side, M-side and neck parts.

    The Z-side comes from the two boundary integrals at ``gamma``; the M-side
    from the closed form of ``V'(0)``; the neck correction from a direct energy
    difference of the glued metric and the uncut pieces (skipped when ``neck``
    is false).
    """
    data = tc.as_weyl(w)
    a4 = cfg.a**4
    gamma = cfg.gamma
    div = sq.divergence_boundary_integral(jet, data, gamma)
    nondiv = sq.nondivergence_boundary_integral(jet, data, gamma)
    z_lead = 2.0 * (nondiv.leading_coeff - div.leading_coeff)
    m_lead = -SPHERE_LEADING * data.norm_sq
    cancellation = z_lead + m_lead
    if abs(cancellation) > CANCELLATION_TOL * max(1.0, data.norm_sq):
        raise ConsistencyError(f"gamma^-4 terms fail to cancel: residual {cancellation!r}")
    z_order_one = 2.0 * (nondiv.order_one - div.order_one)
    z_side = a4 * (z_lead * gamma**-4 + z_order_one)
    hess = _curvature_type_hessian(jet)
    w_dot_t = float(np.einsum("kijl,kijl->", data.tensor, hess))
    m_side = a4 * (m_lead * gamma**-4 + M_INTERACTION_COEFFICIENT * w_dot_t)
    interaction = sc.interaction_contraction(data, jet)
    predicted = BALANCE_COEFFICIENT * a4 * interaction
    notes = list(jet.notes)
    if neck:
        glued = build_glued_metric(data, jet, cfg)
        neck_value, neck_err = _neck_difference(
            glued, quad or cg.EnergyQuadrature(radial_nodes=12, angular_degree=10), threads)
    else:
        neck_value, neck_err = 0.0, 0.0
        notes.append("neck correction skipped")
    weyl_l1 = float(np.sum(np.abs(data.tensor)))
    budget = (
        BudgetLine("z_side_order_gamma2", abs(a4 * z_order_one), "measured",
                   "non-leading part of the Z-side boundary integrals at gamma"),
        BudgetLine("neck", abs(neck_value) + neck_err, "measured" if neck else "declared",
                   "energy difference between the cut and uncut neck pieces"),
        BudgetLine("boundary_quadrature", 2.0 * a4 * (div.quadrature_error + nondiv.quadrature_error),
                   "measured"),
        BudgetLine("series_truncation", 2.0 * a4 * weyl_l1 * jet.truncation_bound, "measured",
                   "tower truncation propagated through the contraction"),
        BudgetLine("m_side_gamma4", a4 * gamma**4 * (data.norm_sq + math.sqrt(data.norm_sq)
                                                     * float(np.linalg.norm(hess))), "declared",
                   "O(a^4 gamma^4) remainder of V'(0), declared not measured"),
        BudgetLine("little_o_a4", 0.0, "uncertified",
                   "o(a^4) remainders need global Bach-flat data and are not certified"),
    )
    total = float(sum(line.value for line in budget))
    scale = max(1.0, data.norm_sq) * max(1.0, abs(jet.c2))
    if abs(interaction) <= 1e-12 * scale or abs(predicted) <= total:
        sign = Sign.INDETERMINATE
    else:
        sign = Sign.NEGATIVE if predicted < 0.0 else Sign.POSITIVE
    return EnergyReport(
        z_side=z_side, m_side=m_side, neck_correction=neck_value, interaction_term=interaction,
        predicted_balance=predicted, sign=sign, error_budget=budget, z_leading_coeff=z_lead,
        m_leading_coeff=m_lead, leading_cancellation=cancellation, boundary_divergence=div,
        boundary_nondivergence=nondiv, notes=tuple(notes))


# ---------------------------------------------------------------------------
# sign of the interaction term


@dataclass(frozen=True)
class ThresholdReport:
    """Where ``(1/3) C2(t) * 12 * sum`` dominates the non-identity remainder bound."""

    t_grid: tuple[float, ...]
    leading: tuple[float, ...]
    remainder: tuple[float, ...]
    t_star: float | None

    def dominated(self) -> tuple[bool, ...]:
        return tuple(l > r for l, r in zip(self.leading, self.remainder))


@dataclass(frozen=True)
class SignVerdict:
    sign: Sign
    eigen_sum: float
    frame: tc.FrameRotation
    contraction: float
    star: float
    t: float | None
    interaction: float | None
    admissible: ThresholdReport | None
    reason: str = ""

    def __iter__(self):
        return iter((self.sign, self.admissible))


def optimal_frame(w) -> tuple[float, tc.FrameRotation]:
    """Frame maximizing ``sum lambda+ lambda-`` over Derdzinski frames and signed pairings."""
    data = tc.as_weyl(w)
    base = tc.derdzinski_diagonalize(data).frame
    in_base = data.rotated(base)
    best, best_frame = -math.inf, base
    for rot in tc.SIGNED_PAIRINGS:
        extra = tc.lift_to_so4(np.eye(3), rot)
        candidate = tc.FrameRotation(base.matrix @ extra.matrix)
        value = tc.reflection_contraction(in_base.rotated(extra)) / 8.0
        if value > best + 1e-15:
            best, best_frame = value, candidate
    return best, best_frame


def admissible_t(w, model: sc.QuotientModel, t_grid: Sequence[float] | None = None,
                 eigen_sum: float | None = None) -> ThresholdReport:
    """Scan ``t`` and compare the leading interaction with the per-element bounds.

    The model is rescaled to each ``t`` keeping every element's scale exponent.
    ``t_star`` is the largest grid value below which domination holds throughout.
    """
    data = tc.as_weyl(w)
    if eigen_sum is None:
        eigen_sum = optimal_frame(data)[0]
    grid = tuple(sorted(t_grid or np.geomspace(1.02, 2.0, 12)))
    weyl_l1 = float(np.sum(np.abs(data.tensor)))
    leading, remainder = [], []
    for t in grid:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, rems = sc.correction_jet_quotient(data, model.at_t(t))
        leading.append(sc.coeff_c2(t).value * 4.0 * eigen_sum)
        remainder.append(2.0 * weyl_l1 * sum(r.bound for r in rems))
    t_star = None
    for t, lead, rem in zip(grid, leading, remainder):
        if lead > rem:
            t_star = t
        else:
            break
    return ThresholdReport(grid, tuple(leading), tuple(remainder), t_star)


def interaction_sign(w, t: float | str = "auto", model: sc.QuotientModel | None = None,
                     t_grid: Sequence[float] | None = None) -> SignVerdict:
    """Decide whether the interaction can be made negative and report the frame that does it.

    In the optimal frame the interaction is ``-(1/3) C2(t) * 12 * sum lambda+ lambda-``
    up to the non-identity remainder. With ``t="auto"`` a quotient model picks
    the largest admissible ``t`` and the cylinder uses 1.05.
    """
    data = tc.as_weyl(w)
    scale = max(float(np.max(np.abs(data.tensor))), 1e-300)
    sd_zero = float(np.max(np.abs(data.sd_block))) <= tc.SPECTRAL_TOL * scale
    asd_zero = float(np.max(np.abs(data.asd_block))) <= tc.SPECTRAL_TOL * scale
    eigen_sum, frame = optimal_frame(data)
    report = admissible_t(data, model, t_grid, eigen_sum) if model is not None else None
    if t == "auto":
        t_val = report.t_star if report is not None else 1.05
    else:
        t_val = float(t)
    if sd_zero or asd_zero or not np.any(data.tensor):
        return SignVerdict(Sign.INDETERMINATE, 0.0, frame, 0.0, 0.0, t_val, 0.0 if t_val else None, report,
                           "self-dual or anti-self-dual: the pairing vanishes in every frame")
    contraction = 8.0 * eigen_sum
    star = 1.5 * contraction
    interaction = None
    if t_val is not None:
        if model is not None:
            jet, _ = sc.correction_jet_quotient(data.rotated(frame), model.at_t(t_val))
        else:
            jet = sc.correction_jet_cylinder(data.rotated(frame), sc.CylinderParams(t_val))
        interaction = sc.interaction_contraction(data.rotated(frame), jet)
    if eigen_sum > tc.SPECTRAL_TOL * scale**2 and (interaction is None or interaction < 0.0):
        sign, reason = Sign.NEGATIVE, "positive eigenvalue pairing"
    else:
        sign, reason = Sign.INDETERMINATE, "no admissible t" if t_val is None else "pairing not positive"
    return SignVerdict(sign, eigen_sum, frame, contraction, star, t_val, interaction, report, reason)


# ---------------------------------------------------------------------------
# capacity cutoff


@dataclass(frozen=True)
class CapacityCutoff:
    """``chi(r) = S((log r - log delta_tilde) / L)`` with ``L = log(delta / delta_tilde)``.

    ``energy`` is ``int (|D^2 chi|^2 + |D chi|^4) dx`` over R^4.
    """

    delta: float
    delta_tilde: float
    energy: float

    @property
    def log_ratio(self) -> float:
        return math.log(self.delta / self.delta_tilde)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return smoothstep((np.log(np.maximum(r, 1e-300)) - math.log(self.delta_tilde)) / self.log_ratio)

    def profile(self) -> RadialCutoff:
        return RadialCutoff(self.delta_tilde, self.delta, logarithmic=True)


NO_DECAY_RATIO = 100.0


def _capacity_energy(log_ratio: float) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(16)
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    d1 = smoothstep(s, 1)
    d2 = smoothstep(s, 2)
    lr = log_ratio
    integrand = (d2 / lr - d1) ** 2 + 3.0 * d1**2 + d1**4 / lr**2
    return 2.0 * math.pi**2 / lr * float(w @ integrand)


def capacity_cutoff(delta: float, delta_tilde: float) -> CapacityCutoff:
    """Log-interpolated cutoff from ``delta_tilde`` (value 0) to ``delta`` (value 1).

    In ``s = log(r / delta_tilde) / L`` the energy is
    ``(2 pi^2 / L) int_0^1 [(S''/L - S')^2 + 3 S'^2 + S'^4 / L^2] ds``, so it decays like ``1 / L``.
    """
    if not (delta > 0.0 and 0.0 < delta_tilde < delta):
        raise DomainError("need 0 < delta_tilde < delta")
    if delta_tilde > delta / 10.0:
        raise DomainError("delta_tilde must not exceed delta / 10")
    if delta / delta_tilde < NO_DECAY_RATIO:
        warnings.warn(f"radius ratio {delta / delta_tilde:.3g} is too small for the cutoff energy "
                      "to be small", NoDecayWarning, stacklevel=2)
    return CapacityCutoff(float(delta), float(delta_tilde), _capacity_energy(math.log(delta / delta_tilde)))


@dataclass(frozen=True)
class CutoffWeylCheck:
    """Pointwise ``|W|^2`` against ``|D g^-1|^2 |D g|^2 + |D g|^4 + |D^2 g|^2`` along the cut metric."""

    max_ratio: float
    weyl_energy: float
    bound_energy: float


def cutoff_weyl_estimate(cutoff: CapacityCutoff, perturbation: TensorField, amount: float,
                         radial_nodes: int = 24, angular_degree: int = 8) -> CutoffWeylCheck:
    """Evaluate both sides of the rough Weyl estimate for ``delta + chi(|x|) amount * F``."""
    field_ = SumField((ConstantField(np.eye(4)),
                       ScaledField(RadialProfileField(perturbation, cutoff.profile()), amount)))
    metric = cg.MetricField(field_)
    rule = sq.s3_product_rule(angular_degree)
    gl_x, gl_w = np.polynomial.legendre.leggauss(radial_nodes)
    lo, hi = math.log(cutoff.delta_tilde), math.log(cutoff.delta)
    u = 0.5 * (hi - lo) * gl_x + 0.5 * (hi + lo)
    radii = np.exp(u)
    rw = 0.5 * (hi - lo) * gl_w * radii**4
    pts = (radii[:, None, None] * rule.nodes[None]).reshape(-1, 4)
    wts = (rw[:, None] * rule.weights[None]).reshape(-1)
    g, dg, d2g = metric.jet2(pts)
    curv = cg.curvature_batch(g, dg, d2g)
    g_inv = curv["g_inv"]
    dg_inv = -np.einsum("nmp,npra,nrq->nmqa", g_inv, dg, g_inv)
    dg2 = np.sum(dg**2, axis=(1, 2, 3))
    rough = np.sum(dg_inv**2, axis=(1, 2, 3)) * dg2 + dg2**2 + np.sum(d2g**2, axis=(1, 2, 3, 4))
    weyl_sq = curv["weyl_norm_sq"]
    positive = rough > 0.0
    ratio = float(np.max(weyl_sq[positive] / rough[positive])) if np.any(positive) else 0.0
    return CutoffWeylCheck(ratio, float(wts @ (weyl_sq * curv["volume"])), float(wts @ rough))
