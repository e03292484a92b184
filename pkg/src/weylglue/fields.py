"""Symmetric-2-tensor fields on R^4 with derivative jets.

A *jet* of order ``m`` at points ``x`` (shape ``(N, 4)``) is the list
``[f, df, ..., d^m f]`` where ``d^k f`` has shape ``(N, 4, 4) + (4,) * k`` and the
trailing axes are the differentiation directions.  Fields with closed-form
derivatives supply them exactly; anything else falls back to central finite
differences with Richardson extrapolation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, PoleError

LETTERS = "abcdefgh"


# ---------------------------------------------------------------------------
# finite differences


@dataclass(frozen=True)
class DiffScheme:
    """Central finite-difference settings.

    ``step`` is absolute; :meth:`for_radius` builds the default scheme whose step
    is one percent of the local radius.
    """

    step: float = 1e-2
    order: int = 4
    richardson_levels: int = 1

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.order not in (2, 4, 6):
            raise ValueError("order must be 2, 4 or 6")
        if self.richardson_levels < 0:
            raise ValueError("richardson_levels must be non-negative")

    @classmethod
    def for_radius(cls, radius: float, fraction: float = 1e-2, order: int = 4,
                   richardson_levels: int = 1) -> "DiffScheme":
        return cls(step=fraction * radius, order=order, richardson_levels=richardson_levels)

    def half_width(self, max_order: int) -> int:
        return max(_half_width(m, self.order) for m in range(1, max_order + 1))

    def reach(self, max_order: int) -> float:
        """Largest offset from the base point touched by :func:`fd_jet`."""
        return self.step * self.half_width(max_order)

    def check_radius(self, radius: float) -> None:
        if self.step >= radius / 10.0:
            raise DomainError(f"step {self.step} is not small against radius {radius}")


def _half_width(deriv: int, order: int) -> int:
    return (deriv + order - 1) // 2


@lru_cache(maxsize=None)
def central_weights(deriv: int, order: int) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Offsets and unit-step weights of the central stencil for ``d^deriv/dx^deriv``."""
    if deriv == 0:
        return (0,), (1.0,)
    p = _half_width(deriv, order)
    offsets = np.arange(-p, p + 1)
    vander = np.vander(offsets.astype(float), increasing=True).T
    rhs = np.zeros(2 * p + 1)
    rhs[deriv] = math.factorial(deriv)
    weights = np.linalg.solve(vander, rhs)
    return tuple(int(o) for o in offsets), tuple(float(w) for w in weights)


def _padded_weights(deriv: int, order: int, half: int) -> np.ndarray:
    offsets, weights = central_weights(deriv, order)
    out = np.zeros(2 * half + 1)
    for o, w in zip(offsets, weights):
        out[o + half] = w
    return out


def grid_offsets(half: int) -> np.ndarray:
    rng = np.arange(-half, half + 1)
    return np.array(list(itertools.product(rng, rng, rng, rng)), dtype=float)


def derivatives_from_grid(values: np.ndarray, half: int, step: float, max_order: int,
                          order: int) -> list[np.ndarray]:
    """Derivative tensors at the centre of a ``(2*half+1)^4`` sample grid.

    ``values`` has shape ``(2*half+1,)*4 + shape``.
    """
    shape = values.shape[4:]
    center = values[(half,) * 4]
    out = [np.array(center)]
    stencils = {d: _padded_weights(d, order, half) for d in range(max_order + 1)}
    for m in range(1, max_order + 1):
        deriv = np.zeros(shape + (4,) * m)
        for combo in itertools.combinations_with_replacement(range(4), m):
            counts = [combo.count(a) for a in range(4)]
            acc = values
            for a in range(4):
                acc = np.tensordot(stencils[counts[a]], acc, axes=([0], [0]))
            acc = acc / step**m
            for perm in set(itertools.permutations(combo)):
                deriv[(Ellipsis,) + perm] = acc
        out.append(deriv)
    return out


def fd_jet(func: Callable[[np.ndarray], np.ndarray], x, max_order: int,
           scheme: DiffScheme) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Finite-difference jet of ``func`` at a single point ``x``.

    ``func`` maps an ``(N, 4)`` array of points to an ``(N, ...)`` array.  Returns
    the extrapolated jet and a per-order error estimate from the Richardson
    difference.
    """
    x = np.asarray(x, dtype=float).reshape(4)
    half = scheme.half_width(max_order)
    offsets = grid_offsets(half)
    width = 2 * half + 1

    def at_step(step: float) -> list[np.ndarray]:
        vals = np.asarray(func(x[None, :] + step * offsets))
        vals = vals.reshape((width,) * 4 + vals.shape[1:])
        return derivatives_from_grid(vals, half, step, max_order, scheme.order)

    levels = [at_step(scheme.step / 2**k) for k in range(scheme.richardson_levels + 1)]
    if len(levels) == 1:
        return levels[0], [np.zeros_like(v) for v in levels[0]]
    # Richardson tableau on the leading error power h^order
    table = levels
    power = scheme.order
    err = None
    while len(table) > 1:
        factor = 2.0**power
        new = []
        for coarse, fine in zip(table[:-1], table[1:]):
            new.append([f + (f - c) / (factor - 1.0) for c, f in zip(coarse, fine)])
        if err is None:
            err = [np.abs(f - c) / (factor - 1.0) for c, f in zip(table[-2], table[-1])]
        table = new
        power += 2
    return table[0], err


# ---------------------------------------------------------------------------
# cutoffs


def smoothstep(u, deriv: int = 0):
    """Quintic smoothstep ``6u^5 - 15u^4 + 10u^3`` clamped to [0, 1], and derivatives."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    v = np.clip(u, 0.0, 1.0)
    if deriv == 0:
        return v**3 * (10.0 - 15.0 * v + 6.0 * v**2)
    if deriv == 1:
        return np.where(inside, 30.0 * v**2 * (1.0 - v) ** 2, 0.0)
    if deriv == 2:
        return np.where(inside, 60.0 * v * (1.0 - v) * (1.0 - 2.0 * v), 0.0)
    if deriv == 3:
        return np.where(inside, 60.0 * (1.0 - 6.0 * v + 6.0 * v**2), 0.0)
    raise ValueError("only derivatives up to order 3 are available")


@dataclass(frozen=True)
class RadialCutoff:
    """Profile rising from 0 at ``start`` to 1 at ``end`` (falling if ``end < start``).

    With ``logarithmic`` the transition variable is ``log r``.
    """

    start: float
    end: float
    logarithmic: bool = False

    def _param(self, r):
        r = np.asarray(r, dtype=float)
        if self.logarithmic:
            with np.errstate(divide="ignore"):
                lr = np.log(np.maximum(r, 1e-300))
            a, b = math.log(self.start), math.log(self.end)
            return (lr - a) / (b - a), 1.0 / (b - a)
        return (r - self.start) / (self.end - self.start), 1.0 / (self.end - self.start)

    def __call__(self, r):
        u, _ = self._param(r)
        return smoothstep(u)

    def derivatives(self, r, order: int = 2) -> list[np.ndarray]:
        """``[phi, phi', phi'', ...]`` with respect to ``r``."""
        r = np.asarray(r, dtype=float)
        u, scale = self._param(r)
        s0, s1, s2, s3 = (smoothstep(u, d) for d in range(4))
        if not self.logarithmic:
            out = [s0, s1 * scale, s2 * scale**2, s3 * scale**3]
        else:
            # d/dr of S(scale * log r)
            d1 = s1 * scale / r
            d2 = (s2 * scale**2 - s1 * scale) / r**2
            d3 = (s3 * scale**3 - 3.0 * s2 * scale**2 + 2.0 * s1 * scale) / r**3
            out = [s0, d1, d2, d3]
        return out[: order + 1]


@dataclass(frozen=True)
class BandCutoff:
    """Product of a rising and a falling cutoff: 1 on the band, 0 outside."""

    rise: RadialCutoff
    fall: RadialCutoff

    def __call__(self, r):
        return self.rise(r) * self.fall(r)

    def derivatives(self, r, order: int = 2) -> list[np.ndarray]:
        a = self.rise.derivatives(r, order)
        b = self.fall.derivatives(r, order)
        out = []
        for k in range(order + 1):
            out.append(sum(math.comb(k, j) * a[j] * b[k - j] for j in range(k + 1)))
        return out


def radial_scalar_jet(profile, u: np.ndarray, order: int) -> list[np.ndarray]:
    """Cartesian jet (up to order 2) of ``profile(|u|)``."""
    if order > 2:
        raise ValueError("radial profile jets are provided up to order 2")
    r = np.linalg.norm(u, axis=-1)
    if np.any(r == 0.0):
        raise PoleError("radial profile differentiated at its centre")
    d = profile.derivatives(r, order)
    out = [d[0]]
    unit = u / r[:, None]
    if order >= 1:
        out.append(d[1][:, None] * unit)
    if order >= 2:
        eye = np.eye(4)
        uu = unit[:, :, None] * unit[:, None, :]
        out.append(d[2][:, None, None] * uu + (d[1] / r)[:, None, None] * (eye - uu))
    return out


# ---------------------------------------------------------------------------
# jet algebra


def leibniz(tensor_jet: Sequence[np.ndarray], scalar_jet: Sequence[np.ndarray], order: int
            ) -> list[np.ndarray]:
    """Jet of ``s * A`` from jets of a scalar ``s`` and a 2-tensor ``A``.

    Missing high orders of either factor are treated as zero.
    """
    out = []
    for m in range(order + 1):
        total = None
        for k in range(m + 1):
            if k >= len(tensor_jet) or m - k >= len(scalar_jet):
                continue
            a = np.asarray(tensor_jet[k])
            s = np.asarray(scalar_jet[m - k])
            n = np.broadcast_shapes(a.shape[:1], s.shape[:1])[0]
            outer = (a.reshape(a.shape + (1,) * (m - k))
                     * s.reshape(s.shape[:1] + (1, 1) + (1,) * k + s.shape[1:]))
            outer = np.broadcast_to(outer, (n, 4, 4) + (4,) * m)
            for subset in itertools.combinations(range(m), k):
                rest = [p for p in range(m) if p not in subset]
                source = [3 + (subset.index(p) if p in subset else k + rest.index(p)) for p in range(m)]
                term = outer.transpose(0, 1, 2, *source)
                total = term.copy() if total is None else total + term
        out.append(total)
    return out


def radial_power_jet(u: np.ndarray, exponent: float, order: int) -> list[np.ndarray]:
    """Jet of ``|u|^exponent`` up to order 4, via the chain rule through ``|u|^2``."""
    s = np.sum(u * u, axis=-1)
    if np.any(s == 0.0):
        raise PoleError("radial power evaluated at its pole")
    half = exponent / 2.0
    rho = []
    coef = 1.0
    for k in range(order + 1):
        rho.append(coef * s ** (half - k))
        coef *= half - k
    eye = np.eye(4)
    out = [rho[0]]
    if order >= 1:
        out.append(2.0 * rho[1][:, None] * u)
    if order >= 2:
        uu = np.einsum("na,nb->nab", u, u)
        out.append(4.0 * rho[2][:, None, None] * uu + 2.0 * rho[1][:, None, None] * eye)
    if order >= 3:
        uuu = np.einsum("na,nb,nc->nabc", u, u, u)
        du = (np.einsum("ab,nc->nabc", eye, u) + np.einsum("ac,nb->nabc", eye, u)
              + np.einsum("bc,na->nabc", eye, u))
        out.append(8.0 * rho[3][:, None, None, None] * uuu + 4.0 * rho[2][:, None, None, None] * du)
    if order >= 4:
        e4 = (Ellipsis, None, None, None, None)
        uuuu = np.einsum("na,nb,nc,nd->nabcd", u, u, u, u)
        duu = sum(_delta_uu(eye, u, pair) for pair in itertools.combinations(range(4), 2))
        dd = (np.einsum("ab,cd->abcd", eye, eye) + np.einsum("ac,bd->abcd", eye, eye)
              + np.einsum("ad,bc->abcd", eye, eye))
        out.append(16.0 * rho[4][e4] * uuuu + 8.0 * rho[3][e4] * duu + 4.0 * rho[2][e4] * dd[None])
    if order > 4:
        raise ValueError("radial power jets are provided up to order 4")
    return out


def _delta_uu(eye: np.ndarray, u: np.ndarray, pair: tuple[int, int]) -> np.ndarray:
    names = "abcd"
    rest = [names[p] for p in range(4) if p not in pair]
    d = names[pair[0]] + names[pair[1]]
    return np.einsum(f"{d},n{rest[0]},n{rest[1]}->nabcd", eye, u, u)


# ---------------------------------------------------------------------------
# fields


class TensorField:
    """Base class: symmetric 2-tensor field on (a region of) R^4."""

    #: highest derivative order available in closed form
    analytic_order: int = -1
    #: scheme used when a jet beyond ``analytic_order`` is requested
    fd_scheme: DiffScheme | None = None

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.value(x[None, :])[0]
        return self.value(x)

    def analytic_jet(self, x: np.ndarray, order: int) -> list[np.ndarray]:
        raise NotImplementedError

    def jet(self, x, order: int, scheme: DiffScheme | None = None) -> list[np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if order <= self.analytic_order:
            return self.analytic_jet(x, order)
        scheme = scheme or self.fd_scheme or DiffScheme()
        per_point = [fd_jet(self.value, p, order, scheme)[0] for p in x]
        return [np.stack([pp[k] for pp in per_point]) for k in range(order + 1)]

    def __add__(self, other: "TensorField") -> "TensorField":
        return SumField((self, other))

    def __rmul__(self, scalar: float) -> "TensorField":
        return ScaledField(self, float(scalar))

    def __neg__(self) -> "TensorField":
        return ScaledField(self, -1.0)

    def __sub__(self, other: "TensorField") -> "TensorField":
        return SumField((self, ScaledField(other, -1.0)))


class FunctionField(TensorField):
    """A field given by a vectorized callable; derivatives by finite differences."""

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], scheme: DiffScheme | None = None):
        self._func = func
        self.fd_scheme = scheme
        self.analytic_order = 0

    def value(self, x):
        return np.asarray(self._func(np.atleast_2d(x)), dtype=float)

    def analytic_jet(self, x, order):
        return [self.value(x)]


class ConstantField(TensorField):
    analytic_order = 10

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def value(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(self.matrix, (x.shape[0], 4, 4)).copy()

    def analytic_jet(self, x, order):
        n = np.atleast_2d(x).shape[0]
        out = [self.value(x)]
        for k in range(1, order + 1):
            out.append(np.zeros((n, 4, 4) + (4,) * k))
        return out


class PolynomialField(TensorField):
    """``f(x) = sum_m c_m[i, j, a_1..a_m] u^a_1 ... u^a_m / m!`` with ``u = x - center``.

    ``c_m`` is therefore the m-th derivative of ``f`` at the centre.
    """

    analytic_order = 10

    def __init__(self, coefficients: Sequence[np.ndarray], center=None):
        self.coefficients = [np.asarray(c, dtype=float) for c in coefficients]
        for m, c in enumerate(self.coefficients):
            if c.shape != (4, 4) + (4,) * m:
                raise ValueError(f"coefficient {m} has shape {c.shape}")
        self.center = np.zeros(4) if center is None else np.asarray(center, dtype=float)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def value(self, x):
        return self.analytic_jet(np.atleast_2d(x), 0)[0]

    def analytic_jet(self, x, order):
        u = np.atleast_2d(x) - self.center
        n = u.shape[0]
        # powers[p] is u^{(x) p} flattened to (n, 4^p)
        powers = [np.ones((n, 1))]
        for _ in range(len(self.coefficients) - 1):
            powers.append((powers[-1][:, :, None] * u[:, None, :]).reshape(n, -1))
        out = []
        for k in range(order + 1):
            acc = np.zeros((n, 16 * 4**k))
            for m in range(k, len(self.coefficients)):
                flat = self.coefficients[m].reshape(16 * 4**k, 4 ** (m - k))
                acc += (powers[m - k] @ flat.T) / math.factorial(m - k)
            out.append(acc.reshape((n, 4, 4) + (4,) * k))
        return out


class SingularQuadraticField(TensorField):
    """``coefficient * Q_{m i j n} u^m u^n / |u|^4`` with ``u = x - center``.

    With ``Q`` a Weyl tensor and ``coefficient = -1/3`` this is the Euclidean
    transverse-traceless tensor that solves the flat linearized Bach equation.
    """

    analytic_order = 4

    def __init__(self, tensor, center=None, coefficient: float = -1.0 / 3.0,
                 pole_tol: float = 1e-12):
        self.tensor = np.asarray(getattr(tensor, "tensor", tensor), dtype=float)
        self.center = np.zeros(4) if center is None else np.asarray(center, dtype=float)
        self.coefficient = float(coefficient)
        self.pole_tol = pole_tol

    def _offsets(self, x):
        u = np.atleast_2d(x) - self.center
        if np.any(np.linalg.norm(u, axis=-1) <= self.pole_tol):
            raise PoleError("singular tensor evaluated at its pole")
        return u

    def quadratic_jet(self, u: np.ndarray) -> list[np.ndarray]:
        q = self.tensor
        p0 = np.einsum("mijn,km,kn->kij", q, u, u)
        p1 = np.einsum("aijn,kn->kija", q, u) + np.einsum("mija,km->kija", q, u)
        p2 = np.broadcast_to(np.einsum("aijb->ijab", q) + np.einsum("bija->ijab", q),
                             (u.shape[0], 4, 4, 4, 4))
        return [p0, p1, p2]

    def value(self, x):
        u = self._offsets(x)
        p0 = np.einsum("mijn,km,kn->kij", self.tensor, u, u)
        return self.coefficient * p0 / np.sum(u * u, axis=-1)[:, None, None] ** 2

    def analytic_jet(self, x, order):
        u = self._offsets(x)
        jets = leibniz(self.quadratic_jet(u), radial_power_jet(u, -4.0, order), order)
        return [self.coefficient * j for j in jets]


class SumField(TensorField):
    def __init__(self, parts: Sequence[TensorField]):
        flat = []
        for p in parts:
            flat.extend(p.parts if isinstance(p, SumField) else [p])
        self.parts = tuple(flat)
        self.analytic_order = min(p.analytic_order for p in self.parts)
        schemes = [p.fd_scheme for p in self.parts if p.fd_scheme is not None]
        self.fd_scheme = schemes[0] if schemes else None

    def value(self, x):
        return sum(p.value(x) for p in self.parts)

    def analytic_jet(self, x, order):
        jets = [p.analytic_jet(x, order) for p in self.parts]
        return [sum(j[k] for j in jets) for k in range(order + 1)]


class ScaledField(TensorField):
    def __init__(self, base: TensorField, factor: float):
        self.base = base
        self.factor = factor
        self.analytic_order = base.analytic_order
        self.fd_scheme = base.fd_scheme

    def value(self, x):
        return self.factor * self.base.value(x)

    def analytic_jet(self, x, order):
        return [self.factor * j for j in self.base.analytic_jet(x, order)]


class RadialProfileField(TensorField):
    """``profile(|x - center|) * base(x)``; closed-form jets up to order 2."""

    def __init__(self, base: TensorField, profile, center=None):
        self.base = base
        self.profile = profile
        self.center = np.zeros(4) if center is None else np.asarray(center, dtype=float)
        self.analytic_order = min(2, base.analytic_order)
        self.fd_scheme = base.fd_scheme

    def value(self, x):
        x = np.atleast_2d(x)
        r = np.linalg.norm(x - self.center, axis=-1)
        return self.profile(r)[:, None, None] * self.base.value(x)

    def analytic_jet(self, x, order):
        x = np.atleast_2d(x)
        scal = radial_scalar_jet(self.profile, x - self.center, order)
        return leibniz(self.base.analytic_jet(x, order), scal, order)


class ConformallyFlatField(TensorField):
    """``exp(2 phi(x)) * delta`` for a quadratic polynomial ``phi``.

    ``phi(x) = c0 + c1.x + x.c2.x / 2``.
    """

    analytic_order = 2

    def __init__(self, c0: float = 0.0, c1=None, c2=None):
        self.c0 = float(c0)
        self.c1 = np.zeros(4) if c1 is None else np.asarray(c1, dtype=float)
        c2 = np.zeros((4, 4)) if c2 is None else np.asarray(c2, dtype=float)
        self.c2 = 0.5 * (c2 + c2.T)

    def phi(self, x):
        x = np.atleast_2d(x)
        return self.c0 + x @ self.c1 + 0.5 * np.einsum("na,ab,nb->n", x, self.c2, x)

    def value(self, x):
        return np.exp(2.0 * self.phi(x))[:, None, None] * np.eye(4)

    def analytic_jet(self, x, order):
        x = np.atleast_2d(x)
        e = np.exp(2.0 * self.phi(x))
        grad = self.c1 + x @ self.c2
        eye = np.eye(4)
        out = [e[:, None, None] * eye]
        if order >= 1:
            out.append(np.einsum("n,na,ij->nija", 2.0 * e, grad, eye))
        if order >= 2:
            hess = 4.0 * np.einsum("na,nb->nab", grad, grad) + 2.0 * self.c2
            out.append(np.einsum("n,nab,ij->nijab", e, hess, eye))
        return out


def identity_field() -> ConstantField:
    return ConstantField(np.eye(4))
