"""Algebra of rank-4 curvature-type tensors on four-dimensional Euclidean space.

Conventions used throughout the package:

* indices run over 0..3 and the distinguished direction ``e4`` is index 3;
* a Riemann-type array ``r[i, j, k, l]`` stores ``R_ijkl = g(R(e_i, e_j) e_k, e_l)``,
  so the unit round sphere has ``R_ijji = +1`` and ``R_ijij = -1``;
* Ricci is ``R_ij = R_kijl g^kl``;
* a pairwise-symmetric array ``a[k, i, j, l]`` stores ``A_kijl``, symmetric in
  ``(i, j)`` and in ``(k, l)``;
* the curvature operator acts on two-forms by
  ``W(e^i ^ e^j) = sum_{k<l} R_ijlk e^k ^ e^l``, so the round sphere maps to the
  identity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import (
    InvalidFrameError,
    NotWeylError,
    SingularMetricError,
    SymmetryViolationError,
)

STRUCTURE_TOL = 1e-12
SPECTRAL_TOL = 1e-10

E4 = np.array([0.0, 0.0, 0.0, 1.0])

#: Lexicographic basis of two-forms: e01, e02, e03, e12, e13, e23.
TWO_FORM_PAIRS = tuple(itertools.combinations(range(4), 2))

_HALF_ROOT = 1.0 / np.sqrt(2.0)
#: Rows are omega+, eta+, theta+, omega-, eta-, theta- written in the lexicographic basis,
#: with omega = e01 +- e23, eta = e02 +- e31, theta = e03 +- e12.
SD_ASD_BASIS = _HALF_ROOT * np.array(
    [
        [1, 0, 0, 0, 0, 1],
        [0, 1, 0, 0, -1, 0],
        [0, 0, 1, 1, 0, 0],
        [1, 0, 0, 0, 0, -1],
        [0, 1, 0, 0, 1, 0],
        [0, 0, 1, -1, 0, 0],
    ],
    dtype=float,
)

#: The reflection e4 -> -e4.
REFLECTION_P = np.diag([1.0, 1.0, 1.0, -1.0])

_TRIPLE_REFLECTION = np.diag([1.0, 1.0, -1.0])


def _scale(arr: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(arr))) if arr.size else 1.0)


def _as_rank4(arr, name: str = "tensor") -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.shape != (4, 4, 4, 4):
        raise SymmetryViolationError(f"{name} must have shape (4, 4, 4, 4), got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise SymmetryViolationError(f"{name} has non-finite entries")
    return out


def _as_symmetric(arr, name: str = "matrix", tol: float = STRUCTURE_TOL) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.shape != (4, 4):
        raise SymmetryViolationError(f"{name} must have shape (4, 4), got {out.shape}")
    if np.max(np.abs(out - out.T)) > tol * _scale(out):
        raise SymmetryViolationError(f"{name} is not symmetric")
    return out


# ---------------------------------------------------------------------------
# symmetry checks


def pairwise_symmetry_defect(a: np.ndarray) -> float:
    """Largest violation of ``A_kijl = A_kjil = A_lijk``."""
    a = np.asarray(a, dtype=float)
    return float(
        max(
            np.max(np.abs(a - a.transpose(0, 2, 1, 3))),
            np.max(np.abs(a - a.transpose(3, 1, 2, 0))),
        )
    )


def riemann_symmetry_defect(r: np.ndarray) -> float:
    """Largest violation among the algebraic Riemann symmetries and first Bianchi."""
    r = np.asarray(r, dtype=float)
    return float(
        max(
            np.max(np.abs(r + r.transpose(1, 0, 2, 3))),
            np.max(np.abs(r + r.transpose(0, 1, 3, 2))),
            np.max(np.abs(r - r.transpose(2, 3, 0, 1))),
            np.max(np.abs(r + r.transpose(1, 2, 0, 3) + r.transpose(2, 0, 1, 3))),
        )
    )


def check_pairwise(a, tol: float = STRUCTURE_TOL) -> np.ndarray:
    a = _as_rank4(a, "pairwise tensor")
    if pairwise_symmetry_defect(a) > tol * _scale(a):
        raise SymmetryViolationError("tensor is not symmetric in (i, j) and in (k, l)")
    return a


def check_riemann(r, tol: float = STRUCTURE_TOL) -> np.ndarray:
    r = _as_rank4(r, "Riemann tensor")
    if riemann_symmetry_defect(r) > tol * _scale(r):
        raise SymmetryViolationError("tensor lacks the algebraic Riemann symmetries")
    return r


# ---------------------------------------------------------------------------
# pairwise-symmetric tensors


def riemann_projector(a) -> np.ndarray:
    """Project a pairwise-symmetric ``A_kijl`` onto its Riemann-type part.

    Returns ``(A_kijl - A_ikjl - A_kilj + A_iklj) / 4``.  Tensors that already
    carry the Riemann symmetries are accepted too and are returned unchanged,
    which makes the map idempotent.
    """
    a = _as_rank4(a, "pairwise tensor")
    tol = STRUCTURE_TOL * _scale(a)
    if pairwise_symmetry_defect(a) > tol and riemann_symmetry_defect(a) > tol:
        raise SymmetryViolationError("tensor is neither pairwise symmetric nor of Riemann type")
    return 0.25 * (
        a
        - a.transpose(1, 0, 2, 3)
        - a.transpose(0, 1, 3, 2)
        + a.transpose(1, 0, 3, 2)
    )


def symmetrize_outer(r: np.ndarray) -> np.ndarray:
    """``R_kijl + R_lijk``: the pairwise-symmetric tensor built from a Riemann tensor."""
    r = np.asarray(r, dtype=float)
    return r + r.transpose(3, 1, 2, 0)


def gauge_tensor(x_gauge) -> np.ndarray:
    """Pairwise tensor ``C_kijl = X_i,jkl + X_j,ikl`` generated by a gauge array."""
    x = np.asarray(x_gauge, dtype=float)
    return np.einsum("ijkl->kijl", x) + np.einsum("jikl->kijl", x)


@dataclass(frozen=True)
class PairwiseDecomposition:
    """``A = t_part + gauge_tensor(x_gauge)`` with ``t_part`` of curvature type."""

    t_part: np.ndarray
    x_gauge: np.ndarray
    riemann: np.ndarray

    @property
    def gauge_part(self) -> np.ndarray:
        return gauge_tensor(self.x_gauge)


def decompose_pairwise(a) -> PairwiseDecomposition:
    """Split a pairwise-symmetric tensor into a curvature part and a pure-gauge part.

    The curvature part is ``(2/3)(R_kijl + R_lijk)`` with ``R`` the projection of
    ``a``.  The gauge array satisfies ``2 X_i,jkl = C_kijl + C_jikl - C_ijkl``
    where ``C = a - t_part``; it is symmetric in its last three slots.
    """
    a = check_pairwise(a)
    riemann = riemann_projector(a)
    t_part = (2.0 / 3.0) * symmetrize_outer(riemann)
    c = a - t_part
    x = 0.5 * (np.einsum("kijl->ijkl", c) + np.einsum("jikl->ijkl", c) - c)
    return PairwiseDecomposition(t_part=t_part, x_gauge=x, riemann=riemann)


# ---------------------------------------------------------------------------
# Kulkarni-Nomizu product and the Weyl tensor


def kulkarni_nomizu(a, b) -> np.ndarray:
    """Kulkarni-Nomizu product matched to the Riemann sign convention of this package.

    ``(a o b)_ijkl = a_il b_jk + a_jk b_il - a_ik b_jl - a_jl b_ik``, so that the
    unit round sphere is ``(g o g) / 2`` and ``(delta o delta)_ijji = 2``.
    """
    a = _as_symmetric(a, "first factor")
    b = _as_symmetric(b, "second factor")
    return (
        np.einsum("il,jk->ijkl", a, b)
        + np.einsum("jk,il->ijkl", a, b)
        - np.einsum("ik,jl->ijkl", a, b)
        - np.einsum("jl,ik->ijkl", a, b)
    )


def _inverse_metric(g) -> np.ndarray:
    g = _as_symmetric(g, "metric", tol=1e-10)
    try:
        eig = np.linalg.eigvalsh(g)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigvalsh on finite input
        raise SingularMetricError(str(exc)) from exc
    if eig[0] <= 1e-14 * max(1.0, eig[-1]):
        raise SingularMetricError(f"metric is not positive definite (eigenvalues {eig})")
    return np.linalg.inv(g)


def ricci_contraction(r, g_inv) -> np.ndarray:
    return np.einsum("kijl,kl->ij", r, g_inv)


def weyl_tensor(r, g) -> np.ndarray:
    """Raw Weyl array of a Riemann-type array ``r`` with respect to the metric ``g``.

    Implements ``W = R - (1/2)(Ric o g) + (scal/12)(g o g)`` for dimension four.
    """
    g = np.asarray(g, dtype=float)
    g_inv = _inverse_metric(g)
    r = np.asarray(r, dtype=float)
    ricci = ricci_contraction(r, g_inv)
    scalar = float(np.einsum("ij,ij->", ricci, g_inv))
    ricci_part = (
        np.einsum("jk,il->ijkl", ricci, g)
        + np.einsum("il,jk->ijkl", ricci, g)
        - np.einsum("ik,jl->ijkl", ricci, g)
        - np.einsum("jl,ik->ijkl", ricci, g)
    )
    scalar_part = np.einsum("jk,il->ijkl", g, g) - np.einsum("ik,jl->ijkl", g, g)
    return r - 0.5 * ricci_part + (scalar / 6.0) * scalar_part


# ---------------------------------------------------------------------------
# curvature operator


def curvature_operator(r) -> np.ndarray:
    """Symmetric 6x6 matrix of a Riemann-type tensor acting on two-forms.

    Entry ``[(kl), (ij)]`` equals ``R_ijlk`` for ``k < l`` and ``i < j``, so
    ``|r|^2 = 4 |matrix|^2``.
    """
    r = np.asarray(r, dtype=float)
    idx = np.array(TWO_FORM_PAIRS)
    i, j = idx[:, 0], idx[:, 1]
    # matrix[a, b] with a = (k, l) and b = (i, j)
    return r[i[None, :], j[None, :], idx[:, 1][:, None], idx[:, 0][:, None]]


def tensor_from_operator(matrix) -> np.ndarray:
    """Inverse of :func:`curvature_operator` for symmetric 6x6 matrices."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (6, 6):
        raise SymmetryViolationError(f"operator must be 6x6, got {m.shape}")
    r = np.zeros((4, 4, 4, 4))
    for a, (k, l) in enumerate(TWO_FORM_PAIRS):
        for b, (i, j) in enumerate(TWO_FORM_PAIRS):
            v = m[a, b]
            r[i, j, l, k] = v
            r[j, i, l, k] = -v
            r[i, j, k, l] = -v
            r[j, i, k, l] = v
    return r


def two_form_action(frame: np.ndarray) -> np.ndarray:
    """Matrix of the induced action of a 4x4 frame on the lexicographic two-form basis."""
    f = np.asarray(frame, dtype=float)
    idx = np.array(TWO_FORM_PAIRS)
    i, j = idx[:, 0][:, None], idx[:, 1][:, None]
    k, l = idx[:, 0][None, :], idx[:, 1][None, :]
    return f[i, k] * f[j, l] - f[i, l] * f[j, k]


# ---------------------------------------------------------------------------
# frames


@dataclass(frozen=True)
class FrameRotation:
    """A proper rotation of R^4; column ``a`` is the new basis vector ``e'_a``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (4, 4) or not np.all(np.isfinite(m)):
            raise InvalidFrameError("frame must be a finite 4x4 matrix")
        if np.max(np.abs(m.T @ m - np.eye(4))) > STRUCTURE_TOL * 100:
            raise InvalidFrameError("frame is not orthogonal")
        if np.linalg.det(m) < 0:
            raise InvalidFrameError("frame has determinant -1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "FrameRotation":
        return cls(np.eye(4))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "FrameRotation":
        q, rmat = np.linalg.qr(rng.normal(size=(4, 4)))
        q = q * np.sign(np.diag(rmat))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        return cls(q)

    def apply(self, tensor) -> np.ndarray:
        """Components of a covariant tensor of any rank in the rotated frame."""
        t = np.asarray(tensor, dtype=float)
        out = t
        for axis in range(t.ndim):
            out = np.moveaxis(np.tensordot(out, self.matrix, axes=([axis], [0])), -1, axis)
        return out


def rotate(tensor, frame) -> np.ndarray:
    """Covariant components of ``tensor`` in the frame whose columns are ``frame``."""
    fr = frame if isinstance(frame, FrameRotation) else FrameRotation(frame)
    return fr.apply(tensor)


def _quaternion_left(p: np.ndarray) -> np.ndarray:
    a, b, c, d = p
    return np.array([[a, -b, -c, -d], [b, a, -d, c], [c, d, a, -b], [d, -c, b, a]])


def _quaternion_right_conjugate(q: np.ndarray) -> np.ndarray:
    a, b, c, d = q
    return np.array([[a, b, c, d], [-b, a, -d, c], [-c, d, a, -b], [-d, -c, b, a]])


def _unit_quaternion(rotation3: np.ndarray) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(rotation3).as_quat()
    return np.array([w, x, y, z])


def lift_to_so4(sd_rotation, asd_rotation) -> FrameRotation:
    """A frame whose action on self-dual and anti-self-dual forms is the given pair.

    Coordinates are identified with quaternions ``x0 + x1 i + x2 j + x3 k``.  Left
    multiplication by a unit quaternion rotates only self-dual forms and right
    multiplication by a conjugate rotates only anti-self-dual forms.
    """
    p = _unit_quaternion(np.asarray(sd_rotation, dtype=float))
    q = _unit_quaternion(np.asarray(asd_rotation, dtype=float))
    return FrameRotation(_quaternion_left(p) @ _quaternion_right_conjugate(q))


# ---------------------------------------------------------------------------
# Weyl data


def _block_diag(sd_block, asd_block) -> np.ndarray:
    out = np.zeros((6, 6))
    out[:3, :3] = sd_block
    out[3:, 3:] = asd_block
    return out


@dataclass(frozen=True)
class WeylData:
    """A Weyl tensor in an orthonormal frame, together with its operator blocks."""

    tensor: np.ndarray
    operator: np.ndarray = field(repr=False)
    sd_block: np.ndarray = field(repr=False)
    asd_block: np.ndarray = field(repr=False)

    @classmethod
    def from_tensor(cls, tensor, tol: float = SPECTRAL_TOL) -> "WeylData":
        w = check_riemann(tensor, tol=tol)
        scale = _scale(w)
        if np.max(np.abs(np.einsum("ikjk->ij", w))) > tol * scale:
            raise NotWeylError("tensor has a nonzero trace")
        operator = curvature_operator(w)
        rotated = SD_ASD_BASIS @ operator @ SD_ASD_BASIS.T
        if np.max(np.abs(rotated[:3, 3:])) > tol * scale:
            raise NotWeylError("operator couples self-dual and anti-self-dual forms")
        for arr in (w, operator):
            arr.setflags(write=False)
        sd = rotated[:3, :3].copy()
        asd = rotated[3:, 3:].copy()
        sd.setflags(write=False)
        asd.setflags(write=False)
        return cls(tensor=w, operator=operator, sd_block=sd, asd_block=asd)

    @classmethod
    def from_blocks(cls, sd_block, asd_block, tol: float = SPECTRAL_TOL) -> "WeylData":
        """Assemble a Weyl tensor from symmetric trace-free 3x3 blocks."""
        blocks = []
        for name, blk in (("sd_block", sd_block), ("asd_block", asd_block)):
            b = np.asarray(blk, dtype=float)
            if b.shape != (3, 3) or np.max(np.abs(b - b.T)) > tol * _scale(b):
                raise NotWeylError(f"{name} must be a symmetric 3x3 matrix")
            if abs(np.trace(b)) > tol * _scale(b):
                raise NotWeylError(f"{name} must be trace-free")
            blocks.append(b)
        operator = SD_ASD_BASIS.T @ _block_diag(*blocks) @ SD_ASD_BASIS
        return cls.from_tensor(tensor_from_operator(operator), tol=tol)

    @classmethod
    def from_eigenvalues(cls, sd_eigs, asd_eigs) -> "WeylData":
        return cls.from_blocks(np.diag(sd_eigs), np.diag(asd_eigs))

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 1.0) -> "WeylData":
        def block():
            m = rng.normal(size=(3, 3))
            m = m + m.T
            return scale * (m - np.trace(m) / 3.0 * np.eye(3))

        return cls.from_blocks(block(), block())

    @property
    def norm_sq(self) -> float:
        """``|W|^2 = W_ijkl W_ijkl``."""
        return float(np.sum(self.tensor**2))

    def rotated(self, frame) -> "WeylData":
        return WeylData.from_tensor(rotate(self.tensor, frame))

    def is_self_dual(self, tol: float = SPECTRAL_TOL) -> bool:
        return float(np.max(np.abs(self.asd_block))) <= tol * _scale(self.tensor)


def as_weyl(w) -> WeylData:
    return w if isinstance(w, WeylData) else WeylData.from_tensor(w)


def weyl_from_riemann(r, g=None) -> WeylData:
    """Weyl part of a Riemann-type tensor given in an orthonormal frame or with metric ``g``.

    For a general metric the components are first moved to a ``g``-orthonormal
    frame (symmetric square root of ``g``) so that the returned :class:`WeylData`
    is expressed in the Euclidean conventions of this module.
    """
    g = np.eye(4) if g is None else np.asarray(g, dtype=float)
    r = check_riemann(r, tol=1e-10)
    w = weyl_tensor(r, g)
    if np.allclose(g, np.eye(4), rtol=0, atol=STRUCTURE_TOL):
        return WeylData.from_tensor(w)
    eig, vec = np.linalg.eigh(g)
    frame = vec @ np.diag(eig**-0.5) @ vec.T
    w_orth = w
    for axis in range(4):
        w_orth = np.moveaxis(np.tensordot(w_orth, frame, axes=([axis], [0])), -1, axis)
    return WeylData.from_tensor(w_orth)


def sd_asd_split(w) -> tuple[np.ndarray, np.ndarray]:
    data = as_weyl(w)
    return np.array(data.sd_block), np.array(data.asd_block)


# ---------------------------------------------------------------------------
# Derdzinski frame


def _ordered_eigenvectors(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(block)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    for col in range(3):
        v = vecs[:, col]
        nz = np.flatnonzero(np.abs(v) > 1e-12)
        if nz.size and v[nz[0]] < 0:
            vecs[:, col] = -v
    if np.linalg.det(vecs) < 0:
        vecs[:, 2] = -vecs[:, 2]
    return vals, vecs


def _multiplicities(vals: np.ndarray, tol: float) -> tuple[int, ...]:
    out = []
    for v in vals:
        out.append(int(np.sum(np.abs(vals - v) <= tol)))
    return tuple(out)


@dataclass(frozen=True)
class DerdzinskiFrame:
    frame: FrameRotation
    eigenvalues: tuple[float, float, float, float, float, float]
    multiplicities: tuple[int, ...]

    @property
    def sd_eigenvalues(self) -> np.ndarray:
        return np.array(self.eigenvalues[:3])

    @property
    def asd_eigenvalues(self) -> np.ndarray:
        return np.array(self.eigenvalues[3:])


def derdzinski_diagonalize(w) -> DerdzinskiFrame:
    """Oriented orthonormal frame in which both operator blocks are diagonal.

    Eigenvalues are returned as ``(lambda+, mu+, nu+, lambda-, mu-, nu-)``, each
    triple sorted in descending order.
    """
    data = as_weyl(w)
    sd_vals, sd_vecs = _ordered_eigenvectors(np.array(data.sd_block))
    asd_vals, asd_vecs = _ordered_eigenvectors(np.array(data.asd_block))
    frame = lift_to_so4(sd_vecs, asd_vecs)
    tol = SPECTRAL_TOL * _scale(data.tensor)
    mult = _multiplicities(sd_vals, tol) + _multiplicities(asd_vals, tol)
    eig = tuple(float(v) for v in np.concatenate([sd_vals, asd_vals]))
    return DerdzinskiFrame(frame=frame, eigenvalues=eig, multiplicities=mult)


# ---------------------------------------------------------------------------
# products and the reflection


def star_product(w1, w2) -> float:
    """``W1 * W2 = sum W2_kijl (W1_kijl + W1_lijk)``."""
    a = np.asarray(getattr(w1, "tensor", w1), dtype=float)
    b = np.asarray(getattr(w2, "tensor", w2), dtype=float)
    return float(np.einsum("kijl,kijl->", b, a + a.transpose(3, 1, 2, 0)))


def inner(w1, w2) -> float:
    a = np.asarray(getattr(w1, "tensor", w1), dtype=float)
    b = np.asarray(getattr(w2, "tensor", w2), dtype=float)
    return float(np.einsum("ijkl,ijkl->", a, b))


def reflect(tensor) -> np.ndarray:
    """``W o P`` with ``P`` the reflection ``e4 -> -e4``."""
    t = np.asarray(getattr(tensor, "tensor", tensor), dtype=float)
    sign = np.array([1.0, 1.0, 1.0, -1.0])
    return t * np.einsum("i,j,k,l->ijkl", sign, sign, sign, sign)


@dataclass(frozen=True)
class ReflectionInteraction:
    reflected: np.ndarray
    inner: float
    eigen_formula: float
    operator_residual: float


def reflect_and_interact(w, frame=None) -> ReflectionInteraction:
    """Reflect ``w`` (expressed in ``frame``) across ``e4`` and measure its overlap.

    ``inner`` is the full contraction of ``W`` with ``W o P``; ``eigen_formula`` is
    ``8 (lambda+ lambda- + mu+ mu- + nu+ nu-)`` built from the diagonal entries of
    the blocks in that frame.  They agree whenever the frame diagonalizes both
    blocks.
    """
    data = as_weyl(w)
    if frame is None:
        frame = derdzinski_diagonalize(data).frame
    elif not isinstance(frame, FrameRotation):
        frame = FrameRotation(frame)
    in_frame = WeylData.from_tensor(frame.apply(data.tensor))
    reflected = reflect(in_frame.tensor)
    contraction = inner(in_frame.tensor, reflected)
    eigen = 8.0 * float(np.dot(np.diag(in_frame.sd_block), np.diag(in_frame.asd_block)))
    p_hat = two_form_action(REFLECTION_P)
    residual = float(
        np.max(np.abs(curvature_operator(reflected) - p_hat @ in_frame.operator @ p_hat.T))
    )
    return ReflectionInteraction(
        reflected=reflected, inner=contraction, eigen_formula=eigen, operator_residual=residual
    )


def reflection_contraction(w) -> float:
    """Frame-dependent ``W . W^P`` for ``w`` as given: ``8 tr(b+ J b- J)``."""
    data = as_weyl(w)
    return 8.0 * float(
        np.trace(data.sd_block @ _TRIPLE_REFLECTION @ data.asd_block @ _TRIPLE_REFLECTION)
    )


def _octahedral_rotations() -> list[np.ndarray]:
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            m = np.zeros((3, 3))
            for row, col in enumerate(perm):
                m[row, col] = signs[row]
            if np.linalg.det(m) > 0:
                out.append(m)
    return out


#: The 24 signed permutation matrices of determinant one.
SIGNED_PAIRINGS = tuple(_octahedral_rotations())


def best_eigen_pairing(sd_eigs, asd_eigs) -> tuple[float, np.ndarray]:
    """Maximize ``sum lambda+_a lambda-_pi(a)`` over the 24 signed pairings.

    Returns the maximal sum and the signed permutation achieving it.
    """
    sd = np.asarray(sd_eigs, dtype=float)
    asd = np.asarray(asd_eigs, dtype=float)
    best, best_rot = -np.inf, SIGNED_PAIRINGS[0]
    for rot in SIGNED_PAIRINGS:
        value = float(np.trace(np.diag(sd) @ rot @ np.diag(asd) @ rot.T))
        if value > best + 1e-15:
            best, best_rot = value, rot
    return best, best_rot


def random_riemann(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """A random algebraic curvature tensor (symmetric operator with Bianchi)."""
    m = rng.normal(size=(6, 6))
    m = scale * (m + m.T)
    # The Bianchi identity on a symmetric operator reduces to equal traces of the
    # two diagonal blocks in the self-dual basis.
    rotated = SD_ASD_BASIS @ m @ SD_ASD_BASIS.T
    shift = (np.trace(rotated[:3, :3]) - np.trace(rotated[3:, 3:])) / 6.0
    rotated[:3, :3] -= shift * np.eye(3)
    rotated[3:, 3:] += shift * np.eye(3)
    return tensor_from_operator(SD_ASD_BASIS.T @ rotated @ SD_ASD_BASIS)


def random_pairwise(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(4, 4, 4, 4)) * scale
    a = a + a.transpose(0, 2, 1, 3)
    return 0.5 * (a + a.transpose(3, 1, 2, 0))
