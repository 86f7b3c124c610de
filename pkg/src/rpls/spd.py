"""Affine-invariant geometry on the cone of symmetric positive definite matrices.

All matrix functions go through a symmetric eigendecomposition of the
symmetrized input.  Functions accept a single ``(R, R)`` matrix; ``mat_fn``,
``vec`` and ``unvec`` also broadcast over leading batch dimensions.

Tangent vectors returned by :func:`log_map` and :func:`unvec_at` are
:class:`TangentVector` instances that remember their base point, so that
using them at the wrong base raises :class:`~rpls.exceptions.BaseMismatch`.
Plain arrays are accepted wherever a tangent vector is expected and are
assumed to live at the supplied base.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh

from .exceptions import BaseMismatch, InvalidInput, NotPositiveDefinite

# smallest eigenvalue must exceed this fraction of the largest
SPD_RTOL = 1e-10
# relative asymmetry tolerated before an input is rejected outright
SYM_RTOL = 1e-10

_FUNCTIONS = {
    "sqrt": np.sqrt,
    "inv_sqrt": lambda w: 1.0 / np.sqrt(w),
    "log": np.log,
    "exp": np.exp,
    "inverse": lambda w: 1.0 / w,
}
_NEEDS_PD = {"sqrt", "inv_sqrt", "log", "inverse"}


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Symmetric matrix attached to a base point of the SPD manifold."""

    matrix: np.ndarray
    base: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    @property
    def dim(self):
        return self.matrix.shape[-1]


def symmetrize(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _check_square(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidInput(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return A


def sym_eigen(A):
    """Eigendecomposition of a symmetric matrix (or stack of them).

    Returns
    -------
    w : ndarray, shape (..., R)
        Eigenvalues in ascending order.
    V : ndarray, shape (..., R, R)
        Orthogonal eigenvectors, ``A = V @ diag(w) @ V.T``.
    """
    A = _check_square(A)
    return np.linalg.eigh(symmetrize(A))


def _apply(w, V, f):
    return symmetrize((V * f(w)[..., None, :]) @ np.swapaxes(V, -1, -2))


def mat_fn(A, f):
    """Apply a scalar function to the spectrum of a symmetric matrix.

    Parameters
    ----------
    A : array_like, shape (..., R, R)
        Symmetric matrix or stack of matrices.
    f : {'sqrt', 'inv_sqrt', 'log', 'exp', 'inverse'}
        Spectral function.  All but ``'exp'`` require a positive definite
        input.
    """
    if f not in _FUNCTIONS:
        raise InvalidInput(f"unknown matrix function {f!r}")
    w, V = sym_eigen(A)
    if f in _NEEDS_PD and np.any(w <= 0):
        raise NotPositiveDefinite(
            f"matrix function {f!r} needs a positive definite input "
            f"(smallest eigenvalue {w.min():.3e})"
        )
    return _apply(w, V, _FUNCTIONS[f])


def is_spd(A, rtol=SPD_RTOL):
    try:
        check_spd(A, rtol=rtol)
    except InvalidInput:
        return False
    return True


def check_spd(A, name="matrix", rtol=SPD_RTOL):
    """Validate and return a symmetrized copy of an SPD matrix."""
    A = _check_square(A, name)
    scale = np.max(np.abs(A)) if A.size else 0.0
    asym = np.max(np.abs(A - np.swapaxes(A, -1, -2))) if A.size else 0.0
    if asym > SYM_RTOL * max(scale, np.finfo(float).tiny):
        raise NotPositiveDefinite(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    A = symmetrize(A)
    w = np.linalg.eigvalsh(A)
    lo, hi = w[..., 0], w[..., -1]
    if np.any(hi <= 0) or np.any(lo <= rtol * hi):
        raise NotPositiveDefinite(
            f"{name} is not positive definite (eigenvalue range "
            f"[{np.min(lo):.3e}, {np.max(hi):.3e}])"
        )
    return A


def _roots(base):
    """Return ``(base^{1/2}, base^{-1/2})`` from one eigendecomposition."""
    w, V = sym_eigen(base)
    return _apply(w, V, np.sqrt), _apply(w, V, _FUNCTIONS["inv_sqrt"])


def _tangent_matrix(base, U, name="U"):
    if isinstance(U, TangentVector):
        if U.base.shape != base.shape or not np.array_equal(U.base, base):
            raise BaseMismatch(f"tangent vector {name} is attached to a different base point")
        U = U.matrix
    U = _check_square(U, name)
    if U.shape != base.shape:
        raise BaseMismatch(f"{name} has shape {U.shape}, base has shape {base.shape}")
    return symmetrize(U)


def metric(base, U, V):
    """Affine-invariant inner product ``tr(U A^{-1} V A^{-1})`` at ``base``."""
    base = check_spd(base, "base")
    U = _tangent_matrix(base, U, "U")
    V = _tangent_matrix(base, V, "V")
    _, isq = _roots(base)
    return float(np.sum((isq @ U @ isq) * (isq @ V @ isq)))


def norm(base, U):
    return np.sqrt(max(metric(base, U, U), 0.0))


def distance(A, B):
    """Affine-invariant Riemannian distance between two SPD matrices."""
    A = check_spd(A, "A")
    B = check_spd(B, "B")
    if A.shape != B.shape:
        raise InvalidInput(f"shape mismatch: {A.shape} vs {B.shape}")
    # generalized eigenvalues of (B, A) are the eigenvalues of A^{-1/2} B A^{-1/2}
    sigma = eigvalsh(B, A)
    return float(np.sqrt(np.sum(np.log(sigma) ** 2)))


def exp_map(base, U):
    """Riemannian exponential ``A^{1/2} Exp(A^{-1/2} U A^{-1/2}) A^{1/2}``."""
    base = check_spd(base, "base")
    U = _tangent_matrix(base, U)
    sq, isq = _roots(base)
    return symmetrize(sq @ mat_fn(isq @ U @ isq, "exp") @ sq)


def log_map(base, B):
    """Riemannian logarithm of ``B`` at ``base``, as a :class:`TangentVector`."""
    base = check_spd(base, "base")
    B = check_spd(B, "B")
    if B.shape != base.shape:
        raise InvalidInput(f"shape mismatch: {base.shape} vs {B.shape}")
    sq, isq = _roots(base)
    return TangentVector(symmetrize(sq @ mat_fn(isq @ B @ isq, "log") @ sq), base)


def vec_dim(R):
    return R * (R + 1) // 2


def dim_from_vec(D):
    R = int(round((np.sqrt(8 * D + 1) - 1) / 2))
    if vec_dim(R) != D:
        raise InvalidInput(f"length {D} is not R(R+1)/2 for any integer R")
    return R


def coordinate_pairs(R):
    """ROI index pairs ``(i, j)`` of the Vec coordinates, diagonal first."""
    iu, ju = np.triu_indices(R, 1)
    diag = [(i, i) for i in range(R)]
    return diag + list(zip(iu.tolist(), ju.tolist()))


def vec(U):
    """Vec at the identity: diagonal, then upper off-diagonals (row-major) times sqrt(2)."""
    U = np.asarray(U, dtype=float)
    R = U.shape[-1]
    iu, ju = np.triu_indices(R, 1)
    diag = np.diagonal(U, axis1=-2, axis2=-1)
    return np.concatenate([diag, np.sqrt(2.0) * U[..., iu, ju]], axis=-1)


def unvec(v):
    """Inverse of :func:`vec`; broadcasts over leading dimensions."""
    v = np.asarray(v, dtype=float)
    R = dim_from_vec(v.shape[-1])
    iu, ju = np.triu_indices(R, 1)
    U = np.zeros(v.shape[:-1] + (R, R))
    idx = np.arange(R)
    U[..., idx, idx] = v[..., :R]
    off = v[..., R:] / np.sqrt(2.0)
    U[..., iu, ju] = off
    U[..., ju, iu] = off
    return U


def vec_at(base, U):
    """Isometric coordinates ``Vec(A^{-1/2} U A^{-1/2})`` of a tangent vector at ``base``."""
    base = check_spd(base, "base")
    U = _tangent_matrix(base, U)
    _, isq = _roots(base)
    return vec(isq @ U @ isq)


def unvec_at(base, v):
    """Tangent vector at ``base`` whose :func:`vec_at` coordinates are ``v``."""
    base = check_spd(base, "base")
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != vec_dim(base.shape[-1]):
        raise InvalidInput(
            f"expected {vec_dim(base.shape[-1])} coordinates for a "
            f"{base.shape[-1]}x{base.shape[-1]} base, got shape {v.shape}"
        )
    sq, _ = _roots(base)
    return TangentVector(symmetrize(sq @ unvec(v) @ sq), base)


def log_coords(base, samples):
    """Vec coordinates of ``Log_base`` for a stack of SPD matrices, shape (n, D)."""
    base = check_spd(base, "base")
    samples = np.stack([check_spd(S, f"sample {i}") for i, S in enumerate(samples)])
    if samples.shape[1:] != base.shape:
        raise InvalidInput(f"sample shape {samples.shape[1:]} does not match base {base.shape}")
    _, isq = _roots(base)
    return vec(mat_fn(isq @ samples @ isq, "log"))


def exp_coords(base, coords):
    """Inverse of :func:`log_coords`: map rows of coordinates back onto the manifold."""
    base = check_spd(base, "base")
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.shape[-1] != vec_dim(base.shape[-1]):
        raise InvalidInput(f"expected {vec_dim(base.shape[-1])} coordinates, got {coords.shape[-1]}")
    sq, _ = _roots(base)
    return symmetrize(sq @ mat_fn(unvec(coords), "exp") @ sq)


def random_spd(R, rng, condition=10.0):
    """Random SPD matrix with eigenvalues log-uniform in ``[1, condition]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((R, R)))
    w = np.exp(rng.uniform(0.0, np.log(condition), size=R))
    return symmetrize((Q * w) @ Q.T)
