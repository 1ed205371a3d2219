"""Dense linear-algebra kernel used by every transform in the package.

All operations are pure functions of their arguments and are safe to call
concurrently.  Matrices are plain 2-D float64 ``ndarray``s; every entry
point validates finiteness and shape before touching LAPACK.
"""

from typing import NamedTuple

import numpy as np

from .errors import NumericalError

_EPS = np.finfo(np.float64).eps


class SvdFactors(NamedTuple):
    """Full singular value decomposition ``A = U @ diag(sigma) @ Vt``.

    ``U`` is m x m with orthonormal columns, ``Vt`` is n x n with
    orthonormal rows and ``sigma`` holds the min(m, n) singular values in
    non-increasing order.  Signs are normalised so that the
    largest-magnitude entry of each left singular vector is positive,
    which makes the factors deterministic across runs.
    """

    U: np.ndarray
    sigma: np.ndarray
    Vt: np.ndarray


def as_matrix(a, name="matrix"):
    """Coerce to a 2-D float64 array, rejecting NaN/Inf and empty shapes."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _svd_raw(a, full_matrices):
    try:
        return np.linalg.svd(a, full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def _fix_signs(u, vt):
    """Flip singular-vector pairs so each column of U has a positive
    largest-magnitude entry (first occurrence wins on ties)."""
    idx = np.argmax(np.abs(u), axis=0)
    flip = u[idx, np.arange(u.shape[1])] < 0
    u = u.copy()
    u[:, flip] *= -1.0
    if vt is not None:
        vt = vt.copy()
        k = min(vt.shape[0], flip.size)
        vt[:k][flip[:k]] *= -1.0
    return u, vt


def _cutoff(shape, sigma, tol):
    """Absolute cutoff below which singular values count as zero.

    Floored at the smallest normal float: anything below it has no
    finite reciprocal, so keeping it would poison pseudo-inverses.
    """
    if tol is None:
        tol = max(shape) * _EPS
    if tol < 0:
        raise ValueError(f"pseudo-inverse tolerance must be >= 0, got {tol}")
    top = sigma[0] if sigma.size else 0.0
    return max(tol * top, np.finfo(np.float64).tiny)


def svd(a):
    """Full SVD with deterministic signs.

    Returns :class:`SvdFactors`; raises :class:`NumericalError` if the
    underlying decomposition fails to converge.
    """
    a = as_matrix(a)
    u, s, vt = _svd_raw(a, full_matrices=True)
    u, vt = _fix_signs(u, vt)
    return SvdFactors(U=u, sigma=s, Vt=vt)


def truncated_svd(a, k):
    """Best rank-``k`` approximation of ``a`` in the Frobenius norm.

    Keeps the ``k`` leading singular triplets; ties between equal
    singular values are broken by decomposition order, where the optimum
    is non-unique.
    """
    a = as_matrix(a)
    m, n = a.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"rank budget k={k} outside [1, {min(m, n)}]")
    u, s, vt = _svd_raw(a, full_matrices=False)
    return (u[:, :k] * s[:k]) @ vt[:k]


def pinv(a, tol=None):
    """Moore-Penrose pseudo-inverse.

    Singular values below ``tol * sigma_1`` are treated as zero; ``tol``
    defaults to ``max(m, n) * machine_epsilon``.
    """
    a = as_matrix(a)
    u, s, vt = _svd_raw(a, full_matrices=False)
    keep = s > _cutoff(a.shape, s, tol)
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def gram_sqrt_pinv(a, tol=None):
    """Pseudo-inverse of the symmetric square root of ``a @ a.T``.

    Computed from the SVD of ``a`` directly, never by forming the Gram
    matrix, which would square the condition number.  The result is
    symmetric positive semi-definite.
    """
    a = as_matrix(a)
    u, s, vt = _svd_raw(a, full_matrices=False)
    keep = s > _cutoff(a.shape, s, tol)
    return (u[:, keep] / s[keep]) @ u[:, keep].T


def left_singular_block(a, k):
    """First ``k`` left singular vectors as an m x k orthonormal block."""
    a = as_matrix(a)
    if not 1 <= k <= a.shape[0]:
        raise ValueError(f"block size k={k} outside [1, {a.shape[0]}]")
    u, s, _ = _svd_raw(a, full_matrices=True)
    u, _ = _fix_signs(u, None)
    return u[:, :k]


def null_basis(y, tol=None):
    """Orthonormal basis of the null space of ``y`` (columns), possibly
    with zero columns when the matrix has full column rank."""
    y = as_matrix(y)
    _, s_vals, vt = _svd_raw(y, full_matrices=True)
    rank = int(np.count_nonzero(s_vals > _cutoff(y.shape, s_vals, tol)))
    return vt[rank:].T


def null_projector(y, tol=None):
    """Orthogonal projector ``I - pinv(Y) @ Y`` onto the null space of Y.

    Assembled as ``N @ N.T`` from an orthonormal null-space basis rather
    than through ``pinv(Y) @ Y``: the two coincide exactly in exact
    arithmetic, but the product form leaks round-off amplified by the
    condition number of ``Y`` into the projected injection, which later
    pseudo-inverses would blow up.  The result annihilates the rows of
    ``Y`` from the right (``Y @ G = 0``) and is symmetric and idempotent.
    """
    n = null_basis(y, tol)
    g = n @ n.T
    # Symmetrise away the round-off from the product form.
    return (g + g.T) / 2.0


def rank_constrained_lsq(s, msqrt, msqrt_pinv, k):
    """Minimal-norm rank-constrained least squares.

    Returns the rank-<=``k`` matrix ``F`` minimising ``||s - F @ msqrt||``
    with minimal Frobenius norm, where ``msqrt`` is a symmetric PSD square
    root and ``msqrt_pinv`` its pseudo-inverse.  The solution truncates
    ``s`` to rank ``k`` and applies ``msqrt_pinv``.
    """
    s = as_matrix(s, "s")
    msqrt = as_matrix(msqrt, "msqrt")
    msqrt_pinv = as_matrix(msqrt_pinv, "msqrt_pinv")
    p = msqrt.shape[0]
    if msqrt.shape != (p, p) or msqrt_pinv.shape != (p, p):
        raise ValueError("msqrt and msqrt_pinv must be square and same size")
    if s.shape[1] != p:
        raise ValueError(
            f"column mismatch: s has {s.shape[1]} columns, msqrt is {p} x {p}"
        )
    if not 1 <= k <= min(s.shape):
        raise ValueError(f"rank budget k={k} outside [1, {min(s.shape)}]")
    return truncated_svd(s, k) @ msqrt_pinv


def numerical_rank(a, rel_cutoff=1e-8):
    """Rank counting singular values above ``rel_cutoff * sigma_1``."""
    a = as_matrix(a)
    s = _svd_raw(a, full_matrices=False)[1]
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_cutoff * s[0]))
