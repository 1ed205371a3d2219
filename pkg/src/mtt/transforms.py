"""Closed-form sample-based transforms.

``gbt1_fit`` solves the single-term problem min ||X - D C Y|| over
rank-limited maps.  ``step1_fit`` extends it with a second term acting on
the projected injection Z = V G, where G annihilates the rows of Y; the
orthogonality Z Y^T = 0 decouples the two terms, so each is solved by the
same minimal-norm rank-constrained recipe.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import matops
from .errors import DegenerateInjectionError

# Relative threshold under which the projected injection counts as zero.
_DEGENERATE_RTOL = 1e-10


@dataclass
class FactorPair:
    """Decompressor/compressor pair ``(D, C)`` with rank budget ``k``.

    ``D`` (m x k) has orthonormal columns; ``C`` is k x n.  The composed
    map ``D @ C`` has rank at most ``k``.
    """

    D: np.ndarray
    C: np.ndarray
    k: int

    def compose(self):
        return self.D @ self.C


@dataclass
class TwoTermTransform:
    """Fitted two-term transform: ``Y, V -> D1 C1 Y + D2 C2 (V G)``."""

    first: FactorPair
    second: FactorPair
    G: np.ndarray


class ErrorReport(NamedTuple):
    """Squared Frobenius reconstruction error, raw and per entry."""

    raw: float
    per_entry: float


def _best_rank_pair(x, w, k, pinv_tol=None):
    """Minimal-norm rank-``k`` fit of ``x`` against ``w``.

    Solves min ||x - D C w|| with D orthonormal m x k.  D is the leading
    left-singular block of S_w = x w^T ((w w^T)^{1/2})^+ and
    C = D^T x w^+; both are assembled from a single decomposition of w so
    the pseudo-inverse pieces share one cutoff.
    """
    uw, sw, vwt = matops._svd_raw(w, full_matrices=False)
    keep = sw > matops._cutoff(w.shape, sw, pinv_tol)
    xv = x @ vwt[keep].T                      # x restricted to row(w)
    s_w = xv @ uw[:, keep].T
    d = matops.left_singular_block(s_w, k)
    c = (d.T @ xv) / sw[keep] @ uw[:, keep].T
    return FactorPair(D=d, C=c, k=k)


def gbt1_fit(x, y, k, pinv_tol=None):
    """Fit the single-term transform: the best rank-``k`` map Y -> X.

    Returns the pair minimising ||X - D C Y|| over maps of rank at most
    ``k`` (minimal-norm solution).
    """
    x = matops.as_matrix(x, "x")
    y = matops.as_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValueError(
            f"sample counts differ: x has {x.shape[1]}, y has {y.shape[1]}"
        )
    if not 1 <= k <= min(x.shape[0], y.shape[0]):
        raise ValueError(
            f"rank budget k={k} outside [1, {min(x.shape[0], y.shape[0])}]"
        )
    return _best_rank_pair(x, y, k, pinv_tol)


def project_injection(v, g):
    """Project an injection onto the observation's null space: Z = V G.

    Raises :class:`DegenerateInjectionError` when the projection is
    numerically zero (all rows of V inside the row space of Y).
    """
    z = v @ g
    if np.linalg.norm(z) <= _DEGENERATE_RTOL * np.linalg.norm(v):
        raise DegenerateInjectionError(
            "injection lies in the row space of the observation (V G = 0)"
        )
    return z


def step1_fit(x, y, v0, k1, k2, pinv_tol=None):
    """Fit the two-term transform at a fixed injection ``v0``.

    Computes G = I - pinv(Y) Y, Z0 = V0 G, then solves the decoupled
    problems for the first pair (against Y) and the second pair (against
    Z0).  The result is the global minimiser of
    ||X - D1 C1 Y - D2 C2 Z0|| under the rank budgets.
    """
    x = matops.as_matrix(x, "x")
    y = matops.as_matrix(y, "y")
    v0 = matops.as_matrix(v0, "v0")
    s = x.shape[1]
    if y.shape[1] != s or v0.shape[1] != s:
        raise ValueError(
            f"sample counts differ: x {x.shape[1]}, y {y.shape[1]}, v0 {v0.shape[1]}"
        )
    if not 1 <= k2 <= min(x.shape[0], v0.shape[0]):
        raise ValueError(
            f"rank budget k2={k2} outside [1, {min(x.shape[0], v0.shape[0])}]"
        )
    g = matops.null_projector(y, pinv_tol)
    z0 = project_injection(v0, g)
    first = gbt1_fit(x, y, k1, pinv_tol)
    second = _best_rank_pair(x, z0, k2, pinv_tol)
    return TwoTermTransform(first=first, second=second, G=g)


def apply_transform(t, y, v):
    """Evaluate a fitted transform on inputs: D1 C1 Y + D2 C2 (V G)."""
    y = matops.as_matrix(y, "y")
    v = matops.as_matrix(v, "v")
    if y.shape[0] != t.first.C.shape[1]:
        raise ValueError(
            f"y has {y.shape[0]} rows, transform expects {t.first.C.shape[1]}"
        )
    if v.shape[0] != t.second.C.shape[1]:
        raise ValueError(
            f"v has {v.shape[0]} rows, transform expects {t.second.C.shape[1]}"
        )
    if y.shape[1] != v.shape[1] or y.shape[1] != t.G.shape[0]:
        raise ValueError(
            f"column counts must match the fitted projector: "
            f"y {y.shape[1]}, v {v.shape[1]}, G {t.G.shape[0]}"
        )
    return t.first.D @ (t.first.C @ y) + t.second.D @ (t.second.C @ (v @ t.G))


def reconstruction_error(x, xhat):
    """Raw squared Frobenius error and its per-entry mean."""
    x = matops.as_matrix(x, "x")
    xhat = matops.as_matrix(xhat, "xhat")
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    raw = float(np.sum((x - xhat) ** 2))
    return ErrorReport(raw=raw, per_entry=raw / x.size)
