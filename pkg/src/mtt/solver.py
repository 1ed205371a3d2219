"""Alternating optimisation of the two-term transform.

Starting from the closed-form fit at a random injection, each iteration
computes two candidate moves: re-solving for the injection V with the
second factor pair held fixed, and re-solving for the second pair (D2, C2)
with the current projected injection held fixed.  The move with the lower
objective is adopted; the first pair (D1, C1) never changes because the
first term does not depend on V.  Both moves are exact best responses, so
the error trace is non-increasing.
"""

from dataclasses import dataclass

import numpy as np

from . import matops, transforms
from .errors import DegenerateInjectionError
from .transforms import FactorPair, _best_rank_pair

# Branch labels recorded in the trace.
BRANCH_INIT = "init"
BRANCH_V = "V"
BRANCH_DC = "DC"

_MAX_INJECTION_DRAWS = 4  # initial draw plus three retries


@dataclass(frozen=True)
class MttConfig:
    """Rank budgets and solver knobs.

    ``q`` is the injection dimension (rows of V) and must be at least
    ``k2`` so the second term can reach its rank budget.  ``delta`` is the
    stopping tolerance on the raw squared-error decrease; ``pinv_tol`` is
    the relative singular-value cutoff passed to every pseudo-inverse
    (None selects ``max(m, n) * machine_epsilon``).
    """

    k1: int
    k2: int
    q: int
    delta: float = 1e-5
    max_iter: int = 500
    seed: int = 0
    pinv_tol: float | None = None

    def __post_init__(self):
        if self.k1 < 1:
            raise ValueError(f"k1 must be >= 1, got {self.k1}")
        if self.k2 < 1:
            raise ValueError(f"k2 must be >= 1, got {self.k2}")
        if self.q < self.k2:
            raise ValueError(f"q must be >= k2, got q={self.q}, k2={self.k2}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.pinv_tol is not None and self.pinv_tol < 0:
            raise ValueError(f"pinv_tol must be >= 0, got {self.pinv_tol}")


@dataclass
class MttModel:
    """Fitted transform: factor pairs, injection and null projector.

    ``Z`` caches ``V @ G``; it annihilates the fitting observation from
    the right.  Treat instances as immutable once returned.
    """

    first: FactorPair
    second: FactorPair
    V: np.ndarray
    G: np.ndarray
    Z: np.ndarray

    def as_two_term(self):
        return transforms.TwoTermTransform(
            first=self.first, second=self.second, G=self.G
        )


@dataclass
class MttTrace:
    """Objective values and adopted branches, one entry per iteration.

    ``errors[0]`` is the initial error; ``branches[i]`` tells which block
    was updated to reach ``errors[i + 1]``.  ``converged`` is False when
    the iteration cap was hit before the tolerance.
    """

    errors: np.ndarray
    branches: list[str]
    iterations: int
    converged: bool
    seed: int


def _objective(residual, pair, z):
    r = residual - pair.D @ (pair.C @ z)
    return float(np.sum(r * r))


def objective(x, y, model):
    """Raw squared Frobenius error of the model on the fitting data."""
    xhat = transforms.apply_transform(model.as_two_term(), y, model.V)
    return transforms.reconstruction_error(x, xhat).raw


def draw_injection(q, s, seed, attempt=0):
    """Seeded standard-normal injection; ``attempt`` derives retry streams."""
    rng = np.random.default_rng([seed, attempt])
    return rng.standard_normal((q, s))


def mtt_init(x, y, cfg, v0=None):
    """Closed-form initialisation at a (drawn or supplied) injection.

    Draws V0 with i.i.d. standard-normal entries from the seeded stream
    and fits both terms.  If the projected injection is numerically zero
    the draw is retried up to three times with derived streams before
    failing; a caller-supplied ``v0`` is never resampled.
    """
    x = matops.as_matrix(x, "x")
    y = matops.as_matrix(y, "y")
    s = x.shape[1]
    if y.shape[1] != s:
        raise ValueError(f"sample counts differ: x {s}, y {y.shape[1]}")
    if v0 is not None:
        v0 = matops.as_matrix(v0, "v0")
        if v0.shape != (cfg.q, s):
            raise ValueError(f"v0 must be {(cfg.q, s)}, got {v0.shape}")
    n_draws = 1 if v0 is not None else _MAX_INJECTION_DRAWS
    last_error = None
    for attempt in range(n_draws):
        v = v0 if v0 is not None else draw_injection(cfg.q, s, cfg.seed, attempt)
        try:
            t = transforms.step1_fit(x, y, v, cfg.k1, cfg.k2, cfg.pinv_tol)
        except DegenerateInjectionError as exc:
            last_error = exc
            continue
        z = v @ t.G
        model = MttModel(first=t.first, second=t.second, V=v, G=t.G, Z=z)
        return model, objective(x, y, model)
    raise DegenerateInjectionError(
        f"injection degenerate after {n_draws} draw(s)"
    ) from last_error


def update_injection(x, second, g, pinv_tol=None):
    """Best-response injection for a fixed second pair.

    Returns the minimal-norm minimiser of ||X - D2 C2 V G|| over V, which
    is pinv(D2 C2) X G (G is its own pseudo-inverse, being an orthogonal
    projector).  Since D2 has orthonormal columns, pinv(D2 C2) reduces to
    pinv(C2) D2^T.
    """
    x = matops.as_matrix(x, "x")
    return matops.pinv(second.C, pinv_tol) @ (second.D.T @ (x @ g))


def _refit_factored(x, z, a, b, k, pinv_tol=None):
    """Best-response second pair against ``z`` stored as ``a @ b``.

    Exactly the closed-form fit of :func:`update_second_factor`, but the
    decomposition of ``z`` is assembled from a reduced QR of ``a`` and an
    SVD of the small core, which avoids a full-width SVD when the
    injection came from a previous best-response update (rank <= k2).
    Falls back to the materialised path when ``z`` is rank deficient.
    """
    q, s = z.shape
    qa, ra = np.linalg.qr(a)
    um, sm, vmt = matops._svd_raw(ra @ b, full_matrices=False)
    keep = sm > matops._cutoff((q, s), sm, pinv_tol)
    if int(np.count_nonzero(keep)) < k:
        return _best_rank_pair(x, z, k, pinv_tol)
    uz = qa @ um                      # left singular block of z
    xv = x @ vmt[keep].T
    qx, rx = np.linalg.qr(xv)
    u2, _, _ = matops._svd_raw(rx @ uz[:, keep].T, full_matrices=False)
    d, _ = matops._fix_signs(qx @ u2[:, :k], None)
    c = (d.T @ xv) / sm[keep] @ uz[:, keep].T
    return FactorPair(D=d, C=c, k=k)


def update_second_factor(x, z, k2, pinv_tol=None):
    """Best-response second pair for a fixed projected injection ``z``."""
    x = matops.as_matrix(x, "x")
    z = matops.as_matrix(z, "z")
    if x.shape[1] != z.shape[1]:
        raise ValueError(f"sample counts differ: x {x.shape[1]}, z {z.shape[1]}")
    if not 1 <= k2 <= min(x.shape[0], z.shape[0]):
        raise ValueError(
            f"rank budget k2={k2} outside [1, {min(x.shape[0], z.shape[0])}]"
        )
    if np.linalg.norm(z) == 0.0:
        raise DegenerateInjectionError("projected injection is exactly zero")
    return _best_rank_pair(x, z, k2, pinv_tol)


def mtt_fit(x, y, cfg, v0=None):
    """Run the full alternating solver; returns ``(model, trace)``.

    Each iteration evaluates both candidate moves and adopts the one with
    the smaller objective (ties go to the factor update, the closed-form
    step).  A candidate is only recomputed when the block it depends on
    changed, which leaves the trace identical to the always-recompute
    variant because the moves are deterministic.  Stops once the error
    decrease falls to ``cfg.delta`` or after ``cfg.max_iter`` iterations.
    """
    model, eps0 = mtt_init(x, y, cfg, v0)
    x = matops.as_matrix(x, "x")
    y = matops.as_matrix(y, "y")
    first, second = model.first, model.second
    v, g, z = model.V, model.G, model.Z
    residual = x - first.D @ (first.C @ y)   # first term is frozen
    xg = x @ g

    errors = [eps0]
    branches = []
    converged = False
    z_factors = None  # (a, b) with z == a @ b, known after injection updates
    cand_v = None     # (V, Z, factors, objective); stale once (D2, C2) changes
    cand_dc = None    # (pair, objective); stale once Z changes
    for _ in range(cfg.max_iter):
        if cand_v is None:
            pinv_c2 = matops.pinv(second.C, cfg.pinv_tol)
            core = second.D.T @ xg
            v_new = pinv_c2 @ core
            b = core @ g
            z_new = pinv_c2 @ b       # equals v_new @ g, kept factor-exact
            cand_v = (v_new, z_new, (pinv_c2, b),
                      _objective(residual, second, z_new))
        if cand_dc is None:
            if z_factors is None:
                pair_new = _best_rank_pair(x, z, cfg.k2, cfg.pinv_tol)
            else:
                pair_new = _refit_factored(x, z, *z_factors, cfg.k2,
                                           cfg.pinv_tol)
            cand_dc = (pair_new, _objective(residual, pair_new, z))
        if cand_dc[1] <= cand_v[3]:
            second = cand_dc[0]
            eps_new = cand_dc[1]
            branches.append(BRANCH_DC)
            cand_v = None
        else:
            v, z, z_factors = cand_v[0], cand_v[1], cand_v[2]
            eps_new = cand_v[3]
            branches.append(BRANCH_V)
            cand_dc = None
        errors.append(eps_new)
        if abs(errors[-1] - errors[-2]) <= cfg.delta:
            converged = True
            break

    model = MttModel(first=first, second=second, V=v, G=g, Z=z)
    trace = MttTrace(
        errors=np.asarray(errors),
        branches=branches,
        iterations=len(branches),
        converged=converged,
        seed=cfg.seed,
    )
    return model, trace


def compress(model, y, v):
    """Compressed representation ``(C1 Y, C2 (V G))`` of an input pair.

    The column count must match the fitting sample count, since the
    stored projector G is tied to it.
    """
    y = matops.as_matrix(y, "y")
    v = matops.as_matrix(v, "v")
    if y.shape[0] != model.first.C.shape[1]:
        raise ValueError(
            f"y has {y.shape[0]} rows, model expects {model.first.C.shape[1]}"
        )
    if v.shape[0] != model.second.C.shape[1]:
        raise ValueError(
            f"v has {v.shape[0]} rows, model expects {model.second.C.shape[1]}"
        )
    if y.shape[1] != v.shape[1] or y.shape[1] != model.G.shape[0]:
        raise ValueError(
            f"column counts must match the fitted projector: "
            f"y {y.shape[1]}, v {v.shape[1]}, G {model.G.shape[0]}"
        )
    return model.first.C @ y, model.second.C @ (v @ model.G)


def decompress(model, u1, u2):
    """Reconstruction ``D1 U1 + D2 U2`` from compressed blocks."""
    u1 = matops.as_matrix(u1, "u1")
    u2 = matops.as_matrix(u2, "u2")
    if u1.shape[0] != model.first.k:
        raise ValueError(f"u1 has {u1.shape[0]} rows, expected {model.first.k}")
    if u2.shape[0] != model.second.k:
        raise ValueError(f"u2 has {u2.shape[0]} rows, expected {model.second.k}")
    if u1.shape[1] != u2.shape[1]:
        raise ValueError(
            f"column counts differ: u1 {u1.shape[1]}, u2 {u2.shape[1]}"
        )
    return model.first.D @ u1 + model.second.D @ u2


def compression_ratio(cfg, m, n):
    """Fraction of retained dimensions, (k1 + k2) / min(m, n)."""
    return (cfg.k1 + cfg.k2) / min(m, n)
