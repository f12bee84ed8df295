"""Sparse online Gaussian process with a capacity-bounded basis-vector set.

The posterior is kept in natural parametrization over the BV-set::

    mean(x) = alpha . k_x
    var(x)  = k(x, x) + k_x . C k_x

together with ``Q``, the inverse of the noise-free Gram matrix of the BV
points, which drives the novelty test and the deletion downdates. All kernel
vectors here are noise-free; measurement noise enters only through the
Gaussian likelihood scalars ``q`` and ``r``.
"""

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernel
from .errors import ConditioningError, ContractError, InputError
from .linalg import cho_inverse, robust_cholesky

VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class SogpConfig:
    """Capacity, novelty threshold and measurement noise.

    ``novelty_threshold=None`` means ``relative_novelty * sigma_f2`` of the
    current hyperparameters; ``noise_var=None`` means the kernel's ``sigma_n2``.
    """

    capacity: int = 100
    novelty_threshold: float = None
    noise_var: float = None
    relative_novelty: float = 1e-6

    def __post_init__(self):
        if self.capacity < 1:
            raise ContractError("capacity must be >= 1")
        if self.novelty_threshold is not None and not self.novelty_threshold >= 0:
            raise ContractError("novelty_threshold must be >= 0")
        if not self.relative_novelty >= 0:
            raise ContractError("relative_novelty must be >= 0")
        if self.noise_var is not None and not self.noise_var > 0:
            raise ContractError("noise_var must be > 0")


@dataclass
class SogpStats:
    updates: int = 0
    additions: int = 0
    rejections: int = 0
    deletions: int = 0


class Outcome(enum.Enum):
    ADDED = "added"
    REDUCED = "reduced"
    ADDED_THEN_DELETED = "added_then_deleted"


class UpdateOutcome(NamedTuple):
    kind: Outcome
    deleted_index: int = None
    gamma: float = None
    r: float = None

    @property
    def added(self):
        return self.kind is not Outcome.REDUCED


@dataclass
class SogpState:
    hyper: kernel.Hyperparameters
    config: SogpConfig
    bv_points: np.ndarray
    bv_targets: np.ndarray
    alpha: np.ndarray
    c_matrix: np.ndarray
    q_matrix: np.ndarray
    stats: SogpStats = field(default_factory=SogpStats)

    @property
    def size(self):
        return len(self.alpha)

    @property
    def noise_var(self):
        nv = self.config.noise_var
        return self.hyper.sigma_n2 if nv is None else float(nv)

    @property
    def omega(self):
        om = self.config.novelty_threshold
        return self.config.relative_novelty * self.hyper.sigma_f2 if om is None else float(om)

    def copy(self):
        return SogpState(
            self.hyper, self.config, self.bv_points.copy(), self.bv_targets.copy(),
            self.alpha.copy(), self.c_matrix.copy(), self.q_matrix.copy(),
            SogpStats(**vars(self.stats)),
        )


def _sym(M):
    return 0.5 * (M + M.T)


def init(h, cfg=None):
    cfg = cfg or SogpConfig()
    return SogpState(
        h, cfg, np.empty((0, h.dim)), np.empty(0),
        np.empty(0), np.empty((0, 0)), np.empty((0, 0)),
    )


def kernel_vector(s, x):
    if s.size == 0:
        return np.empty(0)
    return kernel.cross(s.hyper, s.bv_points, np.asarray(x, dtype=float)[None, :])[:, 0]


def predict(s, x_star):
    """Posterior mean and noise-free variance of the latent field at one point."""
    x_star = np.asarray(x_star, dtype=float)
    k = kernel_vector(s, x_star)
    mean = float(s.alpha @ k)
    var = s.hyper.sigma_f2 + float(k @ s.c_matrix @ k)
    return mean, max(var, VAR_FLOOR)


def predict_many(s, X):
    """Vectorized :func:`predict` over the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if s.size == 0:
        return np.zeros(len(X)), np.full(len(X), s.hyper.sigma_f2)
    Kx = kernel.cross(s.hyper, X, s.bv_points)
    mean = Kx @ s.alpha
    var = s.hyper.sigma_f2 + np.einsum("ij,ij->i", Kx @ s.c_matrix, Kx)
    return mean, np.maximum(var, VAR_FLOOR)


def novelty(s, x):
    """Residual of projecting ``k(., x)`` onto the BV span.

    Returns ``(gamma, k_vec, e_hat)`` with ``e_hat = Q k_vec`` the projection
    coefficients.
    """
    k = kernel_vector(s, x)
    e_hat = s.q_matrix @ k
    gamma = s.hyper.sigma_f2 - float(k @ e_hat)
    return max(gamma, 0.0), k, e_hat


def extend_basis(s, x, y=np.nan, gamma=None, e_hat=None):
    """Append ``x`` to the BV-set with zero weight.

    Grows alpha and C with zeros and extends Q by the partitioned-inverse
    rank-one formula. The Bayesian update itself is done by :func:`update`.
    """
    x = np.asarray(x, dtype=float)
    if gamma is None or e_hat is None:
        gamma, _, e_hat = novelty(s, x)
    if not gamma > 0:
        raise ConditioningError(f"cannot extend basis with novelty {gamma:.3g}")
    t = s.size
    a = np.zeros(t + 1)
    a[:t] = s.alpha
    C = np.zeros((t + 1, t + 1))
    C[:t, :t] = s.c_matrix
    Q = np.zeros((t + 1, t + 1))
    Q[:t, :t] = s.q_matrix
    v = np.append(e_hat, -1.0)
    Q += np.outer(v, v) / gamma
    s.alpha, s.c_matrix, s.q_matrix = a, C, _sym(Q)
    s.bv_points = np.vstack([s.bv_points, x[None, :]])
    s.bv_targets = np.append(s.bv_targets, y)
    return s


def update(s, x, y):
    """Absorb one measurement ``(x, y)``; mutates ``s`` and returns the outcome."""
    x = np.asarray(x, dtype=float)
    y = float(y)
    if not np.isfinite(y):
        raise InputError(f"non-finite target {y!r}")
    if x.shape != (s.hyper.dim,):
        raise ContractError(f"point of shape {x.shape} does not match dimension {s.hyper.dim}")

    gamma, k, e_hat = novelty(s, x)
    Ck = s.c_matrix @ k
    mean = float(s.alpha @ k)
    var = max(s.hyper.sigma_f2 + float(k @ Ck), VAR_FLOOR)
    denom = var + s.noise_var
    q = (y - mean) / denom
    r = -1.0 / denom
    s.stats.updates += 1

    if gamma > s.omega:
        extend_basis(s, x, y, gamma, e_hat)
        sv = np.append(Ck, 1.0)
        s.alpha = s.alpha + q * sv
        s.c_matrix = _sym(s.c_matrix + r * np.outer(sv, sv))
        s.stats.additions += 1
        if s.size > s.config.capacity:
            j = lowest_score(s)
            delete(s, j)
            s.stats.deletions += 1
            return UpdateOutcome(Outcome.ADDED_THEN_DELETED, j, gamma, r)
        return UpdateOutcome(Outcome.ADDED, None, gamma, r)

    sv = Ck + e_hat
    s.alpha = s.alpha + q * sv
    s.c_matrix = _sym(s.c_matrix + r * np.outer(sv, sv))
    s.stats.rejections += 1
    return UpdateOutcome(Outcome.REDUCED, None, gamma, r)


def score(s, i):
    """Deletion score ``|alpha_i| / Q_ii``; lower means less useful."""
    if not 0 <= i < s.size:
        raise ContractError(f"index {i} out of range for BV-set of size {s.size}")
    qii = s.q_matrix[i, i]
    if not qii > 0:
        raise ConditioningError(f"Q[{i},{i}] = {qii:.3g} is not positive")
    return abs(float(s.alpha[i])) / float(qii)


def scores(s):
    d = np.diag(s.q_matrix)
    if np.any(d <= 0):
        i = int(np.argmin(d))
        raise ConditioningError(f"Q[{i},{i}] = {d[i]:.3g} is not positive")
    return np.abs(s.alpha) / d


def lowest_score(s):
    # np.argmin returns the first (lowest-index) minimum
    return int(np.argmin(scores(s)))


def delete(s, j):
    """Remove BV element ``j`` and downdate alpha, C and Q accordingly."""
    t = s.size
    if t < 2:
        raise ContractError("cannot delete from a BV-set with fewer than two elements")
    if not 0 <= j < t:
        raise ContractError(f"index {j} out of range for BV-set of size {t}")
    qj = s.q_matrix[j, j]
    if not qj > 0:
        raise ConditioningError(f"Q[{j},{j}] = {qj:.3g} is not positive")
    keep = np.arange(t) != j
    Qj = s.q_matrix[keep, j]
    Cj = s.c_matrix[keep, j]
    cj = s.c_matrix[j, j]
    aj = s.alpha[j]

    alpha = s.alpha[keep] - aj * Qj / qj
    C = (s.c_matrix[np.ix_(keep, keep)] + cj * np.outer(Qj, Qj) / qj**2
         - (np.outer(Qj, Cj) + np.outer(Cj, Qj)) / qj)
    Q = s.q_matrix[np.ix_(keep, keep)] - np.outer(Qj, Qj) / qj

    s.alpha, s.c_matrix, s.q_matrix = alpha, _sym(C), _sym(Q)
    s.bv_points = s.bv_points[keep]
    s.bv_targets = s.bv_targets[keep]
    return s


def refit_from_bv(s, h_new):
    """Rebuild the posterior over the retained BV data under ``h_new``.

    The stored ``(point, target)`` pairs are streamed, in BV order, into a
    fresh state. While every point stays novel under ``h_new`` this is the
    exact GP posterior on the BV data with unchanged membership. Points that
    become redundant (novelty at or below the threshold, typical after a
    length-scale increase) are merged by the projected update, which keeps
    ``Q`` well conditioned. Stats carry over from ``s``.
    """
    if s.size < 1:
        raise ContractError("refit needs a nonempty BV-set")
    out = init(h_new, s.config)
    for x, y in zip(s.bv_points, s.bv_targets):
        update(out, x, y)
    merged = out.stats.rejections
    out.stats = SogpStats(**vars(s.stats))
    out.stats.rejections += merged
    return out


def batch_posterior(h, points, targets, cfg=None):
    """Exact posterior over ``(points, targets)`` in natural parametrization.

    ``Q`` is the jittered inverse of the noise-free Gram; only reliable when
    that Gram is well conditioned.
    """
    cfg = cfg or SogpConfig(capacity=max(len(targets), 1))
    out = init(h, cfg)
    P = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(targets, dtype=float)
    Kf = kernel.cross(h, P, P)
    np.fill_diagonal(Kf, h.sigma_f2)
    Kf = _sym(Kf)
    Ly, _ = robust_cholesky(Kf + out.noise_var * np.eye(len(y)))
    Ky_inv = cho_inverse(Ly)
    Lq, _ = robust_cholesky(Kf)
    out.bv_points, out.bv_targets = P.copy(), y.copy()
    out.alpha = Ky_inv @ y
    out.c_matrix = -Ky_inv
    out.q_matrix = cho_inverse(Lq)
    return out


def bv_rows(s):
    """Rows ``(x0, x1, y, alpha_i, score_i)`` for every BV element."""
    sc = scores(s) if s.size else np.empty(0)
    return [(*p, yv, a, e) for p, yv, a, e in zip(s.bv_points, s.bv_targets, s.alpha, sc)]


def write_bv_csv(s, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("x0,x1,y,alpha_i,score_i\n")
        for row in bv_rows(s):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
