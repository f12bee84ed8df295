"""Cholesky helpers with a fixed jitter ladder."""

import numpy as np
from scipy import linalg

from .errors import SingularModelError

# multiples of the mean diagonal, tried in order after a plain factorization fails
JITTER_LADDER = (1e-10, 1e-8, 1e-6)


def robust_cholesky(K):
    """Lower Cholesky factor of ``K``, retrying with diagonal jitter.

    Returns
    -------
    L : ndarray
        Lower-triangular factor of ``K + jitter * I``.
    jitter : float
        Absolute jitter that was added (0.0 when none was needed).
    """
    K = np.asarray(K, dtype=float)
    try:
        return linalg.cholesky(K, lower=True, check_finite=True), 0.0
    except (linalg.LinAlgError, ValueError):
        pass
    scale = float(np.mean(np.diag(K))) if K.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    jitter = 0.0
    for rel in JITTER_LADDER:
        jitter = rel * scale
        try:
            L = linalg.cholesky(K + jitter * np.eye(len(K)), lower=True)
            return L, jitter
        except (linalg.LinAlgError, ValueError):
            continue
    raise SingularModelError(
        f"matrix of size {len(K)} is not positive definite even with "
        f"jitter {jitter:.3g} ({JITTER_LADDER[-1]:g} x mean diagonal)",
        jitter=jitter,
    )


def cho_inverse(L):
    """Inverse of ``L @ L.T`` given its lower Cholesky factor."""
    n = len(L)
    inv = linalg.cho_solve((L, True), np.eye(n))
    return 0.5 * (inv + inv.T)


def cho_logdet(L):
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def spd_inverse(K):
    L, jitter = robust_cholesky(K)
    return cho_inverse(L), jitter
