"""Exact GP regression and leave-one-out hyperparameter estimation."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .errors import ConditioningError, ContractError, NumericalError
from .linalg import cho_inverse, robust_cholesky

log = logging.getLogger(__name__)

LOG_BOUNDS = (-10.0, 10.0)
VAR_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class GpModel:
    """Exact GP over a fixed training set with a cached inverse Gram matrix."""

    inputs: np.ndarray
    targets: np.ndarray
    hyper: kernel.Hyperparameters
    gram_inverse: np.ndarray
    jitter: float = 0.0

    @property
    def alpha(self):
        return self.gram_inverse @ self.targets

    @property
    def n(self):
        return len(self.targets)


@dataclass(frozen=True)
class LooReport:
    log_likelihood: float
    gradient: np.ndarray
    per_point_mean: np.ndarray
    per_point_var: np.ndarray


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    max_iters: int = 100
    grad_tolerance: float = 1e-4
    backtrack: bool = True
    max_halvings: int = 30

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ContractError("max_iters must be >= 1")
        if not self.grad_tolerance >= 0:
            raise ContractError("grad_tolerance must be >= 0")


@dataclass
class OptimizeResult:
    hyper: kernel.Hyperparameters
    trace: list = field(default_factory=list)
    truncated: bool = False
    message: str = ""

    def __iter__(self):
        # unpacks as (hyper, trace)
        return iter((self.hyper, self.trace))


def _check_data(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y) or len(y) < 1:
        raise ContractError(f"need matching nonempty inputs/targets, got {len(X)} and {len(y)}")
    return X, y


def fit(h, X, y):
    """Factorize the Gram matrix of ``(X, y)`` under ``h`` and cache its inverse."""
    X, y = _check_data(X, y)
    L, jitter = robust_cholesky(kernel.gram(h, X))
    if jitter:
        log.debug("fit needed jitter %.3g for n=%d", jitter, len(y))
    return GpModel(X, y, h, cho_inverse(L), jitter)


def predict(m, X_star):
    """Predictive means and variances at ``X_star``.

    The variance includes the noise term of each test point, i.e. it is the
    predictive variance of a new *measurement* at that location.
    """
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if len(X_star) == 0:
        raise ContractError("X_star must be nonempty")
    Ks = kernel.cross(m.hyper, X_star, m.inputs)
    means = Ks @ (m.gram_inverse @ m.targets)
    prior = m.hyper.sigma_f2 + m.hyper.sigma_n2
    var = prior - np.einsum("ij,jk,ik->i", Ks, m.gram_inverse, Ks)
    return means, np.maximum(var, VAR_FLOOR)


def loo_report(m):
    """Leave-one-out log-likelihood, its log-space gradient and per-point moments."""
    if m.n < 2:
        raise ContractError("leave-one-out needs at least two points")
    Kinv = m.gram_inverse
    d = np.diag(Kinv).copy()
    if np.any(d <= 0):
        raise ConditioningError(f"non-positive diagonal of K^-1 (min {d.min():.3g})")
    alpha = Kinv @ m.targets
    var = 1.0 / d
    mu = m.targets - alpha / d
    resid = m.targets - mu
    ll = float(np.sum(-0.5 * np.log(var) - resid**2 / (2 * var) - 0.5 * np.log(2 * np.pi)))

    dK = kernel.gram_grad(m.hyper, m.inputs)
    g = np.empty(m.hyper.size)
    for j in range(m.hyper.size):
        Z = Kinv @ dK[j]
        ZK_diag = np.einsum("ij,ji->i", Z, Kinv)
        g[j] = np.sum((alpha * (Z @ alpha) - 0.5 * (1 + alpha**2 / d) * ZK_diag) / d)
    return LooReport(ll, g, mu, var)


def _loo_at(h, X, y):
    m = fit(h, X, y)
    return m, loo_report(m)


def optimize_hyperparameters(X, y, h0, cfg=None):
    """Gradient ascent on the LOO log-likelihood in log space.

    Each accepted step follows the plain ascent rule. With ``cfg.backtrack``
    a step that lowers the objective is halved until it does not, so the
    returned trace never decreases. Log values are clamped to ``LOG_BOUNDS``.

    Returns an :class:`OptimizeResult`, which also unpacks as
    ``(hyper, trace)``.
    """
    cfg = cfg or OptimizerConfig()
    X, y = _check_data(X, y)
    if len(y) < 2:
        raise ContractError("hyperparameter optimization needs at least two points")
    lo, hi = LOG_BOUNDS
    h = h0
    _, rep = _loo_at(h, X, y)
    result = OptimizeResult(h, [rep.log_likelihood])
    eta = cfg.learning_rate
    for it in range(cfg.max_iters):
        if not np.max(np.abs(rep.gradient)) >= cfg.grad_tolerance:
            result.message = f"gradient below tolerance after {it} iterations"
            break
        theta = h.to_vector()
        step = eta
        accepted = None
        for _ in range(cfg.max_halvings + 1):
            cand = kernel.Hyperparameters.from_vector(np.clip(theta + step * rep.gradient, lo, hi))
            try:
                _, cand_rep = _loo_at(cand, X, y)
            except NumericalError as exc:
                if not cfg.backtrack:
                    result.truncated = True
                    result.message = f"fit failed at iteration {it}: {exc}"
                    return result
                step *= 0.5
                continue
            if not np.isfinite(cand_rep.log_likelihood):
                step *= 0.5
                continue
            if cfg.backtrack and cand_rep.log_likelihood < rep.log_likelihood:
                step *= 0.5
                continue
            accepted = (cand, cand_rep)
            break
        if accepted is None:
            result.message = f"no ascent step found at iteration {it}"
            break
        if np.array_equal(accepted[0].to_vector(), theta):
            result.message = f"parameters pinned at bounds after {it} iterations"
            break
        h, rep = accepted
        eta = step
        result.trace.append(rep.log_likelihood)
        if rep.log_likelihood >= max(result.trace[:-1]):
            result.hyper = h
    else:
        result.message = f"reached max_iters={cfg.max_iters}"
    return result


def write_trace_csv(trace, path):
    """Two-column CSV of ``iteration, loo_log_likelihood``."""
    with open(path, "w", newline="\n") as fh:
        fh.write("iteration,loo_log_likelihood\n")
        for i, v in enumerate(trace):
            fh.write(f"{i},{float(v)!r}\n")
