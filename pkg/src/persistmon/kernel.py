"""Squared-exponential ARD kernel with log-space hyperparameters.

The noise term is attached by data-point *index*: two distinct samples taken
at the same coordinates are still independent draws of measurement noise.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InputError

HYPER_KEYS = ("log_sigma_n2", "log_sigma_f2")


@dataclass(frozen=True)
class Hyperparameters:
    """Kernel hyperparameters, stored as natural logs.

    Parameters
    ----------
    log_sigma_n2 : float
        Log of the noise variance.
    log_sigma_f2 : float
        Log of the signal variance.
    log_lengths : tuple of float
        Log of the per-dimension length-scales.
    """

    log_sigma_n2: float
    log_sigma_f2: float
    log_lengths: tuple

    def __post_init__(self):
        object.__setattr__(self, "log_sigma_n2", float(self.log_sigma_n2))
        object.__setattr__(self, "log_sigma_f2", float(self.log_sigma_f2))
        object.__setattr__(self, "log_lengths", tuple(float(v) for v in self.log_lengths))
        values = self.to_vector()
        if len(self.log_lengths) == 0:
            raise ContractError("at least one length-scale is required")
        if not np.all(np.isfinite(values)):
            raise ContractError(f"hyperparameters must be finite, got {values}")

    @property
    def sigma_n2(self):
        return float(np.exp(self.log_sigma_n2))

    @property
    def sigma_f2(self):
        return float(np.exp(self.log_sigma_f2))

    @property
    def lengths(self):
        return np.exp(np.asarray(self.log_lengths))

    @property
    def dim(self):
        return len(self.log_lengths)

    @property
    def size(self):
        """Number of free parameters (noise, signal, one per length-scale)."""
        return 2 + self.dim

    def to_vector(self):
        return np.array([self.log_sigma_n2, self.log_sigma_f2, *self.log_lengths])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1], tuple(v[2:]))

    @classmethod
    def from_linear(cls, sigma_n2, sigma_f2, lengths):
        return cls(np.log(sigma_n2), np.log(sigma_f2),
                   tuple(np.log(np.asarray(lengths, dtype=float))))

    def keys(self):
        return HYPER_KEYS + tuple(f"log_l_{d}" for d in range(self.dim))

    def to_text(self):
        """Flat ``key=value`` block, one parameter per line, full precision."""
        return "".join(f"{k}={float(v)!r}\n" for k, v in zip(self.keys(), self.to_vector()))

    @classmethod
    def from_text(cls, text):
        items = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(f"expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            items[key] = float(value)
        try:
            n2, f2 = items.pop("log_sigma_n2"), items.pop("log_sigma_f2")
        except KeyError as exc:
            raise InputError(f"missing hyperparameter {exc.args[0]}") from None
        dims = sorted(int(k[len("log_l_"):]) for k in items if k.startswith("log_l_"))
        if dims != list(range(len(dims))) or not dims:
            raise InputError(f"length-scale keys must be log_l_0..log_l_k, got {sorted(items)}")
        unknown = [k for k in items if not k.startswith("log_l_")]
        if unknown:
            raise InputError(f"unknown hyperparameter keys {unknown}")
        return cls(n2, f2, tuple(items[f"log_l_{d}"] for d in dims))

    def clamped(self, lo=-10.0, hi=10.0):
        return Hyperparameters.from_vector(np.clip(self.to_vector(), lo, hi))


def _check_point(h, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (h.dim,):
        raise ContractError(f"point of shape {x.shape} does not match kernel dimension {h.dim}")
    return x


def eval(h, x, x_prime, same_index):
    """Kernel value between two points.

    ``same_index`` selects the Kronecker-delta noise term; it should be true
    only when both arguments are the same data point.
    """
    x, x_prime = _check_point(h, x), _check_point(h, x_prime)
    r2 = np.sum(((x - x_prime) / h.lengths) ** 2)
    value = h.sigma_f2 * np.exp(-0.5 * r2)
    if same_index:
        value += h.sigma_n2
    return float(value)


def grad(h, x, x_prime, same_index):
    """Derivatives of :func:`eval` with respect to the log-space parameters.

    Ordered as ``(log_sigma_n2, log_sigma_f2, log_l_0, ...)``.
    """
    x, x_prime = _check_point(h, x), _check_point(h, x_prime)
    scaled = ((x - x_prime) / h.lengths) ** 2
    k = h.sigma_f2 * np.exp(-0.5 * np.sum(scaled))
    return np.concatenate(([h.sigma_n2 if same_index else 0.0, k], k * scaled))


def _as_points(h, P):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[-1] != h.dim:
        raise ContractError(f"points of shape {P.shape} do not match kernel dimension {h.dim}")
    return P


def cross(h, A, B):
    """Noise-free kernel matrix between point sets ``A`` (n x d) and ``B`` (m x d)."""
    A, B = _as_points(h, A), _as_points(h, B)
    inv_l = 1.0 / h.lengths
    a, b = A * inv_l, B * inv_l
    r2 = (np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T)
    np.maximum(r2, 0.0, out=r2)
    return h.sigma_f2 * np.exp(-0.5 * r2)


def gram(h, points):
    """Gram matrix over ``points`` including index-based noise on the diagonal."""
    P = _as_points(h, points)
    K = cross(h, P, P)
    # exact diagonal; the expanded-square form can leave tiny round-off there
    np.fill_diagonal(K, h.sigma_f2 + h.sigma_n2)
    return 0.5 * (K + K.T)


def gram_grad(h, points):
    """Stack of ``dK/dtheta_j`` matrices, shape ``(h.size, n, n)``."""
    P = _as_points(h, points)
    n = len(P)
    Kf = cross(h, P, P)
    np.fill_diagonal(Kf, h.sigma_f2)
    out = np.empty((h.size, n, n))
    out[0] = h.sigma_n2 * np.eye(n)
    out[1] = Kf
    for d, ell in enumerate(h.lengths):
        diff = (P[:, d][:, None] - P[:, d][None, :]) / ell
        out[2 + d] = Kf * diff**2
    return out
