"""Mutual-information waypoint selection over a coarse planning grid.

Covariances come from the SOGP posterior with measurement noise on the
diagonal, so every set of cells has a proper (non-singular) joint Gaussian.
"""

from dataclasses import dataclass

import numpy as np

from . import kernel, sogp
from .errors import ConditioningError, ContractError, SingularModelError
from .field_io import block_edges
from .linalg import cho_inverse, cho_logdet, robust_cholesky

LOG_2PIE = float(np.log(2 * np.pi * np.e))
# relative tolerance under which two DP values count as tied (lowest index wins)
TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class PlanGrid:
    """Candidate sampling cells.

    ``fine_map[i]`` is the ``(row_slice, col_slice)`` block of the fine grid
    that cell ``i`` stands for; ``lattice[i]`` is its ``(i, j)`` block index.
    """

    cells: np.ndarray
    fine_map: tuple
    lattice: tuple = ()

    def __len__(self):
        return len(self.cells)

    def index_of(self, point):
        d = np.abs(self.cells - np.asarray(point, dtype=float)).sum(axis=1)
        i = int(np.argmin(d))
        return i if d[i] == 0 else None


@dataclass(frozen=True, eq=False)
class SelectionResult:
    waypoints: np.ndarray
    indices: tuple
    stage_values: np.ndarray
    objective: float

    def to_text(self):
        lines = ["# stage x0 x1 value"]
        for i, (p, v) in enumerate(zip(self.waypoints, self.stage_values), start=1):
            lines.append(f"{i} {float(p[0])!r} {float(p[1])!r} {float(v)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        pts = np.array([[float(r[1]), float(r[2])] for r in rows]).reshape(-1, 2)
        vals = np.array([float(r[3]) for r in rows])
        return cls(pts, (), vals, float(vals[-1]) if len(vals) else 0.0)


def posterior_cov(s, points):
    """Joint covariance of noisy measurements at ``points`` under the SOGP posterior."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    K = kernel.cross(s.hyper, P, P)
    np.fill_diagonal(K, s.hyper.sigma_f2)
    if s.size:
        Kpb = kernel.cross(s.hyper, P, s.bv_points)
        K = K + Kpb @ s.c_matrix @ Kpb.T
        K = 0.5 * (K + K.T)
        # the latent posterior is PSD in exact arithmetic; long runs with many
        # projected updates and deletions can leave small negative eigenvalues
        w, U = np.linalg.eigh(K)
        if w[0] < 0:
            K = (U * np.maximum(w, 0.0)) @ U.T
            K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] += s.noise_var
    return K


def _factor(S, what):
    try:
        return robust_cholesky(S)[0]
    except SingularModelError as exc:
        raise ConditioningError(f"{what}: {exc}") from exc


def _entropy_of_cov(S, what="covariance"):
    L = _factor(S, f"{what} of size {len(S)}")
    return 0.5 * (len(S) * LOG_2PIE + cho_logdet(L))


def entropy(s, A):
    """Differential entropy of the noisy measurements at cells ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if len(A) == 0:
        raise ContractError("entropy needs a nonempty set")
    return _entropy_of_cov(posterior_cov(s, A), "set")


def _check_disjoint(A, B):
    for a in A:
        if np.any(np.all(B == a, axis=1)):
            raise ContractError(f"sets overlap at {tuple(a)}")


def mutual_information(s, A, B):
    """``H(A) - H(A | B)`` for disjoint nonempty cell sets, clamped at 0."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if len(A) == 0 or len(B) == 0:
        raise ContractError("mutual information needs nonempty sets")
    _check_disjoint(A, B)
    S = posterior_cov(s, np.vstack([A, B]))
    k = len(A)
    Saa, Sab, Sbb = S[:k, :k], S[:k, k:], S[k:, k:]
    Lb = _factor(Sbb, f"conditioning set of size {len(B)}")
    W = np.linalg.solve(Lb, Sab.T)
    cond = Saa - W.T @ W
    mi = _entropy_of_cov(Saa, "set") - _entropy_of_cov(0.5 * (cond + cond.T), "conditional set")
    return max(mi, 0.0)


def _first_max(values, axis=0):
    """Index of the lowest-index entry within ``TIE_RTOL`` of the max along ``axis``."""
    best = np.max(values, axis=axis, keepdims=True)
    tol = TIE_RTOL * np.maximum(1.0, np.abs(best))
    near = values >= best - tol
    return np.argmax(near, axis=axis)


def conditional_variances(Sigma, prefix):
    """``Var(x | prefix)`` for every cell ``x`` given a list of cell indices."""
    diag = np.diag(Sigma).copy()
    if not prefix:
        return diag
    P = list(prefix)
    L = _factor(Sigma[np.ix_(P, P)], f"prefix of size {len(P)}")
    W = np.linalg.solve(L, Sigma[P, :])
    return diag - np.sum(W * W, axis=0)


def select_waypoints(s, grid, n, exclude=()):
    """Pick ``n`` cells maximizing the stage-wise mutual-information sum.

    Stage 1 scores each cell by ``I(x; rest)``. Stage ``i`` scores a candidate
    ``x`` after predecessor ``p`` by ``I(x; rest | chain(p))`` plus ``V[i-1, p]``
    where ``chain(p)`` is the backpointer chain ending at ``p``; every
    ``(stage, cell)`` keeps its best predecessor. The answer is the chain
    backtraced from the best final-stage cell. Cells listed in ``exclude``
    (indices) are never selected but still count as unsampled map.
    """
    N = len(grid.cells)
    allowed = np.ones(N, dtype=bool)
    allowed[list(exclude)] = False
    if not 1 <= n < N or n > allowed.sum():
        raise ContractError(f"n={n} out of range for {N} cells ({allowed.sum()} selectable)")

    Sigma = posterior_cov(s, grid.cells)
    full_inv = cho_inverse(_factor(Sigma, f"grid covariance of size {N}"))
    # Var(x | all other cells) does not depend on how the rest is split
    rest_var = 1.0 / np.diag(full_inv)

    def term(cond_var):
        return 0.5 * np.log(np.maximum(cond_var, 1e-300) / rest_var)

    V = np.full((n, N), -np.inf)
    back = np.full((n, N), -1, dtype=int)
    V[0, allowed] = term(np.diag(Sigma))[allowed]
    chains = [[x] if allowed[x] else None for x in range(N)]
    for i in range(1, n):
        vals = np.full((N, N), -np.inf)
        for p in range(N):
            if chains[p] is None:
                continue
            row = V[i - 1, p] + term(conditional_variances(Sigma, chains[p]))
            row[chains[p]] = -np.inf
            row[~allowed] = -np.inf
            vals[p] = row
        best_p = _first_max(vals, axis=0)
        V[i] = vals[best_p, np.arange(N)]
        back[i] = np.where(np.isfinite(V[i]), best_p, -1)
        chains = [chains[back[i, x]] + [x] if back[i, x] >= 0 else None for x in range(N)]

    last = int(_first_max(V[n - 1]))
    seq = chains[last]
    stage_values = np.array([V[i, x] for i, x in enumerate(seq)])
    return SelectionResult(grid.cells[seq].copy(), tuple(seq), stage_values, float(V[n - 1, last]))


def build_plan_grid(field, rows, cols):
    """Uniform ``rows x cols`` lattice of candidate cells over ``field``.

    Blocks that are entirely land are dropped. A block whose center falls on
    land is represented by its ocean cell nearest to the center.
    """
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ContractError(f"planner grid {rows}x{cols} needs at least two cells")
    if rows > field.rows or cols > field.cols:
        raise ContractError(f"planner grid {rows}x{cols} finer than field {field.shape}")
    re, ce = block_edges(field.rows, rows), block_edges(field.cols, cols)
    cells, fine, lattice = [], [], []
    for i in range(rows):
        for j in range(cols):
            blk = (slice(re[i], re[i + 1]), slice(ce[j], ce[j + 1]))
            ocean = np.argwhere(~field.mask[blk])
            if len(ocean) == 0:
                continue
            center = np.array([(re[i] + re[i + 1] - 1) / 2, (ce[j] + ce[j + 1] - 1) / 2])
            if not field.is_ocean(center):
                pts = ocean + [re[i], ce[j]]
                center = pts[int(np.argmin(np.sum((pts - center) ** 2, axis=1)))].astype(float)
            cells.append(center)
            fine.append(blk)
            lattice.append((i, j))
    if len(cells) < 2:
        raise ContractError(f"planner grid has {len(cells)} ocean cells; need at least two")
    return PlanGrid(np.array(cells), tuple(fine), tuple(lattice))
