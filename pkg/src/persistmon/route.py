"""Open-path ordering of a waypoint batch and leg rasterization."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

MAX_EXCHANGES = 10_000


@dataclass(frozen=True, eq=False)
class Path:
    origin: np.ndarray
    stops: np.ndarray
    length: float

    @property
    def legs(self):
        pts = np.vstack([self.origin[None, :], self.stops])
        return list(zip(pts[:-1], pts[1:]))

    def to_text(self):
        lines = [f"# length {float(self.length)!r}", f"origin {float(self.origin[0])!r} {float(self.origin[1])!r}"]
        lines += [f"stop {float(p[0])!r} {float(p[1])!r}" for p in self.stops]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        origin, stops = None, []
        for ln in text.splitlines():
            parts = ln.split()
            if not parts or parts[0].startswith("#"):
                continue
            xy = [float(parts[1]), float(parts[2])]
            if parts[0] == "origin":
                origin = np.array(xy)
            else:
                stops.append(xy)
        stops = np.array(stops).reshape(-1, 2)
        return cls(origin, stops, path_length(origin, stops))


def path_length(origin, stops):
    pts = np.vstack([np.asarray(origin, dtype=float)[None, :], np.asarray(stops, dtype=float)])
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def _cost_matrix(origin, pts):
    # node 0 is the origin; every edge back into it is free, turning the
    # closed tour into an open path
    nodes = np.vstack([origin[None, :], pts])
    D = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=2)
    D[:, 0] = 0.0
    return D


def _nearest_neighbor(D, first=None):
    n = len(D)
    tour, left = [0], set(range(1, n))
    if first is not None:
        tour.append(first)
        left.remove(first)
    while left:
        cur = tour[-1]
        # lowest node index wins ties
        nxt = min(left, key=lambda j: (D[cur, j], j))
        tour.append(nxt)
        left.remove(nxt)
    return tour


def _two_opt(D, tour, max_exchanges=MAX_EXCHANGES):
    """First-improvement 2-opt over the cyclic tour ``tour`` (node 0 fixed first)."""
    n = len(tour)
    exchanges = 0
    improved = True
    while improved and exchanges < max_exchanges:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                a, b = tour[i - 1], tour[i]
                c, d = tour[j], tour[(j + 1) % n]
                delta = D[a, c] + D[b, d] - D[a, b] - D[c, d]
                if delta < -1e-12:
                    tour[i:j + 1] = tour[i:j + 1][::-1]
                    exchanges += 1
                    improved = True
                    break
            if improved:
                break
    return tour


def _tour_cost(D, tour):
    n = len(tour)
    return sum(D[tour[i], tour[(i + 1) % n]] for i in range(n))


def _or_opt(D, tour, max_seg=3):
    """Relocate one segment of up to ``max_seg`` stops (optionally reversed).

    Applies the first improving move found; returns True if one was applied.
    """
    n = len(tour)
    base = _tour_cost(D, tour)
    for seg_len in range(1, max_seg + 1):
        for i in range(1, n - seg_len + 1):
            seg = tour[i:i + seg_len]
            rest = tour[:i] + tour[i + seg_len:]
            for k in range(len(rest)):
                if k == i - 1:
                    continue
                for piece in (seg, seg[::-1]):
                    cand = rest[:k + 1] + piece + rest[k + 1:]
                    if _tour_cost(D, cand) < base - 1e-12:
                        tour[:] = cand
                        return True
    return False


def _improve(D, tour, max_exchanges=MAX_EXCHANGES):
    """Alternate 2-opt and Or-opt until neither finds an improving move."""
    for _ in range(max_exchanges):
        tour = _two_opt(D, tour, max_exchanges)
        if not _or_opt(D, tour):
            break
    return tour


def route(origin, waypoints):
    """Shortest open path from ``origin`` through every waypoint once.

    Local search (2-opt plus segment relocation) over a cycle whose edges back
    into the origin cost nothing, so the cycle cost is the open-path length.
    """
    origin = np.asarray(origin, dtype=float)
    pts = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if len(pts) == 0 or pts.size == 0:
        raise ContractError("route needs at least one waypoint")
    D = _cost_matrix(origin, pts)
    # nearest-neighbor from the origin, then one restart per forced first stop;
    # the first strictly shortest result wins
    best = _improve(D, _nearest_neighbor(D))
    best_cost = _tour_cost(D, best)
    for first in range(1, len(D)):
        tour = _improve(D, _nearest_neighbor(D, first))
        cost = _tour_cost(D, tour)
        if cost < best_cost - 1e-12:
            best, best_cost = tour, cost
    tour = best
    stops = pts[[t - 1 for t in tour[1:]]]
    return Path(origin, stops, path_length(origin, stops))


def nearest_neighbor_length(origin, waypoints):
    origin = np.asarray(origin, dtype=float)
    pts = np.atleast_2d(np.asarray(waypoints, dtype=float))
    tour = _nearest_neighbor(_cost_matrix(origin, pts))
    return path_length(origin, pts[[t - 1 for t in tour[1:]]])


def _line_cells(a, b):
    """Bresenham cells from ``a`` to ``b`` inclusive (integer row/col)."""
    r0, c0 = a
    r1, c1 = b
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    err = dr - dc
    cells = [(r0, c0)]
    r, c = r0, c0
    while (r, c) != (r1, c1):
        e2 = 2 * err
        if e2 > -dc:
            err -= dc
            r += sr
        if e2 < dr:
            err += dr
            c += sc
        cells.append((r, c))
    return cells


def rasterize_leg(a, b, stride=1):
    """Grid cells along ``a -> b``, keeping every ``stride``-th and always ``b``.

    The start cell is included; consecutive cells are 8-connected before
    subsampling.
    """
    if stride < 1:
        raise ContractError("stride must be >= 1")
    ia = tuple(int(round(v)) for v in a)
    ib = tuple(int(round(v)) for v in b)
    cells = _line_cells(ia, ib)[::stride]
    if cells[-1] != ib:
        cells.append(ib)
    return np.array(cells, dtype=float)
