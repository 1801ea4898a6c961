"""Location estimators: medians, exact balanced k-medians on the line, BCC."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import (
    FacilitySolution,
    as_point,
    as_points,
    distance_matrix,
    induced_partition,
    kmed_cost,
    lower_median_index,
    tie_tolerance,
)


class Infeasible(ValueError):
    """No partition satisfies the requested balance constraint."""


def median_1d(values) -> float:
    """Lower median: sorted element at 0-based index ceil(n/2) - 1."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("median of an empty list")
    return float(v[lower_median_index(v.size)])


def coordinatewise_median(X) -> np.ndarray:
    X = as_points(X)
    return np.sort(X, axis=0)[lower_median_index(X.shape[0])].copy()


@dataclass(frozen=True)
class GeoMedianResult:
    point: np.ndarray
    iterations: int
    residual: float
    objective: float
    converged: bool = True


def geometric_median(X, tol: float = 1e-9, max_iter: int = 10000) -> GeoMedianResult:
    """Minimize the sum of Euclidean distances to ``X``.

    On the line this is the exact lower median. Otherwise Weiszfeld's
    iteration is run from the coordinate-wise median, with the Vardi-Zhang
    modified step whenever the iterate sits on data points. The residual is
    the last step length relative to the median distance of the data to the
    iterate, so far outliers do not loosen the stopping rule.
    """
    X = as_points(X)
    if X.shape[1] == 1:
        m = np.array([median_1d(X[:, 0])])
        return GeoMedianResult(m, 0, 0.0, kmed_cost(X, m[None, :]))
    pts, res, it, ok = _weiszfeld(X[None], tol, max_iter)
    point = pts[0]
    return GeoMedianResult(point, int(it[0]), float(res[0]), kmed_cost(X, point[None, :]), bool(ok[0]))


def geometric_median_batch(P: np.ndarray, tol: float = 1e-9, max_iter: int = 10000):
    """Geometric medians of a stack of datasets ``P`` of shape ``(B, n, d)``.

    Returns ``(points, converged)`` with points of shape ``(B, d)``.
    """
    P = np.asarray(P, dtype=float)
    if P.shape[2] == 1:
        v = np.sort(P[:, :, 0], axis=1)
        return v[:, lower_median_index(P.shape[1])][:, None], np.ones(len(P), bool)
    pts, _, _, ok = _weiszfeld(P, tol, max_iter)
    return pts, ok


def _optimal_data_point(P, coincide_tol, chunk=20000):
    """Index of a data point satisfying the 1-median optimality condition.

    ``x_j`` is optimal iff the resultant of unit vectors towards the other
    points has norm at most the multiplicity of ``x_j``. Returns -1 where no
    data point qualifies.
    """
    B, n, _ = P.shape
    out = np.full(B, -1, dtype=int)
    for s in range(0, B, chunk):
        Q = P[s : s + chunk]
        diff = Q[:, None, :, :] - Q[:, :, None, :]
        dist = np.sqrt(np.einsum("bjid,bjid->bji", diff, diff))
        on = dist <= coincide_tol[s : s + chunk, None, None]
        inv = np.where(on, 0.0, 1.0 / np.where(on, 1.0, dist))
        R = np.linalg.norm(np.einsum("bji,bjid->bjd", inv, diff), axis=2)
        ok = R <= on.sum(axis=2) * (1 + 1e-12)
        hit = ok.any(axis=1)
        out[s : s + chunk] = np.where(hit, ok.argmax(axis=1), -1)
    return out


def _weiszfeld(P, tol, max_iter):
    B, n, d = P.shape
    y = np.sort(P, axis=1)[:, lower_median_index(n)].copy()
    residual = np.full(B, np.inf)
    iters = np.zeros(B, dtype=int)
    scale0 = np.linalg.norm(P.max(axis=1) - P.min(axis=1), axis=1)
    coincide_tol = 1e-12 * np.maximum(scale0, 1e-300)
    at_data = _optimal_data_point(P, coincide_tol)
    hit = np.flatnonzero(at_data >= 0)
    y[hit] = P[hit, at_data[hit]]
    residual[hit] = 0.0
    active = np.flatnonzero(at_data < 0)
    eye = np.eye(d)
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        Pa, ya = P[active], y[active]
        diff = Pa - ya[:, None, :]
        dist = np.sqrt(np.einsum("bnd,bnd->bn", diff, diff))
        on = dist <= coincide_tol[active, None]
        eta = on.sum(axis=1)
        inv = np.where(on, 0.0, 1.0 / np.where(on, 1.0, dist))
        wsum = inv.sum(axis=1)
        safe = np.where(wsum > 0, wsum, 1.0)
        T = np.einsum("bn,bnd->bd", inv, Pa) / safe[:, None]
        R = np.einsum("bn,bnd->bd", inv, diff)
        r = np.linalg.norm(R, axis=1)
        # Vardi-Zhang: shrink the Weiszfeld step towards the current data point
        lam = np.where(eta > 0, np.minimum(1.0, eta / np.where(r > 0, r, 1.0)), 0.0)
        lam = np.where(wsum > 0, lam, 1.0)
        y_new = (1.0 - lam)[:, None] * T + lam[:, None] * ya

        # Newton step on the smooth objective, kept only if it beats Weiszfeld
        smooth = eta == 0
        if smooth.any():
            u = diff * inv[:, :, None]
            H = wsum[:, None, None] * eye - np.einsum("bn,bni,bnj->bij", inv, u, u)
            H += 1e-300 * eye
            with np.errstate(all="ignore"):
                dy = np.linalg.solve(H, R[:, :, None])[:, :, 0]
            best = _objective(Pa, y_new)
            # backtrack: near a data point the full step tends to overshoot
            for t in (1.0, 0.25):
                y_nt = ya + t * dy
                f_n = _objective(Pa, y_nt)
                take = smooth & np.isfinite(f_n) & (f_n < best)
                y_new = np.where(take[:, None], y_nt, y_new)
                best = np.where(take, f_n, best)

        step = np.linalg.norm(y_new - ya, axis=1)
        scale = np.median(dist, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            res = np.where(step == 0, 0.0, step / scale)
        y[active] = y_new
        residual[active] = res
        iters[active] = it
        active = active[res > tol]
    converged = np.ones(B, dtype=bool)
    converged[active] = False
    return y, residual, iters, converged


def _objective(P, y):
    diff = P - y[:, None, :]
    return np.sqrt(np.einsum("bnd,bnd->bn", diff, diff)).sum(axis=1)


def grid_refine_median(X, rel_tol: float = 1e-10, points_per_axis: int = 21) -> np.ndarray:
    """Brute-force 1-median by repeatedly zooming a dense grid.

    Independent of the Weiszfeld path; meant as a test oracle for small ``n``
    and ``d`` <= 3. Each level evaluates the objective on a grid around the
    incumbent and halves the spacing unless the best node is on the border.
    """
    X = as_points(X)
    d = X.shape[1]
    lo, hi = X.min(axis=0), X.max(axis=0)
    scale = max(float(np.max(hi - lo)), 1e-300)
    center = (lo + hi) / 2
    half = np.full(d, scale)
    offsets = np.linspace(-1.0, 1.0, points_per_axis)
    mesh = np.stack(np.meshgrid(*([offsets] * d), indexing="ij"), axis=-1).reshape(-1, d)
    edge = np.any(np.abs(mesh) == 1.0, axis=1)
    if points_per_axis % 2 == 0:
        raise ValueError("points_per_axis must be odd so the incumbent is a grid node")
    mid = int(np.flatnonzero(np.all(mesh == 0.0, axis=1))[0])
    best_val = np.inf
    while np.max(half) > rel_tol * scale:
        cand = center + mesh * half
        vals = distance_matrix(cand, X).sum(axis=1)
        j = int(np.argmin(vals))
        if vals[mid] <= vals[j]:  # flat objective: stay put and zoom in
            j = mid
        if vals[j] <= best_val:
            best_val = vals[j]
            center = cand[j]
        if not edge[j]:
            half = half / 2
    return center


def mad(X) -> float:
    """Optimal 1-median cost divided by n."""
    X = as_points(X)
    res = geometric_median(X)
    if not res.converged:
        raise RuntimeError(f"geometric median did not converge (residual {res.residual:g})")
    return res.objective / X.shape[0]


@dataclass(frozen=True)
class BalancedSolverConfig:
    k: int = 2
    beta: float = 0.0
    tie_break: Literal["lowest_split_index"] = "lowest_split_index"
    # when no split is induced by its own medians, either fail or fall back
    # to the cheapest balanced split regardless of inducedness
    require_induced: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 <= self.beta <= 0.5 and not (self.k == 1 and 0 <= self.beta <= 1):
            raise ValueError("beta must lie in [0, 0.5]")
        if self.beta * self.k > 1 + 1e-12:
            raise ValueError(f"beta*k = {self.beta * self.k:g} > 1: nothing can be that balanced")

    def min_size(self, n: int) -> int:
        return max(1, math.ceil(self.beta * n - 1e-9))


def balanced_kmedians_line(X, k: int = 2, beta: float = 0.0, require_induced: bool = True) -> FacilitySolution:
    """Exact beta-balanced k-medians for points on the line.

    Enumerates every split of the sorted points into ``k`` contiguous
    segments with at least ceil(beta*n) points each, centers each segment at
    its lower median, drops splits whose partition is not induced by those
    centers, and keeps the cheapest (first split vector on ties).

    With ``require_induced=False``, when every split fails the inducedness
    test the cheapest balanced split is used instead of raising; its labels
    are then the nearest-center partition, which need not be balanced.
    """
    return solve_balanced_line(X, BalancedSolverConfig(k, beta, require_induced=require_induced))


def solve_balanced_line(X, cfg: BalancedSolverConfig) -> FacilitySolution:
    X = as_points(X)
    if X.shape[1] != 1:
        raise ValueError("balanced_kmedians_line needs points on the line (d=1)")
    n, k = X.shape[0], cfg.k
    m = cfg.min_size(n)
    if m * k > n:
        raise Infeasible(f"cannot split {n} points into {k} clusters of size >= {m}")
    order = np.argsort(X[:, 0], kind="stable")
    xs = X[order, 0]
    prefix = np.concatenate([[0.0], np.cumsum(xs)])
    tol = tie_tolerance(X)

    # rows: boundaries 0 = s_0 < s_1 < ... < s_k = n
    if k == 1:
        bounds = np.array([[0, n]])
    else:
        cuts = np.array(list(itertools.combinations(range(m, n - m + 1), k - 1)), dtype=int)
        if cuts.size == 0:
            raise Infeasible(f"no split with clusters of size >= {m}")
        cuts = cuts.reshape(-1, k - 1)
        bounds = np.hstack([np.zeros((len(cuts), 1), int), cuts, np.full((len(cuts), 1), n)])
        lengths = np.diff(bounds, axis=1)
        bounds = bounds[np.all(lengths >= m, axis=1)]
        if len(bounds) == 0:
            raise Infeasible(f"no split with clusters of size >= {m}")

    a, b = bounds[:, :-1], bounds[:, 1:]
    med = a + (b - a + 1) // 2 - 1
    c = xs[med]
    seg_cost = c * (med - a) - (prefix[med] - prefix[a]) + (prefix[b] - prefix[med + 1]) - c * (b - med - 1)
    total = seg_cost.sum(axis=1)

    valid = np.ones(len(bounds), dtype=bool)
    for j in range(k - 1):
        s = bounds[:, j + 1]
        last, first = xs[s - 1], xs[s]
        left, right = c[:, j], c[:, j + 1]
        valid &= np.abs(last - left) <= np.abs(last - right) + tol
        valid &= np.abs(first - right) <= np.abs(first - left) + tol
    fallback = not valid.any()
    if fallback:
        if cfg.require_induced:
            raise Infeasible("no contiguous balanced split is induced by its own medians")
        valid[:] = True

    idx = np.flatnonzero(valid)
    costs = total[idx]
    best = costs.min()
    pick = idx[np.flatnonzero(costs <= best + 1e-12 * max(1.0, abs(best)))[0]]

    centers = c[pick][:, None]
    if fallback:
        return induced_partition(X, centers, "balance_seeking")
    labels_sorted = np.repeat(np.arange(k), np.diff(bounds[pick]))
    labels = np.empty(n, dtype=int)
    labels[order] = labels_sorted
    return FacilitySolution(centers, labels, kmed_cost(X, centers))


def kmedians_bruteforce(X, k: int, beta: float = 0.0, max_candidates: int = 1_000_000) -> FacilitySolution:
    """Best k centers drawn from the data points (any dimension).

    Partitions use balance-seeking ties and must be beta-balanced. Exact for
    the line; elsewhere only a sanity-check heuristic.
    """
    X = as_points(X)
    n = X.shape[0]
    locs, first = np.unique(X, axis=0, return_index=True)
    locs = locs[np.argsort(first)]
    u = len(locs)
    n_cand = math.comb(u + k - 1, k)
    if n_cand > max_candidates:
        raise ValueError(f"{n_cand} candidate center tuples exceed the limit {max_candidates}")
    combos = np.array(list(itertools.combinations_with_replacement(range(u), k)), dtype=int)
    D = distance_matrix(X, locs)
    costs = D[:, combos].min(axis=2).sum(axis=0)
    order = np.argsort(costs, kind="stable")
    need = max(0, math.ceil(beta * n - 1e-9))
    for j in order:
        sol = induced_partition(X, locs[combos[j]], "balance_seeking")
        if min(sol.sizes) >= need:
            return sol
    raise Infeasible(f"no data-point center tuple yields a {beta:g}-balanced partition")


def bcc(Xp, b: float, delta: float, require_induced: bool = False) -> np.ndarray:
    """Big-cluster center of the (b-1)*delta-balanced 2-medians of ``Xp``.

    By default the inner solver falls back to the cheapest balanced split when
    no split is induced by its medians, so the estimator is always defined.
    """
    Xp = as_points(Xp)
    beta = (b - 1) * delta
    if beta >= 0.5:
        raise ValueError(f"(b-1)*delta = {beta:g} must be below 0.5")
    sol = balanced_kmedians_line(Xp, 2, max(beta, 0.0), require_induced)
    h_left, h_right = sol.centers[0], sol.centers[1]
    dl = np.abs(Xp[:, 0] - h_left[0])
    dr = np.abs(Xp[:, 0] - h_right[0])
    n_left = int(np.count_nonzero(dl <= dr))
    return (h_left if n_left >= Xp.shape[0] - n_left else h_right).copy()


def big_cluster(X) -> np.ndarray:
    """Indices of the larger cluster of the optimal 2-medians of ``X``.

    On equal sizes the cluster holding the first point wins.
    """
    X = as_points(X)
    sol = balanced_kmedians_line(X, 2, 0.0)
    left, right = sol.clusters()
    if len(left) != len(right):
        return left if len(left) > len(right) else right
    return left if sol.labels[0] == 0 else right


def bcccost(X, t, cluster: np.ndarray | None = None) -> float:
    """1-median cost of the big cluster of ``X`` served from ``t``."""
    X = as_points(X)
    idx = big_cluster(X) if cluster is None else cluster
    return kmed_cost(X[idx], np.atleast_2d(as_point(t)))


def best_second_facility(X, h_s) -> np.ndarray:
    """Data point minimizing the 2-medians cost given the first facility."""
    X = as_points(X)
    h_s = as_point(h_s)
    to_first = np.linalg.norm(X - h_s, axis=1)
    D = distance_matrix(X, X)
    costs = np.minimum(D, to_first[:, None]).sum(axis=0)
    return X[int(np.argmin(costs))].copy()


__all__ = [
    "BalancedSolverConfig",
    "GeoMedianResult",
    "Infeasible",
    "balanced_kmedians_line",
    "bcc",
    "bcccost",
    "best_second_facility",
    "big_cluster",
    "coordinatewise_median",
    "geometric_median",
    "geometric_median_batch",
    "grid_refine_median",
    "kmedians_bruteforce",
    "mad",
    "median_1d",
    "solve_balanced_line",
]
