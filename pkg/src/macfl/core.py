"""Metric primitives shared by the estimators, mechanisms and audits.

Points live in Euclidean R^d and are handled as float64 numpy arrays: a single
point is a ``(d,)`` array and a dataset is an ``(n, d)`` array whose row order
identifies the agents. Plain Python lists are accepted everywhere and coerced
with :func:`as_points` / :func:`as_point`; a flat list of scalars is read as
``n`` points on the line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

TieRule = Literal["lowest_center_index", "balance_seeking"]

# absolute tie tolerance, multiplied by max(1, instance span)
TIE_TOL = 1e-9


def as_points(X) -> np.ndarray:
    """Coerce ``X`` to an ``(n, d)`` float array and validate it."""
    if isinstance(X, (Dataset, PredictionSet)):
        return X.points
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ValueError(f"expected a list of points, got array of shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("point set must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coordinates must be finite")
    return arr


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    elif arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ValueError("a point needs at least one finite coordinate")
    return arr


def _same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


@dataclass(frozen=True)
class Dataset:
    """An indexed multi-set of points (agent locations or predictions)."""

    points: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def to_json(self) -> dict:
        return {"dim": self.dim, "points": self.points.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Dataset":
        ds = cls(np.asarray(obj["points"], dtype=float).reshape(len(obj["points"]), -1))
        if "dim" in obj and int(obj["dim"]) != ds.dim:
            raise ValueError(f"declared dim {obj['dim']} but points have dim {ds.dim}")
        return ds

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class PredictionSet:
    """Predicted locations with their claimed accuracy (epsilon, delta)."""

    points: np.ndarray
    epsilon: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        pts = as_points(self.points).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        if not 0 <= self.delta < 0.5:
            raise ValueError("delta must lie in [0, 0.5)")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def check_against(self, reference) -> None:
        ref = as_points(reference)
        if ref.shape != self.points.shape:
            raise ValueError(
                f"predictions have shape {self.points.shape}, reference {ref.shape}"
            )

    def to_json(self) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta, "points": self.points.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "PredictionSet":
        pts = np.asarray(obj["points"], dtype=float).reshape(len(obj["points"]), -1)
        return cls(pts, float(obj.get("epsilon", 0.0)), float(obj.get("delta", 0.0)))

    @classmethod
    def load(cls, path) -> "PredictionSet":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class FacilitySolution:
    """Centers, the dataset partition they induce, and its k-medians cost."""

    centers: np.ndarray
    labels: np.ndarray
    cost: float
    sizes: tuple = field(default=())

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "labels", labels)
        if not self.sizes:
            sizes = np.bincount(labels, minlength=len(centers)) if labels.size else np.zeros(len(centers), int)
            object.__setattr__(self, "sizes", tuple(int(s) for s in sizes))

    @property
    def k(self) -> int:
        return len(self.centers)

    @property
    def n(self) -> int:
        return len(self.labels)

    def clusters(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == j) for j in range(self.k)]


def distance(p, q) -> float:
    p, q = as_point(p), as_point(q)
    _same_dim(p, q)
    return float(np.linalg.norm(p - q))


def distance_matrix(U, W) -> np.ndarray:
    U, W = as_points(U), as_points(W)
    _same_dim(U, W)
    diff = U[:, None, :] - W[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def span(*point_sets) -> float:
    """Diagonal of the joint bounding box, used to scale tolerances."""
    pts = np.vstack([as_points(P) for P in point_sets])
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def tie_tolerance(*point_sets) -> float:
    return TIE_TOL * max(1.0, span(*point_sets))


def kmed_cost(X, F) -> float:
    """Sum over points of the distance to the nearest center."""
    X = as_points(X)
    F = as_centers(F, X.shape[1])
    return float(distance_matrix(X, F).min(axis=1).sum())


def point_to_set(u, W) -> float:
    return float(distance_matrix(np.atleast_2d(as_point(u)), W).min())


def hausdorff(U, W) -> float:
    U = as_centers(U)
    W = as_centers(W, U.shape[1])
    D = distance_matrix(U, W)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def as_centers(F, dim: int | None = None) -> np.ndarray:
    """Coerce a center list to ``(k, d)``.

    A flat array is read as one point when ``dim`` > 1 and its length equals
    ``dim``, otherwise as points on the line.
    """
    if isinstance(F, FacilitySolution):
        return F.centers
    arr = np.asarray(F, dtype=float)
    if arr.size == 0:
        raise ValueError("at least one center is required")
    if arr.ndim == 1 and dim is not None and dim > 1 and arr.shape[0] == dim:
        arr = arr.reshape(1, -1)
    return as_points(arr)


def induced_partition(X, F, tie_rule: TieRule = "lowest_center_index") -> FacilitySolution:
    """Assign every point to a nearest center.

    Under ``balance_seeking`` the points equidistant (within tolerance) to
    several centers are distributed so that the smallest cluster is as large
    as possible.
    """
    X = as_points(X)
    F = as_centers(F, X.shape[1])
    _same_dim(X, F)
    D = distance_matrix(X, F)
    nearest = D.min(axis=1)
    cost = float(nearest.sum())
    if tie_rule == "lowest_center_index":
        labels = D.argmin(axis=1)
    elif tie_rule == "balance_seeking":
        tol = tie_tolerance(X, F)
        options = D <= nearest[:, None] + tol
        labels = _balance_ties(options)
    else:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    return FacilitySolution(F, labels, cost)


def _balance_ties(options: np.ndarray) -> np.ndarray:
    n, k = options.shape
    labels = options.argmax(axis=1)
    tied = np.flatnonzero(options.sum(axis=1) > 1)
    if tied.size == 0:
        return labels
    fixed = np.setdiff1d(np.arange(n), tied)
    sizes = np.bincount(labels[fixed], minlength=k)
    if k == 2:
        # every tied point may join either cluster: greedy fill is optimal
        for i in tied:
            j = int(np.argmin(sizes))
            labels[i] = j
            sizes[j] += 1
        return labels
    return _balance_ties_flow(options, tied, sizes, labels)


def _balance_ties_flow(options, tied, sizes, labels):
    import networkx as nx

    k = options.shape[1]

    def assign(target):
        G = nx.DiGraph()
        for i in tied:
            G.add_edge("s", ("p", int(i)), capacity=1)
            for j in np.flatnonzero(options[i]):
                G.add_edge(("p", int(i)), ("c", int(j)), capacity=1)
        need = 0
        for j in range(k):
            deficit = max(0, target - int(sizes[j]))
            need += deficit
            G.add_edge(("c", j), "t", capacity=deficit)
        value, flow = nx.maximum_flow(G, "s", "t")
        return value == need, flow

    lo, hi = int(sizes.min()), int(sizes.min()) + len(tied)
    best_flow = assign(lo)[1]
    while lo < hi:
        mid = (lo + hi + 1) // 2
        ok, flow = assign(mid)
        if ok:
            lo, best_flow = mid, flow
        else:
            hi = mid - 1
    labels = labels.copy()
    for i in tied:
        chosen = [c[1] for c, f in best_flow[("p", int(i))].items() if f > 0.5]
        labels[i] = chosen[0] if chosen else int(np.flatnonzero(options[i])[0])
    return labels


def balance_of(sol: FacilitySolution) -> float:
    """Largest beta for which the solution's partition is beta-balanced."""
    return min(sol.sizes) / sol.n


def is_center_induced(X, sol: FacilitySolution) -> bool:
    D = distance_matrix(X, sol.centers)
    own = D[np.arange(len(D)), sol.labels]
    return bool(np.all(own <= D.min(axis=1) + tie_tolerance(X, sol.centers)))


def count_incorrect(X, Xp, eps: float) -> int:
    """Number of predictions farther than ``eps`` from their true point."""
    X, Xp = as_points(X), as_points(Xp)
    if X.shape != Xp.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Xp.shape}")
    return int(np.count_nonzero(np.linalg.norm(X - Xp, axis=1) > eps))


def corruption_budget(n: int, delta: float) -> int:
    """floor(delta * n), guarded against representation error."""
    return int(math.floor(delta * n + 1e-9))


def in_neighborhood(X, Xp, eps: float, r: float) -> bool:
    return count_incorrect(X, Xp, eps) <= r


def is_mac(X, Xp, eps: float, delta: float) -> bool:
    n = as_points(X).shape[0]
    return count_incorrect(X, Xp, eps) <= corruption_budget(n, delta)


def lower_median_index(m: int) -> int:
    """0-based sorted index of the lower median of ``m`` values."""
    return (m + 1) // 2 - 1


def as_point_list(points: Sequence) -> list[list[float]]:
    return [list(map(float, np.atleast_1d(p))) for p in points]
