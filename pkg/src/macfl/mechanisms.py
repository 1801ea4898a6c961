"""Strategyproof facility-location mechanisms that take predictions as advice.

Every mechanism is registered under a string id. A mechanism is *prepared*
on an input once (whatever depends on predictions alone is computed there)
and then evaluated on report profiles, which is how the audits replay it
under deviations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    FacilitySolution,
    PredictionSet,
    as_point,
    as_points,
    distance_matrix,
    kmed_cost,
)
from .estimators import (
    balanced_kmedians_line,
    bcc,
    best_second_facility,
    coordinatewise_median,
    geometric_median,
)


@dataclass(frozen=True)
class OutcomeDistribution:
    """Finite distribution over facility tuples.

    ``facilities`` has shape ``(m, k, d)``; ``probs`` has shape ``(m,)``.
    """

    facilities: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.facilities, dtype=float)
        if F.ndim == 2:
            F = F[None]
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if F.ndim != 3 or len(F) != len(p) or len(p) == 0:
            raise ValueError("facilities must be (m, k, d) with one probability per outcome")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "facilities", F)
        object.__setattr__(self, "probs", p)

    @classmethod
    def point_mass(cls, centers) -> "OutcomeDistribution":
        F = np.atleast_2d(np.asarray(centers, dtype=float))
        return cls(F[None], np.ones(1))

    @property
    def kind(self) -> str:
        return "deterministic" if len(self.probs) == 1 else "randomized"

    @property
    def k(self) -> int:
        return self.facilities.shape[1]

    def agent_cost(self, x) -> float:
        """Expected distance from ``x`` to its nearest facility."""
        x = as_point(x)
        d = np.linalg.norm(self.facilities - x, axis=2).min(axis=1)
        return float(self.probs @ d)

    def expected_cost(self, X) -> float:
        X = as_points(X)
        diff = X[None, :, None, :] - self.facilities[:, None, :, :]
        d = np.sqrt(np.einsum("mnkd,mnkd->mnk", diff, diff)).min(axis=2).sum(axis=1)
        return float(self.probs @ d)

    def to_json(self, mechanism: str, X=None) -> dict:
        mean = (self.probs[:, None, None] * self.facilities).sum(axis=0)
        out = {
            "mechanism": mechanism,
            "facilities": (self.facilities[0] if self.kind == "deterministic" else mean).tolist(),
            "distribution": [
                {"facilities": F.tolist(), "p": float(p)} for F, p in zip(self.facilities, self.probs)
            ],
        }
        if X is not None:
            out["cost_expected"] = self.expected_cost(X)
        return out


@dataclass
class MechanismInput:
    reports: np.ndarray
    predictions: PredictionSet
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.reports = as_points(self.reports)
        if not isinstance(self.predictions, PredictionSet):
            self.predictions = PredictionSet(self.predictions, delta=float(self.params.get("delta", 0.0)))
        self.predictions.check_against(self.reports)

    @property
    def delta(self) -> float:
        return float(self.params.get("delta", self.predictions.delta))

    @property
    def dim(self) -> int:
        return self.reports.shape[1]

    def with_reports(self, reports) -> "MechanismInput":
        return MechanismInput(reports, self.predictions, self.params)


def prediction_branch(delta: float, d: int) -> bool:
    """Whether the single-facility mechanism trusts the predictions."""
    return 1.0 + 4.0 * delta / (1.0 - 2.0 * delta) <= math.sqrt(d)


def best_choice_single(inp: MechanismInput) -> np.ndarray:
    if prediction_branch(inp.delta, inp.dim):
        return geometric_median(inp.predictions.points).point
    return coordinatewise_median(inp.reports)


def minbb(X, o) -> np.ndarray:
    """Clamp ``o`` coordinate-wise into the bounding box of ``X``."""
    X = as_points(X)
    o = as_point(o)
    if o.shape[0] != X.shape[1]:
        raise ValueError(f"target has dimension {o.shape[0]}, data {X.shape[1]}")
    return np.clip(o, X.min(axis=0), X.max(axis=0))


def bounded_best_choice(inp: MechanismInput) -> np.ndarray:
    return minbb(inp.reports, best_choice_single(inp))


def balanced_k_facility(inp: MechanismInput, k: int = 2, b: float = 10.0) -> FacilitySolution:
    """Optimal (b-1)*delta-balanced k-medians of the predictions."""
    if b <= 2 * k + 2:
        warnings.warn(f"b={b} <= 2k+2={2 * k + 2}: the approximation guarantee does not apply", stacklevel=2)
    return balanced_kmedians_line(inp.predictions.points, k, (b - 1) * inp.delta)


def prop_mech_distribution(X, h_S) -> OutcomeDistribution:
    """Second facility at x_i with probability proportional to d(x_i, h_S)."""
    X = as_points(X)
    h = as_point(h_S)
    a = np.linalg.norm(X - h, axis=1)
    total = a.sum()
    if total == 0:
        return OutcomeDistribution.point_mass(np.vstack([h, X[0]]))
    locs, first, inv = np.unique(X, axis=0, return_index=True, return_inverse=True)
    mass = np.bincount(np.asarray(inv).ravel(), weights=a, minlength=len(locs)) / total
    order = np.argsort(first)
    order = order[mass[order] > 0]
    F = np.stack([np.vstack([h, locs[j]]) for j in order])
    p = mass[order]
    return OutcomeDistribution(F, p / p.sum())


def prop_mech_sample(X, h_S, seed: int) -> np.ndarray:
    """One draw of the second facility, by inverse CDF on a seeded generator."""
    dist = prop_mech_distribution(X, h_S)
    u = np.random.default_rng(seed).random()
    j = int(np.searchsorted(np.cumsum(dist.probs), u, side="right"))
    return dist.facilities[min(j, len(dist.probs) - 1), 1].copy()


def predict_and_choose(inp: MechanismInput, b: float = 46.0, clamp: bool = False) -> OutcomeDistribution:
    """First facility from BCC on the predictions, second by PropMech on reports."""
    h1 = bcc(inp.predictions.points, b, inp.delta)
    if clamp:
        h1 = minbb(inp.reports, h1)
    return prop_mech_distribution(inp.reports, h1)


def project_to_hull(X, o) -> np.ndarray:
    """Euclidean projection of ``o`` onto the convex hull of ``X`` (d <= 2)."""
    X = as_points(X)
    o = as_point(o)
    d = X.shape[1]
    if d == 1:
        return minbb(X, o)
    if d != 2:
        raise ValueError("hull projection is implemented for d <= 2")
    pts = np.unique(X, axis=0)
    if len(pts) == 1:
        return pts[0].copy()
    verts = _hull_2d(pts)
    if len(verts) >= 3 and _inside(verts, o):
        return o.copy()
    edges = zip(verts, np.roll(verts, -1, axis=0)) if len(verts) >= 3 else [(verts[0], verts[1])]
    best, best_d = None, np.inf
    for a, c in edges:
        seg = c - a
        t = np.clip(np.dot(o - a, seg) / np.dot(seg, seg), 0.0, 1.0)
        q = a + t * seg
        dq = np.linalg.norm(o - q)
        if dq < best_d:
            best, best_d = q, dq
    return best


def _hull_2d(pts):
    """Counter-clockwise hull vertices (monotone chain); 2 vertices if collinear."""
    P = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in P:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in P[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _inside(verts, o) -> bool:
    nxt = np.roll(verts, -1, axis=0)
    cr = (nxt[:, 0] - verts[:, 0]) * (o[1] - verts[:, 1]) - (nxt[:, 1] - verts[:, 1]) * (o[0] - verts[:, 0])
    return bool(np.all(cr >= 0))


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Mechanism:
    id: str
    prepare: Callable  # MechanismInput -> (reports -> OutcomeDistribution)
    k: int
    uses_reports: Callable = lambda inp: True
    strategyproof: bool = True


def _alg1(inp):
    if prediction_branch(inp.delta, inp.dim):
        g = geometric_median(inp.predictions.points).point
        return lambda R: OutcomeDistribution.point_mass(g)
    return lambda R: OutcomeDistribution.point_mass(coordinatewise_median(R))


def _alg2(inp):
    if prediction_branch(inp.delta, inp.dim):
        g = geometric_median(inp.predictions.points).point
        return lambda R: OutcomeDistribution.point_mass(minbb(R, g))
    return lambda R: OutcomeDistribution.point_mass(minbb(R, coordinatewise_median(R)))


def _alg3(inp):
    sol = balanced_k_facility(inp, int(inp.params.get("k", 2)), float(inp.params.get("b", 10.0)))
    return lambda R: OutcomeDistribution.point_mass(sol.centers)


def _alg5(inp):
    b = float(inp.params.get("b", 46.0))
    h1 = bcc(inp.predictions.points, b, inp.delta)
    if inp.params.get("clamp", False):
        return lambda R: prop_mech_distribution(R, minbb(R, h1))
    return lambda R: prop_mech_distribution(R, h1)


def _first_facility(inp):
    if "h_S" not in inp.params:
        raise ValueError("this mechanism needs the first facility in params['h_S']")
    return as_point(inp.params["h_S"])


def _propmech(inp):
    h = _first_facility(inp)
    return lambda R: prop_mech_distribution(R, h)


def _target(inp):
    if "o" in inp.params:
        return as_point(inp.params["o"])
    return geometric_median(inp.predictions.points).point


def _minbb(inp):
    o = _target(inp)
    return lambda R: OutcomeDistribution.point_mass(minbb(R, o))


def _hull(inp):
    o = _target(inp)
    return lambda R: OutcomeDistribution.point_mass(project_to_hull(R, o))


def _best_second(inp):
    h = _first_facility(inp)
    return lambda R: OutcomeDistribution.point_mass(np.vstack([h, best_second_facility(R, h)]))


MECHANISMS = {
    "alg1": Mechanism("alg1", _alg1, 1, lambda inp: not prediction_branch(inp.delta, inp.dim)),
    "alg2": Mechanism("alg2", _alg2, 1),
    "alg3": Mechanism("alg3", _alg3, 2, lambda inp: False),
    "alg5": Mechanism("alg5", _alg5, 2),
    "propmech": Mechanism("propmech", _propmech, 2),
    "minbb": Mechanism("minbb", _minbb, 1),
    # manipulable controls
    "best-second-facility": Mechanism("best-second-facility", _best_second, 2, strategyproof=False),
    "convexhull-minbb": Mechanism("convexhull-minbb", _hull, 1, strategyproof=False),
}


def get_mechanism(id: str) -> Mechanism:
    try:
        return MECHANISMS[id]
    except KeyError:
        raise ValueError(f"unknown mechanism {id!r}; known: {sorted(MECHANISMS)}") from None


def run_mechanism(id: str, inp: MechanismInput) -> OutcomeDistribution:
    return get_mechanism(id).prepare(inp)(inp.reports)
