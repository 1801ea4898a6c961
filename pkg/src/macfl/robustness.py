"""Corruption adversaries, robustness meters and the catalogue of tight instances."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    as_centers,
    as_point,
    as_points,
    corruption_budget,
    count_incorrect,
    hausdorff,
    kmed_cost,
    span,
)
from .estimators import (
    balanced_kmedians_line,
    bcc,
    bcccost,
    big_cluster,
    geometric_median,
    geometric_median_batch,
    median_1d,
)


@dataclass(frozen=True)
class Corruption:
    """Replace the points at ``indices`` by ``replacements``."""

    indices: tuple
    replacements: np.ndarray

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError("corrupted indices must be distinct")
        rep = np.asarray(self.replacements, dtype=float)
        if len(idx) == 0:
            rep = rep.reshape(0, rep.shape[-1] if rep.ndim == 2 else 1)
        else:
            rep = rep.reshape(len(idx), -1)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "replacements", rep)

    def __len__(self) -> int:
        return len(self.indices)


def apply_corruption(X, c: Corruption, delta: float | None = None) -> np.ndarray:
    X = as_points(X)
    n, d = X.shape
    if delta is not None and len(c) > corruption_budget(n, delta):
        raise ValueError(
            f"{len(c)} corrupted points exceed the budget floor(delta*n) = {corruption_budget(n, delta)}"
        )
    out = X.copy()
    if len(c) == 0:
        return out
    if c.replacements.shape[1] != d:
        raise ValueError("replacement dimension does not match the dataset")
    idx = np.asarray(c.indices)
    if idx.min() < 0 or idx.max() >= n:
        raise IndexError(f"corruption index out of range for n={n}")
    out[idx] = c.replacements
    return out


def corruption_between(X, Xp) -> Corruption:
    X, Xp = as_points(X), as_points(Xp)
    idx = np.flatnonzero(np.any(X != Xp, axis=1))
    return Corruption(tuple(idx), Xp[idx])


@dataclass
class RobustnessReport:
    rho_observed: float
    rho_theory: float | None
    gamma_observed: float
    gamma_theory: float | None
    witness: Corruption
    evaluated: int = 1

    def to_json(self) -> dict:
        return {
            "rho_observed": self.rho_observed,
            "rho_theory": self.rho_theory,
            "gamma_observed": self.gamma_observed,
            "gamma_theory": self.gamma_theory,
            "witness_indices": list(self.witness.indices),
            "witness_points": self.witness.replacements.tolist(),
        }


# ---------------------------------------------------------------------------
# estimator pairs (reference f on X, estimator fhat on X')


@dataclass(frozen=True)
class Target:
    name: str
    reference: Callable  # X -> centers (k, d)
    estimator: Callable  # X' -> centers (k, d)
    cost: Callable  # (X, centers) -> float
    batch: Callable | None = None  # (B, n, d) -> (B, d) single centers
    rho_theory: Callable | None = None  # X -> float
    gamma_theory: float | None = None


def one_median_bounds(X, delta: float) -> tuple[float, float]:
    """Distance and approximation robustness guaranteed for the 1-median."""
    X = as_points(X)
    n = X.shape[0]
    opt = geometric_median(X).objective
    return 2.0 * opt / ((1.0 - 2.0 * delta) * n), 1.0 + 4.0 * delta / (1.0 - 2.0 * delta)


def balanced_bounds(X, delta: float, b: float, k: int = 2) -> tuple[float, float]:
    """Hausdorff and cost-ratio bounds for the (b-1)*delta-balanced solver."""
    if b <= 2 * k + 2:
        raise ValueError(f"the balanced guarantee needs b > 2k+2 = {2 * k + 2}")
    X = as_points(X)
    n = X.shape[0]
    opt = balanced_kmedians_line(X, k, b * delta).cost
    return 2 * k * opt / (delta * n * (b - 2 - 2 * k)), 1 + 4 * k / (b - 2 - 2 * k)


def _centers_of(fn):
    def wrapped(X):
        return as_centers(fn(X), as_points(X).shape[1])

    return wrapped


def make_target(target, delta: float, params: dict | None = None, cost=None) -> Target:
    params = dict(params or {})
    if callable(target) and not isinstance(target, str):
        f = _centers_of(target)
        return Target("custom", f, f, _cost_handle(cost or "kmed"))
    if target == "1med":
        f = _centers_of(lambda X: geometric_median(X).point)
        return Target(
            "1med",
            f,
            f,
            _cost_handle(cost or "kmed"),
            batch=lambda P: geometric_median_batch(P)[0],
            rho_theory=lambda X: one_median_bounds(X, delta)[0],
            gamma_theory=1.0 + 4.0 * delta / (1.0 - 2.0 * delta),
        )
    if target == "2med":
        f = lambda X: balanced_kmedians_line(X, 2, 0.0).centers
        return Target("2med", f, f, _cost_handle(cost or "kmed"))
    if target == "bal2med":
        b = float(params.get("b", 10.0))
        k = int(params.get("k", 2))
        ok = b > 2 * k + 2
        return Target(
            "bal2med",
            lambda X: balanced_kmedians_line(X, k, b * delta).centers,
            lambda Xp: balanced_kmedians_line(Xp, k, (b - 1) * delta).centers,
            _cost_handle(cost or "kmed"),
            rho_theory=(lambda X: balanced_bounds(X, delta, b, k)[0]) if ok else None,
            gamma_theory=(1 + 4 * k / (b - 2 - 2 * k)) if ok else None,
        )
    if target == "bcc":
        b = float(params.get("b", 46.0))
        return Target(
            "bcc",
            lambda X: np.array([[median_1d(as_points(X)[big_cluster(X), 0])]]),
            lambda Xp: bcc(Xp, b, delta)[None, :],
            _cost_handle(cost or "bcccost"),
        )
    raise ValueError(f"unknown target {target!r}")


def _cost_handle(cost):
    if callable(cost):
        return cost
    if cost == "kmed":
        return kmed_cost
    if cost == "bcccost":
        cache: dict = {}

        def f(X, F):
            X = as_points(X)
            key = X.tobytes()
            if key not in cache:
                cache.clear()
                cache[key] = big_cluster(X)
            return bcccost(X, np.asarray(F).reshape(-1), cluster=cache[key])

        return f
    raise ValueError(f"unknown cost {cost!r}")


# ---------------------------------------------------------------------------
# candidate corruptions


def candidate_pool(X, grid_points: int = 21, sentinel_scale: float = 1e6) -> np.ndarray:
    """Replacement positions: data points, a grid over twice the bounding box,
    and far sentinels along each axis and each diagonal."""
    X = as_points(X)
    d = X.shape[1]
    lo, hi = X.min(axis=0), X.max(axis=0)
    mid, half = (lo + hi) / 2, (hi - lo)
    diam = max(span(X), 1.0)
    parts = [X]
    if grid_points > 0:
        axes = [np.linspace(mid[j] - half[j], mid[j] + half[j], grid_points) for j in range(d)]
        parts.append(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d))
    far = sentinel_scale * diam
    dirs = np.vstack([np.eye(d), -np.eye(d)])
    if d > 1:
        corners = np.array(list(itertools.product([-1.0, 1.0], repeat=d))) / math.sqrt(d)
        dirs = np.vstack([dirs, corners])
    parts.append(mid + far * dirs)
    pool = np.vstack(parts)
    _, first = np.unique(pool, axis=0, return_index=True)
    return pool[np.sort(first)]


def _kept_subsets(X, r):
    """Index subsets of size r, one per distinct multiset of removed locations."""
    _, loc = np.unique(X, axis=0, return_inverse=True)
    loc = np.asarray(loc).ravel()
    seen, out = set(), []
    for sub in itertools.combinations(range(X.shape[0]), r):
        key = tuple(sorted(loc[list(sub)]))
        if key not in seen:
            seen.add(key)
            out.append(sub)
    return np.array(out, dtype=int).reshape(len(out), r)


@dataclass
class SweepResult:
    """Every corruption the adversary evaluated and its effect."""

    report: RobustnessReport
    rho: np.ndarray
    cost: np.ndarray
    base_cost: float
    budget: int
    removed: np.ndarray = field(repr=False)
    replacement: np.ndarray = field(repr=False)
    pool: np.ndarray = field(repr=False)


def adversary_search(
    X,
    delta: float,
    target="1med",
    objective: str = "distance",
    cost=None,
    mode: str = "exhaustive",
    budget: int = 1000,
    seed: int = 0,
    grid_points: int = 21,
    params: dict | None = None,
) -> RobustnessReport:
    """Worst corruption found inside the floor(delta*n)-neighborhood of ``X``."""
    return sweep(X, delta, target, objective, cost, mode, budget, seed, grid_points, params).report


def sweep(
    X,
    delta: float,
    target="1med",
    objective: str = "distance",
    cost=None,
    mode: str = "exhaustive",
    budget: int = 1000,
    seed: int = 0,
    grid_points: int = 21,
    params: dict | None = None,
    chunk: int = 100_000,
) -> SweepResult:
    if objective not in ("distance", "approx"):
        raise ValueError(f"unknown objective {objective!r}")
    X = as_points(X)
    n, d = X.shape
    r = corruption_budget(n, delta)
    tgt = make_target(target, delta, params, cost)
    pool = candidate_pool(X, grid_points)

    if mode == "exhaustive":
        if n > 12 or r > 3:
            raise ValueError(f"exhaustive search needs n <= 12 and floor(delta*n) <= 3 (got n={n}, r={r})")
        subsets = _kept_subsets(X, r)
        repl = np.array(list(itertools.combinations_with_replacement(range(len(pool)), r)), dtype=int)
        repl = repl.reshape(max(len(repl), 1), r)
        removed = np.repeat(subsets, len(repl), axis=0)
        replacement = np.tile(repl, (len(subsets), 1))
    elif mode == "randomized":
        removed = np.empty((budget, r), dtype=int)
        replacement = np.empty((budget, r), dtype=int)
        for t in range(budget):
            rng = np.random.default_rng([seed, t])
            removed[t] = rng.choice(n, size=r, replace=False)
            replacement[t] = rng.integers(len(pool), size=r)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    G = tgt.reference(X)
    base = float(tgt.cost(X, G))
    M = len(removed)
    rho = np.empty(M)
    costs = np.empty(M)
    rows = np.arange(M)
    for s in range(0, M, chunk):
        sl = slice(s, s + chunk)
        P = np.broadcast_to(X, (len(rows[sl]), n, d)).copy()
        if r:
            P[np.arange(len(P))[:, None], removed[sl]] = pool[replacement[sl]]
        if tgt.batch is not None and G.shape[0] == 1:
            H = tgt.batch(P)
            rho[sl] = np.linalg.norm(H - G[0], axis=1)
            if tgt.cost is kmed_cost:
                diff = X[None, :, :] - H[:, None, :]
                costs[sl] = np.sqrt(np.einsum("bnd,bnd->bn", diff, diff)).sum(axis=1)
            else:
                costs[sl] = [tgt.cost(X, h[None, :]) for h in H]
        else:
            for j, Xp in enumerate(P):
                H = tgt.estimator(Xp)
                rho[s + j] = hausdorff(G, H)
                costs[s + j] = tgt.cost(X, H)

    gamma = _ratio(costs, base)
    score = rho if objective == "distance" else gamma
    w = int(np.argmax(score))
    witness = Corruption(tuple(removed[w]), pool[replacement[w]]) if r else Corruption((), np.zeros((0, d)))
    report = RobustnessReport(
        rho_observed=float(rho[w]) if objective == "distance" else float(rho.max()),
        rho_theory=tgt.rho_theory(X) if tgt.rho_theory else None,
        gamma_observed=float(gamma[w]) if objective == "approx" else float(gamma.max()),
        gamma_theory=tgt.gamma_theory,
        witness=witness,
        evaluated=M,
    )
    return SweepResult(report, rho, costs, base, r, removed, replacement, pool)


def _ratio(costs, base):
    costs = np.asarray(costs, dtype=float)
    if base > 0:
        return costs / base
    return np.where(costs > 0, np.inf, 1.0)


def evaluate_prediction(X, Xp, delta: float, target="1med", cost=None, params: dict | None = None) -> RobustnessReport:
    """Robustness report for one fixed prediction ``Xp`` of ``X``."""
    X, Xp = as_points(X), as_points(Xp)
    c = corruption_between(X, Xp)
    if len(c) > corruption_budget(X.shape[0], delta):
        raise ValueError("prediction lies outside the delta-neighborhood")
    tgt = make_target(target, delta, params, cost)
    G, H = tgt.reference(X), tgt.estimator(Xp)
    base = float(tgt.cost(X, G))
    return RobustnessReport(
        rho_observed=hausdorff(G, H),
        rho_theory=tgt.rho_theory(X) if tgt.rho_theory else None,
        gamma_observed=float(_ratio([tgt.cost(X, H)], base)[0]),
        gamma_theory=tgt.gamma_theory,
        witness=c,
    )


@dataclass(frozen=True)
class SwitchCheck:
    lhs: float
    rhs: float
    rho: float
    holds: bool


def switch_lemma_check(fX, fhatXp, X, delta: float, tol: float = 1e-9) -> SwitchCheck:
    """Check kmed(X, fhat(X')) <= kmed(X, f(X)) + 2*floor(delta*n)*d_H."""
    X = as_points(X)
    d = X.shape[1]
    G, H = as_centers(fX, d), as_centers(fhatXp, d)
    rho = hausdorff(G, H)
    lhs = kmed_cost(X, H)
    base = kmed_cost(X, G)
    rhs = base + 2 * corruption_budget(X.shape[0], delta) * rho
    return SwitchCheck(lhs, rhs, rho, lhs <= rhs + tol * max(1.0, base))


# ---------------------------------------------------------------------------
# named instances


@dataclass(frozen=True)
class NamedInstance:
    id: str
    X: np.ndarray
    Xp: np.ndarray
    params: dict
    expected: dict

    @property
    def delta(self) -> float:
        return float(self.params.get("delta", 0.0))


def _line(*groups):
    return np.concatenate([np.full(int(c), float(v)) for v, c in groups])[:, None]


def _example_1_1(n=10, M=1e6):
    if n % 2:
        raise ValueError("example-1-1 needs an even n")
    X = _line((0, n // 2), (1, n // 2))
    Xp = X.copy()
    Xp[-1] = M
    return X, Xp, {"n": n, "M": M, "delta": 1.0 / n}, {"hausdorff_lower_bound": M / 2, "opt_cost": 0.0}


def _cor_tight(n=100, delta=0.1):
    moved = round(delta * n)
    if abs(moved - delta * n) > 1e-9:
        raise ValueError("cor-tight needs delta*n to be an integer")
    zeros = round((0.5 - delta) * n) + 1
    X = _line((0, zeros), (1, n - zeros))
    Xp = X.copy()
    Xp[zeros : zeros + moved] = 0.0
    gamma = (n - zeros) / zeros
    return X, Xp, {"n": n, "delta": delta}, {
        "gamma_1median": gamma,
        "gamma_bound": 1 + 4 * delta / (1 - 2 * delta),
    }


def _propmech_tight(n=10):
    if n % 2 or n < 4:
        raise ValueError("propmech-tight needs an even n >= 4")
    X = _line((0, n // 2), (1, n // 2 - 1), (2, 1))
    h = n / 2
    return X, X.copy(), {"n": n, "h_S": 0.0}, {"ratio": 3 * (h - 1) / (h + 1), "opt_cost": 1.0}


def _bcc_5_3(n=800, eps=0.01, M=1e6):
    if n % 4:
        raise ValueError("bcc-5-3 needs n divisible by 4")
    X = np.vstack([_line((0, n // 2), (-0.5 - eps, n // 4), (-1, n // 4)), [[M]]])
    Xp = X.copy()
    Xp[-1] = -1.0
    return X, Xp, {"n": n, "eps": eps, "M": M, "delta": 1.0 / (n + 1), "b": 46.0}, {
        "ratio": (5 - 2 * eps) / (3 + 2 * eps),
        "ratio_limit": 5.0 / 3.0,
        "bcc_output": -1.0,
    }


def _minbb_tight(n=4, d=2):
    a, b = -np.ones(d), np.ones(d)
    X = np.vstack([np.tile(a, (n - 1, 1)), b])
    return X, X.copy(), {"n": n, "d": d, "o": b.tolist()}, {"ratio": float(n - 1)}


def _second_fac_manip():
    X = _line((3, 1), (5, 1), (14, 1))
    return X, X.copy(), {"h_S": 0.0, "agent": 0, "deviation": [5.0]}, {
        "honest_choice": 14.0,
        "honest_cost": 3.0,
        "deviated_cost": 2.0,
    }


def _convexhull_manip():
    X = np.array([[-0.5, 0.0], [0.5, 0.0], [0.0, 1.0]])
    # target point chosen so the deviation pulls the hull projection closer
    o = [1.0, 0.5]
    return X, X.copy(), {"o": o, "agent": 2, "deviation": [0.5, 1.0]}, {}


CATALOGUE = {
    "example-1-1": _example_1_1,
    "cor-tight": _cor_tight,
    "propmech-tight": _propmech_tight,
    "bcc-5-3": _bcc_5_3,
    "minbb-tight": _minbb_tight,
    "second-fac-manip": _second_fac_manip,
    "convexhull-manip": _convexhull_manip,
}


def named_instance(id: str, **params) -> NamedInstance:
    try:
        build = CATALOGUE[id]
    except KeyError:
        raise ValueError(f"unknown instance {id!r}; known: {sorted(CATALOGUE)}") from None
    X, Xp, p, expected = build(**params)
    inst = NamedInstance(id, X, Xp, p, expected)
    r = corruption_budget(len(X), inst.delta)
    if count_incorrect(X, Xp, 0.0) > max(r, 0):
        raise AssertionError(f"{id}: prediction exceeds its corruption budget")
    return inst
