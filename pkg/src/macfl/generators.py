"""Seeded instance generators producing true locations and MAC predictions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, PredictionSet, as_points, corruption_budget, count_incorrect
from .robustness import named_instance

GENERATORS = ("uniform", "gaussian_clusters", "two_cluster_line", "unbalanced_two_cluster", "named")
CORRUPTIONS = ("far", "clustered", "swap", "mixed")


@dataclass(frozen=True)
class GeneratorSpec:
    id: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in GENERATORS:
            raise ValueError(f"unknown generator {self.id!r}; known: {list(GENERATORS)}")

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorSpec":
        return cls(obj["id"], dict(obj.get("params", {})))

    def to_json(self) -> dict:
        return {"id": self.id, "params": self.params}


def trial_seed(master: int, trial: int) -> int:
    """Independent per-trial seed derived from (master seed, trial index)."""
    return int(np.random.SeedSequence([int(master), int(trial)]).generate_state(1, np.uint64)[0])


def _positive_int(params, key, default=None):
    v = params.get(key, default)
    if v is None or int(v) != v or int(v) < 1:
        raise ValueError(f"{key} must be a positive integer, got {v!r}")
    return int(v)


def _locations(gid: str, p: dict, rng) -> np.ndarray:
    n = _positive_int(p, "n", 20)
    if gid == "uniform":
        d = _positive_int(p, "d", 1)
        return rng.uniform(0.0, float(p.get("scale", 1.0)), size=(n, d))
    if gid == "gaussian_clusters":
        d = _positive_int(p, "d", 2)
        k = _positive_int(p, "clusters", 2)
        gap = float(p.get("gap", 10.0))
        centers = rng.uniform(0.0, gap * k, size=(k, d))
        which = rng.integers(k, size=n)
        return centers[which] + rng.normal(scale=float(p.get("sigma", 1.0)), size=(n, d))
    if gid == "two_cluster_line":
        balance = p.get("balance")
        balance = rng.uniform(0.2, 0.5) if balance is None else float(balance)
        if not 0 <= balance <= 0.5:
            raise ValueError("balance must lie in [0, 0.5]")
        small = int(round(balance * n))
        return _two_clusters(n, small, p, rng)
    if gid == "unbalanced_two_cluster":
        small = p.get("small")
        if small is None or not 0 <= int(small) < n:
            raise ValueError("unbalanced_two_cluster needs 0 <= small < n")
        return _two_clusters(n, int(small), p, rng)
    raise ValueError(f"unknown generator {gid!r}")


def _two_clusters(n, small, p, rng):
    gap = float(p.get("gap", 100.0))
    sigma = float(p.get("sigma", 1.0))
    pts = np.concatenate([rng.normal(0.0, sigma, n - small), rng.normal(gap, sigma, small)])
    return pts[:, None]


def _perturb(X, eps, rng):
    n, d = X.shape
    if eps == 0:
        return X.copy()
    u = rng.normal(size=(n, d))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
    radius = eps * (1 - 1e-12) * rng.uniform(size=(n, 1))
    return X + radius * u


def corrupt(X, Xp, r, mode, placement, far, rng):
    n, d = X.shape
    if r == 0:
        return Xp
    if placement == "uniform":
        idx = rng.choice(n, size=r, replace=False)
    elif placement == "targeted":
        # hit the points farthest from the bulk, e.g. a small cluster
        dev = np.linalg.norm(X - np.median(X, axis=0), axis=1)
        idx = np.argsort(-dev, kind="stable")[:r]
    else:
        raise ValueError(f"unknown placement {placement!r}")
    lo, hi = X.min(axis=0), X.max(axis=0)
    width = np.maximum(hi - lo, 1.0)
    spot = rng.uniform(lo - width / 2, hi + width / 2)
    modes = [mode] * r if mode != "mixed" else list(rng.choice(["far", "clustered", "swap"], size=r))
    out = Xp.copy()
    for i, m in zip(idx, modes):
        if m == "far":
            u = rng.normal(size=d)
            out[i] = X.mean(axis=0) + far * u / max(np.linalg.norm(u), 1e-300)
        elif m == "clustered":
            out[i] = spot
        elif m == "swap":
            out[i] = X[rng.integers(n)]
        else:
            raise ValueError(f"unknown corruption mode {m!r}")
    return out


def generate(spec) -> tuple[Dataset, PredictionSet]:
    """True locations and (epsilon, delta)-MAC predictions for ``spec``."""
    if isinstance(spec, dict):
        spec = GeneratorSpec.from_json(spec)
    p = dict(spec.params)
    if spec.id == "named":
        params = dict(p.get("instance_params", {}))
        inst = named_instance(p["instance"], **params)
        return Dataset(inst.X), PredictionSet(inst.Xp, 0.0, inst.delta)
    delta = float(p.get("delta", 0.0))
    eps = float(p.get("eps", 0.0))
    if not 0 <= delta < 0.5:
        raise ValueError("delta must lie in [0, 0.5)")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    mode = p.get("corruption", "mixed")
    if mode not in CORRUPTIONS:
        raise ValueError(f"unknown corruption mode {mode!r}; known: {list(CORRUPTIONS)}")
    rng = np.random.default_rng(int(p.get("seed", 0)))
    X = _locations(spec.id, p, rng)
    n = X.shape[0]
    r = corruption_budget(n, delta)
    if "corrupt" in p:
        r = min(r, int(p["corrupt"]))
    scale = max(float(np.linalg.norm(X.max(axis=0) - X.min(axis=0))), 1.0)
    far = float(p.get("M", 100.0 * scale))
    Xp = corrupt(X, _perturb(X, eps, rng), r, mode, p.get("placement", "uniform"), far, rng)
    if count_incorrect(X, Xp, eps) > corruption_budget(n, delta):
        raise AssertionError("generated predictions exceed the corruption budget")
    return Dataset(as_points(X)), PredictionSet(Xp, eps, delta)
