"""Refutation search for strategyproofness and exact approximation ratios."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import as_point, as_points, kmed_cost
from .estimators import balanced_kmedians_line, best_second_facility, geometric_median
from .mechanisms import MechanismInput, OutcomeDistribution, get_mechanism
from .robustness import candidate_pool

GAIN_TOL = 1e-9


def agent_expected_cost(dist: OutcomeDistribution, x) -> float:
    return dist.agent_cost(x)


def deviation_grid(reports, true_point, grid_points: int = 21) -> np.ndarray:
    """Reports, a grid over twice their bounding box, far sentinels and the
    agent's true location."""
    pool = candidate_pool(reports, grid_points)
    pool = np.vstack([pool, as_point(true_point)[None, :]])
    _, first = np.unique(pool, axis=0, return_index=True)
    return pool[np.sort(first)]


@dataclass(frozen=True)
class Violation:
    agent: int
    deviation: np.ndarray
    cost_true: float
    cost_dev: float

    @property
    def gain(self) -> float:
        return self.cost_true - self.cost_dev


@dataclass
class AuditReport:
    mechanism: str
    violations: list = field(default_factory=list)
    max_gain: float = 0.0
    evaluated: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "violations": [
                {
                    "agent": v.agent,
                    "deviation": v.deviation.tolist(),
                    "cost_true": v.cost_true,
                    "cost_dev": v.cost_dev,
                }
                for v in self.violations
            ],
            "max_gain": self.max_gain,
        }


def strategyproofness_audit(
    mechanism: str,
    inp: MechanismInput,
    true_X=None,
    grid_points: int = 21,
    agents=None,
) -> AuditReport:
    """Try every grid deviation of every agent, predictions held fixed.

    ``true_X`` defaults to the reports (the truthful profile). Agent costs are
    exact expectations at the true location.
    """
    mech = get_mechanism(mechanism)
    X = as_points(inp.reports if true_X is None else true_X)
    evaluate = mech.prepare(inp)
    truthful = evaluate(X)
    ignores_reports = not mech.uses_reports(inp)
    report = AuditReport(mechanism)
    max_gain = 0.0
    for i in range(len(X)) if agents is None else agents:
        cost_true = truthful.agent_cost(X[i])
        for dev in deviation_grid(X, X[i], grid_points):
            R = X.copy()
            R[i] = dev
            out = evaluate(R)
            report.evaluated += 1
            if ignores_reports and not _same(out, truthful):
                raise AssertionError(f"{mechanism} changed its outcome although it ignores reports")
            cost_dev = out.agent_cost(X[i])
            max_gain = max(max_gain, cost_true - cost_dev)
            if cost_dev < cost_true - GAIN_TOL:
                report.violations.append(Violation(int(i), dev.copy(), cost_true, cost_dev))
    report.max_gain = max_gain
    return report


def _same(a: OutcomeDistribution, b: OutcomeDistribution) -> bool:
    return (
        a.facilities.shape == b.facilities.shape
        and np.array_equal(a.facilities, b.facilities)
        and np.array_equal(a.probs, b.probs)
    )


def replay_violation(mechanism: str, inp: MechanismInput, v: Violation, true_X=None) -> float:
    """Recompute the gain of a reported violation."""
    X = as_points(inp.reports if true_X is None else true_X)
    evaluate = get_mechanism(mechanism).prepare(inp)
    R = X.copy()
    R[v.agent] = v.deviation
    return evaluate(X).agent_cost(X[v.agent]) - evaluate(R).agent_cost(X[v.agent])


def optimal_cost(mechanism: str, inp: MechanismInput, true_X) -> float:
    """Exact OPT the mechanism is measured against."""
    X = as_points(true_X)
    mech = get_mechanism(mechanism)
    if mech.k == 1:
        return geometric_median(X).objective
    if mechanism in ("propmech", "best-second-facility"):
        h = as_point(inp.params["h_S"])
        return kmed_cost(X, np.vstack([h, best_second_facility(X, h)]))
    if mechanism == "alg3":
        b = float(inp.params.get("b", 10.0))
        return balanced_kmedians_line(X, int(inp.params.get("k", 2)), b * inp.delta).cost
    return balanced_kmedians_line(X, mech.k, 0.0).cost


def ratio(alg: float, opt: float) -> float:
    if opt > 0:
        return alg / opt
    return 1.0 if alg == 0 else float("inf")


def approx_ratio(mechanism: str, inp: MechanismInput, true_X=None, opt: float | None = None) -> float:
    """Expected mechanism cost on the true locations over OPT."""
    X = as_points(inp.reports if true_X is None else true_X)
    out = get_mechanism(mechanism).prepare(inp)(inp.reports)
    if opt is None:
        opt = optimal_cost(mechanism, inp, X)
    return ratio(out.expected_cost(X), opt)


def summarize(values) -> dict:
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return {"n": 0, "mean": None, "max": None, "p95": None, "empty": True}
    return {
        "n": int(v.size),
        "mean": float(v.mean()),
        "max": float(v.max()),
        "p95": float(np.percentile(v, 95)),
    }


def ratio_suite(mechanism: str, generator: str, trials: int, seed: int, params: dict | None = None) -> dict:
    from .generators import GeneratorSpec, generate, trial_seed

    params = dict(params or {})
    mech_params = params.pop("mechanism_params", {})
    values = []
    for t in range(trials):
        X, Xp = generate(GeneratorSpec(generator, {**params, "seed": trial_seed(seed, t)}))
        inp = MechanismInput(X.points, Xp, {"delta": Xp.delta, **mech_params})
        values.append(approx_ratio(mechanism, inp, X.points))
    return summarize(values)
