"""The acceptance suite: twelve numbered checks with measured values.

Each ``criterion_*`` function is deterministic and returns a
:class:`CriterionResult`. ``run_paper_check`` runs them all and writes a JSON
report plus a plain-text table.
"""

from __future__ import annotations

import functools
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audit import approx_ratio, replay_violation, strategyproofness_audit, summarize
from .core import (
    PredictionSet,
    as_points,
    corruption_budget,
    hausdorff,
    induced_partition,
    kmed_cost,
)
from .estimators import (
    balanced_kmedians_line,
    bcc,
    bcccost,
    best_second_facility,
    big_cluster,
    coordinatewise_median,
    geometric_median,
    grid_refine_median,
    Infeasible,
    kmedians_bruteforce,
    median_1d,
)
from .generators import GeneratorSpec, corrupt, generate
from .mechanisms import (
    MechanismInput,
    predict_and_choose,
    prediction_branch,
    prop_mech_distribution,
    run_mechanism,
)
from .robustness import evaluate_prediction, named_instance, sweep

SEED = 20240501
TOL = 1e-6


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d}. {self.title}: {self.note}"

    def to_json(self) -> dict:
        return {
            "number": self.number,
            "title": self.title,
            "passed": self.passed,
            "measured": self.measured,
            "note": self.note,
        }


def _rng(tag: int, i: int):
    return np.random.default_rng([SEED, tag, i])


def _opt_1med(X) -> float:
    """1-median cost from the grid oracle (exact on the line)."""
    X = as_points(X)
    if X.shape[1] == 1:
        return kmed_cost(X, [[median_1d(X[:, 0])]])
    return kmed_cost(X, grid_refine_median(X)[None, :])


# ---------------------------------------------------------------------------


def criterion_1() -> CriterionResult:
    gammas = {}
    for n in (100, 400, 1000):
        inst = named_instance("cor-tight", n=n, delta=0.1)
        gammas[n] = evaluate_prediction(inst.X, inst.Xp, 0.1, "1med").gamma_observed
    bound = 1 + 4 * 0.1 / (1 - 2 * 0.1)
    exact = abs(gammas[100] - 59 / 41) <= 1e-9
    seq = [gammas[n] for n in (100, 400, 1000)]
    monotone = all(a < b for a, b in zip(seq, seq[1:]))
    below = all(g <= bound + 1e-12 for g in seq)
    return CriterionResult(
        1,
        "1-median approximation robustness is tight",
        exact and monotone and below,
        {"gamma": {str(k): v for k, v in gammas.items()}, "bound": bound},
        f"gamma(100)={gammas[100]:.9f} (59/41={59 / 41:.9f}), gamma(400)={gammas[400]:.6f}, "
        f"gamma(1000)={gammas[1000]:.6f} < {bound}",
    )


@functools.lru_cache(maxsize=None)
def one_median_sweep(instances: int = 1000, share_2d: float = 0.2, grid_1d: int = 21, grid_2d: int = 3):
    """Exhaustive adversary over random small instances, shared by checks 2 and 3."""
    n2 = int(round(instances * share_2d))
    rows = []
    for i in range(instances):
        rng = _rng(2, i)
        d = 1 if i < instances - n2 else 2
        n = int(rng.integers(4, 11))
        delta = float(rng.choice([0.1, 0.2, 0.3]))
        if rng.random() < 0.3:
            X = rng.integers(0, 4, size=(n, d)).astype(float)  # repeated locations
        else:
            X = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
        s = sweep(X, delta, "1med", grid_points=grid_1d if d == 1 else grid_2d)
        r = corruption_budget(n, delta)
        rho_t = s.report.rho_theory
        switch_rhs = s.base_cost + 2 * r * s.rho
        rows.append(
            {
                "d": d,
                "n": n,
                "delta": delta,
                "evaluated": len(s.rho),
                "rho_max": float(s.rho.max()),
                "rho_theory": rho_t,
                "rho_violations": int(np.count_nonzero(s.rho > rho_t + TOL)),
                "switch_violations": int(np.count_nonzero(s.cost > switch_rhs + 1e-9 * max(1.0, s.base_cost))),
                "gamma_max": float(s.report.gamma_observed),
                "gamma_theory": s.report.gamma_theory,
            }
        )
    return rows


def criterion_2() -> CriterionResult:
    rows = one_median_sweep()
    bad = sum(r["rho_violations"] for r in rows)
    total = sum(r["evaluated"] for r in rows)
    worst = max(r["rho_max"] / r["rho_theory"] for r in rows if r["rho_theory"] > 0)
    n2 = sum(r["d"] == 2 for r in rows)
    return CriterionResult(
        2,
        "1-median distance robustness sweep",
        bad == 0,
        {"instances": len(rows), "instances_2d": n2, "corruptions": total, "violations": bad, "worst_fraction_of_bound": worst},
        f"{len(rows)} instances ({n2} in 2D), {total} corruptions, {bad} violations, worst rho/bound={worst:.4f}",
    )


def criterion_3() -> CriterionResult:
    rows = one_median_sweep()
    bad = sum(r["switch_violations"] for r in rows)
    total = sum(r["evaluated"] for r in rows)
    gamma_bad = sum(r["gamma_max"] > r["gamma_theory"] + TOL for r in rows)
    return CriterionResult(
        3,
        "switch inequality on the same sweep",
        bad == 0,
        {"corruptions": total, "violations": bad, "gamma_bound_violations": int(gamma_bad)},
        f"{total} corruptions, {bad} violations (approximation bound violated on {gamma_bad} instances)",
    )


def _balanced_instance(i, b_delta_max):
    """Random two-cluster line instance whose optimal 2-median partition is balanced enough."""
    for attempt in range(100):
        rng = _rng(4, 1000 * i + attempt)
        n = int(rng.integers(100, 301))
        X, _ = generate(
            GeneratorSpec(
                "two_cluster_line",
                {"n": n, "balance": float(rng.uniform(0.25, 0.5)), "gap": float(rng.uniform(5, 50)), "seed": int(rng.integers(2**32))},
            )
        )
        sol = balanced_kmedians_line(X.points, 2, 0.0)
        part = induced_partition(X.points, sol.centers, "balance_seeking")
        if min(part.sizes) >= b_delta_max * n:
            return X.points, rng
    raise RuntimeError("could not draw a balanced instance")


def criterion_4(instances: int = 200) -> CriterionResult:
    settings = [(10.0, 0.02), (46.0, 0.005)]
    k = 2
    worst = {b: {"ratio": 0.0, "hausdorff_fraction": 0.0, "balance_margin": np.inf} for b, _ in settings}
    failures = []
    for i in range(instances):
        X, rng = _balanced_instance(i, max(b * dl for b, dl in settings))
        n = len(X)
        for b, delta in settings:
            r = corruption_budget(n, delta)
            mode = ["far", "clustered", "swap", "mixed"][i % 4]
            placement = "targeted" if i % 3 == 0 else "uniform"
            Xp = _corrupt_fixed(X, r, mode, placement, rng)
            G = balanced_kmedians_line(X, k, b * delta)
            H = balanced_kmedians_line(Xp, k, (b - 1) * delta)
            opt = G.cost
            cost = kmed_cost(X, H.centers)
            gam = 1 + 4 * k / (b - 2 - 2 * k)
            rho_bound = 2 * k * opt / (delta * n * (b - 2 - 2 * k))
            rho = hausdorff(G.centers, H.centers)
            part = induced_partition(X, H.centers, "balance_seeking")
            need = (b - 2) * delta * n
            w = worst[b]
            w["ratio"] = max(w["ratio"], cost / opt if opt > 0 else 1.0)
            w["hausdorff_fraction"] = max(w["hausdorff_fraction"], rho / rho_bound if rho_bound > 0 else 0.0)
            w["balance_margin"] = min(w["balance_margin"], min(part.sizes) - need)
            if cost > gam * opt + TOL or rho > rho_bound + TOL or min(part.sizes) < need - 1e-9:
                failures.append((i, b))
    measured = {str(int(b)): v for b, v in worst.items()}
    return CriterionResult(
        4,
        "balanced 2-medians robustness",
        not failures,
        {"instances": instances, "worst": measured, "failures": failures},
        f"{instances} instances; b=10 max ratio {worst[10.0]['ratio']:.4f} (<=3), "
        f"b=46 max ratio {worst[46.0]['ratio']:.4f} (<=1.2), "
        f"max rho/bound {max(w['hausdorff_fraction'] for w in worst.values()):.3f}, "
        f"min balance slack {min(w['balance_margin'] for w in worst.values()):.2f} points",
    )


def _corrupt_fixed(X, r, mode, placement, rng):
    X = as_points(X)
    scale = max(float(np.linalg.norm(X.max(axis=0) - X.min(axis=0))), 1.0)
    return corrupt(X, X.copy(), r, mode, placement, 100.0 * scale, rng)


def criterion_5(instances: int = 200) -> CriterionResult:
    worst_low, branch_ok = 0.0, True
    for i in range(instances):
        rng = _rng(5, i)
        n = int(rng.integers(20, 61))
        gid = "gaussian_clusters" if i % 2 else "uniform"
        X, Xp = generate(GeneratorSpec(gid, {"n": n, "d": 2, "delta": 0.05, "corruption": "mixed", "seed": int(rng.integers(2**32))}))
        inp = MechanismInput(X.points, Xp, {"delta": 0.05})
        out = run_mechanism("alg1", inp).facilities[0, 0]
        branch_ok &= np.array_equal(out, geometric_median(Xp.points).point)
        worst_low = max(worst_low, approx_ratio("alg1", inp, X.points, opt=_opt_1med(X.points)))
    worst_high = 0.0
    for i in range(instances):
        rng = _rng(55, i)
        n = int(rng.integers(3, 9))
        X, Xp = generate(GeneratorSpec("uniform", {"n": n, "d": 2, "delta": 0.2, "corruption": "mixed", "seed": int(rng.integers(2**32))}))
        inp = MechanismInput(X.points, Xp, {"delta": 0.2})
        out = run_mechanism("alg1", inp).facilities[0, 0]
        branch_ok &= np.array_equal(out, coordinatewise_median(X.points))
        worst_high = max(worst_high, approx_ratio("alg1", inp, X.points, opt=_opt_1med(X.points)))
    bound = 1 + 4 * 0.05 / (1 - 2 * 0.05)
    ok = branch_ok and worst_low <= bound + TOL and worst_high <= math.sqrt(2) + TOL
    ok &= prediction_branch(0.05, 2) and not prediction_branch(0.2, 2)
    return CriterionResult(
        5,
        "single-facility mechanism guarantee",
        bool(ok),
        {"max_ratio_delta_0.05": worst_low, "bound": bound, "max_cwmed_ratio_delta_0.2": worst_high, "branches_correct": bool(branch_ok)},
        f"delta=0.05 max ratio {worst_low:.4f} <= {bound:.4f}; delta=0.2 cwmed max ratio {worst_high:.4f} <= sqrt(2); "
        f"branches {'correct' if branch_ok else 'WRONG'}",
    )


def criterion_6(instances: int = 200) -> CriterionResult:
    tight = {}
    for n in (4, 10, 50):
        inst = named_instance("minbb-tight", n=n, d=2)
        inp = MechanismInput(inst.X, PredictionSet(inst.Xp), {"o": inst.params["o"]})
        tight[n] = approx_ratio("minbb", inp)
    tight_ok = all(abs(tight[n] - (n - 1)) <= 1e-9 for n in tight)
    worst_frac = 0.0
    for i in range(instances):
        rng = _rng(6, i)
        n = int(rng.integers(2, 31))
        X = rng.normal(size=(n, 2)) * rng.uniform(0.1, 10)
        o = rng.normal(size=2) * 10 ** rng.uniform(-1, 4)
        inp = MechanismInput(X, PredictionSet(X), {"o": o})
        worst_frac = max(worst_frac, approx_ratio("minbb", inp, opt=_opt_1med(X)) / (2 * n + 1))
    ok = tight_ok and worst_frac <= 1 + 1e-9
    return CriterionResult(
        6,
        "bounding-box clamp ratio",
        ok,
        {"tight": {str(k): v for k, v in tight.items()}, "max_ratio_over_2n_plus_1": worst_frac},
        f"tight ratios {', '.join(f'n={k}: {v:.9g}' for k, v in tight.items())}; random max ratio/(2n+1) {worst_frac:.4f}",
    )


def criterion_7(instances: int = 200) -> CriterionResult:
    tight = {}
    for n in (10, 100):
        inst = named_instance("propmech-tight", n=n)
        inp = MechanismInput(inst.X, PredictionSet(inst.Xp), {"h_S": inst.params["h_S"]})
        tight[n] = approx_ratio("propmech", inp)
    tight_ok = all(abs(tight[n] - 3 * (n / 2 - 1) / (n / 2 + 1)) <= 1e-9 for n in tight)
    worst_slack, checks = np.inf, 0
    for i in range(instances):
        rng = _rng(7, i)
        n = int(rng.integers(2, 41))
        X = rng.normal(size=n) * rng.uniform(0.5, 5)
        if i % 3 == 0:
            X = np.round(X)
        h = float(rng.normal() * 3)
        E = prop_mech_distribution(X, h).expected_cost(X)
        for g in np.unique(X):
            dS, dT = np.abs(X - h), np.abs(X - g)
            S = dS <= dT
            bound = 2 * dS[S].sum() + 3 * dT[~S].sum()
            worst_slack = min(worst_slack, bound + 1e-9 - E)
            checks += 1
    ok = tight_ok and worst_slack >= 0
    return CriterionResult(
        7,
        "proportional second facility",
        bool(ok),
        {"tight": {str(k): v for k, v in tight.items()}, "bound_checks": checks, "min_slack": float(worst_slack)},
        f"tight ratios n=10: {tight[10]:.9g}, n=100: {tight[100]:.9g}; {checks} split bounds, min slack {worst_slack:.3g}",
    )


def _needs_fallback(Xp, beta) -> bool:
    """Whether no balanced split of ``Xp`` is induced by its own medians."""
    try:
        balanced_kmedians_line(Xp, 2, beta)
    except Infeasible:
        return True
    return False


def _bcc_ratio(X, Xp, b, delta):
    cluster = big_cluster(X)
    base = bcccost(X, median_1d(as_points(X)[cluster, 0]), cluster)
    t = bcc(Xp, b, delta)
    return bcccost(X, t, cluster) / base if base > 0 else (1.0 if bcccost(X, t, cluster) == 0 else np.inf)


def criterion_8(instances: int = 200) -> CriterionResult:
    inst = named_instance("bcc-5-3", n=800, eps=0.01, M=1e6)
    lower = _bcc_ratio(inst.X, inst.Xp, 46.0, inst.delta)
    b = 46.0
    worst, used, skipped, fallbacks = 0.0, 0, 0, 0
    i = 0
    while used < instances:
        rng = _rng(8, i)
        i += 1
        n = int(rng.integers(200, 801))
        delta = 1.0 / n
        small = int(rng.integers(1, 46))
        X, _ = generate(
            GeneratorSpec("unbalanced_two_cluster", {"n": n, "small": small, "gap": float(rng.uniform(50, 2000)), "seed": int(rng.integers(2**32))})
        )
        X = X.points
        sol = balanced_kmedians_line(X, 2, 0.0)
        part = induced_partition(X, sol.centers, "balance_seeking")
        if min(part.sizes) >= b * delta * n:  # not in the unbalanced regime
            skipped += 1
            continue
        mode = ["far", "clustered", "swap", "mixed"][used % 4]
        placement = "targeted" if used % 2 else "uniform"
        Xp = _corrupt_fixed(X, corruption_budget(n, delta), mode, placement, rng)
        worst = max(worst, _bcc_ratio(X, Xp, b, delta))
        fallbacks += _needs_fallback(Xp, (b - 1) * delta)
        used += 1
    ok = lower >= 5 / 3 - 0.05 and worst <= 1.81
    return CriterionResult(
        8,
        "big-cluster center",
        ok,
        {"lower_bound_instance": lower, "suite_max": worst, "suite_instances": used, "skipped_balanced": skipped, "fallback_trials": fallbacks, "margin": 0.01},
        f"bcc-5-3 ratio {lower:.4f} >= {5 / 3 - 0.05:.4f}; unbalanced suite ({used} instances, "
        f"{fallbacks} without an induced split) max {worst:.4f} <= 1.81",
    )


def criterion_9(instances: int = 200) -> CriterionResult:
    delta, b = 0.005, 46.0
    ratios = {"balanced": [], "unbalanced": []}
    fallbacks = 0
    for i in range(instances):
        rng = _rng(9, i)
        n = int(rng.integers(200, 401))
        if i % 2 == 0:
            spec = {"n": n, "balance": float(rng.uniform(0.25, 0.5)), "gap": float(rng.uniform(5, 100))}
            gid = "two_cluster_line"
        else:
            spec = {"n": n, "small": int(rng.integers(1, int(b * delta * n))), "gap": float(rng.uniform(5, 1000))}
            gid = "unbalanced_two_cluster"
        spec.update(delta=delta, corruption=["far", "clustered", "swap", "mixed"][i % 4], seed=int(rng.integers(2**32)))
        spec["placement"] = "targeted" if i % 3 == 0 else "uniform"
        X, Xp = generate(GeneratorSpec(gid, spec))
        inp = MechanismInput(X.points, Xp, {"delta": delta, "b": b})
        opt = balanced_kmedians_line(X.points, 2, 0.0)
        part = induced_partition(X.points, opt.centers, "balance_seeking")
        regime = "balanced" if min(part.sizes) >= b * delta * n else "unbalanced"
        ratios[regime].append(predict_and_choose(inp, b).expected_cost(X.points) / opt.cost)
        fallbacks += _needs_fallback(Xp.points, (b - 1) * delta)
    allr = ratios["balanced"] + ratios["unbalanced"]
    s = summarize(allr)
    ok = s["max"] <= 3.7 and all(ratios.values())
    return CriterionResult(
        9,
        "predict-and-choose two facilities",
        bool(ok),
        {"summary": s, "per_regime": {k: summarize(v) for k, v in ratios.items()}, "fallback_trials": fallbacks, "margin": 0.1},
        f"{s['n']} instances ({len(ratios['balanced'])} balanced, {len(ratios['unbalanced'])} unbalanced); "
        f"mean {s['mean']:.4f}, max {s['max']:.4f} <= 3.7",
    )


def criterion_10(instances: int = 20) -> CriterionResult:
    counts = {}

    def planar(delta):
        def make(rng):
            n = int(rng.integers(2, 9))
            X, Xp = generate(GeneratorSpec("uniform", {"n": n, "d": 2, "delta": delta, "seed": int(rng.integers(2**32))}))
            return MechanismInput(X.points, Xp, {"delta": delta})

        return make

    def line(extra):
        def make(rng):
            n = int(rng.integers(2, 9))
            X, Xp = generate(GeneratorSpec("uniform", {"n": n, "seed": int(rng.integers(2**32)), "scale": 10.0}))
            p = {"delta": 0.001, **extra}
            if "h_S" in p:
                p["h_S"] = float(rng.uniform(-5, 15))
            return MechanismInput(X.points, PredictionSet(Xp.points, 0.0, p["delta"]), p)

        return make

    for label, mech, make in [
        ("alg1-predictions", "alg1", planar(0.05)),
        ("alg1-reports", "alg1", planar(0.2)),
        ("alg2-predictions", "alg2", planar(0.05)),
        ("alg2-reports", "alg2", planar(0.2)),
        ("alg3", "alg3", line({"b": 10.0})),
        ("propmech", "propmech", line({"h_S": 0.0})),
        ("alg5", "alg5", line({"b": 46.0})),
    ]:
        bad = 0
        for i in range(instances):
            inp = make(_rng(10, len(counts) * 1000 + i))
            bad += len(strategyproofness_audit(mech, inp).violations)
        counts[label] = bad

    inst = named_instance("second-fac-manip")
    inp = MechanismInput(inst.X, PredictionSet(inst.Xp), {"h_S": inst.params["h_S"]})
    rep = strategyproofness_audit("best-second-facility", inp)
    described = [v for v in rep.violations if v.agent == 0 and np.allclose(v.deviation, [5.0])]
    ctrl1 = bool(described) and abs(described[0].cost_true - 3) < 1e-9 and abs(described[0].cost_dev - 2) < 1e-9
    ctrl1 &= abs(replay_violation("best-second-facility", inp, described[0]) - 1.0) < 1e-9 if described else False

    inst = named_instance("convexhull-manip")
    inp = MechanismInput(inst.X, PredictionSet(inst.Xp), {"o": inst.params["o"]})
    rep2 = strategyproofness_audit("convexhull-minbb", inp)
    hit = [v for v in rep2.violations if v.agent == 2 and np.allclose(v.deviation, inst.params["deviation"])]
    ctrl2 = bool(hit)
    minbb_clean = strategyproofness_audit("minbb", inp).ok

    ok = all(v == 0 for v in counts.values()) and ctrl1 and ctrl2 and minbb_clean
    return CriterionResult(
        10,
        "strategyproofness audits",
        bool(ok),
        {
            "violations": counts,
            "second_fac_control": {"caught": ctrl1, "violations": len(rep.violations)},
            "convexhull_control": {"caught": ctrl2, "violations": len(rep2.violations), "minbb_clean": minbb_clean},
        },
        f"{sum(counts.values())} violations over {len(counts)} audited settings x {instances} instances; "
        f"controls caught: second-facility {ctrl1} ({len(rep.violations)}), convex hull {ctrl2} ({len(rep2.violations)})",
    )


def criterion_11(instances: int = 500) -> CriterionResult:
    worst = 0.0
    for i in range(instances):
        rng = _rng(11, i)
        n = int(rng.integers(2, 13))
        X = rng.integers(0, 6, size=n).astype(float) if i % 3 == 0 else rng.normal(size=n) * 10
        a = balanced_kmedians_line(X, 2, 0.0).cost
        c = kmedians_bruteforce(X, 2, 0.0).cost
        worst = max(worst, abs(a - c))
    return CriterionResult(
        11,
        "exact line solver matches brute force",
        worst <= 1e-9,
        {"instances": instances, "max_abs_diff": worst},
        f"{instances} instances, max |cost difference| {worst:.3g}",
    )


def criterion_12() -> CriterionResult:
    M = 1e6
    inst = named_instance("example-1-1", n=10, M=M)
    G = balanced_kmedians_line(inst.X, 2, 0.0)
    H = balanced_kmedians_line(inst.Xp, 2, 0.0)
    dh = hausdorff(G.centers, H.centers)
    return CriterionResult(
        12,
        "plain 2-medians breaks under one corruption",
        dh >= M / 2,
        {"hausdorff": dh, "M": M},
        f"Hausdorff {dh:.6g} >= M/2 = {M / 2:.6g} (centers {G.centers.ravel().tolist()} -> {H.centers.ravel().tolist()})",
    )


CRITERIA = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
    criterion_11,
    criterion_12,
]


def run_paper_check(out=None, only=None, echo=print) -> list[CriterionResult]:
    results = []
    for fn in CRITERIA:
        num = int(fn.__name__.rsplit("_", 1)[1])
        if only and num not in only:
            continue
        t0 = time.perf_counter()
        res = fn()
        res.measured["seconds"] = round(time.perf_counter() - t0, 3)
        results.append(res)
        if echo:
            echo(res.line())
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "paper_check.json").write_text(
            json.dumps([r.to_json() for r in results], indent=2, default=_jsonable) + "\n"
        )
        (out / "paper_check.txt").write_text("\n".join(r.line() for r in results) + "\n")
    return results


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(type(o))
