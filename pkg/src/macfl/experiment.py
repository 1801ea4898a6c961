"""Reproducible experiment runs: one row per (trial, mechanism)."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audit import approx_ratio, optimal_cost, summarize
from .generators import GeneratorSpec, generate, trial_seed
from .mechanisms import MechanismInput, get_mechanism
from .robustness import evaluate_prediction

COLUMNS = (
    "trial",
    "instance_seed",
    "mechanism",
    "n",
    "d",
    "delta",
    "cost",
    "opt",
    "ratio",
    "rho_observed",
    "rho_theory",
    "gamma_observed",
    "gamma_theory",
)


@dataclass
class ExperimentConfig:
    generator: GeneratorSpec
    mechanisms: list
    trials: int = 1
    seed: int = 0
    out: str = "results"
    format: str = "csv"
    mechanism_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.generator, dict):
            self.generator = GeneratorSpec.from_json(self.generator)
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.trials < 0:
            raise ValueError("trials must be nonnegative")
        for m in self.mechanisms:
            get_mechanism(m)

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        return cls(
            GeneratorSpec.from_json(obj["generator"]),
            list(obj["mechanisms"]),
            int(obj.get("trials", 1)),
            int(obj.get("seed", 0)),
            obj.get("out", "results"),
            obj.get("format", "csv"),
            dict(obj.get("mechanism_params", {})),
        )


def _robustness_fields(mechanism, X, Xp, delta, params):
    # the estimator each mechanism relies on, evaluated on this prediction
    if mechanism in ("alg1", "alg2", "minbb", "convexhull-minbb"):
        rep = evaluate_prediction(X, Xp, delta, "1med")
    elif mechanism == "alg3" and X.shape[1] == 1:
        b = float(params.get("b", 10.0))
        rep = evaluate_prediction(X, Xp, delta, "bal2med", params={"b": b})
    else:
        return {}
    return {
        "rho_observed": rep.rho_observed,
        "rho_theory": rep.rho_theory,
        "gamma_observed": rep.gamma_observed,
        "gamma_theory": rep.gamma_theory,
    }


def trial_rows(config: ExperimentConfig, trial: int) -> list[dict]:
    s = trial_seed(config.seed, trial)
    X, Xp = generate(GeneratorSpec(config.generator.id, {**config.generator.params, "seed": s}))
    rows = []
    for m in config.mechanisms:
        inp = MechanismInput(X.points, Xp, {"delta": Xp.delta, **config.mechanism_params})
        opt = optimal_cost(m, inp, X.points)
        out = get_mechanism(m).prepare(inp)(inp.reports)
        cost = out.expected_cost(X.points)
        row = {
            "trial": trial,
            "instance_seed": s,
            "mechanism": m,
            "n": X.n,
            "d": X.dim,
            "delta": Xp.delta,
            "cost": cost,
            "opt": opt,
            "ratio": approx_ratio(m, inp, X.points, opt=opt),
        }
        try:
            row.update(_robustness_fields(m, X.points, Xp.points, Xp.delta, config.mechanism_params))
        except ValueError:
            pass
        rows.append(row)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in COLUMNS])
    return buf.getvalue()


def summary(rows: list[dict]) -> dict:
    out = {}
    for m in dict.fromkeys(r["mechanism"] for r in rows):
        out[m] = summarize(r["ratio"] for r in rows if r["mechanism"] == m)
    return out


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def run(config: ExperimentConfig) -> dict:
    """Run every trial and write ``results.<fmt>`` and ``summary.json`` under ``config.out``."""
    rows = []
    for t in range(config.trials):
        rows.extend(trial_rows(config, t))
    rows.sort(key=lambda r: (r["trial"], config.mechanisms.index(r["mechanism"])))
    summ = summary(rows)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    results = out / f"results.{config.format}"
    if config.format == "csv":
        text = render_csv(rows)
    else:
        text = json.dumps(rows, indent=2, sort_keys=True) + "\n"
    meta = {"generator": config.generator.to_json(), "trials": config.trials, "seed": config.seed}
    written = []
    try:
        for path, body in [
            (results, text),
            (out / "summary.json", json.dumps({"config": meta, "ratios": summ}, indent=2, sort_keys=True) + "\n"),
        ]:
            _atomic_write(path, body)
            written.append(path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return {"rows": rows, "summary": summ, "files": [str(results), str(out / "summary.json")]}
