"""Command-line entry point: ``macfl <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import Dataset, PredictionSet
from .estimators import Infeasible, balanced_kmedians_line, kmedians_bruteforce


def _dump(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _load_predictions(path, ref: Dataset, delta):
    if path is None:
        return PredictionSet(ref.points, 0.0, delta or 0.0)
    pred = PredictionSet.load(path)
    if delta is not None:
        pred = PredictionSet(pred.points, pred.epsilon, delta)
    pred.check_against(ref.points)
    return pred


def _mech_params(args) -> dict:
    p = {}
    for key in ("delta", "b", "k"):
        v = getattr(args, key, None)
        if v is not None:
            p[key] = v
    if getattr(args, "h_s", None) is not None:
        p["h_S"] = args.h_s
    if getattr(args, "o", None) is not None:
        p["o"] = args.o
    return p


def cmd_gen(args):
    from .generators import GeneratorSpec, generate

    spec = GeneratorSpec.from_json(json.loads(Path(args.spec).read_text()))
    X, Xp = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(X.to_json(), out / "instance.json")
    _dump(Xp.to_json(), out / "predictions.json")
    print(f"wrote {out / 'instance.json'} and {out / 'predictions.json'} (n={X.n}, d={X.dim})")
    return 0


def cmd_solve(args):
    X = Dataset.load(args.instance)
    if X.dim == 1 and not args.bruteforce:
        sol = balanced_kmedians_line(X.points, args.k, args.beta)
    else:
        sol = kmedians_bruteforce(X.points, args.k, args.beta)
    _dump({"centers": sol.centers.tolist(), "labels": sol.labels.tolist(), "cost": sol.cost, "sizes": list(sol.sizes)})
    return 0


def cmd_mech(args):
    from .mechanisms import MechanismInput, prop_mech_sample, run_mechanism

    X = Dataset.load(args.instance)
    pred = _load_predictions(args.predictions, X, args.delta)
    inp = MechanismInput(X.points, pred, _mech_params(args))
    out = run_mechanism(args.id, inp)
    res = out.to_json(args.id, X.points)
    if args.seed is not None and out.kind == "randomized":
        u = np.random.default_rng(args.seed).random()
        j = min(int(np.searchsorted(np.cumsum(out.probs), u, side="right")), len(out.probs) - 1)
        res["sample"] = out.facilities[j].tolist()
        res["seed"] = args.seed
    _dump(res)
    return 0


def cmd_robust(args):
    from .robustness import adversary_search, named_instance

    if args.instance:
        X = Dataset.load(args.instance).points
    else:
        X = named_instance(args.named).X
    params = {"b": args.b} if args.b is not None else None
    rep = adversary_search(
        X,
        args.delta,
        target=args.target,
        objective=args.objective,
        mode=args.mode,
        budget=args.budget,
        seed=args.seed,
        grid_points=args.grid_density,
        params=params,
    )
    _dump(rep.to_json())
    return 0


def cmd_audit(args):
    from .audit import strategyproofness_audit
    from .mechanisms import MechanismInput

    X = Dataset.load(args.instance)
    pred = _load_predictions(args.predictions, X, args.delta)
    inp = MechanismInput(X.points, pred, _mech_params(args))
    rep = strategyproofness_audit(args.mechanism, inp, grid_points=args.grid_density)
    _dump(rep.to_json())
    return 0 if rep.ok else 1


def cmd_run(args):
    from .experiment import ExperimentConfig, run

    cfg = ExperimentConfig.from_json(json.loads(Path(args.config).read_text()))
    if args.out:
        cfg.out = args.out
    res = run(cfg)
    print("\n".join(res["files"]))
    return 0


def cmd_paper_check(args):
    from .papercheck import run_paper_check

    only = set(args.only) if args.only else None
    results = run_paper_check(args.out, only=only)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="macfl", description="Facility location with mostly-correct predictions.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance and its predictions")
    g.add_argument("--spec", required=True, help="generator spec JSON {id, params}")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="exact (balanced) k-medians")
    s.add_argument("--instance", required=True)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--beta", type=float, default=0.0)
    s.add_argument("--bruteforce", action="store_true", help="use the data-point oracle")
    s.set_defaults(func=cmd_solve)

    def mech_args(q):
        q.add_argument("--instance", required=True, help="reports (dataset JSON)")
        q.add_argument("--predictions", help="prediction JSON; defaults to the reports")
        q.add_argument("--delta", type=float)
        q.add_argument("--b", type=float)
        q.add_argument("--k", type=int)
        q.add_argument("--h-s", type=float, nargs="+", dest="h_s", help="first facility for propmech")
        q.add_argument("--o", type=float, nargs="+", help="target point for minbb")

    m = sub.add_parser("mech", help="run a mechanism")
    m.add_argument("--id", required=True)
    mech_args(m)
    m.add_argument("--seed", type=int, help="also draw one outcome of a randomized mechanism")
    m.set_defaults(func=cmd_mech)

    r = sub.add_parser("robust", help="worst corruption found by the adversary")
    r.add_argument("--target", choices=["1med", "2med", "bal2med", "bcc"], default="1med")
    r.add_argument("--delta", type=float, required=True)
    r.add_argument("--mode", choices=["exhaustive", "randomized"], default="exhaustive")
    r.add_argument("--budget", type=int, default=1000)
    r.add_argument("--objective", choices=["distance", "approx"], default="distance")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--grid-density", type=int, default=21)
    r.add_argument("--b", type=float)
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance")
    src.add_argument("--named", help="catalogue instance id")
    r.set_defaults(func=cmd_robust)

    a = sub.add_parser("audit", help="strategyproofness refutation search")
    a.add_argument("--mechanism", required=True)
    mech_args(a)
    a.add_argument("--grid-density", type=int, default=21)
    a.set_defaults(func=cmd_audit)

    e = sub.add_parser("run", help="run an experiment config")
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_run)

    c = sub.add_parser("paper-check", help="run the acceptance suite")
    c.add_argument("--out", default="paper_check")
    c.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    c.set_defaults(func=cmd_paper_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, Infeasible, OSError, KeyError) as exc:
        print(f"macfl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
