"""Command-line front end (``aamdp``).

Exit codes: 0 success (or "holds"), 2 invalid input, 3 solver failure,
4 "violated", 5 "inconclusive".
"""
from __future__ import annotations

import argparse
import csv
import io as _stringio
import os
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import kernels
from .bellman import GreedyStrategy, IncompatibleStrategy, SamplingMode, StrategyKind, apply_optimal_operator
from .evaluator import (
    HOLDS,
    INCONCLUSIVE,
    VIOLATED,
    EvalParams,
    dp_check,
    dp_check_refined,
    evaluate,
)
from .games import SolverBreakdown
from .gallery import (
    build_counterexample_instance,
    build_fig1,
    build_lemma_mdp,
    lemma_presets,
    robust_random,
    table1_suite,
)
from .io import DocumentError, dumps, instance_to_doc, load_instance, load_policy, policy_to_doc, write_atomic
from .mdp import DimensionError, deterministic_policy
from .risk import DiscreteDistribution, RiskSpec, axiom_probe, rho_eval
from .solvers import ConvergenceError, NonMonotoneStep, convex_program_solve, policy_iteration, value_iteration

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_VERDICT = {HOLDS: 0, VIOLATED: 4, INCONCLUSIVE: 5}

GALLERY = ("fig1", "example3", "lemma-mdp", "robust-random", "table1-suite")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("AAMDP_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise DocumentError(f"AAMDP_SEED must be an integer, got {env!r}") from None


def _report(command: str, args: dict, seed, result: dict, elapsed: float) -> dict:
    return {
        "command": command,
        "arguments": args,
        "seed": seed,
        "versions": {
            "aamdp": _version(),
            "numpy": np.__version__,
            "python": platform.python_version(),
            "kernel_backend": kernels.BACKEND,
        },
        "result": result,
        "timing": {"wall_seconds": elapsed},
    }


def _csv(header, rows) -> str:
    buf = _stringio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _emit(args, doc: dict, header, rows):
    text = dumps(doc) if args.format == "json" else _csv(header, rows)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _load(args):
    instance, nu, doc_mode = load_instance(args.instance)
    mode = SamplingMode(args.mode) if args.mode else doc_mode
    return instance, nu, mode


def _policy_rows(policy, instance):
    return policy_to_doc(policy, instance)["policy"]


def _policy_columns(instance):
    return [f"pi[{a}]" for a in instance.action_names]


# ----------------------------------------------------------------- commands


def cmd_solve(args) -> int:
    instance, nu, mode = _load(args)
    spec = RiskSpec.parse(args.risk)
    strategy = GreedyStrategy(StrategyKind(args.strategy))
    start = time.perf_counter()
    if args.algo == "vi":
        rep = value_iteration(nu, spec, strategy, args.tol, instance, max_iter=args.max_iter)
    elif args.algo == "pi":
        rep = policy_iteration(nu, spec, strategy, args.tol, instance, max_iter=args.max_iter)
    else:
        value = convex_program_solve(nu, instance, spec)
        tv, policy = apply_optimal_operator(value, nu, spec, GreedyStrategy(StrategyKind.EXACT), instance)
        rep = None
    elapsed = time.perf_counter() - start
    if rep is not None:
        value, policy = rep.value, rep.policy
        extra = {
            "iterations": rep.iterations,
            "final_residual": rep.final_residual,
            "certified_bound": rep.certified_bound,
        }
    else:
        residual = float(np.max(np.abs(tv - value)))
        extra = {"iterations": 1, "final_residual": residual, "certified_bound": residual / (1 - instance.discount)}
    result = {
        "algorithm": args.algo,
        "risk": str(spec),
        "mode": mode.value,
        "strategy": strategy.resolve(spec).value,
        "values": dict(zip(instance.state_names, value.tolist())),
        "policy": _policy_rows(policy, instance),
        **extra,
    }
    doc = _report("solve", {"instance": args.instance, "algo": args.algo, "tol": args.tol}, None, result, elapsed)
    rows = [[name, value[s], *policy[s]] for s, name in enumerate(instance.state_names)]
    _emit(args, doc, ["state", "value", *_policy_columns(instance)], rows)
    return EXIT_OK


def _read_policy(args, instance):
    if args.policy:
        return load_policy(args.policy, instance)
    if instance.n_actions == 1:
        return deterministic_policy(np.zeros(instance.n_states, dtype=int), 1)
    raise DocumentError("--policy is required when the instance has more than one action")


def _params(args, seed) -> EvalParams:
    return EvalParams(budget=args.budget, n_samples=args.samples, horizon=args.horizon, seed=seed)


def cmd_eval(args) -> int:
    instance, nu, mode = _load(args)
    spec = RiskSpec.parse(args.risk)
    policy = _read_policy(args, instance)
    seed = _seed(args)
    start = time.perf_counter()
    est = evaluate(policy, nu, spec, mode, instance, _params(args, seed))
    elapsed = time.perf_counter() - start
    result = {"risk": str(spec), "mode": mode.value, **est.as_dict()}
    result["value"] = dict(zip(instance.state_names, est.value.tolist()))
    result["stderr"] = dict(zip(instance.state_names, est.stderr.tolist()))
    doc = _report("eval", {"instance": args.instance, "policy": args.policy}, seed, result, elapsed)
    rows = [[name, est.value[s], est.stderr[s]] for s, name in enumerate(instance.state_names)]
    _emit(args, doc, ["state", "value", "stderr"], rows)
    return EXIT_OK


def cmd_check_dp(args) -> int:
    instance, nu, mode = _load(args)
    value_risk = RiskSpec.parse(args.risk)
    operator_risk = RiskSpec.parse(args.operator_risk) if args.operator_risk else None
    kind, *rest = args.target
    if kind == "optimal" and not rest:
        target = "optimal"
    elif kind == "policy" and len(rest) <= 1:
        if rest:
            args.policy = rest[0]
        target = _read_policy(args, instance)
    else:
        raise DocumentError("--target must be 'optimal' or 'policy [PATH]'")
    seed = _seed(args)
    strategy = GreedyStrategy(StrategyKind(args.strategy)) if args.strategy else None
    params = _params(args, seed)
    start = time.perf_counter()
    if args.refine:
        rep = dp_check_refined(target, nu, value_risk, operator_risk, mode, args.tol, params, instance, strategy,
                               levels=args.refine)
    else:
        rep = dp_check(target, nu, value_risk, operator_risk, mode, args.tol, params, instance, strategy)
    elapsed = time.perf_counter() - start
    result = rep.as_dict()
    for key in ("V", "TV", "residual_per_state"):
        result[key] = dict(zip(instance.state_names, result[key]))
    if rep.policy is not None:
        result["policy"] = _policy_rows(rep.policy, instance)
    doc = _report("check-dp", {"instance": args.instance, "target": args.target}, seed, result, elapsed)
    rows = [
        [name, rep.V[s], rep.TV[s], rep.residual_per_state[s], rep.verdict]
        for s, name in enumerate(instance.state_names)
    ]
    _emit(args, doc, ["state", "V", "TV", "residual", "verdict"], rows)
    print(f"verdict: {rep.verdict} (residual {rep.residual_sup:.6g})", file=sys.stderr)
    return EXIT_VERDICT[rep.verdict]


def _gallery_instances(args):
    """``[(file stem, instance, nu, mode)]`` plus an optional manifest."""
    gamma = args.gamma
    if args.name == "fig1":
        return [("fig1", *build_fig1(args.scenarios or 3, 0.5 if gamma is None else gamma))], None
    if args.name == "example3":
        return [("example3", *build_counterexample_instance(0.5 if gamma is None else gamma, args.atoms or 2000))], None
    if args.name == "lemma-mdp":
        presets = lemma_presets()
        if args.preset not in presets:
            raise DocumentError(f"unknown preset {args.preset!r}; choose from {sorted(presets)}")
        p = presets[args.preset]
        g = p.gamma if gamma is None else gamma
        return [(f"lemma-{args.preset}", *build_lemma_mdp(p.X, p.Y, p.Z, p.a, p.b, p.c, p.d, g))], None
    if args.name == "robust-random":
        inst, nu = robust_random(_seed(args), args.states, args.actions, args.scenarios or 3,
                                 0.8 if gamma is None else gamma)
        return [("robust-random", inst, nu)], None
    entries = table1_suite(args.robust_atoms, args.atoms or 2000, 0.5 if gamma is None else gamma)
    files, manifest = {}, []
    for e in entries:
        files.setdefault(e.instance_name, (e.instance_name, e.instance, e.nu))
        manifest.append(
            {"variant": e.variant, "risk": str(e.risk), "instance": f"{e.instance_name}.json", "dp_holds": e.expected}
        )
    return list(files.values()), {"variants": manifest}


def cmd_gallery(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items, manifest = _gallery_instances(args)
    mode = SamplingMode(args.mode or "static")
    for stem, instance, nu in items:
        path = out_dir / f"{stem}.json"
        write_atomic(path, dumps(instance_to_doc(instance, nu, mode)))
        print(path)
    if manifest is not None:
        path = out_dir / "manifest.json"
        write_atomic(path, dumps(manifest))
        print(path)
    return EXIT_OK


def parse_atoms(text: str) -> DiscreteDistribution:
    """``"v:w,v:w,..."`` (commas or newlines) or the path of a file in that format."""
    if os.path.isfile(text):
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    pairs = []
    for item in text.replace("\n", ",").split(","):
        item = item.strip()
        if not item or item.startswith("#"):
            continue
        try:
            v, w = item.split(":")
            pairs.append((float(v), float(w)))
        except ValueError:
            raise DocumentError(f"bad atom {item!r}; expected value:weight") from None
    if not pairs:
        raise DocumentError("no atoms given")
    return DiscreteDistribution.from_atoms(pairs)


def cmd_risk(args) -> int:
    spec = RiskSpec.parse(args.spec)
    dist = parse_atoms(args.atoms)
    value = rho_eval(spec, dist)
    if not args.axioms:
        print(f"{value:.12g}")
        return EXIT_OK
    seed = _seed(args)
    report = axiom_probe(spec, n_trials=args.trials, seed=seed)
    doc = {"risk": str(spec), "value": value, "seed": seed, "monetary": report.monetary, **report.as_dict()}
    sys.stdout.write(dumps(doc))
    return EXIT_OK


# ------------------------------------------------------------------- parser


def _common(p, seeded=False):
    p.add_argument("--instance", required=True)
    p.add_argument("--risk", default="expectation")
    p.add_argument("--mode", choices=[m.value for m in SamplingMode])
    p.add_argument("--out")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    if seeded:
        p.add_argument("--policy")
        p.add_argument("--samples", type=int, default=20_000)
        p.add_argument("--horizon", type=int)
        p.add_argument("--budget", type=int, default=100_000, help="largest joint scenario count enumerated exactly")
        p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aamdp", description="Ambiguity-averse MDP toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    strategies = [k.value for k in StrategyKind]

    p = sub.add_parser("solve", help="optimal value and policy")
    _common(p)
    p.add_argument("--algo", choices=["vi", "pi", "lp"], default="vi")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--strategy", choices=strategies, default="auto")
    p.add_argument("--max-iter", type=int, default=100_000)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="value of a stationary policy")
    _common(p, seeded=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check-dp", help="does the value function solve its Bellman equation?")
    _common(p, seeded=True)
    p.add_argument("--operator-risk")
    p.add_argument("--target", nargs="+", default=["optimal"], metavar="optimal|policy [PATH]")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--strategy", choices=strategies)
    p.add_argument("--refine", type=int, nargs="?", const=2, default=0, metavar="LEVELS")
    p.set_defaults(func=cmd_check_dp)

    p = sub.add_parser("gallery", help="write example instances")
    p.add_argument("name", choices=GALLERY)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--scenarios", type=int)
    p.add_argument("--atoms", type=int)
    p.add_argument("--robust-atoms", type=int, default=64)
    p.add_argument("--gamma", type=float)
    p.add_argument("--preset", default="coin")
    p.add_argument("--states", type=int, default=4)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--mode", choices=[m.value for m in SamplingMode])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gallery)

    p = sub.add_parser("risk", help="evaluate a risk measure on a discrete distribution")
    p.add_argument("spec")
    p.add_argument("--atoms", required=True, help='"value:weight,..." or a file in that format')
    p.add_argument("--axioms", action="store_true", help="also run the axiom probe")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_risk)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConvergenceError, NonMonotoneStep, SolverBreakdown) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DocumentError, IncompatibleStrategy, DimensionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
