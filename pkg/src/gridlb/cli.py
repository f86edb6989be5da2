"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 equilibrium not reached.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .distributions import BoundedParetoParams, ServiceDistribution, bounded_pareto_moments, exponential_moments
from .equilibrium import DEFAULT_MAX_ITER, DEFAULT_THRESHOLD, average_allocation, best_response, nash_iterate
from .errors import GridError, SingularShape, UnstableNode, ValidationError
from .model import NodeSpec, load_scenario, scale_to_load, system_load, validate
from .queueing import DesConfig, node_streams, pk_mean_wait, simulate_node

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 1, 2
OUTPUT_ENV = "GRIDLB_OUTPUT_DIR"
EXPERIMENTS = ("convergence", "load", "nodes", "schedulers", "pareto", "fairness", "secondary")


class UsageError(Exception):
    pass


def _kv(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"{k}: not a number: {v!r}") from None
    return out


def _scenario(args):
    cfg = load_scenario(args.scenario)
    if getattr(args, "load", None) is not None:
        if not 0 < args.load < 1:
            raise UsageError("--load must lie in (0, 1)")
        cfg = scale_to_load(cfg, args.load)
    return validate(cfg)


def _check_threshold(t):
    # 0 is accepted so that non-convergence can be forced on purpose
    if not 0 <= t < 1:
        raise UsageError("--threshold must lie in [0, 1)")


def _fmt_row(row):
    return "  ".join(f"{v:.6f}" for v in row)


def _emit(payload: dict, args, stem: str):
    if args.format == "json":
        print(json.dumps(payload, indent=1, default=_jsonable))
    if args.output_dir:
        ex._atomic_write(Path(args.output_dir) / f"{stem}.json",
                         json.dumps(payload, indent=1, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def cmd_validate(args) -> int:
    cfg = load_scenario(args.scenario)
    try:
        validate(cfg)
    except ValidationError as err:
        for v in err.violations:
            print(f"violation {v}")
        return EXIT_INVALID
    print(f"ok: {cfg.name} n={cfg.n} m={cfg.m} load={system_load(cfg):.6g}")
    return EXIT_OK


def cmd_solve(args) -> int:
    _check_threshold(args.threshold)
    cfg = _scenario(args)
    res = nash_iterate(cfg, threshold=args.threshold, max_iter=args.max_iter)
    payload = {
        "scenario": cfg.name, "load": system_load(cfg), "n": cfg.n, "m": cfg.m,
        "converged": res.converged, "iterations": res.iterations,
        "change_trace": res.change_trace, "strategy": res.strategy,
        "alpha": res.alphas, "per_task_power_cost": res.per_scheduler_cost,
    }
    if args.format != "json":
        print(f"scenario {cfg.name}: n={cfg.n} m={cfg.m} load={system_load(cfg):.6g}")
        print(f"{'converged' if res.converged else 'NOT converged'} after {res.iterations} "
              f"iteration(s); last change {res.change_trace[-1]:.3e}")
        print("strategy:")
        for i, row in enumerate(res.strategy):
            print(f"  s{i}: {_fmt_row(row)}")
        print("scheduler  alpha  per-task power cost")
        for i in range(cfg.n):
            print(f"  s{i}: {res.alphas[i]:.9g}  {res.per_scheduler_cost[i]:.9g}")
    _emit(payload, args, f"solve_{cfg.name}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_baseline(args) -> int:
    cfg = _scenario(args)
    a = average_allocation(cfg)
    rep = ex._report(cfg, cfg.name, "average", a)
    payload = {"scenario": cfg.name, "load": system_load(cfg), "strategy": a,
               "per_task_power_cost": rep.per_task_power, "fi": rep.fairness}
    if args.format != "json":
        print(f"average allocation for {cfg.name}: every entry 1/{cfg.m}")
        for i, c in enumerate(rep.per_task_power):
            print(f"  s{i}: per-task power cost {c:.9g}")
        print(f"fairness index {rep.fairness:.9g}")
    _emit(payload, args, f"baseline_{cfg.name}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        print(f"unknown experiment {args.name!r}; choose from {', '.join(EXPERIMENTS)}",
              file=sys.stderr)
        return EXIT_INVALID
    _check_threshold(args.threshold)
    cfg = _scenario(args)
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV, "results"))
    kw = dict(scenario=cfg.name, threshold=args.threshold, max_iter=args.max_iter, seed=args.seed)
    extra = []
    if args.name == "convergence":
        reports, trace = ex.run_convergence(cfg, **kw)
        rows = [{"iteration": k + 1, "change": v} for k, v in enumerate(trace)]
        extra.append(ex.write_table(rows, ("iteration", "change"), out,
                                    f"convergence_trace_{cfg.name}", args.format))
    elif args.name == "load":
        reports = ex.run_load_sweep(cfg, **kw)
    elif args.name == "nodes":
        reports = ex.run_node_sweep(cfg, counts=range(min(5, cfg.m), cfg.m + 1), **kw)
    elif args.name == "schedulers":
        reports = ex.run_scheduler_sweep(cfg, **kw)
    elif args.name == "pareto":
        reports = ex.run_pareto_sweep(cfg, **kw)
        cols = ("node", "kind", "k", "p_max", "shape", "mean", "second_moment")
        extra.append(ex.write_table(ex.pareto_moments_table(cfg), cols, out,
                                    f"pareto_moments_{cfg.name}", args.format))
    elif args.name == "fairness":
        reports = ex.run_fairness(cfg, **kw)
    else:
        reports, table = ex.run_secondary_costs(cfg, **kw)
        cols = ("scenario", "scheme", "scheduler", "network", "loss", "utilization",
                "normalized_network", "normalized_loss", "normalized_utilization")
        extra.append(ex.write_table(table, cols, out, f"secondary_table_{cfg.name}", args.format))
    path = ex.write_reports(reports, out, args.name, cfg.name, args.format)
    print(f"{args.name} {cfg.name}: {ex.summarize(reports)} -> {path}")
    for p in extra:
        print(f"  also wrote {p}")
    if any(r.scheme == "game" and not r.converged for r in reports):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_moments(args) -> int:
    try:
        if args.pareto is not None:
            kv = _kv(args.pareto)
            params = BoundedParetoParams(kv["k"], kv["p"] if "p" in kv else kv["p_max"],
                                         kv["alpha"] if "alpha" in kv else kv["shape"])
            mean, second = bounded_pareto_moments(params)
        else:
            mean, second = exponential_moments(_kv(args.exp)["mu"])
    except SingularShape as err:
        print(f"SingularShape: {err}", file=sys.stderr)
        return EXIT_INVALID
    except KeyError as err:
        raise UsageError(f"missing parameter {err}") from None
    print(f"mean {mean:.6g}")
    print(f"second_moment {second:.6g}")
    return EXIT_OK


def _flag_service(args) -> ServiceDistribution:
    if args.pareto is not None:
        kv = _kv(args.pareto)
        return ServiceDistribution.bounded_pareto(
            kv["k"], kv["p"] if "p" in kv else kv["p_max"],
            kv["alpha"] if "alpha" in kv else kv["shape"])
    kv = _kv(args.exp) if args.exp else {"mu": 1.0}
    return ServiceDistribution.exponential(kv["mu"])


def cmd_simulate(args) -> int:
    if args.scenario:
        cfg = _scenario(args)
        res = nash_iterate(cfg)
        j = args.node
        if not 0 <= j < cfg.m:
            raise UsageError(f"--node must lie in 0..{cfg.m - 1}")
        node = cfg.nodes[j]
        streams = node_streams(j, res.strategy, cfg.lam)
        label = f"{cfg.name} node {j} at equilibrium"
    else:
        service = _flag_service(args)
        node = NodeSpec(0, service.rate, service)
        if args.rate is not None:
            rate = args.rate
        elif args.load is not None:
            rate = args.load * service.rate
        else:
            raise UsageError("simulate needs --rate or --load (or a scenario)")
        streams = ((rate, 0),)
        label = f"{service.kind} node, arrival rate {rate:.6g}"
    cfg_des = DesConfig(node, streams, horizon=args.horizon, seed=args.seed)
    stats = simulate_node(cfg_des)
    analytic = pk_mean_wait(cfg_des.total_rate, node.service)
    rel = abs(stats.mean_wait - analytic) / analytic if analytic > 0 else abs(stats.mean_wait)
    payload = {"label": label, "total_rate": cfg_des.total_rate, "seed": args.seed,
               "horizon": args.horizon, "des_mean_wait": stats.mean_wait,
               "ci95_wait": stats.ci95_wait, "analytic_mean_wait": analytic,
               "relative_error": rel, "mean_service": stats.mean_service,
               "mean_sojourn": stats.mean_sojourn, "utilization": stats.utilization,
               "mean_in_system": stats.mean_in_system}
    if args.format == "json":
        print(json.dumps(payload, indent=1))
    else:
        print(label)
        print(f"  tasks measured   {stats.tasks}")
        print(f"  DES mean wait    {stats.mean_wait:.6g} +/- {stats.ci95_wait:.3g} (95% CI)")
        print(f"  P-K mean wait    {analytic:.6g}")
        print(f"  relative error   {rel:.3%}")
        print(f"  mean service     {stats.mean_service:.6g}")
        print(f"  utilization      {stats.utilization:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridlb", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("scenario", help="scenario JSON path or bundled scenario name")
        sp.add_argument("--load", type=float, help="rescale arrival rates to this system load")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--output-dir", default=None)
        sp.add_argument("--seed", type=int, default=0)

    def solver(sp):
        sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
        sp.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)

    sp = sub.add_parser("validate", help="check a scenario's constraints")
    sp.add_argument("scenario")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("solve", help="iterate best responses to the Nash equilibrium")
    common(sp)
    solver(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("baseline", help="equal-split allocation costs")
    common(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("experiment", help="run an experiment and write CSV/JSON")
    sp.add_argument("name", help="|".join(EXPERIMENTS))
    common(sp)
    solver(sp)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("moments", help="service-time moments")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--pareto", nargs="+", metavar="KEY=VALUE", help="k=.. p=.. alpha=..")
    g.add_argument("--exp", nargs="+", metavar="KEY=VALUE", help="mu=..")
    sp.set_defaults(func=cmd_moments)

    sp = sub.add_parser("simulate", help="M/G/1 discrete-event simulation vs analytic wait")
    sp.add_argument("scenario", nargs="?", default=None)
    sp.add_argument("--node", type=int, default=0)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--pareto", nargs="+", metavar="KEY=VALUE")
    g.add_argument("--exp", nargs="+", metavar="KEY=VALUE")
    sp.add_argument("--rate", type=float, default=None, help="total arrival rate")
    sp.add_argument("--load", type=float, default=None)
    sp.add_argument("--horizon", type=int, default=200_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as err:
        for v in err.violations:
            print(f"violation {v}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, FileNotFoundError, UnstableNode, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except GridError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
