"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line.  Run with
``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""
import functools
import itertools
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridlb import experiments as ex  # noqa: E402
from gridlb.costs import row_power_cost  # noqa: E402
from gridlb.distributions import BoundedParetoParams, bounded_pareto_moments  # noqa: E402
from gridlb.equilibrium import best_response, kkt_residuals, nash_iterate  # noqa: E402
from gridlb.model import (CostConstants, GridConfig, SchedulerSpec, default_links,  # noqa: E402
                          load_scenario, scale_to_load)
from gridlb.queueing import DesConfig, pk_mean_wait, simulate_node  # noqa: E402
from oracles import general_node, grid_best_row, random_instance  # noqa: E402

TABLE5_PRINTED = {
    (0.001, 0.07): (0.003843, 5.52e-05),
    (0.002, 0.08): (0.006906, 0.000133),
    (0.003, 0.09): (0.009746, 0.000229),
    (0.004, 0.1): (0.012471, 0.000345),
}


def _line(n, ok, detail):
    return f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"


# shared runs

@functools.lru_cache(maxsize=None)
def tables():
    return load_scenario("tables23")


@functools.lru_cache(maxsize=None)
def load_sweep():
    return ex.run_load_sweep(tables(), scenario="tables23")


@functools.lru_cache(maxsize=None)
def node_sweep():
    return ex.run_node_sweep(load_scenario("table4"), scenario="table4")


@functools.lru_cache(maxsize=None)
def homogeneous_sweep():
    return ex.run_load_sweep(ex.homogeneous_variant(tables()), scenario="homogeneous")


@functools.lru_cache(maxsize=None)
def pareto_sweep():
    return ex.run_pareto_sweep(load_scenario("table5"), scenario="table5")


@functools.lru_cache(maxsize=None)
def scheduler_sweep():
    return ex.run_scheduler_sweep(tables(), scenario="tables23")


def _random_config(rng, n, m, load):
    mu = rng.uniform(2.0, 20.0, m)
    nodes = tuple(general_node(j, mu[j], rng.uniform(0.2, 3.0), rng.uniform(0.2, 2.0),
                               rng.uniform(0.2, 2.0)) for j in range(m))
    scheds = tuple(SchedulerSpec(i, float(x)) for i, x in enumerate(rng.uniform(0.5, 1.5, n)))
    return scale_to_load(GridConfig(nodes, scheds, default_links(n, m), CostConstants()), load)


def _feasible_start(rng, cfg):
    while True:
        a = rng.dirichlet(np.ones(cfg.m), size=cfg.n)
        if np.all(cfg.h * (cfg.lam @ a) < 1 - 1e-9):
            return a


def _config_of(report):
    """Rebuild the configuration a sweep report was solved on."""
    if report.scenario == "tables23":
        if report.n != tables().n:
            return ex.with_schedulers(tables(), report.n, 0.2 * tables().mu.sum())
        return scale_to_load(tables(), report.load)
    if report.scenario == "homogeneous":
        return scale_to_load(ex.homogeneous_variant(tables()), report.load)
    if report.scenario == "table4":
        return scale_to_load(ex.node_prefix(load_scenario("table4"), report.m), report.load)
    if report.scenario == "table5":
        return scale_to_load(load_scenario("table5"), report.load)
    raise KeyError(report.scenario)


def all_reports():
    return (load_sweep() + node_sweep() + homogeneous_sweep() + pareto_sweep()
            + scheduler_sweep())


# criteria

def criterion_1():
    start = time.perf_counter()
    worst = 0.0
    cfg = load_scenario("table5")
    for nd in cfg.nodes:
        p = nd.service.params
        mean, second = bounded_pareto_moments(BoundedParetoParams(p.k, p.p_max, p.shape))
        want = TABLE5_PRINTED[(p.k, p.p_max)]
        worst = max(worst, abs(mean / want[0] - 1), abs(second / want[1] - 1))
    elapsed = time.perf_counter() - start
    ok = len(cfg.nodes) == 8 and worst <= 5e-3 and elapsed < 1.0
    return ok, f"8 nodes, worst relative error {worst:.3e} (limit 5e-3), {elapsed:.3f}s"


def criterion_2():
    start = time.perf_counter()
    r1 = nash_iterate(tables(), threshold=1e-4)
    elapsed = time.perf_counter() - start
    r2 = nash_iterate(tables(), threshold=1e-4)
    same = np.array_equal(r1.strategy, r2.strategy) and r1.iterations == r2.iterations
    at02 = nash_iterate(scale_to_load(tables(), 0.2), threshold=1e-4).iterations
    ok = r1.converged and r1.iterations <= 10 and same and elapsed < 1.0
    return ok, (f"converged={r1.converged} in {r1.iterations} iterations (limit 10; "
                f"{at02} at load 0.2), deterministic={same}, {elapsed:.3f}s")


def criterion_3():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_dev, worst_excess = 0.0, -np.inf
    for _ in range(200):
        cfg, a = random_instance(rng, margin=0.05)
        others = cfg.lam @ a
        grid_row, grid_cost = grid_best_row(others, cfg.lam[0], cfg)
        row = best_response(0, a, cfg).row
        worst_dev = max(worst_dev, float(np.max(np.abs(row - grid_row))))
        worst_excess = max(worst_excess, row_power_cost(row, others, cfg.lam[0], cfg) / grid_cost - 1)
    elapsed = time.perf_counter() - start
    ok = worst_dev <= 1e-3 and worst_excess <= 1e-12 and elapsed < 120
    return ok, (f"200 instances, max coordinate gap {worst_dev:.2e} (limit 1e-3), "
                f"max cost excess over grid {worst_excess:.1e}, {elapsed:.1f}s")


def criterion_4():
    worst_rel, worst_slack, count = 0.0, np.inf, 0
    for rep in all_reports():
        if rep.scheme != "game" or not rep.converged:
            continue
        cfg = _config_of(rep)
        for i in range(cfg.n):
            rel, slack = kkt_residuals(i, rep.strategy, cfg)
            worst_rel, worst_slack = max(worst_rel, rel), min(worst_slack, slack)
        count += 1
    ok = count > 0 and worst_rel <= 1e-8 and worst_slack >= -1e-10
    return ok, (f"{count} equilibria, max marginal gap {worst_rel:.1e} (limit 1e-8), "
                f"min inactive slack {worst_slack:.3g} (limit -1e-10)")


def criterion_5():
    games = [r for r in load_sweep() if r.scheme == "game"]
    avgs = [r for r in load_sweep() if r.scheme == "average"]
    # an infeasible equal split is charged infinite cost
    ordered = all(np.all(g.per_task_power <= a.per_task_power) if a.feasible else True
                  for g, a in zip(games, avgs))
    g_cost = [g.mean_cost for g in games]
    a_cost = [a.mean_cost for a in avgs]
    mono = all(y >= x for x, y in zip(g_cost, g_cost[1:])) and \
        all(y >= x for x, y in zip(a_cost, a_cost[1:]))
    infeasible = [a.load for a in avgs if not a.feasible]
    return ordered and mono, (f"game <= average per scheduler: {ordered}; nondecreasing in load: "
                              f"{mono}; equal split infeasible at loads {infeasible}")


def criterion_6():
    games = [r for r in node_sweep() if r.scheme == "game"]
    avgs = [r for r in node_sweep() if r.scheme == "average"]
    costs = [g.mean_cost for g in games]
    rises = [(games[k].m, games[k + 1].m) for k in range(len(games) - 1) if costs[k + 1] > costs[k]]
    below = all(g.mean_cost <= a.mean_cost for g, a in zip(games, avgs))
    ok = not rises and below
    return ok, f"game <= average at every m: {below}; game cost rises at m steps {rises}"


def criterion_7():
    games = [r for r in load_sweep() if r.scheme == "game"]
    avgs = [r for r in load_sweep() + node_sweep() + homogeneous_sweep()
            if r.scheme == "average" and r.feasible]
    avg_exact = all(r.fairness == 1.0 for r in avgs)
    fi = [g.fairness for g in games]
    in_range = all(0.9 < f <= 1.0 for f in fi)
    rises = [games[k + 1].load for k in range(len(fi) - 1) if fi[k + 1] > fi[k]]
    homo = max(abs(r.fairness - 1.0) for r in homogeneous_sweep() if r.scheme == "game")
    ok = avg_exact and in_range and not rises and homo <= 1e-9
    return ok, (f"average FI exactly 1: {avg_exact}; game FI in (0.9, 1]: {in_range} "
                f"(min {min(fi):.6f}); FI rises at loads {rises}; homogeneous |FI-1| {homo:.1e}")


def criterion_8():
    start = time.perf_counter()
    cases = [("exponential", load_scenario("tables23").nodes[0]),
             ("bounded pareto", load_scenario("table5").nodes[0])]
    worst = 0.0
    bad = []
    for (label, node), load in itertools.product(cases, (0.2, 0.5, 0.8)):
        rate = load / node.service.mean
        st = simulate_node(DesConfig(node, ((rate, 0),), horizon=1_000_000, seed=11))
        pk = pk_mean_wait(rate, node.service)
        err = abs(st.mean_wait - pk)
        worst = max(worst, err / pk)
        if err > max(0.05 * pk, st.ci95_wait):
            bad.append((label, load))
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 120
    return ok, f"6 runs of 1e6 tasks, worst relative gap {worst:.2%}, failing {bad}, {elapsed:.1f}s"


def criterion_9():
    worst_row, worst_load = 0.0, -np.inf
    for rep in all_reports():
        if not rep.feasible:
            continue
        cfg = _config_of(rep)
        worst_row = max(worst_row, float(np.max(np.abs(rep.strategy.sum(axis=1) - 1))))
        worst_load = max(worst_load, float(np.max(cfg.h * (cfg.lam @ rep.strategy))))
        assert np.all(rep.strategy >= 0)
    base_cfg = scale_to_load(tables(), 0.2)
    base = nash_iterate(base_cfg, threshold=1e-10).strategy
    scale_gap = max(float(np.max(np.abs(
        nash_iterate(base_cfg.with_constants(c_p=g), threshold=1e-10).strategy - base)))
        for g in (1e-3, 0.37, 250.0))
    rng = np.random.default_rng(99)
    cfg = _random_config(rng, 3, 4, 0.4)
    ends = [nash_iterate(cfg, initial=_feasible_start(rng, cfg), threshold=1e-12,
                         max_iter=5000).strategy for _ in range(10)]
    spread = max(float(np.max(np.abs(x - y))) for x, y in itertools.combinations(ends, 2))
    ok = worst_row <= 1e-9 and worst_load < 1 - 1e-9 and scale_gap <= 1e-10 and spread <= 1e-6
    return ok, (f"row-sum gap {worst_row:.1e}, max node load {worst_load:.4f}, "
                f"c_p scale gap {scale_gap:.1e} (limit 1e-10), multi-start spread "
                f"{spread:.1e} (limit 1e-6)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9]


@pytest.mark.parametrize("n", range(1, 10))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n - 1]()
    with capsys.disabled():
        print("\n" + _line(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for n, fn in enumerate(CRITERIA, 1):
        ok, detail = fn()
        failed += not ok
        print(_line(n, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
