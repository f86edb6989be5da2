"""Experiment suite: game equilibrium versus the equal-split baseline.

Every experiment produces :class:`ExperimentReport` objects, one per
(sweep point, scheme).  ``write_reports`` turns them into long-format CSV
and JSON with a fixed column set.  Costs in a sweep are normalized by the
game scheme's mean per-task power cost at the sweep's first point, so
trends across the sweep stay visible.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costs import CostBreakdown, all_scheduler_costs, per_task_power_costs
from .equilibrium import (DEFAULT_MAX_ITER, DEFAULT_THRESHOLD, average_allocation,
                          nash_iterate)
from .errors import EmptyInput, Infeasible
from .model import GridConfig, SchedulerSpec, default_links, scale_to_load, system_load

CSV_COLUMNS = ("scenario", "scheme", "load", "m", "n", "scheduler", "power", "network",
               "loss", "utilization", "total", "normalized_power", "fi", "iterations")

DEFAULT_LOADS = tuple(round(0.1 * k, 1) for k in range(1, 10))


@dataclass
class ExperimentReport:
    scenario: str
    scheme: str  # "game" or "average"
    load: float
    m: int
    n: int
    feasible: bool = True
    breakdowns: list[CostBreakdown] = field(default_factory=list)
    per_task_power: np.ndarray = field(default_factory=lambda: np.zeros(0))
    normalized: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fairness: float = float("nan")
    iterations: int = 0
    converged: bool = True
    strategy: np.ndarray | None = None
    seed: int = 0

    @property
    def mean_cost(self) -> float:
        if not self.feasible:
            return float("inf")
        return float(np.mean(self.per_task_power))

    def rows(self):
        for i in range(self.n):
            if self.feasible:
                b = self.breakdowns[i]
                vals = (b.power, b.network, b.loss, b.utilization, b.total,
                        float(self.normalized[i]) if self.normalized.size else float("nan"))
            else:
                vals = (float("inf"),) * 6
            yield dict(zip(CSV_COLUMNS, (self.scenario, self.scheme, self.load, self.m, self.n, i,
                                         *vals, self.fairness, self.iterations)))


def fairness_index(costs) -> float:
    """Jain's index (sum T)^2 / (n sum T^2); 1.0 means equal per-task cost."""
    t = np.asarray(costs, dtype=float)
    if t.size == 0:
        raise EmptyInput("fairness index of an empty cost vector")
    if np.any(t <= 0):
        raise ValueError("fairness index needs positive costs")
    if np.all(t == t[0]):
        return 1.0
    return float(t.sum() ** 2 / (t.size * np.sum(t * t)))


def normalize(reports, reference: float | None = None):
    """Divide per-task power costs by the game scheme's mean (or ``reference``)."""
    if reference is None:
        games = [r for r in reports if r.scheme == "game"]
        if not games:
            raise ValueError("normalize needs a game report")
        reference = games[0].mean_cost
    for r in reports:
        if r.feasible:
            r.normalized = r.per_task_power / reference
    return reports


def _report(config, scenario, scheme, strategy, iterations=0, converged=True, seed=0):
    ptc = per_task_power_costs(strategy, config)
    return ExperimentReport(
        scenario=scenario, scheme=scheme, load=round(system_load(config), 12),
        m=config.m, n=config.n, breakdowns=all_scheduler_costs(strategy, config),
        per_task_power=ptc, fairness=fairness_index(ptc), iterations=iterations,
        converged=converged, strategy=np.array(strategy), seed=seed,
    )


def solve_point(config: GridConfig, scenario: str, threshold=DEFAULT_THRESHOLD,
                max_iter=DEFAULT_MAX_ITER, seed=0):
    """Game equilibrium and equal-split baseline for one configuration."""
    res = nash_iterate(config, threshold=threshold, max_iter=max_iter)
    game = _report(config, scenario, "game", res.strategy, res.iterations, res.converged, seed)
    try:
        avg = _report(config, scenario, "average", average_allocation(config), seed=seed)
    except Infeasible:
        avg = ExperimentReport(scenario, "average", round(system_load(config), 12),
                               config.m, config.n, feasible=False, seed=seed)
    return game, avg, res


def _sweep(points, scenario, threshold, max_iter, seed):
    reports = []
    for cfg in points:
        game, avg, _ = solve_point(cfg, scenario, threshold, max_iter, seed)
        reports += [game, avg]
    ref = reports[0].mean_cost
    return normalize(reports, ref)


def run_convergence(config: GridConfig, scenario="scenario", threshold=DEFAULT_THRESHOLD,
                    max_iter=DEFAULT_MAX_ITER, seed=0):
    game, avg, res = solve_point(config, scenario, threshold, max_iter, seed)
    return normalize([game, avg]), res.change_trace


def run_load_sweep(config: GridConfig, loads=DEFAULT_LOADS, scenario="scenario",
                   threshold=DEFAULT_THRESHOLD, max_iter=DEFAULT_MAX_ITER, seed=0):
    if any(not 0 < x < 1 for x in loads):
        raise ValueError("loads must lie in (0, 1)")
    return _sweep([scale_to_load(config, x) for x in loads], scenario, threshold, max_iter, seed)


def node_prefix(config: GridConfig, m: int) -> GridConfig:
    """Keep the first ``m`` nodes (and the matching links)."""
    if not 1 <= m <= config.m:
        raise ValueError(f"node count {m} outside 1..{config.m}")
    links = tuple(l for l in config.links if l.node < m)
    return GridConfig(config.nodes[:m], config.schedulers, links, config.constants, config.name)


def run_node_sweep(config: GridConfig, counts=range(5, 17), load=0.2, scenario="scenario",
                   threshold=DEFAULT_THRESHOLD, max_iter=DEFAULT_MAX_ITER, seed=0):
    points = [scale_to_load(node_prefix(config, m), load) for m in counts]
    return _sweep(points, scenario, threshold, max_iter, seed)


def with_schedulers(config: GridConfig, n: int, total_rate: float) -> GridConfig:
    """Replace the schedulers by ``n`` identical ones sharing ``total_rate`` equally."""
    if n < 1:
        raise ValueError("need at least one scheduler")
    proto = config.schedulers[0]
    scheds = tuple(SchedulerSpec(i, total_rate / n, proto.bits, proto.compute_demand)
                   for i in range(n))
    return GridConfig(config.nodes, scheds, default_links(n, config.m), config.constants, config.name)


def run_scheduler_sweep(config: GridConfig, counts=range(2, 11), load=0.2, scenario="scenario",
                        threshold=DEFAULT_THRESHOLD, max_iter=DEFAULT_MAX_ITER, seed=0):
    total = load * config.mu.sum()
    points = [with_schedulers(config, n, total) for n in counts]
    return _sweep(points, scenario, threshold, max_iter, seed)


def pareto_moments_table(config: GridConfig) -> list[dict]:
    rows = []
    for nd in config.nodes:
        p = nd.service.params
        rows.append({"node": nd.id, "kind": nd.service.kind,
                     "k": p.k if p else "", "p_max": p.p_max if p else "",
                     "shape": p.shape if p else "",
                     "mean": nd.service.mean, "second_moment": nd.service.second_moment})
    return rows


def run_pareto_sweep(config: GridConfig, loads=DEFAULT_LOADS, scenario="scenario",
                     threshold=DEFAULT_THRESHOLD, max_iter=DEFAULT_MAX_ITER, seed=0):
    if not all(nd.service.kind == "bounded_pareto" for nd in config.nodes):
        raise ValueError("pareto sweep expects Bounded Pareto nodes")
    return run_load_sweep(config, loads, scenario, threshold, max_iter, seed)


def homogeneous_variant(config: GridConfig) -> GridConfig:
    """Same nodes and total arrival rate, every scheduler at the mean rate."""
    return with_schedulers(config, config.n, float(config.lam.sum()))


def run_fairness(config: GridConfig, loads=DEFAULT_LOADS, node_counts=range(2, 9), load=0.2,
                 scenario="scenario", threshold=DEFAULT_THRESHOLD, max_iter=DEFAULT_MAX_ITER,
                 seed=0, node_config: GridConfig | None = None):
    """Fairness of both schemes across loads and across node counts.

    Node counts use prefixes of ``node_config`` (defaults to ``config``).
    """
    kw = dict(threshold=threshold, max_iter=max_iter, seed=seed)
    out = run_load_sweep(config, loads, scenario=f"{scenario}/load", **kw)
    source = node_config if node_config is not None else config
    counts = [m for m in node_counts if m <= source.m]
    out += run_node_sweep(source, counts, load, scenario=f"{scenario}/nodes", **kw)
    homo = homogeneous_variant(config)
    out += run_load_sweep(homo, loads, scenario=f"{scenario}/homogeneous", **kw)
    return out


def run_secondary_costs(config: GridConfig, scenario="scenario", threshold=DEFAULT_THRESHOLD,
                        max_iter=DEFAULT_MAX_ITER, seed=0):
    """Network, loss and utilization costs under the power-optimal equilibrium.

    Returns ``(reports, table)`` where ``table`` holds, per scheduler and
    scheme, each component divided by the game scheme's mean of that component.
    """
    game, avg, _ = solve_point(config, scenario, threshold, max_iter, seed)
    reports = normalize([game, avg])
    table = []
    comps = ("network", "loss", "utilization")
    ref = {c: np.mean([getattr(b, c) for b in game.breakdowns]) for c in comps}
    for rep in reports:
        if not rep.feasible:
            continue
        for i, b in enumerate(rep.breakdowns):
            row = {"scenario": scenario, "scheme": rep.scheme, "scheduler": i}
            for c in comps:
                row[c] = getattr(b, c)
                row[f"normalized_{c}"] = getattr(b, c) / ref[c] if ref[c] > 0 else float("nan")
            table.append(row)
    return reports, table


# output

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in columns})
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return _json_safe(v.item())
    return v


def write_table(rows, columns, out_dir, stem, fmt="csv") -> Path:
    out_dir = Path(out_dir)
    rows = list(rows)
    if fmt == "json":
        doc = [{k: _json_safe(r.get(k, "")) for k in columns} for r in rows]
        path = out_dir / f"{stem}.json"
        _atomic_write(path, json.dumps(doc, indent=1) + "\n")
    else:
        path = out_dir / f"{stem}.csv"
        _atomic_write(path, rows_to_csv(rows, columns))
    return path


def write_reports(reports, out_dir, experiment, scenario, fmt="csv") -> Path:
    rows = [row for rep in reports for row in rep.rows()]
    return write_table(rows, CSV_COLUMNS, out_dir, f"{experiment}_{scenario}", fmt)


def summarize(reports) -> str:
    games = [r for r in reports if r.scheme == "game"]
    avgs = [r for r in reports if r.scheme == "average"]
    both = [(g.mean_cost, a.mean_cost) for g, a in zip(games, avgs) if a.feasible]
    g = np.mean([x for x, _ in both]) if both else float("nan")
    a = np.mean([y for _, y in both]) if both else float("nan")
    return (f"{len(games)} point(s); mean per-task power cost over {len(both)} point(s) "
            f"where both schemes are feasible: game={g:.6g} average={a:.6g}")


__all__ = [
    "CSV_COLUMNS", "ExperimentReport", "fairness_index", "normalize", "solve_point",
    "run_convergence", "run_load_sweep", "run_node_sweep", "run_scheduler_sweep",
    "run_pareto_sweep", "run_fairness", "run_secondary_costs", "write_reports",
    "pareto_moments_table", "homogeneous_variant", "with_schedulers", "node_prefix",
]

