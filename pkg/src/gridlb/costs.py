"""Cost components of a task slice and their per-scheduler aggregates.

Scheduler ``i`` sending fraction ``a_ij`` to node ``j`` occupies the node
for ``F1 = h_j a_ij lambda_i`` (service) and ``F2`` (M/G/1 queueing delay).
Power, loss and utilization costs are linear combinations of these
occupancies; network cost depends only on the link.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnstableNode
from .model import STABILITY_MARGIN, GridConfig


@dataclass(frozen=True)
class CostBreakdown:
    power: float
    network: float
    loss: float
    utilization: float

    @property
    def total(self) -> float:
        return self.power + self.network + self.loss + self.utilization

    def scaled(self, factor: float) -> "CostBreakdown":
        return CostBreakdown(self.power * factor, self.network * factor,
                             self.loss * factor, self.utilization * factor)

    def as_dict(self) -> dict:
        return {"power": self.power, "network": self.network, "loss": self.loss,
                "utilization": self.utilization, "total": self.total}


def _node_load(j, strategy, config):
    return float(config.lam @ np.asarray(strategy, dtype=float)[:, j])


def _guard(j, total_rate, config):
    load = config.h[j] * total_rate
    if load >= 1 - STABILITY_MARGIN:
        raise UnstableNode(j, load)
    return load


def transmission_time(i, j, a_ij, config: GridConfig) -> float:
    s = config.schedulers[i]
    return (config.delay[i, j] + s.bits / config.bandwidth[i, j]) * a_ij


def network_cost(i, j, a_ij, config: GridConfig) -> float:
    c = config.constants
    return (c.c_bw * config.bandwidth[i, j] + c.c_n) * transmission_time(i, j, a_ij, config)


def service_occupancy(i, j, a_ij, config: GridConfig) -> float:
    return config.h[j] * a_ij * config.lam[i]


def waiting_occupancy(i, j, strategy, config: GridConfig) -> float:
    a_ij = float(strategy[i][j])
    rate = _node_load(j, strategy, config)
    load = _guard(j, rate, config)
    return a_ij * config.lam[i] * config.h2[j] * rate / (2.0 * (1.0 - load))


def _occupancies(i, j, strategy, config):
    a_ij = float(strategy[i][j])
    return service_occupancy(i, j, a_ij, config), waiting_occupancy(i, j, strategy, config)


def power_cost(i, j, strategy, config: GridConfig) -> float:
    f1, f2 = _occupancies(i, j, strategy, config)
    nd = config.nodes[j]
    return config.constants.c_p * (nd.p_busy * f1 + nd.p_idle_wait * f2)


def loss_cost(i, j, strategy, config: GridConfig) -> float:
    f1, f2 = _occupancies(i, j, strategy, config)
    nd = config.nodes[j]
    return nd.c_r / nd.mttf * (f1 + f2)


def utilization_cost(i, j, strategy, config: GridConfig) -> float:
    # both terms carry an extra a_ij: the resource share f_r is itself proportional to a_ij
    a_ij = float(strategy[i][j])
    f1, f2 = _occupancies(i, j, strategy, config)
    nd, s = config.nodes[j], config.schedulers[i]
    cpu = nd.c_f * nd.rho_util * (s.compute_demand / nd.compute_capacity) * a_ij * f1
    disk = nd.c_f * nd.rho_util * (s.bits / nd.disk_capacity) * a_ij * (f1 + f2)
    return cpu + disk


def scheduler_cost(i, strategy, config: GridConfig) -> CostBreakdown:
    parts = [0.0, 0.0, 0.0, 0.0]
    for j in range(config.m):
        a_ij = float(strategy[i][j])
        parts[0] += power_cost(i, j, strategy, config)
        parts[1] += network_cost(i, j, a_ij, config)
        parts[2] += loss_cost(i, j, strategy, config)
        parts[3] += utilization_cost(i, j, strategy, config)
    return CostBreakdown(*parts)


def all_scheduler_costs(strategy, config: GridConfig) -> list[CostBreakdown]:
    return [scheduler_cost(i, strategy, config) for i in range(config.n)]


# per-task power cost: the objective each scheduler minimises

def node_waiting_factor(total_rate, config: GridConfig) -> np.ndarray:
    """Mean M/G/1 queueing delay at every node for the given per-node arrival rates."""
    total_rate = np.asarray(total_rate, dtype=float)
    load = config.h * total_rate
    bad = np.flatnonzero(load >= 1 - STABILITY_MARGIN)
    if bad.size:
        raise UnstableNode(int(bad[0]), float(load[bad[0]]))
    return config.h2 * total_rate / (2.0 * (1.0 - load))


def per_task_power_cost(i, strategy, config: GridConfig) -> float:
    a = np.asarray(strategy, dtype=float)
    wait = node_waiting_factor(config.lam @ a, config)
    c_p = config.constants.c_p
    return float(c_p * np.sum(a[i] * (config.p1 * config.h + config.p2 * wait)))


def per_task_power_costs(strategy, config: GridConfig) -> np.ndarray:
    a = np.asarray(strategy, dtype=float)
    wait = node_waiting_factor(config.lam @ a, config)
    return config.constants.c_p * (a @ (config.p1 * config.h + config.p2 * wait))


def row_power_cost(row, others_rate, lam_i, config: GridConfig) -> float:
    """Per-task power cost of ``row`` for a scheduler of rate ``lam_i``.

    ``others_rate`` is the per-node arrival rate contributed by every other
    scheduler.  Returns ``inf`` for rows that overload a node, so it can be
    fed straight to a brute-force search.
    """
    row = np.asarray(row, dtype=float)
    total = others_rate + row * lam_i
    load = config.h * total
    if np.any(load >= 1 - STABILITY_MARGIN):
        return float("inf")
    wait = config.h2 * total / (2.0 * (1.0 - load))
    return float(config.constants.c_p * np.sum(row * (config.p1 * config.h + config.p2 * wait)))
