"""Grid scenario types, validation and scenario-file I/O.

A scenario is ``n`` schedulers, each receiving a Poisson task stream of rate
``lambda``, and ``m`` M/G/1 nodes.  Scheduler ``i`` sends fraction ``a[i, j]``
of its stream to node ``j``; the n-by-m matrix ``a`` is the strategy.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .distributions import ServiceDistribution
from .errors import ShapeMismatch, ValidationError, Violation

# node offered load must stay at or below 1 - STABILITY_MARGIN
STABILITY_MARGIN = 1e-9
ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class NodeSpec:
    id: int
    mu: float
    service: ServiceDistribution
    p_busy: float = 1.0
    p_idle_wait: float = 1.0
    c_r: float = 1.0
    mttf: float = 1.0
    c_f: float = 1.0
    rho_util: float = 1.0
    compute_capacity: float = 1.0
    disk_capacity: float = 1.0


@dataclass(frozen=True)
class SchedulerSpec:
    id: int
    lam: float
    bits: float = 1.0
    compute_demand: float = 1.0


@dataclass(frozen=True)
class LinkSpec:
    scheduler: int
    node: int
    delay: float = 0.0
    bandwidth: float = 1.0


@dataclass(frozen=True)
class CostConstants:
    c_p: float = 1.0
    c_bw: float = 1.0
    c_n: float = 1.0


@dataclass(frozen=True)
class GridConfig:
    nodes: tuple[NodeSpec, ...]
    schedulers: tuple[SchedulerSpec, ...]
    links: tuple[LinkSpec, ...] = ()
    constants: CostConstants = field(default_factory=CostConstants)
    name: str = "scenario"

    @property
    def n(self) -> int:
        return len(self.schedulers)

    @property
    def m(self) -> int:
        return len(self.nodes)

    # array views used by the numeric code

    @cached_property
    def lam(self) -> np.ndarray:
        return np.array([s.lam for s in self.schedulers], dtype=float)

    @cached_property
    def mu(self) -> np.ndarray:
        return np.array([nd.mu for nd in self.nodes], dtype=float)

    @cached_property
    def h(self) -> np.ndarray:
        """Mean service time per node."""
        return np.array([nd.service.mean for nd in self.nodes], dtype=float)

    @cached_property
    def h2(self) -> np.ndarray:
        """Second moment of service time per node."""
        return np.array([nd.service.second_moment for nd in self.nodes], dtype=float)

    @cached_property
    def p1(self) -> np.ndarray:
        return np.array([nd.p_busy for nd in self.nodes], dtype=float)

    @cached_property
    def p2(self) -> np.ndarray:
        return np.array([nd.p_idle_wait for nd in self.nodes], dtype=float)

    @cached_property
    def delay(self) -> np.ndarray:
        return self._link_matrix("delay", 0.0)

    @cached_property
    def bandwidth(self) -> np.ndarray:
        return self._link_matrix("bandwidth", 1.0)

    def _link_matrix(self, attr, default):
        out = np.full((self.n, self.m), default, dtype=float)
        for link in self.links:
            if 0 <= link.scheduler < self.n and 0 <= link.node < self.m:
                out[link.scheduler, link.node] = getattr(link, attr)
        return out

    def link(self, i: int, j: int) -> LinkSpec:
        for link in self.links:
            if link.scheduler == i and link.node == j:
                return link
        raise KeyError((i, j))

    def with_lambdas(self, lam) -> "GridConfig":
        scheds = tuple(dataclasses.replace(s, lam=float(v)) for s, v in zip(self.schedulers, lam))
        return dataclasses.replace(self, schedulers=scheds)

    def with_constants(self, **kw) -> "GridConfig":
        return dataclasses.replace(self, constants=dataclasses.replace(self.constants, **kw))


def default_links(n: int, m: int) -> tuple[LinkSpec, ...]:
    return tuple(LinkSpec(i, j) for i in range(n) for j in range(m))


def make_config(mu, lam, *, constants=None, name="scenario", **node_kw) -> GridConfig:
    """Build an exponential-service scenario from rate lists (handy for tests and sweeps)."""
    nodes = tuple(
        NodeSpec(j, float(u), ServiceDistribution.exponential(float(u)), **node_kw)
        for j, u in enumerate(mu)
    )
    scheds = tuple(SchedulerSpec(i, float(v)) for i, v in enumerate(lam))
    return GridConfig(nodes, scheds, default_links(len(scheds), len(nodes)),
                      constants or CostConstants(), name)


def validate(config: GridConfig) -> GridConfig:
    """Return ``config`` unchanged if every constraint holds, else raise ValidationError."""
    bad: list[Violation] = []
    for j, nd in enumerate(config.nodes):
        if not nd.mu > 0:
            bad.append(Violation("NonPositiveRate", f"node {j}: mu={nd.mu}"))
        elif not math.isclose(nd.service.mean, 1.0 / nd.mu, rel_tol=1e-9):
            bad.append(Violation("ServiceMismatch",
                                 f"node {j}: service mean {nd.service.mean} != 1/mu {1.0 / nd.mu}"))
        if nd.service.second_moment < nd.service.mean**2 * (1 - 1e-12):
            bad.append(Violation("InvalidService", f"node {j}: second moment below mean squared"))
        for attr in ("mttf", "disk_capacity", "compute_capacity"):
            if not getattr(nd, attr) > 0:
                bad.append(Violation("NonPositiveRate", f"node {j}: {attr}={getattr(nd, attr)}"))
        for attr in ("p_busy", "p_idle_wait", "c_r", "c_f", "rho_util"):
            if getattr(nd, attr) < 0:
                bad.append(Violation("NegativeCost", f"node {j}: {attr}={getattr(nd, attr)}"))
    for i, s in enumerate(config.schedulers):
        for attr in ("lam", "bits", "compute_demand"):
            if not getattr(s, attr) > 0:
                bad.append(Violation("NonPositiveRate", f"scheduler {i}: {attr}={getattr(s, attr)}"))

    seen: dict[tuple[int, int], int] = {}
    for link in config.links:
        key = (link.scheduler, link.node)
        if not (0 <= link.scheduler < config.n and 0 <= link.node < config.m):
            bad.append(Violation("UnknownLink", f"link {key} references a missing endpoint"))
            continue
        seen[key] = seen.get(key, 0) + 1
        if link.delay < 0:
            bad.append(Violation("NegativeDelay", f"link {key}: delay={link.delay}"))
        if not link.bandwidth > 0:
            bad.append(Violation("NonPositiveRate", f"link {key}: bandwidth={link.bandwidth}"))
    for i in range(config.n):
        for j in range(config.m):
            count = seen.get((i, j), 0)
            if count == 0:
                bad.append(Violation("MissingLink", f"link ({i}, {j}) missing"))
            elif count > 1:
                bad.append(Violation("DuplicateLink", f"link ({i}, {j}) listed {count} times"))

    c = config.constants
    if not c.c_p > 0:
        bad.append(Violation("NonPositiveRate", f"c_p={c.c_p} must be positive"))
    if c.c_bw < 0 or c.c_n < 0:
        bad.append(Violation("NegativeCost", f"c_bw={c.c_bw}, c_n={c.c_n}"))

    if config.n == 0 or config.m == 0:
        bad.append(Violation("Empty", f"need at least one scheduler and node (n={config.n}, m={config.m})"))
    else:
        total_lam = sum(s.lam for s in config.schedulers)
        total_mu = sum(nd.mu for nd in config.nodes)
        if not total_lam < total_mu:
            bad.append(Violation("InfeasibleLoad",
                                 f"total arrival {total_lam:.6g} >= total service {total_mu:.6g}"))
    if bad:
        raise ValidationError(bad)
    return config


def system_load(config: GridConfig) -> float:
    return float(config.lam.sum() / config.mu.sum())


def scale_to_load(config: GridConfig, target: float) -> GridConfig:
    """Scale every arrival rate by one common factor so that system_load == target."""
    if not 0 < target < 1:
        raise ValueError(f"target load must lie in (0, 1), got {target}")
    factor = target * config.mu.sum() / config.lam.sum()
    return config.with_lambdas(config.lam * factor)


# strategy helpers

def node_loads(a: np.ndarray, config: GridConfig) -> np.ndarray:
    """Offered load h_j * sum_i a_ij lambda_i at every node."""
    return config.h * (config.lam @ a)


def check_strategy(a, config: GridConfig, tol: float = ROW_SUM_TOL) -> list[Violation]:
    """List violated strategy constraints (empty when ``a`` is feasible)."""
    a = np.asarray(a, dtype=float)
    if a.shape != (config.n, config.m):
        raise ShapeMismatch(f"strategy shape {a.shape} != {(config.n, config.m)}")
    bad = []
    for i, row in enumerate(a):
        if np.any(row < 0):
            bad.append(Violation("NegativeFraction", f"row {i} has negative entries"))
        if abs(row.sum() - 1.0) > tol:
            bad.append(Violation("RowSum", f"row {i} sums to {row.sum():.15g}"))
    for j, load in enumerate(node_loads(a, config)):
        if load > 1 - STABILITY_MARGIN:
            bad.append(Violation("UnstableNode", f"node {j} load {load:.12g}"))
    return bad


def is_feasible(a, config: GridConfig) -> bool:
    return not check_strategy(a, config)


# scenario files

def _service_from_dict(d: dict | None, mu: float | None) -> tuple[ServiceDistribution, float]:
    d = d or {"kind": "exponential"}
    kind = d.get("kind", "exponential")
    if kind == "exponential":
        if mu is None:
            raise ValueError("exponential node needs mu")
        return ServiceDistribution.exponential(mu), mu
    if kind == "bounded_pareto":
        dist = ServiceDistribution.bounded_pareto(d["k"], d["p_max"], d["shape"])
        return dist, (1.0 / dist.mean if mu is None else mu)
    raise ValueError(f"unknown service kind {kind!r}")


_NODE_FIELDS = ("p_busy", "p_idle_wait", "c_r", "mttf", "c_f", "rho_util",
                "compute_capacity", "disk_capacity")


def config_from_dict(doc: dict, name: str = "scenario") -> GridConfig:
    nodes = []
    for j, nd in enumerate(doc["nodes"]):
        service, mu = _service_from_dict(nd.get("service"), nd.get("mu"))
        extra = {k: float(nd[k]) for k in _NODE_FIELDS if k in nd}
        nodes.append(NodeSpec(nd.get("id", j), float(mu), service, **extra))
    scheds = []
    for i, s in enumerate(doc["schedulers"]):
        lam = s["lambda"] if "lambda" in s else s["lam"]
        extra = {k: float(s[k]) for k in ("bits", "compute_demand") if k in s}
        scheds.append(SchedulerSpec(s.get("id", i), float(lam), **extra))
    if doc.get("links") is None:
        links = default_links(len(scheds), len(nodes))
    else:
        links = tuple(LinkSpec(int(l["scheduler"]), int(l["node"]),
                               float(l.get("delay", 0.0)), float(l.get("bandwidth", 1.0)))
                      for l in doc["links"])
    consts = CostConstants(**{k: float(v) for k, v in doc.get("constants", {}).items()})
    return GridConfig(tuple(nodes), tuple(scheds), links, consts, doc.get("name", name))


def config_to_dict(config: GridConfig) -> dict:
    return {
        "name": config.name,
        "nodes": [
            {"id": nd.id, "mu": nd.mu, "service": nd.service.to_dict(),
             **{k: getattr(nd, k) for k in _NODE_FIELDS}}
            for nd in config.nodes
        ],
        "schedulers": [
            {"id": s.id, "lambda": s.lam, "bits": s.bits, "compute_demand": s.compute_demand}
            for s in config.schedulers
        ],
        "links": [dataclasses.asdict(l) for l in config.links],
        "constants": dataclasses.asdict(config.constants),
    }


def load_scenario(path) -> GridConfig:
    """Load a scenario JSON from a path, or by bare name from the bundled set."""
    p = Path(path)
    if not p.exists():
        bundled = resources.files("gridlb") / "scenarios" / f"{p.stem}.json"
        if not bundled.is_file():
            raise FileNotFoundError(path)
        return config_from_dict(json.loads(bundled.read_text()), p.stem)
    return config_from_dict(json.loads(p.read_text()), p.stem)


def bundled_scenarios() -> list[str]:
    root = resources.files("gridlb") / "scenarios"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".json"))
