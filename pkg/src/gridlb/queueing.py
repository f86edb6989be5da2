"""Discrete-event M/G/1 simulation used to cross-check the analytic waiting time."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .distributions import ServiceDistribution
from .errors import UnstableNode
from .model import STABILITY_MARGIN, NodeSpec

ARRIVAL, DEPARTURE = 0, 1  # heap tie-break: arrivals first
N_BATCHES = 32
_CHUNK = 65536


@dataclass(frozen=True)
class DesConfig:
    node: NodeSpec
    arrival_streams: tuple[tuple[float, int], ...]
    horizon: int = 1_000_000
    warmup: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.horizon // 10)
        if not self.horizon > self.warmup >= 0:
            raise ValueError(f"need horizon > warmup >= 0 (got {self.horizon}, {self.warmup})")
        if any(r < 0 for r, _ in self.arrival_streams):
            raise ValueError("arrival rates must be nonnegative")
        load = self.total_rate * self.node.service.mean
        if load >= 1 - STABILITY_MARGIN:
            raise UnstableNode(self.node.id, load)

    @property
    def total_rate(self) -> float:
        return float(sum(r for r, _ in self.arrival_streams))


@dataclass(frozen=True)
class DesStats:
    tasks: int
    mean_wait: float
    mean_service: float
    mean_sojourn: float
    utilization: float
    ci95_wait: float
    mean_in_system: float
    per_stream_wait: dict = field(default_factory=dict)


def pk_mean_wait(total_rate: float, service: ServiceDistribution) -> float:
    """Pollaczek-Khinchine mean queueing delay of an M/G/1 node."""
    load = total_rate * service.mean
    if load >= 1 - STABILITY_MARGIN:
        raise UnstableNode(-1, load)
    return total_rate * service.second_moment / (2.0 * (1.0 - load))


class _Stream:
    """Chunked random draws so the event loop stays in plain Python floats."""

    def __init__(self, draw):
        self._draw = draw
        self._buf = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._draw(_CHUNK).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v


def simulate_node(cfg: DesConfig) -> DesStats:
    """FIFO single-server simulation with merged Poisson arrival streams."""
    streams = [(r, sid) for r, sid in cfg.arrival_streams if r > 0]
    if not streams:
        return DesStats(0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, {})

    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(len(streams) + 1)
    service_rng = np.random.default_rng(children[0])
    service = _Stream(cfg.node.service.sampler(service_rng))
    gaps = []
    for (rate, _), child in zip(streams, children[1:]):
        rng = np.random.default_rng(child)
        gaps.append(_Stream(lambda size, rng=rng, scale=1.0 / rate: rng.exponential(scale, size)))

    horizon, warmup = cfg.horizon, cfg.warmup
    events: list = []
    for k, g in enumerate(gaps):
        heapq.heappush(events, (g.next(), ARRIVAL, k))

    waits = np.empty(horizon)
    services = np.empty(horizon)
    origin = np.empty(horizon, dtype=np.int32)
    queue: list[tuple[int, float]] = []  # FIFO of (task index, arrival time)
    qhead = 0
    busy = False
    arrived = 0
    now = 0.0
    # measurement window starts at the first post-warmup arrival
    t0 = None
    area = 0.0
    busy_time = 0.0
    in_system = 0
    last = 0.0

    while events:
        t, kind, k = heapq.heappop(events)
        if kind == ARRIVAL and arrived >= horizon:
            continue
        if t0 is not None:
            area += in_system * (t - last)
            if busy:
                busy_time += t - last
        last = t
        now = t
        if kind == ARRIVAL:
            idx = arrived
            arrived += 1
            if idx == warmup:
                t0 = now
            origin[idx] = k
            in_system += 1
            if arrived < horizon:
                heapq.heappush(events, (now + gaps[k].next(), ARRIVAL, k))
            if busy:
                queue.append((idx, now))
            else:
                s = service.next()
                waits[idx] = 0.0
                services[idx] = s
                busy = True
                heapq.heappush(events, (now + s, DEPARTURE, -1))
        else:
            in_system -= 1
            if qhead < len(queue):
                idx, t_arr = queue[qhead]
                qhead += 1
                s = service.next()
                waits[idx] = now - t_arr
                services[idx] = s
                heapq.heappush(events, (now + s, DEPARTURE, -1))
            else:
                busy = False
                if qhead > 4096:
                    del queue[:qhead]
                    qhead = 0

    w = waits[warmup:]
    s = services[warmup:]
    elapsed = now - t0 if t0 is not None else 0.0
    per_stream = {}
    for k, (_, sid) in enumerate(streams):
        mask = origin[warmup:] == k
        if mask.any():
            per_stream[sid] = float(w[mask].mean())
    return DesStats(
        tasks=int(w.size),
        mean_wait=float(w.mean()),
        mean_service=float(s.mean()),
        mean_sojourn=float((w + s).mean()),
        utilization=busy_time / elapsed if elapsed > 0 else 0.0,
        ci95_wait=batch_means_halfwidth(w),
        mean_in_system=area / elapsed if elapsed > 0 else 0.0,
        per_stream_wait=per_stream,
    )


def batch_means_halfwidth(x, n_batches: int = N_BATCHES, level: float = 0.95) -> float:
    x = np.asarray(x, dtype=float)
    size = x.size // n_batches
    if size < 2:
        return math.inf
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    tcrit = stats.t.ppf(0.5 + level / 2, n_batches - 1)
    return float(tcrit * means.std(ddof=1) / math.sqrt(n_batches))


def node_streams(j: int, strategy, lam) -> tuple[tuple[float, int], ...]:
    """Arrival streams seen by node ``j`` under a strategy matrix."""
    a = np.asarray(strategy, dtype=float)
    return tuple((float(lam[i] * a[i, j]), i) for i in range(a.shape[0]))
