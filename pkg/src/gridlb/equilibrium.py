"""Best responses and best-response dynamics for the load-balancing game.

Each scheduler minimises its per-task power cost given the other
schedulers' rows.  The objective is separable and convex in the scheduler's
own fractions, so the KKT conditions give the minimiser in closed form up to
a scalar multiplier ``alpha``::

    a_ij = (u_ji - s_j(alpha)) / lambda_i
    s_j(alpha) = sqrt(c_p p_j2 h2_j u_ji) / sqrt(h_j (c_p p_j2 h2_j + 2 h_j (alpha - c_p p_j1 h_j)))

where ``u_ji`` is the capacity of node j left over by the other schedulers.
Node j receives a positive share only when ``alpha`` exceeds its threshold
``t_j`` (the marginal cost of the first unit of load), so nodes are ranked by
``t_j`` and the active set is the longest prefix for which the threshold
of its last member still leaves room for ``lambda_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costs import per_task_power_costs
from .errors import Infeasible, NoRoot, NonPositiveCapacity, ShapeMismatch, UnstableNode
from .model import STABILITY_MARGIN, GridConfig, check_strategy

BISECT_MAX_ITER = 200
ALPHA_RTOL = 1e-12
DEFAULT_THRESHOLD = 1e-4
DEFAULT_MAX_ITER = 1000


@dataclass(frozen=True)
class BestResponse:
    row: np.ndarray
    alpha: float
    active_count: int
    ordering: tuple[int, ...]

    @property
    def active(self) -> tuple[int, ...]:
        return self.ordering[: self.active_count]


@dataclass
class EquilibriumResult:
    strategy: np.ndarray
    iterations: int
    converged: bool
    change_trace: list[float]
    per_scheduler_cost: np.ndarray
    alphas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    threshold: float = DEFAULT_THRESHOLD


# capacities and thresholds

def available_capacity(j, i, strategy, config: GridConfig) -> float:
    a = np.asarray(strategy, dtype=float)
    others = config.lam @ a[:, j] - config.lam[i] * a[i, j]
    return float(config.mu[j] - others)


def available_capacities(i, strategy, config: GridConfig) -> np.ndarray:
    a = np.asarray(strategy, dtype=float)
    others = config.lam @ a - config.lam[i] * a[i]
    return config.mu - others


def _thresholds(u, config, idx=slice(None)):
    c = config.constants.c_p
    h, h2, p1, p2 = config.h[idx], config.h2[idx], config.p1[idx], config.p2[idx]
    return c * p1 * h - c * p2 * h2 / (2 * h) + c * p2 * h2 / (2 * h * h * u)


def potential_power_cost(j, i, u_ji, config: GridConfig) -> float:
    """Marginal per-task cost of node ``j`` at zero allocation, given capacity ``u_ji``."""
    if not u_ji > 0:
        raise NonPositiveCapacity(f"node {j} has no capacity left for scheduler {i} ({u_ji})")
    return float(_thresholds(np.array([u_ji]), config, [j])[0])


def marginal_cost(j, a_ij, lam_i, u_ji, config: GridConfig) -> float:
    """Derivative of the per-task power cost with respect to ``a_ij``."""
    c = config.constants.c_p
    h, h2 = config.h[j], config.h2[j]
    p1, p2 = config.p1[j], config.p2[j]
    gap = u_ji - a_ij * lam_i
    return float(c * p1 * h + c * p2 * (h2 * u_ji / (2 * h * h * gap * gap) - h2 / (2 * h)))


def _shares(alpha, u, idx, config):
    """s_j(alpha) for the nodes in ``idx``; inf where alpha is below the node's floor."""
    c = config.constants.c_p
    h, h2 = config.h[idx], config.h2[idx]
    p1, p2 = config.p1[idx], config.p2[idx]
    num = c * p2 * h2
    inner = num + 2 * h * (alpha - c * p1 * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.sqrt(u) * np.sqrt(num / (h * inner))
    return np.where(inner > 0, s, np.inf)


# the multiplier

def _bisect(f, lo, hi):
    """Root of a decreasing function bracketed by f(lo) >= 0 >= f(hi)."""
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def _bracket_above(f, lo):
    step = max(abs(lo), 1e-12)
    hi = lo + step
    while f(hi) > 0:
        step *= 2.0
        hi = lo + step
        if not math.isfinite(hi):
            raise NoRoot("could not bracket the multiplier")
    return hi


def solve_alpha(active, i, capacities, config: GridConfig) -> float:
    """Multiplier for which the active nodes absorb exactly ``lambda_i``.

    ``active`` indexes nodes, ``capacities`` is the full vector u_ji.
    """
    active = np.asarray(active, dtype=int)
    if active.size == 0:
        raise NoRoot("empty active set")
    u = np.asarray(capacities, dtype=float)[active]
    lam = config.lam[i]
    target = u.sum() - lam
    if not (np.all(u > 0) and target > 0):
        raise NoRoot(f"active capacity {u.sum():.6g} cannot absorb lambda={lam:.6g}")

    def excess(alpha):
        return float(np.sum(_shares(alpha, u, active, config))) - target

    lo = float(np.max(_thresholds(u, config, active)))
    if excess(lo) < 0:
        raise NoRoot("active set too large: the highest threshold already overfills it")
    hi = _bracket_above(excess, lo)
    return _bisect(excess, lo, hi)


# active set

def _eq24_count(order, u, lam, config):
    """Largest prefix length d whose last threshold still leaves the prefix short of lam."""
    best = 1
    for d in range(1, len(order) + 1):
        prefix = order[:d]
        t_d = _thresholds(u[prefix[-1:]], config, prefix[-1:])[0]
        rhs = np.sum(_shares(t_d, u[prefix], prefix, config))
        if u[prefix].sum() - lam <= rhs:
            best = d
    return best


def active_set_by_elimination(i, capacities, config: GridConfig) -> tuple[int, ...]:
    """Alternative active-set rule: solve on all nodes, drop negative shares, repeat."""
    u_all = np.asarray(capacities, dtype=float)
    lam = config.lam[i]
    active = [j for j in range(config.m) if u_all[j] > 0]
    while True:
        alpha = _alpha_unrestricted(np.array(active), u_all, lam, config)
        x = u_all[active] - _shares(alpha, u_all[active], np.array(active), config)
        keep = [j for j, v in zip(active, x) if v >= 0]
        if len(keep) == len(active):
            return tuple(sorted(active))
        active = keep


def _alpha_unrestricted(active, u_all, lam, config):
    # like solve_alpha but the unclipped shares may go negative, so search the whole real line
    c = config.constants.c_p
    u = u_all[active]
    h, h2, p1, p2 = (config.h[active], config.h2[active], config.p1[active], config.p2[active])
    floor = float(np.max(c * p1 * h - c * p2 * h2 / (2 * h)))
    target = u.sum() - lam

    def excess(alpha):
        return float(np.sum(_shares(alpha, u, active, config))) - target

    lo = floor + 1e-300
    step = max(abs(floor), 1e-12) * 1e-12
    while not excess(lo) > 0:
        lo = floor + step
        step *= 0.5
        if step == 0:
            break
    hi = _bracket_above(excess, lo)
    return _bisect(excess, lo, hi)


# best response

def best_response(i, strategy, config: GridConfig) -> BestResponse:
    u = available_capacities(i, strategy, config)
    lam = config.lam[i]
    usable = np.flatnonzero(u > 0)
    if usable.size == 0 or u[usable].sum() <= lam:
        raise Infeasible(f"scheduler {i}: available capacity {u[usable].sum():.6g} <= lambda {lam:.6g}")
    t = _thresholds(u[usable], config, usable)
    order = usable[np.argsort(t, kind="stable")]
    ordering = tuple(int(j) for j in order) + tuple(j for j in range(config.m) if u[j] <= 0)

    if np.any(config.p2[usable] <= 0):
        return _best_response_linear(i, u, order, ordering, config)

    d = _eq24_count(order, u, lam, config)
    active = order[:d]
    alpha = solve_alpha(active, i, u, config)
    row = np.zeros(config.m)
    row[active] = (u[active] - _shares(alpha, u[active], active, config)) / lam
    row = np.clip(row, 0.0, None)
    row /= row.sum()
    return BestResponse(row, alpha, d, ordering)


def _best_response_linear(i, u, order, ordering, config):
    """Water-fill when some nodes have no waiting power (p_j2 = 0).

    Such nodes have a constant marginal cost, so they are either unused,
    filled to the stability limit, or (at the optimal multiplier) take
    whatever is left over.
    """
    lam = config.lam[i]
    c = config.constants.c_p
    lin = [int(j) for j in order if config.p2[j] <= 0]
    cont = np.array([int(j) for j in order if config.p2[j] > 0], dtype=int)
    cap = {j: u[j] - 2 * STABILITY_MARGIN * config.mu[j] for j in lin}
    t_lin = {j: c * config.p1[j] * config.h[j] for j in lin}

    def cont_fill(alpha):
        if cont.size == 0:
            return np.zeros(0)
        return np.clip(u[cont] - _shares(alpha, u[cont], cont, config), 0.0, None)

    row = np.zeros(config.m)
    filled = 0.0
    alpha = None
    for tau in sorted(set(t_lin.values())):
        group = [j for j in lin if t_lin[j] == tau]
        below = cont_fill(tau).sum() + filled
        if below >= lam:
            break
        group_cap = sum(max(cap[j], 0.0) for j in group)
        if below + group_cap >= lam:
            alpha = tau
            rest = lam - below
            for j in group:
                row[j] = rest * max(cap[j], 0.0) / group_cap
            break
        for j in group:
            row[j] = max(cap[j], 0.0)
        filled += group_cap

    if alpha is None:
        if cont.size == 0:
            raise Infeasible(f"scheduler {i}: linear nodes cannot absorb lambda {lam:.6g}")

        def shortfall(a_):
            return lam - filled - cont_fill(a_).sum()

        lo = float(np.min(_thresholds(u[cont], config, cont)))
        alpha = _bisect(shortfall, lo, _bracket_above(shortfall, lo))
    row[cont] = cont_fill(alpha)
    row = row / lam
    row /= row.sum()
    active = sum(1 for j in ordering if row[j] > 0)
    return BestResponse(row, float(alpha), active, ordering)


# dynamics

def convergence_metric(prev, nxt) -> float:
    """Relative L1 change between successive strategy matrices."""
    prev = np.asarray(prev, dtype=float)
    nxt = np.asarray(nxt, dtype=float)
    if prev.shape != nxt.shape:
        raise ShapeMismatch(f"{prev.shape} vs {nxt.shape}")
    denom = max(float(np.abs(prev).sum()), float(prev.shape[0]))
    return float(np.abs(nxt - prev).sum() / denom)


def nash_iterate(config: GridConfig, initial=None, threshold: float = DEFAULT_THRESHOLD,
                 max_iter: int = DEFAULT_MAX_ITER, jacobi: bool = False) -> EquilibriumResult:
    """Round-robin best responses until the relative change drops below ``threshold``.

    Starts from the all-zero strategy unless ``initial`` is given.  Returns a
    result with ``converged=False`` when ``max_iter`` rounds are exhausted.
    """
    a = np.zeros((config.n, config.m)) if initial is None else np.array(initial, dtype=float)
    if a.shape != (config.n, config.m):
        raise ShapeMismatch(f"initial strategy shape {a.shape} != {(config.n, config.m)}")
    alphas = np.zeros(config.n)
    trace: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        prev = a.copy()
        if jacobi:
            responses = [best_response(i, prev, config) for i in range(config.n)]
            for i, br in enumerate(responses):
                a[i] = br.row
                alphas[i] = br.alpha
            bad = [v for v in check_strategy(a, config) if v.code == "UnstableNode"]
            if bad:
                raise UnstableNode(-1, float("nan")) from None
        else:
            for i in range(config.n):
                br = best_response(i, a, config)
                a[i] = br.row
                alphas[i] = br.alpha
        trace.append(convergence_metric(prev, a))
        if trace[-1] < threshold:
            converged = True
            break
    return EquilibriumResult(a, it, converged, trace, per_task_power_costs(a, config),
                             alphas.copy(), threshold)


def average_allocation(config: GridConfig) -> np.ndarray:
    """Equal split of every scheduler's stream across all nodes."""
    share = config.lam.sum() / config.m
    load = config.h * share
    over = np.flatnonzero(load > 1 - STABILITY_MARGIN)
    if over.size:
        raise Infeasible(f"equal split overloads node(s) {over.tolist()} "
                         f"(per-node rate {share:.6g})")
    return np.full((config.n, config.m), 1.0 / config.m)


# certificates

def kkt_residuals(i, strategy, config: GridConfig, br: BestResponse | None = None):
    """Check the KKT conditions of scheduler ``i``'s best response at ``strategy``.

    Returns ``(active_rel_err, inactive_slack)``: the largest relative gap
    between an active node's marginal cost and alpha, and the smallest
    ``t_j - alpha`` over inactive nodes (``inf`` when every node is active).
    """
    if br is None:
        br = best_response(i, strategy, config)
    u = available_capacities(i, strategy, config)
    lam = config.lam[i]
    active = set(br.active)
    rel = 0.0
    slack = math.inf
    for j in range(config.m):
        if u[j] <= 0:
            continue
        if j in active and br.row[j] > 0:
            mc = marginal_cost(j, br.row[j], lam, u[j], config)
            rel = max(rel, abs(mc - br.alpha) / abs(br.alpha))
        else:
            slack = min(slack, potential_power_cost(j, i, u[j], config) - br.alpha)
    return rel, slack


def is_fixed_point(result: EquilibriumResult, config: GridConfig) -> bool:
    """One more full round of best responses moves the strategy by less than the threshold."""
    a = result.strategy.copy()
    for i in range(config.n):
        a[i] = best_response(i, a, config).row
    return convergence_metric(result.strategy, a) < result.threshold
