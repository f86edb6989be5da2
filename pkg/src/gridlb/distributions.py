"""Service-time distributions: moments, sampling, and a quadrature cross-check.

The Bounded Pareto mean uses the normalizer ``1 - (k/p)**alpha``.  Some
printed versions of the mean formula drop the ``1 -``; that variant is kept
behind ``literal=True`` for comparison only, since it does not reproduce the
published moment tables (it overshoots by two orders of magnitude).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import NonPositiveRate, SingularShape

SHAPE_EPS = 1e-12


@dataclass(frozen=True)
class BoundedParetoParams:
    k: float
    p_max: float
    shape: float

    def __post_init__(self):
        if not (0 < self.k < self.p_max):
            raise ValueError(f"need 0 < k < p_max, got k={self.k}, p_max={self.p_max}")
        if self.shape <= 0:
            raise ValueError(f"shape must be positive, got {self.shape}")
        if abs(self.shape - 1) < SHAPE_EPS or abs(self.shape - 2) < SHAPE_EPS:
            raise SingularShape(f"shape {self.shape} is singular for the moment formulas")

    def _norm(self) -> float:
        a = self.shape
        return self.k**a / (1.0 - (self.k / self.p_max) ** a)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        a = self.shape
        out = a * self._norm() * x ** (-a - 1)
        return np.where((x >= self.k) & (x <= self.p_max), out, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.k, self.p_max)
        a = self.shape
        return (1.0 - (self.k / x) ** a) / (1.0 - (self.k / self.p_max) ** a)


@dataclass(frozen=True)
class ServiceDistribution:
    """First and second moment of a node's service time.

    ``second_moment`` is E[S^2], which is what the Pollaczek-Khinchine
    waiting-time term needs.
    """

    kind: str
    mean: float
    second_moment: float
    params: BoundedParetoParams | None = None

    @classmethod
    def exponential(cls, mu: float) -> "ServiceDistribution":
        m1, m2 = exponential_moments(mu)
        return cls("exponential", m1, m2)

    @classmethod
    def bounded_pareto(cls, k: float, p_max: float, shape: float) -> "ServiceDistribution":
        params = BoundedParetoParams(k, p_max, shape)
        m1, m2 = bounded_pareto_moments(params)
        return cls("bounded_pareto", m1, m2, params)

    @property
    def rate(self) -> float:
        return 1.0 / self.mean

    def sampler(self, rng: np.random.Generator):
        """Return ``draw(size) -> ndarray`` of service times using ``rng``."""
        if self.kind == "exponential":
            return lambda size: rng.exponential(self.mean, size)
        if self.kind == "bounded_pareto":
            params = self.params
            return lambda size: bounded_pareto_sample(params, rng.random(size))
        raise ValueError(f"cannot sample distribution kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "bounded_pareto":
            p = self.params
            return {"kind": "bounded_pareto", "k": p.k, "p_max": p.p_max, "shape": p.shape}
        return {"kind": self.kind}


def exponential_moments(mu: float) -> tuple[float, float]:
    if not mu > 0:
        raise NonPositiveRate(f"service rate must be positive, got {mu}")
    mean = 1.0 / mu
    return mean, 2.0 * mean * mean


def bounded_pareto_moments(params: BoundedParetoParams, literal: bool = False) -> tuple[float, float]:
    k, p, a = params.k, params.p_max, params.shape
    if literal:
        norm = k**a / (k / p) ** a
    else:
        norm = k**a / (1.0 - (k / p) ** a)
    mean = a / (a - 1.0) * norm * (k ** (1.0 - a) - p ** (1.0 - a))
    second = a / (2.0 - a) * norm * (p ** (2.0 - a) - k ** (2.0 - a))
    return mean, second


def bounded_pareto_sample(params: BoundedParetoParams, uniform):
    """Inverse-CDF transform; ``uniform`` in [0, 1) maps onto [k, p_max]."""
    u = np.asarray(uniform, dtype=float)
    k, p, a = params.k, params.p_max, params.shape
    x = k / (1.0 - u * (1.0 - (k / p) ** a)) ** (1.0 / a)
    x = np.clip(x, k, p)
    return float(x) if x.ndim == 0 else x


def numeric_moment_oracle(params: BoundedParetoParams, order: int) -> float:
    """Adaptive quadrature of x**order * f(x) over [k, p_max]."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    k, p, a = params.k, params.p_max, params.shape
    norm = a * k**a / (1.0 - (k / p) ** a)

    def integrand(x):
        return norm * x ** (order - a - 1.0)

    # geometric breakpoints keep the heavy left end well resolved
    points = np.geomspace(k, p, 12)[1:-1] if p / k > 10 else None
    val, err = integrate.quad(integrand, k, p, points=points, epsabs=0.0, epsrel=1e-12, limit=500)
    if err > 1e-8 * abs(val):
        raise ArithmeticError(f"quadrature error estimate {err:.3g} too large")
    return val


def describe(dist: ServiceDistribution) -> str:
    return f"{dist.kind}: mean={dist.mean:.6g} second_moment={dist.second_moment:.6g}"

