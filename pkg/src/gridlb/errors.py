"""Exception types raised across the package."""


class GridError(Exception):
    """Base class for all solver errors."""


class Violation:
    __slots__ = ("code", "message")

    def __init__(self, code, message):
        self.code = code
        self.message = message

    def __repr__(self):
        return f"Violation({self.code!r}, {self.message!r})"

    def __str__(self):
        return f"{self.code}: {self.message}"


class ValidationError(GridError):
    """A scenario failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))

    @property
    def codes(self):
        return {v.code for v in self.violations}


class NonPositiveRate(GridError, ValueError):
    pass


class SingularShape(GridError, ValueError):
    """Bounded Pareto shape of exactly 1 or 2 makes the moment formulas singular."""


class UnstableNode(GridError):
    """Offered load at a node reached the stability limit."""

    def __init__(self, node, load):
        self.node = node
        self.load = load
        super().__init__(f"node {node} offered load {load:.12g} >= 1")


class NonPositiveCapacity(GridError, ValueError):
    pass


class NoRoot(GridError):
    pass


class Infeasible(GridError):
    pass


class NotConverged(GridError):
    def __init__(self, result):
        self.result = result
        super().__init__(
            f"no convergence after {result.iterations} iterations "
            f"(last change {result.change_trace[-1]:.3g})"
        )


class ShapeMismatch(GridError, ValueError):
    pass


class EmptyInput(GridError, ValueError):
    pass
