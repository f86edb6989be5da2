"""Cost-based non-cooperative load balancing for computational grids."""

from .costs import CostBreakdown, per_task_power_cost, scheduler_cost
from .distributions import BoundedParetoParams, ServiceDistribution
from .equilibrium import average_allocation, best_response, nash_iterate
from .model import GridConfig, load_scenario, scale_to_load, system_load, validate

__version__ = "0.1.0"

__all__ = [
    "BoundedParetoParams", "CostBreakdown", "GridConfig", "ServiceDistribution",
    "average_allocation", "best_response", "load_scenario", "nash_iterate",
    "per_task_power_cost", "scale_to_load", "scheduler_cost", "system_load", "validate",
]
