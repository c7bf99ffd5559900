"""Exponential-utility indifference pricing via optimal intertemporal risk allocation."""

from riskalloc.errors import ConvergenceError, DomainError, ParseError, ShapeError
from riskalloc.market import RateCurve
from riskalloc.tree import AdaptedProcess, EventTree, death_time_tree
from riskalloc.exp_pricing import (
    RiskAversionSchedule,
    indifference_price_tree,
    l_recursion,
    m_process,
    optimal_allocation,
    selling_position_allocation,
    utility_value,
)
from riskalloc.mortality import (
    ClaimProfile,
    MortalityCurve,
    PremiumReport,
    h_recursion,
    indifference_premium,
    premium_allocation,
    premium_bounds,
    term_claim,
    tp1,
    tp2,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptedProcess",
    "ClaimProfile",
    "ConvergenceError",
    "DomainError",
    "EventTree",
    "MortalityCurve",
    "ParseError",
    "PremiumReport",
    "RateCurve",
    "RiskAversionSchedule",
    "ShapeError",
    "death_time_tree",
    "h_recursion",
    "indifference_premium",
    "indifference_price_tree",
    "l_recursion",
    "m_process",
    "optimal_allocation",
    "premium_allocation",
    "premium_bounds",
    "selling_position_allocation",
    "term_claim",
    "tp1",
    "tp2",
    "utility_value",
]
