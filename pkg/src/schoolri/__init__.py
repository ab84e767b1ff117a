"""Equilibrium school choice under costly information acquisition.

Students learn about a preference shock at a cost proportional to mutual
information, then submit a rank-order list to either the Boston (immediate
acceptance) or the deferred acceptance mechanism.
"""

from .equilibrium import (
    Equilibrium,
    MultipleEquilibria,
    NoInteriorEquilibrium,
    solve,
    solve_complete_info,
    solve_interior,
    v_bounds_da,
)
from .info import best_response_da, logit_strategy, mutual_information
from .model import Capacities, MarketParams, Mechanism, boston_table, da_cutoffs, da_table

__version__ = "0.1.0"

__all__ = [
    "Capacities",
    "Equilibrium",
    "MarketParams",
    "Mechanism",
    "MultipleEquilibria",
    "NoInteriorEquilibrium",
    "best_response_da",
    "boston_table",
    "da_cutoffs",
    "da_table",
    "logit_strategy",
    "mutual_information",
    "solve",
    "solve_complete_info",
    "solve_interior",
    "v_bounds_da",
]
