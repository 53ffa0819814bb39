"""Conjugate duality for convex stochastic optimization on finite scenario trees.

Every object is polyhedral, so values, dual objectives, consistent price
systems, superhedging costs and stopping bounds are finite linear programs.
"""
from .lp import LinearProgram, LPBuilder, LPSolution, Status, solve, verify
from .tree import (AdaptedProcess, ScenarioProcess, ScenarioTree, TreeError, conditional_expectation,
                   doob_martingale_part, expectation, is_martingale, martingale_projection, orthogonal_part,
                   random_tree)
from .polyhedral import (Polyhedron, PolyhedralCone, PolyhedralFunction, conjugate, partial_inf, polar_cone,
                         recession_cone, support_function)
from .duality import (GapReport, ShadowPriceProgram, StochasticProgram, TimeSeparableProgram, bolza_dual_value,
                      bolza_program, dual_objective, duality_gap, lagrangian_integrand, martingale_dual,
                      orthogonal_dual, shadow_price_bound, solve_primal)
from .market import (MarketModel, check_no_arbitrage, find_consistent_price_system, ftap_equivalence, is_consistent,
                     optimal_consumption, recession_linearity_check, superhedge_cost, superhedges)
from .stopping import StoppingProblem, rogers_bound, snell_envelope, solve_stopping_lp

__version__ = "0.1.0"
