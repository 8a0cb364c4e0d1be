"""Weak KAM solutions, Lax-Oleinik semigroups and barrier functions on grids."""
from .action import MinimizingArc, action, discrete_action, minimize_arcs
from .analysis import (LipschitzReport, MatherApprox, Pseudograph, lipschitz_graph_check,
                       mather_set_approx, pseudograph, semiconcavity_constant)
from .barrier import BarrierComparison, BarrierFunction, barrier, barrier_comparison_check
from .grid import GridFunction, grid_nodes
from .laxoleinik import (LaxOleinik, WeakKamPair, WeakKamSolution, conjugate_pair, lax_oleinik,
                         operator_for, solve_weak_kam, weak_kam_pair)

__all__ = [
    "MinimizingArc", "action", "discrete_action", "minimize_arcs",
    "LipschitzReport", "MatherApprox", "Pseudograph", "lipschitz_graph_check",
    "mather_set_approx", "pseudograph", "semiconcavity_constant",
    "BarrierComparison", "BarrierFunction", "barrier", "barrier_comparison_check",
    "GridFunction", "grid_nodes",
    "LaxOleinik", "WeakKamPair", "WeakKamSolution", "conjugate_pair", "lax_oleinik",
    "operator_for", "solve_weak_kam", "weak_kam_pair",
]
