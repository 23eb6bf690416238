"""Finite-difference lab for the regularized parabolic p-Laplacian on the Heisenberg group."""
from .calculus import GridSpec
from .estimates import CutoffSpec, EstimateReport, make_cutoff, run_reports
from .flux import FluxModel, LiftedFluxModel, check_structure, lift, p_laplacian, regularize
from .geometry import CylinderSpec, HeisenbergPoint, gauge_distance, group_mul, koranyi_gauge
from .moser import build_sequences, check_iteration, lipschitz_bound_report, measure_ladder
from .solver import ProblemSpec, Solution, solve

__version__ = "0.1.0"

__all__ = [
    "CutoffSpec",
    "CylinderSpec",
    "EstimateReport",
    "FluxModel",
    "GridSpec",
    "HeisenbergPoint",
    "LiftedFluxModel",
    "ProblemSpec",
    "Solution",
    "build_sequences",
    "check_iteration",
    "check_structure",
    "gauge_distance",
    "group_mul",
    "koranyi_gauge",
    "lift",
    "lipschitz_bound_report",
    "make_cutoff",
    "measure_ladder",
    "p_laplacian",
    "regularize",
    "run_reports",
    "solve",
]
