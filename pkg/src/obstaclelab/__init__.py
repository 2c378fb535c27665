"""Finite-difference laboratory for degenerate fully nonlinear obstacle problems."""

from .grid import GridDomain, GridField, ProblemSpec, build_domain, sample, sup_over_ball, sup_over_sphere
from .operators import EllipticOperator, degenerate_wrapper, evaluate, pucci_minus, pucci_plus
from .oracles import ComparisonXi, RadialSharpness, beta_of
from .solver import PenaltyProfile, SolverConfig, SolverReport, solve
from .geometry import FreeBoundaryReport, extract_free_boundary
from .renormalization import NormalizationMap, ScalingMap

__version__ = "0.1.0"

__all__ = [
    "ComparisonXi",
    "EllipticOperator",
    "FreeBoundaryReport",
    "GridDomain",
    "GridField",
    "NormalizationMap",
    "PenaltyProfile",
    "ProblemSpec",
    "RadialSharpness",
    "ScalingMap",
    "SolverConfig",
    "SolverReport",
    "beta_of",
    "build_domain",
    "degenerate_wrapper",
    "evaluate",
    "extract_free_boundary",
    "pucci_minus",
    "pucci_plus",
    "sample",
    "solve",
    "sup_over_ball",
    "sup_over_sphere",
]
