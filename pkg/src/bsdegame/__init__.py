"""Feedback Nash equilibria for linear-quadratic games driven by backward
SDEs, under symmetric, nested and independent observation patterns, with
Monte-Carlo and brute-force verification."""

__version__ = "0.1.0"

from .model import (CoefficientSet, ConditioningMode, InformationPattern,
                    TerminalCondition, TimeGrid, ValidatedModel,
                    conditional_terminal, sample_coefficients, validate)
from .scenario import Scenario, load_scenario, parse_scenario
from .riccati import RiccatiSolution, solve
from .stochastic import BrownianPathBatch, sample_brownian
from .equilibrium import EquilibriumRealization, reconstruct

__all__ = [
    "__version__",
    "CoefficientSet", "ConditioningMode", "InformationPattern",
    "TerminalCondition", "TimeGrid", "ValidatedModel",
    "conditional_terminal", "sample_coefficients", "validate",
    "Scenario", "load_scenario", "parse_scenario",
    "RiccatiSolution", "solve",
    "BrownianPathBatch", "sample_brownian",
    "EquilibriumRealization", "reconstruct",
]
