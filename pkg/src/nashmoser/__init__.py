"""Smoothed Newton iteration with tame estimates on a truncated Fourier scale."""

from __future__ import annotations

from .graded_space import DegenerateInput, GradedElement, random_element, rough, seminorm, smooth
from .neumann import NeumannDivergence, neumann_sum
from .problem_api import OutsideDomain, ProblemConstants, StructuralViolation, TameProblem, estimate_condition
from .problems import DivisorFloorViolated, make_problem
from .solver import DerivedExponents, ScheduleParams, SolveConfig, calibrate_delta, derive_exponents, solve

__all__ = [
    "DegenerateInput",
    "DerivedExponents",
    "DivisorFloorViolated",
    "GradedElement",
    "NeumannDivergence",
    "OutsideDomain",
    "ProblemConstants",
    "ScheduleParams",
    "SolveConfig",
    "StructuralViolation",
    "TameProblem",
    "calibrate_delta",
    "derive_exponents",
    "estimate_condition",
    "make_problem",
    "neumann_sum",
    "random_element",
    "rough",
    "seminorm",
    "smooth",
    "solve",
]
