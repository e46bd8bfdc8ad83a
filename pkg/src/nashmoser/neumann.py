"""Smoothed Neumann series ``sum_l (S_theta A)^l z`` with ``A = 1 - phi'(x) L(x)``."""

from __future__ import annotations

from dataclasses import dataclass

from .graded_space import GradedElement, DegenerateInput, seminorm, smooth
from .problem_api import TameProblem

__all__ = ["NeumannDivergence", "NeumannResult", "neumann_bound_ratio", "neumann_sum"]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_TERMS = 200
GROWTH_WINDOW = 5


class NeumannDivergence(ArithmeticError):
    """Term norms kept growing: ``S_theta A`` has spectral radius >= 1 here."""

    def __init__(self, growth_ratio: float, terms: int):
        super().__init__(f"Neumann divergence: term norms grew for {GROWTH_WINDOW} consecutive terms "
                         f"(last growth ratio {growth_ratio:.4g}, after {terms} terms)")
        self.growth_ratio = growth_ratio
        self.terms = terms


@dataclass(frozen=True)
class NeumannResult:
    sum: GradedElement
    terms_used: int
    final_term_norm: float
    converged: bool


def defect_operator(problem: TameProblem, x: GradedElement, w: GradedElement) -> GradedElement:
    """``A w = w - phi'(x) L(x) w``."""
    return w - problem.derivative(x, problem.approx_inverse(x, w))


def neumann_sum(
    problem: TameProblem,
    x: GradedElement,
    theta: float,
    z: GradedElement,
    tol: float = DEFAULT_TOL,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> NeumannResult:
    """Accumulate ``t_0 = z, t_{j+1} = S_theta A t_j`` until the d-seminorm of
    the newest term drops below ``tol * max(1, |sum|_d)``."""
    if tol <= 0 or max_terms < 1:
        raise ValueError("need tol > 0 and max_terms >= 1")
    problem.check_domain(x)
    d = problem.constants.d
    term, total = z, z
    tnorm = seminorm(z, d)
    terms = 1
    if tnorm <= tol * max(1.0, tnorm):
        return NeumannResult(total, terms, tnorm, True)
    growing = 0
    while True:
        nxt = smooth(defect_operator(problem, x, term), theta)
        nnorm = seminorm(nxt, d)
        # a negligible term is not added and does not count as used
        if nnorm <= tol * max(1.0, seminorm(total, d)):
            return NeumannResult(total, terms, nnorm, True)
        if terms >= max_terms:
            return NeumannResult(total, terms, tnorm, False)
        growing = growing + 1 if nnorm > tnorm else 0
        if growing >= GROWTH_WINDOW:
            raise NeumannDivergence(nnorm / tnorm, terms + 1)
        term, tnorm = nxt, nnorm
        total = total + term
        terms += 1


def neumann_bound_ratio(
    problem: TameProblem,
    x: GradedElement,
    theta: float,
    z: GradedElement,
    n: float,
    tol: float = DEFAULT_TOL,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> float:
    """Observed constant ``C(n)`` in ``|sum|_n <= C(n) theta^m (|x|_n |z|_d + |z|_n)``."""
    if z.is_zero():
        raise DegenerateInput("degenerate input: z = 0")
    c = problem.constants
    res = neumann_sum(problem, x, theta, z, tol, max_terms)
    denom = theta ** c.m * (seminorm(x, n) * seminorm(z, c.d) + seminorm(z, n))
    return seminorm(res.sum, n) / denom
