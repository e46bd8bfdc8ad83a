from __future__ import annotations

import numpy as np
import pytest

from nashmoser.graded_space import GradedElement
from nashmoser.problem_api import (
    ProblemConstants,
    SamplerConfig,
    StructuralViolation,
    TameProblem,
    _ratio,
    estimate_condition,
)
from nashmoser.problems import make_P0, make_P1, make_P2

FAST = SamplerConfig(samples=30, seed=1)


def test_constants_validation():
    with pytest.raises(ValueError):
        ProblemConstants(d=-1.0, l=0.0, lam=1.0, m=0.0)
    with pytest.raises(ValueError):
        ProblemConstants(d=0.0, l=0.0, lam=2.0, m=0.0)


def test_identity_constants():
    p = make_P0(16)
    for cid in range(1, 8):
        rep = estimate_condition(p, cid, FAST)
        assert rep.estimated_constant <= 1 + 1e-10
    assert estimate_condition(p, 3, FAST).estimated_constant <= 1e-10
    assert estimate_condition(p, 4, FAST).estimated_constant <= 1e-10


def test_condition_reports_are_deterministic():
    p = make_P1(16, 0.1)
    a = estimate_condition(p, 2, FAST).to_json()
    b = estimate_condition(p, 2, FAST).to_json()
    assert a == b


def test_worst_case_is_serialized():
    rep = estimate_condition(make_P1(8, 0.1), 1, FAST)
    x = GradedElement.from_json(rep.worst_case_input["x"])
    assert x.N == 8


def test_neumann_condition_reports_m_hat():
    rep = estimate_condition(make_P2(16), 7, FAST)
    assert abs(rep.extra["m_hat"]) < 0.2
    assert rep.extra["declared_m"] == 0.0


def test_defect_constant_linear_in_epsilon():
    vals = [estimate_condition(make_P2(32, eps), 4, FAST).estimated_constant for eps in (1e-4, 1e-3, 1e-2)]
    slope = np.polyfit(np.log([1e-4, 1e-3, 1e-2]), np.log(vals), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.2)


class _Broken(TameProblem):
    """phi(x) = x + 1 with phi(0) != 0: the tame bound fails at x = 0 scale."""

    name = "broken"

    def __init__(self):
        self.N = 4
        self.constants = ProblemConstants(d=0.0, l=0.0, lam=1.0, m=0.0)

    def apply(self, x):
        return x + GradedElement.mode(4, 0, 1.0)

    def derivative(self, x, v):
        return v

    def approx_inverse(self, x, y):
        return y


def test_structural_violation_on_zero_rhs():
    p = _Broken()
    with pytest.raises(StructuralViolation):
        _ratio(1, 0.0, 1.0, 0.0, 1.0)
    # ordinary sampling only sees x != 0 so the constant is merely large
    assert estimate_condition(p, 1, SamplerConfig(samples=10)).estimated_constant > 1


def test_unknown_condition():
    with pytest.raises(ValueError):
        estimate_condition(make_P0(4), 8, FAST)
