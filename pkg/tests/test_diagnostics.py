from __future__ import annotations

import math

import numpy as np
import pytest

from nashmoser.diagnostics import (
    InsufficientRows,
    check_double_exponential,
    check_lemma1,
    check_lemma2,
    check_lemma3_domain,
    check_lemma4,
    check_lemma5_and_cauchy,
    check_theorem_bound,
    usable_rows,
)
from nashmoser.graded_space import DegenerateInput, GradedElement, random_element, scaled_to, seminorm
from nashmoser.problem_api import ProblemConstants
from nashmoser.problems import make_P0, make_P2
from nashmoser.solver import DegenerateExponentWarning, IterationTrace, ScheduleParams, SolveConfig, derive_exponents, solve


def synthetic(thetas, z, N=10, x=None):
    tr = IterationTrace(n_grid=(1.0,), d=1.0, s0=3.0, truncation_order=N, y_norms={"1": 1.0, "3": 1.0})
    for p, (t, zz) in enumerate(zip(thetas, z)):
        xv = 0.5 if x is None else x[p]
        tr.rows.append({"p": p, "theta": t, "x_d": xv, "x_s0": xv, "z_d": zz, "z_s0": zz, "dx_d": math.nan,
                        "dx_n1": math.nan, "x_n1": xv, "neumann_terms": 1})
    return tr


def test_usable_rows_filter():
    tr = synthetic([2, 4, 8, 11, 12, 40], [1e-1, 1e-3, 1e-15, 1e-5, 1e-6, 1e-7])
    np.testing.assert_array_equal(usable_rows(tr), [True, True, True, True, False, False])
    np.testing.assert_array_equal(usable_rows(tr, "z_d"), [True, True, False, True, False, False])


def test_lemma1_p0_pass(rng):
    p = make_P0(32)
    y = scaled_to(random_element(32, rng, decay=2.0), 0, 0.5)
    res = solve(p, y, SolveConfig(n_grid=(0.0, 1.0), residual_tol=1e-300, stagnation_window=100))
    exps = res.exps
    rep = check_lemma1(res.trace, 0.0, exps)
    assert rep.passed and rep.measured < 0


def test_lemma1_zero_y_degenerate():
    res = solve(make_P0(8), GradedElement.zeros(8), SolveConfig(n_grid=(0.0,)))
    with pytest.raises(DegenerateInput):
        check_lemma1(res.trace, 0.0, res.exps)


def test_lemma2_degenerate_mu_flagged():
    with pytest.warns(DegenerateExponentWarning):
        exps = derive_exponents(ProblemConstants(d=0.0, l=0.0, lam=1.0, m=0.0), ScheduleParams())
    tr = synthetic([2, 3, 5], [1e-1, 1e-2, 1e-3])
    rep = check_lemma2(tr, exps)
    assert rep.passed and rep.flagged


def test_lemma2_needs_rows():
    exps = derive_exponents(ProblemConstants(d=1.0, l=1.0, lam=1.0, m=0.0), ScheduleParams())
    with pytest.raises(InsufficientRows):
        check_lemma2(synthetic([2, 3], [1e-1, 1e-2]), exps)


def test_double_exponential_on_ideal_sequence():
    tau = 1.5
    z = [math.exp(-(tau ** p)) for p in range(5)]
    rep = check_double_exponential(synthetic([2, 3, 4, 5, 6], z), tau)
    assert rep.passed and rep.measured == pytest.approx(math.log(tau), rel=1e-10)


def test_lemma4_zero_rate_always_passes():
    tr = synthetic([2, 3, 5, 9], [1e-1, 1e-3, 1e-4, 1e-9])
    assert check_lemma4(tr, [0.0]).passed


def test_lemma4_detects_growth():
    tr = synthetic([2, 3, 5, 9], [1e-1, 1e-1, 1e-1, 1e-1])
    assert not check_lemma4(tr, [10.0]).passed


def test_lemma5_single_step_vacuous():
    tr = synthetic([2, 3, 5], [1e-1, 1e-20, 1e-20])
    tr.rows[0]["dx_n1"] = 0.3
    tr.rows[1]["dx_n1"] = 0.0
    rep = check_lemma5_and_cauchy(tr, [1.0], 5.0)
    assert rep.passed and "vacuous" in rep.flagged


def test_theorem_bound_p0(rng):
    pairs = []
    for a in np.logspace(-3, -1, 6):
        y = scaled_to(random_element(16, rng, decay=3.0, band=3), 2, a)
        res = solve(make_P0(16), y, SolveConfig(delta=1.0))
        pairs.append((seminorm(y, 2), seminorm(res.solution, 0)))
    rep = check_theorem_bound(pairs)
    assert rep.passed and rep.measured <= 1.0


def test_theorem_bound_errors():
    with pytest.raises(DegenerateInput):
        check_theorem_bound([(0.0, 0.0)] * 5)
    with pytest.raises(InsufficientRows):
        check_theorem_bound([(1.0, 1.0)] * 3)


def test_lemma3_zero_trace_inside():
    res = solve(make_P0(8), GradedElement.zeros(8))
    assert check_lemma3_domain([res.trace], 0.0, 1.0).passed


def test_lemma3_detects_violation():
    tr = synthetic([2, 3, 5], [1e-1, 1e-2, 1e-3], x=[0.0, 0.5, 1.2])
    tr.y_norms["3"] = 0.1
    assert not check_lemma3_domain([tr], 1.0, 1.0).passed


def test_reports_deterministic():
    p = make_P2(64)
    y = scaled_to(random_element(64, np.random.default_rng(4), decay=33, mean_zero=True), 2, 1e-3)
    cfg = SolveConfig(delta=math.inf, n_grid=(2.0,))
    a = check_lemma2(solve(p, y, cfg).trace, derive_exponents(p.constants, ScheduleParams())).to_json()
    b = check_lemma2(solve(p, y, cfg).trace, derive_exponents(p.constants, ScheduleParams())).to_json()
    assert repr(a) == repr(b)
