"""Fits of iteration traces against the growth/decay bounds of the scheme.

Every fit uses only the *usable* rows of a trace: rows with
``theta_p <= N + 1`` (beyond that the cutoff keeps every mode) and, for
fits of a residual or a step, values above :data:`RESIDUAL_FLOOR`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .graded_space import DegenerateInput
from .solver import RESIDUAL_FLOOR, DerivedExponents, IterationTrace

__all__ = [
    "FitReport",
    "InsufficientRows",
    "Tolerances",
    "check_double_exponential",
    "check_lemma1",
    "check_lemma2",
    "check_lemma3_domain",
    "check_lemma4",
    "check_lemma5_and_cauchy",
    "check_theorem_bound",
    "usable_rows",
]


class InsufficientRows(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    growth_slope: float = 0.05
    decay_slack: float = 0.25
    theorem_trend: float = 0.2
    lemma4_growth: float = 10.0
    min_rows: int = 3


DEFAULT_TOL = Tolerances()


@dataclass
class FitReport:
    quantity: str
    predicted: float
    measured: float
    passed: bool
    rows_used: int
    details: dict = field(default_factory=dict)
    flagged: str = ""

    def to_json(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


def usable_rows(trace: IterationTrace, column: str | None = None, floor: float = RESIDUAL_FLOOR) -> np.ndarray:
    """Boolean mask of rows with ``theta <= N+1`` and, if given, ``column >= floor``."""
    theta = trace.column("theta")
    mask = theta <= trace.truncation_order + 1
    if column is not None:
        vals = trace.column(column)
        mask &= np.isfinite(vals) & (vals >= floor)
    return mask


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(x, y, 1)[0])


def _need(n: int, tol: Tolerances, what: str) -> None:
    if n < tol.min_rows:
        raise InsufficientRows(f"insufficient rows for {what}: {n} < {tol.min_rows}")


def check_lemma1(trace: IterationTrace, n: float, exps: DerivedExponents, tol: Tolerances = DEFAULT_TOL) -> FitReport:
    """Boundedness of ``|x_p|_n / (theta_p^L(n) |y|_n)``: log-log slope <= 0.05."""
    y_n = trace.y_norms.get(f"{n:g}")
    if y_n is None:
        raise KeyError(f"|y|_{n:g} was not recorded in the trace")
    if y_n == 0:
        raise DegenerateInput("degenerate input: |y|_n = 0")
    col = f"x_n{n:g}"
    mask = usable_rows(trace, col, floor=1e-300)
    theta = trace.column("theta")[mask]
    ratio = trace.column(col)[mask] / (theta ** exps.L(n) * y_n)
    _need(len(theta), tol, "growth fit")
    slope = _slope(np.log(theta), np.log(ratio))
    return FitReport("growth_L", predicted=tol.growth_slope, measured=slope, passed=slope <= tol.growth_slope,
                     rows_used=len(theta), details={"n": n, "L": exps.L(n), "K_hat": float(ratio.max())})


def check_lemma2(trace: IterationTrace, exps: DerivedExponents, tol: Tolerances = DEFAULT_TOL) -> FitReport:
    """Residual decay: ``-slope(log |z_p|_d vs log theta_p) >= (1 - slack) mu``."""
    mask = usable_rows(trace, "z_d")
    theta, z = trace.column("theta")[mask], trace.column("z_d")[mask]
    details = {"margin_a": exps.margin_a(), "margin_b": exps.margin_b(), "mu_tau": exps.mu * exps.tau}
    if exps.mu == 0:
        return FitReport("residual_mu", 0.0, math.nan, True, int(mask.sum()), details, flagged="degenerate mu = 0")
    _need(len(theta), tol, "residual decay fit")
    mu_hat = -_slope(np.log(theta), np.log(z))
    y_s0 = trace.y_norms.get(f"{exps.s0:g}", math.nan)
    details["M_hat"] = float(np.max(z * theta ** exps.mu) / y_s0) if y_s0 else math.nan
    return FitReport("residual_mu", predicted=exps.mu, measured=mu_hat,
                     passed=mu_hat >= (1 - tol.decay_slack) * exps.mu, rows_used=len(theta), details=details)


def check_double_exponential(trace: IterationTrace, tau: float, tol: Tolerances = DEFAULT_TOL) -> FitReport:
    """Slope of ``log log(1/|z_p|_d)`` against p within ``[0.5, 1.5] log tau``.

    Only rows with ``|z_p|_d < 1`` enter (log log is undefined otherwise).
    """
    mask = usable_rows(trace, "z_d") & (trace.column("z_d") < 1.0)
    p, z = trace.column("p")[mask], trace.column("z_d")[mask]
    _need(len(p), tol, "double-exponential fit")
    slope = _slope(p, np.log(np.log(1.0 / z)))
    lt = math.log(tau)
    return FitReport("residual_double_exp", predicted=lt, measured=slope,
                     passed=0.5 * lt <= slope <= 1.5 * lt, rows_used=len(p))


def check_lemma4(trace: IterationTrace, a_grid: Sequence[float] | None = None, exps: DerivedExponents | None = None,
                 tol: Tolerances = DEFAULT_TOL) -> FitReport:
    """Decay at rate a: partial suprema of ``|z_p|_d theta_p^a`` grow by at most 10x per row."""
    if a_grid is None:
        if exps is None:
            raise ValueError("need a_grid or exps")
        k = exps.d + exps.m
        a_grid = (exps.mu, exps.mu + k, exps.mu + 2 * k)
    mask = usable_rows(trace, "z_d")
    theta, z = trace.column("theta")[mask], trace.column("z_d")[mask]
    _need(len(theta), tol, "rate-a decay fit")
    per_a, worst, ok = {}, 0.0, True
    for a in a_grid:
        sup = np.maximum.accumulate(z * theta ** a)
        growth = float(np.max(sup[1:] / sup[:-1]))
        per_a[f"{a:g}"] = {"constant": float(sup[-1]), "max_growth": growth}
        worst = max(worst, growth)
        ok &= growth <= tol.lemma4_growth
    return FitReport("residual_a", predicted=tol.lemma4_growth, measured=worst, passed=bool(ok),
                     rows_used=len(theta), details={"per_a": per_a, "y_index": "d"})


def check_lemma5_and_cauchy(trace: IterationTrace, n_grid: Sequence[float], b: float,
                            tol: Tolerances = DEFAULT_TOL) -> FitReport:
    """Decay of ``|dx_p|_n`` at rate >= 0.75 b and decreasing tails ``sum_{j>=p} |dx_j|_n``."""
    ok, details, rows, measured = True, {}, 0, math.inf
    flagged = ""
    theta_all = trace.column("theta")
    base = usable_rows(trace)
    for n in n_grid:
        col = f"dx_n{n:g}"
        dx = trace.column(col)
        have = np.isfinite(dx)
        tails = np.cumsum(dx[have][::-1])[::-1]
        cauchy = bool(np.all(np.diff(tails) <= 0))
        mask = base & have & (dx >= RESIDUAL_FLOOR)
        if int(np.count_nonzero(dx[have] > 0)) <= 1:
            details[f"{n:g}"] = {"decay": math.nan, "cauchy": cauchy}
            flagged = "single nonzero step: vacuous"
            ok &= cauchy
            continue
        if mask.sum() < tol.min_rows:
            raise InsufficientRows(f"insufficient rows for step decay fit at n={n:g}")
        rate = -_slope(np.log(theta_all[mask]), np.log(dx[mask]))
        details[f"{n:g}"] = {"decay": rate, "cauchy": cauchy}
        rows = max(rows, int(mask.sum()))
        measured = min(measured, rate)
        ok &= cauchy and rate >= (1 - tol.decay_slack) * b
    return FitReport("all_index_b", predicted=b, measured=measured, passed=bool(ok), rows_used=rows,
                     details=details, flagged=flagged)


def check_theorem_bound(pairs: Sequence[tuple[float, float]], tol: Tolerances = DEFAULT_TOL,
                        min_instances: int = 5) -> FitReport:
    """``|psi(y)|_d <= C |y|_s0``: no trend of the ratio as ``|y|_s0 -> 0``.

    ``pairs`` holds ``(|y|_s0, |psi(y)|_d)`` per solved instance.
    """
    arr = np.array([(a, b) for a, b in pairs if a > 0], dtype=float).reshape(-1, 2)
    if len(pairs) and not len(arr):
        raise DegenerateInput("degenerate input: all y are zero")
    if len(arr) < min_instances:
        raise InsufficientRows(f"insufficient instances: {len(arr)} < {min_instances}")
    ys, psi = arr[:, 0], arr[:, 1]
    ratio = psi / ys
    span = math.log10(ys.max() / ys.min())
    slope = _slope(np.log(ys), np.log(ratio))
    return FitReport("theorem_bound", predicted=0.0, measured=float(ratio.max()),
                     passed=bool(np.all(np.isfinite(ratio)) and abs(slope) <= tol.theorem_trend),
                     rows_used=len(arr), details={"trend_slope": slope, "decades": span, "C_hat": float(ratio.max())},
                     flagged="" if span >= 2 - 1e-9 else "span below two decades")


def check_lemma3_domain(traces: Sequence[IterationTrace], d_index: float | None = None, delta: float = math.inf) -> FitReport:
    """Every recorded ``|x_p|_d < 1`` over traces with ``|y|_s0 < delta``.

    Also reports ``max sum_p |dx_p|_d / |y|_s0`` for comparison with the
    summability constant.
    """
    violations, worst_sum, used = 0, 0.0, 0
    for tr in traces:
        if d_index is not None and tr.d != d_index:
            raise ValueError(f"trace records |x_p| at index {tr.d:g}, expected {d_index:g}")
        y_s0 = tr.y_norms.get(f"{tr.s0:g}", 0.0)
        if not y_s0 < delta:
            continue
        used += 1
        violations += int(np.sum(tr.column("x_d") >= 1.0))
        dx = tr.column("dx_d")
        if y_s0 > 0:
            worst_sum = max(worst_sum, float(np.nansum(dx)) / y_s0)
    return FitReport("delta_domain", predicted=1.0, measured=float(violations), passed=violations == 0,
                     rows_used=used, details={"max_sum_dx_over_y_s0": worst_sum, "delta": delta})


def predicted_summability(exps: DerivedExponents) -> float:
    """``sum_j theta_j^-(mu - d - m)``."""
    rate = exps.mu - exps.d - exps.m
    return sum(2.0 ** (-rate * exps.tau ** j) for j in range(60))


def cauchy_flags(trace: IterationTrace, n: float) -> np.ndarray:
    dx = trace.column(f"dx_n{n:g}")
    dx = dx[np.isfinite(dx)]
    return np.cumsum(dx[::-1])[::-1]
