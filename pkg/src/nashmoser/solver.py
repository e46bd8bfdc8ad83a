"""Nash-Moser iteration with the doubly exponential smoothing schedule.

    x_0 = 0,  z_p = y - phi(x_p),  theta_p = 2^(tau^p),
    dx_p = S_{theta_p} L(x_p) sum_l (S_{theta_p}(1 - phi'(x_p) L(x_p)))^l z_p,
    x_{p+1} = x_p + dx_p.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .graded_space import GradedElement, seminorm, smooth
from .neumann import DEFAULT_MAX_TERMS, DEFAULT_TOL, NeumannDivergence, neumann_sum
from .problem_api import OutsideDomain, ProblemConstants, TameProblem

log = logging.getLogger(__name__)

__all__ = [
    "DerivedExponents",
    "ExponentDerivationError",
    "IterationState",
    "IterationTrace",
    "ScheduleParams",
    "SolveConfig",
    "SolveResult",
    "calibrate_delta",
    "derive_exponents",
    "schedule",
    "solve",
    "step",
]

RESIDUAL_FLOOR = 1e-14


class ExponentDerivationError(ValueError):
    pass


class DegenerateExponentWarning(UserWarning):
    """mu = 0: the residual bound guarantees no decay."""


@dataclass(frozen=True)
class ScheduleParams:
    lam: float = 1.0
    tau: float | None = None

    def __post_init__(self):
        if self.tau is None:
            object.__setattr__(self, "tau", (self.lam + 2.0) / 2.0)
        if not 1.0 <= self.lam < self.tau < 2.0:
            raise ValueError(f"need 1 <= lambda < tau < 2, got lambda={self.lam}, tau={self.tau}")

    @classmethod
    def for_constants(cls, constants: ProblemConstants, tau: float | None = None) -> ScheduleParams:
        return cls(lam=constants.lam, tau=tau)


def schedule(p: int, params: ScheduleParams) -> float:
    """``theta_p = 2^(tau^p)``."""
    if p < 0:
        raise ValueError("p must be >= 0")
    return 2.0 ** (params.tau ** p)


@dataclass(frozen=True)
class DerivedExponents:
    lam: float
    tau: float
    d: float
    m: float
    mu: float
    s: float
    s0: float
    delta: float

    def L(self, n: float) -> float:
        """Growth exponent of ``|x_p|_n`` in ``theta_p``."""
        lam, tau, d, m = self.lam, self.tau, self.d, self.m
        return (n / lam) * (lam - 1) / (tau - 1) + (d + lam) / (lam * (tau - 1)) + m / (tau - 1)

    L_of = L

    def margin_a(self) -> float:
        """``s - d - m - L(s0)``; at least ``mu tau`` by construction."""
        return self.s - self.d - self.m - self.L(self.s0)

    def margin_b(self) -> float:
        """``s0 - d - m - L(s0)``."""
        return self.s0 - self.d - self.m - self.L(self.s0)

    def to_json(self) -> dict:
        return {"lambda": self.lam, "tau": self.tau, "d": self.d, "m": self.m, "mu": self.mu,
                "s": self.s, "s0": self.s0, "delta": self.delta,
                "L_s0": self.L(self.s0), "L_d": self.L(self.d)}


def summability_delta(tau: float, rate: float, terms: int = 200) -> float:
    """``min(1, (sum_j theta_j^-rate)^-1)``."""
    if rate <= 0:
        return 0.0
    total = 0.0
    for j in range(terms):
        logt = math.log(2.0) * tau ** j
        term = math.exp(-rate * logt) if rate * logt < 700 else 0.0
        total += term
        if term < 1e-300:
            break
    if total == 0.0:
        # every term underflowed: the sum is far below 1
        return 1.0
    return min(1.0, 1.0 / total)


def derive_exponents(constants: ProblemConstants, params: ScheduleParams) -> DerivedExponents:
    """Exponents ``mu``, ``s``, ``s0 = lambda s + d`` and the initial ``delta``.

    ``s`` is the smallest real with ``s - d - m - L(lambda s + d) >= mu tau``.
    Since L is affine the constraint reads ``s (tau - lambda)/(tau - 1) >= rhs``.
    """
    lam, tau, d, m = params.lam, params.tau, constants.d, constants.m
    if abs(lam - constants.lam) > 1e-15:
        raise ExponentDerivationError(f"schedule lambda {lam} differs from problem lambda {constants.lam}")
    if not lam < tau < 2:
        raise ExponentDerivationError("exponent derivation failed: need lambda < tau < 2")
    mu = (2 + tau) / (2 - tau) * (d + m)
    slope = (tau - lam) / (tau - 1)
    # d + d(lam-1)/(lam(tau-1)) + (d+lam)/(lam(tau-1)) collapses to d + (d+1)/(tau-1)
    const = d + (d + 1) / (tau - 1) + m * tau / (tau - 1)
    if not slope > 0:
        raise ExponentDerivationError("exponent derivation failed: s-coefficient is not positive")
    s = (mu * tau + const) / slope
    # "for any s >= d"
    s = max(s, d)
    s0 = lam * s + d
    if mu == 0:
        warnings.warn("mu = 0 (d = m = 0): no residual decay is guaranteed", DegenerateExponentWarning, stacklevel=2)
        delta = 1.0
    else:
        delta = summability_delta(tau, mu - d - m)
    return DerivedExponents(lam=lam, tau=tau, d=d, m=m, mu=mu, s=s, s0=s0, delta=delta)


# ---------------------------------------------------------------------------
# iteration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterationState:
    p: int
    x: GradedElement
    z: GradedElement
    theta: float
    dx: GradedElement | None = None
    neumann_terms: int = 0


@dataclass
class SolveConfig:
    residual_tol: float = 1e-10
    max_iter: int = 30
    neumann_tol: float = DEFAULT_TOL
    neumann_max_terms: int = DEFAULT_MAX_TERMS
    n_grid: tuple[float, ...] = ()
    delta: float | None = None
    allow_outside: bool = False
    stagnation_window: int = 3


def step(problem: TameProblem, state: IterationState, y: GradedElement, params: ScheduleParams,
         exps: DerivedExponents | None = None, cfg: SolveConfig | None = None) -> IterationState:
    """One iteration; returns the next state with ``dx`` set on it.

    The returned state's ``dx``/``neumann_terms`` describe the step that
    produced it.  Raises :class:`NeumannDivergence` or ``OutsideDomain``
    ("left U").
    """
    cfg = cfg or SolveConfig()
    problem.check_domain(state.x)
    theta = state.theta
    res = neumann_sum(problem, state.x, theta, state.z, cfg.neumann_tol, cfg.neumann_max_terms)
    dx = smooth(problem.approx_inverse(state.x, res.sum), theta)
    x_next = state.x + dx
    problem.check_domain(x_next, "left U")
    z_next = y - problem.apply(x_next)
    return IterationState(p=state.p + 1, x=x_next, z=z_next, theta=schedule(state.p + 1, params),
                          dx=dx, neumann_terms=res.terms_used)


@dataclass
class IterationTrace:
    """Per-step seminorm record of one solve."""

    n_grid: tuple[float, ...]
    d: float
    s0: float
    y_norms: dict[str, float] = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list)
    status: str = "running"
    message: str = ""
    truncation_order: int = 0

    def columns(self) -> list[str]:
        cols = ["p", "theta", "x_d", "x_s0", "z_d", "z_s0", "dx_d"]
        cols += [f"dx_n{n:g}" for n in self.n_grid]
        cols += [f"x_n{n:g}" for n in self.n_grid]
        cols += ["neumann_terms"]
        return cols

    def record(self, state: IterationState) -> None:
        if self.rows and state.p <= self.rows[-1]["p"]:
            raise ValueError("trace rows must be strictly increasing in p")
        self.rows.append({
            "p": state.p, "theta": state.theta,
            "x_d": seminorm(state.x, self.d), "x_s0": seminorm(state.x, self.s0),
            "z_d": seminorm(state.z, self.d), "z_s0": seminorm(state.z, self.s0),
            "dx_d": math.nan, **{f"dx_n{n:g}": math.nan for n in self.n_grid},
            **{f"x_n{n:g}": seminorm(state.x, n) for n in self.n_grid},
            "neumann_terms": 0,
        })

    def attach_step(self, nxt: IterationState) -> None:
        """Record on the previous row the step ``dx`` that led to ``nxt``."""
        row = self.rows[-1]
        row["dx_d"] = seminorm(nxt.dx, self.d)
        for n in self.n_grid:
            row[f"dx_n{n:g}"] = seminorm(nxt.dx, n)
        row["neumann_terms"] = nxt.neumann_terms

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)


@dataclass
class SolveResult:
    solution: GradedElement
    trace: IterationTrace
    status: str
    message: str = ""
    exps: DerivedExponents | None = None

    @property
    def ok(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return self.trace.rows[-1]["p"] if self.trace.rows else 0

    @property
    def final_residual(self) -> float:
        return self.trace.rows[-1]["z_d"] if self.trace.rows else math.nan

    def summary(self) -> dict:
        return {"status": self.status, "message": self.message, "iterations": self.iterations,
                "final_residual": self.final_residual,
                "derived_exponents": self.exps.to_json() if self.exps else None}


def solve(problem: TameProblem, y: GradedElement, cfg: SolveConfig | None = None,
          params: ScheduleParams | None = None, exps: DerivedExponents | None = None) -> SolveResult:
    """Run the iteration from ``x_0 = 0`` until ``|z_p|_d < residual_tol``.

    Other stopping states: ``max_iter``, ``ceiling`` (theta_p > 2(N+1), where
    smoothing is inert), ``stagnation``, ``left U``, ``Neumann divergence``,
    ``outside V`` (``|y|_{s0} >= delta`` without ``allow_outside``).
    """
    cfg = cfg or SolveConfig()
    params = params or ScheduleParams.for_constants(problem.constants)
    if exps is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateExponentWarning)
            exps = derive_exponents(problem.constants, params)
    d = problem.constants.d
    N = problem.N
    trace = IterationTrace(n_grid=tuple(cfg.n_grid), d=d, s0=exps.s0, truncation_order=N)
    trace.y_norms = {f"{n:g}": seminorm(y, n) for n in sorted({d, exps.s0, *cfg.n_grid})}
    delta = cfg.delta if cfg.delta is not None else exps.delta
    x0 = GradedElement.zeros(N)

    def done(state, status, message=""):
        trace.status, trace.message = status, message
        return SolveResult(state.x, trace, status, message, exps)

    state = IterationState(p=0, x=x0, z=y - problem.apply(x0), theta=schedule(0, params))
    trace.record(state)
    y_s0 = seminorm(y, exps.s0)
    if not y_s0 < delta and not y.is_zero():
        if not cfg.allow_outside:
            return done(state, "outside V", f"|y|_s0 = {y_s0:.6g} >= delta = {delta:.6g}")
        warnings.warn(f"|y|_s0 = {y_s0:.3g} >= delta = {delta:.3g}; continuing outside V", stacklevel=2)

    ceiling = 2.0 * (N + 1)
    best, since_best = math.inf, 0
    while True:
        zd = trace.rows[-1]["z_d"]
        if zd < cfg.residual_tol:
            return done(state, "converged")
        if zd < best:
            best, since_best = zd, 0
        else:
            since_best += 1
            if since_best >= cfg.stagnation_window:
                return done(state, "stagnation", f"residual not decreased over {cfg.stagnation_window} steps")
        if state.p >= cfg.max_iter:
            return done(state, "max_iter", f"residual {zd:.3e} after {state.p} iterations")
        if state.theta > ceiling:
            return done(state, "ceiling", f"theta_p = {state.theta:.4g} > 2(N+1) = {ceiling:g}")
        try:
            nxt = step(problem, state, y, params, exps, cfg)
        except OutsideDomain as exc:
            return done(state, "left U", str(exc))
        except NeumannDivergence as exc:
            return done(state, "Neumann divergence", str(exc))
        trace.attach_step(nxt)
        state = replace(nxt)
        trace.record(state)
        log.debug("p=%d theta=%.4g |z|_d=%.3e", state.p, state.theta, trace.rows[-1]["z_d"])


def max_domain_norm(result: SolveResult) -> float:
    return float(np.max(result.trace.column("x_d")))


def calibrate_delta(
    problem: TameProblem,
    direction: GradedElement,
    cfg: SolveConfig | None = None,
    params: ScheduleParams | None = None,
    start: float | None = None,
    rel_tol: float = 1e-3,
    max_expand: int = 200,
    safety: float = 0.9,
) -> float:
    """Largest ``|y|_{s0}`` along ``t * direction`` for which the solve converges
    without leaving U, found by bracketing and bisection in log scale.

    The returned value is the good end of the final bracket times ``safety``.
    """
    cfg = replace(cfg or SolveConfig(), allow_outside=True, delta=math.inf)
    params = params or ScheduleParams.for_constants(problem.constants)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        exps = derive_exponents(problem.constants, params)
    unit = direction / seminorm(direction, exps.s0)
    start = exps.delta if start is None else start

    def good(t: float) -> bool:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = solve(problem, unit * t, cfg, params, exps)
        return res.ok and max_domain_norm(res) < 1.0

    lo, hi = None, None
    t = start
    if good(t):
        lo = t
        for _ in range(max_expand):
            t *= 2.0
            if good(t):
                lo = t
            else:
                hi = t
                break
        else:
            return lo * safety
    else:
        hi = t
        for _ in range(max_expand):
            t /= 2.0
            if good(t):
                lo = t
                break
            hi = t
        else:
            return 0.0
    while hi / lo - 1.0 > rel_tol:
        mid = math.sqrt(lo * hi)
        if good(mid):
            lo = mid
        else:
            hi = mid
    return lo * safety
