"""Problem interface and empirical checks of the tame hypotheses (1)-(7).

A concrete problem supplies ``apply`` (the map phi), ``derivative``
(phi'(x)v), ``approx_inverse`` (L(x)y) and its declared constants.  The
estimator samples inputs and reports the largest observed lhs/rhs ratio of
each hypothesis, which is the smallest constant consistent with the data.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .graded_space import GradedElement, random_element, scaled_to, seminorm

__all__ = [
    "ConditionReport",
    "OutsideDomain",
    "ProblemConstants",
    "SamplerConfig",
    "StructuralViolation",
    "TameProblem",
    "defect",
    "estimate_condition",
    "remainder",
]


class OutsideDomain(ValueError):
    """Input lies outside the domain ``U = {|x|_l < 1}``."""

    def __init__(self, norm: float, index: float, what: str = "outside U"):
        super().__init__(f"{what}: |x|_{index:g} = {norm:.6g} >= 1")
        self.norm = norm
        self.index = index


class StructuralViolation(ArithmeticError):
    """A hypothesis has zero right-hand side but a nonzero left-hand side."""

    def __init__(self, condition_id: int, n: float, lhs: float):
        super().__init__(f"condition violated structurally: ({condition_id}) at n={n:g}, lhs={lhs:.3e} with rhs=0")
        self.condition_id = condition_id


@dataclass(frozen=True)
class ProblemConstants:
    """Hypothesis parameters ``C1..C7, d, l, lambda, m`` of one problem instance."""

    C: tuple[float, ...] = (1.0,) * 7
    d: float = 0.0
    l: float = 0.0
    lam: float = 1.0
    m: float = 0.0

    def __post_init__(self):
        if len(self.C) != 7 or any(c <= 0 for c in self.C):
            raise ValueError("need seven positive constants C1..C7")
        if not 1.0 <= self.lam < 2.0:
            raise ValueError(f"lambda must lie in [1, 2), got {self.lam}")
        if min(self.d, self.l, self.m) < 0:
            raise ValueError("d, l and m must be nonnegative")

    def to_json(self) -> dict:
        out = asdict(self)
        out["C"] = list(self.C)
        return out


class TameProblem:
    """Base class for a map ``phi: E -> F`` with an approximate right inverse.

    Subclasses implement ``apply``, ``derivative`` and ``approx_inverse`` and
    set ``constants`` and ``N``.  ``mean_zero`` marks problems whose domain and
    codomain are the mean-zero subspace.
    """

    name = "abstract"
    mean_zero = False
    N: int
    constants: ProblemConstants

    @property
    def domain_index(self) -> float:
        return self.constants.l

    def apply(self, x: GradedElement) -> GradedElement:
        raise NotImplementedError

    def derivative(self, x: GradedElement, v: GradedElement) -> GradedElement:
        raise NotImplementedError

    def approx_inverse(self, x: GradedElement, y: GradedElement) -> GradedElement:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"id": self.name, "N": self.N, "constants": self.constants.to_json()}

    def check_domain(self, x: GradedElement, what: str = "outside U") -> float:
        norm = seminorm(x, self.domain_index)
        if not norm < 1.0:
            raise OutsideDomain(norm, self.domain_index, what)
        return norm

    def project(self, x: GradedElement) -> GradedElement:
        """Projection onto the problem's working subspace (identity by default)."""
        if not self.mean_zero or x[0] == 0:
            return x
        c = x.coeffs.copy()
        c[x.N] = 0.0
        return GradedElement(c, x.N)


def remainder(problem: TameProblem, x: GradedElement, v: GradedElement) -> GradedElement:
    """Taylor rest ``phi(x+v) - phi(x) - phi'(x)v``."""
    problem.check_domain(x)
    problem.check_domain(x + v)
    return problem.apply(x + v) - problem.apply(x) - problem.derivative(x, v)


def defect(problem: TameProblem, x: GradedElement, y: GradedElement) -> GradedElement:
    """Approximate-inverse defect ``(phi'(x) L(x) - I) y``."""
    problem.check_domain(x)
    return problem.derivative(x, problem.approx_inverse(x, y)) - y


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplerConfig:
    """Seeded sample suite for :func:`estimate_condition`.

    ``x_norm`` caps ``|x|_l`` (samples are drawn with ``|x|_l`` uniform in
    ``(0, x_norm]``); ``decay`` is the spectral decay ``r`` of the amplitude
    profile ``(1+|k|)^-r``.
    """

    samples: int = 200
    seed: int = 0
    n_grid: tuple[float, ...] = (0.0, 1.0, 2.0, 4.0, 8.0)
    decay: float = 3.0
    x_norm: float = 0.45
    theta_grid: tuple[float, ...] | None = None


@dataclass
class ConditionReport:
    condition_id: int
    estimated_constant: float
    sample_count: int
    worst_case_input: dict
    per_index: dict[str, float] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def _draw(problem: TameProblem, rng: np.random.Generator, cfg: SamplerConfig, scale: float) -> GradedElement:
    e = random_element(problem.N, rng, decay=cfg.decay, real=True, mean_zero=problem.mean_zero)
    return scaled_to(e, problem.domain_index, scale)


def _ratio(condition_id: int, n: float, lhs: float, rhs: float, ref: float = 0.0) -> float:
    if rhs == 0.0:
        # roundoff of size eps * |inputs| is not a violation
        if lhs > 1e-13 * max(ref, 1e-300):
            raise StructuralViolation(condition_id, n, lhs)
        return 0.0
    return lhs / rhs


def _samples(problem: TameProblem, cfg: SamplerConfig, seed_offset: int = 0):
    """Yield ``(x, u)`` pairs; ``u`` plays the role of v or y.

    Both are capped at ``x_norm`` in ``|.|_l`` so ``x + u`` stays in U when
    ``x_norm < 1/2``.
    """
    rng = np.random.default_rng([cfg.seed, seed_offset])
    for _ in range(cfg.samples):
        x = _draw(problem, rng, cfg, rng.uniform(0.0, 1.0) * cfg.x_norm)
        u = _draw(problem, rng, cfg, rng.uniform(0.05, 1.0) * cfg.x_norm)
        yield x, u


def _lhs_rhs(problem: TameProblem, cid: int, x: GradedElement, u: GradedElement, ns: Sequence[float]):
    c = problem.constants
    d, l, lam = c.d, c.l, c.lam
    sn = seminorm
    if cid == 1:
        out = problem.apply(x)
        return [(sn(out, n), sn(x, n)) for n in ns]
    if cid == 2:
        out = problem.derivative(x, u)
        return [(sn(out, n), sn(x, n) * sn(u, d) + sn(u, n)) for n in ns]
    if cid in (3, 4):
        out = defect(problem, x, u)
        rows = []
        for n in ns:
            base = sn(x, n) * sn(u, d) + sn(u, n)
            rows.append((sn(out, n), base * sn(x, n) if cid == 3 else base))
        return rows
    if cid == 5:
        out = problem.approx_inverse(x, u)
        return [(sn(out, n), sn(x, lam * n + d) * sn(u, d) + sn(u, lam * n + d)) for n in ns]
    if cid == 6:
        out = remainder(problem, x, u)
        return [(sn(out, n), sn(x, n) * sn(u, l) ** 2 + sn(u, l) * sn(u, n)) for n in ns]
    raise ValueError(f"unknown condition id {cid}")


def _worst(x: GradedElement, u: GradedElement, n: float, **kw) -> dict:
    return {"x": x.to_json(), "u": u.to_json(), "n": n, **kw}


def estimate_condition(problem: TameProblem, condition_id: int, cfg: SamplerConfig | None = None) -> ConditionReport:
    """Largest observed lhs/rhs ratio of hypothesis ``condition_id`` over the suite.

    For condition 7 the Neumann engine is run on a theta grid; besides the
    constant for the declared ``m`` the report carries ``m_hat``, the slope of
    log(max ratio at m=0) against log(theta).  For condition 5 the report also
    carries ``lambda_hat`` (see :func:`estimate_lambda`).
    """
    cfg = cfg or SamplerConfig()
    if condition_id == 7:
        return _estimate_neumann(problem, cfg)
    if condition_id not in range(1, 7):
        raise ValueError(f"condition id must be in 1..7, got {condition_id}")
    ns = tuple(float(n) for n in cfg.n_grid)
    per_index = {n: 0.0 for n in ns}
    worst = (0.0, None)
    for x, u in _samples(problem, cfg, condition_id):
        for n, (lhs, rhs) in zip(ns, _lhs_rhs(problem, condition_id, x, u, ns)):
            r = _ratio(condition_id, n, lhs, rhs, seminorm(x, n) + seminorm(u, n))
            if r > per_index[n]:
                per_index[n] = r
            if r > worst[0]:
                worst = (r, (x, u, n))
    report = ConditionReport(
        condition_id=condition_id,
        estimated_constant=float(max(per_index.values())),
        sample_count=cfg.samples,
        worst_case_input=_worst(*worst[1]) if worst[1] is not None else {},
        per_index={f"{n:g}": float(v) for n, v in per_index.items()},
    )
    if condition_id == 5:
        report.extra["lambda_hat"] = estimate_lambda(problem, cfg)
    return report


def estimate_lambda(problem: TameProblem, cfg: SamplerConfig, grid: Sequence[float] | None = None, tol: float = 0.05) -> float:
    """Smallest growth exponent ``lambda`` on a grid for which the per-index
    constants of the inverse-loss estimate show no upward trend in n.

    The trend is the least-squares slope of log C(n) against n.
    """
    grid = np.arange(1.0, 2.0, 0.05) if grid is None else np.asarray(grid)
    ns = np.array([n for n in cfg.n_grid], dtype=float)
    pairs = list(_samples(problem, cfg, 5))
    outs = [problem.approx_inverse(x, y) for x, y in pairs]
    d = problem.constants.d
    for lam in grid:
        consts = np.zeros(len(ns))
        for (x, y), out in zip(pairs, outs):
            for i, n in enumerate(ns):
                rhs = seminorm(x, lam * n + d) * seminorm(y, d) + seminorm(y, lam * n + d)
                consts[i] = max(consts[i], _ratio(5, n, seminorm(out, n), rhs))
        pos = consts > 0
        if pos.sum() < 2:
            return float(lam)
        slope = np.polyfit(ns[pos], np.log(consts[pos]), 1)[0]
        if slope <= tol:
            return float(lam)
    return float("inf")


def default_theta_grid(N: int) -> tuple[float, ...]:
    """``{2, 4, 8, ..., 2N}``."""
    out, t = [], 2.0
    while t <= 2 * N:
        out.append(t)
        t *= 2
    return tuple(out)


def _estimate_neumann(problem: TameProblem, cfg: SamplerConfig) -> ConditionReport:
    from .neumann import neumann_sum

    c = problem.constants
    thetas = cfg.theta_grid or default_theta_grid(problem.N)
    ns = tuple(float(n) for n in cfg.n_grid)
    per_index = {n: 0.0 for n in ns}
    per_theta = {}
    worst = (0.0, None)
    for theta in thetas:
        best_at_theta = 0.0
        for x, z in _samples(problem, cfg, 7):
            res = neumann_sum(problem, x, theta, z)
            for n in ns:
                base = seminorm(x, n) * seminorm(z, c.d) + seminorm(z, n)
                lhs = seminorm(res.sum, n)
                r0 = _ratio(7, n, lhs, base)
                best_at_theta = max(best_at_theta, r0)
                r = r0 / theta ** c.m
                if r > per_index[n]:
                    per_index[n] = r
                if r > worst[0]:
                    worst = (r, (x, z, n, theta))
        per_theta[f"{theta:g}"] = best_at_theta
    logs_t = np.log(np.array(thetas, dtype=float))
    vals = np.array(list(per_theta.values()))
    m_hat = float(np.polyfit(logs_t, np.log(vals), 1)[0]) if len(thetas) >= 2 and np.all(vals > 0) else 0.0
    wc = {}
    if worst[1] is not None:
        x, z, n, theta = worst[1]
        wc = _worst(x, z, n, theta=theta)
    return ConditionReport(
        condition_id=7,
        estimated_constant=float(max(per_index.values())),
        sample_count=cfg.samples * len(thetas),
        worst_case_input=wc,
        per_index={f"{n:g}": float(v) for n, v in per_index.items()},
        extra={"m_hat": m_hat, "declared_m": c.m, "ratio_by_theta": per_theta},
    )
