"""Catalog of concrete problems.

P0  identity map.
P1  smooth contraction ``x + eps x^2`` with ``L = I``.
P2  small-divisor problem ``u(t+2 pi alpha) - u(t) + eps u^2`` on mean-zero
    functions, ``L`` the unperturbed cohomological solve.
P3  composition problem ``u(t+2 pi alpha) - u(t) + eps (sin(t+u) - sin t)``
    on mean-zero functions, ``L`` the inverse of the linearization at 0.

Functions live on the 2 pi-periodic torus, ``u(t) = sum_k c_k e^{ikt}``, so
the shift by ``2 pi alpha`` multiplies mode k by ``e^{2 pi i k alpha}``.
Nonlinear terms are evaluated on a 2x-padded grid and truncated back.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .graded_space import GradedElement
from .problem_api import ProblemConstants, SamplerConfig, TameProblem, estimate_lambda

__all__ = [
    "DivisorFloorViolated",
    "GOLDEN_MEAN",
    "LambdaOutOfRange",
    "divisor_floor",
    "make_P0",
    "make_P1",
    "make_P2",
    "make_P3",
    "make_problem",
]

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0
DEFAULT_DIVISOR_FLOOR = 1e-6


class DivisorFloorViolated(ValueError):
    pass


class LambdaOutOfRange(ValueError):
    pass


# ---------------------------------------------------------------------------
# spectral helpers
# ---------------------------------------------------------------------------

def grid_size(N: int, pad: int = 2) -> int:
    return pad * (2 * N + 1)


def to_grid(c: np.ndarray, M: int) -> np.ndarray:
    """Values ``sum_k c_k e^{ik t_j}`` at ``t_j = 2 pi j / M``."""
    N = (len(c) - 1) // 2
    buf = np.zeros(M, dtype=complex)
    ks = np.arange(-N, N + 1)
    buf[ks % M] = c
    return np.fft.ifft(buf) * M


def from_grid(u: np.ndarray, N: int) -> np.ndarray:
    """Coefficients ``|k| <= N`` of grid values (truncation of the spectrum)."""
    M = len(u)
    full = np.fft.fft(u) / M
    return full[np.arange(-N, N + 1) % M]


def grid_points(M: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(M) / M


def product(a: np.ndarray, b: np.ndarray, pad: int = 2) -> np.ndarray:
    """Truncated coefficients of the pointwise product (exact for pad >= 2)."""
    N = (len(a) - 1) // 2
    M = grid_size(N, pad)
    return from_grid(to_grid(a, M) * to_grid(b, M), N)


def divisors(N: int, alpha: float) -> np.ndarray:
    """``e^{2 pi i k alpha} - 1`` for ``k = -N..N``."""
    ks = np.arange(-N, N + 1)
    return np.exp(2j * np.pi * ks * alpha) - 1.0


def divisor_floor(N: int, alpha: float, d: float) -> float:
    """``min_{0<|k|<=N} |e^{2 pi i k alpha} - 1| (1+|k|)^d``."""
    ks = np.arange(-N, N + 1)
    nz = ks != 0
    return float(np.min(np.abs(divisors(N, alpha)[nz]) * (1.0 + np.abs(ks[nz])) ** d))


def _mean_free(c: np.ndarray) -> np.ndarray:
    N = (len(c) - 1) // 2
    out = c.copy()
    out[N] = 0.0
    return out


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

class IdentityProblem(TameProblem):
    name = "P0"

    def __init__(self, N: int):
        self.N = N
        self.constants = ProblemConstants(C=(1.0,) * 7, d=0.0, l=0.0, lam=1.0, m=0.0)

    def apply(self, x):
        return x

    def derivative(self, x, v):
        return v

    def approx_inverse(self, x, y):
        return y


class QuadraticContraction(TameProblem):
    """``phi(x) = x + eps Q(x)`` with ``Q(x) = x^2`` (pointwise square, truncated)."""

    name = "P1"

    def __init__(self, N: int, epsilon: float):
        self.N = N
        self.epsilon = float(epsilon)
        self.constants = ProblemConstants(C=(2.0, 2.0, 2.0, 2.0, 1.0, 2.0, 2.0), d=0.0, l=2.0, lam=1.0, m=0.0)

    def apply(self, x):
        return GradedElement(x.coeffs + self.epsilon * product(x.coeffs, x.coeffs), self.N)

    def derivative(self, x, v):
        return GradedElement(v.coeffs + 2 * self.epsilon * product(x.coeffs, v.coeffs), self.N)

    def approx_inverse(self, x, y):
        return y

    def describe(self):
        return {**super().describe(), "epsilon": self.epsilon}


class _Cohomological(TameProblem):
    """Shared structure of P2/P3: shift-minus-identity on mean-zero functions."""

    mean_zero = True

    def __init__(self, N: int, epsilon: float, alpha: float, d: float, floor: float):
        self.N = N
        self.epsilon = float(epsilon)
        self.alpha = float(alpha)
        self.divisor_floor = divisor_floor(N, alpha, d)
        if not self.divisor_floor >= floor:
            raise DivisorFloorViolated(
                f"divisor floor violated: min |e^(2 pi i k alpha) - 1|(1+|k|)^{d:g} = "
                f"{self.divisor_floor:.3e} < {floor:.3e} for alpha={alpha!r}, N={N}")
        self.D = divisors(N, alpha)
        inv = np.zeros_like(self.D)
        nz = np.arange(-N, N + 1) != 0
        inv[nz] = 1.0 / self.D[nz]
        self.D_inv = inv
        self.M = grid_size(N)
        self.t = grid_points(self.M)

    def describe(self):
        return {**super().describe(), "epsilon": self.epsilon, "alpha": self.alpha,
                "divisor_floor": self.divisor_floor}

    def _shift(self, c: np.ndarray) -> np.ndarray:
        return self.D * c


class SmallDivisorQuadratic(_Cohomological):
    """``phi(u) = P(u(t + 2 pi alpha) - u(t) + eps u^2)``, P the mean projection."""

    name = "P2"

    def __init__(self, N, epsilon, alpha, d=2.0, l=2.0, m=0.0, floor=DEFAULT_DIVISOR_FLOOR):
        super().__init__(N, epsilon, alpha, d, floor)
        self.constants = ProblemConstants(C=(3.0, 3.0, 1.0, 1.0, 1.0 / self.divisor_floor, 3.0, 2.0),
                                          d=d, l=l, lam=1.0, m=m)

    def apply(self, x):
        c = x.coeffs
        return GradedElement(_mean_free(self._shift(c) + self.epsilon * product(c, c)), self.N)

    def derivative(self, x, v):
        return GradedElement(_mean_free(self._shift(v.coeffs) + 2 * self.epsilon * product(x.coeffs, v.coeffs)), self.N)

    def approx_inverse(self, x, y):
        return GradedElement(self.D_inv * y.coeffs, self.N)


class SmallDivisorSine(_Cohomological):
    """``phi(u) = P(u(t + 2 pi alpha) - u(t) + eps (sin(t + u) - sin t))``.

    ``L`` is the exact inverse of ``phi'(0) = P(shift - 1 + eps cos t)`` on the
    mean-zero subspace (coefficient frozen at x = 0).
    """

    name = "P3"

    def __init__(self, N, epsilon, alpha, d=2.0, l=2.0, m=0.0, lam=1.0, floor=DEFAULT_DIVISOR_FLOOR):
        super().__init__(N, epsilon, alpha, d, floor)
        self._sin_t = np.sin(self.t)
        self._cos_t = np.cos(self.t)
        self._lu = self._factor_frozen()
        self.constants = ProblemConstants(C=(3.0, 3.0, 1.0, 1.0, 1.0 / self.divisor_floor, 3.0, 2.0),
                                          d=d, l=l, lam=lam, m=m)

    def _factor_frozen(self):
        N = self.N
        idx = [j for j in range(2 * N + 1) if j != N]
        A = np.zeros((2 * N, 2 * N), dtype=complex)
        zero = np.zeros(2 * N + 1, dtype=complex)
        for col, j in enumerate(idx):
            e = zero.copy()
            e[j] = 1.0
            A[:, col] = self._derivative(zero, e)[idx]
        self._idx = np.array(idx)
        return scipy.linalg.lu_factor(A)

    def apply(self, x):
        c = x.coeffs
        u = to_grid(c, self.M)
        nonlin = from_grid(np.sin(self.t + u) - self._sin_t, self.N)
        return GradedElement(_mean_free(self._shift(c) + self.epsilon * nonlin), self.N)

    def _derivative(self, c, v):
        u = to_grid(c, self.M)
        w = from_grid(np.cos(self.t + u) * to_grid(v, self.M), self.N)
        return _mean_free(self._shift(v) + self.epsilon * w)

    def derivative(self, x, v):
        return GradedElement(self._derivative(x.coeffs, v.coeffs), self.N)

    def approx_inverse(self, x, y):
        out = np.zeros(2 * self.N + 1, dtype=complex)
        out[self._idx] = scipy.linalg.lu_solve(self._lu, y.coeffs[self._idx])
        return GradedElement(out, self.N)


def make_P0(N: int) -> IdentityProblem:
    return IdentityProblem(N)


def make_P1(N: int, epsilon: float = 0.1) -> QuadraticContraction:
    return QuadraticContraction(N, epsilon)


def make_P2(N: int, epsilon: float = 1e-3, alpha: float = GOLDEN_MEAN, **kw) -> SmallDivisorQuadratic:
    return SmallDivisorQuadratic(N, epsilon, alpha, **kw)


def make_P3(N: int, epsilon: float = 1e-3, alpha: float = GOLDEN_MEAN, measure_lambda: bool = True,
            sampler: SamplerConfig | None = None, **kw) -> SmallDivisorSine:
    """Build P3; with ``measure_lambda`` the declared lambda is the measured one.

    Raises :class:`LambdaOutOfRange` if the measured lambda is not below 2.
    """
    prob = SmallDivisorSine(N, epsilon, alpha, **kw)
    if measure_lambda:
        sampler = sampler or SamplerConfig(samples=40, seed=0, n_grid=(0.0, 1.0, 2.0, 4.0, 8.0))
        lam_hat = estimate_lambda(prob, sampler)
        if not lam_hat < 2.0:
            raise LambdaOutOfRange(f"estimated lambda {lam_hat:g} >= 2: outside 1 <= lambda < 2")
        c = prob.constants
        prob.constants = ProblemConstants(C=c.C, d=c.d, l=c.l, lam=lam_hat, m=c.m)
        prob.lambda_hat = lam_hat
    return prob


def make_problem(pid: str, N: int, epsilon: float = 1e-3, alpha: float = GOLDEN_MEAN, **kw) -> TameProblem:
    """Build a catalog problem by id string."""
    pid = pid.upper()
    if pid == "P0":
        return make_P0(N)
    if pid == "P1":
        return make_P1(N, epsilon)
    if pid == "P2":
        return make_P2(N, epsilon, alpha, **kw)
    if pid == "P3":
        return make_P3(N, epsilon, alpha, **kw)
    raise ValueError(f"unknown problem id {pid!r}")
