"""Finite spectral model of a tame graded Frechet space.

Elements are truncated Fourier coefficient sequences ``c_k``, ``|k| <= N``.
The grading is the weighted sup

    |x|_n = max_k (1 + |k|)^n |c_k|,

and the smoothing operator ``S_theta`` is the sharp cutoff that keeps the
modes with ``1 + |k| <= theta``.  With these choices the smoothing, rough
and interpolation inequalities all hold with constant exactly 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "DegenerateInput",
    "GradedElement",
    "check_interpolation",
    "rough",
    "seminorm",
    "smooth",
    "weights",
]


class DegenerateInput(ValueError):
    """Raised when a quantity is undefined for the given (typically zero) input."""


@dataclass(frozen=True, eq=False)
class GradedElement:
    """Immutable truncated coefficient sequence over frequencies ``-N..N``.

    ``coeffs[j]`` holds the amplitude of frequency ``k = j - N``.
    """

    coeffs: np.ndarray
    truncation_order: int

    def __post_init__(self):
        N = int(self.truncation_order)
        if N < 1:
            raise ValueError(f"truncation order must be >= 1, got {N}")
        c = np.array(self.coeffs, dtype=complex, copy=True)
        if c.shape != (2 * N + 1,):
            raise ValueError(f"expected {2 * N + 1} coefficients for N={N}, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "truncation_order", N)

    # -- constructors -------------------------------------------------
    @classmethod
    def zeros(cls, N: int) -> GradedElement:
        return cls(np.zeros(2 * N + 1, dtype=complex), N)

    @classmethod
    def mode(cls, N: int, k: int, amplitude: complex = 1.0) -> GradedElement:
        """Single-mode element ``amplitude * e^{ikt}``."""
        if abs(k) > N:
            raise ValueError(f"frequency {k} outside truncation {N}")
        c = np.zeros(2 * N + 1, dtype=complex)
        c[k + N] = amplitude
        return cls(c, N)

    @classmethod
    def from_dict(cls, coeffs: dict[int, complex], N: int) -> GradedElement:
        c = np.zeros(2 * N + 1, dtype=complex)
        for k, a in coeffs.items():
            c[k + N] = a
        return cls(c, N)

    # -- accessors ----------------------------------------------------
    @property
    def N(self) -> int:
        return self.truncation_order

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def __getitem__(self, k: int) -> complex:
        return complex(self.coeffs[k + self.N])

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    # -- vector space structure ---------------------------------------
    def _check(self, other: GradedElement) -> None:
        if not isinstance(other, GradedElement):
            raise TypeError(f"cannot combine GradedElement with {type(other).__name__}")
        if other.N != self.N:
            raise ValueError(f"truncation orders differ: {self.N} vs {other.N}")

    def __add__(self, other: GradedElement) -> GradedElement:
        self._check(other)
        return GradedElement(self.coeffs + other.coeffs, self.N)

    def __sub__(self, other: GradedElement) -> GradedElement:
        self._check(other)
        return GradedElement(self.coeffs - other.coeffs, self.N)

    def __neg__(self) -> GradedElement:
        return GradedElement(-self.coeffs, self.N)

    def __mul__(self, scalar) -> GradedElement:
        if isinstance(scalar, GradedElement):
            return NotImplemented
        return GradedElement(self.coeffs * scalar, self.N)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> GradedElement:
        return GradedElement(self.coeffs / scalar, self.N)

    def allclose(self, other: GradedElement, atol: float = 0.0, rtol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.coeffs, other.coeffs, atol=atol, rtol=rtol))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GradedElement) or other.N != self.N:
            return NotImplemented
        return bool(np.array_equal(self.coeffs, other.coeffs))

    def __hash__(self):
        return hash((self.N, self.coeffs.tobytes()))

    def __repr__(self) -> str:
        nz = int(np.count_nonzero(self.coeffs))
        return f"GradedElement(N={self.N}, nonzero={nz}, |x|_0={seminorm(self, 0):.3e})"

    # -- serialization ------------------------------------------------
    def to_json(self) -> dict:
        """Flat list of ``[frequency, re, im]`` triples ordered by frequency."""
        return {
            "truncation_order": self.N,
            "modes": [[int(k), float(a.real), float(a.imag)] for k, a in zip(self.frequencies, self.coeffs)],
        }

    @classmethod
    def from_json(cls, data: dict | str) -> GradedElement:
        if isinstance(data, str):
            data = json.loads(data)
        N = int(data["truncation_order"])
        c = np.zeros(2 * N + 1, dtype=complex)
        seen = set()
        for k, re, im in data["modes"]:
            k = int(k)
            if abs(k) > N or k in seen:
                raise ValueError(f"bad frequency {k} in serialized element")
            seen.add(k)
            c[k + N] = complex(re, im)
        return cls(c, N)


def weights(N: int, n: float) -> np.ndarray:
    """Grading weights ``(1 + |k|)^n`` for ``k = -N..N``."""
    return (1.0 + np.abs(np.arange(-N, N + 1))) ** float(n)


def seminorm(x: GradedElement, n: float) -> float:
    """Weighted-sup seminorm ``max_k (1 + |k|)^n |c_k|``."""
    if n < 0:
        raise ValueError(f"seminorm index must be >= 0, got {n}")
    if x.is_zero():
        return 0.0
    return float(np.max(weights(x.N, n) * np.abs(x.coeffs)))


def _keep_mask(N: int, theta: float) -> np.ndarray:
    if theta < 1:
        raise ValueError(f"smoothing parameter must be >= 1, got {theta}")
    return (1.0 + np.abs(np.arange(-N, N + 1))) <= theta


def smooth(x: GradedElement, theta: float) -> GradedElement:
    """Sharp cutoff ``S_theta``: keep modes with ``1 + |k| <= theta``."""
    return GradedElement(np.where(_keep_mask(x.N, theta), x.coeffs, 0.0), x.N)


def rough(x: GradedElement, theta: float) -> GradedElement:
    """Complementary part ``(1 - S_theta) x``."""
    return GradedElement(np.where(_keep_mask(x.N, theta), 0.0, x.coeffs), x.N)


def check_interpolation(x: GradedElement, k: float, l: float, n: float) -> float:
    """Return ``|x|_l / (|x|_k^(1-a) |x|_n^a)`` with ``a = (l-k)/(n-k)``.

    The ratio is at most 1 for the weighted-sup grading.
    """
    if not (0 <= k <= l <= n):
        raise ValueError(f"need 0 <= k <= l <= n, got ({k}, {l}, {n})")
    if x.is_zero():
        raise DegenerateInput("degenerate input: interpolation ratio of the zero element")
    alpha = 0.0 if n == k else (l - k) / (n - k)
    # log-space to survive very large weights
    log_num = np.log(seminorm(x, l))
    log_den = (1 - alpha) * np.log(seminorm(x, k)) + alpha * np.log(seminorm(x, n))
    return float(np.exp(log_num - log_den))


def random_element(
    N: int,
    rng: np.random.Generator,
    decay: float = 2.0,
    real: bool = True,
    mean_zero: bool = False,
    band: int | None = None,
) -> GradedElement:
    """Random element with ``|c_k|`` proportional to ``(1 + |k|)^-decay``.

    Magnitudes carry a uniform factor in ``[0.5, 1]`` and uniform random
    phases.  ``real=True`` enforces ``c_{-k} = conj(c_k)`` so the element
    represents a real function.  ``band`` zeroes modes with ``|k| > band``.
    """
    ks = np.arange(-N, N + 1)
    mag = rng.uniform(0.5, 1.0, size=2 * N + 1) * (1.0 + np.abs(ks)) ** (-float(decay))
    phase = np.exp(2j * np.pi * rng.uniform(size=2 * N + 1))
    c = mag * phase
    if real:
        pos = c[N + 1:]
        c[:N] = np.conj(pos[::-1])
        c[N] = mag[N] * np.sign(phase[N].real or 1.0)
    if mean_zero:
        c[N] = 0.0
    if band is not None:
        c[np.abs(ks) > band] = 0.0
    return GradedElement(c, N)


def scaled_to(x: GradedElement, n: float, target: float) -> GradedElement:
    """Rescale ``x`` so that ``|x|_n == target``."""
    norm = seminorm(x, n)
    if norm == 0.0:
        raise DegenerateInput("degenerate input: cannot rescale the zero element")
    return x * (target / norm)


def stack(elements: Iterable[GradedElement]) -> np.ndarray:
    return np.stack([e.coeffs for e in elements])


# ---------------------------------------------------------------------------
# invariant suite
# ---------------------------------------------------------------------------

INDEX_GRID = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)


def _batch_norms(C: np.ndarray, n: float, weight_power: float) -> np.ndarray:
    N = (C.shape[1] - 1) // 2
    return np.max(weights(N, n * weight_power) * np.abs(C), axis=1)


def space_invariant_suite(
    N: int = 128,
    samples: int = 1000,
    seed: int = 0,
    grid: Iterable[float] = INDEX_GRID,
    rtol: float = 1e-12,
    weight_power: float = 1.0,
) -> dict:
    """Check smoothing, rough, interpolation and splitting with constant 1.

    Each (k, n) pair (and each k <= l <= n triple) is checked on ``samples``
    seeded elements with random spectral decay and random ``theta`` in
    ``[1, 2(N+1)]``.  ``weight_power != 1`` evaluates the grading with
    weights ``(1+|k|)^(n * weight_power)``, which breaks the inequalities
    (negative control).  Returns a report dict with ``passed`` and, on
    failure, the first failing sample.
    """
    rng = np.random.default_rng(seed)
    grid = sorted(float(g) for g in grid)
    ks = np.abs(np.arange(-N, N + 1))
    decay = rng.uniform(0.0, 4.0, size=(samples, 1))
    C = rng.uniform(0.5, 1.0, size=(samples, 2 * N + 1)) * (1.0 + ks) ** (-decay)
    C = C * np.exp(2j * np.pi * rng.uniform(size=C.shape))
    theta = np.exp(rng.uniform(0.0, np.log(2 * (N + 1)), size=samples))
    keep = (1.0 + ks)[None, :] <= theta[:, None]
    S = np.where(keep, C, 0.0)
    R = np.where(keep, 0.0, C)
    norms = {n: _batch_norms(C, n, weight_power) for n in grid}
    s_norms = {n: _batch_norms(S, n, weight_power) for n in grid}
    r_norms = {n: _batch_norms(R, n, weight_power) for n in grid}
    checks = {"smoothing": 0, "rough": 0, "interpolation": 0, "splitting": 0}
    worst = {"smoothing": 0.0, "rough": 0.0, "interpolation": 0.0, "splitting": 0.0}
    failure = None

    def fail(kind, i, **info):
        nonlocal failure
        if failure is None:
            failure = {"check": kind, "sample": i, "theta": float(theta[i]),
                       "element": GradedElement(C[i], N).to_json(), **info}

    split_err = np.max(np.abs(S + R - C), axis=1)
    checks["splitting"] = samples
    worst["splitting"] = float(split_err.max())
    for i in np.flatnonzero(split_err > 0):
        fail("splitting", int(i))
        break
    for a, k in enumerate(grid):
        for n in grid[a:]:
            lhs, rhs = s_norms[n], theta ** (n - k) * norms[k]
            ratio = lhs / rhs
            checks["smoothing"] += samples
            worst["smoothing"] = max(worst["smoothing"], float(ratio.max()))
            bad = np.flatnonzero(ratio > 1 + rtol)
            if bad.size:
                fail("smoothing", int(bad[0]), k=k, n=n, ratio=float(ratio[bad[0]]))
            lhs, rhs = r_norms[k], theta ** (-(n - k)) * norms[n]
            ratio = np.divide(lhs, rhs, out=np.zeros_like(lhs), where=rhs > 0)
            checks["rough"] += samples
            worst["rough"] = max(worst["rough"], float(ratio.max()))
            bad = np.flatnonzero(ratio > 1 + rtol)
            if bad.size:
                fail("rough", int(bad[0]), k=k, n=n, ratio=float(ratio[bad[0]]))
            for l in grid[a:]:
                if l > n:
                    break
                alpha = 0.0 if n == k else (l - k) / (n - k)
                logr = np.log(norms[l]) - (1 - alpha) * np.log(norms[k]) - alpha * np.log(norms[n])
                ratio = np.exp(logr)
                checks["interpolation"] += samples
                worst["interpolation"] = max(worst["interpolation"], float(ratio.max()))
                bad = np.flatnonzero(ratio > 1 + rtol)
                if bad.size:
                    fail("interpolation", int(bad[0]), k=k, l=l, n=n, ratio=float(ratio[bad[0]]))
    return {"passed": failure is None, "N": N, "samples": samples, "seed": seed, "grid": grid,
            "rtol": rtol, "weight_power": weight_power, "checks": checks, "worst_ratio": worst,
            "first_failure": failure}
