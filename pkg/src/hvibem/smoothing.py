"""Max/min superpotentials, their convolution smoothing and Clarke interval data.

The plus function ``max(t, 0)`` is smoothed by convolution with the uniform
density on ``[-1/2, 1/2]``; nesting the smoothed plus function smooths a
maximum of several branches. Everything here is vectorized over ``x``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

UNIFORM_KAPPA = 0.25  # first absolute moment of the uniform density on [-1/2, 1/2]


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise ValueError(f"smoothing parameter must be positive, got {eps}")


def plus_smoothing(eps: float, t):
    """Smoothed plus function: 0, ``(t + eps/2)^2 / (2 eps)``, or ``t``."""
    _check_eps(eps)
    t = np.asarray(t, dtype=float)
    mid = (t + 0.5 * eps) ** 2 / (2 * eps)
    return np.where(t < -0.5 * eps, 0.0, np.where(t > 0.5 * eps, t, mid))


def plus_smoothing_derivative(eps: float, t):
    _check_eps(eps)
    t = np.asarray(t, dtype=float)
    return np.clip((t + 0.5 * eps) / eps, 0.0, 1.0)


def plus_smoothing_second_derivative(eps: float, t):
    """``1/eps`` on the half-open band ``[-eps/2, eps/2)``, else 0 (right derivative at the kinks)."""
    _check_eps(eps)
    t = np.asarray(t, dtype=float)
    return np.where((t >= -0.5 * eps) & (t < 0.5 * eps), 1.0 / eps, 0.0)


@dataclass(frozen=True)
class BranchFunction:
    """Smooth scalar branch with its first two derivatives."""

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    second_derivative: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    @classmethod
    def polynomial(cls, coeffs: Sequence[float], label: str = "") -> "BranchFunction":
        """Branch ``sum_k c_k x^k`` with coefficients in increasing degree."""
        p = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
        d1, d2 = p.deriv(1), p.deriv(2)

        def wrap(q):
            return lambda x: q(np.asarray(x, dtype=float)) + 0.0 * np.asarray(x, dtype=float)

        return cls(wrap(p), wrap(d1), wrap(d2), label)

    @classmethod
    def constant(cls, c: float, label: str = "") -> "BranchFunction":
        return cls.polynomial([c], label)

    def reflected(self) -> "BranchFunction":
        """``x -> g(-x)``."""
        return BranchFunction(lambda x: self.value(-np.asarray(x, dtype=float)),
                              lambda x: -self.derivative(-np.asarray(x, dtype=float)),
                              lambda x: self.second_derivative(-np.asarray(x, dtype=float)),
                              f"{self.label}(-x)")

    def negated(self) -> "BranchFunction":
        return BranchFunction(lambda x: -self.value(x), lambda x: -self.derivative(x),
                              lambda x: -self.second_derivative(x), f"-{self.label}")


@dataclass(frozen=True)
class SmoothedPotential:
    """``max`` (or ``min``) of ordered branches together with its smoothing.

    For ``orientation="min"`` the minimum is handled as ``-max(-g_i)``.
    """

    branches: tuple[BranchFunction, ...]
    eps: float
    orientation: str = "max"
    kappa: float = UNIFORM_KAPPA

    def __post_init__(self):
        if len(self.branches) < 1:
            raise ValueError("need at least one branch")
        _check_eps(self.eps)
        if self.orientation not in ("max", "min"):
            raise ValueError(f"orientation must be 'max' or 'min', got {self.orientation!r}")
        object.__setattr__(self, "branches", tuple(self.branches))

    @property
    def m(self) -> int:
        return len(self.branches)

    @property
    def smoothing_bound(self) -> float:
        """Uniform bound ``(m - 1) kappa eps`` on ``|S - f|``."""
        return (self.m - 1) * self.kappa * self.eps

    @property
    def _sign(self) -> float:
        return 1.0 if self.orientation == "max" else -1.0

    def with_eps(self, eps: float) -> "SmoothedPotential":
        return SmoothedPotential(self.branches, eps, self.orientation, self.kappa)

    def _nested(self, x):
        """Value, first and second derivative of the smoothed max of ``sign * g_i``."""
        s = self._sign
        x = np.asarray(x, dtype=float)
        g = [s * b.value(x) for b in self.branches]
        g1 = [s * b.derivative(x) for b in self.branches]
        g2 = [s * b.second_derivative(x) for b in self.branches]
        eps = self.eps
        # innermost argument v = g_m - g_{m-1}, then v <- g_k - g_{k-1} + P(v)
        v = dv = ddv = None
        for k in range(self.m - 1, 0, -1):
            a, da, dda = g[k] - g[k - 1], g1[k] - g1[k - 1], g2[k] - g2[k - 1]
            if v is not None:
                p1 = plus_smoothing_derivative(eps, v)
                p2 = plus_smoothing_second_derivative(eps, v)
                a = a + plus_smoothing(eps, v)
                da = da + p1 * dv
                dda = dda + p2 * dv**2 + p1 * ddv
            v, dv, ddv = a, da, dda
        if v is None:
            val, d1, d2 = g[0], g1[0], g2[0]
        else:
            p1 = plus_smoothing_derivative(eps, v)
            val = g[0] + plus_smoothing(eps, v)
            d1 = g1[0] + p1 * dv
            d2 = g2[0] + plus_smoothing_second_derivative(eps, v) * dv**2 + p1 * ddv
        return s * val, s * d1, s * d2

    def value(self, x):
        return self._nested(x)[0]

    def derivative(self, x):
        return self._nested(x)[1]

    def second_derivative(self, x):
        return self._nested(x)[2]

    def unregularized(self, x):
        vals = np.stack([b.value(np.asarray(x, dtype=float)) for b in self.branches])
        return vals.max(axis=0) if self.orientation == "max" else vals.min(axis=0)

    def branch_derivatives(self, x) -> np.ndarray:
        return np.stack([b.derivative(np.asarray(x, dtype=float)) for b in self.branches])


def smoothed_max_value(pot: SmoothedPotential, x):
    return pot.value(x)


def smoothed_max_derivative(pot: SmoothedPotential, x):
    return pot.derivative(x)


def smoothed_max_second_derivative(pot: SmoothedPotential, x):
    return pot.second_derivative(x)


def active_derivative_interval(pot: SmoothedPotential, x, rtol: float = 1e-12):
    """Convex hull of the derivatives of the branches attaining the max/min at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals = np.stack([b.value(x) for b in pot.branches])
    ders = pot.branch_derivatives(x)
    best = pot.unregularized(x)
    tol = rtol * (1.0 + np.abs(vals).max(axis=0))
    active = np.abs(vals - best) <= tol
    lo = np.where(active, ders, np.inf).min(axis=0)
    hi = np.where(active, ders, -np.inf).max(axis=0)
    return lo, hi


class ClarkeLaw(Protocol):
    def clarke_interval(self, x) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class AdhesionParameters:
    A: tuple[float, ...] = (0.5, 0.4375, 0.3125, 0.1875)
    t: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)

    def __post_init__(self):
        if len(self.A) != 4 or len(self.t) != 4:
            raise ValueError("the adhesion law takes four strengths A_i and four openings t_i")
        if any(ti <= 0 for ti in self.t):
            raise ValueError("openings t_i must be positive")
        if any(np.diff(self.t) <= 0):
            raise ValueError("openings t_i must be increasing")


@dataclass(frozen=True)
class AdhesionLaw:
    """Nonmonotone adhesion law ``f(u_n) = min_i g_i(-u_n)`` and its smoothing.

    ``g_1 = A_1 y^2 / (2 t_1)``, ``g_k = b_k (y^2 - t_{k-1}^2) + d_k`` for k = 2..4,
    ``g_5 = d_5``. ``f`` and ``f_x`` are the unregularized law; ``S``, ``S_x`` and
    ``S_xx`` its smoothing, all as functions of the normal displacement.
    """

    params: AdhesionParameters
    b: tuple[float, ...]
    d: tuple[float, ...]
    potential: SmoothedPotential = field(repr=False)

    @property
    def eps(self) -> float:
        return self.potential.eps

    @property
    def crossovers(self) -> np.ndarray:
        """Openings ``y = -u_n`` where consecutive branches meet."""
        return np.asarray(self.params.t)

    def with_eps(self, eps: float) -> "AdhesionLaw":
        return AdhesionLaw(self.params, self.b, self.d, self.potential.with_eps(eps))

    def f(self, x):
        return self.potential.unregularized(x)

    def f_x(self, x):
        """Derivative of the active branch (the left one on a tie)."""
        x = np.asarray(x, dtype=float)
        vals = np.stack([b.value(x) for b in self.potential.branches])
        ders = self.potential.branch_derivatives(x)
        idx = np.argmin(vals, axis=0)
        return np.take_along_axis(ders, idx[None], axis=0)[0]

    def S(self, x):
        return self.potential.value(x)

    def S_x(self, x):
        return self.potential.derivative(x)

    def S_xx(self, x):
        return self.potential.second_derivative(x)

    def clarke_interval(self, x):
        return active_derivative_interval(self.potential, x)


def build_benchmark_adhesion(params: AdhesionParameters = AdhesionParameters(),
                             eps: float = 0.1, kappa: float = UNIFORM_KAPPA) -> AdhesionLaw:
    """Benchmark law with coefficients chained so that ``f`` is continuous."""
    A, t = params.A, params.t
    b = [A[0] / (2 * t[0])] + [A[k] / (2 * t[k]) for k in range(1, 4)]
    d = [0.0, A[0] * t[0] / 2]
    for k in range(2, 5):
        d.append(b[k - 1] * (t[k - 1] ** 2 - t[k - 2] ** 2) + d[k - 1])
    # b[0] is the curvature of g_1; d[0] unused (g_1(0) = 0)
    g = [BranchFunction.polynomial([0.0, 0.0, b[0]], "g1")]
    for k in range(1, 4):
        g.append(BranchFunction.polynomial([d[k] - b[k] * t[k - 1] ** 2, 0.0, b[k]], f"g{k + 1}"))
    g.append(BranchFunction.constant(d[4], "g5"))
    pot = SmoothedPotential(tuple(gi.reflected() for gi in g), eps, "min", kappa)
    return AdhesionLaw(params, tuple(b[1:]), tuple(d[1:]), pot)


@dataclass(frozen=True)
class JaggedLaw:
    """Piecewise-linear subdifferential graph: segments with jumps at ``breaks``.

    Segment ``j`` starts at ``breaks[j]`` (the first extends to -inf, the
    last to +inf) with value ``values[j]`` and slope ``slopes[j]``.
    """

    breaks: tuple[float, ...]
    values: tuple[float, ...]
    slopes: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.breaks) == len(self.values) == len(self.slopes) >= 1):
            raise ValueError("breaks, values and slopes must have equal nonzero length")
        if np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breaks must be increasing")

    def _segment(self, j, x):
        return self.values[j] + self.slopes[j] * (x - self.breaks[j])

    def clarke_interval(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        br = np.asarray(self.breaks)
        j = np.clip(np.searchsorted(br, x, side="right") - 1, 0, len(br) - 1)
        vals, slopes, br_j = np.asarray(self.values)[j], np.asarray(self.slopes)[j], br[j]
        right = vals + slopes * (x - br_j)
        at_break = (x == br_j) & (j > 0)
        jm = np.maximum(j - 1, 0)
        left = np.asarray(self.values)[jm] + np.asarray(self.slopes)[jm] * (x - br[jm])
        lo = np.where(at_break, np.minimum(left, right), right)
        hi = np.where(at_break, np.maximum(left, right), right)
        return lo, hi


def one_sided_lipschitz_estimate(law: ClarkeLaw, grid) -> float:
    """``max -(xi* - eta*)(xi - eta) / |xi - eta|^2`` over grid pairs and interval endpoints."""
    x = np.unique(np.asarray(grid, dtype=float))
    if len(x) < 2:
        raise ValueError("need at least two distinct grid points")
    lo, hi = law.clarke_interval(x)
    # pairs x_a > x_b: the worst choice is lo(x_a) - hi(x_b)
    a, b = np.triu_indices(len(x), k=1)
    ratio = (lo[b] - hi[a]) / (x[b] - x[a])
    return float(np.max(-ratio))


def growth_constant(law: ClarkeLaw, grid) -> float:
    """Smallest ``c_1`` with ``|eta| <= c_1 (1 + |xi|)`` for all sampled subgradients."""
    x = np.asarray(grid, dtype=float)
    lo, hi = law.clarke_interval(x)
    return float(np.max(np.maximum(np.abs(lo), np.abs(hi)) / (1 + np.abs(x))))


def tabulate_law(law: AdhesionLaw, x) -> dict[str, np.ndarray]:
    x = np.asarray(x, dtype=float)
    lo, hi = law.clarke_interval(x)
    return {"x": x, "f": law.f(x), "f_x": law.f_x(x), "S": law.S(x), "S_x": law.S_x(x),
            "clarke_lo": lo, "clarke_hi": hi}


def write_law_csv(path: str | Path, law: AdhesionLaw, x) -> None:
    table = tabulate_law(law, x)
    keys = list(table)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in zip(*(table[k] for k in keys)):
            w.writerow([f"{v:.12e}" for v in row])
