"""Trust-region Levenberg-Marquardt minimization of the merit ``0.5 ||F||^2``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

log = logging.getLogger(__name__)

REASONS = ("merit_tol", "gradient_tol", "max_iter", "radius_collapse")


class SolverInputError(ValueError):
    """Non-finite residual at the starting point."""


class SolverBreakdown(RuntimeError):
    """Non-finite residual or Jacobian during the iteration."""


class Residual(Protocol):
    def residual(self, z: np.ndarray) -> np.ndarray: ...
    def jacobian(self, z: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class FunctionSystem:
    """Adapter for plain residual/Jacobian callables."""

    F: Callable[[np.ndarray], np.ndarray]
    J: Callable[[np.ndarray], np.ndarray]

    def residual(self, z):
        return np.asarray(self.F(z), dtype=float)

    def jacobian(self, z):
        return np.atleast_2d(np.asarray(self.J(z), dtype=float))


@dataclass(frozen=True)
class TrustRegionConfig:
    """Merit tolerance applies to ``merit / len(F)``."""

    max_iterations: int = 100
    merit_tol: float = 1e-14
    gradient_tol: float = 1e-10
    initial_radius: float = 1.0   # relative to the scaled norm of the starting point
    expand: float = 2.0
    contract: float = 0.25
    min_step: float = 1e-15
    accept: float = 1e-4

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        for name in ("merit_tol", "gradient_tol", "initial_radius", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.contract < 1 < self.expand):
            raise ValueError("need 0 < contract < 1 < expand")


@dataclass
class SolveReport:
    iterations: int
    merit: float
    scaled_merit: float
    gradient_norm: float
    reason: str
    history: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.reason == "merit_tol"


def merit_and_gradient(system: Residual, z: np.ndarray) -> tuple[float, np.ndarray]:
    """``0.5 ||F||^2`` and ``J^T F``."""
    F = system.residual(z)
    J = system.jacobian(z)
    return 0.5 * float(F @ F), J.T @ F


def _lm_step(J, F, d, radius):
    """Step minimizing ``||J p + F||`` subject to ``||d * p|| <= radius``.

    Returns the step and whether the Gauss-Newton step was used unconstrained.
    """
    n = J.shape[1]
    Js = J / d[None, :]
    U, s, Vt = np.linalg.svd(Js, full_matrices=False)
    beta = U.T @ F
    cutoff = s.max() * max(J.shape) * np.finfo(float).eps if s.size else 0.0
    keep = s > cutoff
    y_gn = np.zeros(n)
    y_gn[: keep.sum()] = -beta[keep] / s[keep]
    p_gn = Vt[keep].T @ y_gn[: keep.sum()]
    if np.linalg.norm(p_gn) <= radius:
        return p_gn / d, True

    # secular equation ||p(mu)|| = radius with p(mu) = -sum s_i beta_i/(s_i^2 + mu) v_i
    def norm_at(mu):
        return np.linalg.norm(s * beta / (s**2 + mu))

    lo, hi = 0.0, max(np.linalg.norm(s * beta) / radius, 1e-300)
    while norm_at(hi) > radius:
        hi *= 2.0
    for _ in range(200):
        mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        if norm_at(mid) > radius:
            lo = mid
        else:
            hi = mid
        if norm_at(hi) >= (1 - 1e-6) * radius or hi - lo <= 1e-14 * hi:
            break
    p = -(Vt.T @ (s * beta / (s**2 + hi)))
    return p / d, False


def solve(system: Residual, z0: np.ndarray, config: TrustRegionConfig = TrustRegionConfig(),
          callback: Callable[[int, float, float, float], None] | None = None) -> tuple[np.ndarray, SolveReport]:
    """Minimize ``0.5 ||F(z)||^2`` from ``z0``; returns the last accepted iterate."""
    z = np.array(z0, dtype=float)
    if not np.all(np.isfinite(z)):
        raise SolverInputError("starting point is not finite")
    F = system.residual(z)
    if not np.all(np.isfinite(F)):
        raise SolverInputError("residual is not finite at the starting point")
    size = max(len(F), 1)
    merit = 0.5 * float(F @ F)
    history = [merit]
    J = system.jacobian(z)
    d = np.maximum(np.linalg.norm(J, axis=0), 1e-300)
    radius = config.initial_radius * max(np.linalg.norm(d * z), 1.0)

    def report(it, g, reason):
        return SolveReport(it, merit, merit / size, float(np.linalg.norm(g)), reason, history)

    it = 0
    while True:
        if not np.all(np.isfinite(J)):
            raise SolverBreakdown(f"non-finite Jacobian at iteration {it}")
        g = J.T @ F
        if merit / size <= config.merit_tol:
            return z, report(it, g, "merit_tol")
        if np.linalg.norm(g) <= config.gradient_tol:
            return z, report(it, g, "gradient_tol")
        if it >= config.max_iterations:
            return z, report(it, g, "max_iter")

        # More's column scaling, never decreasing
        d = np.maximum(d, np.linalg.norm(J, axis=0))
        while True:
            p, interior = _lm_step(J, F, d, radius)
            step = float(np.linalg.norm(d * p))
            if step <= config.min_step * max(np.linalg.norm(d * z), 1.0):
                return z, report(it, g, "radius_collapse")
            z_new = z + p
            F_new = system.residual(z_new)
            if not np.all(np.isfinite(F_new)):
                raise SolverBreakdown(f"non-finite residual at iteration {it}")
            merit_new = 0.5 * float(F_new @ F_new)
            lin = F + J @ p
            predicted = merit - 0.5 * float(lin @ lin)
            actual = merit - merit_new
            rho = actual / predicted if predicted > 0 else (-1.0 if actual <= 0 else 1.0)
            if rho < 0.25:
                radius = config.contract * step
            elif rho > 0.75 and not interior:
                radius = config.expand * radius
            elif rho > 0.75:
                radius = max(radius, config.expand * step)
            if rho > config.accept and merit_new < merit:
                break
            if radius <= config.min_step * max(np.linalg.norm(d * z), 1.0):
                return z, report(it, g, "radius_collapse")
        it += 1
        z, F, merit = z_new, F_new, merit_new
        history.append(merit)
        J = system.jacobian(z)
        log.debug("iter %3d  merit %.3e  radius %.3e  step %.3e", it, merit, radius, step)
        if callback is not None:
            callback(it, merit, radius, step)
