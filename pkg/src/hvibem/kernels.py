"""Plane Navier-Lame fundamental solution, its traction and linear-field oracles.

All kernels broadcast over leading axes: points have shape ``(..., 2)`` and
matrix-valued kernels return ``(..., 2, 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularityError(ValueError):
    """Kernel evaluated at coincident points."""


@dataclass(frozen=True)
class LameParameters:
    """Material constants in force/area (N/mm^2 for the benchmark)."""

    E: float
    nu: float
    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0 or self.lam < 0:
            raise ValueError(f"need mu > 0 and lambda >= 0, got lam={self.lam}, mu={self.mu}")

    @classmethod
    def from_lame(cls, lam: float, mu: float) -> "LameParameters":
        """Explicit Lame constants; ``E`` and ``nu`` are back-computed for reporting."""
        # inverse of lame_from_engineering: nu = lam/(lam+mu), E = mu*(1+nu)
        nu = lam / (lam + mu)
        return cls(E=mu * (1 + nu), nu=nu, lam=lam, mu=mu)

    # kernel constants
    @property
    def c_single(self) -> float:
        lam, mu = self.lam, self.mu
        return (lam + 3 * mu) / (4 * np.pi * mu * (lam + 2 * mu))

    @property
    def c_dyad(self) -> float:
        return (self.lam + self.mu) / (self.lam + 3 * self.mu)

    @property
    def c_hyper(self) -> float:
        """Prefactor of the regularized hypersingular kernel, mu(lam+mu)/(pi(lam+2mu))."""
        lam, mu = self.lam, self.mu
        return mu * (lam + mu) / (np.pi * (lam + 2 * mu))

    @property
    def traction_coefficients(self) -> tuple[float, float]:
        lam, mu = self.lam, self.mu
        return mu / (2 * np.pi * (lam + 2 * mu)), (lam + mu) / (np.pi * (lam + 2 * mu))


def lame_from_engineering(E: float, nu: float) -> LameParameters:
    """``lam = E nu / (1 - nu^2)``, ``mu = E / (1 + nu)``."""
    if E <= 0:
        raise ValueError("Young's modulus must be positive")
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {nu}")
    return LameParameters(E=E, nu=nu, lam=E * nu / (1 - nu**2), mu=E / (1 + nu))


def _difference(x, y):
    r = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    rho = np.linalg.norm(r, axis=-1)
    if np.any(rho == 0):
        raise SingularityError("kernel evaluated at x == y; use singular quadrature")
    return r, rho


def fundamental_solution(x, y, params: LameParameters) -> np.ndarray:
    """Kelvin matrix ``c1 (-log|x-y| I + c2 r r^T / |r|^2)`` with ``r = x - y``."""
    r, rho = _difference(x, y)
    rhat = r / rho[..., None]
    eye = np.eye(2)
    return params.c_single * (-np.log(rho)[..., None, None] * eye
                              + params.c_dyad * rhat[..., :, None] * rhat[..., None, :])


def traction_kernel(x, y, n_y, params: LameParameters) -> np.ndarray:
    """Traction with respect to ``y`` of the columns of the fundamental solution.

    Row ``i`` holds the traction vector at ``y`` (normal ``n_y``) of the field
    ``E(x, .) e_i``, so the double layer is ``(K u)_i(x) = int T[i, :] . u ds_y``.
    """
    r, rho = _difference(x, y)
    n = np.broadcast_to(np.asarray(n_y, dtype=float), r.shape)
    rhat = r / rho[..., None]
    rn = np.sum(rhat * n, axis=-1)
    alpha, beta = params.traction_coefficients
    eye = np.eye(2)
    # i: row (source direction), k: traction component
    sym = rn[..., None, None] * eye
    skew = n[..., :, None] * rhat[..., None, :] - rhat[..., :, None] * n[..., None, :]
    dyad = rhat[..., :, None] * rhat[..., None, :] * rn[..., None, None]
    return (alpha * (sym + skew) + beta * dyad) / rho[..., None, None]


def regularized_hypersingular_kernel(x, y, params: LameParameters) -> np.ndarray:
    """Kernel acting on tangential derivatives in the weak form of the hypersingular operator."""
    r, rho = _difference(x, y)
    rhat = r / rho[..., None]
    return params.c_hyper * (-np.log(rho)[..., None, None] * np.eye(2)
                             + rhat[..., :, None] * rhat[..., None, :])


def linear_field_stress(A, params: LameParameters) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return params.mu * (A + A.T) + params.lam * np.trace(A) * np.eye(2)


def linear_field_traction(A, n, params: LameParameters) -> np.ndarray:
    """Traction ``sigma n`` of the displacement field ``u(x) = A x``."""
    return np.asarray(n, dtype=float) @ linear_field_stress(A, params).T
