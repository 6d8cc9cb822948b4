"""Discrete regularized adhesion problem as a square nonlinear residual system.

Unknowns are ``z = (u, lam)``: the free displacement dofs (physical units)
and one multiplier per free contact node for the non-penetration constraint
``u_n <= 0``. The equilibrium rows read

    P_h u + DJ(u) + B^T lam - g = 0,

with the lumped adhesion term ``DJ_i = |K_i| S_x(eps, u_n(P_i)) n_i``; the
complementarity rows are ``fb(lam_i, -u_n(P_i)) = 0``.

``P_h`` is assembled on the capacity-scaled geometry but acts on physical
displacements and returns physical nodal forces (it is invariant under the
geometric scaling), so the lumped term is assembled directly with physical
dual-cell lengths and every row is in N/mm.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bem import SteklovSystem
from .mesh import DualMesh, build_dual_mesh
from .smoothing import AdhesionLaw

FB_ORIGIN_GRADIENT = (np.sqrt(2.0) / 2 - 1.0, np.sqrt(2.0) / 2 - 1.0)


def fb(a, b):
    """Fischer-Burmeister function ``sqrt(a^2 + b^2) - (a + b)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.hypot(a, b) - (a + b)


def fb_gradient(a, b):
    """Partial derivatives of ``fb``; the origin gets a fixed generalized-gradient element."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.hypot(a, b)
    zero = r == 0
    safe = np.where(zero, 1.0, r)
    da = np.where(zero, FB_ORIGIN_GRADIENT[0], a / safe - 1.0)
    db = np.where(zero, FB_ORIGIN_GRADIENT[1], b / safe - 1.0)
    return da, db


@dataclass(frozen=True)
class ContactMap:
    """Free contact nodes with their free-dof pairs, normals and dual weights."""

    nodes: np.ndarray
    dofs: np.ndarray      # (m, 2) indices into the free dofs
    normals: np.ndarray   # (m, 2)
    weights: np.ndarray   # (m,) physical lengths

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class DiscreteHVI:
    """Assembled discrete problem; immutable after construction.

    ``law=None`` switches the adhesion term off; ``constrained=False`` drops
    the non-penetration multipliers (then ``z = u``).
    """

    steklov: SteklovSystem
    law: AdhesionLaw | None
    dual: DualMesh
    load: np.ndarray
    contact: ContactMap
    constrained: bool = True
    force_scale: float = 1.0  # physical force units per row unit of P_h
    B: np.ndarray = field(repr=False, default=None)

    @property
    def eps(self) -> float | None:
        return None if self.law is None else self.law.eps

    @property
    def n(self) -> int:
        return self.steklov.n

    @property
    def m(self) -> int:
        return len(self.contact) if self.constrained else 0

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n + self.m,):
            raise ValueError(f"expected {self.n + self.m} unknowns, got shape {z.shape}")
        return z[: self.n], z[self.n:]

    def normal_displacement(self, u: np.ndarray) -> np.ndarray:
        return self.B @ u


def build_problem(steklov: SteklovSystem, law: AdhesionLaw | None, load: np.ndarray, *,
                  constrained: bool = True) -> DiscreteHVI:
    dual = build_dual_mesh(steklov.mesh)
    dofs = steklov.node_dofs(dual.owners)
    if np.any(dofs < 0):
        raise ValueError("a dual-cell owner has constrained dofs")
    contact = ContactMap(dual.owners, dofs, dual.normals, dual.weights)
    load = np.asarray(load, dtype=float)
    if load.shape != (steklov.n,):
        raise ValueError(f"load has shape {load.shape}, expected ({steklov.n},)")
    B = np.zeros((len(contact), steklov.n))
    rows = np.arange(len(contact))
    B[rows, dofs[:, 0]] = contact.normals[:, 0]
    B[rows, dofs[:, 1]] = contact.normals[:, 1]
    return DiscreteHVI(steklov, law, dual, load, contact, constrained, 1.0, B)


def assemble_DJ(problem: DiscreteHVI, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lumped adhesion term and its derivative ``|K_i| S_xx n_i n_i^T`` on the free dofs."""
    n = problem.n
    vec = np.zeros(n)
    jac = np.zeros((n, n))
    if problem.law is None:
        return vec, jac
    c = problem.contact
    un = problem.normal_displacement(u)
    sx = problem.law.S_x(un)
    sxx = problem.law.S_xx(un)
    for k in range(2):
        np.add.at(vec, c.dofs[:, k], c.weights * sx * c.normals[:, k])
    for i in range(len(c)):
        block = c.weights[i] * sxx[i] * np.outer(c.normals[i], c.normals[i])
        jac[np.ix_(c.dofs[i], c.dofs[i])] += block
    return vec, jac


def residual(problem: DiscreteHVI, z: np.ndarray) -> np.ndarray:
    u, lam = problem.split(z)
    dj, _ = assemble_DJ(problem, u)
    eq = problem.steklov.P @ u + dj - problem.load
    if not problem.constrained:
        return eq
    eq = eq + problem.B.T @ lam
    return np.concatenate([eq, fb(lam, -problem.normal_displacement(u))])


def jacobian(problem: DiscreteHVI, z: np.ndarray) -> np.ndarray:
    u, lam = problem.split(z)
    _, djac = assemble_DJ(problem, u)
    top = problem.steklov.P + djac
    if not problem.constrained:
        return top
    da, db = fb_gradient(lam, -problem.normal_displacement(u))
    B = problem.B
    return np.block([[top, B.T], [-db[:, None] * B, np.diag(da)]])


@dataclass(frozen=True)
class ResidualSystem:
    """Callable residual/Jacobian pair over ``z``."""

    problem: DiscreteHVI

    @property
    def size(self) -> int:
        return self.problem.n + self.problem.m

    def residual(self, z):
        return residual(self.problem, z)

    def jacobian(self, z):
        return jacobian(self.problem, z)

    def merit(self, z) -> float:
        F = self.residual(z)
        return 0.5 * float(F @ F)

    def initial_point(self) -> np.ndarray:
        """Law-free linear elastic solution with zero multipliers."""
        u0 = self.problem.steklov.solve_linear(self.problem.load)
        return np.concatenate([u0, np.zeros(self.problem.m)])


def recover_contact_stress(problem: DiscreteHVI, u: np.ndarray) -> np.ndarray:
    """Normal stress at the free contact nodes from the nodal forces ``P_h u``.

    The nodal force is divided by the lumped dual-cell length, i.e. the
    traction is projected with the same trapezoidal mass used for ``DJ``.
    """
    forces = problem.steklov.P @ u * problem.force_scale
    c = problem.contact
    f = forces[c.dofs]
    return np.einsum("ik,ik->i", f, c.normals) / c.weights


@dataclass
class SolutionFields:
    nodes: np.ndarray
    x: np.ndarray                 # physical coordinates of the contact nodes, (m, 2)
    displacement: np.ndarray      # all boundary nodes, (N, 2), mm
    u_n: np.ndarray
    u_t: np.ndarray
    sigma_n: np.ndarray
    multipliers: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def contact_displacement(self) -> np.ndarray:
        return self.displacement[self.nodes]

    def law_residual(self, law: AdhesionLaw) -> np.ndarray:
        """``sigma_n + S_x(eps, u_n)``; zero at nodes without an active constraint."""
        return self.sigma_n + law.S_x(self.u_n)

    def complementarity(self) -> float:
        if len(self.multipliers) == 0:
            return 0.0
        return float(np.max(np.abs(np.minimum(self.multipliers, -self.u_n))))


def solution_fields(problem: DiscreteHVI, z: np.ndarray, diagnostics: dict | None = None) -> SolutionFields:
    u, lam = problem.split(z)
    c = problem.contact
    disp = problem.steklov.nodal(u)
    tang = np.column_stack([-c.normals[:, 1], c.normals[:, 0]])
    cd = disp[c.nodes]
    mesh = problem.steklov.mesh
    multipliers = lam if problem.constrained else np.zeros(0)
    return SolutionFields(
        nodes=c.nodes,
        x=mesh.physical_vertices[c.nodes],
        displacement=disp,
        u_n=np.einsum("ik,ik->i", cd, c.normals),
        u_t=np.einsum("ik,ik->i", cd, tang),
        sigma_n=recover_contact_stress(problem, u),
        multipliers=multipliers,
        diagnostics=dict(diagnostics or {}),
    )


def write_solution_csv(path: str | Path, fields: SolutionFields) -> None:
    lam = fields.multipliers if len(fields.multipliers) else np.zeros(len(fields.nodes))
    cd = fields.contact_displacement
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "x_mm", "u1_mm", "u2_mm", "un_mm", "sigma_n_Nmm2", "lambda"])
        for k, node in enumerate(fields.nodes):
            w.writerow([int(node), f"{fields.x[k, 0]:.6f}", f"{cd[k, 0]:.12e}", f"{cd[k, 1]:.12e}",
                        f"{fields.u_n[k]:.12e}", f"{fields.sigma_n[k]:.12e}", f"{lam[k]:.12e}"])
