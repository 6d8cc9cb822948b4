"""Galerkin boundary element operators for plane elasticity and the discrete Steklov map.

Displacements live in continuous piecewise linears (dof ``2*node + component``),
tractions in piecewise constants (dof ``2*element + component``). Inner
integrals over straight source elements are evaluated in closed form; the
outer integrals use Gauss-Legendre rules, geometrically graded towards the
endpoints for self and touching element pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import scipy.linalg as sla

from .kernels import LameParameters
from .mesh import BoundaryMesh, ConfigurationError, Part

CAPACITY_RADIUS = 0.45


class AssemblyError(RuntimeError):
    """Non-finite operator entries or a failed factorization."""


@dataclass(frozen=True)
class QuadratureConfig:
    far_order: int = 12
    near_order: int = 8
    grading_levels: int = 24
    grading_ratio: float = 0.3
    chunk: int = 32


@lru_cache(maxsize=None)
def gauss_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def graded_unit(order: int, levels: int, ratio: float, ends: str) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on [0, 1] geometrically graded towards ``ends``.

    ``ends`` is one of ``"left"``, ``"right"`` or ``"both"``.
    """
    if ends == "both":
        xl, wl = graded_unit(order, levels, ratio, "left")
        x = np.concatenate([0.5 * xl, 1.0 - 0.5 * xl[::-1]])
        w = np.concatenate([0.5 * wl, 0.5 * wl[::-1]])
        return x, w
    g, gw = gauss_unit(order)
    breaks = np.concatenate([[0.0], ratio ** np.arange(levels, 0, -1), [1.0]])
    lo, hi = breaks[:-1], breaks[1:]
    x = (lo[:, None] + (hi - lo)[:, None] * g[None, :]).ravel()
    w = ((hi - lo)[:, None] * gw[None, :]).ravel()
    if ends == "right":
        return 1.0 - x[::-1], w[::-1]
    return x, w


# ---------------------------------------------------------------------------
# closed-form inner integrals over straight source elements


def _local(points, y0, tau, nrm, L):
    d = points[:, None, :] - y0[None, :, :]
    a = np.einsum("pfk,fk->pf", d, tau)
    h = np.einsum("pfk,fk->pf", d, nrm)
    h = np.where(np.abs(h) <= 1e-10 * L[None, :], 0.0, h)
    return a, h


def _theta(w, h):
    """``atan(w/h)``, taken as 0 on the source line (direct value, no jump)."""
    hs = np.where(h == 0.0, 1.0, h)
    return np.where(h == 0.0, 0.0, np.arctan(w / hs))


def _log_rho2(w, h):
    rho2 = w * w + h * h
    return np.log(np.where(rho2 > 0, rho2, 1.0)), rho2


def _inner_p0(points, y0, tau, nrm, L):
    """Integrals of ``log|x-y|`` and ``r r^T/|r|^2`` over each source element.

    Returns arrays of shape ``(P, F)`` and ``(P, F, 2, 2)``.
    """
    a, h = _local(points, y0, tau, nrm, L)

    def prim(w):
        lg, rho2 = _log_rho2(w, h)
        th = _theta(w, h)
        flog = 0.5 * np.where(rho2 > 0, w * lg, 0.0) - w + h * th
        fww = w - h * th
        fwh = 0.5 * h * lg
        fhh = h * th
        return flog, fww, fwh, fhh

    hi, lo = prim(a), prim(a - L[None, :])
    ilog, iww, iwh, ihh = (p - q for p, q in zip(hi, lo))
    tt = tau[:, :, None] * tau[:, None, :]
    nn = nrm[:, :, None] * nrm[:, None, :]
    tn = tau[:, :, None] * nrm[:, None, :]
    tn = tn + np.swapaxes(tn, 1, 2)
    irr = (iww[..., None, None] * tt[None] + iwh[..., None, None] * tn[None]
           + ihh[..., None, None] * nn[None])
    return ilog, irr


def _inner_p1_traction(points, y0, tau, nrm, L, params: LameParameters):
    """Double-layer inner integrals against the two hat functions of each source.

    Returns shape ``(P, F, 2, 2, 2)``: point, source, local basis (start, end),
    then the ``(i, k)`` block of the traction kernel.
    """
    a, h = _local(points, y0, tau, nrm, L)
    alpha, beta = params.traction_coefficients

    def prim(w):
        lg, rho2 = _log_rho2(w, h)
        th = _theta(w, h)
        safe = np.where(rho2 > 0, rho2, 1.0)
        half_log = 0.5 * lg
        return {
            "hA0": th,
            "hA1": h * half_log,
            "A1": half_log,
            "A2": w - h * th,
            "hB2": -h * w / (2 * safe) + 0.5 * th,
            "hB3": h * half_log + h**3 / (2 * safe),
            "h2B1": -h**2 / (2 * safe),
            "h2B2": -h**2 * w / (2 * safe) + 0.5 * h * th,
            "h3B0": h * w / (2 * safe) + 0.5 * th,
            "h3B1": -h**3 / (2 * safe),
        }

    p1, p0 = prim(a), prim(a - L[None, :])
    I = {k: p1[k] - p0[k] for k in p1}

    eye = np.eye(2)
    skew = nrm[:, :, None] * tau[:, None, :] - tau[:, :, None] * nrm[:, None, :]
    tt = tau[:, :, None] * tau[:, None, :]
    nn = nrm[:, :, None] * nrm[:, None, :]
    tn = tau[:, :, None] * nrm[:, None, :]
    sym_tn = tn + np.swapaxes(tn, 1, 2)

    def ex(s):
        return s[..., None, None]

    m0 = alpha * (ex(I["hA0"]) * eye + ex(I["A1"]) * skew[None]) + beta * (
        ex(I["hB2"]) * tt[None] + ex(I["h2B1"]) * sym_tn[None] + ex(I["h3B0"]) * nn[None])
    m1 = alpha * (ex(I["hA1"]) * eye + ex(I["A2"]) * skew[None]) + beta * (
        ex(I["hB3"]) * tt[None] + ex(I["h2B2"]) * sym_tn[None] + ex(I["h3B1"]) * nn[None])
    # phi_start = (L - a + w)/L, phi_end = (a - w)/L in the variable w = a - t
    Lb = L[None, :, None, None]
    ab = a[..., None, None]
    start = ((Lb - ab) * m0 + m1) / Lb
    end = (ab * m0 - m1) / Lb
    return np.stack([start, end], axis=2)


# ---------------------------------------------------------------------------
# element-pair integration


@dataclass
class _PairIntegrals:
    log: np.ndarray        # (E, E)
    dyad: np.ndarray       # (2E, 2E)
    double_layer: np.ndarray  # (2E, 2N)


def _outer_points(mesh: BoundaryMesh, e: np.ndarray, s: np.ndarray):
    pts = mesh.starts[e][:, None, :] + s[None, :, None] * (mesh.ends[e] - mesh.starts[e])[:, None, :]
    return pts


def _pair_integrals(mesh: BoundaryMesh, params: LameParameters | None,
                    quad: QuadratureConfig) -> _PairIntegrals:
    E, N = mesh.n_elements, mesh.n_nodes
    y0, tau, nrm, L = mesh.starts, mesh.tangents, mesh.normals, mesh.lengths
    elems = mesh.elements
    prev = np.empty(E, dtype=int)
    nxt = np.empty(E, dtype=int)
    start_of = np.empty(N, dtype=int)
    start_of[elems[:, 0]] = np.arange(E)
    end_of = np.empty(N, dtype=int)
    end_of[elems[:, 1]] = np.arange(E)
    nxt[:] = start_of[elems[:, 1]]
    prev[:] = end_of[elems[:, 0]]

    G0 = np.zeros((E, E))
    Grr = np.zeros((E, E, 2, 2))
    K4 = np.zeros((E, N, 2, 2))

    s, ws = gauss_unit(quad.far_order)
    q = len(s)
    for c0 in range(0, E, quad.chunk):
        rows = np.arange(c0, min(E, c0 + quad.chunk))
        nc = len(rows)
        pts = _outer_points(mesh, rows, s).reshape(-1, 2)
        wts = (ws[None, :] * L[rows, None]).reshape(nc, q)
        il, irr = _inner_p0(pts, y0, tau, nrm, L)
        G0[rows] = np.einsum("cq,cqf->cf", wts, il.reshape(nc, q, E))
        Grr[rows] = np.einsum("cq,cqfij->cfij", wts, irr.reshape(nc, q, E, 2, 2))
        if params is not None:
            kin = _inner_p1_traction(pts, y0, tau, nrm, L, params)
            kin = np.einsum("cq,cqfbik->cfbik", wts, kin.reshape(nc, q, E, 2, 2, 2))
            near = np.zeros((nc, E), dtype=bool)
            near[np.arange(nc), rows] = True
            near[np.arange(nc), prev[rows]] = True
            near[np.arange(nc), nxt[rows]] = True
            kin[near] = 0.0
            for b in range(2):
                np.add.at(K4, (rows[:, None], elems[None, :, b]), kin[:, :, b])

    # self and touching pairs with graded outer rules
    rules = {
        "both": graded_unit(quad.near_order, quad.grading_levels, quad.grading_ratio, "both"),
        "left": graded_unit(quad.near_order, quad.grading_levels, quad.grading_ratio, "left"),
        "right": graded_unit(quad.near_order, quad.grading_levels, quad.grading_ratio, "right"),
    }
    for e in range(E):
        for f, ends in ((e, "both"), (prev[e], "left"), (nxt[e], "right")):
            sg, wg = rules[ends]
            pts = _outer_points(mesh, np.array([e]), sg)[0]
            wts = wg * L[e]
            fs = np.array([f])
            il, irr = _inner_p0(pts, y0[fs], tau[fs], nrm[fs], L[fs])
            G0[e, f] = wts @ il[:, 0]
            Grr[e, f] = np.einsum("q,qij->ij", wts, irr[:, 0])
            if params is not None:
                kin = _inner_p1_traction(pts, y0[fs], tau[fs], nrm[fs], L[fs], params)
                kin = np.einsum("q,qbik->bik", wts, kin[:, 0])
                K4[e, elems[f, 0]] += kin[0]
                K4[e, elems[f, 1]] += kin[1]

    # symmetrized rule for the symmetric kernels
    G0 = 0.5 * (G0 + G0.T)
    dyad = Grr.transpose(0, 2, 1, 3).reshape(2 * E, 2 * E)
    dyad = 0.5 * (dyad + dyad.T)
    K = K4.transpose(0, 2, 1, 3).reshape(2 * E, 2 * N)
    out = _PairIntegrals(G0, dyad, K)
    for name, arr in (("log", G0), ("dyad", dyad), ("double_layer", K)):
        if not np.all(np.isfinite(arr)):
            raise AssemblyError(f"non-finite entries in {name} integrals")
    return out


def _expand_scalar(M: np.ndarray) -> np.ndarray:
    """``M (x) I_2`` in node/element-major dof ordering."""
    return np.kron(M, np.eye(2))


def _tangential_derivative(mesh: BoundaryMesh) -> np.ndarray:
    E, N = mesh.n_elements, mesh.n_nodes
    D = np.zeros((E, N))
    inv = 1.0 / mesh.lengths
    D[np.arange(E), mesh.elements[:, 1]] += inv
    D[np.arange(E), mesh.elements[:, 0]] -= inv
    return _expand_scalar(D)


def _single_layer_from(ints: _PairIntegrals, params: LameParameters) -> np.ndarray:
    return params.c_single * (-_expand_scalar(ints.log) + params.c_dyad * ints.dyad)


def _hypersingular_from(ints: _PairIntegrals, mesh: BoundaryMesh, params: LameParameters) -> np.ndarray:
    core = params.c_hyper * (-_expand_scalar(ints.log) + ints.dyad)
    D = _tangential_derivative(mesh)
    W = D.T @ core @ D
    return 0.5 * (W + W.T)


def assemble_single_layer(mesh: BoundaryMesh, params: LameParameters,
                          quad: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Galerkin single layer on piecewise-constant vector densities, ``(2E, 2E)``."""
    return _single_layer_from(_pair_integrals(mesh, None, quad), params)


def assemble_double_layer(mesh: BoundaryMesh, params: LameParameters,
                          quad: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Double layer: piecewise-linear trial, piecewise-constant test, ``(2E, 2N)``."""
    return _pair_integrals(mesh, params, quad).double_layer


def assemble_hypersingular(mesh: BoundaryMesh, params: LameParameters,
                           quad: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Hypersingular operator on piecewise linears via tangential derivatives, ``(2N, 2N)``.

    Uses ``<W u, v> = c int int (dv/ds)^T (-log|x-y| I + r r^T/|r|^2) (du/ds)``
    with ``c = mu (lam + mu) / (pi (lam + 2 mu))``.
    """
    return _hypersingular_from(_pair_integrals(mesh, None, quad), mesh, params)


def assemble_mass(mesh: BoundaryMesh) -> np.ndarray:
    """``<phi_j, psi_e>`` coupling, ``(2E, 2N)``; exact for linear x constant."""
    E, N = mesh.n_elements, mesh.n_nodes
    M = np.zeros((E, N))
    half = 0.5 * mesh.lengths
    M[np.arange(E), mesh.elements[:, 0]] += half
    M[np.arange(E), mesh.elements[:, 1]] += half
    return _expand_scalar(M)


@dataclass(frozen=True)
class OperatorBlocks:
    V: np.ndarray
    K: np.ndarray
    W: np.ndarray
    I: np.ndarray


def assemble_blocks(mesh: BoundaryMesh, params: LameParameters,
                    quad: QuadratureConfig = QuadratureConfig()) -> OperatorBlocks:
    """All four Galerkin blocks, sharing the element-pair integrals."""
    ints = _pair_integrals(mesh, params, quad)
    return OperatorBlocks(V=_single_layer_from(ints, params), K=ints.double_layer,
                          W=_hypersingular_from(ints, mesh, params), I=assemble_mass(mesh))


def scale_mesh_for_capacity(mesh: BoundaryMesh, radius: float = CAPACITY_RADIUS) -> tuple[BoundaryMesh, float]:
    """Shrink the polygon (never enlarge) so it fits in a disc of ``radius``.

    The disc is centred at the bounding-box centre; returns the scaled mesh
    and the factor applied on top of the mesh's existing scale.
    """
    xy = mesh.vertices
    centre = 0.5 * (xy.min(axis=0) + xy.max(axis=0))
    R = float(np.max(np.linalg.norm(xy - centre, axis=1)))
    s = min(1.0, radius / R) if R > 0 else 1.0
    return mesh.with_vertices(xy * s, mesh.scale * s), s


@dataclass
class SteklovSystem:
    """Discrete Poincare-Steklov matrix on the free displacement dofs.

    ``P`` acts on free dofs; ``P_full`` on all boundary dofs. Displacements are
    in physical units; ``P`` is scale invariant, so no conversion is needed.
    """

    mesh: BoundaryMesh
    blocks: OperatorBlocks
    P_full: np.ndarray
    free_dofs: np.ndarray
    asymmetry: float
    V_factor: tuple = field(repr=False)
    load: np.ndarray | None = None

    @property
    def P(self) -> np.ndarray:
        return self.P_full[np.ix_(self.free_dofs, self.free_dofs)]

    @property
    def n(self) -> int:
        return len(self.free_dofs)

    def dof(self, node: int, component: int) -> int:
        """Free-dof index of ``(node, component)``; -1 if constrained."""
        idx = np.searchsorted(self.free_dofs, 2 * node + component)
        if idx < self.n and self.free_dofs[idx] == 2 * node + component:
            return int(idx)
        return -1

    def node_dofs(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=int)
        return np.array([[self.dof(i, 0), self.dof(i, 1)] for i in nodes], dtype=int).reshape(-1, 2)

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Free-dof vector to all boundary dofs (zeros on Dirichlet nodes)."""
        full = np.zeros(2 * self.mesh.n_nodes)
        full[self.free_dofs] = x
        return full

    def nodal(self, x: np.ndarray) -> np.ndarray:
        return self.expand(x).reshape(-1, 2)

    def neumann_trace(self, u_full: np.ndarray) -> np.ndarray:
        """Piecewise-constant traction ``V_h^{-1} (K_h + I_h/2) u`` per element, ``(E, 2)``.

        ``u_full`` is in physical units; the traction is returned in physical
        units (the scaled-geometry traction times the mesh scale).
        """
        rhs = (self.blocks.K + 0.5 * self.blocks.I) @ u_full
        return self.mesh.scale * sla.cho_solve(self.V_factor, rhs).reshape(-1, 2)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.P @ x

    def solve_linear(self, rhs: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.P, rhs)


def assemble_steklov(blocks: OperatorBlocks, mesh: BoundaryMesh,
                     load: np.ndarray | None = None) -> SteklovSystem:
    """``P_h = W_h + (K_h + I_h/2)^T V_h^{-1} (K_h + I_h/2)`` with Dirichlet dofs removed."""
    try:
        factor = sla.cho_factor(blocks.V, lower=True)
    except np.linalg.LinAlgError as exc:
        raise AssemblyError("Cholesky of V_h failed: domain not scaled or V_h not SPD") from exc
    C = blocks.K + 0.5 * blocks.I
    X = sla.cho_solve(factor, C)
    P = blocks.W + C.T @ X
    norm = np.abs(P).max()
    asym = float(np.abs(P - P.T).max() / norm) if norm > 0 else 0.0
    P = 0.5 * (P + P.T)
    constrained = np.repeat(mesh.constrained, 2)
    free = np.flatnonzero(~constrained)
    if load is not None and len(load) != len(free):
        raise ConfigurationError("load vector does not match the free dofs")
    return SteklovSystem(mesh=mesh, blocks=blocks, P_full=P, free_dofs=free,
                         asymmetry=asym, V_factor=factor, load=load)


def build_steklov(mesh: BoundaryMesh, params: LameParameters,
                  quad: QuadratureConfig = QuadratureConfig(),
                  load: np.ndarray | None = None,
                  radius: float = CAPACITY_RADIUS) -> SteklovSystem:
    """Scale for capacity, assemble all blocks and form the Steklov matrix."""
    scaled, _ = scale_mesh_for_capacity(mesh, radius)
    return assemble_steklov(assemble_blocks(scaled, params, quad), scaled, load)


TractionSpec = Mapping[int, np.ndarray] | Callable[[np.ndarray], np.ndarray]


def assemble_neumann_load(mesh: BoundaryMesh, tractions: TractionSpec) -> np.ndarray:
    """Consistent load ``g_i = int_{Gamma_N} t . phi_i ds`` on the free dofs.

    ``tractions`` maps element index to a constant traction (physical units),
    or is a callable on physical element midpoints returning ``(E, 2)`` values
    (rows for non-Neumann elements must be zero). Lengths are physical.
    """
    E = mesh.n_elements
    t = np.zeros((E, 2))
    if callable(tractions):
        mid = 0.5 * (mesh.starts + mesh.ends) / mesh.scale
        t = np.asarray(tractions(mid), dtype=float).reshape(E, 2)
    else:
        for e, val in tractions.items():
            t[int(e)] = val
    loaded = np.flatnonzero(np.any(t != 0, axis=1))
    bad = loaded[mesh.labels[loaded] != Part.NEUMANN]
    if len(bad):
        raise ConfigurationError(f"traction prescribed on non-Neumann elements {bad.tolist()}")
    full = np.zeros((mesh.n_nodes, 2))
    half = 0.5 * mesh.physical_lengths[:, None] * t
    np.add.at(full, mesh.elements[:, 0], half)
    np.add.at(full, mesh.elements[:, 1], half)
    free = np.flatnonzero(~np.repeat(mesh.constrained, 2))
    return full.ravel()[free]


def energy_norm(system: SteklovSystem, x: np.ndarray, P: np.ndarray | None = None) -> float:
    """``sqrt(x^T P_h x)`` on free dofs."""
    P = system.P if P is None else P
    q = float(x @ P @ x)
    scale = float(np.abs(P).max() * (x @ x)) or 1.0
    if q < -1e-12 * scale:
        raise AssemblyError(f"negative energy {q:.3e}: Steklov matrix is not semidefinite")
    return float(np.sqrt(max(q, 0.0)))


def dump_matrix(path: str | Path, M: np.ndarray) -> None:
    """Dense row-major text dump."""
    np.savetxt(path, np.atleast_2d(M), fmt="%.17e")
