from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hvibem.bem import assemble_neumann_load, build_steklov
from hvibem.bench import RunConfig, build_case, prolong, top_load
from hvibem.hvi import (ContactMap, DiscreteHVI, ResidualSystem, assemble_DJ, build_problem, fb, fb_gradient,
                        jacobian, recover_contact_stress, residual, solution_fields, write_solution_csv)
from hvibem.kernels import linear_field_traction
from hvibem.mesh import Part, PartSpec, build_rectangle_boundary, refine_uniform
from hvibem.smoothing import build_benchmark_adhesion
from hvibem.solver import TrustRegionConfig, solve

TIGHT = TrustRegionConfig(merit_tol=1e-30, gradient_tol=1e-30)

LAW = build_benchmark_adhesion()


@pytest.fixture(scope="module")
def bench_problem(bench_steklov, bench_config):
    return build_case(bench_config, bench_steklov, 1.0)


@dataclass
class MatrixSteklov:
    """Stand-in exposing just a dense ``P`` for the small analytic toys."""

    P: np.ndarray

    @property
    def n(self):
        return len(self.P)

    def solve_linear(self, rhs):
        return np.linalg.solve(self.P, rhs)


def toy_problem(g):
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    contact = ContactMap(np.array([0]), np.array([[0, 1]]), np.array([[0.0, 1.0]]), np.array([1.0]))
    B = np.array([[0.0, 1.0]])
    return DiscreteHVI(MatrixSteklov(P), None, None, np.asarray(g, float), contact, True, 1.0, B)


# Fischer-Burmeister ---------------------------------------------------------------

def test_fb_examples():
    assert fb(0, 0) == 0.0
    assert fb(3, 4) == pytest.approx(-2.0)
    assert fb(2.0, 0.0) == 0.0
    assert fb(-2.0, 0.0) == pytest.approx(4.0)


def test_fb_gradient_origin_and_limit():
    da, db = fb_gradient(0.0, 0.0)
    assert da == pytest.approx(np.sqrt(2) / 2 - 1) and db == pytest.approx(np.sqrt(2) / 2 - 1)
    da, _ = fb_gradient(1e6, 1e-3)
    assert abs(da) < 1e-12


@settings(max_examples=200)
@given(st.floats(-10, 10), st.floats(-10, 10))
def test_fb_zero_iff_complementary(a, b):
    comp = a >= 0 and b >= 0 and abs(a * b) <= 1e-12
    assert (abs(fb(a, b)) <= 1e-9) == comp or min(abs(a), abs(b)) < 1e-5


# lumped adhesion term ---------------------------------------------------------------

def test_DJ_at_zero(bench_problem):
    vec, _ = assemble_DJ(bench_problem, np.zeros(bench_problem.n))
    c = bench_problem.contact
    s0 = LAW.S_x(0.0)
    for k in range(2):
        np.testing.assert_allclose(vec[c.dofs[:, k]], c.weights * s0 * c.normals[:, k], atol=1e-18)
    assert float(s0) == pytest.approx(LAW.potential.derivative(0.0))


def test_DJ_single_node_formula():
    prob = toy_problem([0.0, 0.0])
    prob = DiscreteHVI(prob.steklov, LAW, None, prob.load,
                       ContactMap(np.array([0]), np.array([[0, 1]]), np.array([[0.0, 1.0]]), np.array([2.0])),
                       True, 1.0, prob.B)
    u = np.array([0.0, -0.13])
    vec, jac = assemble_DJ(prob, u)
    s = float(LAW.S_x(-0.13))
    np.testing.assert_allclose(vec, [0.0, 2 * s])
    np.testing.assert_allclose(jac, [[0, 0], [0, 2 * float(LAW.S_xx(-0.13))]])


def _five_element_problem():
    parts = PartSpec.uniform(bottom=Part.CONTACT, right=Part.NEUMANN, top=Part.NEUMANN, left=Part.DIRICHLET)
    mesh = build_rectangle_boundary(5.0, 1.0, h=1.0, parts=parts)
    from hvibem.kernels import lame_from_engineering
    S = build_steklov(mesh, lame_from_engineering(1000.0, 0.3))
    return build_problem(S, LAW, np.zeros(S.n))


def test_DJ_matches_brute_force_dual_cell_integral(rng):
    prob = _five_element_problem()
    mesh = prob.steklov.mesh
    cons = mesh.constrained
    for _ in range(5):
        u = rng.normal(scale=0.2, size=prob.n)
        v = rng.normal(size=prob.n)
        vec, _ = assemble_DJ(prob, u)
        lumped = vec @ v
        U, Vn = prob.steklov.nodal(u), prob.steklov.nodal(v)
        total = 0.0
        for e in np.flatnonzero(mesh.labels == Part.CONTACT):
            a, b = mesh.elements[e]
            n = mesh.normals[e]
            Lp = mesh.physical_lengths[e]
            s = (np.arange(400) + 0.5) / 400
            near = np.where(s < 0.5, a, b)
            other = np.where(s < 0.5, b, a)
            owner = np.where(cons[near], other, near)   # dual cell of a Dirichlet node is appended to its neighbour
            un, vn = U[owner] @ n, Vn[owner] @ n
            total += np.sum(LAW.S_x(un) * vn) * Lp / len(s)
        assert lumped == pytest.approx(total, rel=1e-12, abs=1e-12)


def test_DJ_coercivity_diagnostic(bench_problem, rng):
    c = bench_problem.contact
    bound = 0.5 * np.linalg.norm(c.weights)
    worst = 0.0
    for _ in range(50):
        u = rng.normal(scale=rng.uniform(1e-3, 1.0), size=bench_problem.n)
        vec, _ = assemble_DJ(bench_problem, u)
        worst = max(worst, -(vec @ u) / np.linalg.norm(u))
    assert worst <= bound


# residual and Jacobian ---------------------------------------------------------------

def test_residual_zero_for_unloaded_body(bench_steklov):
    prob = build_problem(bench_steklov, None, np.zeros(bench_steklov.n))
    np.testing.assert_array_equal(residual(prob, np.zeros(prob.n + prob.m)), 0.0)
    with pytest.raises(ValueError):
        residual(prob, np.zeros(3))


def test_law_free_unconstrained_is_linear_solve(bench_steklov, bench_config):
    g = assemble_neumann_load(bench_steklov.mesh, top_load(bench_config, 0.6))
    prob = build_problem(bench_steklov, None, g, constrained=False)
    rs = ResidualSystem(prob)
    z, rep = solve(rs, np.zeros(prob.n))
    u_direct = np.linalg.solve(bench_steklov.P, g)
    assert np.abs(z - u_direct).max() <= 1e-10 * np.abs(u_direct).max()
    g2 = assemble_neumann_load(bench_steklov.mesh, top_load(bench_config, 1.2))
    z2, _ = solve(ResidualSystem(build_problem(bench_steklov, None, g2, constrained=False)), np.zeros(prob.n))
    assert np.abs(z2 - 2 * z).max() <= 1e-10 * np.abs(z2).max()


@pytest.mark.parametrize("g, expected", [((1.0, 2.0), (0.5, 0.0, 1.75)),
                                         ((1.0, -2.0), (2 / 1.75, -4.5 / 1.75, 0.0))])
def test_two_dof_kkt_toy(g, expected):
    prob = toy_problem(g)
    z, rep = solve(ResidualSystem(prob), np.zeros(3), TIGHT)
    assert rep.scaled_merit <= 1e-20
    np.testing.assert_allclose(z, expected, atol=1e-10)


def test_jacobian_matches_fd(bench_problem, rng):
    for _ in range(3):
        u = rng.normal(scale=0.05, size=bench_problem.n)
        lam = rng.uniform(0.1, 1.0, size=bench_problem.m)
        z = np.concatenate([u, lam])
        J = jacobian(bench_problem, z)
        d = 1e-7 * max(1.0, np.abs(z).max())
        fd = np.empty_like(J)
        for j in range(len(z)):
            e = np.zeros(len(z))
            e[j] = d
            fd[:, j] = (residual(bench_problem, z + e) - residual(bench_problem, z - e)) / (2 * d)
        assert np.abs(J - fd).max() <= 1e-6 * np.abs(J).max()
        top = J[: bench_problem.n, : bench_problem.n]
        np.testing.assert_allclose(top, top.T, atol=1e-12 * np.abs(top).max())


def test_weak_form_consistent_under_refinement(bench_config):
    mc = bench_config.mesh()
    mf = refine_uniform(mc)
    Sc, Sf = build_steklov(mc, bench_config.material()), build_steklov(mf, bench_config.material())
    X = mc.vertices
    u = np.column_stack([1e-5 * X[:, 0] ** 2, 1e-4 * np.sin(X[:, 0] / 30) * X[:, 0]])
    u[mc.constrained] = 0
    uf = prolong(mc, u, 1)
    pc, pf = build_case(bench_config, Sc, 1.0), build_case(bench_config, Sf, 1.0)
    Fc = residual(pc, np.concatenate([u.ravel()[Sc.free_dofs], np.zeros(pc.m)]))[: pc.n]
    Ff = Sf.expand(residual(pf, np.concatenate([uf.ravel()[Sf.free_dofs], np.zeros(pf.m)]))[: pf.n])
    Ff = Ff.reshape(-1, 2)
    # restriction is the transpose of nodal interpolation
    R = Ff[: mc.n_nodes].copy()
    mids = Ff[mc.n_nodes:]
    np.add.at(R, mc.elements[:, 0], 0.5 * mids)
    np.add.at(R, mc.elements[:, 1], 0.5 * mids)
    R = R.ravel()[Sc.free_dofs]
    assert np.linalg.norm(R - Fc) <= 10 * (mc.h / 100) * np.linalg.norm(Fc)


# stress recovery ---------------------------------------------------------------

@pytest.fixture(scope="module")
def floating_square(steel):
    parts = PartSpec.uniform(bottom=Part.CONTACT, right=Part.NEUMANN, top=Part.NEUMANN, left=Part.NEUMANN)
    mesh = build_rectangle_boundary(1.0, 1.0, h=1 / 8, parts=parts)
    S = build_steklov(mesh, steel)
    return build_problem(S, None, np.zeros(S.n))


def test_rigid_translation_has_no_contact_stress(floating_square, steel):
    u = np.tile([0.3, -0.2], floating_square.steklov.mesh.n_nodes)
    sig = recover_contact_stress(floating_square, u)
    # compared with the stress of a unit strain
    assert np.abs(sig).max() <= 1e-8 * (steel.lam + 2 * steel.mu)


def test_linear_field_contact_stress(floating_square, steel):
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    mesh = floating_square.steklov.mesh
    u = (mesh.physical_vertices @ A.T).ravel()
    sig = recover_contact_stress(floating_square, u)
    n = np.array([0.0, -1.0])
    expected = linear_field_traction(A, n, steel) @ n
    x = mesh.physical_vertices[floating_square.contact.nodes, 0]
    interior = (x > 1e-9) & (x < 1 - 1e-9)
    np.testing.assert_allclose(sig[interior], expected, rtol=1e-6)


def test_benchmark_case_solution_properties(bench_problem, tmp_path):
    rs = ResidualSystem(bench_problem)
    z, rep = solve(rs, rs.initial_point())
    assert rep.converged
    f = solution_fields(bench_problem, z)
    assert f.complementarity() <= 1e-8
    free = f.multipliers <= 1e-10
    assert np.abs(f.law_residual(LAW)[free]).max() <= 1e-3
    assert np.all(f.displacement[bench_problem.steklov.mesh.constrained] == 0)
    write_solution_csv(tmp_path / "s.csv", f)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "node,x_mm,u1_mm,u2_mm,un_mm,sigma_n_Nmm2,lambda"
    assert len(lines) == 41
