import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hvibem.kernels import (LameParameters, SingularityError, fundamental_solution, lame_from_engineering,
                            linear_field_stress, linear_field_traction, regularized_hypersingular_kernel,
                            traction_kernel)
from hvibem.mesh import build_rectangle_boundary
from conftest import ALL_NEUMANN

coords = st.floats(-3, 3, allow_nan=False)
angles = st.floats(0, 2 * np.pi)


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_benchmark_lame_values(steel):
    assert steel.lam == pytest.approx(210000 * 0.3 / 0.91)
    assert steel.lam == pytest.approx(69230.769, rel=1e-7)
    assert steel.mu == pytest.approx(161538.462, rel=1e-7)


def test_zero_poisson_and_incompressible_limit():
    p = lame_from_engineering(5.0, 0.0)
    assert (p.lam, p.mu) == (0.0, 5.0)
    q = lame_from_engineering(1.0, 0.5 - 1e-12)
    assert q.lam == pytest.approx(0.5 / 0.75)


@pytest.mark.parametrize("nu", [-0.1, 0.5, 0.7])
def test_poisson_out_of_range(nu):
    with pytest.raises(ValueError):
        lame_from_engineering(1.0, nu)


def test_from_lame_round_trip(steel):
    p = LameParameters.from_lame(steel.lam, steel.mu)
    assert p.E == pytest.approx(steel.E)
    assert p.nu == pytest.approx(steel.nu)


def test_kelvin_matrix_along_axis(steel):
    r = 0.3
    c1, c2 = steel.c_single, steel.c_dyad
    Emat = fundamental_solution([r, 0.0], [0.0, 0.0], steel)
    np.testing.assert_allclose(Emat, np.diag([c1 * (-np.log(r) + c2), -c1 * np.log(r)]), rtol=1e-14)


def test_coincident_points_rejected(steel):
    with pytest.raises(SingularityError):
        fundamental_solution([1.0, 2.0], [1.0, 2.0], steel)
    with pytest.raises(SingularityError):
        traction_kernel([0.0, 0.0], [0.0, 0.0], [1.0, 0.0], steel)


@settings(max_examples=60, deadline=None)
@given(coords, coords, coords, coords, angles, coords, coords)
def test_kelvin_symmetry_rotation_translation(x1, x2, y1, y2, theta, c1, c2):
    p = lame_from_engineering(2.0, 0.25)
    x, y = np.array([x1, x2]), np.array([y1, y2])
    if np.linalg.norm(x - y) < 1e-3:
        return
    E = fundamental_solution(x, y, p)
    np.testing.assert_allclose(E, E.T, atol=1e-12)
    np.testing.assert_allclose(E, fundamental_solution(y, x, p), atol=1e-12)
    c = np.array([c1, c2])
    np.testing.assert_allclose(E, fundamental_solution(x + c, y + c, p), atol=1e-9)
    R = rot(theta)
    np.testing.assert_allclose(R @ E @ R.T, fundamental_solution(R @ x, R @ y, p), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(coords, coords, coords, coords, angles, angles)
def test_traction_rotation_and_normal_flip(x1, x2, y1, y2, theta, phi):
    p = lame_from_engineering(2.0, 0.25)
    x, y = np.array([x1, x2]), np.array([y1, y2])
    if np.linalg.norm(x - y) < 1e-3:
        return
    n = np.array([np.cos(phi), np.sin(phi)])
    T = traction_kernel(x, y, n, p)
    np.testing.assert_allclose(traction_kernel(x, y, -n, p), -T, atol=1e-12)
    R = rot(theta)
    np.testing.assert_allclose(R @ T @ R.T, traction_kernel(R @ x, R @ y, R @ n, p), atol=1e-9)


def _fd_traction_of_kelvin(x, y, n, p, h=1e-6):
    """Traction at y of the columns of E(x, .), by finite-difference strains."""
    grad = np.zeros((2, 2, 2))  # [column i, component a, derivative b]
    for b in range(2):
        d = np.zeros(2)
        d[b] = h
        grad[:, :, b] = ((fundamental_solution(x, y + d, p) - fundamental_solution(x, y - d, p)) / (2 * h)).T
    out = np.zeros((2, 2))
    for i in range(2):
        out[i] = linear_field_traction(grad[i], n, p)
    return out


def test_traction_kernel_matches_hooke_of_kelvin(steel, rng):
    for _ in range(5):
        x, y = rng.uniform(-0.4, 0.4, 2), rng.uniform(-0.4, 0.4, 2)
        phi = rng.uniform(0, 2 * np.pi)
        n = np.array([np.cos(phi), np.sin(phi)])
        ref = _fd_traction_of_kelvin(x, y, n, steel)
        np.testing.assert_allclose(traction_kernel(x, y, n, steel), ref, rtol=1e-6,
                                   atol=1e-6 * np.abs(ref).max())


def test_double_layer_of_constants_inside_and_outside(steel):
    m = build_rectangle_boundary(1.0, 1.0, h=1 / 64, parts=ALL_NEUMANN, origin=(-0.5, -0.5))
    g, w = np.polynomial.legendre.leggauss(8)
    s = 0.5 * (g + 1)
    pts = m.starts[:, None, :] + s[None, :, None] * (m.ends - m.starts)[:, None, :]
    wts = (0.5 * w[None, :] * m.lengths[:, None]).ravel()
    nrm = np.repeat(m.normals, len(s), axis=0)
    for x, expected in (([0.05, -0.1], -1.0), ([1.3, 0.2], 0.0)):
        T = traction_kernel(np.array(x), pts.reshape(-1, 2), nrm, steel)
        total = np.einsum("q,qik->ik", wts, T)
        np.testing.assert_allclose(total, expected * np.eye(2), atol=1e-8)


def test_hypersingular_kernel_symmetric(steel):
    K = regularized_hypersingular_kernel([0.1, 0.2], [-0.3, 0.05], steel)
    np.testing.assert_allclose(K, K.T)


def test_linear_field_tractions(steel):
    lam, mu = steel.lam, steel.mu
    np.testing.assert_allclose(linear_field_traction(np.eye(2), [0, 1], steel), [0, 2 * lam + 2 * mu])
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(linear_field_stress(A, steel), np.diag([lam + 2 * mu, lam]))
    np.testing.assert_allclose(linear_field_traction(A, [0, -1], steel), [0, -lam], atol=1e-9)


@given(st.floats(-5, 5))
def test_rigid_rotation_has_no_traction(w):
    p = lame_from_engineering(1.0, 0.3)
    A = np.array([[0.0, -w], [w, 0.0]])
    np.testing.assert_allclose(linear_field_traction(A, [0.6, 0.8], p), 0.0, atol=1e-12)
