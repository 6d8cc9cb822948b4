import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hvibem.hvi import fb, fb_gradient
from hvibem.solver import (FunctionSystem, SolverBreakdown, SolverInputError, TrustRegionConfig,
                           merit_and_gradient, solve)


def linear(A, b):
    return FunctionSystem(lambda z: A @ z - b, lambda z: A)


ROSENBROCK = FunctionSystem(lambda z: np.array([1 - z[0], 10 * (z[1] - z[0] ** 2)]),
                            lambda z: np.array([[-1.0, 0.0], [-20 * z[0], 10.0]]))


def fb_toy(rhs):
    """``z + lam = rhs`` with ``z <= 0``, ``lam >= 0`` complementary."""
    def F(v):
        return np.array([v[0] + v[1] - rhs, fb(v[1], -v[0])])

    def J(v):
        da, db = fb_gradient(v[1], -v[0])
        return np.array([[1.0, 1.0], [-db, da]])

    return FunctionSystem(F, J)


def test_linear_residual():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(6, 6))
    A = M @ M.T + 6 * np.eye(6)
    b = rng.normal(size=6)
    z, rep = solve(linear(A, b), np.zeros(6), TrustRegionConfig(merit_tol=1e-22))
    assert rep.iterations <= 3
    assert rep.merit <= 1e-20
    np.testing.assert_allclose(z, np.linalg.solve(A, b), atol=1e-10)


def test_rosenbrock():
    z, rep = solve(ROSENBROCK, np.array([-1.2, 1.0]), TrustRegionConfig(merit_tol=1e-18))
    np.testing.assert_allclose(z, [1.0, 1.0], atol=1e-8)
    assert rep.merit <= 1e-16


@pytest.mark.parametrize("rhs, expected", [(1.0, (0.0, 1.0)), (-2.0, (-2.0, 0.0)), (0.0, (0.0, 0.0))])
def test_fb_toy_kkt_cases(rhs, expected):
    for z0 in ([0.5, 0.5], [-1.0, 3.0], [0.3, -0.7]):
        z, rep = solve(fb_toy(rhs), np.array(z0), TrustRegionConfig(merit_tol=1e-26))
        np.testing.assert_allclose(z, expected, atol=1e-10)
        assert rep.scaled_merit <= 1e-12


def test_merit_history_nonincreasing_and_reasons():
    _, rep = solve(ROSENBROCK, np.array([-1.2, 1.0]))
    assert np.all(np.diff(rep.history) < 0)
    assert rep.reason == "merit_tol"
    _, rep = solve(ROSENBROCK, np.array([-1.2, 1.0]), TrustRegionConfig(max_iterations=2))
    assert rep.reason == "max_iter" and rep.iterations == 2
    # nonzero local minimum: F = (z^2 + 1), minimizer z = 0, gradient vanishes
    sys1 = FunctionSystem(lambda z: np.array([z[0] ** 2 + 1]), lambda z: np.array([[2 * z[0]]]))
    _, rep = solve(sys1, np.array([1.0]))
    assert rep.reason in ("gradient_tol", "radius_collapse")
    assert rep.merit == pytest.approx(0.5, abs=1e-8)


def test_deterministic():
    a = solve(ROSENBROCK, np.array([-1.2, 1.0]))
    b = solve(ROSENBROCK, np.array([-1.2, 1.0]))
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1].history == b[1].history


def test_input_errors():
    with pytest.raises(SolverInputError):
        solve(ROSENBROCK, np.array([np.nan, 1.0]))
    bad = FunctionSystem(lambda z: np.array([np.inf]), lambda z: np.array([[1.0]]))
    with pytest.raises(SolverInputError):
        solve(bad, np.array([0.0]))
    blowup = FunctionSystem(lambda z: np.array([1.0 if z[0] == 0 else np.nan]), lambda z: np.array([[1.0]]))
    with pytest.raises(SolverBreakdown):
        solve(blowup, np.array([0.0]))
    with pytest.raises(ValueError):
        TrustRegionConfig(max_iterations=0)
    with pytest.raises(ValueError):
        TrustRegionConfig(merit_tol=0.0)


def test_merit_and_gradient():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    b = np.array([1.0, 1.0])
    sys_ = linear(A, b)
    th, g = merit_and_gradient(sys_, np.linalg.solve(A, b))
    assert th == pytest.approx(0.0, abs=1e-30) and np.allclose(g, 0)
    z = np.array([0.3, -0.4])
    th, g = merit_and_gradient(ROSENBROCK, z)
    d = 1e-6
    fd = [(merit_and_gradient(ROSENBROCK, z + d * e)[0] - merit_and_gradient(ROSENBROCK, z - d * e)[0]) / (2 * d)
          for e in np.eye(2)]
    np.testing.assert_allclose(g, fd, rtol=1e-6)
    twice = FunctionSystem(lambda v: 2 * ROSENBROCK.residual(v), lambda v: 2 * ROSENBROCK.jacobian(v))
    assert merit_and_gradient(twice, z)[0] == pytest.approx(4 * th)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_fb_toy_random_starts(rhs, z1, lam):
    z, rep = solve(fb_toy(rhs), np.array([z1, lam]), TrustRegionConfig(merit_tol=1e-26))
    expected = (0.0, rhs) if rhs >= 0 else (rhs, 0.0)
    np.testing.assert_allclose(z, expected, atol=1e-9)
