# ## path: tests/test_odebvp.py
import math

import numpy as np
import pytest
from scipy.linalg import expm

from fbi_patchy.errors import IntegrationError, NonConvergence, PeriodicityViolation, SingularShooting
from fbi_patchy.logic.odebvp import (
    TWO_PI,
    closure_bound,
    integrate,
    monodromy,
    periodic_mesh,
    periodic_spline,
    solve_periodic_linear,
    solve_periodic_nonlinear,
)
from tests.helpers import max_abs


def _constant_matrix(M):
    M = np.asarray(M, dtype=float)
    return lambda theta: np.repeat(M[:, :, None], np.size(theta), axis=2)


# -----------------------------------------------------------------------------
# Initial-value problems
# -----------------------------------------------------------------------------
def test_exponential_decay():
    traj = integrate(lambda t, y: -y, (0.0, 2.0), [1.0], 1e-12)
    assert traj.y[0, -1] == pytest.approx(math.exp(-2.0), rel=1e-10)
    assert float(traj(1.0)[0]) == pytest.approx(math.exp(-1.0), rel=1e-8)


def test_backward_integration():
    traj = integrate(lambda t, y: -y, (2.0, 0.0), [math.exp(-2.0)], 1e-12)
    assert traj.y[0, -1] == pytest.approx(1.0, rel=1e-10)


def test_hamiltonian_drift_is_small():
    rhs = lambda t, y: np.array([y[1], -y[0]])
    traj = integrate(rhs, (0.0, 20.0), [1.0, 0.0], 1e-12)
    energy = traj.y[0] ** 2 + traj.y[1] ** 2
    assert max_abs(energy, 1.0) <= 1e-8


def test_sampled_output():
    grid = np.linspace(0.0, 1.0, 5)
    traj = integrate(lambda t, y: np.ones_like(y), (0.0, 1.0), [0.0], 1e-10, t_eval=grid)
    np.testing.assert_allclose(traj.t, grid)
    np.testing.assert_allclose(traj.y[0], grid, atol=1e-12)


def test_empty_span_is_rejected():
    with pytest.raises(IntegrationError):
        integrate(lambda t, y: y, (1.0, 1.0), [1.0])


def test_non_finite_derivative_is_reported():
    with pytest.raises(IntegrationError):
        integrate(lambda t, y: np.array([np.nan]), (0.0, 1.0), [1.0])


def test_error_shrinks_at_fifth_order():
    errors = []
    for step in (0.2, 0.1):
        # tol=1.0 leaves max_step in control so the error tracks the step size
        traj = integrate(lambda t, y: -y, (0.0, 2.0), [1.0], tol=1.0, max_step=step)
        errors.append(abs(traj.y[0, -1] - math.exp(-2.0)))
    assert errors[0] / errors[1] >= 8.0


# -----------------------------------------------------------------------------
# Periodic linear problems
# -----------------------------------------------------------------------------
def test_forced_scalar_equation():
    # y' = y - sin θ has the periodic solution (cos θ + sin θ)/2
    mesh = periodic_mesh(64)
    traj = solve_periodic_linear(_constant_matrix([[1.0]]), lambda th: -np.sin(th)[None, :], mesh, 1e-11, 4)
    expected = (np.cos(mesh) + np.sin(mesh)) / 2
    assert max_abs(traj.y[0], expected) <= 1e-8
    theta = np.array([0.3, 1.7, 5.9])
    assert max_abs(traj(theta)[0], (np.cos(theta) + np.sin(theta)) / 2) <= 1e-6


def test_constant_forcing():
    traj = solve_periodic_linear(_constant_matrix([[-2.0]]), lambda th: 2.0 * np.ones((1, np.size(th))), periodic_mesh(16), 1e-11, 2)
    np.testing.assert_allclose(traj.y[0], 1.0, atol=1e-9)


def test_monodromy_matches_matrix_exponential(linear_definition):
    B = linear_definition.center.B
    M = monodromy(_constant_matrix(B), 3, segments=8, integrator_tol=1e-12)
    exact = expm(TWO_PI * B)
    np.testing.assert_allclose(M, exact, atol=1e-8 * np.max(np.abs(exact)))
    multipliers = np.sort(np.abs(np.linalg.eigvals(M)))
    np.testing.assert_allclose(multipliers, [math.exp(-TWO_PI), math.exp(math.pi), math.exp(math.pi)], rtol=1e-6)


def test_resonant_problem_is_singular():
    with pytest.raises(SingularShooting):
        solve_periodic_linear(_constant_matrix([[0.0]]), lambda th: np.zeros((1, np.size(th))), periodic_mesh(8), 1e-10, 2)


# -----------------------------------------------------------------------------
# Periodic nonlinear problems
# -----------------------------------------------------------------------------
def test_newton_finds_constant_orbit():
    rhs = lambda theta, y: -(y - 0.7) ** 3 - (y - 0.7)
    traj = solve_periodic_nonlinear(rhs, 0.2, mesh=periodic_mesh(16), segments=4)
    np.testing.assert_allclose(traj.y[0], 0.7, atol=1e-8)


def test_newton_on_forced_equation():
    rhs = lambda theta, y: y - np.sin(theta)
    jac = lambda theta, y: np.ones((1, 1) + np.shape(theta))
    mesh = periodic_mesh(64)
    traj = solve_periodic_nonlinear(rhs, 0.0, jac=jac, mesh=mesh, integrator_tol=1e-11, segments=8)
    assert max_abs(traj.y[0], (np.cos(mesh) + np.sin(mesh)) / 2) <= 1e-8
    assert traj.monodromy.shape == (1, 1)
    assert traj.monodromy[0, 0] == pytest.approx(math.exp(TWO_PI), rel=1e-6)


def test_pinned_orbit_is_integrated_once():
    traj = solve_periodic_nonlinear(lambda th, y: np.zeros_like(y), None, pinned=[1.5], mesh=periodic_mesh(8))
    np.testing.assert_allclose(traj.y, 1.5)


def test_pinned_orbit_that_does_not_close():
    with pytest.raises(PeriodicityViolation):
        solve_periodic_nonlinear(lambda th, y: np.ones_like(y), None, pinned=[0.0], mesh=periodic_mesh(8))


def test_closure_bound_scales_with_the_solution():
    assert closure_bound(1e-9, np.array([[2.0, -4.0]]), 1e-12) == pytest.approx(5e-9)
    assert closure_bound(1e-9, np.array([[0.0]]), 1e-7) == 1e-7
    err = PeriodicityViolation(1e-3, closure_bound(1e-9, np.array([[2.0, -4.0]]), 1e-12))
    assert err.tol == pytest.approx(5e-9)
    assert "5.000e-09" in str(err)


def test_duffing_radius_from_pinned_start(duffing_polar):
    rhs = lambda theta, y: np.asarray(duffing_polar.radial_rate(theta, y[0]))[None, :]
    traj = solve_periodic_nonlinear(rhs, None, pinned=[1.0], mesh=periodic_mesh(64), integrator_tol=1e-12)
    assert float(traj(math.pi / 2)[0]) == pytest.approx(math.sqrt(1.125), abs=1e-6)
    assert float(traj(math.pi)[0]) == pytest.approx(1.0, abs=1e-8)


def test_gronwall_bound_on_radius(duffing_polar):
    rhs = lambda theta, y: np.asarray(duffing_polar.radial_rate(theta, y[0]))[None, :]
    traj = solve_periodic_nonlinear(rhs, None, pinned=[0.5], mesh=periodic_mesh(64))
    theta = np.linspace(0.0, TWO_PI, 200)
    rate = np.max(np.abs(duffing_polar.R(theta, np.linspace(0.4, 0.6, 200)[:, None])))
    assert np.max(traj.y[0]) <= 0.5 * math.exp(rate * TWO_PI)
    assert np.min(traj.y[0]) >= 0.5 * math.exp(-rate * TWO_PI)


def test_iteration_budget_is_enforced():
    rhs = lambda theta, y: y - np.sin(theta)
    with pytest.raises(NonConvergence):
        solve_periodic_nonlinear(rhs, 3.0, mesh=periodic_mesh(8), max_iter=0, segments=2)


# -----------------------------------------------------------------------------
# Mesh and splines
# -----------------------------------------------------------------------------
def test_mesh_includes_both_endpoints():
    mesh = periodic_mesh(32)
    assert mesh.shape == (33,)
    assert mesh[0] == 0.0
    assert mesh[-1] == pytest.approx(TWO_PI)


def test_spline_reproduces_samples_and_wraps():
    mesh = periodic_mesh(32)
    samples = np.vstack([np.cos(mesh), np.sin(2 * mesh)])
    spline = periodic_spline(mesh, samples)
    np.testing.assert_allclose(spline(mesh), samples, atol=1e-14)
    assert max_abs(spline(1.1), [math.cos(1.1), math.sin(2.2)]) <= 1e-3
