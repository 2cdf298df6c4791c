# ## path: tests/test_patchy.py
import math

import numpy as np
import pytest

from fbi_patchy.errors import OutsideDomain, PatchyBuildError, SeamError, ValidationError
from fbi_patchy.logic.odebvp import periodic_mesh
from fbi_patchy.logic.patchy import (
    build_patchy,
    compute_patch,
    compute_radial_curve,
    convergence_schedule,
    convergence_study,
    pde_residual,
    radial_error_profile,
    sup_error,
    uniform_schedule,
)
from fbi_patchy.logic.seed import compute_seed
from fbi_patchy.logic.systems import polar_reduce
from fbi_patchy.storage.definitions import parse_definition
from tests.helpers import max_abs


def _square(w1, w2):
    return np.array([np.asarray(w1) ** 2 + np.asarray(w2) ** 2])


@pytest.fixture(scope="module")
def square_polar(square_definition):
    return polar_reduce(square_definition.center)


@pytest.fixture(scope="module")
def square_seed(square_definition):
    return compute_seed(square_definition.center, 2)


@pytest.fixture(scope="module")
def square_solution(square_polar, square_seed):
    return build_patchy(square_polar, square_seed, 2, [0.5, 1.0], periodic_mesh(32))


@pytest.fixture(scope="module")
def eggcarton_solution(eggcarton_definition):
    center = eggcarton_definition.center
    return build_patchy(polar_reduce(center), compute_seed(center, 2), 2, [0.5, 1.0], periodic_mesh(64))


@pytest.fixture(scope="module")
def linear_solution(linear_definition):
    center = linear_definition.center
    return build_patchy(polar_reduce(center), compute_seed(center, 1), 1, [0.25, 0.5], periodic_mesh(64))


# -----------------------------------------------------------------------------
# Radial curves
# -----------------------------------------------------------------------------
def test_harmonic_curve_is_a_circle(square_polar, coarse_mesh):
    curve = compute_radial_curve(square_polar, 0.5, mesh=coarse_mesh)
    np.testing.assert_allclose(curve.samples, 0.5, atol=1e-12)
    assert curve(1.234) == pytest.approx(0.5, abs=1e-12)
    assert curve.r_init == 0.5


def test_duffing_curve_follows_energy_level(duffing_polar):
    curve = compute_radial_curve(duffing_polar, 1.0, mesh=periodic_mesh(64), index=3)
    assert curve.index == 3
    assert float(curve(math.pi / 2)) == pytest.approx(math.sqrt(1.125), abs=1e-6)
    assert float(curve(math.pi)) == pytest.approx(1.0, abs=1e-6)


def test_launch_radius_must_be_positive(square_polar, coarse_mesh):
    with pytest.raises(ValidationError):
        compute_radial_curve(square_polar, 0.0, mesh=coarse_mesh)


# -----------------------------------------------------------------------------
# Single patches
# -----------------------------------------------------------------------------
def test_square_patch_coefficients_are_exact(square_polar, square_seed, coarse_mesh):
    inner = compute_radial_curve(square_polar, 0.5, mesh=coarse_mesh)
    patch = compute_patch(square_polar, inner, 2, square_seed, index=1)
    assert patch.coeffs.shape == (3, 1, 33)
    np.testing.assert_allclose(patch.coeffs[0], 0.25, atol=1e-8)
    np.testing.assert_allclose(patch.coeffs[1], 1.0, atol=1e-8)
    np.testing.assert_allclose(patch.coeffs[2], 1.0, atol=1e-8)
    assert patch.residual < 1e-6
    assert patch.evaluate(0.4, 0.8)[0] == pytest.approx(0.64, abs=1e-8)


def test_eggcarton_leading_coefficient(eggcarton_solution):
    patch = eggcarton_solution.patches[1]
    np.testing.assert_allclose(patch.coefficients(math.pi / 2)[0], [0.0, 1.0, 0.0], atol=1e-6)


def test_eggcarton_first_radial_coefficient(eggcarton_solution):
    patch = eggcarton_solution.patches[1]
    theta = np.array([0.0, math.pi / 4, 1.0, 2.0, math.pi])
    c, s = np.cos(theta), np.sin(theta)
    expected = c * np.cos(c) * np.sin(s) + s * np.sin(c) * np.cos(s)
    assert max_abs(patch.coefficients(theta)[1, 2], expected) <= 1e-5
    assert max_abs(patch.coefficients(theta)[1, 0], c) <= 1e-5


# -----------------------------------------------------------------------------
# Assembled solutions
# -----------------------------------------------------------------------------
def test_square_solution_is_exact(square_solution):
    rng = np.random.default_rng(5)
    theta = rng.uniform(0.0, 2 * np.pi, 200)
    r = rng.uniform(0.0, 1.5, 200)
    np.testing.assert_allclose(square_solution.evaluate(theta, r)[0], r ** 2, atol=1e-8)
    assert square_solution.k == 2
    assert square_solution.increments == [0.5, 0.5]


def test_region_lookup(square_solution):
    regions = square_solution.region_index(np.zeros(4), [0.0, 0.3, 0.7, 1.2])
    np.testing.assert_array_equal(regions, [0, 0, 1, 2])


def test_outer_extent(square_solution):
    np.testing.assert_allclose(square_solution.outer_extent(np.array([0.0, 3.0])), 1.5, atol=1e-12)


def test_points_beyond_the_last_patch(square_solution):
    with pytest.raises(OutsideDomain):
        square_solution.evaluate(0.0, 1.6)
    values = square_solution.evaluate([0.0, 0.0], [1.0, 1.6], outside="nan")
    assert values[0, 0] == pytest.approx(1.0, abs=1e-8)
    assert np.isnan(values[0, 1])
    with pytest.raises(ValueError):
        square_solution.evaluate(0.0, 1.6, outside="clip")


def test_negative_radius_is_rejected(square_solution):
    with pytest.raises(ValidationError):
        square_solution.evaluate(0.0, -0.1)


def test_angle_wraps(square_solution):
    a = square_solution.evaluate(0.3, 1.1)
    b = square_solution.evaluate(0.3 + 2 * np.pi, 1.1)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_cartesian_evaluation(eggcarton_solution, eggcarton_definition):
    np.testing.assert_allclose(eggcarton_solution.evaluate_cartesian(1.2, 0.0), [1.2, 0.0, 0.0], atol=1e-6)
    rng = np.random.default_rng(9)
    theta = rng.uniform(0.0, 2 * np.pi, 100)
    r = rng.uniform(0.0, 1.4, 100)
    w1, w2 = r * np.cos(theta), r * np.sin(theta)
    truth = eggcarton_definition.center.reference_at(w1, w2)
    assert max_abs(eggcarton_solution.evaluate_cartesian(w1, w2), truth) <= 0.05


def test_linear_patches_reproduce_the_seed(linear_solution, linear_definition):
    theta = np.linspace(0.0, 2 * np.pi, 17)
    r = np.full(theta.shape, 0.6)
    w1, w2 = r * np.cos(theta), r * np.sin(theta)
    expected = linear_definition.center.reference_at(w1, w2)
    assert max_abs(linear_solution.evaluate(theta, r), expected) <= 1e-5


def test_empty_schedule_leaves_the_seed(square_polar, square_seed, coarse_mesh):
    sol = build_patchy(square_polar, square_seed, 2, [], coarse_mesh)
    assert sol.k == 0
    assert np.isinf(sol.outer_extent(0.0))
    assert sol.evaluate(1.0, 3.0)[0] == pytest.approx(9.0)


@pytest.mark.parametrize("schedule", [[1.0, 0.5], [0.0, 1.0], [0.5, 0.5]])
def test_schedule_must_increase(square_polar, square_seed, coarse_mesh, schedule):
    with pytest.raises(ValidationError):
        build_patchy(square_polar, square_seed, 2, schedule, coarse_mesh)


def test_schedules():
    assert uniform_schedule(3, 0.5) == [0.5, 1.0, 1.5]
    assert convergence_schedule(3, 2.0) == pytest.approx([0.5, 1.0, 1.5])
    with pytest.raises(ValidationError):
        uniform_schedule(2, 0.0)


def test_build_metadata(square_solution):
    assert square_solution.metadata["order"] == 2
    assert square_solution.metadata["seed_order"] == 2
    assert square_solution.metadata["theta_mesh"] == 32


def test_failed_annulus_keeps_completed_patches(softening_text, coarse_mesh):
    center = parse_definition(softening_text).center
    with pytest.raises(PatchyBuildError) as excinfo:
        build_patchy(polar_reduce(center), compute_seed(center, 1), 1, [0.5, 2.0], coarse_mesh)
    err = excinfo.value
    assert err.index == 2
    assert err.stage == "radial curve"
    assert err.partial.k == 1
    assert err.partial.schedule == [0.5]


def test_random_points_fall_in_exactly_one_region(duffing_polar, duffing_definition):
    sol = build_patchy(duffing_polar, compute_seed(duffing_definition.center, 2), 1, [0.3, 0.6, 0.9], periodic_mesh(64))
    rng = np.random.default_rng(11)
    theta = rng.uniform(0.0, 2 * np.pi, 1000)
    r = rng.uniform(0.0, 1.0, 1000) * sol.outer_extent(theta)
    bounds = np.vstack([np.zeros(theta.shape), sol.curve_values(theta), sol.outer_extent(theta) + 1e-12])
    assert np.all(np.diff(bounds, axis=0) > 0)
    members = (r[None] >= bounds[:-1]) & (r[None] < bounds[1:])
    np.testing.assert_array_equal(members.sum(axis=0), 1)
    np.testing.assert_array_equal(np.argmax(members, axis=0), sol.region_index(theta, r))
    assert np.all(np.isfinite(sol.evaluate(theta, r)))


def test_shared_launch_radii_give_the_same_curves(duffing_polar, duffing_definition):
    seed = compute_seed(duffing_definition.center, 2)
    coarse = build_patchy(duffing_polar, seed, 1, uniform_schedule(4, 0.25), periodic_mesh(32))
    fine = build_patchy(duffing_polar, seed, 1, uniform_schedule(8, 0.125), periodic_mesh(32))
    for j, curve in enumerate(coarse.curves):
        np.testing.assert_allclose(fine.curves[2 * j + 1].samples, curve.samples, atol=1e-6)


def test_neighbouring_patches_agree_as_increments_halve(eggcarton_definition):
    center = eggcarton_definition.center
    polar, seed = polar_reduce(center), compute_seed(center, 2)
    gaps = []
    for schedule in (uniform_schedule(4, 0.25), uniform_schedule(8, 0.125)):
        sol = build_patchy(polar, seed, 1, schedule, periodic_mesh(32))
        gaps.append(max(
            float(np.max(np.abs(nxt.coeffs - prev.coeffs))) for prev, nxt in zip(sol.patches, sol.patches[1:])
        ))
    assert gaps[1] <= 0.7 * gaps[0]


# -----------------------------------------------------------------------------
# Residuals and error studies
# -----------------------------------------------------------------------------
def test_residual_of_linear_solution(linear_solution, linear_definition):
    polar = polar_reduce(linear_definition.center)
    theta = np.array([0.2, 1.9, 3.3, 5.0])
    assert np.max(pde_residual(polar, linear_solution, theta, 0.1)) <= 1e-8
    assert np.max(pde_residual(polar, linear_solution, theta, 0.4)) <= 1e-4


def test_residual_of_square_patches(square_polar, square_solution):
    theta = np.array([0.1, 2.0, 4.0])
    assert np.max(pde_residual(square_polar, square_solution, theta, 0.75)) <= 1e-7
    assert np.max(pde_residual(square_polar, square_solution, theta, 1.3)) <= 1e-7


def test_residual_refuses_seams(square_polar, square_solution):
    with pytest.raises(SeamError):
        pde_residual(square_polar, square_solution, 0.5, 0.5 + 5e-5)


def test_sup_error_of_exact_solution(square_solution):
    assert sup_error(square_solution, _square) <= 1e-8


def test_radial_error_grows_with_depth(eggcarton_solution, eggcarton_definition):
    reference = eggcarton_definition.center.reference_at
    frame = radial_error_profile(eggcarton_solution, reference, 2, math.pi / 4, [0.05, 0.1, 0.2])
    assert list(frame.columns) == ["sigma", "r", "error"]
    slope = math.log(frame["error"].iloc[-1] / frame["error"].iloc[0]) / math.log(4.0)
    assert slope >= 2.5
    with pytest.raises(ValidationError):
        radial_error_profile(eggcarton_solution, reference, 3, 0.0, [0.1])


def test_convergence_study_table(square_polar, square_seed, coarse_mesh):
    frame = convergence_study(square_polar, square_seed, 2, [1, 2], 1.0, _square, coarse_mesh)
    assert list(frame.columns) == ["k", "thickness", "sup_error", "ratio"]
    assert frame["k"].tolist() == [1, 2]
    assert frame["thickness"].tolist() == pytest.approx([0.5, 1.0 / 3.0])
    assert np.isnan(frame["ratio"].iloc[0])
    assert (frame["sup_error"] <= 1e-8).all()


@pytest.mark.slow
def test_eggcarton_error_falls_with_thinner_annuli(eggcarton_definition):
    center = eggcarton_definition.center
    frame = convergence_study(
        polar_reduce(center), compute_seed(center, 2), 2, [5, 10, 20], 2.0, center.reference_at, periodic_mesh(128)
    )
    assert frame["k"].tolist() == [5, 10, 20]
    assert np.all(np.diff(frame["sup_error"].to_numpy()) < 0)
    assert (frame["ratio"].iloc[1:] <= 0.35).all()


@pytest.mark.slow
def test_volcano_taylor_error_grows_with_degree(volcano_definition):
    center = volcano_definition.center
    W1, W2 = np.meshgrid(np.linspace(-2.0, 2.0, 41), np.linspace(-2.0, 2.0, 41), indexing="ij")
    truth = center.reference_at(W1, W2)
    full = compute_seed(center, 20)
    taylor = {d: max_abs(full.truncate(d).evaluate(W1, W2), truth) for d in (10, 20)}
    assert taylor[10] < taylor[20]

    sol = build_patchy(polar_reduce(center), compute_seed(center, 1), 1, uniform_schedule(60, 0.05), periodic_mesh(128))
    assert sol.k == 60
    assert sup_error(sol, center.reference_at) < taylor[10]
