# ## path: fbi_patchy/logic/patchy.py
"""Annular patchy solution of the reduced center-manifold PDE.

Radial curves r_j(θ) are closed exosystem orbits launched at the schedule
radii. Patch j lives between r_{j-1}(θ) and r_j(θ) and carries the radial
Taylor expansion Σ_i c_i(θ)·σ^i in the depth σ = r - r_{j-1}(θ); the seed
polynomial covers the inner disk. The last patch extends by its increment.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from fbi_patchy.config import settings
from fbi_patchy.errors import (
    FbiError,
    OutsideDomain,
    PatchyBuildError,
    SeamError,
    SolverError,
    ValidationError,
)
from fbi_patchy import constants as const
from fbi_patchy.logic.jets import Jet, value_of
from fbi_patchy.logic.odebvp import (
    TWO_PI,
    Trajectory,
    periodic_mesh,
    periodic_trajectory,
    solve_periodic_linear,
    solve_periodic_nonlinear,
)
from fbi_patchy.logic.seed import SeedPolynomial, eval_seed_polar
from fbi_patchy.logic.systems import PolarReducedSystem

logger = logging.getLogger(__name__)

Reference = Callable[[Any, Any], np.ndarray]


def _stack(values: Sequence[Any], shape) -> np.ndarray:
    return np.array([np.broadcast_to(value_of(v), shape) for v in values], dtype=float)


def _jacobian(outputs: Sequence[Any], n: int, shape) -> np.ndarray:
    """∂out/∂z from order-1 jets in the n z-variables."""
    J = np.zeros((len(outputs), n) + tuple(shape))
    for i, out in enumerate(outputs):
        if isinstance(out, Jet):
            J[i] = np.broadcast_to(out.coeffs[1:1 + n], (n,) + tuple(shape))
    return J


# -----------------------------------------------------------------------------
# Building blocks
# -----------------------------------------------------------------------------
@dataclass
class RadialCurve:
    index: int
    r_init: float
    trajectory: Trajectory

    def __call__(self, theta):
        return self.trajectory(theta)[0]

    @property
    def mesh(self) -> np.ndarray:
        return self.trajectory.t

    @property
    def samples(self) -> np.ndarray:
        return self.trajectory.y[0]

    @classmethod
    def from_samples(cls, index: int, r_init: float, mesh, samples) -> "RadialCurve":
        samples = np.asarray(samples, dtype=float).reshape(1, -1)
        return cls(index, r_init, periodic_trajectory(np.asarray(mesh, dtype=float), samples, 0.0))


@dataclass
class AnnulusPatch:
    index: int
    inner: RadialCurve
    order: int
    coeffs: np.ndarray          # (order + 1, n, mesh) Taylor coefficients c_i = ∂^iΨ/∂σ^i / i!
    residual: float = 0.0
    iterations: int = 0
    _curve: Trajectory = field(init=False, repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        flat = self.coeffs.reshape(-1, self.coeffs.shape[-1])
        self._curve = periodic_trajectory(self.inner.mesh, flat, 0.0)

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    def coefficients(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self._curve(theta).reshape((self.order + 1, self.n) + theta.shape)

    def evaluate(self, theta, r) -> np.ndarray:
        theta, r = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(r, dtype=float))
        sigma = r - self.inner(theta)
        c = self.coefficients(theta)
        out = c[self.order].copy()
        for i in range(self.order - 1, -1, -1):
            out = out * sigma + c[i]
        return out


def compute_radial_curve(
    polar: PolarReducedSystem,
    r_init: float,
    guess: Optional[RadialCurve] = None,
    index: int = 0,
    mesh: Optional[np.ndarray] = None,
) -> RadialCurve:
    """Closed orbit through (θ, r) = (0, r_init) as a periodic curve r(θ)."""
    if r_init <= 0:
        raise ValidationError(f"launch radius must be positive, got {r_init}")

    def rhs(theta, y):
        return np.asarray(polar.radial_rate(theta, y[0]), dtype=float)[None, :]

    traj = solve_periodic_nonlinear(rhs, guess if guess is not None else r_init, pinned=[r_init], mesh=mesh)
    if np.min(traj.y[0]) <= 0:
        raise SolverError(f"radial curve {index} reaches the origin")
    logger.debug(f"Radial curve {index}: r(0)={r_init:.6g}, range [{traj.y[0].min():.6g}, {traj.y[0].max():.6g}]")
    return RadialCurve(index, float(r_init), traj)


class _CoefficientForcing:
    """A(θ) and g_i(θ) of c_i' = (A - iρ₁) c_i + g_i along one inner curve."""

    def __init__(self, polar: PolarReducedSystem, inner: RadialCurve, known: List[Trajectory], i: int):
        self.polar = polar
        self.inner = inner
        self.known = known
        self.i = i
        self.n = polar.n

    def A(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        r_in = self.inner(theta)
        c0 = self.known[0](theta)
        z = [Jet.variable(c, c0[c], 1, self.n) for c in range(self.n)]
        J = _jacobian(self.polar.F(theta, r_in, z), self.n, theta.shape)
        rho1 = self.polar.radial_rate(theta, Jet.variable(0, r_in, 1, 1)).coeffs[1]
        return J - self.i * rho1[None, None] * np.eye(self.n)[:, :, None]

    def g(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        i = self.i
        r = Jet.variable(0, self.inner(theta), i, 1)
        coeffs = np.zeros((i + 1, self.n) + theta.shape)
        for k, curve in enumerate(self.known):
            coeffs[k] = curve(theta)
        psi = [Jet(coeffs[:, c], i, 1) for c in range(self.n)]
        F = self.polar.F(theta, r, psi)
        rho = self.polar.radial_rate(theta, r)
        transport = rho - rho.value
        out = np.zeros((self.n,) + theta.shape)
        for c in range(self.n):
            total = F[c] - psi[c].derivative(0) * transport
            out[c] = total.coeffs[i]
        return out


def compute_patch(
    polar: PolarReducedSystem,
    inner: RadialCurve,
    order: int,
    guess: Union[SeedPolynomial, AnnulusPatch],
    index: int = 1,
) -> AnnulusPatch:
    """Coefficient curves c_0..c_order of the patch anchored on ``inner``."""
    n = polar.n
    mesh = inner.mesh

    if isinstance(guess, SeedPolynomial):
        def initial(theta):
            return eval_seed_polar(guess, theta, inner(theta), 0)[0]
    else:
        def initial(theta):
            return guess.evaluate(theta, inner(theta))

    def rhs(theta, y):
        return _stack(polar.F(theta, inner(theta), list(y)), theta.shape)

    def jac(theta, y):
        z = [Jet.variable(c, y[c], 1, n) for c in range(n)]
        return _jacobian(polar.F(theta, inner(theta), z), n, theta.shape)

    stage = "coefficient 0"
    try:
        c0 = solve_periodic_nonlinear(rhs, initial, jac=jac, mesh=mesh)
        known = [c0]
        for i in range(1, order + 1):
            stage = f"coefficient {i}"
            forcing = _CoefficientForcing(polar, inner, list(known), i)
            known.append(solve_periodic_linear(forcing.A, forcing.g, mesh=mesh))
    except FbiError as err:
        raise PatchyBuildError(str(err), index, stage) from err

    # c_0 residual at mesh midpoints
    mid = 0.5 * (mesh[1:] + mesh[:-1])
    slope = np.array([_spline_slope(c0, mid, row) for row in range(n)])
    defect = slope - rhs(mid, c0(mid))
    residual = float(np.max(np.abs(defect))) / (1.0 + float(np.max(np.abs(c0.y))))
    if residual > const.COEFF_RESIDUAL_TOL:
        logger.warning(f"Patch {index}: c_0 residual {residual:.2e} exceeds {const.COEFF_RESIDUAL_TOL:g}")

    coeffs = np.stack([curve.y for curve in known])
    logger.debug(f"Patch {index}: {order + 1} coefficient curves, c_0 in {c0.iterations} Newton iterations")
    return AnnulusPatch(index, inner, order, coeffs, residual, c0.iterations)


def _spline_slope(traj: Trajectory, theta: np.ndarray, row: int, h: float = 1e-6) -> np.ndarray:
    return (traj(theta + h)[row] - traj(theta - h)[row]) / (2.0 * h)


# -----------------------------------------------------------------------------
# Assembled solution
# -----------------------------------------------------------------------------
@dataclass
class PatchySolution:
    name: str
    seed: SeedPolynomial
    curves: List[RadialCurve]
    patches: List[AnnulusPatch]
    order: int
    schedule: List[float]
    mesh: np.ndarray
    orientation: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.seed.n

    @property
    def k(self) -> int:
        return len(self.patches)

    @property
    def increments(self) -> List[float]:
        radii = [0.0] + list(self.schedule[:len(self.curves)])
        return [b - a for a, b in zip(radii, radii[1:])]

    def to_polar(self, w1, w2):
        w1 = np.asarray(w1, dtype=float)
        w2 = np.asarray(w2, dtype=float)
        theta = np.mod(np.arctan2(self.orientation * w2, w1), TWO_PI)
        return theta, np.hypot(w1, w2)

    def curve_values(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not self.curves:
            return np.zeros((0,) + theta.shape)
        return np.stack([curve(theta) for curve in self.curves])

    def outer_extent(self, theta) -> np.ndarray:
        """Largest radius covered along θ; infinite for a seed-only solution."""
        theta = np.asarray(theta, dtype=float)
        if not self.curves:
            return np.full(theta.shape, np.inf)
        return self.curves[-1](theta) + self.increments[-1]

    def region_index(self, theta, r) -> np.ndarray:
        """0 for the seed disk, j for patch j."""
        theta, r = np.broadcast_arrays(np.mod(np.asarray(theta, dtype=float), TWO_PI), np.asarray(r, dtype=float))
        return (r[None] >= self.curve_values(theta)).sum(axis=0)

    def _evaluate_region(self, region: int, theta, r) -> np.ndarray:
        if region == 0:
            return eval_seed_polar(self.seed, theta, r, 0)[0]
        return self.patches[region - 1].evaluate(theta, r)

    def evaluate(self, theta, r, outside: str = "raise") -> np.ndarray:
        """ψ̃(θ, r) with shape (n,) + broadcast shape; ``outside`` is 'raise' or 'nan'."""
        theta, r = np.broadcast_arrays(np.mod(np.asarray(theta, dtype=float), TWO_PI), np.asarray(r, dtype=float))
        if np.any(r < 0):
            raise ValidationError("radius must be nonnegative")
        out = np.full((self.n,) + theta.shape, np.nan)
        beyond = r > self.outer_extent(theta)
        if np.any(beyond):
            if outside == "raise":
                worst = float(np.max(r[beyond]))
                raise OutsideDomain(f"radius {worst:.6g} lies beyond the solved domain")
            if outside != "nan":
                raise ValueError(f"outside must be 'raise' or 'nan', got {outside!r}")
        regions = self.region_index(theta, r)
        for region in np.unique(regions[~beyond]):
            mask = (regions == region) & ~beyond
            out[:, mask] = self._evaluate_region(int(region), theta[mask], r[mask])
        return out

    def evaluate_cartesian(self, w1, w2, outside: str = "raise") -> np.ndarray:
        theta, r = self.to_polar(w1, w2)
        return self.evaluate(theta, r, outside)


# -----------------------------------------------------------------------------
# Pipeline
# -----------------------------------------------------------------------------
def uniform_schedule(k: int, thickness: float) -> List[float]:
    if k < 0 or thickness <= 0:
        raise ValidationError(f"need k >= 0 and a positive thickness, got k={k}, thickness={thickness}")
    return [(j + 1) * thickness for j in range(k)]


def convergence_schedule(k: int, outer: float) -> List[float]:
    """k patches whose last one ends at ``outer``."""
    return uniform_schedule(k, outer / (k + 1))


def _check_schedule(schedule: Sequence[float]) -> List[float]:
    schedule = [float(r) for r in schedule]
    if any(r <= 0 for r in schedule):
        raise ValidationError("schedule radii must be positive")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValidationError("schedule radii must be strictly increasing")
    return schedule


def build_patchy(
    polar: PolarReducedSystem,
    seed: SeedPolynomial,
    order: int,
    schedule: Sequence[float],
    mesh: Optional[np.ndarray] = None,
) -> PatchySolution:
    """Radial curves and patches for every schedule radius, warm-started outward."""
    if order < 0:
        raise ValidationError(f"patch order must be nonnegative, got {order}")
    schedule = _check_schedule(schedule)
    mesh = periodic_mesh() if mesh is None else mesh
    name = polar.base.name
    metadata = {
        "order": order,
        "seed_order": seed.order,
        "theta_mesh": len(mesh) - 1,
        "bvp_tol": settings.BVP_TOL,
        "integrator_tol": settings.INTEGRATOR_TOL,
        "periodicity_tol": settings.PERIODICITY_TOL,
        "segments": settings.SHOOTING_SEGMENTS,
    }
    curves: List[RadialCurve] = []
    patches: List[AnnulusPatch] = []

    def assembled() -> PatchySolution:
        return PatchySolution(
            name, seed, list(curves[:len(patches)]), list(patches), order,
            schedule[:len(patches)], mesh, polar.orientation, dict(metadata),
        )

    warm: Union[SeedPolynomial, AnnulusPatch] = seed
    logger.info(f"Building '{name}': order {order}, {len(schedule)} annuli, {len(mesh) - 1} θ nodes")
    for j, r_init in enumerate(schedule, start=1):
        try:
            try:
                curve = compute_radial_curve(polar, r_init, curves[-1] if curves else None, j - 1, mesh)
            except FbiError as err:
                raise PatchyBuildError(str(err), j, "radial curve") from err
            if curves and np.min(curve.samples - curves[-1].samples) <= 0:
                raise PatchyBuildError("radial curves are not nested", j, "radial curve")
            curves.append(curve)
            patch = compute_patch(polar, curve, order, warm, j)
        except PatchyBuildError as err:
            logger.error(f"Annulus {j} failed during {err.stage}; keeping {len(patches)} completed patches")
            raise PatchyBuildError(err.reason, j, err.stage, assembled()) from err
        patches.append(patch)
        warm = patch
        logger.info(f"Patch {j}/{len(schedule)} done: r(0)={r_init:.4g}, Newton iterations {patch.iterations}")
    return assembled()


def pde_residual(polar: PolarReducedSystem, sol: PatchySolution, theta, r, step: Optional[float] = None) -> np.ndarray:
    """‖Ψ_θ + Ψ_σ·(ρ(θ, r) - ρ(θ, r_in)) - F(θ, r, Ψ)‖ with Ψ held to the owning region."""
    step = settings.RESIDUAL_STEP if step is None else step
    theta, r = np.broadcast_arrays(np.mod(np.asarray(theta, dtype=float), TWO_PI), np.asarray(r, dtype=float))
    theta = theta.astype(float).copy()
    r = r.astype(float).copy()
    curves = sol.curve_values(theta)
    if curves.size and np.any(np.abs(r[None] - curves) < step):
        raise SeamError(f"residual requested within {step:g} of a patch boundary")
    regions = sol.region_index(theta, r)
    out = np.zeros(theta.shape)
    for region in np.unique(regions):
        mask = regions == region
        th, rr = theta[mask], r[mask]
        region = int(region)

        def base(t):
            return np.zeros_like(t) if region == 0 else sol.curves[region - 1](t)

        sigma = rr - base(th)
        value = sol._evaluate_region(region, th, rr)
        d_theta = (
            sol._evaluate_region(region, th + step, base(th + step) + sigma)
            - sol._evaluate_region(region, th - step, base(th - step) + sigma)
        ) / (2.0 * step)
        d_sigma = (sol._evaluate_region(region, th, rr + step) - sol._evaluate_region(region, th, rr - step)) / (2.0 * step)
        rho = np.asarray(polar.radial_rate(th, rr), dtype=float)
        rho_in = np.zeros_like(rho) if region == 0 else np.asarray(polar.radial_rate(th, base(th)), dtype=float)
        F = _stack(polar.F(th, rr, list(value)), th.shape)
        out[mask] = np.linalg.norm(d_theta + d_sigma * (rho - rho_in) - F, axis=0)
    return out


# -----------------------------------------------------------------------------
# Error studies
# -----------------------------------------------------------------------------
def sup_error(sol: PatchySolution, reference: Reference, theta_samples: int = 64, radial_samples: int = 41) -> float:
    """Max |ψ̃ - ψ| over a polar grid filling the solved domain."""
    theta = np.linspace(0.0, TWO_PI, theta_samples, endpoint=False)
    extent = sol.outer_extent(theta)
    if not np.all(np.isfinite(extent)):
        raise ValidationError("sup_error needs a bounded domain")
    frac = np.linspace(0.0, 1.0, radial_samples)
    T, Fr = np.meshgrid(theta, frac, indexing="ij")
    r = Fr * extent[:, None]
    approx = sol.evaluate(T, r)
    w1 = r * np.cos(T)
    w2 = sol.orientation * r * np.sin(T)
    return float(np.max(np.abs(approx - reference(w1, w2))))


def convergence_study(
    polar: PolarReducedSystem,
    seed: SeedPolynomial,
    order: int,
    ks: Sequence[int],
    outer: float,
    reference: Reference,
    mesh: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """sup-error against the number of annuli for a fixed outer radius."""
    rows = []
    for k in ks:
        sol = build_patchy(polar, seed, order, convergence_schedule(k, outer), mesh)
        error = sup_error(sol, reference)
        logger.info(f"Convergence study k={k}: sup-error {error:.3e}")
        rows.append({"k": k, "thickness": outer / (k + 1), const.COL_SUP_ERROR: error})
    frame = pd.DataFrame(rows)
    frame["ratio"] = frame[const.COL_SUP_ERROR] / frame[const.COL_SUP_ERROR].shift(1)
    return frame


def radial_error_profile(
    sol: PatchySolution, reference: Reference, patch: int, theta: float, depths: Sequence[float]
) -> pd.DataFrame:
    """|ψ̃ - ψ| against depth σ inside patch ``patch`` along one ray."""
    if not 1 <= patch <= sol.k:
        raise ValidationError(f"patch index {patch} out of range 1..{sol.k}")
    depths = np.asarray(depths, dtype=float)
    theta_arr = np.full(depths.shape, float(theta))
    r = sol.curves[patch - 1](theta_arr) + depths
    approx = sol.patches[patch - 1].evaluate(theta_arr, r)
    w1 = r * np.cos(theta_arr)
    w2 = sol.orientation * r * np.sin(theta_arr)
    error = np.max(np.abs(approx - reference(w1, w2)), axis=0)
    return pd.DataFrame({"sigma": depths, "r": r, "error": error})
