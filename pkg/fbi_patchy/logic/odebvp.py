# ## path: fbi_patchy/logic/odebvp.py
"""Initial-value integration and periodic boundary-value solvers on [0, 2π].

Periodic problems are shot over ``segments`` consecutive sub-intervals that
are integrated together as one batched IVP: right-hand sides receive the
angle as an array of shape (S,) and the state as (m, S). With one segment
this is plain single shooting.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from fbi_patchy import constants as const
from fbi_patchy.config import settings
from fbi_patchy.errors import IntegrationError, NonConvergence, PeriodicityViolation, SingularShooting

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
_MAX_HALVINGS = 8
_COND_LIMIT = 1e13

BatchedRhs = Callable[[np.ndarray, np.ndarray], np.ndarray]
BatchedJac = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    interpolant: Callable[[Union[float, np.ndarray]], np.ndarray]
    tol: float
    monodromy: Optional[np.ndarray] = None
    iterations: int = 0

    def __call__(self, t):
        return self.interpolant(t)

    @property
    def m(self) -> int:
        return self.y.shape[0]

    def periodicity_gap(self) -> float:
        return float(np.max(np.abs(self.y[:, -1] - self.y[:, 0])))


def periodic_mesh(nodes: Optional[int] = None) -> np.ndarray:
    """``nodes`` equispaced intervals over one period, both endpoints included."""
    nodes = settings.THETA_MESH if nodes is None else nodes
    return np.linspace(0.0, TWO_PI, nodes + 1)


def periodic_spline(mesh: np.ndarray, samples: np.ndarray) -> CubicSpline:
    """Periodic cubic spline along the last axis; the closing sample is overwritten."""
    samples = np.array(samples, dtype=float, copy=True)
    samples[..., -1] = samples[..., 0]
    return CubicSpline(mesh, samples, axis=samples.ndim - 1, bc_type="periodic")


def periodic_trajectory(mesh: np.ndarray, samples: np.ndarray, tol: float, **extra) -> Trajectory:
    samples = np.array(samples, dtype=float, copy=True)
    samples[:, -1] = samples[:, 0]
    spline = periodic_spline(mesh, samples)
    return Trajectory(mesh, samples, lambda theta: spline(np.mod(theta, TWO_PI)), tol, **extra)


# -----------------------------------------------------------------------------
# Initial-value problems
# -----------------------------------------------------------------------------
def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    span: Sequence[float],
    y0,
    tol: Optional[float] = None,
    t_eval: Optional[np.ndarray] = None,
    max_step: float = np.inf,
) -> Trajectory:
    """Adaptive Dormand–Prince 5(4) integration with dense output."""
    tol = settings.INTEGRATOR_TOL if tol is None else tol
    t0, t1 = float(span[0]), float(span[1])
    if t0 == t1:
        raise IntegrationError("integration span is empty", t0)

    def guarded(t, y):
        dy = np.asarray(rhs(t, y), dtype=float)
        if not np.all(np.isfinite(dy)):
            raise IntegrationError("non-finite derivative", t)
        return dy

    sol = solve_ivp(
        guarded,
        (t0, t1),
        np.asarray(y0, dtype=float),
        method="RK45",
        rtol=tol,
        atol=tol,
        dense_output=True,
        t_eval=t_eval,
        max_step=max_step,
    )
    if sol.status < 0:
        raise IntegrationError(f"integrator failed: {sol.message}", float(sol.t[-1]) if len(sol.t) else t0)
    if not np.all(np.isfinite(sol.y)):
        raise IntegrationError("non-finite state", float(sol.t[-1]))
    return Trajectory(sol.t, sol.y, sol.sol, tol)


# -----------------------------------------------------------------------------
# Multiple shooting plumbing
# -----------------------------------------------------------------------------
class _Segments:
    def __init__(self, count: int):
        if count < 1:
            raise ValueError(f"need at least one shooting segment, got {count}")
        self.count = count
        self.width = TWO_PI / count
        self.starts = np.arange(count) * self.width

    def locate(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        idx = np.minimum(np.floor(theta / self.width).astype(int), self.count - 1)
        return idx, theta - self.starts[idx]


def _cyclic_jacobian(M: np.ndarray) -> np.ndarray:
    """Block matrix of G_s = Φ_s(y_s) - y_{s+1 mod S}."""
    m, _, S = M.shape
    J = np.zeros((S * m, S * m))
    eye = np.eye(m)
    for s in range(S):
        nxt = (s + 1) % S
        J[s * m:(s + 1) * m, s * m:(s + 1) * m] += M[:, :, s]
        J[s * m:(s + 1) * m, nxt * m:(nxt + 1) * m] -= eye
    return J


def _product(M: np.ndarray) -> np.ndarray:
    total = np.eye(M.shape[0])
    for s in range(M.shape[2]):
        total = M[:, :, s] @ total
    return total


def closure_bound(tol: float, Y: np.ndarray, periodicity_tol: float) -> float:
    """Largest θ=0/θ=2π mismatch accepted for a shooting solution with node values ``Y``."""
    return max(tol * (1.0 + float(np.max(np.abs(Y)))), periodicity_tol)


def _check_conditioning(J: np.ndarray, M: np.ndarray) -> None:
    cond = np.linalg.cond(J)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        multipliers = np.linalg.eigvals(_product(M))
        closest = multipliers[np.argmin(np.abs(multipliers - 1.0))]
        raise SingularShooting(f"I - M is singular to working precision (Floquet multiplier {closest:.6g})")


def _fd_jacobian(rhs: BatchedRhs) -> BatchedJac:
    def jac(theta, y):
        base = np.asarray(rhs(theta, y), dtype=float)
        m = y.shape[0]
        out = np.empty((m, m) + y.shape[1:])
        for j in range(m):
            step = 1e-7 * (1.0 + np.abs(y[j]))
            bumped = y.copy()
            bumped[j] = bumped[j] + step
            out[:, j] = (np.asarray(rhs(theta, bumped), dtype=float) - base) / step
        return out

    return jac


def _shoot(rhs: BatchedRhs, jac: BatchedJac, segments: _Segments, Y: np.ndarray, tol: float):
    m, S = Y.shape
    starts = segments.starts

    def fun(tau, flat):
        state = flat.reshape(m + m * m, S)
        y = state[:m]
        phi = state[m:].reshape(m, m, S)
        theta = starts + tau
        dy = np.asarray(rhs(theta, y), dtype=float)
        J = np.asarray(jac(theta, y), dtype=float)
        dphi = np.einsum("ijs,jks->iks", J, phi)
        return np.concatenate([dy, dphi.reshape(m * m, S)]).ravel()

    eye = np.broadcast_to(np.eye(m)[:, :, None], (m, m, S)).reshape(m * m, S)
    init = np.concatenate([Y, eye]).ravel()
    traj = integrate(fun, (0.0, segments.width), init, tol)
    end = traj.y[:, -1].reshape(m + m * m, S)
    return end[:m], end[m:].reshape(m, m, S), traj


def _segment_samples(traj: Trajectory, segments: _Segments, mesh: np.ndarray, rows: int) -> np.ndarray:
    """Dense output of every segment at the mesh nodes it owns: (rows, S, K) slices."""
    idx, tau = segments.locate(mesh)
    dense = np.asarray(traj(tau)).reshape(rows, segments.count, len(mesh))
    return dense, idx


def _initial_iterate(guess, segments: _Segments, m: Optional[int]) -> np.ndarray:
    if isinstance(guess, Trajectory) or callable(guess):
        Y = np.asarray(guess(segments.starts), dtype=float)
    else:
        Y = np.asarray(guess, dtype=float)
        if Y.ndim == 0:
            Y = np.full((m or 1,), float(Y))
        Y = np.repeat(Y.reshape(-1, 1), segments.count, axis=1)
    return Y.reshape(-1, segments.count).copy()


# -----------------------------------------------------------------------------
# Periodic solvers
# -----------------------------------------------------------------------------
def solve_periodic_nonlinear(
    rhs: BatchedRhs,
    guess,
    pinned=None,
    jac: Optional[BatchedJac] = None,
    mesh: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    integrator_tol: Optional[float] = None,
    periodicity_tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    segments: Optional[int] = None,
) -> Trajectory:
    """2π-periodic solution of y' = rhs(θ, y).

    With ``pinned`` the initial value is fixed: the IVP is integrated once and
    its closure checked. Otherwise damped Newton runs on the shooting map.
    """
    mesh = periodic_mesh() if mesh is None else mesh
    tol = settings.BVP_TOL if tol is None else tol
    integrator_tol = settings.INTEGRATOR_TOL if integrator_tol is None else integrator_tol
    periodicity_tol = settings.PERIODICITY_TOL if periodicity_tol is None else periodicity_tol
    max_iter = settings.NEWTON_MAX_ITER if max_iter is None else max_iter

    if pinned is not None:
        y0 = np.atleast_1d(np.asarray(pinned, dtype=float))

        def single(t, y):
            return np.asarray(rhs(np.array([t]), y[:, None]), dtype=float)[:, 0]

        traj = integrate(single, (0.0, TWO_PI), y0, integrator_tol, t_eval=mesh)
        gap = traj.periodicity_gap()
        if gap > periodicity_tol:
            raise PeriodicityViolation(gap, periodicity_tol)
        logger.debug(f"Pinned orbit from {y0} closes with gap {gap:.2e}")
        return periodic_trajectory(mesh, traj.y, integrator_tol)

    segs = _Segments(settings.SHOOTING_SEGMENTS if segments is None else segments)
    jac = _fd_jacobian(rhs) if jac is None else jac
    Y = _initial_iterate(guess, segs, None)
    m = Y.shape[0]

    end, M, traj = _shoot(rhs, jac, segs, Y, integrator_tol)
    G = end - np.roll(Y, -1, axis=1)
    residual = float(np.max(np.abs(G)))
    iteration = 0
    while residual > tol * (1.0 + float(np.max(np.abs(Y)))):
        if iteration >= max_iter:
            raise NonConvergence("periodic shooting did not converge", iteration, residual)
        iteration += 1
        J = _cyclic_jacobian(M)
        _check_conditioning(J, M)
        step = np.linalg.solve(J, -G.T.ravel()).reshape(segs.count, m).T
        lam = 1.0
        for _ in range(_MAX_HALVINGS):
            trial = Y + lam * step
            try:
                t_end, t_M, t_traj = _shoot(rhs, jac, segs, trial, integrator_tol)
            except IntegrationError:
                lam *= 0.5
                continue
            t_G = t_end - np.roll(trial, -1, axis=1)
            t_res = float(np.max(np.abs(t_G)))
            if t_res < residual or lam <= 0.5 ** (_MAX_HALVINGS - 1):
                break
            lam *= 0.5
        else:
            raise NonConvergence("damped Newton step kept failing", iteration, residual)
        Y, end, M, traj, G, residual = trial, t_end, t_M, t_traj, t_G, t_res
        logger.debug(f"Shooting iteration {iteration}: residual {residual:.3e} (damping {lam:g})")

    dense, idx = _segment_samples(traj, segs, mesh, m + m * m)
    samples = dense[:m, idx, np.arange(len(mesh))]
    gap = float(np.max(np.abs(samples[:, -1] - samples[:, 0])))
    bound = closure_bound(tol, Y, periodicity_tol)
    if gap > bound:
        raise PeriodicityViolation(gap, bound)
    return periodic_trajectory(mesh, samples, integrator_tol, monodromy=_product(M), iterations=iteration)


def solve_periodic_linear(
    A: Callable[[np.ndarray], np.ndarray],
    g: Callable[[np.ndarray], np.ndarray],
    mesh: Optional[np.ndarray] = None,
    integrator_tol: Optional[float] = None,
    segments: Optional[int] = None,
) -> Trajectory:
    """Unique 2π-periodic solution of y' = A(θ) y + g(θ).

    ``A`` maps an angle array (K,) to (m, m, K) and ``g`` to (m, K).
    """
    mesh = periodic_mesh() if mesh is None else mesh
    integrator_tol = settings.INTEGRATOR_TOL if integrator_tol is None else integrator_tol
    segs = _Segments(settings.SHOOTING_SEGMENTS if segments is None else segments)
    S = segs.count
    m = np.asarray(g(segs.starts)).shape[0]

    def fun(tau, flat):
        state = flat.reshape(m + m * m, S)
        part = state[:m]
        phi = state[m:].reshape(m, m, S)
        theta = segs.starts + tau
        At = np.asarray(A(theta), dtype=float)
        dpart = np.einsum("ijs,js->is", At, part) + np.asarray(g(theta), dtype=float)
        dphi = np.einsum("ijs,jks->iks", At, phi)
        return np.concatenate([dpart, dphi.reshape(m * m, S)]).ravel()

    eye = np.broadcast_to(np.eye(m)[:, :, None], (m, m, S)).reshape(m * m, S)
    init = np.concatenate([np.zeros((m, S)), eye]).ravel()
    traj = integrate(fun, (0.0, segs.width), init, integrator_tol)
    end = traj.y[:, -1].reshape(m + m * m, S)
    p_end, M = end[:m], end[m:].reshape(m, m, S)

    J = _cyclic_jacobian(M)
    _check_conditioning(J, M)
    Y = np.linalg.solve(J, -p_end.T.ravel()).reshape(S, m).T

    dense, idx = _segment_samples(traj, segs, mesh, m + m * m)
    cols = np.arange(len(mesh))
    part = dense[:m, idx, cols]
    phi = dense[m:].reshape(m, m, S, len(mesh))[:, :, idx, cols]
    samples = np.einsum("ijk,jk->ik", phi, Y[:, idx]) + part

    gap = float(np.max(np.abs(samples[:, -1] - samples[:, 0])))
    bound = const.LINEAR_PERIODIC_RESIDUAL * (1.0 + float(np.max(np.abs(samples[:, 0]))))
    if gap > bound:
        raise SingularShooting(f"periodic residual {gap:.3e} exceeds {bound:.3e}; I - M is ill-conditioned")
    return periodic_trajectory(mesh, samples, integrator_tol, monodromy=_product(M))


def monodromy(A: Callable[[np.ndarray], np.ndarray], m: int, segments: Optional[int] = None,
              integrator_tol: Optional[float] = None) -> np.ndarray:
    """Period map of y' = A(θ) y."""
    zero = lambda theta: np.zeros((m, np.size(theta)))
    return solve_periodic_linear(A, zero, periodic_mesh(8), integrator_tol, segments).monodromy
