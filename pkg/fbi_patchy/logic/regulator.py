# ## path: fbi_patchy/logic/regulator.py
"""State-feedback regulator α(x, w) = κ(w) + K(x - π(w)) and its closed loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import solve_continuous_lyapunov

from fbi_patchy import constants as const
from fbi_patchy.config import settings
from fbi_patchy.errors import (
    DomainError,
    NonConvergence,
    OutsideDomain,
    StabilizabilityError,
    ValidationError,
)
from fbi_patchy.logic.jets import Jet
from fbi_patchy.logic.odebvp import TWO_PI, integrate
from fbi_patchy.logic.patchy import PatchySolution
from fbi_patchy.logic.systems import PlantNormalForm, compute_varphi, eigenvalues, feedforward_ue, linear_part

logger = logging.getLogger(__name__)

_KLEINMAN_MAX_ITER = 60
_KLEINMAN_STEP_TOL = 1e-13


# -----------------------------------------------------------------------------
# Riccati / LQR
# -----------------------------------------------------------------------------
def is_hurwitz(M, margin: float = const.HURWITZ_MARGIN) -> bool:
    return bool(np.all(eigenvalues(M).real <= -margin))


def stabilizing_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Some K with A - BK Hurwitz, by a shifted Lyapunov solve; zero if A already is."""
    m = B.shape[1]
    if is_hurwitz(A):
        return np.zeros((m, A.shape[0]))
    beta = 1.0 + np.linalg.norm(A, 2)
    shifted = A + beta * np.eye(A.shape[0])
    X = solve_continuous_lyapunov(shifted, 2.0 * B @ B.T)
    if not np.all(np.isfinite(X)) or np.linalg.cond(X) > 1e14:
        raise StabilizabilityError("(A, B) is not controllable enough to shift every unstable mode")
    K = np.linalg.solve(X, B).T
    if not is_hurwitz(A - B @ K):
        raise StabilizabilityError(f"bootstrap gain leaves A - BK unstable: {eigenvalues(A - B @ K)}")
    return K


def care_residual(A, B, Q, R, X) -> float:
    return float(np.linalg.norm(A.T @ X + X @ A - X @ B @ np.linalg.solve(R, B.T @ X) + Q))


def solve_care(A, B, Q, R) -> Tuple[np.ndarray, np.ndarray]:
    """Stabilizing solution X of AᵀX + XA - XBR⁻¹BᵀX + Q = 0 and K = R⁻¹BᵀX."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if np.any(np.linalg.eigvalsh(0.5 * (R + R.T)) <= 0):
        raise ValidationError("R must be positive definite")
    if np.any(np.linalg.eigvalsh(0.5 * (Q + Q.T)) < -1e-12):
        raise ValidationError("Q must be positive semidefinite")

    K = stabilizing_gain(A, B)
    X = np.zeros_like(A)
    for iteration in range(1, _KLEINMAN_MAX_ITER + 1):
        closed = A - B @ K
        X = solve_continuous_lyapunov(closed.T, -(Q + K.T @ R @ K))
        X = 0.5 * (X + X.T)
        K_next = np.linalg.solve(R, B.T @ X)
        step = float(np.max(np.abs(K_next - K))) if K.size else 0.0
        K = K_next
        logger.debug(f"Newton-Kleinman iteration {iteration}: gain step {step:.3e}")
        if step <= _KLEINMAN_STEP_TOL * (1.0 + float(np.max(np.abs(K)))):
            break
    else:
        raise NonConvergence("Newton-Kleinman iteration stalled", _KLEINMAN_MAX_ITER, step)

    residual = care_residual(A, B, Q, R, X)
    bound = const.CARE_RESIDUAL_TOL * max(float(np.linalg.norm(Q)), 1.0)
    if residual > bound:
        raise NonConvergence("CARE residual too large", iteration, residual)
    return X, K


def lqr_gain(A, B, Q, R) -> np.ndarray:
    _, K = solve_care(A, B, Q, R)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if not is_hurwitz(A - B @ K):
        raise StabilizabilityError(f"A - BK is not Hurwitz: {eigenvalues(A - B @ K)}")
    return K


def linearize(plant: PlantNormalForm) -> Tuple[np.ndarray, np.ndarray]:
    """(A, B) of the plant at the origin, in its physical state coordinates."""
    dim = len(plant.normal_names)
    nvars = dim + 1
    normal = [Jet.variable(i, 0.0, 1, nvars) for i in range(dim)]
    u = Jet.variable(dim, 0.0, 1, nvars)
    _, jac = linear_part(plant.normal_rhs(normal, u), 1, nvars)
    A_n, B_n = jac[:, :dim], jac[:, dim:]
    if plant.coordinates is None:
        return A_n, B_n
    x = [Jet.variable(i, 0.0, 1, dim) for i in range(dim)]
    _, J_to = linear_part(plant.to_normal(x), 1, dim)
    xi = [Jet.variable(i, 0.0, 1, dim) for i in range(dim)]
    _, J_from = linear_part(plant.from_normal(xi), 1, dim)
    return J_from @ A_n @ J_to, J_from @ B_n


# -----------------------------------------------------------------------------
# Regulator
# -----------------------------------------------------------------------------
class Regulator:
    """α(x, w) for a plant, a patchy manifold and a feedback gain."""

    def __init__(self, plant: PlantNormalForm, solution: PatchySolution, K):
        self.plant = plant
        self.solution = solution
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        self.varphi = compute_varphi(plant)
        if self.K.shape != (1, len(plant.normal_names)):
            raise ValidationError(f"gain must have shape (1, {len(plant.normal_names)}), got {self.K.shape}")

    def manifold_normal(self, w1, w2) -> Tuple[List[Any], List[Any]]:
        """(ξ, z) on the invariant manifold over w."""
        z = self.solution.evaluate_cartesian(w1, w2)
        xi = [np.asarray(v, dtype=float) for v in self.varphi(w1, w2)]
        return xi, list(z)

    def manifold(self, w1, w2) -> np.ndarray:
        """π(w) in physical coordinates."""
        xi, z = self.manifold_normal(w1, w2)
        return np.array([np.asarray(v, dtype=float) for v in self.plant.from_normal(xi + z)])

    def feedforward(self, w1, w2):
        xi, z = self.manifold_normal(w1, w2)
        return feedforward_ue(self.plant, z, xi, w1, w2)

    def __call__(self, x, w1, w2):
        xi, z = self.manifold_normal(w1, w2)
        target = np.array([np.asarray(v, dtype=float) for v in self.plant.from_normal(xi + z)])
        kappa = feedforward_ue(self.plant, z, xi, w1, w2)
        x = np.asarray(x, dtype=float).reshape(target.shape)
        return kappa + np.tensordot(self.K[0], x - target, axes=1)


def build_regulator(
    plant: PlantNormalForm,
    solution: PatchySolution,
    K=None,
    Q=None,
    R=None,
) -> Regulator:
    """Regulator with gain K, or the LQR gain of the plant linearization for (Q, R)."""
    if K is None:
        dim = len(plant.normal_names)
        Q = np.eye(dim) if Q is None else np.asarray(Q, dtype=float)
        R = np.eye(1) if R is None else np.atleast_2d(np.asarray(R, dtype=float))
        A, B = linearize(plant)
        K = lqr_gain(A, B, Q, R)
        logger.info(f"LQR gain K = {np.round(K, 6).tolist()}, closed-loop spectrum {np.round(eigenvalues(A - B @ K), 4)}")
    return Regulator(plant, solution, K)


# -----------------------------------------------------------------------------
# Closed loop
# -----------------------------------------------------------------------------
def exosystem_periods(w: np.ndarray, orientation: int) -> np.ndarray:
    """Completed-period count along a sampled exosystem orbit."""
    angle = np.unwrap(np.arctan2(orientation * w[1], w[0]))
    return np.floor((angle - angle[0]) / TWO_PI + 1e-12).astype(int)


def settling_time(t: np.ndarray, e: np.ndarray, band: float = const.SETTLING_BAND) -> Optional[float]:
    """First time after which |e| stays inside ``band``; None if it never settles."""
    outside = np.nonzero(np.abs(e) > band)[0]
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    return None if last == len(t) - 1 else float(t[last + 1])


@dataclass
class ClosedLoopResult:
    t: np.ndarray
    x: np.ndarray
    w: np.ndarray
    u: np.ndarray
    y: np.ndarray
    reference: np.ndarray
    e: np.ndarray
    state_names: Sequence[str]
    invariance_gap: float = 0.0
    period_maxima: List[float] = field(default_factory=list)

    @property
    def transient_start(self) -> float:
        return float(self.t[0] + (1.0 - const.TRANSIENT_FRACTION) * (self.t[-1] - self.t[0]))

    @property
    def sup_error_final(self) -> float:
        tail = self.t >= self.transient_start
        return float(np.max(np.abs(self.e[tail])))

    @property
    def settling_time(self) -> Optional[float]:
        return settling_time(self.t, self.e)

    def to_frame(self) -> pd.DataFrame:
        data: Dict[str, Any] = {const.COL_TIME: self.t}
        for name, row in zip(self.state_names, self.x):
            data[name] = row
        data[const.COL_W1] = self.w[0]
        data[const.COL_W2] = self.w[1]
        data[const.COL_CONTROL] = self.u
        data[const.COL_OUTPUT] = self.y
        data[const.COL_REFERENCE] = self.reference
        data[const.COL_ERROR] = self.e
        return pd.DataFrame(data)

    def summary(self) -> Dict[str, Any]:
        return {
            "horizon": float(self.t[-1]),
            "sup_error_final": self.sup_error_final,
            "transient_start": self.transient_start,
            "settling_time": self.settling_time,
            "invariance_gap": self.invariance_gap,
            "period_maxima": list(self.period_maxima),
        }


def simulate_closed_loop(
    regulator: Regulator,
    x0: Sequence[float],
    w0: Sequence[float],
    horizon: float = const.DEFAULT_HORIZON,
    tol: Optional[float] = None,
    samples: int = const.DEFAULT_SIM_SAMPLES,
) -> ClosedLoopResult:
    """Integrate plant and exosystem under u = α(x, w)."""
    tol = settings.SIM_TOL if tol is None else tol
    plant = regulator.plant
    dim = len(plant.normal_names)
    x0 = np.asarray(x0, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    if x0.shape != (dim,) or w0.shape != (2,):
        raise ValidationError(f"need {dim} state values and 2 exosystem values, got {x0.size} and {w0.size}")
    if horizon <= 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")

    try:
        regulator(x0, w0[0], w0[1])
    except DomainError as err:
        raise OutsideDomain(f"initial exosystem state leaves the solved domain ({err})", 0.0) from err

    def rhs(t, y):
        normal, w = y[:dim], y[dim:]
        try:
            u = float(regulator(plant.from_normal(list(normal)), w[0], w[1]))
        except DomainError as err:
            raise OutsideDomain(f"left the solved domain ({err})", t) from err
        dnormal = [float(v) for v in plant.normal_rhs(list(normal), u)]
        dw = [float(v) for v in plant.exosystem(w[0], w[1])]
        return np.array(dnormal + dw)

    y0 = np.concatenate([np.asarray(plant.to_normal(list(x0)), dtype=float), w0])
    t_eval = np.linspace(0.0, horizon, samples)
    traj = integrate(rhs, (0.0, horizon), y0, tol, t_eval=t_eval)

    normal, w = traj.y[:dim], traj.y[dim:]
    x = np.array([np.broadcast_to(np.asarray(v, dtype=float), traj.t.shape) for v in plant.from_normal(list(normal))])
    u = np.asarray(regulator(x, w[0], w[1]), dtype=float)
    offset = np.asarray(plant.output_offset(w[0], w[1]), dtype=float)
    y = normal[0]
    e = y + offset
    gap = float(np.max(np.abs(x - regulator.manifold(w[0], w[1]))))

    periods = exosystem_periods(w, plant.exosystem.orientation)
    maxima = [float(np.max(np.abs(e[periods == p]))) for p in range(int(periods.max()) + 1) if np.any(periods == p)]

    result = ClosedLoopResult(traj.t, x, w, u, y, -offset, e, plant.state_names, gap, maxima)
    logger.info(
        f"Closed loop over [0, {horizon:g}]: sup|e| on final window {result.sup_error_final:.3e}, "
        f"settling time {result.settling_time}, invariance gap {gap:.3e}"
    )
    return result
