# ## path: fbi_patchy/logic/systems.py
"""System models and the reduction to a center-manifold problem.

Two kinds of systems are supported:

* :class:`CartesianCenterSystem` -- ż = Bz + Z̄(w, z), ẇ = s(w), the form whose
  invariant graph z = φ(w) is computed by the seed and the patchy solver;
* :class:`PlantNormalForm` -- a plant already in normal coordinates (z, ξ),
  reduced to a center system by substituting ξ = φ(w) built from iterated Lie
  derivatives of the output offset p along the exosystem.

:class:`PolarReducedSystem` rewrites a center system in polar exosystem
coordinates with the angle as independent variable.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from fbi_patchy import constants as const
from fbi_patchy.config import settings
from fbi_patchy.errors import DomainError, HyperbolicityViolation, RateFloorViolation, ValidationError
from fbi_patchy.logic.expr import ExpressionVector
from fbi_patchy.logic.jets import Jet, common_shape, value_of

logger = logging.getLogger(__name__)

ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


def _as_jet(value, order: int, nvars: int) -> Jet:
    return value if isinstance(value, Jet) else Jet.constant(value, order, nvars)


def linear_part(outputs: Sequence[Any], order: int, nvars: int) -> Tuple[np.ndarray, np.ndarray]:
    """Values and Jacobian at the base point of order-1 jet outputs."""
    jets = [_as_jet(v, order, nvars) for v in outputs]
    values = np.array([j.coeffs[0] for j in jets], dtype=float)
    jac = np.array([j.coeffs[1:1 + nvars] for j in jets], dtype=float)
    return values, jac


# -----------------------------------------------------------------------------
# Spectral helpers
# -----------------------------------------------------------------------------
def eigenvalues(M) -> np.ndarray:
    """All eigenvalues of a small dense real matrix (with multiplicity)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"eigenvalues need a square matrix, got shape {M.shape}")
    if M.shape[0] > const.MAX_EIGEN_DIM:
        raise ValidationError(f"matrix dimension {M.shape[0]} exceeds {const.MAX_EIGEN_DIM}")
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix has non-finite entries")
    try:
        return np.linalg.eigvals(M)
    except np.linalg.LinAlgError as err:
        raise ValidationError(f"eigenvalue iteration did not converge: {err}") from err


def check_hyperbolic(B, tol: Optional[float] = None) -> float:
    """Smallest |Re λ| over the spectrum of B; raises if it is not above ``tol``."""
    tol = settings.HYPERBOLICITY_TOL if tol is None else tol
    lam = eigenvalues(B)
    worst = lam[np.argmin(np.abs(lam.real))]
    margin = float(abs(worst.real))
    if margin <= tol:
        raise HyperbolicityViolation(complex(worst), tol)
    return margin


# -----------------------------------------------------------------------------
# Exosystem
# -----------------------------------------------------------------------------
class Exosystem:
    """Planar vector field s(w) whose linear part is ±[[0,-1],[1,0]].

    ``orientation`` o is +1 for counter-clockwise rotation. The nonlinear parts
    are P = s1 + o·w2 and Q = s2 - o·w1.
    """

    def __init__(self, field: ExpressionVector, w_names: Sequence[str] = ("w1", "w2")):
        if len(field) != 2 or len(w_names) != 2:
            raise ValidationError("the exosystem must be two-dimensional")
        self.field = field
        self.w_names = tuple(w_names)
        self.orientation = self._detect_orientation()

    @classmethod
    def from_nonlinearities(
        cls, P: str, Q: str, orientation: int, params: Dict[str, float], w_names: Sequence[str] = ("w1", "w2")
    ) -> "Exosystem":
        if orientation not in (1, -1):
            raise ValidationError(f"orientation must be +1 or -1, got {orientation}")
        w1, w2 = w_names
        if orientation == 1:
            sources = [f"-{w2} + ({P})", f"{w1} + ({Q})"]
        else:
            sources = [f"{w2} + ({P})", f"-{w1} + ({Q})"]
        return cls(ExpressionVector(sources, params), w_names)

    def __call__(self, w1, w2) -> List[Any]:
        return self.field.evaluate({self.w_names[0]: w1, self.w_names[1]: w2})

    def nonlinear(self, w1, w2) -> Tuple[Any, Any]:
        s1, s2 = self(w1, w2)
        o = self.orientation
        return s1 + o * w2, s2 - o * w1

    def _detect_orientation(self) -> int:
        w1 = Jet.variable(0, 0.0, 1, 2)
        w2 = Jet.variable(1, 0.0, 1, 2)
        values, jac = linear_part(self(w1, w2), 1, 2)
        if np.max(np.abs(values)) > const.ORIGIN_TOL:
            raise ValidationError(f"exosystem does not vanish at the origin: s(0) = {values}")
        for o in (1, -1):
            if np.allclose(jac, o * ROTATION, atol=const.ORIGIN_TOL, rtol=0.0):
                return o
        raise ValidationError(f"exosystem linear part {jac.tolist()} is not a unit rotation")


def duffing_energy(w1, w2, a: float):
    """First integral of ẇ = (w2, -w1 - a w1^3)."""
    return 0.5 * (w1 ** 2 + w2 ** 2) + 0.25 * a * w1 ** 4


# -----------------------------------------------------------------------------
# Lie derivatives
# -----------------------------------------------------------------------------
class LieDerivative:
    """Evaluator of L_s^k f at a point, a batch of points, or a jet of points.

    The argument is shifted by two fresh variables δ and each Lie step
    contracts the δ-gradient with s; after k steps δ is set back to zero.
    """

    def __init__(self, exosystem: Exosystem, func: Callable[[Any, Any], Any], k: int):
        if k < 0:
            raise ValidationError(f"Lie derivative order must be nonnegative, got {k}")
        self.exosystem = exosystem
        self.func = func
        self.k = k

    def __call__(self, w1, w2):
        if self.k == 0:
            return self.func(w1, w2)
        shape = common_shape([w1, w2])
        if shape is None:
            order, nvars, base_order = self.k, 2, None
            W1 = Jet.variable(0, w1, order, nvars)
            W2 = Jet.variable(1, w2, order, nvars)
        else:
            base_order, m = shape
            order, nvars = base_order + self.k, m + 2
            positions = list(range(2, nvars))
            W1 = _as_jet(w1, base_order, m).embed(nvars, positions, order) + Jet.variable(0, 0.0, order, nvars)
            W2 = _as_jet(w2, base_order, m).embed(nvars, positions, order) + Jet.variable(1, 0.0, order, nvars)
        s1, s2 = self.exosystem(W1, W2)
        q = _as_jet(self.func(W1, W2), order, nvars)
        for _ in range(self.k):
            q = q.derivative(0) * s1 + q.derivative(1) * s2
        if base_order is None:
            return q.coeffs[0]
        return q.restrict(list(range(2, nvars))).truncate(base_order)


def lie_derivative_chain(exosystem: Exosystem, p: Callable[[Any, Any], Any], k: int) -> LieDerivative:
    return LieDerivative(exosystem, p, k)


# -----------------------------------------------------------------------------
# Center systems
# -----------------------------------------------------------------------------
class ExpressionZbar:
    """Z̄(w, z) given by expressions in the declared variable names."""

    def __init__(self, vector: ExpressionVector, z_names: Sequence[str], w_names: Sequence[str]):
        self.vector = vector
        self.z_names = tuple(z_names)
        self.w_names = tuple(w_names)

    def __call__(self, w1, w2, z: Sequence[Any]) -> List[Any]:
        bindings = {self.w_names[0]: w1, self.w_names[1]: w2}
        bindings.update(zip(self.z_names, z))
        return self.vector.evaluate(bindings)


@dataclass(frozen=True)
class CartesianCenterSystem:
    name: str
    B: np.ndarray
    zbar: Callable[[Any, Any, Sequence[Any]], List[Any]]
    exosystem: Exosystem
    z_names: Tuple[str, ...]
    params: Dict[str, float] = field(default_factory=dict)
    reference: Optional[ExpressionVector] = None

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def orientation(self) -> int:
        return self.exosystem.orientation

    def validate(self) -> "CartesianCenterSystem":
        if self.B.shape != (len(self.z_names), len(self.z_names)):
            raise ValidationError(f"B has shape {self.B.shape} but {len(self.z_names)} z variables are declared")
        nvars = 2 + self.n
        w1 = Jet.variable(0, 0.0, 1, nvars)
        w2 = Jet.variable(1, 0.0, 1, nvars)
        z = [Jet.variable(2 + i, 0.0, 1, nvars) for i in range(self.n)]
        values, jac = linear_part(self.zbar(w1, w2, z), 1, nvars)
        if np.max(np.abs(values)) > const.ORIGIN_TOL:
            raise ValidationError(f"Zbar does not vanish at the origin: {values}")
        if self.n and np.max(np.abs(jac[:, 2:])) > const.ORIGIN_TOL:
            raise ValidationError("Zbar has a linear z-part; move it into B")
        return self

    def reference_at(self, w1, w2) -> np.ndarray:
        if self.reference is None:
            raise ValidationError(f"system '{self.name}' has no reference solution")
        out = self.reference.evaluate({self.exosystem.w_names[0]: w1, self.exosystem.w_names[1]: w2})
        shape = np.broadcast(np.asarray(w1), np.asarray(w2)).shape
        return np.array([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in out])


# -----------------------------------------------------------------------------
# Polar reduction
# -----------------------------------------------------------------------------
class PolarReducedSystem:
    """dr/dθ = r·R(θ, r) and dz/dθ = F(θ, r, z) with θ increasing along orbits.

    w = (r cos θ, o·r sin θ) where o is the exosystem orientation, so the
    reduced angle always advances.
    """

    def __init__(self, base: CartesianCenterSystem, rate_floor: Optional[float] = None):
        self.base = base
        self.orientation = base.exosystem.orientation
        self.rate_floor = settings.RATE_FLOOR if rate_floor is None else rate_floor

    @property
    def n(self) -> int:
        return self.base.n

    def to_cartesian(self, theta, r) -> Tuple[Any, Any]:
        theta = np.asarray(theta, dtype=float)
        return r * np.cos(theta), r * (self.orientation * np.sin(theta))

    def to_polar(self, w1, w2) -> Tuple[np.ndarray, np.ndarray]:
        w1 = np.asarray(w1, dtype=float)
        w2 = np.asarray(w2, dtype=float)
        theta = np.mod(np.arctan2(self.orientation * w2, w1), 2.0 * np.pi)
        return theta, np.hypot(w1, w2)

    def rates(self, theta, r) -> Tuple[Any, Any]:
        """(ṙ/r, θ̇ - 1) in reduced coordinates; both vanish at r = 0."""
        theta = np.asarray(theta, dtype=float)
        w1, w2 = self.to_cartesian(theta, r)
        P, Q = self.base.exosystem.nonlinear(w1, w2)
        c = np.cos(theta)
        s = self.orientation * np.sin(theta)
        radial = c * P + s * Q
        angular = self.orientation * (c * Q - s * P)
        if isinstance(r, Jet):
            if np.any(r.value == 0):
                raise DomainError("polar rates need a positive base radius for jets")
            return radial / r, angular / r
        r = np.asarray(r, dtype=float)
        safe = np.where(r == 0, 1.0, r)
        return (
            np.where(r == 0, 0.0, np.asarray(value_of(radial)) / safe),
            np.where(r == 0, 0.0, np.asarray(value_of(angular)) / safe),
        )

    def theta_rate(self, theta, r):
        _, angular = self.rates(theta, r)
        rate = 1.0 + angular
        low = np.abs(value_of(rate))
        if np.any(low < self.rate_floor):
            raise RateFloorViolation(
                f"|1 + Θ̂| = {float(np.min(low)):.3g} below the floor {self.rate_floor} (r up to {float(np.max(value_of(r))):.4g})"
            )
        return rate

    def R(self, theta, r):
        radial, angular = self.rates(theta, r)
        rate = 1.0 + angular
        low = np.abs(value_of(rate))
        if np.any(low < self.rate_floor):
            raise RateFloorViolation(f"|1 + Θ̂| = {float(np.min(low)):.3g} below the floor {self.rate_floor}")
        return radial / rate

    def radial_rate(self, theta, r):
        """ρ(θ, r) = r·R(θ, r) = dr/dθ."""
        return r * self.R(theta, r)

    def F(self, theta, r, z: Sequence[Any]) -> List[Any]:
        w1, w2 = self.to_cartesian(theta, r)
        zbar = self.base.zbar(w1, w2, z)
        rate = self.theta_rate(theta, r)
        B = self.base.B
        out = []
        for i in range(self.n):
            acc = zbar[i]
            for j in range(self.n):
                if B[i, j] != 0.0:
                    acc = acc + B[i, j] * z[j]
            out.append(acc / rate)
        return out


def polar_reduce(sys: CartesianCenterSystem, rate_floor: Optional[float] = None) -> PolarReducedSystem:
    polar = PolarReducedSystem(sys, rate_floor)
    logger.info(f"Polar reduction of '{sys.name}': orientation {polar.orientation:+d}")
    return polar


# -----------------------------------------------------------------------------
# Plants in normal form
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class PlantCoordinates:
    """Maps between physical state x and normal coordinates (ξ, z)."""
    state_names: Tuple[str, ...]
    to_normal: ExpressionVector
    from_normal: ExpressionVector


@dataclass(frozen=True)
class PlantNormalForm:
    name: str
    relative_degree: int
    z_names: Tuple[str, ...]
    xi_names: Tuple[str, ...]
    f0: ExpressionVector
    a: ExpressionVector
    b: ExpressionVector
    exosystem: Exosystem
    p: ExpressionVector
    params: Dict[str, float] = field(default_factory=dict)
    coordinates: Optional[PlantCoordinates] = None

    @property
    def normal_names(self) -> Tuple[str, ...]:
        return self.xi_names + self.z_names

    @property
    def state_names(self) -> Tuple[str, ...]:
        return self.coordinates.state_names if self.coordinates else self.normal_names

    def _bind(self, z: Sequence[Any], xi: Sequence[Any]) -> Dict[str, Any]:
        bindings = dict(zip(self.z_names, z))
        bindings.update(zip(self.xi_names, xi))
        return bindings

    def output_offset(self, w1, w2):
        return self.p.evaluate({self.exosystem.w_names[0]: w1, self.exosystem.w_names[1]: w2})[0]

    def input_gain(self, z, xi):
        return self.a.evaluate(self._bind(z, xi))[0]

    def drift(self, z, xi):
        return self.b.evaluate(self._bind(z, xi))[0]

    def zero_dynamics(self, z, xi) -> List[Any]:
        return self.f0.evaluate(self._bind(z, xi))

    def lie_p(self, k: int) -> LieDerivative:
        return lie_derivative_chain(self.exosystem, self.output_offset, k)

    def validate(self) -> "PlantNormalForm":
        if self.relative_degree < 1 or len(self.xi_names) != self.relative_degree:
            raise ValidationError(
                f"relative degree {self.relative_degree} does not match {len(self.xi_names)} xi variables"
            )
        if len(self.f0) != len(self.z_names):
            raise ValidationError(f"f0 has {len(self.f0)} components for {len(self.z_names)} z variables")
        zeros_z = [0.0] * len(self.z_names)
        zeros_xi = [0.0] * self.relative_degree
        gain = float(value_of(self.input_gain(zeros_z, zeros_xi)))
        if abs(gain) <= const.ORIGIN_TOL:
            raise ValidationError("input coefficient a vanishes at the origin")
        if abs(float(value_of(self.output_offset(0.0, 0.0)))) > const.ORIGIN_TOL:
            raise ValidationError("output offset p does not vanish at the origin")
        f_origin = np.array([value_of(v) for v in self.zero_dynamics(zeros_z, zeros_xi)], dtype=float)
        if f_origin.size and np.max(np.abs(f_origin)) > const.ORIGIN_TOL:
            raise ValidationError(f"zero dynamics do not vanish at the origin: {f_origin}")
        return self

    def normal_rhs(self, normal: Sequence[Any], u) -> List[Any]:
        """d/dt of (ξ, z) under input u."""
        r = self.relative_degree
        xi, z = list(normal[:r]), list(normal[r:])
        dxi = xi[1:] + [self.drift(z, xi) + self.input_gain(z, xi) * u]
        return dxi + list(self.zero_dynamics(z, xi))

    def to_normal(self, x: Sequence[Any]) -> List[Any]:
        if self.coordinates is None:
            return list(x)
        return self.coordinates.to_normal.evaluate(dict(zip(self.coordinates.state_names, x)))

    def from_normal(self, normal: Sequence[Any]) -> List[Any]:
        if self.coordinates is None:
            return list(normal)
        return self.coordinates.from_normal.evaluate(dict(zip(self.normal_names, normal)))


class _Varphi:
    def __init__(self, plant: PlantNormalForm):
        self.chain = [plant.lie_p(i) for i in range(plant.relative_degree)]

    def __call__(self, w1, w2) -> List[Any]:
        return [-lie(w1, w2) for lie in self.chain]


def compute_varphi(plant: PlantNormalForm) -> Callable[[Any, Any], List[Any]]:
    """w ↦ (φ_1(w), …, φ_r(w)) with φ_i = -L_s^{i-1} p."""
    return _Varphi(plant)


def feedforward_ue(plant: PlantNormalForm, z: Sequence[Any], xi: Sequence[Any], w1, w2):
    """u_e = -(b(z, ξ) + L_s^r p(w)) / a(z, ξ)."""
    gain = plant.input_gain(z, xi)
    if np.any(np.abs(value_of(gain)) <= const.ORIGIN_TOL):
        raise DomainError("input coefficient a vanishes at the evaluation point")
    top = plant.lie_p(plant.relative_degree)(w1, w2)
    return -(plant.drift(z, xi) + top) / gain


class PlantZbar:
    """Z̄(w, z) = f0(z, φ(w)) - Bz for the zero dynamics driven by the exosystem."""

    def __init__(self, plant: PlantNormalForm, B: np.ndarray):
        self.plant = plant
        self.B = B
        self.varphi = compute_varphi(plant)

    def __call__(self, w1, w2, z: Sequence[Any]) -> List[Any]:
        xi = self.varphi(w1, w2)
        f = self.plant.zero_dynamics(z, xi)
        out = []
        for i, fi in enumerate(f):
            acc = fi
            for j in range(len(z)):
                if self.B[i, j] != 0.0:
                    acc = acc - self.B[i, j] * z[j]
            out.append(acc)
        return out


def zero_dynamics_matrix(plant: PlantNormalForm) -> np.ndarray:
    n = len(plant.z_names)
    z = [Jet.variable(i, 0.0, 1, n) for i in range(n)]
    xi = [0.0] * plant.relative_degree
    _, jac = linear_part(plant.zero_dynamics(z, xi), 1, n)
    return jac


def center_system(plant: PlantNormalForm) -> CartesianCenterSystem:
    """The center-manifold problem ż = f0(z, φ(w)), ẇ = s(w) of a plant."""
    B = zero_dynamics_matrix(plant)
    logger.info(f"Zero dynamics of '{plant.name}' linearize to B with eigenvalues {np.round(eigenvalues(B), 6)}")
    return CartesianCenterSystem(
        name=plant.name,
        B=B,
        zbar=PlantZbar(plant, B),
        exosystem=plant.exosystem,
        z_names=plant.z_names,
        params=dict(plant.params),
    ).validate()
