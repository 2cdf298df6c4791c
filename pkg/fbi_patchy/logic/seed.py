# ## path: fbi_patchy/logic/seed.py
"""Taylor seed of the center manifold on the inner disk.

φ(w) = Σ_d φ_d(w) is solved one homogeneous degree at a time from

    ∂φ/∂w · s(w) = Bφ + Z̄(w, φ).

Block d is stored as an (n, d+1) array whose column j multiplies
w1^(d-j) w2^j.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from fbi_patchy import constants as const
from fbi_patchy.errors import DocumentError, SolverError, ValidationError
from fbi_patchy.logic.jets import Jet
from fbi_patchy.logic.systems import CartesianCenterSystem, check_hyperbolic

logger = logging.getLogger(__name__)

_SINGULAR_RCOND = 1e-14


@dataclass(frozen=True)
class SeedPolynomial:
    order: int
    blocks: List[np.ndarray]
    orientation: int = 1
    residual: float = 0.0
    names: Sequence[str] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.blocks[0].shape[0] if self.blocks else len(self.names)

    def block(self, degree: int) -> np.ndarray:
        if not 1 <= degree <= self.order:
            raise ValidationError(f"seed of order {self.order} has no degree-{degree} block")
        return self.blocks[degree - 1]

    def truncate(self, order: int) -> "SeedPolynomial":
        if not 1 <= order <= self.order:
            raise ValidationError(f"cannot truncate a degree-{self.order} seed to degree {order}")
        return SeedPolynomial(order, self.blocks[:order], self.orientation, self.residual, self.names)

    def evaluate(self, w1, w2) -> np.ndarray:
        """φ^N(w1, w2) with shape (n,) + broadcast shape of the arguments."""
        w1 = np.asarray(w1, dtype=float)
        w2 = np.asarray(w2, dtype=float)
        shape = np.broadcast(w1, w2).shape
        out = np.zeros((self.n,) + shape)
        expand = (slice(None),) + (None,) * len(shape)
        for d, blk in enumerate(self.blocks, start=1):
            for j in range(d + 1):
                if np.any(blk[:, j]):
                    out += blk[:, j][expand] * (w1 ** (d - j) * w2 ** j)
        return out

    def angular_profiles(self, theta) -> np.ndarray:
        """h_d(θ) = φ_d(cos θ, o sin θ) for d = 1..N, shape (N, n) + θ shape."""
        theta = np.asarray(theta, dtype=float)
        c = np.cos(theta)
        s = self.orientation * np.sin(theta)
        expand = (slice(None),) + (None,) * theta.ndim
        out = np.zeros((self.order, self.n) + theta.shape)
        for d, blk in enumerate(self.blocks, start=1):
            for j in range(d + 1):
                if np.any(blk[:, j]):
                    out[d - 1] += blk[:, j][expand] * (c ** (d - j) * s ** j)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "order": self.order,
            "orientation": self.orientation,
            "names": list(self.names),
            "residual": self.residual,
            "blocks": [
                {
                    "degree": d,
                    "terms": [
                        {"exponents": [d - j, j], "value": blk[:, j].tolist()} for j in range(d + 1)
                    ],
                }
                for d, blk in enumerate(self.blocks, start=1)
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SeedPolynomial":
        try:
            order = int(data["order"])
            names = tuple(data.get("names", ()))
            blocks = []
            for d, entry in enumerate(data["blocks"], start=1):
                if int(entry["degree"]) != d:
                    raise DocumentError(f"seed blocks out of order at degree {entry['degree']}")
                blk = np.zeros((len(entry["terms"][0]["value"]), d + 1))
                for term in entry["terms"]:
                    a, b = (int(e) for e in term["exponents"])
                    if a + b != d:
                        raise DocumentError(f"monomial {a},{b} does not belong to degree {d}")
                    blk[:, b] = term["value"]
                blocks.append(blk)
        except (KeyError, TypeError, ValueError, IndexError) as err:
            raise DocumentError(f"corrupted seed payload: {err}") from err
        if len(blocks) != order:
            raise DocumentError(f"seed declares order {order} but carries {len(blocks)} blocks")
        return cls(order, blocks, int(data.get("orientation", 1)), float(data.get("residual", 0.0)), names)


# -----------------------------------------------------------------------------
# Degree-by-degree solve
# -----------------------------------------------------------------------------
def rotation_operator(degree: int, orientation: int) -> np.ndarray:
    """Matrix of h ↦ ∂h/∂w · (-o w2, o w1) on degree-``degree`` monomials."""
    D = np.zeros((degree + 1, degree + 1))
    for j in range(degree + 1):
        a, b = degree - j, j
        if a:
            D[j + 1, j] = -orientation * a
        if b:
            D[j - 1, j] = orientation * b
    return D


def _phi_jets(blocks: List[np.ndarray], n: int, order: int) -> List[Jet]:
    table = Jet.constant(0.0, order, 2).table
    coeffs = np.zeros((table.size, n))
    for d, blk in enumerate(blocks[:order], start=1):
        coeffs[table.start[d]:table.start[d + 1]] = blk.T
    return [Jet(coeffs[:, i].copy(), order, 2) for i in range(n)]


def _pde_defect(sys: CartesianCenterSystem, blocks: List[np.ndarray], order: int, linear: bool) -> List[Jet]:
    """Z̄(w, φ) - ∂φ/∂w·(P, Q), plus the linear part ∂φ/∂w·Sw - Bφ when ``linear``."""
    n = sys.n
    W1 = Jet.variable(0, 0.0, order, 2)
    W2 = Jet.variable(1, 0.0, order, 2)
    phi = _phi_jets(blocks, n, order)
    P, Q = sys.exosystem.nonlinear(W1, W2)
    zbar = sys.zbar(W1, W2, phi)
    o = sys.orientation
    out = []
    for i in range(n):
        d1, d2 = phi[i].derivative(0), phi[i].derivative(1)
        value = zbar[i] - d1 * P - d2 * Q
        if linear:
            value = value - (d1 * (-o * W2) + d2 * (o * W1))
            for j in range(n):
                if sys.B[i, j] != 0.0:
                    value = value + sys.B[i, j] * phi[j]
        out.append(value if isinstance(value, Jet) else Jet.constant(value, order, 2))
    return out


def compute_seed(sys: CartesianCenterSystem, order: int) -> SeedPolynomial:
    """Taylor polynomial of degree ``order`` of the center manifold z = φ(w)."""
    if not 1 <= order <= const.MAX_SEED_DEGREE:
        raise ValidationError(f"seed degree must be between 1 and {const.MAX_SEED_DEGREE}, got {order}")
    check_hyperbolic(sys.B)
    n = sys.n
    o = sys.orientation
    blocks: List[np.ndarray] = []
    for d in range(1, order + 1):
        L = np.kron(rotation_operator(d, o), np.eye(n)) - np.kron(np.eye(d + 1), sys.B)
        defect = _pde_defect(sys, blocks, d, linear=False)
        rhs = np.stack([jet.degree_part(d) for jet in defect], axis=1).ravel()
        lu, piv = lu_factor(L, check_finite=True)
        diag = np.abs(np.diag(lu))
        if diag.min() <= _SINGULAR_RCOND * max(diag.max(), 1.0):
            raise SolverError(f"degree-{d} seed operator is singular (non-resonance violated)")
        blocks.append(lu_solve((lu, piv), rhs).reshape(d + 1, n).T)
        logger.debug(f"Seed degree {d}: solved {L.shape[0]}x{L.shape[1]} system")

    residual = max(float(np.max(np.abs(jet.coeffs[1:]))) for jet in _pde_defect(sys, blocks, order, linear=True))
    scale = 1.0 + max(float(np.max(np.abs(blk))) for blk in blocks)
    if residual > const.SEED_RESIDUAL_TOL * scale:
        logger.warning(f"Seed residual {residual:.3e} exceeds {const.SEED_RESIDUAL_TOL:g}")
    logger.info(f"Seed of degree {order} for '{sys.name}' computed (residual {residual:.2e})")
    return SeedPolynomial(order, blocks, o, residual, tuple(sys.z_names))


def eval_seed_polar(poly: SeedPolynomial, theta, r, kmax: int = 0) -> np.ndarray:
    """∂^k ψ⁰/∂r^k at (θ, r) for k = 0..kmax, shape (kmax+1, n) + broadcast shape."""
    if kmax < 0 or kmax > poly.order:
        raise ValidationError(f"kmax must be between 0 and {poly.order}, got {kmax}")
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    theta, r = np.broadcast_arrays(theta, r)
    profiles = poly.angular_profiles(theta)
    out = np.zeros((kmax + 1, poly.n) + theta.shape)
    for k in range(kmax + 1):
        for d in range(max(k, 1), poly.order + 1):
            out[k] += profiles[d - 1] * (factorial(d) / factorial(d - k)) * r ** (d - k)
    return out
