# ## path: fbi_patchy/logic/jets.py
"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` stores the Taylor coefficients of a quantity with respect to
``nvars`` perturbation variables up to total degree ``order``. Coefficients
live in a dense array whose first axis runs over monomials in graded
lexicographic order (degree ascending, exponents descending inside a degree);
any trailing axes are a batch, so one jet can carry a whole θ-mesh at once.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from fbi_patchy.errors import DomainError, JetShapeError

logger = logging.getLogger(__name__)

Scalar = Union[float, int, np.ndarray]


# -----------------------------------------------------------------------------
# Monomial tables
# -----------------------------------------------------------------------------
def _compositions(degree: int, nvars: int) -> Iterator[Tuple[int, ...]]:
    if nvars == 1:
        yield (degree,)
        return
    for head in range(degree, -1, -1):
        for rest in _compositions(degree - head, nvars - 1):
            yield (head,) + rest


@lru_cache(maxsize=None)
def monomials(order: int, nvars: int) -> Tuple[Tuple[int, ...], ...]:
    """Multi-indices of total degree <= order in graded lexicographic order."""
    return tuple(m for d in range(order + 1) for m in _compositions(d, nvars))


@dataclass(frozen=True)
class _DegreeBlock:
    rows: np.ndarray      # monomial index of the left factor
    cols: np.ndarray      # monomial index of the right factor
    weight: np.ndarray    # degree of the left factor
    scatter: sparse.csr_matrix


class _JetTable:
    """Index bookkeeping shared by every jet of one (order, nvars)."""

    def __init__(self, order: int, nvars: int):
        self.order = order
        self.nvars = nvars
        self.exponents = np.array(monomials(order, nvars), dtype=np.int64).reshape(-1, nvars)
        self.size = self.exponents.shape[0]
        self.degree = self.exponents.sum(axis=1)
        self.start = np.searchsorted(self.degree, np.arange(order + 2))
        self._base = order + 1
        self._codes = self._encode(self.exponents)
        self._order_codes = np.argsort(self._codes)
        self._build_pairs()
        self._blocks: Dict[Tuple[int, bool], _DegreeBlock] = {}
        self._derivatives: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _encode(self, exps: np.ndarray) -> np.ndarray:
        weights = self._base ** np.arange(self.nvars, dtype=np.int64)
        return exps @ weights

    def lookup(self, exps: np.ndarray) -> np.ndarray:
        codes = self._encode(np.asarray(exps, dtype=np.int64).reshape(-1, self.nvars))
        pos = np.searchsorted(self._codes[self._order_codes], codes)
        return self._order_codes[pos]

    def _build_pairs(self) -> None:
        total = self.degree[:, None] + self.degree[None, :]
        left, right = np.nonzero(total <= self.order)
        target = self.lookup(self.exponents[left] + self.exponents[right])
        self.left, self.right, self.target = left, right, target
        self.product = sparse.csr_matrix(
            (np.ones(len(target)), (target, np.arange(len(target)))),
            shape=(self.size, len(target)),
        )

    def block(self, degree: int, both_positive: bool = False) -> _DegreeBlock:
        """Pairs feeding the homogeneous part of ``degree`` with a non-constant left factor."""
        key = (degree, both_positive)
        if key not in self._blocks:
            mask = (self.degree[self.target] == degree) & (self.degree[self.left] >= 1)
            if both_positive:
                mask &= self.degree[self.right] >= 1
            rows, cols = self.left[mask], self.right[mask]
            local = self.target[mask] - self.start[degree]
            width = self.start[degree + 1] - self.start[degree]
            scatter = sparse.csr_matrix(
                (np.ones(len(local)), (local, np.arange(len(local)))), shape=(width, len(local))
            )
            self._blocks[key] = _DegreeBlock(rows, cols, self.degree[rows].astype(float), scatter)
        return self._blocks[key]

    def derivative_map(self, var: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if var not in self._derivatives:
            src = np.nonzero(self.exponents[:, var] >= 1)[0]
            shifted = self.exponents[src].copy()
            shifted[:, var] -= 1
            self._derivatives[var] = (src, self.lookup(shifted), self.exponents[src, var].astype(float))
        return self._derivatives[var]


@lru_cache(maxsize=None)
def _table(order: int, nvars: int) -> _JetTable:
    logger.debug(f"Building jet table for order={order}, nvars={nvars}")
    return _JetTable(order, nvars)


def _flat(arr: np.ndarray) -> np.ndarray:
    return arr.reshape(arr.shape[0], -1)


def _lift(coeffs: np.ndarray, batch_ndim: int) -> np.ndarray:
    """Insert singleton batch axes after the monomial axis."""
    missing = batch_ndim - (coeffs.ndim - 1)
    if missing <= 0:
        return coeffs
    return coeffs.reshape(coeffs.shape[:1] + (1,) * missing + coeffs.shape[1:])


def _align(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ndim = max(a.ndim, b.ndim) - 1
    return _lift(a, ndim), _lift(b, ndim)


# -----------------------------------------------------------------------------
# Jet
# -----------------------------------------------------------------------------
class Jet:
    """Immutable truncated Taylor expansion with an optional batch shape."""

    __slots__ = ("order", "nvars", "coeffs")
    __array_ufunc__ = None

    def __init__(self, coeffs, order: int, nvars: int):
        if order < 0 or nvars < 1:
            raise JetShapeError(f"invalid jet shape order={order}, nvars={nvars}")
        coeffs = np.asarray(coeffs, dtype=float)
        size = _table(order, nvars).size
        if coeffs.ndim == 0 or coeffs.shape[0] != size:
            raise JetShapeError(
                f"expected {size} coefficients for order={order}, nvars={nvars}, got shape {coeffs.shape}"
            )
        self.order = order
        self.nvars = nvars
        self.coeffs = coeffs

    # ---- construction -------------------------------------------------------
    @classmethod
    def constant(cls, value: Scalar, order: int, nvars: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros((_table(order, nvars).size,) + value.shape)
        coeffs[0] = value
        return cls(coeffs, order, nvars)

    @classmethod
    def variable(cls, index: int, value: Scalar, order: int, nvars: int) -> "Jet":
        if not 0 <= index < nvars:
            raise JetShapeError(f"variable index {index} out of range for nvars={nvars}")
        jet = cls.constant(value, order, nvars)
        if order >= 1:
            jet.coeffs[1 + index] = 1.0
        return jet

    # ---- inspection ---------------------------------------------------------
    @property
    def table(self) -> _JetTable:
        return _table(self.order, self.nvars)

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.coeffs.shape[1:]

    def coefficient(self, multidegree: Sequence[int]) -> np.ndarray:
        multidegree = tuple(int(m) for m in multidegree)
        if len(multidegree) != self.nvars or min(multidegree) < 0 or sum(multidegree) > self.order:
            raise JetShapeError(f"multidegree {multidegree} out of range for order={self.order}")
        return self.coeffs[self.table.lookup(np.array(multidegree))[0]]

    def degree_part(self, degree: int) -> np.ndarray:
        start = self.table.start
        return self.coeffs[start[degree]:start[degree + 1]]

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, nvars={self.nvars}, batch={self.batch_shape})"

    # ---- coercion -----------------------------------------------------------
    def _check(self, other: "Jet") -> None:
        if other.order != self.order or other.nvars != self.nvars:
            raise JetShapeError(
                f"cannot mix jets of shape ({self.order}, {self.nvars}) and ({other.order}, {other.nvars})"
            )

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            self._check(other)
            return other
        return Jet.constant(other, self.order, self.nvars)

    # ---- ring operations ----------------------------------------------------
    def __add__(self, other) -> "Jet":
        a, b = _align(self.coeffs, self._coerce(other).coeffs)
        return Jet(a + b, self.order, self.nvars)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        a, b = _align(self.coeffs, self._coerce(other).coeffs)
        return Jet(a - b, self.order, self.nvars)

    def __rsub__(self, other) -> "Jet":
        return self._coerce(other) - self

    def __neg__(self) -> "Jet":
        return Jet(-self.coeffs, self.order, self.nvars)

    def __pos__(self) -> "Jet":
        return self

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            factor = np.asarray(other, dtype=float)
            return Jet(_lift(self.coeffs, factor.ndim) * factor, self.order, self.nvars)
        self._check(other)
        a, b = _align(self.coeffs, other.coeffs)
        if self.order == 0:
            return Jet(a * b, 0, self.nvars)
        if self.order == 1:
            a, b = np.broadcast_arrays(a, b)
            out = np.empty_like(a)
            out[0] = a[0] * b[0]
            out[1:] = a[0] * b[1:] + a[1:] * b[0]
            return Jet(out, 1, self.nvars)
        table = self.table
        pairs = a[table.left] * b[table.right]
        out = table.product @ _flat(pairs)
        return Jet(out.reshape((table.size,) + pairs.shape[1:]), self.order, self.nvars)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            divisor = np.asarray(other, dtype=float)
            return Jet(_lift(self.coeffs, divisor.ndim) / divisor, self.order, self.nvars)
        self._check(other)
        return _divide(self, other)

    def __rtruediv__(self, other) -> "Jet":
        return _divide(self._coerce(other), self)

    def __pow__(self, exponent: int) -> "Jet":
        if int(exponent) != exponent or exponent < 0:
            raise JetShapeError(f"jet powers need a nonnegative integer exponent, got {exponent}")
        exponent = int(exponent)
        result = Jet.constant(np.ones(self.batch_shape), self.order, self.nvars)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    # ---- elementary functions ----------------------------------------------
    def exp(self) -> "Jet":
        table = self.table
        u = _flat(self.coeffs)
        v = np.zeros_like(u)
        v[0] = np.exp(u[0])
        for d in range(1, self.order + 1):
            blk = table.block(d)
            v[table.start[d]:table.start[d + 1]] = blk.scatter @ (blk.weight[:, None] * u[blk.rows] * v[blk.cols]) / d
        return Jet(v.reshape(self.coeffs.shape), self.order, self.nvars)

    def sincos(self) -> Tuple["Jet", "Jet"]:
        table = self.table
        u = _flat(self.coeffs)
        s = np.zeros_like(u)
        c = np.zeros_like(u)
        s[0], c[0] = np.sin(u[0]), np.cos(u[0])
        for d in range(1, self.order + 1):
            blk = table.block(d)
            du = blk.weight[:, None] * u[blk.rows]
            sl = slice(table.start[d], table.start[d + 1])
            s[sl] = blk.scatter @ (du * c[blk.cols]) / d
            c[sl] = -(blk.scatter @ (du * s[blk.cols])) / d
        shape = self.coeffs.shape
        return Jet(s.reshape(shape), self.order, self.nvars), Jet(c.reshape(shape), self.order, self.nvars)

    def sin(self) -> "Jet":
        return self.sincos()[0]

    def cos(self) -> "Jet":
        return self.sincos()[1]

    def sqrt(self) -> "Jet":
        if np.any(self.value <= 0):
            raise DomainError("sqrt of a jet with nonpositive constant term")
        table = self.table
        u = _flat(self.coeffs)
        s = np.zeros_like(u)
        s[0] = np.sqrt(u[0])
        for d in range(1, self.order + 1):
            blk = table.block(d, both_positive=True)
            sl = slice(table.start[d], table.start[d + 1])
            cross = blk.scatter @ (s[blk.rows] * s[blk.cols]) if len(blk.rows) else 0.0
            s[sl] = (u[sl] - cross) / (2.0 * s[0])
        return Jet(s.reshape(self.coeffs.shape), self.order, self.nvars)

    # ---- structural operations ---------------------------------------------
    def derivative(self, var: int) -> "Jet":
        """Partial derivative in ``var``; the top-degree block of the result is zero."""
        if not 0 <= var < self.nvars:
            raise JetShapeError(f"variable index {var} out of range for nvars={self.nvars}")
        src, dst, factor = self.table.derivative_map(var)
        out = np.zeros_like(self.coeffs)
        out[dst] = self.coeffs[src] * factor.reshape((-1,) + (1,) * (self.coeffs.ndim - 1))
        return Jet(out, self.order, self.nvars)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetShapeError(f"cannot raise truncation order from {self.order} to {order}")
        size = _table(order, self.nvars).size
        return Jet(self.coeffs[:size].copy(), order, self.nvars)

    def embed(self, nvars: int, positions: Sequence[int], order: int) -> "Jet":
        """Rewrite in a larger variable set, mapping variable v to ``positions[v]``."""
        if len(positions) != self.nvars:
            raise JetShapeError("embed needs one target position per variable")
        src = self.table
        keep = np.nonzero(src.degree <= order)[0]
        exps = np.zeros((len(keep), nvars), dtype=np.int64)
        exps[:, list(positions)] = src.exponents[keep]
        dst = _table(order, nvars)
        out = np.zeros((dst.size,) + self.batch_shape)
        out[dst.lookup(exps)] = self.coeffs[keep]
        return Jet(out, order, nvars)

    def restrict(self, keep: Sequence[int]) -> "Jet":
        """Set every variable outside ``keep`` to zero and drop it."""
        keep = list(keep)
        dropped = [v for v in range(self.nvars) if v not in keep]
        src = self.table
        rows = np.nonzero(src.exponents[:, dropped].sum(axis=1) == 0)[0] if dropped else np.arange(src.size)
        if not keep:
            return self.coeffs[0]
        dst = _table(self.order, len(keep))
        out = np.zeros((dst.size,) + self.batch_shape)
        out[dst.lookup(src.exponents[rows][:, keep])] = self.coeffs[rows]
        return Jet(out, self.order, len(keep))


def _divide(num: Jet, den: Jet) -> Jet:
    if np.any(den.value == 0):
        raise DomainError("division by a jet with zero constant term")
    table = num.table
    a, b = np.broadcast_arrays(*_align(num.coeffs, den.coeffs))
    shape = a.shape
    a, b = _flat(a), _flat(b)
    q = np.zeros_like(a)
    q[0] = a[0] / b[0]
    for d in range(1, num.order + 1):
        blk = table.block(d)
        sl = slice(table.start[d], table.start[d + 1])
        q[sl] = (a[sl] - blk.scatter @ (b[blk.rows] * q[blk.cols])) / b[0]
    return Jet(q.reshape(shape), num.order, num.nvars)


# -----------------------------------------------------------------------------
# Functional interface
# -----------------------------------------------------------------------------
def jet_variable(index: int, value: Scalar, order: int, nvars: int) -> Jet:
    return Jet.variable(index, value, order, nvars)


def jet_constant(value: Scalar, order: int, nvars: int) -> Jet:
    return Jet.constant(value, order, nvars)


def jet_coefficient(jet: Jet, multidegree: Sequence[int]) -> np.ndarray:
    return jet.coefficient(multidegree)


def jet_derivative_value(jet: Jet, multidegree: Sequence[int]) -> np.ndarray:
    """Partial derivative value: coefficient times the multi-index factorial."""
    scale = 1
    for m in multidegree:
        scale *= factorial(int(m))
    return jet.coefficient(multidegree) * scale


def sin(x):
    return x.sin() if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Jet) else np.cos(x)


def exp(x):
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


_UNARY = {
    "neg": lambda x: -x,
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "sqrt": sqrt,
}
_BINARY = {
    "add": lambda x, y: x + y,
    "sub": lambda x, y: x - y,
    "mul": lambda x, y: x * y,
    "div": lambda x, y: x / y,
    "pow_int": lambda x, n: x ** n,
}


def jet_apply(op: str, *args):
    """Apply a named elementary operation to jets (or plain values)."""
    if op in _UNARY:
        if len(args) != 1:
            raise JetShapeError(f"'{op}' takes one argument")
        return _UNARY[op](args[0])
    if op in _BINARY:
        if len(args) != 2:
            raise JetShapeError(f"'{op}' takes two arguments")
        return _BINARY[op](*args)
    raise JetShapeError(f"unknown jet operation '{op}'")


def value_of(x) -> np.ndarray:
    """Constant term of a jet, or the value itself."""
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


def common_shape(values: List) -> Tuple[int, int] | None:
    """(order, nvars) shared by the jets in ``values``; None if there are no jets."""
    shape = None
    for v in values:
        if isinstance(v, Jet):
            if shape is None:
                shape = (v.order, v.nvars)
            elif shape != (v.order, v.nvars):
                raise JetShapeError(f"mixed jet shapes {shape} and {(v.order, v.nvars)}")
    return shape
