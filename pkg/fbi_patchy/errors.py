# ## path: fbi_patchy/errors.py
from typing import Any, Optional


class FbiError(Exception):
    """Base class for every failure raised by the solver library."""


class UsageError(FbiError):
    pass


# -----------------------------------------------------------------------------
# Validation
# -----------------------------------------------------------------------------
class ValidationError(FbiError):
    pass


class ExpressionSyntaxError(ValidationError):
    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        self.reason = message
        super().__init__(f"{message} at offset {offset}")


class UnboundName(ValidationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound name '{name}'")


class HyperbolicityViolation(ValidationError):
    def __init__(self, eigenvalue: complex, tol: float):
        self.eigenvalue = eigenvalue
        self.tol = tol
        super().__init__(
            f"eigenvalue {eigenvalue:.6g} has |Re| = {abs(eigenvalue.real):.3g} <= {tol:.3g}"
        )


class DefinitionError(ValidationError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = path or "<definition>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")


class DocumentError(ValidationError):
    pass


class JetShapeError(ValidationError):
    pass


# -----------------------------------------------------------------------------
# Solver failures
# -----------------------------------------------------------------------------
class SolverError(FbiError):
    pass


class IntegrationError(SolverError):
    def __init__(self, message: str, t: Optional[float] = None):
        self.t = t
        super().__init__(message if t is None else f"{message} (t={t:.6g})")


class NonConvergence(SolverError):
    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} after {iterations} iterations (residual {residual:.3e})")


class SingularShooting(SolverError):
    pass


class PeriodicityViolation(SolverError):
    def __init__(self, gap: float, tol: float):
        self.gap = gap
        self.tol = tol
        super().__init__(f"periodicity gap {gap:.3e} exceeds {tol:.3e}")


class StabilizabilityError(SolverError):
    pass


class PatchyBuildError(SolverError):
    """Carries the solution assembled before the failing annulus."""

    def __init__(self, message: str, index: int, stage: str, partial: Any = None):
        self.reason = message
        self.index = index
        self.stage = stage
        self.partial = partial
        super().__init__(f"annulus {index} ({stage}): {message}")


# -----------------------------------------------------------------------------
# Domain errors
# -----------------------------------------------------------------------------
class DomainError(FbiError):
    pass


class RateFloorViolation(DomainError):
    pass


class SeamError(DomainError):
    pass


class OutsideDomain(DomainError):
    def __init__(self, message: str, t: Optional[float] = None):
        self.t = t
        super().__init__(message if t is None else f"{message} at t={t:.6g}")
