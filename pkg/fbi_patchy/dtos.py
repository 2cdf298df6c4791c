# ## path: fbi_patchy/dtos.py
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Union

from fbi_patchy.logic.expr import ExpressionVector
from fbi_patchy.logic.systems import CartesianCenterSystem, PlantNormalForm


@dataclass
class SystemDefinitionDTO:
    """A parsed and validated system definition file."""
    name: str
    kind: str
    path: str
    system: Union[CartesianCenterSystem, PlantNormalForm]
    center: CartesianCenterSystem
    reference: Optional[ExpressionVector] = None
    domain: Dict[str, List[float]] = field(default_factory=dict)
    solve: Dict[str, Any] = field(default_factory=dict)
    lqr: Dict[str, Any] = field(default_factory=dict)
    simulate: Dict[str, Any] = field(default_factory=dict)

    @property
    def plant(self) -> Optional[PlantNormalForm]:
        return self.system if isinstance(self.system, PlantNormalForm) else None


@dataclass
class GridSummaryDTO:
    """Summary logged after a ``grid`` run.

    Attributes:
        points: number of grid points requested.
        outside: how many of them lie beyond the solved domain.
        max_error: per-component max |solution - reference| over the inside points;
            None when no reference was requested or no point is inside.
        out: CSV path the grid was written to.
    """
    points: int
    outside: int
    max_error: Optional[List[float]] = None
    out: Optional[str] = None

    def to_dict(self) -> dict:
        """Summary fields, excluding None values."""
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class ComparisonRowDTO:
    """One ``compare-poly`` row; sup_error is taken over grid points inside the solved domain."""
    method: str  # "taylor" or "patchy"
    degree: int  # polynomial degree, or the patch order for the patchy row
    sup_error: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ClosedLoopSummaryDTO:
    """Summary logged after a ``simulate`` run.

    Attributes:
        horizon: final simulated time.
        sup_error_final: max |e| over the final window, which starts at ``transient_start``.
        settling_time: first time after which |e| stays inside the settling band; None if never.
        invariance_gap: max |x(t) - pi(w(t))| along the trajectory, pi being the solved manifold.
        period_maxima: max |e| over each exosystem period.
        out: CSV path of the trajectory.
    """
    horizon: float
    sup_error_final: float
    transient_start: float
    settling_time: Optional[float] = None
    invariance_gap: Optional[float] = None
    period_maxima: List[float] = field(default_factory=list)
    out: Optional[str] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}
