# ## path: fbi_patchy/storage/definitions.py
"""JSON system definitions.

A center system declares ``variables.w``/``variables.z``, an ``exosystem``
(either ``s`` or ``P``/``Q``/``orientation``), the matrix ``B`` and ``zbar``.
A plant in normal form declares ``variables.w``/``z``/``xi``, ``f0``, ``a``,
``b``, the exosystem and the output offset ``p``, plus an optional
``coordinates`` block mapping physical states to (ξ, z). Parameters may be
numbers or expressions over earlier parameters; ``let`` names auxiliary
expressions available to ``zbar``/``f0``.
"""
import json
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from fbi_patchy import constants as const
from fbi_patchy.dtos import SystemDefinitionDTO
from fbi_patchy.errors import (
    DefinitionError,
    ExpressionSyntaxError,
    HyperbolicityViolation,
    UnboundName,
    UsageError,
    ValidationError,
)
from fbi_patchy.logic.expr import ExpressionVector, compile_expression, parse
from fbi_patchy.logic.systems import (
    CartesianCenterSystem,
    Exosystem,
    ExpressionZbar,
    PlantCoordinates,
    PlantNormalForm,
    center_system,
    check_hyperbolic,
)

logger = logging.getLogger(__name__)


class DefinitionReader:
    def __init__(self, path: str, text: str):
        self.path = path
        self.text = text
        try:
            self.data = json.loads(text)
        except json.JSONDecodeError as err:
            raise DefinitionError(f"invalid JSON: {err.msg}", path, err.lineno) from err
        if not isinstance(self.data, dict):
            raise DefinitionError("a definition must be a JSON object", path, 1)
        self.params: Dict[str, float] = {}
        self.lets: List[Tuple[str, str]] = []

    # ---- location helpers ---------------------------------------------------
    def _line(self, needle: Any) -> Optional[int]:
        for candidate in (json.dumps(needle, ensure_ascii=False), json.dumps(needle), str(needle)):
            idx = self.text.find(candidate)
            if idx >= 0:
                return self.text.count("\n", 0, idx) + 1
        return None

    def error(self, message: str, needle: Any = None) -> DefinitionError:
        return DefinitionError(message, self.path, self._line(needle) if needle is not None else None)

    def field(self, key: str, required: bool = True, default: Any = None) -> Any:
        if key not in self.data:
            if required:
                raise self.error(f"missing required field '{key}'")
            return default
        return self.data[key]

    # ---- expressions --------------------------------------------------------
    def _parse_all(self, key: str, sources: Sequence[str]) -> None:
        for src in sources:
            if not isinstance(src, str):
                raise self.error(f"{key}: expected an expression string, got {src!r}", key)
            try:
                parse(src)
            except ExpressionSyntaxError as err:
                raise self.error(f"{key}: {err.reason} at offset {err.offset} in '{src}'", src) from err

    def vector(self, key: str, sources: Any, allowed: Sequence[str], lets: bool = False) -> ExpressionVector:
        if isinstance(sources, str):
            sources = [sources]
        if not isinstance(sources, list) or not sources:
            raise self.error(f"{key}: expected a non-empty list of expressions", key)
        self._parse_all(key, sources)
        vector = ExpressionVector(sources, self.params, self.lets if lets else None)
        try:
            vector.check_names(allowed)
        except UnboundName as err:
            culprit = next((s for s in sources if err.name in s), key)
            raise self.error(f"{key}: unknown name '{err.name}'", culprit) from err
        return vector

    def read_params(self) -> None:
        raw = self.field(const.DEF_PARAMS, required=False, default={})
        if not isinstance(raw, dict):
            raise self.error("params must be an object", const.DEF_PARAMS)
        env: Dict[str, Any] = dict(const.CONSTANTS)
        for name, value in raw.items():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                number = float(value)
            elif isinstance(value, str):
                self._parse_all(f"params.{name}", [value])
                try:
                    number = float(compile_expression(parse(value))(env))
                except UnboundName as err:
                    raise self.error(f"params.{name}: unknown name '{err.name}'", value) from err
            else:
                raise self.error(f"params.{name}: expected a number or an expression", name)
            env[name] = number
            self.params[name] = number

    def read_lets(self) -> None:
        raw = self.field(const.DEF_LET, required=False, default={})
        if not isinstance(raw, dict):
            raise self.error("let must be an object of name -> expression", const.DEF_LET)
        self._parse_all(const.DEF_LET, list(raw.values()))
        self.lets = list(raw.items())

    def names(self, group: str, required: bool = True) -> Tuple[str, ...]:
        variables = self.field(const.DEF_VARIABLES)
        if not isinstance(variables, dict):
            raise self.error("variables must be an object", const.DEF_VARIABLES)
        names = variables.get(group)
        if names is None:
            if required:
                raise self.error(f"variables.{group} is missing", const.DEF_VARIABLES)
            return ()
        if not isinstance(names, list) or not all(isinstance(n, str) and n.isidentifier() for n in names):
            raise self.error(f"variables.{group} must be a list of identifiers", group)
        return tuple(names)

    # ---- blocks -------------------------------------------------------------
    def exosystem(self, w_names: Sequence[str]) -> Exosystem:
        raw = self.field(const.DEF_EXOSYSTEM)
        try:
            if isinstance(raw, dict) and "s" in raw:
                return Exosystem(self.vector("exosystem.s", raw["s"], w_names), w_names)
            if isinstance(raw, dict) and {"P", "Q"} <= set(raw):
                self.vector("exosystem.P", [raw["P"], raw["Q"]], w_names)
                return Exosystem.from_nonlinearities(
                    raw["P"], raw["Q"], int(raw.get("orientation", 1)), self.params, w_names
                )
        except DefinitionError:
            raise
        except ValidationError as err:
            raise self.error(f"exosystem: {err}", const.DEF_EXOSYSTEM) from err
        raise self.error("exosystem needs 's' or 'P'/'Q'", const.DEF_EXOSYSTEM)

    def matrix(self, key: str, n: int) -> np.ndarray:
        raw = self.field(key)
        try:
            M = np.array(raw, dtype=float)
        except (TypeError, ValueError) as err:
            raise self.error(f"{key} must be a numeric matrix", key) from err
        if M.shape != (n, n):
            raise self.error(f"{key} has shape {M.shape} but {n} z variables are declared", key)
        return M

    def blocks(self) -> Dict[str, Dict[str, Any]]:
        out = {}
        for key in (const.DEF_DOMAIN, const.DEF_SOLVE, const.DEF_LQR, const.DEF_SIMULATE):
            value = self.field(key, required=False, default={})
            if not isinstance(value, dict):
                raise self.error(f"{key} must be an object", key)
            out[key] = value
        for axis, bounds in out[const.DEF_DOMAIN].items():
            if not (isinstance(bounds, list) and len(bounds) == 2 and bounds[0] < bounds[1]):
                raise self.error(f"domain.{axis} must be [low, high]", axis)
        return out

    # ---- systems ------------------------------------------------------------
    def center(self, name: str) -> Tuple[CartesianCenterSystem, Optional[ExpressionVector]]:
        w_names = self.names("w")
        z_names = self.names("z")
        exo = self.exosystem(w_names)
        B = self.matrix(const.DEF_B, len(z_names))
        zbar = self.vector(const.DEF_ZBAR, self.field(const.DEF_ZBAR), w_names + z_names, lets=True)
        if len(zbar) != len(z_names):
            raise self.error(f"zbar has {len(zbar)} components for {len(z_names)} z variables", const.DEF_ZBAR)
        reference = self.reference(w_names, len(z_names))
        system = CartesianCenterSystem(
            name=name,
            B=B,
            zbar=ExpressionZbar(zbar, z_names, w_names),
            exosystem=exo,
            z_names=z_names,
            params=dict(self.params),
            reference=reference,
        )
        try:
            system.validate()
        except ValidationError as err:
            raise self.error(str(err), const.DEF_ZBAR) from err
        return system, reference

    def reference(self, w_names: Sequence[str], n: int) -> Optional[ExpressionVector]:
        raw = self.field(const.DEF_REFERENCE, required=False)
        if raw is None:
            return None
        reference = self.vector(const.DEF_REFERENCE, raw, w_names)
        if len(reference) != n:
            raise self.error(f"reference has {len(reference)} components for {n} z variables", const.DEF_REFERENCE)
        return reference

    def plant(self, name: str) -> PlantNormalForm:
        w_names = self.names("w")
        z_names = self.names("z")
        xi_names = self.names("xi")
        internal = z_names + xi_names
        exo = self.exosystem(w_names)
        coordinates = None
        raw_coords = self.field(const.DEF_COORDINATES, required=False)
        if raw_coords is not None:
            if not isinstance(raw_coords, dict) or not {"state", "to_normal", "from_normal"} <= set(raw_coords):
                raise self.error("coordinates needs 'state', 'to_normal' and 'from_normal'", const.DEF_COORDINATES)
            state = tuple(raw_coords["state"])
            dim = len(internal)
            to_normal = self.vector("coordinates.to_normal", raw_coords["to_normal"], state)
            from_normal = self.vector("coordinates.from_normal", raw_coords["from_normal"], internal)
            if len(state) != dim or len(to_normal) != dim or len(from_normal) != dim:
                raise self.error(f"coordinates must map {dim} states both ways", const.DEF_COORDINATES)
            coordinates = PlantCoordinates(state, to_normal, from_normal)
        plant = PlantNormalForm(
            name=name,
            relative_degree=int(self.field("relative_degree", required=False, default=len(xi_names))),
            z_names=z_names,
            xi_names=xi_names,
            f0=self.vector(const.DEF_F0, self.field(const.DEF_F0), internal, lets=True),
            a=self.vector(const.DEF_A, self.field(const.DEF_A), internal, lets=True),
            b=self.vector(const.DEF_B_DRIFT, self.field(const.DEF_B_DRIFT), internal, lets=True),
            exosystem=exo,
            p=self.vector(const.DEF_P, self.field(const.DEF_P), w_names),
            params=dict(self.params),
            coordinates=coordinates,
        )
        try:
            return plant.validate()
        except ValidationError as err:
            raise self.error(str(err), const.DEF_F0) from err

    def read(self) -> SystemDefinitionDTO:
        name = self.field(const.DEF_NAME)
        kind = self.field(const.DEF_KIND)
        if kind not in const.DEFINITION_KINDS:
            raise self.error(f"kind must be one of {', '.join(const.DEFINITION_KINDS)}, got '{kind}'", kind)
        self.read_params()
        self.read_lets()
        blocks = self.blocks()
        if kind == const.KIND_CENTER_SYSTEM:
            system, reference = self.center(name)
            center = system
        else:
            system = self.plant(name)
            reference = None
            try:
                center = center_system(system)
            except HyperbolicityViolation:
                raise
            except ValidationError as err:
                raise self.error(str(err), const.DEF_F0) from err
        check_hyperbolic(center.B)
        logger.info(f"Loaded {kind} '{name}' from {self.path} (n={center.n}, orientation {center.orientation:+d})")
        return SystemDefinitionDTO(
            name=name,
            kind=kind,
            path=self.path,
            system=system,
            center=center,
            reference=reference,
            domain=blocks[const.DEF_DOMAIN],
            solve=blocks[const.DEF_SOLVE],
            lqr=blocks[const.DEF_LQR],
            simulate=blocks[const.DEF_SIMULATE],
        )


def load_definition(path: str) -> SystemDefinitionDTO:
    """Read, parse and validate a system definition file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as err:
        raise UsageError(f"cannot read definition {path}: {err.strerror}") from err
    return DefinitionReader(path, text).read()


def parse_definition(text: str, path: str = "<definition>") -> SystemDefinitionDTO:
    return DefinitionReader(path, text).read()
