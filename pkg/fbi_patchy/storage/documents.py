# ## path: fbi_patchy/storage/documents.py
"""Versioned JSON documents for seeds and patchy solutions."""
import json
import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np

from fbi_patchy import constants as const
from fbi_patchy.errors import DocumentError, UsageError
from fbi_patchy.logic.expr import ExpressionVector
from fbi_patchy.logic.patchy import AnnulusPatch, PatchySolution, RadialCurve
from fbi_patchy.logic.seed import SeedPolynomial

logger = logging.getLogger(__name__)


def _check_header(doc: Dict[str, Any], kind: str) -> None:
    if not isinstance(doc, dict):
        raise DocumentError("document must be a JSON object")
    version = doc.get("schema_version")
    if version != const.SCHEMA_VERSION:
        raise DocumentError(f"unsupported schema_version {version!r} (expected {const.SCHEMA_VERSION})")
    if doc.get("kind") != kind:
        raise DocumentError(f"expected a '{kind}' document, got '{doc.get('kind')}'")


def reference_to_dict(reference: ExpressionVector, w_names) -> Dict[str, Any]:
    return {
        "w_names": list(w_names),
        "params": dict(reference.params),
        "let": [list(item) for item in reference.lets],
        "expressions": list(reference.sources),
    }


def reference_from_dict(data: Dict[str, Any]) -> Tuple[ExpressionVector, Tuple[str, ...]]:
    try:
        vector = ExpressionVector(data["expressions"], data.get("params", {}), [tuple(i) for i in data.get("let", [])])
        return vector, tuple(data["w_names"])
    except (KeyError, TypeError) as err:
        raise DocumentError(f"corrupted reference block: {err}") from err


# -----------------------------------------------------------------------------
# Seeds
# -----------------------------------------------------------------------------
def seed_to_document(seed: SeedPolynomial, name: str) -> Dict[str, Any]:
    doc = {"schema_version": const.SCHEMA_VERSION, "kind": const.DOC_KIND_SEED, "name": name}
    doc.update(seed.to_dict())
    return doc


def seed_from_document(doc: Dict[str, Any]) -> SeedPolynomial:
    _check_header(doc, const.DOC_KIND_SEED)
    return SeedPolynomial.from_dict(doc)


# -----------------------------------------------------------------------------
# Solutions
# -----------------------------------------------------------------------------
def solution_to_document(
    sol: PatchySolution, reference: Optional[ExpressionVector] = None, w_names=("w1", "w2")
) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "schema_version": const.SCHEMA_VERSION,
        "kind": const.DOC_KIND_SOLUTION,
        "name": sol.name,
        "order": sol.order,
        "orientation": sol.orientation,
        "schedule": list(sol.schedule),
        "metadata": dict(sol.metadata),
        "mesh": sol.mesh.tolist(),
        "seed": sol.seed.to_dict(),
    }
    if sol.patches:
        doc["curves"] = [
            {"index": c.index, "r_init": c.r_init, "samples": c.samples.tolist()} for c in sol.curves
        ]
        doc["patches"] = [
            {
                "index": p.index,
                "order": p.order,
                "residual": p.residual,
                "iterations": p.iterations,
                "coefficients": p.coeffs.tolist(),
            }
            for p in sol.patches
        ]
    if reference is not None:
        doc["reference"] = reference_to_dict(reference, w_names)
    return doc


def solution_from_document(doc: Dict[str, Any]) -> Tuple[PatchySolution, Optional[ExpressionVector], Tuple[str, ...]]:
    _check_header(doc, const.DOC_KIND_SOLUTION)
    try:
        mesh = np.asarray(doc["mesh"], dtype=float)
        seed = SeedPolynomial.from_dict(doc["seed"])
        curves = [
            RadialCurve.from_samples(int(c["index"]), float(c["r_init"]), mesh, c["samples"])
            for c in doc.get("curves", [])
        ]
        raw_patches = doc.get("patches", [])
        if len(raw_patches) != len(curves):
            raise DocumentError(f"{len(raw_patches)} patches for {len(curves)} curves")
        patches = [
            AnnulusPatch(
                int(p["index"]), curve, int(p["order"]), np.asarray(p["coefficients"], dtype=float),
                float(p.get("residual", 0.0)), int(p.get("iterations", 0)),
            )
            for p, curve in zip(raw_patches, curves)
        ]
        sol = PatchySolution(
            name=doc["name"],
            seed=seed,
            curves=curves,
            patches=patches,
            order=int(doc["order"]),
            schedule=[float(r) for r in doc["schedule"]],
            mesh=mesh,
            orientation=int(doc["orientation"]),
            metadata=dict(doc.get("metadata", {})),
        )
    except DocumentError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as err:
        raise DocumentError(f"corrupted solution payload: {err}") from err
    reference, w_names = (None, ("w1", "w2"))
    if "reference" in doc:
        reference, w_names = reference_from_dict(doc["reference"])
    return sol, reference, w_names


# -----------------------------------------------------------------------------
# Files
# -----------------------------------------------------------------------------
def write_document(path: str, doc: Dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
    logger.info(f"Wrote {doc.get('kind')} document to {path}")


def read_document(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err.strerror}") from err
    except json.JSONDecodeError as err:
        raise DocumentError(f"{path}:{err.lineno}: invalid JSON: {err.msg}") from err


def save_solution(path: str, sol: PatchySolution, reference: Optional[ExpressionVector] = None, w_names=("w1", "w2")) -> None:
    write_document(path, solution_to_document(sol, reference, w_names))


def load_solution(path: str) -> Tuple[PatchySolution, Optional[ExpressionVector], Tuple[str, ...]]:
    return solution_from_document(read_document(path))
