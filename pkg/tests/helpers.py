# ## path: tests/helpers.py
import json
import os

import numpy as np

DEFINITIONS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "definitions")

HARMONIC = ["-w2", "w1"]
DUFFING = ["w2", "-w1 - a*w1^3"]
SOFTENING = ["w2", "-w1 + 0.25*w1^3"]


def definition_path(name: str) -> str:
    return os.path.join(DEFINITIONS_DIR, f"{name}.json")


def center_text(name: str, s, B, zbar, reference=None, params=None, z=None) -> str:
    """A small center-system definition serialized the way the shipped files are."""
    z = z or [f"z{i + 1}" for i in range(len(B))]
    doc = {
        "name": name,
        "kind": "center-system",
        "params": params or {},
        "variables": {"w": ["w1", "w2"], "z": z},
        "exosystem": {"s": s},
        "B": B,
        "zbar": zbar,
    }
    if reference is not None:
        doc["reference"] = reference
    return json.dumps(doc, indent=2)


def max_abs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))
