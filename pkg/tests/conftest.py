# ## path: tests/conftest.py
import pytest

from fbi_patchy.config import settings
from fbi_patchy.logic.odebvp import periodic_mesh
from fbi_patchy.logic.systems import polar_reduce
from fbi_patchy.storage.definitions import load_definition, parse_definition
from tests.helpers import DUFFING, HARMONIC, SOFTENING, center_text, definition_path


# -----------------------------------------------------------------------------
# Shipped definitions
# -----------------------------------------------------------------------------
@pytest.fixture(scope="session")
def linear_definition():
    return load_definition(definition_path("linear-example1"))


@pytest.fixture(scope="session")
def eggcarton_definition():
    return load_definition(definition_path("eggcarton"))


@pytest.fixture(scope="session")
def volcano_definition():
    return load_definition(definition_path("volcano"))


@pytest.fixture(scope="session")
def pendulum_definition():
    return load_definition(definition_path("pendulum-duffing"))


# -----------------------------------------------------------------------------
# Small synthetic systems
# -----------------------------------------------------------------------------
@pytest.fixture(scope="session")
def square_definition():
    """ż = -z + |w|², harmonic exosystem; the manifold is z = w1² + w2² exactly."""
    return parse_definition(
        center_text("square", HARMONIC, [[-1.0]], ["w1^2 + w2^2"], reference=["w1^2 + w2^2"]),
        "square.json",
    )


@pytest.fixture(scope="session")
def duffing_definition():
    return parse_definition(
        center_text("duffing", DUFFING, [[-1.0]], ["w1^2"], params={"a": 0.25}),
        "duffing.json",
    )


@pytest.fixture(scope="session")
def softening_text():
    """Softening Duffing exosystem: the θ-rate vanishes at (θ, r) = (0, 2)."""
    return center_text("softening", SOFTENING, [[-1.0]], ["w1^2"])


@pytest.fixture(scope="session")
def duffing_polar(duffing_definition):
    return polar_reduce(duffing_definition.center)


@pytest.fixture
def coarse_mesh():
    return periodic_mesh(32)


@pytest.fixture
def restore_settings():
    """Snapshot of the mutable solver settings, restored after the test."""
    keys = [k for k in vars(type(settings)) if k.isupper()]
    saved = {k: getattr(settings, k) for k in keys}
    yield settings
    for key, value in saved.items():
        setattr(settings, key, value)
