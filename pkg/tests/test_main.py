# ## path: tests/test_main.py
import os

import numpy as np
import pytest

from fbi_patchy import constants as const
from fbi_patchy.dtos import GridSummaryDTO
from fbi_patchy.errors import (
    DefinitionError,
    NonConvergence,
    OutsideDomain,
    PatchyBuildError,
    SeamError,
    UsageError,
)
from fbi_patchy.logic.odebvp import periodic_mesh
from fbi_patchy.logic.patchy import AnnulusPatch, PatchySolution, RadialCurve
from fbi_patchy.logic.seed import compute_seed
from fbi_patchy.main import exit_code_for, main
from fbi_patchy.storage.documents import load_solution, read_document, save_solution
from fbi_patchy.storage.tables import read_table
from tests.helpers import DEFINITIONS_DIR, HARMONIC, center_text, definition_path

LINEAR = definition_path("linear-example1")
PENDULUM = definition_path("pendulum-duffing")
EGGCARTON = definition_path("eggcarton")


@pytest.fixture(scope="module")
def linear_solution_file(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("solve") / "linear.json")
    assert main(["solve", LINEAR, "--theta-mesh", "32", "--out", out]) == const.EXIT_OK
    return out


@pytest.fixture(scope="module")
def pendulum_seed_file(tmp_path_factory, pendulum_definition):
    center = pendulum_definition.center
    sol = PatchySolution(center.name, compute_seed(center, 2), [], [], 2, [], periodic_mesh(16), center.orientation)
    out = str(tmp_path_factory.mktemp("pendulum") / "seed-only.json")
    save_solution(out, sol)
    return out


# -----------------------------------------------------------------------------
# seed
# -----------------------------------------------------------------------------
def test_seed_command(tmp_path):
    out = str(tmp_path / "seed.json")
    assert main(["seed", LINEAR, "--order", "2", "--out", out]) == const.EXIT_OK
    doc = read_document(out)
    assert doc["kind"] == "seed"
    assert doc["order"] == 2
    assert doc["blocks"][0]["terms"][0]["value"] == pytest.approx([-1.0 / 3.0, -0.5, -0.5])


def test_seed_order_must_be_positive(tmp_path):
    assert main(["seed", LINEAR, "--order", "0", "--out", str(tmp_path / "s.json")]) == const.EXIT_USAGE


def test_seed_of_non_hyperbolic_system(tmp_path):
    path = tmp_path / "flat.json"
    path.write_text(center_text("flat", HARMONIC, [[0.0]], ["w1^2"]), encoding="utf-8")
    assert main(["seed", str(path), "--order", "2", "--out", str(tmp_path / "s.json")]) == const.EXIT_VALIDATION


def test_missing_definition_file(tmp_path):
    code = main(["seed", str(tmp_path / "none.json"), "--order", "1", "--out", str(tmp_path / "s.json")])
    assert code == const.EXIT_USAGE


def test_argument_errors():
    assert main(["seed"]) == const.EXIT_USAGE
    assert main(["bogus"]) == const.EXIT_USAGE
    assert main([]) == const.EXIT_USAGE


# -----------------------------------------------------------------------------
# solve
# -----------------------------------------------------------------------------
def test_solve_uses_definition_defaults(linear_solution_file):
    sol, reference, _ = load_solution(linear_solution_file)
    assert sol.k == 4
    assert sol.order == 1
    assert sol.schedule == pytest.approx([0.25, 0.5, 0.75, 1.0])
    assert sol.metadata["theta_mesh"] == 32
    assert sol.metadata["domain"]["w1"] == [-1, 1]
    assert reference is not None


def test_failed_solve_writes_partial_solution(tmp_path, softening_text):
    path = tmp_path / "softening.json"
    path.write_text(softening_text, encoding="utf-8")
    out = str(tmp_path / "partial.json")
    code = main(["solve", str(path), "--order", "1", "--schedule", "0.5", "2.0", "--theta-mesh", "32", "--out", out])
    assert code == const.EXIT_SOLVER
    partial, _, _ = load_solution(out)
    assert partial.k == 1


def test_solve_needs_a_schedule(tmp_path):
    path = tmp_path / "plain.json"
    path.write_text(center_text("plain", HARMONIC, [[-1.0]], ["w1^2"]), encoding="utf-8")
    code = main(["solve", str(path), "--annuli", "2", "--out", str(tmp_path / "s.json")])
    assert code == const.EXIT_USAGE


# -----------------------------------------------------------------------------
# grid
# -----------------------------------------------------------------------------
def test_grid_against_reference(tmp_path, linear_solution_file):
    out = str(tmp_path / "grid.csv")
    assert main(["grid", linear_solution_file, "--samples", "5", "--reference", "--out", out]) == const.EXIT_OK
    frame = read_table(out)
    assert list(frame.columns) == [
        "w1", "w2", "x1", "x2", "x3", "x1_ref", "x1_err", "x2_ref", "x2_err", "x3_ref", "x3_err",
    ]
    assert len(frame) == 25
    corner = frame[(frame["w1"] == -1.0) & (frame["w2"] == -1.0)]
    assert corner["x1"].isna().all()
    inside = frame.dropna()
    assert len(inside) == 21
    assert np.max(np.abs(inside[["x1_err", "x2_err", "x3_err"]].to_numpy())) <= 1e-4


def test_single_point_grid(tmp_path, linear_solution_file):
    out = str(tmp_path / "origin.csv")
    code = main(["grid", linear_solution_file, "--w1", "-1", "1", "--w2", "-1", "1", "--samples", "1", "--out", out])
    assert code == const.EXIT_OK
    frame = read_table(out)
    assert len(frame) == 1
    assert frame.loc[0, "w1"] == 0.0
    assert frame.loc[0, ["x1", "x2", "x3"]].tolist() == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)


def test_grid_entirely_outside(tmp_path, linear_solution_file):
    out = str(tmp_path / "outside.csv")
    code = main(["grid", linear_solution_file, "--w1", "5", "6", "--w2", "5", "6", "--samples", "2", "--out", out])
    assert code == const.EXIT_OK
    frame = read_table(out)
    assert len(frame) == 0
    assert list(frame.columns) == ["w1", "w2", "x1", "x2", "x3"]


def test_grid_sample_counts_are_checked(tmp_path, linear_solution_file):
    code = main(["grid", linear_solution_file, "--samples", "2", "3", "4", "--out", str(tmp_path / "g.csv")])
    assert code == const.EXIT_USAGE


def test_grid_summary_omits_missing_error():
    summary = GridSummaryDTO(points=4, outside=4).to_dict()
    assert summary == {"points": 4, "outside": 4}
    assert GridSummaryDTO(points=4, outside=1, max_error=[0.5]).to_dict()["max_error"] == [0.5]


# -----------------------------------------------------------------------------
# compare-poly
# -----------------------------------------------------------------------------
def test_compare_poly(tmp_path, linear_solution_file):
    out = str(tmp_path / "compare.csv")
    args = ["compare-poly", LINEAR, "--solution", linear_solution_file, "--degrees", "2", "1",
            "--w1", "-0.5", "0.5", "--w2", "-0.5", "0.5", "--samples", "5", "--out", out]
    assert main(args) == const.EXIT_OK
    frame = read_table(out)
    assert list(frame.columns) == ["method", "degree", "sup_error"]
    assert frame["method"].tolist() == ["taylor", "taylor", "patchy"]
    assert frame["degree"].tolist() == [1, 2, 1]
    taylor = frame[frame["method"] == "taylor"]
    assert (taylor["sup_error"] <= 1e-12).all()
    assert frame["sup_error"].iloc[-1] <= 1e-4


def test_compare_poly_degree_range(tmp_path, linear_solution_file):
    args = ["compare-poly", LINEAR, "--solution", linear_solution_file, "--degrees", "31", "--out", str(tmp_path / "c.csv")]
    assert main(args) == const.EXIT_USAGE


def test_compare_poly_outside_domain(tmp_path, linear_solution_file):
    args = ["compare-poly", LINEAR, "--solution", linear_solution_file, "--degrees", "1",
            "--w1", "5", "6", "--w2", "5", "6", "--samples", "2", "--out", str(tmp_path / "c.csv")]
    assert main(args) == const.EXIT_DOMAIN


@pytest.mark.slow
def test_eggcarton_patches_beat_taylor_seeds(tmp_path):
    solution = str(tmp_path / "eggcarton.json")
    assert main(["solve", EGGCARTON, "--theta-mesh", "128", "--out", solution]) == const.EXIT_OK
    out = str(tmp_path / "compare.csv")
    args = ["compare-poly", EGGCARTON, "--solution", solution, "--degrees", "7", "19", "--samples", "41", "--out", out]
    assert main(args) == const.EXIT_OK
    frame = read_table(out)
    taylor = frame[frame["method"] == "taylor"].set_index("degree")["sup_error"]
    patchy = float(frame[frame["method"] == "patchy"]["sup_error"].iloc[0])
    assert frame[frame["method"] == "patchy"]["degree"].tolist() == [2]
    assert patchy <= taylor[19]
    assert patchy < taylor[7]


# -----------------------------------------------------------------------------
# simulate
# -----------------------------------------------------------------------------
def test_simulate_needs_a_plant(tmp_path, linear_solution_file):
    args = ["simulate", LINEAR, "--solution", linear_solution_file, "--out", str(tmp_path / "sim.csv")]
    assert main(args) == const.EXIT_USAGE


def test_simulate_from_the_manifold(tmp_path, pendulum_seed_file):
    out = str(tmp_path / "sim.csv")
    args = ["simulate", PENDULUM, "--solution", pendulum_seed_file, "--w0", "0.05", "0",
            "--T", "1", "--start-on-manifold", "--out", out]
    assert main(args) == const.EXIT_OK
    frame = read_table(out)
    assert list(frame.columns) == ["t", "x1", "x2", "x3", "x4", "w1", "w2", "u", "y", "y_ref", "e"]
    assert frame["t"].iloc[-1] == pytest.approx(1.0)
    assert frame["e"].abs().max() <= 1e-2


def test_simulate_outside_the_solution(tmp_path, pendulum_definition):
    center = pendulum_definition.center
    mesh = periodic_mesh(16)
    curve = RadialCurve.from_samples(0, 0.1, mesh, np.full(mesh.shape, 0.1))
    patch = AnnulusPatch(1, curve, 0, np.zeros((1, 2, mesh.size)))
    small = PatchySolution(center.name, compute_seed(center, 1), [curve], [patch], 0, [0.1], mesh, center.orientation)
    path = str(tmp_path / "small.json")
    save_solution(path, small)
    args = ["simulate", PENDULUM, "--solution", path, "--w0", "1", "0", "--out", str(tmp_path / "sim.csv")]
    assert main(args) == const.EXIT_DOMAIN


# -----------------------------------------------------------------------------
# Exit codes
# -----------------------------------------------------------------------------
@pytest.mark.parametrize(
    "err, code",
    [
        (UsageError("x"), const.EXIT_USAGE),
        (DefinitionError("x"), const.EXIT_VALIDATION),
        (NonConvergence("x"), const.EXIT_SOLVER),
        (PatchyBuildError("x", 1, "radial curve"), const.EXIT_SOLVER),
        (SeamError("x"), const.EXIT_DOMAIN),
        (OutsideDomain("x", 1.0), const.EXIT_DOMAIN),
    ],
)
def test_exit_codes(err, code):
    assert exit_code_for(err) == code


# -----------------------------------------------------------------------------
# Packaging
# -----------------------------------------------------------------------------
def test_requirements_are_a_sorted_freeze():
    path = os.path.join(os.path.dirname(DEFINITIONS_DIR), "requirements.txt")
    with open(path, encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip()]
    names = [line.split("==")[0] for line in lines]
    assert all(line.count("==") == 1 for line in lines)
    assert names == sorted(names, key=str.lower)
    assert {"iniconfig", "packaging", "pluggy", "Pygments", "pytest"} <= set(names)
