# ## path: fbi_patchy/main.py
import argparse
import json
import logging
import sys
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from fbi_patchy import constants as const
from fbi_patchy.config import settings
from fbi_patchy.dtos import ClosedLoopSummaryDTO, ComparisonRowDTO, GridSummaryDTO, SystemDefinitionDTO
from fbi_patchy.errors import (
    DomainError,
    FbiError,
    PatchyBuildError,
    SolverError,
    UsageError,
    ValidationError,
)
from fbi_patchy.logic.odebvp import periodic_mesh
from fbi_patchy.logic.patchy import PatchySolution, build_patchy, uniform_schedule
from fbi_patchy.logic.regulator import build_regulator, simulate_closed_loop
from fbi_patchy.logic.seed import compute_seed
from fbi_patchy.logic.systems import polar_reduce
from fbi_patchy.storage.definitions import load_definition
from fbi_patchy.storage.documents import load_solution, save_solution, seed_to_document, write_document
from fbi_patchy.storage.tables import write_table

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(levelname)s - %(name)s - %(message)s',
    stream=sys.stdout
)
logger = logging.getLogger(__name__)


@contextmanager
def _overrides(**values):
    """Temporarily replace settings attributes; None leaves one untouched."""
    saved = {k: getattr(settings, k) for k, v in values.items() if v is not None}
    for key in saved:
        setattr(settings, key, values[key])
    try:
        yield
    finally:
        for key, value in saved.items():
            setattr(settings, key, value)


def exit_code_for(err: FbiError) -> int:
    if isinstance(err, UsageError):
        return const.EXIT_USAGE
    if isinstance(err, ValidationError):
        return const.EXIT_VALIDATION
    if isinstance(err, SolverError):
        return const.EXIT_SOLVER
    if isinstance(err, DomainError):
        return const.EXIT_DOMAIN
    return const.EXIT_SOLVER


def _grid_axes(bounds: Sequence[float], samples: int) -> np.ndarray:
    low, high = bounds
    if samples == 1:
        return np.array([0.5 * (low + high)])
    return np.linspace(low, high, samples)


def _grid_samples(raw: Optional[List[int]], default: int) -> Tuple[int, int]:
    if not raw:
        return default, default
    if len(raw) > 2 or min(raw) < 1:
        raise UsageError("--samples takes one or two positive integers")
    return (raw[0], raw[0]) if len(raw) == 1 else (raw[0], raw[1])


def _solution_bounds(sol: PatchySolution, axis: str) -> List[float]:
    domain = sol.metadata.get("domain", {})
    if axis in domain:
        return [float(v) for v in domain[axis]]
    theta = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    extent = sol.outer_extent(theta)
    reach = float(np.max(extent)) if np.all(np.isfinite(extent)) else 1.0
    return [-reach, reach]


def evaluate_grid(sol: PatchySolution, w1: np.ndarray, w2: np.ndarray, workers: int) -> np.ndarray:
    """ψ̃ at flattened grid points, NaN outside; chunks run on a thread pool."""
    chunks = np.array_split(np.arange(w1.size), max(1, workers * 4))
    out = np.full((sol.n, w1.size), np.nan)

    def work(idx):
        return idx, sol.evaluate_cartesian(w1[idx], w2[idx], outside="nan")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for idx, values in pool.map(work, [c for c in chunks if c.size]):
            out[:, idx] = values
    return out


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------
def cmd_seed(args) -> int:
    if args.order < 1:
        raise UsageError(f"--order must be at least 1, got {args.order}")
    definition = load_definition(args.definition)
    seed = compute_seed(definition.center, args.order)
    write_document(args.out, seed_to_document(seed, definition.name))
    return const.EXIT_OK


def _schedule(args, definition: SystemDefinitionDTO) -> List[float]:
    solve = definition.solve
    if args.schedule:
        return list(args.schedule)
    annuli = args.annuli if args.annuli is not None else solve.get("annuli")
    thickness = args.thickness if args.thickness is not None else solve.get("thickness")
    if annuli is None and thickness is None and "schedule" in solve:
        return [float(r) for r in solve["schedule"]]
    if annuli is None or thickness is None:
        raise UsageError("give --schedule or both --annuli and --thickness")
    return uniform_schedule(int(annuli), float(thickness))


def cmd_solve(args) -> int:
    definition = load_definition(args.definition)
    with _overrides(BVP_TOL=args.tol, SHOOTING_SEGMENTS=args.segments):
        return _solve(args, definition)


def _solve(args, definition: SystemDefinitionDTO) -> int:
    order = args.order if args.order is not None else int(definition.solve.get("order", 2))
    seed_order = args.seed_order if args.seed_order is not None else int(definition.solve.get("seed_order", max(order, 1)))
    if order < 0 or seed_order < 1:
        raise UsageError("--order must be >= 0 and --seed-order >= 1")
    schedule = _schedule(args, definition)
    mesh = periodic_mesh(args.theta_mesh or settings.THETA_MESH)

    polar = polar_reduce(definition.center)
    seed = compute_seed(definition.center, seed_order)
    w_names = definition.center.exosystem.w_names
    try:
        sol = build_patchy(polar, seed, order, schedule, mesh)
    except PatchyBuildError as err:
        if err.partial is not None:
            err.partial.metadata["domain"] = definition.domain
            save_solution(args.out, err.partial, definition.reference, w_names)
            logger.error(f"Annulus {err.index} failed; wrote {err.partial.k} completed patches to {args.out}")
        raise
    sol.metadata["domain"] = definition.domain
    save_solution(args.out, sol, definition.reference, w_names)
    return const.EXIT_OK


def cmd_grid(args) -> int:
    sol, reference, w_names = load_solution(args.solution)
    if args.reference and reference is None:
        raise ValidationError(f"{args.solution} carries no reference expressions")
    m1, m2 = _grid_samples(args.samples, 101)
    axis1 = _grid_axes(args.w1 or _solution_bounds(sol, w_names[0]), m1)
    axis2 = _grid_axes(args.w2 or _solution_bounds(sol, w_names[1]), m2)
    W1, W2 = np.meshgrid(axis1, axis2, indexing="ij")
    w1, w2 = W1.ravel(), W2.ravel()
    values = evaluate_grid(sol, w1, w2, args.workers or settings.GRID_WORKERS)
    inside = ~np.any(np.isnan(values), axis=0)
    names = list(sol.seed.names) or [f"z{i + 1}" for i in range(sol.n)]

    data = {const.COL_W1: w1, const.COL_W2: w2}
    for name, row in zip(names, values):
        data[name] = row
    max_error = None
    if args.reference:
        ref = np.array([np.broadcast_to(np.asarray(v, dtype=float), w1.shape) for v in reference.evaluate({w_names[0]: w1, w_names[1]: w2})])
        for name, row, ref_row in zip(names, values, ref):
            data[f"{name}_ref"] = np.where(inside, ref_row, np.nan)
            data[f"{name}_err"] = row - ref_row
        if np.any(inside):
            max_error = np.max(np.abs(values[:, inside] - ref[:, inside]), axis=1).tolist()
    frame = pd.DataFrame(data)
    if not np.any(inside):
        logger.warning(f"All {w1.size} grid points lie outside the solved domain")
        frame = frame.iloc[0:0]
    write_table(frame, args.out)
    summary = GridSummaryDTO(points=int(w1.size), outside=int(np.sum(~inside)), max_error=max_error, out=args.out)
    logger.info(f"Grid summary: {json.dumps(summary.to_dict())}")
    return const.EXIT_OK


def cmd_compare_poly(args) -> int:
    degrees = sorted(set(args.degrees))
    if min(degrees) < 1 or max(degrees) > const.MAX_SEED_DEGREE:
        raise UsageError(f"degrees must lie in 1..{const.MAX_SEED_DEGREE}")
    definition = load_definition(args.definition)
    if definition.reference is None:
        raise ValidationError(f"{args.definition} has no reference expressions")
    sol, _, _ = load_solution(args.solution)
    center = definition.center
    w_names = center.exosystem.w_names

    m1, m2 = _grid_samples(args.samples, 101)
    bounds1 = args.w1 or definition.domain.get(w_names[0]) or _solution_bounds(sol, w_names[0])
    bounds2 = args.w2 or definition.domain.get(w_names[1]) or _solution_bounds(sol, w_names[1])
    W1, W2 = np.meshgrid(_grid_axes(bounds1, m1), _grid_axes(bounds2, m2), indexing="ij")
    w1, w2 = W1.ravel(), W2.ravel()
    patchy = evaluate_grid(sol, w1, w2, settings.GRID_WORKERS)
    inside = ~np.any(np.isnan(patchy), axis=0)
    if not np.any(inside):
        raise DomainError("no grid point lies inside the solved domain")
    w1, w2, patchy = w1[inside], w2[inside], patchy[:, inside]
    truth = center.reference_at(w1, w2)

    rows = []
    full = compute_seed(center, max(degrees))
    for degree in degrees:
        approx = full.truncate(degree).evaluate(w1, w2)
        rows.append(ComparisonRowDTO("taylor", degree, float(np.max(np.abs(approx - truth)))))
    rows.append(ComparisonRowDTO("patchy", sol.order, float(np.max(np.abs(patchy - truth)))))
    for row in rows:
        logger.info(f"{row.method:>7s} degree {row.degree:2d}: sup-error {row.sup_error:.3e}")
    frame = pd.DataFrame([r.to_dict() for r in rows]).rename(
        columns={"method": const.COL_METHOD, "degree": const.COL_DEGREE, "sup_error": const.COL_SUP_ERROR}
    )
    write_table(frame, args.out)
    return const.EXIT_OK


def cmd_simulate(args) -> int:
    definition = load_definition(args.definition)
    plant = definition.plant
    if plant is None:
        raise UsageError(f"{args.definition} is not a plant definition")
    sol, _, _ = load_solution(args.solution)
    lqr = definition.lqr
    sim = definition.simulate
    q = args.lqr_q if args.lqr_q is not None else lqr.get("Q")
    r = args.lqr_r if args.lqr_r is not None else lqr.get("R", 1.0)
    Q = np.diag(q) if q is not None else None
    regulator = build_regulator(plant, sol, Q=Q, R=r)

    w0 = np.asarray(args.w0 if args.w0 is not None else sim.get("w0", [1.0, 0.0]), dtype=float)
    if args.start_on_manifold:
        x0 = regulator.manifold(w0[0], w0[1])
    else:
        x0 = np.asarray(args.x0 if args.x0 is not None else sim.get("x0"), dtype=float)
    horizon = args.T if args.T is not None else float(sim.get("horizon", const.DEFAULT_HORIZON))
    result = simulate_closed_loop(regulator, x0, w0, horizon, args.tol)
    write_table(result.to_frame(), args.out)
    summary = ClosedLoopSummaryDTO(out=args.out, **result.summary())
    logger.info(f"Closed-loop summary: {json.dumps(summary.to_dict())}")
    return const.EXIT_OK


# -----------------------------------------------------------------------------
# Parser
# -----------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbi_patchy", description="Patchy center-manifold solver for output regulation.")
    parser.add_argument("--log-level", default=None, help="overrides FBI_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("seed", help="Taylor seed of the center manifold")
    p.add_argument("definition")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_seed)

    p = sub.add_parser("solve", help="build the patchy solution")
    p.add_argument("definition")
    p.add_argument("--order", type=int)
    p.add_argument("--seed-order", type=int)
    p.add_argument("--annuli", type=int)
    p.add_argument("--thickness", type=float)
    p.add_argument("--schedule", type=float, nargs="+")
    p.add_argument("--theta-mesh", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--segments", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("grid", help="evaluate a solution on a Cartesian grid")
    p.add_argument("solution")
    p.add_argument("--w1", type=float, nargs=2)
    p.add_argument("--w2", type=float, nargs=2)
    p.add_argument("--samples", type=int, nargs="+")
    p.add_argument("--reference", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_grid)

    p = sub.add_parser("compare-poly", help="sup-errors of Taylor seeds against the patchy solution")
    p.add_argument("definition")
    p.add_argument("--solution", required=True)
    p.add_argument("--degrees", type=int, nargs="+", required=True)
    p.add_argument("--w1", type=float, nargs=2)
    p.add_argument("--w2", type=float, nargs=2)
    p.add_argument("--samples", type=int, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_compare_poly)

    p = sub.add_parser("simulate", help="closed-loop tracking simulation")
    p.add_argument("definition")
    p.add_argument("--solution", required=True)
    p.add_argument("--x0", type=float, nargs="+")
    p.add_argument("--w0", type=float, nargs=2)
    p.add_argument("--T", type=float)
    p.add_argument("--lqr-q", type=float, nargs="+")
    p.add_argument("--lqr-r", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--start-on-manifold", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return const.EXIT_OK if exc.code in (0, None) else const.EXIT_USAGE
    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())
    logger.info(f"Running '{args.command}'")
    try:
        return args.handler(args)
    except FbiError as e:
        logger.error(f"'{args.command}' failed: {e}")
        return exit_code_for(e)
    except Exception as e:
        logger.critical(f"An unhandled error occurred in '{args.command}': {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
