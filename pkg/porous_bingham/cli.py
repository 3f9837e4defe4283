"""Command-line interface for porous-bingham.

Every subcommand writes ``manifest.json`` into the output directory and exits
with status 0 only when all of its checks pass.

Example:
    $ porous-bingham validate-geometry --geometry default
    $ porous-bingham converge --epsilons 0.5 0.25 0.125 --g 0.0
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
import argparse
import json
import logging
import os
from pathlib import Path
import sys
from typing import Any
from typing import Callable
from typing import Dict
from typing import Optional
from typing import Sequence
from typing import Tuple

# Import third-party modules
import numpy as np

# Import local modules
from porous_bingham.__version__ import __version__
from porous_bingham.cell_problems import build_law
from porous_bingham.cell_problems import cross_check_strategies
from porous_bingham.cell_problems import load_law
from porous_bingham.cell_problems import monotonicity_defect
from porous_bingham.cell_problems import save_law
from porous_bingham.cell_problems import tabulate_law
from porous_bingham.darcy_macro import check_permeability
from porous_bingham.exceptions import IOFailure
from porous_bingham.export import export
from porous_bingham.export import to_jsonable
from porous_bingham.export import write_grid
from porous_bingham.export import write_json
from porous_bingham.export import write_manifest
from porous_bingham.export import write_mask_csv
from porous_bingham.export import write_mask_pgm
from porous_bingham.export import write_report
from porous_bingham.export import write_unfolded_csv
from porous_bingham.filesystem import FORCINGS_ENV
from porous_bingham.fine_scale import apriori_norms
from porous_bingham.fine_scale import poincare_constant
from porous_bingham.fine_scale import rigid_zones
from porous_bingham.fine_scale import solve_fine
from porous_bingham.forcing import BaseForcing
from porous_bingham.forcing import resolve_forcing
from porous_bingham.geometry import CellGeometry
from porous_bingham.geometry import build_cell_masks
from porous_bingham.geometry import build_domain_mask
from porous_bingham.geometry import domain_from_model
from porous_bingham.geometry import geometry_from_model
from porous_bingham.geometry import level_domain
from porous_bingham.geometry import load_geometry
from porous_bingham.geometry import validate_geometry
from porous_bingham.harness import effective_law
from porous_bingham.harness import macro_resolution
from porous_bingham.harness import poincare_scaling
from porous_bingham.harness import run_convergence_study
from porous_bingham.harness import solve_macro
from porous_bingham.models import GeometryModel
from porous_bingham.models import RunManifest
from porous_bingham.models import StudyConfig
from porous_bingham.suites import convergence_suite
from porous_bingham.suites import run_property_suites
from porous_bingham.suites import unfolding_suite
from porous_bingham.unfolding import unfold_delta
from porous_bingham.unfolding import unfold_eps


LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
CROSS_CHECK_DIRECTIONS = 5

CommandResult = Tuple[Dict[str, Any], bool]
Command = Callable[[StudyConfig, argparse.Namespace, Path], CommandResult]


def _common_parser() -> argparse.ArgumentParser:
    """Options shared by every subcommand; they mirror :class:`StudyConfig`."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file deep-merged over the command-line options")
    common.add_argument("--geometry", help="Geometry JSON file or shipped geometry name")
    common.add_argument("--g", type=float, help="Yield stress")
    common.add_argument("--mu", type=float, help="Viscosity")
    common.add_argument("--forcing", help="Forcing preset name, .py plugin or .csv table")
    common.add_argument("--forcing-scale", type=float, help="Multiplier applied to the forcing")
    common.add_argument(
        "--forcing-path",
        help=f"Extra directory of forcing plugins, searched after {FORCINGS_ENV}",
    )
    common.add_argument("--epsilons", type=float, nargs="+", help="Scales of the Y cells, each half the previous")
    common.add_argument("--delta-mode", choices=["fixed", "proportional"], help="How delta follows epsilon")
    common.add_argument("--grid-per-subcell", type=int, help="Grid points per eps-delta subcell edge")
    common.add_argument("--cell-resolution", type=int, nargs=2, metavar=("NY", "NZ"), help="Cell-problem grid")
    common.add_argument("--strategy", choices=["product", "two_level"], help="Nonlinear cell strategy")
    common.add_argument("--macro-resolution", type=int, help="Macro cells per axis")
    common.add_argument("--damping", type=float, help="Picard damping factor")
    common.add_argument("--aitken", action="store_true", default=None, help="Aitken acceleration of Picard")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument(
        "--output",
        default=os.environ.get("POROUS_BINGHAM_OUTPUT"),
        help="Output directory (env: POROUS_BINGHAM_OUTPUT, default: results)",
    )
    common.add_argument(
        "--log-level",
        default=os.environ.get("POROUS_BINGHAM_LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level (env: POROUS_BINGHAM_LOG_LEVEL, default: INFO)",
    )
    return common


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        prog="porous-bingham",
        description="Two-scale homogenization toolkit for Bingham flow in doubly perforated media",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _common_parser()
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("validate-geometry", parents=[common], help="Check and rasterize a geometry")
    commands.add_parser("unfold-suite", parents=[common], help="Unfolding identities and two-scale limits")
    commands.add_parser("cell-linear", parents=[common], help="Linear cell problems and permeability K")

    nonlinear = commands.add_parser("cell-nonlinear", parents=[common], help="Tabulate the nonlinear law K(lambda)")
    nonlinear.add_argument("--table-size", type=int, help="Base points per axis of the table")
    nonlinear.add_argument("--cross-check", action="store_true", help="Compare the two cell strategies")

    fine = commands.add_parser("fine-sim", parents=[common], help="Solve the fine-scale Bingham problem")
    fine.add_argument("--epsilon", type=float, help="Scale to solve at (default: first of --epsilons)")

    darcy = commands.add_parser("darcy", parents=[common], help="Solve the homogenized Darcy problem")
    darcy.add_argument("--law", help="Effective-law file written by cell-nonlinear or cell-linear")

    converge = commands.add_parser("converge", parents=[common], help="Run the homogenization convergence study")
    converge.add_argument("--poincare", action="store_true", help="Also sweep the Poincare constant")

    commands.add_parser("properties", parents=[common], help="Run every property suite")
    return parser


def configure_logging(log_level: str) -> None:
    logging.basicConfig(level=getattr(logging, log_level.upper()), format=LOG_FORMAT)


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``.

    Example:
        >>> deep_merge({"physics": {"g": 0.0, "mu": 1.0}}, {"physics": {"g": 0.5}})
        {'physics': {'g': 0.5, 'mu': 1.0}}
    """
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | Path) -> Dict[str, Any]:
    """Read a JSON configuration file.

    Raises:
        IOFailure: If the file cannot be read or is not a JSON object.
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise IOFailure(f"cannot read configuration {path}: {e}") from e
    if not isinstance(payload, dict):
        raise IOFailure(f"configuration {path} must hold a JSON object")
    return payload


def _set(payload: Dict[str, Any], key: str, value: Any) -> None:
    if value is None:
        return
    *sections, name = key.split(".")
    target = payload
    for section in sections:
        target = target.setdefault(section, {})
    target[name] = value


def build_config(args: argparse.Namespace) -> StudyConfig:
    """Study configuration from the parsed options, with ``--config`` merged on top."""
    payload: Dict[str, Any] = {}
    resolution = getattr(args, "cell_resolution", None) or (None, None)
    for key, value in (
        ("geometry", args.geometry),
        ("physics.g", args.g),
        ("physics.mu", args.mu),
        ("physics.forcing", args.forcing),
        ("physics.forcing_scale", args.forcing_scale),
        ("epsilons", args.epsilons),
        ("delta_mode", args.delta_mode),
        ("grid_per_subcell", args.grid_per_subcell),
        ("cell.resolution_y", resolution[0]),
        ("cell.resolution_z", resolution[1]),
        ("cell.strategy", args.strategy),
        ("cell.table_size", getattr(args, "table_size", None)),
        ("macro.resolution", args.macro_resolution),
        ("macro.damping", args.damping),
        ("macro.aitken", args.aitken),
        ("output_dir", args.output),
        ("seed", args.seed),
    ):
        _set(payload, key, value)
    if args.config:
        payload = deep_merge(payload, load_config(args.config))
    return StudyConfig.model_validate(payload)


def _geometry(cfg: StudyConfig) -> Tuple[GeometryModel, CellGeometry]:
    model = load_geometry(cfg.geometry)
    return model, geometry_from_model(model)


def _forcing(cfg: StudyConfig, args: argparse.Namespace) -> BaseForcing:
    return resolve_forcing(cfg.physics.forcing, cfg.physics.forcing_scale, args.forcing_path)


def cmd_validate_geometry(cfg: StudyConfig, args: argparse.Namespace, output: Path) -> CommandResult:
    _, geom = _geometry(cfg)
    report = validate_geometry(geom)
    write_json(output / "geometry_report.json", report)
    results: Dict[str, Any] = {"checks": report.checks, "filtration_factor": geom.filtration_factor}
    if report.passed:
        y_star, z_star, y_fluid = build_cell_masks(geom, cfg.grid_per_subcell)
        for name, mask in (("y_star", y_star), ("z_star", z_star), ("y_fluid", y_fluid)):
            write_mask_pgm(output / f"{name}.pgm", mask)
            write_mask_csv(output / f"{name}.csv", mask)
        results["fluid_fraction"] = y_fluid.fluid_fraction
    return results, report.passed


def cmd_unfold_suite(cfg: StudyConfig, args: argparse.Namespace, output: Path) -> CommandResult:
    model, _ = _geometry(cfg)
    base = domain_from_model(model, cfg.suite.epsilons[0], cfg.suite.grid_per_subcell)
    report = unfolding_suite(base, cfg.suite.identity_tol, cfg.seed)
    report.extend(convergence_suite(base, cfg.suite))
    indicator = build_domain_mask(base).values.astype(float)
    write_unfolded_csv(output / "unfolded_indicator.csv", unfold_delta(unfold_eps(indicator, base)))
    export(report, output / "unfolding.csv", "csv")
    write_report(output / "unfolding.md", report, "Unfolding suite")
    return {"checks": report.checks}, report.passed


def cmd_cell_linear(cfg: StudyConfig, args: argparse.Namespace, output: Path) -> CommandResult:
    _, geom = _geometry(cfg)
    law = build_law(geom, 0.0, cfg.physics.mu, cfg.cell, cfg.solver)
    K = check_permeability(law.linear_K)
    save_law(law, output / "law.txt")
    results = {
        "K": K,
        "eigenvalues": np.linalg.eigvalsh(K),
        "filtration_factor": geom.filtration_factor,
        "normalization": law.normalization,
    }
    return results, True


def cmd_cell_nonlinear(cfg: StudyConfig, args: argparse.Namespace, output: Path) -> CommandResult:
    logger = logging.getLogger(__name__)
    _, geom = _geometry(cfg)
    law = build_law(geom, cfg.physics.g, cfg.physics.mu, cfg.cell, cfg.solver)
    axes = tabulate_law(law)
    defect = monotonicity_defect(law)
    lams, values = law.samples()
    scale = float(np.abs(lams).max(initial=0.0) * np.abs(values).max(initial=0.0))
    monotone = defect >= -1e-8 * max(scale, 1.0)
    if not monotone:
        logger.error("Tabulated law is not monotone: defect %.3e", defect)
    results: Dict[str, Any] = {
        "linear_K": law.linear_K,
        "yield_thresholds": law.yield_thresholds,
        "monotonicity_defect": defect,
        "table_size": len(lams),
        "axes": list(axes),
    }
    if args.cross_check and cfg.physics.g > 0:
        magnitude = 2.0 * max(law.yield_thresholds.values(), default=0.5)
        angles = 2.0 * np.pi * np.arange(CROSS_CHECK_DIRECTIONS) / CROSS_CHECK_DIRECTIONS
        lambdas = [(magnitude * np.cos(a), magnitude * np.sin(a)) for a in angles]
        results["strategy_gap"] = cross_check_strategies(
            geom,
            lambdas,
            cfg.physics.g,
            cfg.physics.mu,
            (cfg.cell.resolution_y, cfg.cell.resolution_z),
            cfg.solver,
            cfg.cell,
        )
    save_law(law, output / "law.txt")
    return results, monotone


def cmd_fine_sim(cfg: StudyConfig, args: argparse.Namespace, output: Path) -> CommandResult:
    model, _ = _geometry(cfg)
    epsilon = args.epsilon or cfg.epsilons[0]
    dom = domain_from_model(model, epsilon, cfg.grid_per_subcell)
    sol = solve_fine(dom, _forcing(cfg, args), cfg.physics.g, cfg.physics.mu, cfg.solver)
    _, rigid = rigid_zones(sol, cfg=cfg.solver)
    attributes = {"epsilon": epsilon, "delta": dom.delta, "g": cfg.physics.g, "mu": cfg.physics.mu}
    write_grid(output / "fine.grid", {"u": sol.u, "p_fluid": sol.p_fluid, "p_ext": sol.p_ext}, attributes, "fine")
    write_mask_pgm(output / "fluid.pgm", sol.mask)
    results = {
        "epsilon": epsilon,
        "delta": dom.delta,
        "diagnostics": sol.diagnostics,
        "norms": apriori_norms(sol),
        "rigid_zones": rigid,
        "poincare_constant": poincare_constant(sol.mask, seed=cfg.seed),
    }
    return results, rigid.passed


def cmd_darcy(cfg: StudyConfig, args: argparse.Namespace, output: Path) -> CommandResult:
    logger = logging.getLogger(__name__)
    model, geom = _geometry(cfg)
    if args.law:
        law = load_law(args.law)
        if law.geometry_hash and law.geometry_hash != geom.geometry_hash:
            logger.warning("Law %s was built for geometry %s, not %s", args.law, law.geometry_hash, geom.geometry_hash)
    else:
        law = effective_law(geom, cfg)
    base = domain_from_model(model, cfg.epsilons[0], cfg.grid_per_subcell)
    finest = level_domain(base, cfg.epsilons[-1], cfg.delta_mode)
    macro = solve_macro(law, _forcing(cfg, args), base.omega, macro_resolution(cfg, finest), cfg)
    attributes = {"iterations": float(macro.iterations), "residual": macro.residual}
    write_grid(output / "darcy.grid", {"u0": macro.u0, "p_hat": macro.p_hat}, attributes, "darcy")
    results = {
        "iterations": macro.iterations,
        "residual": macro.residual,
        "compatibility": macro.compatibility,
        "rigid": macro.rigid,
        "divergence_max": macro.divergence_max,
        "boundary_flux_max": macro.boundary_flux_max,
        "history": macro.history,
    }
    passed = macro.residual <= cfg.macro.tol and macro.boundary_flux_max == 0.0
    return results, passed


def cmd_converge(cfg: StudyConfig, args: argparse.Namespace, output: Path) -> CommandResult:
    report = run_convergence_study(cfg, _forcing(cfg, args))
    export(report, output / "convergence.csv", "csv")
    write_json(output / "convergence.json", report)
    write_report(output / "convergence.md", report, "Convergence study")
    results: Dict[str, Any] = {"slopes": report.slopes, "checks": report.checks, "levels": len(report.levels)}
    passed = report.passed
    if args.poincare:
        model, _ = _geometry(cfg)
        base = domain_from_model(model, cfg.epsilons[0], cfg.grid_per_subcell)
        sweep = poincare_scaling(base, cfg.epsilons, cfg.delta_mode)
        write_json(output / "poincare.json", sweep)
        results["poincare"] = sweep
        passed = passed and sweep.passed
    return results, passed


def cmd_properties(cfg: StudyConfig, args: argparse.Namespace, output: Path) -> CommandResult:
    report = run_property_suites(cfg)
    export(report, output / "properties.csv", "csv")
    write_report(output / "properties.md", report, "Property suites")
    return {"checks": report.checks}, report.passed


COMMANDS: Dict[str, Command] = {
    "validate-geometry": cmd_validate_geometry,
    "unfold-suite": cmd_unfold_suite,
    "cell-linear": cmd_cell_linear,
    "cell-nonlinear": cmd_cell_nonlinear,
    "fine-sim": cmd_fine_sim,
    "darcy": cmd_darcy,
    "converge": cmd_converge,
    "properties": cmd_properties,
}


def run_command(args: argparse.Namespace) -> bool:
    """Run one subcommand and write its manifest, also when it fails.

    Returns:
        bool: Whether every check of the command passed.
    """
    logger = logging.getLogger(__name__)
    cfg = build_config(args)
    output = Path(cfg.output_dir)
    manifest = RunManifest(command=args.command, version=__version__, config=to_jsonable(cfg))
    logger.info("Running %s, writing to %s", args.command, output)
    try:
        manifest.geometry_hash = geometry_from_model(load_geometry(cfg.geometry)).geometry_hash
        results, passed = COMMANDS[args.command](cfg, args, output)
        manifest.results = to_jsonable(results)
        manifest.passed = bool(passed)
    except Exception as e:
        manifest.results = {"error": f"{type(e).__name__}: {e}"}
        manifest.passed = False
        raise
    finally:
        write_manifest(output, manifest)
    logger.info("%s %s", args.command, "passed" if manifest.passed else "failed")
    return manifest.passed


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Main entry point for the CLI."""
    parser = create_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        passed = run_command(args)
    except Exception as e:
        logging.error("Error running %s: %s", args.command, e)
        sys.exit(1)
    sys.exit(0 if passed else 1)


if __name__ == "__main__":
    main()
