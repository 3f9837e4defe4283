"""Homogenization convergence study and Poincare scaling sweep.

For every epsilon level the fine Bingham problem is solved on the doubly
perforated domain and compared with the homogenized Darcy solution: cell
averages of the fine velocity against the filtration factor times ``u0``, and
the extended fine pressure against ``p_hat``.

Example:
    >>> from porous_bingham.models import StudyConfig
    >>> cfg = StudyConfig(physics={"forcing": "zero"}, epsilons=[0.5], grid_per_subcell=4)
    >>> report = run_convergence_study(cfg)
    >>> report.levels[0].gap_u
    0.0
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
import logging
import math
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

# Import third-party modules
import numpy as np
from scipy.interpolate import RegularGridInterpolator

# Import local modules
from porous_bingham.cell_problems import EffectiveLaw
from porous_bingham.cell_problems import build_law
from porous_bingham.darcy_macro import MacroSolution
from porous_bingham.darcy_macro import solve_linear_darcy
from porous_bingham.darcy_macro import solve_nonlinear_darcy
from porous_bingham.exceptions import PorousBinghamError
from porous_bingham.fields import ScalarField
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import block_mean
from porous_bingham.fields import center_values
from porous_bingham.fine_scale import FlowSolution
from porous_bingham.fine_scale import apriori_norms
from porous_bingham.fine_scale import poincare_constant
from porous_bingham.fine_scale import rigid_zones
from porous_bingham.fine_scale import solve_fine
from porous_bingham.forcing import ForcingLike
from porous_bingham.forcing import resolve_forcing
from porous_bingham.geometry import Box
from porous_bingham.geometry import CellGeometry
from porous_bingham.geometry import DoublePeriodicDomain
from porous_bingham.geometry import domain_from_model
from porous_bingham.geometry import geometry_from_model
from porous_bingham.geometry import level_domain
from porous_bingham.geometry import load_geometry
from porous_bingham.models import CheckResult
from porous_bingham.models import ConvergenceReport
from porous_bingham.models import LevelRecord
from porous_bingham.models import PoincareReport
from porous_bingham.models import StudyConfig
from porous_bingham.suites import fitted_order
from porous_bingham.suites import is_decreasing


FINAL_GAP_TOL = 0.15
APRIORI_FACTOR = 2.0


def _gap(a: np.ndarray, b: np.ndarray) -> float:
    """``|a - b| / |b|``, or the absolute gap when ``b`` vanishes."""
    reference = float(np.linalg.norm(b))
    gap = float(np.linalg.norm(a - b))
    return gap / reference if reference > 0 else gap


def _pressure_gap(p: np.ndarray, reference: np.ndarray) -> float:
    diff = p - reference
    diff = diff - diff.mean()
    scale = float(np.linalg.norm(reference - reference.mean()))
    gap = float(np.linalg.norm(diff))
    return gap / scale if scale > 0 else gap


def interpolate_to(field: ScalarField, grid: StaggeredGrid) -> np.ndarray:
    """Bilinear interpolation of a cell-centered field to the cell centers of ``grid``."""
    axes = [
        field.grid.origin[a] + (np.arange(field.grid.dims[a]) + 0.5) * field.grid.spacing[a] for a in range(2)
    ]
    interpolant = RegularGridInterpolator(axes, field.values, bounds_error=False, fill_value=None)
    x, y = grid.cell_centers()
    return interpolant(np.stack([x.ravel(), y.ravel()], axis=1)).reshape(grid.dims)


def macro_resolution(cfg: StudyConfig, finest: DoublePeriodicDomain) -> Tuple[int, int]:
    """Configured macro resolution, or twice the number of epsilon cells at the finest level."""
    if cfg.macro.resolution is not None:
        return (cfg.macro.resolution, cfg.macro.resolution)
    return (2 * finest.cells[0], 2 * finest.cells[1])


def effective_law(geom: CellGeometry, cfg: StudyConfig) -> EffectiveLaw:
    return build_law(geom, cfg.physics.g, cfg.physics.mu, cfg.cell, cfg.solver)


def solve_macro(
    law: EffectiveLaw,
    f: ForcingLike,
    omega: Box,
    resolution: int | Sequence[int],
    cfg: StudyConfig,
) -> MacroSolution:
    """Linear Darcy for a linear law, damped Picard otherwise."""
    if law.is_linear:
        return solve_linear_darcy(law.linear_K, f, omega, resolution, cfg.macro)
    return solve_nonlinear_darcy(law, f, omega, resolution, cfg.macro)


def velocity_gap(sol: FlowSolution, dom: DoublePeriodicDomain, macro: MacroSolution, filtration: float) -> float:
    """Gap between epsilon-cell averages of the fine velocity and ``filtration * u0``."""
    averaged = block_mean(center_values(sol.u), dom.micro_dims)
    dims = macro.u0.grid.dims
    ratio = (dims[0] // dom.cells[0], dims[1] // dom.cells[1])
    u0 = block_mean(macro.cell_velocity, ratio)
    return _gap(averaged, filtration * u0)


def pressure_gaps(sol: FlowSolution, macro: MacroSolution) -> Tuple[float, float]:
    """Gaps of the extended pressure on ``Omega`` and of the fluid pressure on the fluid cells."""
    p_hat = interpolate_to(macro.p_hat, sol.p_ext.grid)
    fluid = sol.mask.values
    return (
        _pressure_gap(sol.p_ext.values, p_hat),
        _pressure_gap(sol.p_fluid.values[fluid], p_hat[fluid]),
    )


def pressure_cauchy(previous: ScalarField, current: ScalarField) -> float:
    """``|p_coarse - p_fine|`` with the finer pressure averaged onto the coarser grid."""
    ratio = tuple(n // m for n, m in zip(current.grid.dims, previous.grid.dims))
    return _pressure_gap(block_mean(current.values, ratio), previous.values)


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def _decreasing_check(name: str, values: List[float]) -> CheckResult:
    passed = all(v == 0 for v in values) or is_decreasing(values)
    return CheckResult(
        name=name,
        passed=bool(passed),
        measured=values[-1] if values else None,
        detail=", ".join(f"{v:.3e}" for v in values),
    )


def _bounded_ratio(name: str, values: List[float], factor: float) -> CheckResult:
    high, low = max(values), min(values)
    if high == 0:
        ratio = 1.0
    elif low > 0:
        ratio = high / low
    else:
        ratio = math.inf
    return CheckResult(name=name, passed=ratio <= factor, measured=ratio, tolerance=factor)


def run_convergence_study(cfg: StudyConfig, forcing: ForcingLike | None = None) -> ConvergenceReport:
    """Compare fine-scale solutions with the homogenized Darcy solution over ``cfg.epsilons``.

    Args:
        cfg: Study configuration
        forcing: Forcing to use instead of ``cfg.physics.forcing``

    Returns:
        ConvergenceReport: One record per level (failed levels keep their
        error message), fitted slopes and the study checks.
    """
    logger = logging.getLogger(__name__)
    model = load_geometry(cfg.geometry)
    geom = geometry_from_model(model)
    base = domain_from_model(model, cfg.epsilons[0], cfg.grid_per_subcell)
    omega = base.omega
    f = forcing if forcing is not None else resolve_forcing(cfg.physics.forcing, cfg.physics.forcing_scale)
    domains = [level_domain(base, eps, cfg.delta_mode) for eps in cfg.epsilons]
    resolution = macro_resolution(cfg, domains[-1])
    report = ConvergenceReport(filtration_factor=geom.filtration_factor, geometry_hash=geom.geometry_hash)

    laws: Dict[str, EffectiveLaw] = {}
    macros: Dict[str, MacroSolution] = {}
    previous: Optional[ScalarField] = None
    solutions: List[Tuple[DoublePeriodicDomain, LevelRecord]] = []
    for dom in domains:
        record = LevelRecord(epsilon=dom.epsilon, delta=dom.delta)
        try:
            key = dom.geometry.geometry_hash
            if key not in macros:
                laws[key] = effective_law(dom.geometry, cfg)
                macros[key] = solve_macro(laws[key], f, omega, resolution, cfg)
            macro = macros[key]
            sol = solve_fine(dom, f, cfg.physics.g, cfg.physics.mu, cfg.solver)
            record.gap_u = velocity_gap(sol, dom, macro, dom.geometry.filtration_factor)
            record.gap_p, record.gap_p_fluid = pressure_gaps(sol, macro)
            if previous is not None:
                record.pressure_cauchy = pressure_cauchy(previous, sol.p_ext)
            previous = sol.p_ext
            record.norms = apriori_norms(sol, f)
            _, record.threshold_law = rigid_zones(sol, cfg=cfg.solver)
            record.rigid_fraction = record.threshold_law.rigid_fraction
            record.poincare_constant = poincare_constant(sol.mask)
            record.iterations = int(sol.diagnostics["iterations"])
            record.vi_residual = sol.diagnostics["vi_residual"]
            record.energy_balance = sol.diagnostics["energy_balance"]
            record.divergence_max = sol.diagnostics["divergence_max"]
            logger.info(
                "Level eps=%g: gap_u=%.3e gap_p=%.3e rigid=%.3f",
                dom.epsilon,
                record.gap_u,
                record.gap_p,
                record.rigid_fraction,
            )
        except PorousBinghamError as e:
            logger.error("Level eps=%g failed: %s", dom.epsilon, e)
            record.failed = True
            record.error = f"{type(e).__name__}: {e}"
            previous = None
        report.levels.append(record)
        solutions.append((dom, record))

    done = [(dom, record) for dom, record in solutions if not record.failed]
    if not done:
        return report
    eps = [record.epsilon for _, record in done]
    eps_delta = [dom.eps_delta for dom, _ in done]
    for name in ("gap_u", "gap_p", "gap_p_fluid"):
        values = [getattr(record, name) for _, record in done]
        report.slopes[name] = _finite(fitted_order(eps, values))
        report.checks.append(_decreasing_check(f"{name}.decreasing", values))
    report.slopes["poincare"] = _finite(fitted_order(eps_delta, [record.poincare_constant for _, record in done]))
    cauchy = [record.pressure_cauchy for _, record in done if record.pressure_cauchy is not None]
    if len(cauchy) >= 2:
        report.checks.append(_decreasing_check("pressure_cauchy.decreasing", cauchy))
    for name in ("u_l2", "scaled_grad_u_l2", "p_ext_l2", "bound_ratio"):
        values = [getattr(record.norms, name) for _, record in done]
        report.checks.append(_bounded_ratio(f"apriori.{name}", values, APRIORI_FACTOR))
    report.checks.append(
        CheckResult(
            name="threshold_law",
            passed=all(record.threshold_law.passed for _, record in done),
            measured=max(record.threshold_law.constitutive_residual for _, record in done),
            tolerance=done[0][1].threshold_law.constitutive_tolerance,
        ),
    )
    for key, macro in macros.items():
        report.checks.append(
            CheckResult(
                name=f"macro.{key[:8]}.conservation",
                passed=macro.residual <= cfg.macro.tol and macro.boundary_flux_max == 0.0,
                measured=macro.residual,
                tolerance=cfg.macro.tol,
            ),
        )
    if cfg.physics.g == 0 and len(done) > 1:
        final = done[-1][1].gap_u
        report.checks.append(
            CheckResult(name="gap_u.final", passed=final <= FINAL_GAP_TOL, measured=final, tolerance=FINAL_GAP_TOL),
        )
    logger.info("Convergence study finished: %s", "passed" if report.passed else "failed")
    return report


def poincare_scaling(
    base: DoublePeriodicDomain,
    epsilons: Sequence[float],
    delta_mode: str = "fixed",
    block: int = 8,
) -> PoincareReport:
    """Poincare constants of the fluid region over a dyadic sweep and their slope against ``eps delta``."""
    logger = logging.getLogger(__name__)
    report = PoincareReport()
    for eps in epsilons:
        dom = level_domain(base, eps, delta_mode)
        report.eps_delta.append(dom.eps_delta)
        report.constants.append(poincare_constant(dom, block))
        logger.info("C_P(eps=%g, eps delta=%g) = %.6g", eps, dom.eps_delta, report.constants[-1])
    report.slope = fitted_order(report.eps_delta, report.constants)
    return report
