"""Property suites: named pass/fail checks with measured values and tolerances.

Each suite returns a :class:`~porous_bingham.models.PropertyReport`. A failing
computation inside a suite is recorded as a failed ``<suite>.error`` check, so
the suites never raise for bad inputs.

Example:
    >>> from porous_bingham.geometry import default_geometry
    >>> report = geometry_suite(default_geometry())
    >>> report.passed
    True
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from contextlib import contextmanager
import logging
import math
from typing import Callable
from typing import Dict
from typing import Iterator
from typing import List
from typing import Sequence
from typing import Tuple

# Import third-party modules
import numpy as np

# Import local modules
from porous_bingham.cell_problems import EffectiveLaw
from porous_bingham.cell_problems import discretize_cell
from porous_bingham.cell_problems import eval_K
from porous_bingham.cell_problems import solve_linear_cell
from porous_bingham.cell_problems import solve_nonlinear_cell
from porous_bingham.exceptions import PorousBinghamError
from porous_bingham.fields import ScalarField
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import block_mean
from porous_bingham.fields import divergence
from porous_bingham.forcing import sample_forcing
from porous_bingham.geometry import CellGeometry
from porous_bingham.geometry import DoublePeriodicDomain
from porous_bingham.geometry import Mask
from porous_bingham.geometry import build_cell_masks
from porous_bingham.geometry import build_domain_mask
from porous_bingham.geometry import domain_from_model
from porous_bingham.geometry import geometry_from_model
from porous_bingham.geometry import level_domain
from porous_bingham.geometry import load_geometry
from porous_bingham.geometry import validate_geometry
from porous_bingham.models import CellConfig
from porous_bingham.models import CheckResult
from porous_bingham.models import PropertyReport
from porous_bingham.models import SolverConfig
from porous_bingham.models import StudyConfig
from porous_bingham.models import SuiteConfig
from porous_bingham.saddle_solver import FlowOperators
from porous_bingham.saddle_solver import energy_balance
from porous_bingham.saddle_solver import solve_bingham
from porous_bingham.saddle_solver import solve_stokes
from porous_bingham.unfolding import check_gradient_identities
from porous_bingham.unfolding import check_integral_identity
from porous_bingham.unfolding import integrate_unfolded
from porous_bingham.unfolding import mean_Y
from porous_bingham.unfolding import unfold_delta
from porous_bingham.unfolding import unfold_eps


MIN_ORDER = 0.8
STRUCTURE_TOL = 1e-6
STOKES_TOL = 1e-8
ENERGY_TOL = 1e-3
RIGID_MARGIN = 1e-3
SADDLE_YIELD = 0.01
GAUSS_POINTS = 24

Profile = Callable[[np.ndarray, np.ndarray], np.ndarray]


@contextmanager
def _recorded(report: PropertyReport, suite: str) -> Iterator[None]:
    try:
        yield
    except (PorousBinghamError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        logging.getLogger(__name__).warning("%s suite stopped: %s", suite, e)
        report.checks.append(
            CheckResult(name=f"{suite}.error", passed=False, detail=f"{type(e).__name__}: {e}"),
        )


def _bounded(name: str, measured: float, tolerance: float, detail: str = "") -> CheckResult:
    measured = float(measured)
    return CheckResult(
        name=name,
        passed=bool(math.isfinite(measured) and measured <= tolerance),
        measured=measured,
        tolerance=tolerance,
        detail=detail,
    )


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    scale = float(np.abs(b).max(initial=0.0))
    gap = float(np.abs(a - b).max(initial=0.0))
    return gap / scale if scale > 0 else gap


def _rel_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def _domain_grid(dom: DoublePeriodicDomain, spacing: Sequence[float] | None = None) -> StaggeredGrid:
    if spacing is None:
        return StaggeredGrid(dom.dims, dom.spacing, origin=dom.omega.corner)
    dims = tuple(max(2, int(round(extent / h))) for extent, h in zip(dom.omega.extents, spacing))
    return StaggeredGrid(dims, tuple(spacing), origin=dom.omega.corner)


def fitted_order(scales: Sequence[float], gaps: Sequence[float]) -> float:
    """Slope of ``log gap`` against ``log scale``; ``nan`` without two positive gaps."""
    scales = np.asarray(scales, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    keep = gaps > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(scales[keep]), np.log(gaps[keep]), 1)[0])


def is_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def geometry_suite(geom: CellGeometry) -> PropertyReport:
    """The geometry invariants, one check each."""
    report = PropertyReport()
    with _recorded(report, "geometry"):
        for check in validate_geometry(geom).checks:
            report.checks.append(check.model_copy(update={"name": f"geometry.{check.name}"}))
    return report


def unfolding_suite(
    dom: DoublePeriodicDomain,
    identity_tol: float = 1e-12,
    seed: int = 0,
    spacing: Sequence[float] | None = None,
) -> PropertyReport:
    """Exact algebraic properties of the unfolding operators on random grid fields.

    Args:
        dom: Domain providing the two lattices
        identity_tol: Relative tolerance of the exact identities
        seed: Seed of the random fields
        spacing: Grid step to use instead of the domain's own (a step that does
            not nest in the lattices makes the suite fail with ``GridNotNested``)
    """
    logger = logging.getLogger(__name__)
    report = PropertyReport()
    with _recorded(report, "unfolding"):
        rng = np.random.default_rng(seed)
        grid = _domain_grid(dom, spacing)
        f = rng.standard_normal(grid.dims)
        g = rng.standard_normal(grid.dims)
        alpha, beta = rng.standard_normal(2)
        tf = unfold_eps(ScalarField(grid, f), dom)
        tg = unfold_eps(ScalarField(grid, g), dom)

        combined = unfold_eps(ScalarField(grid, alpha * f + beta * g), dom).values
        report.checks.append(
            _bounded("unfolding.linearity", _relative(combined, alpha * tf.values + beta * tg.values), identity_tol),
        )
        product = unfold_eps(ScalarField(grid, f * g), dom).values
        report.checks.append(
            _bounded("unfolding.multiplicativity", _relative(product, tf.values * tg.values), identity_tol),
        )

        direct = float(np.sum(f**2) * grid.cell_volume)
        unfolded = integrate_unfolded(tf.with_values(tf.values**2)) / dom.geometry.y_cell.volume
        report.checks.append(_bounded("unfolding.norm", abs(unfolded - direct) / direct, identity_tol))

        phi = rng.standard_normal(dom.micro_dims)
        tiled = unfold_eps(ScalarField(grid, np.tile(phi, dom.cells)), dom).values
        report.checks.append(
            _bounded("unfolding.periodic_aligned", _relative(tiled, np.broadcast_to(phi, tiled.shape)), identity_tol),
        )

        x1, x2 = grid.cell_centers()
        w = unfold_delta(unfold_eps(ScalarField(grid, x1), dom)).values
        n1, _, s1, _, r1, _ = w.shape
        ly, lz = dom.geometry.y_cell.lengths[0], dom.geometry.z_cell.lengths[0]
        expected = (
            dom.omega.corner[0]
            + dom.epsilon * ly * np.arange(n1)[:, None, None, None, None, None]
            + dom.eps_delta * lz * np.arange(s1)[None, None, :, None, None, None]
            + dom.eps_delta * lz * ((np.arange(r1) + 0.5) / r1)[None, None, None, None, :, None]
        )
        report.checks.append(
            _bounded("unfolding.composition", _relative(w, np.broadcast_to(expected, w.shape)), identity_tol),
        )

        double_mean = mean_Y(unfold_delta(tf)).values
        report.checks.append(
            _bounded("unfolding.double_mean", _relative(double_mean, block_mean(f, dom.micro_dims)), identity_tol),
        )

        l1 = float(np.abs(f).sum() * grid.cell_volume)
        residual = check_integral_identity(ScalarField(grid, f), dom)
        report.checks.append(_bounded("unfolding.integral_identity", residual / l1, identity_tol))

        smooth = ScalarField(grid, np.sin(2.0 * math.pi * x1) * np.sin(2.0 * math.pi * x2))
        gradients = check_gradient_identities(smooth, dom, identity_tol)
        report.checks.append(
            CheckResult(
                name="unfolding.gradient_identities",
                passed=gradients.passed,
                measured=max(gradients.gap_y, gradients.gap_z),
                tolerance=identity_tol,
                detail=f"gap_y={gradients.gap_y:.3e} gap_z={gradients.gap_z:.3e}",
            ),
        )
    logger.info("Unfolding suite at eps=%g: %d checks", dom.epsilon, len(report.checks))
    return report


def _macro_profile(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    return 1.0 + x1**2 + 0.5 * x2**2


def _periodic_profile(lengths: Sequence[float]) -> Profile:
    def profile(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
        return (
            1.0
            + 0.5 * np.cos(2.0 * math.pi * t1 / lengths[0])
            + 0.25 * np.cos(2.0 * math.pi * t2 / lengths[1])
        )

    return profile


def _test_functions(lengths: Sequence[float]) -> Tuple[List[Profile], List[Profile]]:
    macro: List[Profile] = [
        lambda x1, x2: np.ones_like(x1),
        lambda x1, x2: x1,
        lambda x1, x2: x2,
        lambda x1, x2: x1 * x2,
    ]
    micro: List[Profile] = [
        lambda y1, y2: np.ones_like(y1),
        lambda y1, y2: np.cos(2.0 * math.pi * y1 / lengths[0]),
        lambda y1, y2: np.cos(2.0 * math.pi * y2 / lengths[1]),
    ]
    return macro, micro


def _gauss(fn: Profile, lower: Sequence[float], extents: Sequence[float], n: int = GAUSS_POINTS) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    t1 = lower[0] + 0.5 * extents[0] * (nodes + 1.0)
    t2 = lower[1] + 0.5 * extents[1] * (nodes + 1.0)
    T1, T2 = np.meshgrid(t1, t2, indexing="ij")
    W = np.outer(weights, weights) * 0.25 * extents[0] * extents[1]
    return float(np.sum(W * fn(T1, T2)))


def _product(f: Profile, g: Profile) -> Profile:
    return lambda t1, t2: f(t1, t2) * g(t1, t2)


def _centers(count: int, length: float) -> np.ndarray:
    return length * (np.arange(count) + 0.5) / count


def _meshed(fn: Profile, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    T1, T2 = np.meshgrid(t1, t2, indexing="ij")
    return fn(T1, T2)


def two_scale_gaps(dom: DoublePeriodicDomain) -> Dict[str, float]:
    """Gaps between unfoldings of ``a(x) b(x/eps) c(x/(eps delta))`` and their two-scale limits.

    Returns:
        ``strong_yz`` (double unfolding against ``a b c``), ``scaled_gradient``
        (``eps delta`` times the unfolded gradient against ``a b D_z c``),
        ``weak_y`` (single unfolding against ``a b mean(c)`` on test
        functions), ``weak_x`` (the field against ``a mean(b) mean(c)``) and
        ``transfer`` (``T_eps(a + eps (b(x/eps) - 1))`` against ``a``).
    """
    geom = dom.geometry
    ly, lz = geom.y_cell.lengths, geom.z_cell.lengths
    b, c = _periodic_profile(ly), _periodic_profile(lz)
    eps, eps_delta = dom.epsilon, dom.eps_delta
    corner, extents = dom.omega.corner, dom.omega.extents
    grid = _domain_grid(dom)
    x1, x2 = grid.cell_centers()
    xi1, xi2 = x1 - corner[0], x2 - corner[1]
    b_fine = b(xi1 / eps, xi2 / eps)
    phi = _macro_profile(x1, x2) * b_fine * c(xi1 / eps_delta, xi2 / eps_delta)
    v = unfold_eps(ScalarField(grid, phi), dom)
    w = unfold_delta(v)
    n1, n2, s1, s2, r1, r2 = w.values.shape
    m1, m2 = v.values.shape[2:4]

    a_k = _meshed(
        _macro_profile,
        corner[0] + _centers(n1, n1 * eps * ly[0]),
        corner[1] + _centers(n2, n2 * eps * ly[1]),
    )
    b_s = _meshed(b, _centers(s1, ly[0]), _centers(s2, ly[1]))
    c_r = _meshed(c, _centers(r1, lz[0]), _centers(r2, lz[1]))
    a6 = a_k[:, :, None, None, None, None]
    b6 = b_s[None, None, :, :, None, None]
    gaps = {"strong_yz": _rel_l2(w.values, a6 * b6 * c_r[None, None, None, None, :, :])}

    numerator = 0.0
    denominator = 0.0
    hz = (lz[0] / r1, lz[1] / r2)
    for axis in range(2):
        padded = np.zeros(grid.dims)
        index = [slice(None), slice(None)]
        index[axis] = slice(0, grid.dims[axis] - 1)
        padded[tuple(index)] = np.diff(phi, axis=axis) / grid.spacing[axis]
        scaled = unfold_delta(unfold_eps(ScalarField(grid, eps_delta * padded), dom)).values
        interior = [slice(None)] * 6
        interior[4 + axis] = slice(0, scaled.shape[4 + axis] - 1)
        dc = np.diff(c_r, axis=axis) / hz[axis]
        target = a6 * b6 * dc[None, None, None, None, :, :]
        numerator += float(np.sum((scaled[tuple(interior)] - target) ** 2))
        denominator += float(np.sum(target**2))
    gaps["scaled_gradient"] = math.sqrt(numerator / denominator)

    macro_tests, micro_tests = _test_functions(ly)
    mean_b = _gauss(b, (0.0, 0.0), ly) / geom.y_cell.volume
    mean_c = _gauss(c, (0.0, 0.0), lz) / geom.z_cell.volume
    y_points = (_centers(m1, ly[0]), _centers(m2, ly[1]))
    x_centers = (corner[0] + _centers(n1, n1 * eps * ly[0]), corner[1] + _centers(n2, n2 * eps * ly[1]))
    y_weight = eps**2 * geom.y_cell.volume * (ly[0] / m1) * (ly[1] / m2)
    weak_y: List[Tuple[float, float]] = []
    weak_x: List[Tuple[float, float]] = []
    for alpha in macro_tests:
        macro_ref = _gauss(_product(_macro_profile, alpha), corner, extents)
        alpha_k = _meshed(alpha, *x_centers)
        for beta in micro_tests:
            beta_j = _meshed(beta, *y_points)
            measured = float(np.sum(alpha_k[:, :, None, None] * v.values * beta_j[None, None]) * y_weight)
            reference = macro_ref * _gauss(_product(b, beta), (0.0, 0.0), ly) * mean_c
            weak_y.append((measured, reference))
        measured = float(np.sum(phi * alpha(x1, x2)) * grid.cell_volume)
        weak_x.append((measured, macro_ref * mean_b * mean_c))
    for key, pairs in (("weak_y", weak_y), ("weak_x", weak_x)):
        values = np.asarray(pairs)
        gaps[key] = float(np.abs(values[:, 0] - values[:, 1]).max() / np.abs(values[:, 1]).max())

    transfer = unfold_eps(ScalarField(grid, _macro_profile(x1, x2) + eps * (b_fine - 1.0)), dom).values
    gaps["transfer"] = _rel_l2(transfer, np.broadcast_to(a_k[:, :, None, None], transfer.shape))
    return gaps


def zero_extension_gaps(dom: DoublePeriodicDomain) -> Dict[str, float]:
    """Weak-limit gaps of the zero-extended oscillating field under both normalizations.

    ``full`` divides the cell integrals by ``|Y||Z|``, ``fluid`` by
    ``|Y*||Z*|``.
    """
    geom = dom.geometry
    ly, lz = geom.y_cell.lengths, geom.z_cell.lengths
    b, c = _periodic_profile(ly), _periodic_profile(lz)
    corner, extents = dom.omega.corner, dom.omega.extents
    grid = _domain_grid(dom)
    x1, x2 = grid.cell_centers()
    xi1, xi2 = x1 - corner[0], x2 - corner[1]
    fluid = build_domain_mask(dom).values
    phi = _macro_profile(x1, x2) * b(xi1 / dom.epsilon, xi2 / dom.epsilon) * c(xi1 / dom.eps_delta, xi2 / dom.eps_delta)
    y_star, z_star, _ = build_cell_masks(geom, dom.grid_per_subcell)
    by = _meshed(b, _centers(y_star.shape[0], ly[0]), _centers(y_star.shape[1], ly[1]))
    cz = _meshed(c, _centers(z_star.shape[0], lz[0]), _centers(z_star.shape[1], lz[1]))
    full_factor = float(np.mean(by * y_star.values)) * float(np.mean(cz * z_star.values))
    fluid_factor = full_factor / (y_star.fluid_fraction * z_star.fluid_fraction)
    macro_tests, _ = _test_functions(ly)
    measured, references = [], []
    for alpha in macro_tests:
        measured.append(float(np.sum(phi * fluid * alpha(x1, x2)) * grid.cell_volume))
        references.append(_gauss(_product(_macro_profile, alpha), corner, extents))
    measured_arr = np.asarray(measured)
    references_arr = np.asarray(references)
    gaps = {}
    for key, factor in (("full", full_factor), ("fluid", fluid_factor)):
        expected = factor * references_arr
        gaps[key] = float(np.abs(measured_arr - expected).max() / np.abs(expected).max())
    return gaps


def convergence_suite(base: DoublePeriodicDomain, suite: SuiteConfig | None = None) -> PropertyReport:
    """Two-scale convergence of oscillating profiles over the dyadic ``suite.epsilons``.

    Delta shrinks with epsilon. Strong gaps must decrease monotonically with a
    fitted order of at least ``MIN_ORDER``; weak gaps must decrease
    monotonically to at most ``suite.weak_ratio`` of their first value.
    """
    logger = logging.getLogger(__name__)
    suite = suite or SuiteConfig()
    report = PropertyReport()
    with _recorded(report, "convergence"):
        epsilons = list(suite.epsilons)
        if len(epsilons) < 2:
            report.checks.append(
                CheckResult(name="convergence.levels", passed=False, detail="at least two epsilon levels are required"),
            )
            return report
        start = DoublePeriodicDomain(base.omega, epsilons[0], base.geometry, suite.grid_per_subcell)
        domains = [level_domain(start, eps, "proportional") for eps in epsilons]
        history: Dict[str, List[float]] = {}
        for dom in domains:
            for key, gap in two_scale_gaps(dom).items():
                history.setdefault(key, []).append(gap)
            logger.info("Two-scale gaps at eps=%g delta=%g computed", dom.epsilon, dom.delta)
        for key in ("strong_yz", "scaled_gradient", "transfer"):
            gaps = history[key]
            order = fitted_order(epsilons, gaps)
            report.checks.append(
                CheckResult(
                    name=f"convergence.{key}",
                    passed=bool(is_decreasing(gaps) and math.isfinite(order) and order >= MIN_ORDER),
                    measured=order,
                    tolerance=MIN_ORDER,
                    detail="gaps " + ", ".join(f"{gap:.3e}" for gap in gaps),
                ),
            )
        for key in ("weak_y", "weak_x"):
            gaps = history[key]
            ratio = gaps[-1] / gaps[0] if gaps[0] > 0 else 0.0
            report.checks.append(
                CheckResult(
                    name=f"convergence.{key}",
                    passed=bool(is_decreasing(gaps) and ratio <= suite.weak_ratio),
                    measured=ratio,
                    tolerance=suite.weak_ratio,
                    detail="gaps " + ", ".join(f"{gap:.3e}" for gap in gaps),
                ),
            )
        extension = zero_extension_gaps(domains[-1])
        matched = "full" if extension["full"] < extension["fluid"] else "fluid"
        report.checks.append(
            CheckResult(
                name="convergence.zero_extension",
                passed=matched == "full",
                measured=extension["full"],
                tolerance=extension["fluid"],
                detail=f"matches the {matched} normalization (full {extension['full']:.3e}, "
                f"fluid {extension['fluid']:.3e})",
            ),
        )
    return report


def _rotation(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return -(y - 0.5), x - 0.5


def obstacle_mask(n: int = 16) -> Mask:
    """Unit square with a central square obstacle of a quarter of the edge."""
    values = np.ones((n, n), dtype=bool)
    lo, hi = (3 * n) // 8, (5 * n) // 8
    values[lo:hi, lo:hi] = False
    return Mask(values, (1.0 / n, 1.0 / n))


def saddle_suite(cfg: SolverConfig | None = None, n: int = 16) -> PropertyReport:
    """Stokes consistency, divergence, energy identity and the rigid-zone law on a small obstacle mask."""
    cfg = cfg or SolverConfig()
    report = PropertyReport()
    with _recorded(report, "saddle"):
        mask = obstacle_mask(n)
        ops = FlowOperators.from_mask(mask, "dirichlet0")
        f = sample_forcing(_rotation, ops.grid)

        stokes_state = solve_bingham(None, f, 0.0, 1.0, cfg=cfg, ops=ops)
        u_stokes, _ = solve_stokes(mask, f, 1.0, cfg=cfg, ops=ops)
        a = np.concatenate([c.ravel() for c in stokes_state.u.components])
        b = np.concatenate([c.ravel() for c in u_stokes.components])
        report.checks.append(_bounded("saddle.stokes_consistency", _relative(a, b), STOKES_TOL))

        state = solve_bingham(None, f, SADDLE_YIELD, 1.0, cfg=cfg, ops=ops)
        div = float(np.abs(divergence(state.u).values).max())
        report.checks.append(_bounded("saddle.divergence", div, cfg.tol_div))
        report.checks.append(
            _bounded("saddle.energy_balance", energy_balance(state, f, SADDLE_YIELD, 1.0), ENERGY_TOL),
        )
        report.checks.append(_bounded("saddle.vi_residual", state.vi_residual, cfg.tol_vi))
        diagnostics = state.diagnostics(SADDLE_YIELD, 1.0)
        root = np.sqrt(diagnostics.second_invariant.values[diagnostics.rigid])
        report.checks.append(
            _bounded(
                "saddle.rigid_stress",
                float(root.max(initial=0.0)),
                SADDLE_YIELD * (1.0 + RIGID_MARGIN),
                detail=f"{int(diagnostics.rigid.sum())} rigid cells",
            ),
        )

        zero = sample_forcing(lambda x, y: (np.zeros_like(x), np.zeros_like(y)), ops.grid)
        rest = solve_bingham(None, zero, SADDLE_YIELD, 1.0, cfg=cfg, ops=ops)
        report.checks.append(
            CheckResult(
                name="saddle.zero_forcing_rigid",
                passed=bool(rest.rigid and not np.any(rest.velocity)),
                measured=float(np.abs(rest.velocity).max(initial=0.0)),
                tolerance=0.0,
            ),
        )
    return report


def _mirror_symmetric(mask: Mask) -> bool:
    values = mask.values
    return bool(np.array_equal(values, values[::-1, :]) and np.array_equal(values, values[:, ::-1]))


def cell_suite(
    geom: CellGeometry,
    mu: float = 1.0,
    cell: CellConfig | None = None,
    solver: SolverConfig | None = None,
) -> PropertyReport:
    """Structure of the permeability and the exact points of the nonlinear law."""
    cell = cell or CellConfig()
    solver = solver or SolverConfig()
    report = PropertyReport()
    with _recorded(report, "cell"):
        resolution = (cell.resolution_y, cell.resolution_z)
        _, K = solve_linear_cell(geom, mu, resolution, solver)
        norm = float(np.linalg.norm(K))
        report.checks.append(_bounded("cell.symmetric", float(np.linalg.norm(K - K.T)) / norm, STRUCTURE_TOL))
        smallest = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())
        report.checks.append(
            CheckResult(name="cell.positive_definite", passed=smallest > 0, measured=smallest, tolerance=0.0),
        )
        disc = discretize_cell(geom, *resolution)
        if _mirror_symmetric(disc.y_mask) and _mirror_symmetric(disc.z_mask):
            off = (abs(K[0, 1]) + abs(K[1, 0])) / norm
            report.checks.append(_bounded("cell.diagonal", off, STRUCTURE_TOL))
        else:
            report.checks.append(
                CheckResult(name="cell.diagonal", passed=True, detail="masks are not mirror symmetric; not required"),
            )

        law = EffectiveLaw(geometry=geom, g=1.0, mu=mu, cell=cell, solver=solver, linear_K=K)
        at_zero = eval_K(law, (0.0, 0.0))
        report.checks.append(
            CheckResult(
                name="cell.zero_at_origin",
                passed=bool(not np.any(at_zero)),
                measured=float(np.abs(at_zero).max()),
                tolerance=0.0,
            ),
        )

        lam = np.array([1.0, 0.5])
        limit = solve_nonlinear_cell(geom, lam, 0.0, mu, cell.strategy, resolution, solver, cell).K
        expected = K @ lam
        gap = float(np.linalg.norm(limit - expected) / np.linalg.norm(expected))
        report.checks.append(_bounded("cell.stokes_limit", gap, STRUCTURE_TOL))
    return report


def run_property_suites(cfg: StudyConfig) -> PropertyReport:
    """Run every property suite configured in ``cfg.suite`` and collect their checks."""
    logger = logging.getLogger(__name__)
    report = PropertyReport()
    with _recorded(report, "geometry"):
        model = load_geometry(cfg.geometry)
        geom = geometry_from_model(model)
        report.extend(geometry_suite(geom))
        base = domain_from_model(model, cfg.suite.epsilons[0], cfg.suite.grid_per_subcell)
        report.extend(unfolding_suite(base, cfg.suite.identity_tol, cfg.seed))
        report.extend(convergence_suite(base, cfg.suite))
        if cfg.suite.include_saddle:
            report.extend(saddle_suite(cfg.solver))
        if cfg.suite.include_cell:
            report.extend(cell_suite(geom, cfg.physics.mu, cfg.cell, cfg.solver))
    failed = [check.name for check in report.checks if not check.passed]
    if failed:
        logger.warning("Property suites failed: %s", ", ".join(failed))
    else:
        logger.info("All %d property checks passed", len(report.checks))
    return report
