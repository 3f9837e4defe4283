"""Direct Bingham simulation on the doubly perforated domain and its diagnostics.

The fine problem on ``Omega_{eps delta}`` uses the scaled coefficients
``mu_eff = 2 mu (eps delta)^2`` and ``g_eff = g eps delta`` with no-slip on the
obstacles and on the outer boundary.

Example:
    >>> from porous_bingham.geometry import Box, DoublePeriodicDomain, default_geometry
    >>> dom = DoublePeriodicDomain(Box((0.0, 0.0), (1.0, 1.0)), 0.5, default_geometry(), 4)
    >>> sol = solve_fine(dom, lambda x, y: (0 * x, 0 * y), g=1.0, mu=1.0)
    >>> float(abs(sol.u.ux).max())
    0.0
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from dataclasses import dataclass
from dataclasses import field
import logging
import math
from typing import Dict
from typing import Tuple

# Import third-party modules
import numpy as np
from scipy import linalg
from scipy import sparse
from scipy.sparse import linalg as spla

# Import local modules
from porous_bingham.exceptions import MissingMultiplier
from porous_bingham.exceptions import NonConvergence
from porous_bingham.fields import ScalarField
from porous_bingham.fields import VectorField
from porous_bingham.fields import divergence
from porous_bingham.fields import l2_norm
from porous_bingham.fields import lookup
from porous_bingham.forcing import ForcingLike
from porous_bingham.forcing import sample_forcing
from porous_bingham.geometry import DoublePeriodicDomain
from porous_bingham.geometry import Mask
from porous_bingham.geometry import build_domain_mask
from porous_bingham.geometry import label_components
from porous_bingham.models import AprioriNorms
from porous_bingham.models import RigidZoneReport
from porous_bingham.models import SolverConfig
from porous_bingham.saddle_solver import BinghamState
from porous_bingham.saddle_solver import FlowOperators
from porous_bingham.saddle_solver import energy_balance
from porous_bingham.saddle_solver import solve_bingham


RIGID_MARGIN = 1e-3


@dataclass
class FlowSolution:
    """Fine-scale velocity and pressure with run diagnostics.

    Attributes:
        u: Velocity, zero on solid faces and on the boundary
        p_fluid: Pressure on fluid cells (zero elsewhere), mean zero over the fluid
        p_ext: Pressure extended into the obstacles
        state: Solver state
        forcing: Sampled forcing
        diagnostics: Iterations and residuals of the run
    """

    u: VectorField
    p_fluid: ScalarField
    p_ext: ScalarField
    epsilon: float
    delta: float
    g: float
    mu: float
    mask: Mask
    state: BinghamState = field(repr=False)
    forcing: VectorField = field(repr=False)
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def eps_delta(self) -> float:
        return self.epsilon * self.delta

    @property
    def g_eff(self) -> float:
        return self.g * self.eps_delta

    @property
    def mu_eff(self) -> float:
        return 2.0 * self.mu * self.eps_delta**2


def scaled_coefficients(dom: DoublePeriodicDomain, g: float, mu: float) -> Tuple[float, float]:
    """``(g eps delta, 2 mu (eps delta)^2)``."""
    return g * dom.eps_delta, 2.0 * mu * dom.eps_delta**2


def solve_fine(
    dom: DoublePeriodicDomain,
    f: ForcingLike,
    g: float,
    mu: float,
    cfg: SolverConfig | None = None,
    mask: Mask | None = None,
    initial: BinghamState | None = None,
) -> FlowSolution:
    """Solve the scaled Bingham problem on ``Omega_{eps delta}``.

    Args:
        dom: The domain
        f: Forcing as a face field, a :class:`BaseForcing` or a callable of ``(x, y)``
        g: Yield stress
        mu: Viscosity
        cfg: Solver settings
        mask: Prebuilt domain mask
        initial: Warm start

    Returns:
        FlowSolution: Velocity, pressures and diagnostics
    """
    logger = logging.getLogger(__name__)
    cfg = cfg or SolverConfig()
    mask = mask or build_domain_mask(dom)
    ops = FlowOperators.from_mask(mask, "dirichlet0")
    forcing = sample_forcing(f, ops.grid)
    g_eff, mu_eff = scaled_coefficients(dom, g, mu)
    logger.info(
        "Fine solve at eps=%g delta=%g on %s cells (g_eff=%.3e, mu_eff=%.3e)",
        dom.epsilon,
        dom.delta,
        mask.shape,
        g_eff,
        mu_eff,
    )
    state = solve_bingham(None, forcing, g_eff, mu_eff, cfg=cfg, initial=initial, ops=ops)
    u = state.u
    p_fluid = state.p
    p_ext = ScalarField(p_fluid.grid, extend_pressure_field(p_fluid.values, mask.values))
    diagnostics = {
        "iterations": float(state.iterations),
        "vi_residual": state.vi_residual,
        "energy_balance": energy_balance(state, forcing, g_eff, mu_eff),
        "divergence_max": float(np.abs(divergence(u).values).max()),
        "rigid": float(state.rigid),
    }
    return FlowSolution(
        u=u,
        p_fluid=p_fluid,
        p_ext=p_ext,
        epsilon=dom.epsilon,
        delta=dom.delta,
        g=g,
        mu=mu,
        mask=mask,
        state=state,
        forcing=forcing,
        diagnostics=diagnostics,
    )


def extend_pressure_field(p: np.ndarray, fluid: np.ndarray, renormalize: bool = True) -> np.ndarray:
    """Fill each connected solid component with the mean of its 4-adjacent fluid pressures.

    Args:
        p: Pressure on the grid (only fluid values are read)
        fluid: Fluid cells
        renormalize: Subtract the mean over the whole grid afterwards

    Returns:
        np.ndarray: The extended pressure
    """
    p = np.asarray(p, dtype=float)
    fluid = np.asarray(fluid, dtype=bool)
    out = np.where(fluid, p, 0.0)
    count, labels = label_components(~fluid, (False, False))
    if count:
        solid_i, solid_j = np.nonzero(~fluid)
        component = labels[solid_i, solid_j]
        flat = np.arange(fluid.size).reshape(fluid.shape)
        pairs = []
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            neighbor = lookup(flat, solid_i + di, solid_j + dj, (False, False), -1)
            is_fluid = neighbor >= 0
            is_fluid[is_fluid] = fluid.flat[neighbor[is_fluid]]
            pairs.append(np.stack([component[is_fluid], neighbor[is_fluid]], axis=1))
        pairs = np.unique(np.concatenate(pairs), axis=0)
        sums = np.bincount(pairs[:, 0], weights=p.flat[pairs[:, 1]], minlength=count)
        counts = np.bincount(pairs[:, 0], minlength=count)
        fill = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
        out[solid_i, solid_j] = fill[component]
    if renormalize:
        out -= out.mean()
    return out


def extend_pressure(sol: FlowSolution) -> ScalarField:
    """Pressure extended into the obstacles, mean zero over ``Omega``."""
    return ScalarField(sol.p_fluid.grid, extend_pressure_field(sol.p_fluid.values, sol.mask.values))


def apriori_norms(sol: FlowSolution, f: ForcingLike | None = None) -> AprioriNorms:
    """``|u|``, ``eps delta |grad u|`` and ``|p_ext|`` in L2, with their ratio to ``|f|``.

    Args:
        sol: Fine solution
        f: Forcing the bounds are measured against; the solution's own sampled forcing by default

    Returns:
        AprioriNorms: The three norms, ``|f|`` and ``(|u| + eps delta |grad u| + |p_ext|) / |f|``
    """
    state = sol.state
    forcing = sol.forcing if f is None else sample_forcing(f, sol.forcing.grid)
    grad_sq = float(state.velocity @ (state.ops.L @ state.velocity))
    u_l2 = l2_norm(sol.u)
    scaled_grad = sol.eps_delta * math.sqrt(max(grad_sq, 0.0))
    p_ext_l2 = l2_norm(sol.p_ext)
    forcing_l2 = l2_norm(forcing)
    total = u_l2 + scaled_grad + p_ext_l2
    return AprioriNorms(
        u_l2=u_l2,
        scaled_grad_u_l2=scaled_grad,
        p_ext_l2=p_ext_l2,
        forcing_l2=forcing_l2,
        bound_ratio=total / forcing_l2 if forcing_l2 > 0 else 0.0,
    )


def dirichlet_laplacian(mask: Mask) -> sparse.csr_matrix:
    """Cell-centered Laplacian on the fluid cells with zero values on solid and outer faces."""
    fluid = mask.values
    hx, hy = mask.spacing
    index = -np.ones(fluid.shape, dtype=np.int64)
    cells = np.flatnonzero(fluid)
    index.flat[cells] = np.arange(cells.size)
    ci, cj = np.unravel_index(cells, fluid.shape)
    diag = np.zeros(cells.size)
    rows, cols, vals = [], [], []
    for di, dj, h in ((1, 0, hx), (-1, 0, hx), (0, 1, hy), (0, -1, hy)):
        neighbor = lookup(index, ci + di, cj + dj, (False, False), -1)
        inside = neighbor >= 0
        diag += np.where(inside, 1.0, 2.0) / h**2
        rows.append(np.arange(cells.size)[inside])
        cols.append(neighbor[inside])
        vals.append(np.full(int(inside.sum()), -1.0 / h**2))
    rows.append(np.arange(cells.size))
    cols.append(np.arange(cells.size))
    vals.append(diag)
    return sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(cells.size, cells.size),
    ).tocsr()


def poincare_constant(
    dom: DoublePeriodicDomain | Mask,
    block: int = 8,
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: int = 0,
) -> float:
    """``1 / sqrt(lambda_min)`` of the Dirichlet Laplacian on the fluid region.

    The smallest eigenvalue is found by block inverse iteration with a
    Rayleigh-Ritz step.

    Raises:
        NonConvergence: If the eigenvalue does not settle to ``tol`` relative.
    """
    logger = logging.getLogger(__name__)
    mask = dom if isinstance(dom, Mask) else build_domain_mask(dom)
    A = dirichlet_laplacian(mask)
    n = A.shape[0]
    k = min(block, n)
    lu = spla.splu(A.tocsc())
    rng = np.random.default_rng(seed)
    basis, _ = linalg.qr(rng.standard_normal((n, k)), mode="economic")
    previous = math.inf
    for iteration in range(1, max_iter + 1):
        basis, _ = linalg.qr(lu.solve(basis), mode="economic")
        ritz, vectors = linalg.eigh(basis.T @ (A @ basis))
        basis = basis @ vectors
        smallest = float(ritz[0])
        if abs(smallest - previous) <= tol * smallest:
            logger.debug("Smallest Dirichlet eigenvalue %.8g after %d iterations", smallest, iteration)
            return 1.0 / math.sqrt(smallest)
        previous = smallest
    raise NonConvergence("inverse iteration for the Poincare constant did not converge", max_iter, previous)


def rigid_zones(
    sol: FlowSolution,
    g: float | None = None,
    mu: float | None = None,
    tol: float = RIGID_MARGIN,
    cfg: SolverConfig | None = None,
) -> Tuple[np.ndarray, RigidZoneReport]:
    """Cells where the solver multiplier stays below ``g eps delta (1 - tol)``, with a consistency report.

    The multiplier ``m`` of the splitting plays the role of the deviatoric
    stress on the quadrant samples. The report checks the threshold law
    against it:

    * where the auxiliary gradient ``w`` is nonzero,
      ``m = g_eff w / |w| + mu_eff w``;
    * where ``w`` vanishes, ``|m| <= g_eff``;
    * on quadrants with ``|m| < g_eff (1 - tol)`` the velocity gradient vanishes,
      up to ``sqrt(tol_aux)`` relative to the whole gradient.

    A cell is rigid when all four of its quadrants are.

    Raises:
        MissingMultiplier: If the solution carries no multiplier for its quadrants.
    """
    cfg = cfg or SolverConfig()
    g = sol.g if g is None else g
    mu = sol.mu if mu is None else mu
    g_eff = g * sol.eps_delta
    mu_eff = 2.0 * mu * sol.eps_delta**2
    state = sol.state
    ops = state.ops
    if state.m is None or np.size(state.m) != 4 * ops.n_quadrants:
        raise MissingMultiplier("the solution carries no multiplier to check the threshold law against")
    gv = ops.grad(state.velocity)
    w = np.asarray(state.w, dtype=float).reshape(-1, 4)
    m = np.asarray(state.m, dtype=float).reshape(-1, 4)
    w_norm = np.linalg.norm(w, axis=1)
    m_norm = np.linalg.norm(m, axis=1)
    m_scale = max(float(m_norm.max(initial=0.0)), g_eff)

    flowing = w_norm > 0
    direction = w[flowing] / w_norm[flowing, None]
    predicted = g_eff * direction + mu_eff * w[flowing]
    misfit = float(np.linalg.norm(m[flowing] - predicted, axis=1).max(initial=0.0))
    excess = float(np.maximum(m_norm[~flowing] - g_eff, 0.0).max(initial=0.0))
    residual = max(misfit, excess) / m_scale if m_scale > 0 else 0.0

    rigid_q = m_norm < g_eff * (1.0 - tol)
    strain_scale = ops.quad_norm(gv)
    rigid_strain = ops.quad_norm(gv[rigid_q]) / strain_scale if strain_scale > 0 else 0.0

    rigid = np.zeros(sol.mask.shape, dtype=bool)
    rigid.flat[np.flatnonzero(ops.fluid)] = rigid_q.reshape(-1, 4).all(axis=1)
    fluid_count = int(np.count_nonzero(ops.fluid))
    report = RigidZoneReport(
        rigid_fraction=float(rigid.sum()) / max(fluid_count, 1),
        rigid_strain=rigid_strain,
        strain_tolerance=math.sqrt(cfg.tol_aux),
        constitutive_residual=residual,
    )
    return rigid, report


def unit_square_mask(n: int) -> Mask:
    """Obstacle-free ``n x n`` mask of the unit square."""
    return Mask(np.ones((n, n), dtype=bool), (1.0 / n, 1.0 / n))
