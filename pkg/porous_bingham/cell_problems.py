"""Coupled cell problems on ``Y* x Z*`` and the effective Darcy law.

The cell velocity ``chi(y, z)`` is represented at the open faces of a periodic
``Y*`` grid (the ``y`` quadrature points, all with weight ``omega``); at each
of them ``chi`` is a divergence-free velocity on the periodic ``Z*`` grid that
vanishes on ``Z_s``. The ``Z``-average ``F_e = int_{Z*} chi_e dz`` must be
``y``-divergence free with no flux through ``Y_s``; the multiplier ``q(y)``
of that constraint is a cell-centered scalar on ``Y*`` and enters each
``Z``-problem as the local forcing ``lambda - grad_y q``.

The effective law is ``K(lambda) = mean_e F_e / |Z*|``, the discrete form of
``(1/(|Y*||Z*|)) int chi``. Both the linear and the nonlinear problems use
the viscosity ``2 mu`` so that ``K(lambda) = K lambda`` when ``g = 0``.

Example:
    >>> from porous_bingham.geometry import default_geometry
    >>> chi, K = solve_linear_cell(default_geometry(), mu=1.0, resolution=(4, 8))
    >>> bool(K[0, 0] > 0)
    True
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from functools import lru_cache
import json
import logging
import math
from pathlib import Path
import threading
from typing import Callable
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

# Import third-party modules
import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

# Import local modules
from porous_bingham.__version__ import __version__
from porous_bingham.exceptions import DisconnectedFluid
from porous_bingham.exceptions import GeometryError
from porous_bingham.exceptions import IOFailure
from porous_bingham.exceptions import NegativeYield
from porous_bingham.exceptions import NoBracket
from porous_bingham.exceptions import NonConvergence
from porous_bingham.exceptions import StrategyDisagreement
from porous_bingham.fields import FaceGradient
from porous_bingham.fields import VectorField
from porous_bingham.fields import face_gradient_matrix
from porous_bingham.geometry import CellGeometry
from porous_bingham.geometry import rasterize
from porous_bingham.models import CellConfig
from porous_bingham.models import SolverConfig
from porous_bingham.saddle_solver import FlowOperators
from porous_bingham.saddle_solver import shrink


LAW_FORMAT_VERSION = 1
Key = Tuple[int, int]

_ZERO_KEY: Key = (-(2**31), 0)
_MAGNITUDE_STEP = math.log1p(1e-3)


def _resolution(resolution: int | Sequence[int] | None, cell: CellConfig | None) -> Tuple[int, int]:
    if resolution is None:
        cell = cell or CellConfig()
        return (cell.resolution_y, cell.resolution_z)
    if isinstance(resolution, int):
        return (resolution, resolution)
    ry, rz = resolution
    return (int(ry), int(rz))


class _BorderedSolver:
    """LU of a symmetric operator with constants in its kernel, solved with mean-zero output."""

    def __init__(self, matrix: sparse.spmatrix) -> None:
        n = matrix.shape[0]
        ones = sparse.csr_matrix(np.ones((n, 1)))
        bordered = sparse.bmat([[matrix, ones], [ones.T, None]], format="csc")
        self.n = n
        self._lu = spla.splu(bordered)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        pad = np.zeros((1,) + rhs.shape[1:])
        return self._lu.solve(np.concatenate([rhs, pad]))[: self.n]


@dataclass
class _Constrained:
    """Solver of the Z-Stokes problems at viscosity ``nu`` coupled by the Y constraint."""

    nu: float
    response: np.ndarray
    pressure_response: np.ndarray
    z_permeability: np.ndarray
    y_solver: _BorderedSolver


class CellDiscretization:
    """Grids and operators of the coupled cell problems.

    Attributes:
        geometry: Cell geometry
        y_mask: Periodic ``Y*`` mask
        z_mask: Periodic ``Z*`` mask
        y_grad: Full face gradient on ``Y*``; its open faces are the y quadrature points
        z_ops: Flow operators of ``Z*``
        integration: ``S`` with ``S.T @ v`` the integral of ``v`` over ``Z*``
        normalization: Volume factors of the effective law
    """

    def __init__(self, geometry: CellGeometry, resolution_y: int, resolution_z: int) -> None:
        if geometry.dim != 2:
            raise GeometryError("cell problems are two-dimensional")
        if not geometry.z_cell.obstacles:
            raise GeometryError("the Z cell needs an obstacle: without a no-slip surface the cell problem is ill posed")
        if resolution_z < 4:
            raise GeometryError(f"resolution_z must be at least 4, got {resolution_z}")
        self.geometry = geometry
        self.resolution = (resolution_y, resolution_z)
        self.y_mask = rasterize(geometry.y_cell, (resolution_y, resolution_y))
        self.z_mask = rasterize(geometry.z_cell, (resolution_z, resolution_z))
        for name, mask in (("Y*", self.y_mask), ("Z*", self.z_mask)):
            if not mask.is_connected((True, True)):
                raise DisconnectedFluid(f"{name} has {mask.n_components((True, True))} periodic components")
        self.y_grad: FaceGradient = face_gradient_matrix(self.y_mask.values, self.y_mask.spacing, (True, True))
        self.z_ops = FlowOperators(self.z_mask.values, self.z_mask.spacing, (True, True))
        ops = self.z_ops
        self.integration = np.zeros((ops.n_dof, 2))
        self.integration[: ops.n_u, 0] = ops.area
        self.integration[ops.n_u :, 1] = ops.area
        y_star = geometry.y_cell.fluid_volume
        z_star = geometry.z_cell.fluid_volume
        self.normalization = {
            "y_measure": self.omega * self.n_faces,
            "y_fluid_volume": y_star,
            "z_fluid_volume": z_star,
            "filtration_factor": geometry.filtration_factor,
        }
        self._constrained: Dict[float, _Constrained] = {}
        self._lock = threading.Lock()

    @property
    def omega(self) -> float:
        return self.y_grad.weight

    @property
    def n_faces(self) -> int:
        return self.y_grad.n_faces

    def y_operator(self, permeability: np.ndarray) -> sparse.csr_matrix:
        """``omega G^T (I x K) G`` on ``Y*`` cells."""
        block = sparse.kron(sparse.identity(self.n_faces), sparse.csr_matrix(permeability))
        G = self.y_grad.matrix
        return (self.omega * (G.T @ block @ G)).tocsr()

    def y_divergence(self, fluxes: np.ndarray) -> np.ndarray:
        """Weak y-divergence ``omega G^T vec(F)`` of face fluxes ``(n_faces, 2)``."""
        return self.omega * (self.y_grad.matrix.T @ np.asarray(fluxes).ravel())

    def y_gradient(self, q: np.ndarray) -> np.ndarray:
        return (self.y_grad.matrix @ q).reshape(self.n_faces, 2)

    def fluxes(self, chi: np.ndarray) -> np.ndarray:
        """Z-integrals of the columns of ``chi``, shape ``(n_faces, 2)``."""
        return (self.integration.T @ chi).T

    def constrained(self, nu: float, cfg: SolverConfig) -> _Constrained:
        key = float(nu)
        with self._lock:
            cached = self._constrained.get(key)
        if cached is not None:
            return cached
        response, pressure = self.z_ops.saddle(nu, cfg).solve(self.integration)
        permeability = self.integration.T @ response
        permeability = 0.5 * (permeability + permeability.T)
        built = _Constrained(nu, response, pressure, permeability, _BorderedSolver(self.y_operator(permeability)))
        with self._lock:
            self._constrained[key] = built
        return built

    def solve_constrained(
        self,
        nu: float,
        rhs: np.ndarray,
        cfg: SolverConfig,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Z-Stokes solves for the columns of ``rhs`` with the y constraint enforced.

        Returns:
            Velocity ``(n_dof, n_faces)``, Z pressure ``(n_p, n_faces)`` and ``q``.
        """
        data = self.constrained(nu, cfg)
        free, pressure = self.z_ops.saddle(nu, cfg).solve(rhs)
        q = data.y_solver.solve(self.y_divergence(self.fluxes(free)))
        gq = self.y_gradient(q)
        return free - data.response @ gq.T, pressure - data.pressure_response @ gq.T, q

    def uniform_load(self, lam: np.ndarray) -> np.ndarray:
        return np.repeat((self.integration @ lam)[:, None], self.n_faces, axis=1)

    def effective(self, chi: np.ndarray) -> np.ndarray:
        return self.fluxes(chi).mean(axis=0) / self.normalization["z_fluid_volume"]

    def quadrant_samples(self, chi: np.ndarray) -> np.ndarray:
        """Quadrant gradients of every column, shape ``(n_faces, n_quadrants, 4)``."""
        return (self.z_ops.G @ chi).T.reshape(self.n_faces, -1, 4)

    def sample_norm(self, samples: np.ndarray) -> float:
        return float(np.sqrt(self.omega * self.z_ops.quad_weight * np.sum(samples**2)))

    def max_divergence(self, chi: np.ndarray) -> float:
        div = self.z_ops.D @ chi
        return float(np.abs(div).max()) if div.size else 0.0

    def y_constraint_residual(self, chi: np.ndarray) -> float:
        """Max-norm of the weak y-divergence relative to the flux scale."""
        fluxes = self.fluxes(chi)
        scale = self.omega * float(np.abs(fluxes).max(initial=0.0)) / min(self.y_mask.spacing)
        residual = float(np.abs(self.y_divergence(fluxes)).max(initial=0.0))
        return residual / scale if scale > 0 else residual

    def chi_field(self, chi: np.ndarray, face: int) -> VectorField:
        return self.z_ops.scatter(chi[:, face])


@lru_cache(maxsize=16)
def discretize_cell(geometry: CellGeometry, resolution_y: int, resolution_z: int) -> CellDiscretization:
    """Cached :class:`CellDiscretization`."""
    return CellDiscretization(geometry, resolution_y, resolution_z)


class _CellForms:
    """``a``, ``j`` and the load summed over the y quadrature points."""

    def __init__(self, disc: CellDiscretization, lam: np.ndarray, g: float, nu: float) -> None:
        self.disc = disc
        self.lam = lam
        self.g = g
        self.nu = nu

    def a(self, x: np.ndarray, y: np.ndarray) -> float:
        return self.disc.omega * self.nu * float(np.sum(x * (self.disc.z_ops.L @ y)))

    def j(self, x: np.ndarray) -> float:
        samples = self.disc.quadrant_samples(x)
        return self.disc.omega * self.g * self.disc.z_ops.quad_weight * float(np.linalg.norm(samples, axis=-1).sum())

    def load(self, x: np.ndarray) -> float:
        return self.disc.omega * float(self.lam @ self.disc.fluxes(x).sum(axis=0))

    def residual(self, chi: np.ndarray, phi: np.ndarray) -> float:
        diff = phi - chi
        return self.load(diff) - self.a(chi, diff) - self.j(phi) + self.j(chi)

    def scale(self, x: np.ndarray) -> float:
        return self.a(x, x) + self.j(x) + abs(self.load(x))


@dataclass
class CellSolution:
    """Solution of one nonlinear cell problem.

    Attributes:
        chi: Z velocities, one column per y quadrature point
        pi: Z pressures (multiplier of the z-divergence), one column per point
        q: Multiplier of the y-divergence of the Z-average, per ``Y*`` cell
        lam: Forcing vector
        fluxes: Z-integrals of ``chi`` per y point
        K: Effective velocity ``K(lambda)``
        rigid: ``chi`` vanishes identically
    """

    chi: np.ndarray
    pi: np.ndarray
    q: np.ndarray
    lam: np.ndarray
    fluxes: np.ndarray
    K: np.ndarray
    strategy: str
    iterations: int
    rigid: bool
    vi_residual: float
    div_z: float
    div_y: float
    discretization: CellDiscretization = field(repr=False)
    history: List[float] = field(default_factory=list, repr=False)

    def chi_field(self, face: int) -> VectorField:
        return self.discretization.chi_field(self.chi, face)


@dataclass
class _Iterate:
    chi: np.ndarray
    pressure: np.ndarray
    q: np.ndarray
    w: np.ndarray
    m: np.ndarray
    iterations: int
    rigid: bool
    vi: float
    history: List[float]


VelocitySolve = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


def _alg2(
    disc: CellDiscretization,
    solve_v: VelocitySolve,
    load: np.ndarray,
    g: float,
    nu: float,
    r: float,
    cfg: SolverConfig,
    w: np.ndarray,
    m: np.ndarray,
    probe_check: Callable[[np.ndarray, float], float] | None,
) -> _Iterate:
    """Batched augmented-Lagrangian iterations over all y points."""
    logger = logging.getLogger(__name__)
    ops = disc.z_ops
    n_faces = disc.n_faces
    stokes, pressure, q = solve_v(load)
    reference = disc.sample_norm(disc.quadrant_samples(stokes))
    if reference == 0:
        zeros = np.zeros((n_faces, ops.n_quadrants, 4))
        return _Iterate(np.zeros_like(stokes), pressure, q, zeros, zeros.copy(), 0, True, 0.0, [])
    history: List[float] = []
    for iteration in range(1, cfg.max_outer + 1):
        correction = ops.quad_weight * (ops.G.T @ (m - r * w).reshape(n_faces, -1).T)
        chi, pressure, q = solve_v(load - correction)
        samples = disc.quadrant_samples(chi)
        w_new = shrink(m + r * samples, g, nu + r)
        m = m + r * (samples - w_new)
        primal = disc.sample_norm(samples - w_new) / reference
        dual = disc.sample_norm(w_new - w) / reference
        w = w_new
        history.append(max(primal, dual))
        if iteration % cfg.check_every == 0:
            logger.debug("cell iteration %d: primal %.3e dual %.3e", iteration, primal, dual)
        if max(primal, dual) > cfg.tol_aux or disc.max_divergence(chi) > cfg.tol_div:
            continue
        rigid = not np.any(w) or disc.sample_norm(samples) <= cfg.rigid_tol * reference
        candidate = np.zeros_like(chi) if rigid else chi
        vi = probe_check(candidate, reference) if probe_check is not None else 0.0
        if vi <= cfg.tol_vi:
            if rigid:
                w = np.zeros_like(w)
            return _Iterate(candidate, pressure, q, w, m, iteration, rigid, vi, history)
    raise NonConvergence(
        f"cell problem did not converge in {cfg.max_outer} iterations",
        cfg.max_outer,
        history[-1] if history else float("nan"),
        history,
    )


def _random_admissible(disc: CellDiscretization, count: int, seed: int, cfg: SolverConfig) -> List[np.ndarray]:
    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(count):
        raw = rng.standard_normal((disc.z_ops.n_dof, disc.n_faces))
        chi, _, _ = disc.solve_constrained(1.0, disc.z_ops.L @ raw, cfg)
        probes.append(chi)
    return probes


def _probe_checker(
    disc: CellDiscretization,
    lam: np.ndarray,
    g: float,
    nu: float,
    cfg: SolverConfig,
) -> Callable[[np.ndarray, float], float]:
    forms = _CellForms(disc, lam, g, nu)
    linear = [disc.solve_constrained(nu, disc.uniform_load(e), cfg)[0] for e in np.eye(2)]
    random = _random_admissible(disc, cfg.n_probes, cfg.seed, cfg)

    def check(chi: np.ndarray, reference: float) -> float:
        size = 0.1 * max(disc.sample_norm(disc.quadrant_samples(chi)), reference)
        scaled = []
        for z in random:
            norm = disc.sample_norm(disc.quadrant_samples(z))
            scaled.append(z * (size / norm) if norm > 0 else z)
        probes = [np.zeros_like(chi), 2.0 * chi] + linear + [chi + z for z in scaled]
        scale = max([forms.scale(chi)] + [forms.scale(z) for z in scaled] + [1e-300])
        return max(forms.residual(chi, phi) for phi in probes) / scale

    return check


def solve_linear_cell(
    geom: CellGeometry,
    mu: float,
    resolution: int | Sequence[int] | None = None,
    cfg: SolverConfig | None = None,
) -> Tuple[List[np.ndarray], np.ndarray]:
    """Solve the two linear cell problems and assemble the permeability.

    Args:
        geom: Cell geometry
        mu: Viscosity (the cell problems use ``2 mu``)
        resolution: Grid cells per Y edge and per Z edge
        cfg: Solver settings

    Returns:
        The cell velocities ``chi_i`` (``(n_dof, n_faces)`` each) and ``K``
        with ``K[:, i] = (1/(|Y*||Z*|)) int chi_i``.

    Raises:
        GeometryError: If the Z cell has no obstacle.
        DisconnectedFluid: If ``Y*`` or ``Z*`` is not connected.
    """
    logger = logging.getLogger(__name__)
    if mu <= 0:
        raise ValueError(f"viscosity must be positive, got {mu}")
    cfg = cfg or SolverConfig()
    ry, rz = _resolution(resolution, None)
    disc = discretize_cell(geom, ry, rz)
    chis = []
    columns = []
    for e in np.eye(2):
        chi, _, _ = disc.solve_constrained(2.0 * mu, disc.uniform_load(e), cfg)
        chis.append(chi)
        columns.append(disc.effective(chi))
    K = np.stack(columns, axis=1)
    logger.info("Linear permeability %s at resolution %s", K.tolist(), (ry, rz))
    return chis, K


def solve_nonlinear_cell(
    geom: CellGeometry,
    lam: Sequence[float],
    g: float,
    mu: float,
    strategy: str = "product",
    resolution: int | Sequence[int] | None = None,
    cfg: SolverConfig | None = None,
    cell: CellConfig | None = None,
) -> CellSolution:
    """Solve the cell variational inequality with forcing ``lam``.

    ``product`` runs augmented-Lagrangian iterations on the whole product grid
    with the y constraint enforced inside every velocity step. ``two_level``
    solves independent Z-Bingham problems with forcing ``lam - grad_y q`` and
    updates ``q`` until their fluxes are y-divergence free.

    Raises:
        NegativeYield: If ``g < 0``.
        NonConvergence: If the iterations stall.
    """
    logger = logging.getLogger(__name__)
    if g < 0:
        raise NegativeYield(f"yield stress must be nonnegative, got {g}")
    if mu <= 0:
        raise ValueError(f"viscosity must be positive, got {mu}")
    cfg = cfg or SolverConfig()
    cell = cell or CellConfig()
    ry, rz = _resolution(resolution, cell)
    disc = discretize_cell(geom, ry, rz)
    lam = np.asarray(lam, dtype=float)
    nu = 2.0 * mu
    ops = disc.z_ops
    zeros = np.zeros((disc.n_faces, ops.n_quadrants, 4))

    if g == 0:
        chi, pressure, q = disc.solve_constrained(nu, disc.uniform_load(lam), cfg)
        result = _Iterate(chi, pressure, q, zeros, zeros.copy(), 0, not np.any(chi), 0.0, [])
    elif strategy == "product":
        r = cfg.augmentation or nu
        result = _alg2(
            disc,
            lambda rhs: disc.solve_constrained(r, rhs, cfg),
            disc.uniform_load(lam),
            g,
            nu,
            r,
            cfg,
            zeros,
            zeros.copy(),
            _probe_checker(disc, lam, g, nu, cfg),
        )
    elif strategy == "two_level":
        result = _two_level(disc, lam, g, nu, cfg, cell)
    else:
        raise ValueError(f"unknown cell strategy {strategy!r}")

    K = disc.effective(result.chi)
    logger.debug("K(%s) = %s with %s in %d iterations", lam.tolist(), K.tolist(), strategy, result.iterations)
    return CellSolution(
        chi=result.chi,
        pi=result.pressure,
        q=result.q,
        lam=lam,
        fluxes=disc.fluxes(result.chi),
        K=K,
        strategy=strategy,
        iterations=result.iterations,
        rigid=result.rigid,
        vi_residual=max(result.vi, 0.0),
        div_z=disc.max_divergence(result.chi),
        div_y=disc.y_constraint_residual(result.chi),
        discretization=disc,
        history=result.history,
    )


def _two_level(
    disc: CellDiscretization,
    lam: np.ndarray,
    g: float,
    nu: float,
    cfg: SolverConfig,
    cell: CellConfig,
) -> _Iterate:
    logger = logging.getLogger(__name__)
    r = cfg.augmentation or nu
    z_system = disc.z_ops.saddle(r, cfg)
    linear = disc.constrained(nu, cfg)
    n_y = disc.y_grad.cell_index.max() + 1
    zeros = np.zeros((disc.n_faces, disc.z_ops.n_quadrants, 4))

    def free_solve(rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        chi, pressure = z_system.solve(rhs)
        return chi, pressure, np.zeros(n_y)

    def inner(q: np.ndarray, start: _Iterate | None) -> Tuple[_Iterate, np.ndarray]:
        local = lam[None, :] - disc.y_gradient(q)
        load = disc.integration @ local.T
        w0 = start.w if start is not None else zeros
        m0 = start.m if start is not None else zeros
        result = _alg2(disc, free_solve, load, g, nu, r, cfg, w0.copy(), m0.copy(), None)
        return result, disc.y_divergence(disc.fluxes(result.chi))

    q = np.zeros(n_y)
    current, residual = inner(q, None)
    norm = float(np.linalg.norm(residual))
    initial = norm
    theta = 1.0
    iterations = current.iterations
    history = [norm]
    for outer in range(1, cell.outer_max_iter + 1):
        if norm <= cell.outer_tol * initial or norm == 0:
            break
        step = linear.y_solver.solve(residual)
        trial_q = q + theta * step
        trial, trial_residual = inner(trial_q, current)
        iterations += trial.iterations
        trial_norm = float(np.linalg.norm(trial_residual))
        if trial_norm < norm:
            q, current, residual, norm = trial_q, trial, trial_residual, trial_norm
            theta = min(1.0, 2.0 * theta)
        else:
            theta *= 0.5
            if theta < 1e-8:
                raise NonConvergence("two-level outer iteration stalled", outer, norm / initial, history)
        history.append(norm)
        logger.debug("two-level outer %d: residual %.3e (theta %.3g)", outer, norm / initial, theta)
    else:
        raise NonConvergence(
            f"two-level outer iteration did not converge in {cell.outer_max_iter} steps",
            cell.outer_max_iter,
            norm / initial if initial else 0.0,
            history,
        )
    checker = _probe_checker(disc, lam, g, nu, cfg)
    reference = disc.sample_norm(disc.quadrant_samples(disc.solve_constrained(r, disc.uniform_load(lam), cfg)[0]))
    vi = checker(current.chi, reference) if reference > 0 else 0.0
    if vi > cfg.tol_vi:
        logger.warning("two-level cell solution has probe residual %.3e above %.1e", vi, cfg.tol_vi)
    rigid = not np.any(current.chi)
    return _Iterate(current.chi, current.pressure, q, current.w, current.m, iterations, rigid, vi, history)


def cross_check_strategies(
    geom: CellGeometry,
    lambdas: Iterable[Sequence[float]],
    g: float,
    mu: float,
    resolution: int | Sequence[int] | None = None,
    cfg: SolverConfig | None = None,
    cell: CellConfig | None = None,
    tolerance: float = 0.05,
) -> float:
    """Largest relative gap between the ``product`` and ``two_level`` effective velocities.

    Raises:
        StrategyDisagreement: If a gap exceeds ``tolerance``.
    """
    worst = 0.0
    for lam in lambdas:
        product = solve_nonlinear_cell(geom, lam, g, mu, "product", resolution, cfg, cell).K
        two_level = solve_nonlinear_cell(geom, lam, g, mu, "two_level", resolution, cfg, cell).K
        scale = max(float(np.linalg.norm(product)), float(np.linalg.norm(two_level)))
        gap = float(np.linalg.norm(product - two_level)) / scale if scale > 0 else 0.0
        worst = max(worst, gap)
        if gap > tolerance:
            raise StrategyDisagreement(
                f"strategies disagree at lambda={list(lam)}: product {product.tolist()}, "
                f"two_level {two_level.tolist()} (gap {gap:.3e})",
            )
    return worst


def quantize(lam: Sequence[float]) -> Key:
    """Memo key: magnitude on a 1e-3 relative log grid and direction in whole degrees."""
    lam = np.asarray(lam, dtype=float)
    magnitude = float(np.linalg.norm(lam))
    if magnitude == 0:
        return _ZERO_KEY
    angle = math.degrees(math.atan2(lam[1], lam[0]))
    return (int(round(math.log(magnitude) / _MAGNITUDE_STEP)), int(round(angle)) % 360)


@dataclass
class EffectiveLaw:
    """Linear permeability and memoized nonlinear map ``lambda -> K(lambda)``.

    Attributes:
        geometry: Cell geometry, ``None`` for laws loaded from file or built from a matrix
        g: Yield stress
        mu: Viscosity
        linear_K: Permeability matrix
        table: Memo table, quantized key to ``(lambda, K(lambda))``
        yield_thresholds: Threshold per direction label
        normalization: Volume factors used for ``K``
    """

    geometry: Optional[CellGeometry]
    g: float
    mu: float
    cell: CellConfig = field(default_factory=CellConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    linear_K: Optional[np.ndarray] = None
    table: Dict[Key, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    yield_thresholds: Dict[str, float] = field(default_factory=dict)
    normalization: Dict[str, float] = field(default_factory=dict)
    geometry_hash: str = ""
    resolution: Tuple[int, int] = (0, 0)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.geometry is not None and not self.geometry_hash:
            self.geometry_hash = self.geometry.geometry_hash
        if self.resolution == (0, 0):
            self.resolution = (self.cell.resolution_y, self.cell.resolution_z)

    @property
    def is_linear(self) -> bool:
        return self.g == 0 or (not self.table and self.geometry is None)

    def lookup(self, lam: Sequence[float]) -> Optional[np.ndarray]:
        with self._lock:
            entry = self.table.get(quantize(lam))
        return None if entry is None else entry[1].copy()

    def store(self, lam: Sequence[float], value: np.ndarray) -> None:
        with self._lock:
            self.table[quantize(lam)] = (np.asarray(lam, dtype=float).copy(), np.asarray(value, dtype=float).copy())

    def samples(self) -> Tuple[np.ndarray, np.ndarray]:
        """Stored ``lambda`` and ``K(lambda)`` rows sorted by ``lambda``."""
        with self._lock:
            entries = list(self.table.values())
        if not entries:
            return np.zeros((0, 2)), np.zeros((0, 2))
        entries.sort(key=lambda item: (item[0][0], item[0][1]))
        return np.stack([e[0] for e in entries]), np.stack([e[1] for e in entries])


def build_law(
    geom: CellGeometry,
    g: float,
    mu: float,
    cell: CellConfig | None = None,
    solver: SolverConfig | None = None,
) -> EffectiveLaw:
    """Law with the linear permeability computed and an empty memo table."""
    cell = cell or CellConfig()
    solver = solver or SolverConfig()
    _, K = solve_linear_cell(geom, mu, (cell.resolution_y, cell.resolution_z), solver)
    disc = discretize_cell(geom, cell.resolution_y, cell.resolution_z)
    return EffectiveLaw(
        geometry=geom,
        g=g,
        mu=mu,
        cell=cell,
        solver=solver,
        linear_K=K,
        normalization=dict(disc.normalization),
    )


def linear_law(K: np.ndarray, mu: float = 1.0) -> EffectiveLaw:
    """Wrap a permeability matrix as an effective law."""
    return EffectiveLaw(geometry=None, g=0.0, mu=mu, linear_K=np.asarray(K, dtype=float))


def eval_K(law: EffectiveLaw, lam: Sequence[float]) -> np.ndarray:
    """``K(lambda)``, from the memo table when ``lambda`` quantizes to a stored key.

    Raises:
        ValueError: If the value is not stored and the law has no geometry to solve with.
    """
    lam = np.asarray(lam, dtype=float)
    if not np.any(lam):
        return np.zeros(2)
    cached = law.lookup(lam)
    if cached is not None:
        return cached
    if law.g == 0 and law.linear_K is not None:
        value = law.linear_K @ lam
    elif law.geometry is None:
        raise ValueError(f"K({lam.tolist()}) is not tabulated and the law has no geometry to solve with")
    else:
        solution = solve_nonlinear_cell(
            law.geometry,
            lam,
            law.g,
            law.mu,
            law.cell.strategy,
            law.resolution,
            law.solver,
            law.cell,
        )
        value = solution.K
    if not law.normalization and law.geometry is not None:
        law.normalization = dict(discretize_cell(law.geometry, *law.resolution).normalization)
    law.store(lam, value)
    return value.copy()


def eval_K_many(
    law: EffectiveLaw,
    lambdas: Iterable[Sequence[float]],
    max_workers: int | None = None,
) -> List[np.ndarray]:
    """Evaluate several ``lambda`` concurrently; results keep the input order."""
    points = [np.asarray(lam, dtype=float) for lam in lambdas]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(lambda lam: eval_K(law, lam), points))


def _direction_label(direction: np.ndarray) -> str:
    return f"{direction[0]:.6g},{direction[1]:.6g}"


def estimate_yield_threshold(
    geom: CellGeometry,
    direction: Sequence[float],
    g: float,
    mu: float,
    cell: CellConfig | None = None,
    solver: SolverConfig | None = None,
    law: EffectiveLaw | None = None,
    max_steps: int = 30,
) -> float:
    """Bisect for the smallest ``t`` at which ``K(t * direction)`` stops being zero.

    Returns:
        float: Midpoint of a bracket whose width is at most 1% of its upper end

    Raises:
        NoBracket: If ``g == 0`` (the threshold is zero) or no rigid/flowing
            pair is found within ``max_steps`` doublings.
    """
    logger = logging.getLogger(__name__)
    direction = np.asarray(direction, dtype=float)
    if not math.isclose(float(np.linalg.norm(direction)), 1.0, rel_tol=1e-9):
        raise ValueError(f"direction must be a unit vector, got {direction.tolist()}")
    if g < 0:
        raise NegativeYield(f"yield stress must be nonnegative, got {g}")
    if g == 0:
        raise NoBracket("a fluid without yield stress flows under any forcing", 0.0, 0.0)
    cell = cell or CellConfig()
    solver = solver or SolverConfig()

    def flowing(t: float) -> bool:
        solution = solve_nonlinear_cell(geom, t * direction, g, mu, cell.strategy, None, solver, cell)
        if law is not None:
            law.store(t * direction, solution.K)
        return not solution.rigid

    t = g / min(geom.z_cell.lengths)
    lower, upper = 0.0, math.inf
    if flowing(t):
        upper = t
        for _ in range(max_steps):
            t *= 0.5
            if not flowing(t):
                lower = t
                break
            upper = t
    else:
        lower = t
        for _ in range(max_steps):
            t *= 2.0
            if flowing(t):
                upper = t
                break
            lower = t
    if not (lower > 0 and math.isfinite(upper)):
        raise NoBracket(f"no rigid/flowing transition found along {direction.tolist()}", lower, upper)
    while upper - lower > 0.01 * upper:
        middle = 0.5 * (lower + upper)
        if flowing(middle):
            upper = middle
        else:
            lower = middle
    threshold = 0.5 * (lower + upper)
    logger.info("Yield threshold along %s: %.6g (bracket [%.6g, %.6g])", direction.tolist(), threshold, lower, upper)
    if law is not None:
        law.yield_thresholds[_direction_label(direction)] = threshold
    return threshold


def table_axis(size: int, extent: float, threshold: float) -> np.ndarray:
    """Symmetric axis on ``[-extent, extent]`` with doubled density for ``|x|`` in ``[0.8, 1.5] threshold``."""
    base = np.linspace(-extent, extent, size)
    extra: List[float] = []
    if threshold > 0:
        lo, hi = 0.8 * threshold, min(1.5 * threshold, extent)
        if hi > lo:
            band = np.linspace(lo, hi, max(3, size // 2 + 1))
            extra = list(band) + list(-band)
    axis = np.unique(np.round(np.concatenate([base, np.asarray(extra, dtype=float)]), 15))
    return axis


def tabulate_law(
    law: EffectiveLaw,
    size: int | None = None,
    extent: float | None = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Fill the memo table on a Cartesian grid refined near the yield surface.

    Returns:
        The two axes of the grid.
    """
    logger = logging.getLogger(__name__)
    size = size or law.cell.table_size
    threshold = 0.0
    if law.g > 0 and law.geometry is not None:
        for direction in ((1.0, 0.0), (0.0, 1.0)):
            label = _direction_label(np.asarray(direction))
            if label not in law.yield_thresholds:
                try:
                    estimate_yield_threshold(law.geometry, direction, law.g, law.mu, law.cell, law.solver, law)
                except NoBracket as err:
                    logger.warning("No yield threshold along %s: %s", direction, err)
                    law.yield_thresholds[label] = err.lower
        threshold = max(law.yield_thresholds.values(), default=0.0)
    if extent is None:
        extent = law.cell.table_extent or (3.0 * threshold if threshold > 0 else 1.0)
    axes = (table_axis(size, extent, threshold), table_axis(size, extent, threshold))
    points = [(a, b) for a in axes[0] for b in axes[1]]
    eval_K_many(law, points)
    logger.info("Tabulated %d values of K on [-%g, %g]^2", len(points), extent, extent)
    return axes


def monotonicity_defect(law: EffectiveLaw) -> float:
    """``min (K(l1) - K(l2)).(l1 - l2)`` over stored pairs; nonnegative for a monotone law."""
    lams, values = law.samples()
    if len(lams) < 2:
        return 0.0
    d_lam = lams[:, None, :] - lams[None, :, :]
    d_val = values[:, None, :] - values[None, :, :]
    return float(np.min(np.sum(d_lam * d_val, axis=-1)))


def save_law(law: EffectiveLaw, path: str | Path) -> Path:
    """Write the law as a versioned text file.

    Raises:
        IOFailure: If the file cannot be written.
    """
    path = Path(path)
    header = {
        "format_version": LAW_FORMAT_VERSION,
        "package_version": __version__,
        "geometry_hash": law.geometry_hash,
        "g": law.g,
        "mu": law.mu,
        "resolution": list(law.resolution),
        "normalization": law.normalization,
        "yield_thresholds": law.yield_thresholds,
    }
    lines = ["# porous-bingham effective law", json.dumps(header, sort_keys=True)]
    if law.linear_K is None:
        lines.append("linear_K none")
    else:
        lines.append("linear_K " + ",".join("{:.17g}".format(v) for v in np.ravel(law.linear_K)))
    lams, values = law.samples()
    for lam, value in zip(lams, values):
        lines.append(",".join("{:.17g}".format(v) for v in (*lam, *value)))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise IOFailure(f"cannot write effective law to {path}: {e}") from e
    return path


def load_law(path: str | Path) -> EffectiveLaw:
    """Read a file written by :func:`save_law`.

    Raises:
        IOFailure: If the file cannot be read or is malformed.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IOFailure(f"cannot read effective law {path}: {e}") from e
    try:
        header = json.loads(lines[1])
        if header.get("format_version") != LAW_FORMAT_VERSION:
            raise IOFailure(f"unsupported effective-law format {header.get('format_version')!r} in {path}")
        linear = lines[2].split(" ", 1)[1]
        linear_K = None if linear == "none" else np.array([float(v) for v in linear.split(",")]).reshape(2, 2)
        law = EffectiveLaw(
            geometry=None,
            g=float(header["g"]),
            mu=float(header["mu"]),
            linear_K=linear_K,
            yield_thresholds={k: float(v) for k, v in header.get("yield_thresholds", {}).items()},
            normalization={k: float(v) for k, v in header.get("normalization", {}).items()},
            geometry_hash=header.get("geometry_hash", ""),
            resolution=tuple(header.get("resolution", (0, 0))),
        )
        for line in lines[3:]:
            if not line.strip():
                continue
            a, b, k1, k2 = (float(v) for v in line.split(","))
            law.store((a, b), np.array([k1, k2]))
    except (IndexError, KeyError, ValueError) as e:
        raise IOFailure(f"malformed effective law {path}: {e}") from e
    return law
