"""Homogenized Darcy problems on ``Omega``.

Cell-centered finite volumes on a regular grid of ``Omega``. The pressure
gradient is evaluated at every interior face (normal two-point difference plus
the averaged tangential difference) so that a full tensor ``K`` or the
nonlinear map ``K(lambda)`` can be applied face by face. Boundary faces carry
no flux, and the discrete divergence of the face fluxes is what the solvers
drive to zero.

Example:
    >>> import numpy as np
    >>> from porous_bingham.geometry import Box
    >>> omega = Box((0.0, 0.0), (1.0, 1.0))
    >>> sol = solve_linear_darcy(np.eye(2), lambda x, y: (1.0 + 0 * x, 0 * y), omega, 8)
    >>> bool(np.abs(sol.u0.ux).max() < 1e-10)
    True
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from dataclasses import dataclass
from dataclasses import field
import logging
from typing import Callable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

# Import third-party modules
import numpy as np
from scipy import sparse
from scipy.interpolate import LinearNDInterpolator
from scipy.interpolate import NearestNDInterpolator
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import linalg as spla

# Import local modules
from porous_bingham.cell_problems import EffectiveLaw
from porous_bingham.cell_problems import eval_K
from porous_bingham.cell_problems import eval_K_many
from porous_bingham.cell_problems import tabulate_law
from porous_bingham.exceptions import NonConvergence
from porous_bingham.exceptions import ShapeMismatch
from porous_bingham.exceptions import SingularK
from porous_bingham.fields import ScalarField
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import VectorField
from porous_bingham.fields import center_values
from porous_bingham.fields import face_gradient_matrix
from porous_bingham.forcing import ForcingLike
from porous_bingham.geometry import Box
from porous_bingham.models import MacroConfig


SYMMETRY_TOL = 1e-6
MIN_DAMPING = 1e-4


def check_permeability(K: np.ndarray) -> np.ndarray:
    """Return ``K`` as a float array after checking it is symmetric positive definite.

    Accepts a single ``2 x 2`` matrix or one per cell (``nx x ny x 2 x 2``).

    Raises:
        SingularK: If ``K`` is not finite, not symmetric or not positive definite.
    """
    K = np.asarray(K, dtype=float)
    if K.shape[-2:] != (2, 2):
        raise SingularK(f"permeability must be made of 2x2 blocks, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise SingularK("permeability has non-finite entries")
    blocks = K.reshape(-1, 2, 2)
    norm = np.linalg.norm(blocks, axis=(1, 2))
    asym = np.linalg.norm(blocks - np.swapaxes(blocks, 1, 2), axis=(1, 2))
    if np.any(asym > SYMMETRY_TOL * np.maximum(norm, 1e-300)):
        raise SingularK(f"permeability is not symmetric (relative asymmetry {float((asym / norm).max()):.3e})")
    smallest = np.linalg.eigvalsh(0.5 * (blocks + np.swapaxes(blocks, 1, 2)))[:, 0]
    if np.any(smallest <= 0):
        raise SingularK(f"permeability is not positive definite (smallest eigenvalue {float(smallest.min()):.3e})")
    return K


class MacroDiscretization:
    """Finite-volume operators on a regular grid of ``Omega``.

    Attributes:
        grid: Non-periodic staggered grid of ``Omega``
        gradient: Full pressure gradient at interior faces, rows ``2e + c``
        divergence: Cell divergence of the normal face fluxes
        normal: Picks the normal component out of interleaved face vectors
    """

    def __init__(self, omega: Box, resolution: int | Sequence[int]) -> None:
        dims = (resolution, resolution) if isinstance(resolution, int) else tuple(int(n) for n in resolution)
        spacing = (omega.extents[0] / dims[0], omega.extents[1] / dims[1])
        self.omega = omega
        self.grid = StaggeredGrid(dims, spacing, (False, False), omega.corner)
        faces = face_gradient_matrix(np.ones(dims, dtype=bool), spacing, (False, False))
        self.faces = faces
        self.gradient = faces.matrix
        n_faces = faces.n_faces
        self.n_faces = n_faces
        self.n_cells = dims[0] * dims[1]
        e = np.arange(n_faces)
        self.normal = sparse.csr_matrix(
            (np.ones(n_faces), (e, 2 * e + faces.axis)),
            shape=(n_faces, 2 * n_faces),
        )
        fi, fj = faces.index[:, 0], faces.index[:, 1]
        di = (faces.axis == 0).astype(np.int64)
        dj = 1 - di
        lower = faces.cell_index[fi - di, fj - dj]
        upper = faces.cell_index[fi, fj]
        h = np.asarray(spacing)[faces.axis]
        self.divergence = sparse.coo_matrix(
            (np.concatenate([1.0 / h, -1.0 / h]), (np.concatenate([lower, upper]), np.concatenate([e, e]))),
            shape=(self.n_cells, n_faces),
        ).tocsr()
        self.lower = lower
        self.upper = upper
        x = self.grid.origin[0] + (fi + np.where(faces.axis == 0, 0.0, 0.5)) * spacing[0]
        y = self.grid.origin[1] + (fj + np.where(faces.axis == 1, 0.0, 0.5)) * spacing[1]
        self.face_points = (x, y)

    def face_forcing(self, f: ForcingLike) -> np.ndarray:
        """Both components of the forcing at every interior face, shape ``(n_faces, 2)``."""
        if isinstance(f, VectorField):
            if f.grid.dims != self.grid.dims:
                raise ShapeMismatch(f"forcing grid {f.grid.dims} does not match the macro grid {self.grid.dims}")
            centers = center_values(f).reshape(-1, 2)
            return 0.5 * (centers[self.lower] + centers[self.upper])
        fx, fy = f(*self.face_points)
        return np.stack(np.broadcast_arrays(np.asarray(fx, dtype=float), np.asarray(fy, dtype=float)), axis=1)

    def face_permeability(self, K: np.ndarray) -> np.ndarray:
        """``K`` at every face; per-cell tensors are combined by the harmonic mean."""
        if K.shape == (2, 2):
            return np.broadcast_to(K, (self.n_faces, 2, 2))
        if K.shape != (*self.grid.dims, 2, 2):
            raise ShapeMismatch(f"permeability field has shape {K.shape}, expected {(*self.grid.dims, 2, 2)}")
        inverse = np.linalg.inv(K.reshape(-1, 2, 2))
        return 2.0 * np.linalg.inv(inverse[self.lower] + inverse[self.upper])

    def lam(self, f_faces: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Driving force ``f - grad p`` at every face."""
        return f_faces - (self.gradient @ p).reshape(-1, 2)

    def normal_flux(self, flux: np.ndarray) -> np.ndarray:
        return self.normal @ np.ravel(flux)

    def residual(self, normal_flux: np.ndarray) -> np.ndarray:
        return self.divergence @ normal_flux

    def relative_divergence(self, normal_flux: np.ndarray, scale: float) -> float:
        """Max-norm of the divergence relative to ``scale / min(h)``."""
        div = np.abs(self.residual(normal_flux)).max(initial=0.0)
        reference = scale / min(self.grid.spacing)
        return float(div / reference) if reference > 0 else float(div)

    def pressure_operator(self, face_K: np.ndarray) -> sparse.csr_matrix:
        """``D N K G``: the divergence of the flux induced by ``grad p``."""
        n = self.n_faces
        blocks = sparse.bsr_matrix(
            (np.ascontiguousarray(face_K, dtype=float), np.arange(n), np.arange(n + 1)),
            shape=(2 * n, 2 * n),
        )
        return (self.divergence @ self.normal @ blocks @ self.gradient).tocsr()

    def pressure_solver(self, face_K: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """Mean-zero solver of ``D N K G p = rhs``."""
        A = self.pressure_operator(face_K)
        ones = sparse.csr_matrix(np.ones((self.n_cells, 1)))
        lu = spla.splu(sparse.bmat([[A, ones], [ones.T, None]], format="csc"))

        def solve(rhs: np.ndarray) -> np.ndarray:
            return lu.solve(np.concatenate([np.asarray(rhs, dtype=float), [0.0]]))[: self.n_cells]

        return solve

    def velocity(self, normal_flux: np.ndarray) -> VectorField:
        """Staggered velocity with zero normal flux on ``dOmega``."""
        comps = [np.zeros(self.grid.face_shape(axis)) for axis in range(2)]
        for axis in range(2):
            on_axis = self.faces.axis == axis
            idx = self.faces.index[on_axis]
            comps[axis][idx[:, 0], idx[:, 1]] = normal_flux[on_axis]
        return VectorField(self.grid, (comps[0], comps[1]))

    def pressure(self, p: np.ndarray) -> ScalarField:
        return ScalarField(self.grid, np.asarray(p, dtype=float).reshape(self.grid.dims))


@dataclass
class MacroSolution:
    """Filtration velocity ``u0`` and homogenized pressure ``p_hat``.

    Attributes:
        p_hat: Mean-zero pressure
        u0: Face velocity, zero normal flux on the boundary
        iterations: Picard iterations (1 for the linear solve)
        residual: Relative divergence of the returned fluxes
        compatibility: Largest residual of the weak pressure relation over cell indicators
        rigid: The fluxes vanish identically; ``p_hat`` is then one of many admissible pressures
    """

    p_hat: ScalarField
    u0: VectorField
    iterations: int
    residual: float
    compatibility: float = 0.0
    rigid: bool = False
    history: List[float] = field(default_factory=list)
    damping: List[float] = field(default_factory=list, repr=False)
    face_lambda: Optional[np.ndarray] = field(default=None, repr=False)
    face_flux: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def cell_velocity(self) -> np.ndarray:
        """``u0`` at cell centers, shape ``dims + (2,)``."""
        return center_values(self.u0)

    @property
    def divergence_max(self) -> float:
        grid = self.u0.grid
        div = np.diff(self.u0.ux, axis=0) / grid.spacing[0] + np.diff(self.u0.uy, axis=1) / grid.spacing[1]
        return float(np.abs(div).max())

    @property
    def boundary_flux_max(self) -> float:
        ux, uy = self.u0.ux, self.u0.uy
        return float(max(np.abs(ux[[0, -1], :]).max(), np.abs(uy[:, [0, -1]]).max()))


def _compatibility(disc: MacroDiscretization, normal_flux: np.ndarray, scale: float) -> float:
    # ∫ u . grad 1_c over the faces of cell c is -|c| (div u)_c
    weak = disc.grid.cell_volume * np.abs(disc.residual(normal_flux))
    reference = scale * min(disc.grid.spacing)
    worst = float(weak.max(initial=0.0))
    return worst / reference if reference > 0 else worst


def solve_linear_darcy(
    K: np.ndarray,
    f: ForcingLike,
    omega: Box,
    resolution: int | Sequence[int],
    cfg: MacroConfig | None = None,
) -> MacroSolution:
    """Solve ``div K (f - grad p) = 0`` with no flux through ``dOmega`` and mean-zero ``p``.

    Args:
        K: Permeability, one matrix or one per macro cell
        f: Forcing as a callable of ``(x, y)`` or a VectorField on the macro grid
        omega: The macroscopic box
        resolution: Macro cells per axis
        cfg: Macro settings (only ``tol`` is used)

    Returns:
        MacroSolution: ``u0 = K (f - grad p_hat)``

    Raises:
        SingularK: If ``K`` is not symmetric positive definite.
        NonConvergence: If the discrete divergence exceeds ``cfg.tol``.
    """
    logger = logging.getLogger(__name__)
    cfg = cfg or MacroConfig()
    K = check_permeability(K)
    disc = MacroDiscretization(omega, resolution)
    f_faces = disc.face_forcing(f)
    face_K = disc.face_permeability(K)
    solve = disc.pressure_solver(face_K)
    drive = disc.normal_flux(np.einsum("fab,fb->fa", face_K, f_faces))
    p = solve(disc.residual(drive))
    lam = disc.lam(f_faces, p)
    flux = np.einsum("fab,fb->fa", face_K, lam)
    normal_flux = disc.normal_flux(flux)
    scale = float(np.abs(drive).max(initial=0.0))
    residual = disc.relative_divergence(normal_flux, scale)
    if residual > cfg.tol:
        raise NonConvergence(f"linear Darcy divergence {residual:.3e} exceeds {cfg.tol:.1e}", 1, residual)
    logger.info("Linear Darcy solve on %s cells, relative divergence %.2e", disc.grid.dims, residual)
    return MacroSolution(
        p_hat=disc.pressure(p),
        u0=disc.velocity(normal_flux),
        iterations=1,
        residual=residual,
        compatibility=_compatibility(disc, normal_flux, scale),
        rigid=not np.any(normal_flux),
        history=[residual],
        face_lambda=lam,
        face_flux=flux,
    )


class LawInterpolant:
    """Evaluate ``K(lambda)`` at many points from an effective law.

    Linear laws are applied exactly. Otherwise the memo table is interpolated:
    multilinearly on a Cartesian table, piecewise linearly on scattered
    samples. Points outside the scattered hull are solved directly when the law
    carries a geometry and read from the nearest sample otherwise.
    """

    def __init__(self, law: EffectiveLaw, axes: Tuple[np.ndarray, np.ndarray] | None = None) -> None:
        self.law = law
        self._grid: RegularGridInterpolator | None = None
        self._scattered: LinearNDInterpolator | None = None
        self._nearest: NearestNDInterpolator | None = None
        if law.is_linear:
            if law.linear_K is None:
                raise SingularK("a linear law needs its permeability matrix")
            return
        if axes is not None:
            points = [(a, b) for a in axes[0] for b in axes[1]]
            values = np.stack([eval_K(law, lam) for lam in points]).reshape(len(axes[0]), len(axes[1]), 2)
            self._grid = RegularGridInterpolator(axes, values, bounds_error=False, fill_value=None)
            return
        lams, values = law.samples()
        if len(lams) < 3:
            raise ValueError("the effective law has fewer than three tabulated values to interpolate")
        self._scattered = LinearNDInterpolator(lams, values)
        self._nearest = NearestNDInterpolator(lams, values)

    def __call__(self, lam: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=float).reshape(-1, 2)
        if self.law.is_linear:
            return lam @ self.law.linear_K.T
        if self._grid is not None:
            return self._grid(lam)
        out = self._scattered(lam)
        outside = np.isnan(out).any(axis=1)
        if outside.any():
            if self.law.geometry is not None:
                out[outside] = np.stack(eval_K_many(self.law, lam[outside]))
            else:
                out[outside] = self._nearest(lam[outside])
        return out


def linearization(law: EffectiveLaw) -> np.ndarray:
    """Matrix used for the Picard correction: the linear permeability or a least-squares fit of the table.

    Raises:
        SingularK: If the resulting matrix is not symmetric positive definite.
    """
    if law.linear_K is not None:
        return check_permeability(law.linear_K)
    lams, values = law.samples()
    if len(lams) < 2:
        raise SingularK("the effective law has no permeability and too few samples to fit one")
    fit, *_ = np.linalg.lstsq(lams, values, rcond=None)
    K = 0.5 * (fit.T + fit)
    return check_permeability(K)


def solve_nonlinear_darcy(
    law: EffectiveLaw,
    f: ForcingLike,
    omega: Box,
    resolution: int | Sequence[int],
    cfg: MacroConfig | None = None,
) -> MacroSolution:
    """Solve ``div K(f - grad p) = 0`` by damped Picard iteration.

    Each step evaluates ``lambda = f - grad p`` at the faces, applies the law,
    and corrects ``p`` with the linear-law operator applied to the divergence
    residual. A step that would increase the residual is retried with half the
    damping, so accepted residuals never increase.

    Args:
        law: Effective law; laws with a geometry and an empty table are tabulated first
        f: Forcing as a callable of ``(x, y)`` or a VectorField on the macro grid
        omega: The macroscopic box
        resolution: Macro cells per axis
        cfg: Damping, Aitken switch, tolerance and iteration cap

    Returns:
        MacroSolution: Converged pressure and flux. When the flux vanishes
        identically the state is reported as rigid.

    Raises:
        SingularK: If the linearization is not symmetric positive definite.
        NonConvergence: If the tolerance is not met within ``cfg.max_iter`` steps.
    """
    logger = logging.getLogger(__name__)
    cfg = cfg or MacroConfig()
    disc = MacroDiscretization(omega, resolution)
    f_faces = disc.face_forcing(f)
    axes = None
    if not law.is_linear and law.geometry is not None and not law.table:
        bound = float(np.linalg.norm(f_faces, axis=1).max(initial=0.0))
        extent = law.cell.table_extent or max(2.0 * bound, 1e-12)
        axes = tabulate_law(law, extent=extent)
    K_lin = linearization(law)
    face_K = disc.face_permeability(K_lin)
    solve = disc.pressure_solver(face_K)
    evaluate = LawInterpolant(law, axes)

    linear_drive = disc.normal_flux(np.einsum("fab,fb->fa", face_K, f_faces))
    scale = float(np.abs(linear_drive).max(initial=0.0))
    p = solve(disc.residual(linear_drive))

    def state(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        lam = disc.lam(f_faces, p)
        flux = evaluate(lam)
        normal_flux = disc.normal_flux(flux)
        return lam, flux, normal_flux, disc.relative_divergence(normal_flux, scale)

    lam, flux, normal_flux, residual = state(p)
    history = [residual]
    damping_history: List[float] = []
    theta = cfg.damping
    previous_step: np.ndarray | None = None
    iterations = 0
    while residual > cfg.tol:
        if iterations >= cfg.max_iter:
            raise NonConvergence(
                f"nonlinear Darcy did not converge in {cfg.max_iter} iterations (residual {residual:.3e})",
                iterations,
                residual,
                history,
            )
        iterations += 1
        step = solve(disc.residual(normal_flux))
        if cfg.aitken and previous_step is not None:
            change = step - previous_step
            denominator = float(change @ change)
            if denominator > 0:
                theta = float(np.clip(-theta * float(previous_step @ change) / denominator, MIN_DAMPING, 1.0))
        previous_step = step
        trial_theta = theta
        while True:
            candidate = p + trial_theta * step
            trial = state(candidate)
            if trial[3] <= residual or trial_theta < MIN_DAMPING:
                break
            trial_theta *= 0.5
        if trial[3] > residual:
            raise NonConvergence(
                f"nonlinear Darcy stalled at residual {residual:.3e}: no damping reduces it",
                iterations,
                residual,
                history,
            )
        p = candidate - candidate.mean()
        lam, flux, normal_flux, residual = trial
        history.append(residual)
        damping_history.append(trial_theta)
        logger.debug("Picard iteration %d: residual %.3e (damping %.3g)", iterations, residual, trial_theta)

    rigid = not np.any(np.abs(normal_flux) > 0)
    if rigid:
        logger.info("Macro flux vanishes: the medium is rigid and the pressure is determined only up to yield slack")
    logger.info("Nonlinear Darcy converged in %d iterations (residual %.2e)", iterations, residual)
    return MacroSolution(
        p_hat=disc.pressure(p),
        u0=disc.velocity(normal_flux),
        iterations=iterations,
        residual=residual,
        compatibility=_compatibility(disc, normal_flux, scale),
        rigid=rigid,
        history=history,
        damping=damping_history,
        face_lambda=lam,
        face_flux=flux,
    )
