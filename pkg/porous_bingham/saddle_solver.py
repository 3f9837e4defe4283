"""Stokes and Bingham solvers on masked staggered grids.

The velocity lives on the open faces of a fluid mask (a face is open when
both adjacent cells are fluid; cells outside a bounded axis count as solid,
which realizes the homogeneous Dirichlet condition). The full velocity
gradient is sampled once per cell quadrant: the two center derivatives and
the two cross derivatives at the quadrant's corner node. With the quadrant
weights this gives

* ``a(u, v) = mu_eff * sum_q w_q (G u)_q . (G v)_q``, the usual MAC Laplacian,
* ``j(v) = g_eff * sum_q w_q |(G v)_q|`` with the Frobenius norm.

:func:`solve_bingham` minimizes ``a(v, v) / 2 + j(v) - (f, v)`` over
divergence-free ``v`` with the augmented Lagrangian splitting ``w = G v``
(pointwise shrinkage for ``w``, a Stokes solve for ``v``, multiplier ascent).
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from dataclasses import dataclass
from dataclasses import field
import logging
from typing import Dict
from typing import List
from typing import Sequence
from typing import Tuple
from typing import Union

# Import third-party modules
import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

# Import local modules
from porous_bingham.exceptions import DisconnectedFluid
from porous_bingham.exceptions import InadmissibleProbe
from porous_bingham.exceptions import NegativeYield
from porous_bingham.exceptions import NonConvergence
from porous_bingham.exceptions import ShapeMismatch
from porous_bingham.fields import ScalarField
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import StressDiagnostics
from porous_bingham.fields import TensorField
from porous_bingham.fields import VectorField
from porous_bingham.fields import lookup
from porous_bingham.fields import stress
from porous_bingham.geometry import Mask
from porous_bingham.geometry import label_components
from porous_bingham.models import SolverConfig


BoundarySpec = Union[str, Tuple[str, str]]

_TINY = 1e-300
# Viscous part of the Stokes balance, relative to the load, below which the forcing counts as a pressure gradient.
BALANCED_TOL = 1e-8


def periodic_flags(bc: BoundarySpec) -> Tuple[bool, bool]:
    """Translate ``periodic`` / ``dirichlet0`` (global or per axis) into periodicity flags."""
    items = (bc, bc) if isinstance(bc, str) else tuple(bc)
    if len(items) != 2:
        raise ValueError(f"boundary specification needs two entries, got {bc!r}")
    flags = []
    for item in items:
        if item == "periodic":
            flags.append(True)
        elif item == "dirichlet0":
            flags.append(False)
        else:
            raise ValueError(f"unknown boundary condition {item!r}")
    return (flags[0], flags[1])


def shrink(s: np.ndarray, g: float, denominator: float) -> np.ndarray:
    """Minimizer of ``denominator/2 |w|^2 + g |w| - s.w`` row by row (soft thresholding).

    Args:
        s: Array whose last axis holds one gradient sample
        g: Threshold
        denominator: Quadratic coefficient

    Returns:
        np.ndarray: ``max(0, 1 - g/|s|) s / denominator``
    """
    norm = np.linalg.norm(s, axis=-1, keepdims=True)
    if g == 0:
        return s / denominator
    factor = np.maximum(0.0, 1.0 - g / np.where(norm > 0, norm, 1.0))
    factor = np.where(norm > 0, factor, 0.0)
    return factor * s / denominator


def clip_to_yield(m: np.ndarray, g: float) -> np.ndarray:
    """Rows of ``m`` scaled back onto the ball ``|m| <= g`` where they leave it."""
    norm = np.linalg.norm(m, axis=-1, keepdims=True)
    return m * np.minimum(1.0, g / np.where(norm > 0, norm, 1.0))


class SaddleSystem:
    """Factored Stokes saddle-point operator ``[[nu L, -A D^T], [-A D, 0]]``.

    The pressure is pinned to mean zero through a bordering row. When the
    velocity Laplacian has constants in its kernel (fully periodic, no
    obstacle) each velocity component is pinned to mean zero as well.
    """

    def __init__(self, ops: FlowOperators, nu: float, cfg: SolverConfig) -> None:
        self.ops = ops
        self.nu = float(nu)
        self.cfg = cfg
        logger = logging.getLogger(__name__)
        if cfg.linear_solver == "direct":
            self._lu = spla.splu(self._bordered().tocsc())
            logger.debug("Factored saddle system with %d velocity and %d pressure unknowns", ops.n_dof, ops.n_p)
        else:
            self._gamma = 100.0 * self.nu
            self._matrix = (self.nu * ops.L + self._gamma * ops.area * (ops.D.T @ ops.D)).tocsr()
            diagonal = self._matrix.diagonal()
            inverse = 1.0 / np.where(diagonal > 0, diagonal, 1.0)
            self._precond = spla.LinearOperator(self._matrix.shape, matvec=lambda x: inverse * x)

    def _bordered(self) -> sparse.spmatrix:
        ops = self.ops
        blocks = [
            [self.nu * ops.L, -ops.area * ops.D.T, None],
            [-ops.area * ops.D, None, sparse.csr_matrix(np.ones((ops.n_p, 1)))],
            [None, sparse.csr_matrix(np.ones((1, ops.n_p))), None],
        ]
        if ops.needs_gauge:
            gauge = ops.gauge_matrix()
            blocks[0].append(gauge.T)
            blocks[1].append(None)
            blocks[2].append(None)
            blocks.append([gauge, None, None, None])
        return sparse.bmat(blocks, format="csc")

    def solve(self, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Solve for one right-hand side or a column stack of them.

        Args:
            rhs: Velocity right-hand side(s), shape ``(n_dof,)`` or ``(n_dof, k)``

        Returns:
            Velocity and pressure arrays with matching trailing shape.
        """
        ops = self.ops
        rhs = np.asarray(rhs, dtype=float)
        if ops.needs_gauge:
            rhs = ops.remove_velocity_mean(rhs)
        if self.cfg.linear_solver == "direct":
            extra = self._lu.shape[0] - ops.n_dof
            pad = np.zeros((extra,) + rhs.shape[1:])
            sol = self._lu.solve(np.concatenate([rhs, pad]))
            return sol[: ops.n_dof], sol[ops.n_dof : ops.n_dof + ops.n_p]
        if rhs.ndim == 2:
            columns = [self._uzawa(rhs[:, k]) for k in range(rhs.shape[1])]
            return np.stack([c[0] for c in columns], axis=1), np.stack([c[1] for c in columns], axis=1)
        return self._uzawa(rhs)

    def _uzawa(self, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ops = self.ops
        cfg = self.cfg
        p = np.zeros(ops.n_p)
        v = np.zeros(ops.n_dof)
        div_max = np.inf
        for iteration in range(1, cfg.linear_max_iter + 1):
            v, info = spla.cg(
                self._matrix,
                rhs + ops.area * (ops.D.T @ p),
                x0=v,
                rtol=cfg.linear_tol,
                maxiter=cfg.linear_max_iter,
                M=self._precond,
            )
            if info < 0:
                raise NonConvergence("conjugate gradient breakdown", iteration, div_max)
            if ops.needs_gauge:
                v = ops.remove_velocity_mean(v)
            div = ops.D @ v
            div_max = float(np.abs(div).max()) if div.size else 0.0
            if div_max <= cfg.tol_div:
                return v, p - p.mean()
            p = p - self._gamma * div
        raise NonConvergence("augmented Uzawa did not reach the divergence tolerance", cfg.linear_max_iter, div_max)


class FlowOperators:
    """Discrete operators of a fluid mask on a staggered grid.

    Attributes:
        grid: The staggered grid
        open_faces: Open-face indicators for both components
        D: Divergence, fluid cells by velocity unknowns
        G: Quadrant gradient samples, ``4 * n_quadrants`` by velocity unknowns
        L: ``w_q G^T G``
        area: Cell area, the mass of one face unknown
    """

    def __init__(
        self,
        fluid: np.ndarray,
        spacing: Sequence[float],
        periodic: Sequence[bool],
        origin: Sequence[float] = (0.0, 0.0),
    ) -> None:
        fluid = np.asarray(fluid, dtype=bool)
        self.fluid = fluid
        self.grid = StaggeredGrid(fluid.shape, tuple(spacing), tuple(periodic), tuple(origin))
        nx, ny = fluid.shape
        hx, hy = self.grid.spacing
        periodic = self.grid.periodic
        self.area = hx * hy
        self.quad_weight = self.area / 4.0

        self.cell_index = -np.ones(fluid.shape, dtype=np.int64)
        cells = np.flatnonzero(fluid)
        self.cell_index.flat[cells] = np.arange(cells.size)
        self.n_p = int(cells.size)

        open_faces = []
        for axis in range(2):
            fi, fj = np.meshgrid(*(np.arange(n) for n in self.grid.face_shape(axis)), indexing="ij")
            di, dj = (1, 0) if axis == 0 else (0, 1)
            lower = lookup(fluid, fi - di, fj - dj, periodic, False)
            upper = lookup(fluid, fi, fj, periodic, False)
            open_faces.append(lower & upper)
        self.open_faces = (open_faces[0], open_faces[1])
        self.n_u = int(open_faces[0].sum())
        self.n_v = int(open_faces[1].sum())
        self.n_dof = self.n_u + self.n_v
        self.u_index = -np.ones(open_faces[0].shape, dtype=np.int64)
        self.u_index[open_faces[0]] = np.arange(self.n_u)
        self.v_index = -np.ones(open_faces[1].shape, dtype=np.int64)
        self.v_index[open_faces[1]] = self.n_u + np.arange(self.n_v)

        ci, cj = np.unravel_index(cells, fluid.shape)
        self.D = self._divergence(ci, cj)
        self.G, self.alpha = self._quadrant_gradient(ci, cj)
        self.n_quadrants = 4 * self.n_p
        self.L = (self.quad_weight * (self.G.T @ self.G)).tocsr()
        self.needs_gauge = bool(all(periodic) and fluid.all())
        self._systems: Dict[Tuple[float, str], SaddleSystem] = {}

    @classmethod
    def from_mask(cls, mask: Mask, bc: BoundarySpec = "dirichlet0") -> FlowOperators:
        """Operators of a :class:`Mask`; the fluid must be connected under ``bc``."""
        periodic = periodic_flags(bc)
        count, _ = label_components(mask.values, periodic)
        if count != 1:
            raise DisconnectedFluid(f"fluid mask has {count} connected components")
        return cls(mask.values, mask.spacing, periodic, mask.origin)

    def _divergence(self, ci: np.ndarray, cj: np.ndarray) -> sparse.csr_matrix:
        hx, hy = self.grid.spacing
        periodic = self.grid.periodic
        rows = np.arange(ci.size)
        entries = [
            (lookup(self.u_index, ci + 1, cj, periodic, -1), 1.0 / hx),
            (lookup(self.u_index, ci, cj, periodic, -1), -1.0 / hx),
            (lookup(self.v_index, ci, cj + 1, periodic, -1), 1.0 / hy),
            (lookup(self.v_index, ci, cj, periodic, -1), -1.0 / hy),
        ]
        r, c, v = [], [], []
        for cols, value in entries:
            keep = cols >= 0
            r.append(rows[keep])
            c.append(cols[keep])
            v.append(np.full(int(keep.sum()), value))
        return sparse.coo_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
            shape=(ci.size, self.n_dof),
        ).tocsr()

    def _quadrant_gradient(self, ci: np.ndarray, cj: np.ndarray) -> Tuple[sparse.csr_matrix, np.ndarray]:
        fluid = self.fluid
        periodic = self.grid.periodic
        hx, hy = self.grid.spacing
        area = self.area
        nc = ci.size
        q = np.arange(4 * nc)
        cell = np.repeat(np.arange(nc), 4)
        qi = ci[cell]
        qj = cj[cell]
        a = qi + np.tile([0, 1, 0, 1], nc)
        b = qj + np.tile([0, 0, 1, 1], nc)

        def solid(i: np.ndarray, j: np.ndarray) -> np.ndarray:
            return ~lookup(fluid, i, j, periodic, False)

        rows, cols, vals = [], [], []

        def add(row: np.ndarray, col: np.ndarray, value: np.ndarray) -> None:
            keep = col >= 0
            rows.append(row[keep])
            cols.append(col[keep])
            vals.append(np.broadcast_to(value, row.shape)[keep])

        add(4 * q, lookup(self.u_index, qi + 1, qj, periodic, -1), np.full(q.size, 1.0 / hx))
        add(4 * q, lookup(self.u_index, qi, qj, periodic, -1), np.full(q.size, -1.0 / hx))
        add(4 * q + 1, lookup(self.v_index, qi, qj + 1, periodic, -1), np.full(q.size, 1.0 / hy))
        add(4 * q + 1, lookup(self.v_index, qi, qj, periodic, -1), np.full(q.size, -1.0 / hy))

        fluid_around = sum(
            (~solid(a + da, b + db)).astype(float) for da, db in ((-1, -1), (0, -1), (-1, 0), (0, 0))
        )
        share = fluid_around * area / 4.0

        # d u / d y at node (a, b) from u(a, b-1) and u(a, b)
        upper = lookup(self.u_index, a, b, periodic, -1)
        lower = lookup(self.u_index, a, b - 1, periodic, -1)
        upper_wall = (upper < 0) & solid(a - 1, b) & solid(a, b)
        lower_wall = (lower < 0) & solid(a - 1, b - 1) & solid(a, b - 1)
        half = ((upper >= 0) & lower_wall) | ((lower >= 0) & upper_wall)
        step = np.where(half, hy / 2.0, hy)
        weight_u = np.where(half, area / 2.0, area)
        alpha_u = np.sqrt(weight_u / share)
        add(4 * q + 2, upper, alpha_u / step)
        add(4 * q + 2, lower, -alpha_u / step)

        # d v / d x at node (a, b) from v(a-1, b) and v(a, b)
        right = lookup(self.v_index, a, b, periodic, -1)
        left = lookup(self.v_index, a - 1, b, periodic, -1)
        right_wall = (right < 0) & solid(a, b - 1) & solid(a, b)
        left_wall = (left < 0) & solid(a - 1, b - 1) & solid(a - 1, b)
        half = ((right >= 0) & left_wall) | ((left >= 0) & right_wall)
        step = np.where(half, hx / 2.0, hx)
        weight_v = np.where(half, area / 2.0, area)
        alpha_v = np.sqrt(weight_v / share)
        add(4 * q + 3, right, alpha_v / step)
        add(4 * q + 3, left, -alpha_v / step)

        matrix = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(4 * q.size, self.n_dof),
        ).tocsr()
        return matrix, np.stack([alpha_u, alpha_v], axis=1)

    def gauge_matrix(self) -> sparse.csr_matrix:
        gauge = np.zeros((2, self.n_dof))
        gauge[0, : self.n_u] = 1.0
        gauge[1, self.n_u :] = 1.0
        return sparse.csr_matrix(gauge)

    def remove_velocity_mean(self, values: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float)
        if self.n_u:
            out[: self.n_u] -= out[: self.n_u].mean(axis=0)
        if self.n_v:
            out[self.n_u :] -= out[self.n_u :].mean(axis=0)
        return out

    def saddle(self, nu: float, cfg: SolverConfig) -> SaddleSystem:
        """Factored saddle system for viscosity ``nu``, cached per viscosity and solver kind."""
        key = (float(nu), cfg.linear_solver)
        if key not in self._systems:
            self._systems[key] = SaddleSystem(self, nu, cfg)
        return self._systems[key]

    def quad_norm(self, samples: np.ndarray) -> float:
        """Weighted L2 norm of quadrant samples."""
        return float(np.sqrt(self.quad_weight * np.sum(np.asarray(samples) ** 2)))

    def grad(self, v: np.ndarray) -> np.ndarray:
        """Quadrant gradient samples of a velocity vector, shape ``(n_quadrants, 4)``."""
        return (self.G @ v).reshape(-1, 4)

    def gather(self, u: VectorField, strict: bool = False) -> np.ndarray:
        """Velocity unknowns from a face field.

        Args:
            u: Face field on this grid
            strict: Reject fields that do not vanish on closed faces

        Raises:
            ShapeMismatch: If the field does not match the grid layout.
            InadmissibleProbe: In strict mode, for nonzero closed-face values.
        """
        out = np.zeros(self.n_dof)
        for axis, index in enumerate((self.u_index, self.v_index)):
            comp = np.asarray(u.components[axis], dtype=float)
            if comp.shape != index.shape:
                raise ShapeMismatch(f"component {axis} has shape {comp.shape}, expected {index.shape}")
            is_open = index >= 0
            if strict:
                closed = np.abs(comp[~is_open])
                bound = 1e-12 * max(1.0, float(np.abs(comp).max()) if comp.size else 1.0)
                if closed.size and closed.max() > bound:
                    raise InadmissibleProbe(f"probe is nonzero on closed faces (max {closed.max():.3e})")
            out[index[is_open]] = comp[is_open]
        return out

    def scatter(self, v: np.ndarray) -> VectorField:
        """Face field (zero on closed faces) from velocity unknowns."""
        comps = []
        for index in (self.u_index, self.v_index):
            comp = np.zeros(index.shape)
            is_open = index >= 0
            comp[is_open] = v[index[is_open]]
            comps.append(comp)
        return VectorField(self.grid, (comps[0], comps[1]), self.open_faces, zero_extended=True)

    def pressure_field(self, p: np.ndarray) -> ScalarField:
        values = np.zeros(self.grid.dims)
        values.flat[np.flatnonzero(self.fluid)] = p
        return ScalarField(self.grid, values)

    def cell_tensor(self, samples: np.ndarray) -> TensorField:
        """Cell tensors from quadrant samples (cross terms unscaled, quadrants averaged)."""
        samples = np.asarray(samples, dtype=float).reshape(-1, 4)
        physical = np.empty_like(samples)
        physical[:, :2] = samples[:, :2]
        physical[:, 2:] = samples[:, 2:] / self.alpha
        mean = physical.reshape(self.n_p, 4, 4).mean(axis=1)
        values = np.zeros((*self.grid.dims, 2, 2))
        flat = values.reshape(-1, 2, 2)
        cells = np.flatnonzero(self.fluid)
        flat[cells, 0, 0] = mean[:, 0]
        flat[cells, 1, 1] = mean[:, 1]
        flat[cells, 0, 1] = mean[:, 2]
        flat[cells, 1, 0] = mean[:, 3]
        return TensorField(self.grid, values)

    def quadrant_cells_zero(self, samples: np.ndarray) -> np.ndarray:
        """Cells whose four quadrant samples all vanish exactly."""
        samples = np.asarray(samples).reshape(self.n_p, 4, 4)
        zero = ~np.any(samples != 0.0, axis=(1, 2))
        out = np.zeros(self.grid.dims, dtype=bool)
        out.flat[np.flatnonzero(self.fluid)] = zero
        return out

    def max_divergence(self, v: np.ndarray) -> float:
        div = self.D @ v
        return float(np.abs(div).max()) if div.size else 0.0

    def forms(self, f: np.ndarray, g: float, mu: float) -> VariationalForms:
        return VariationalForms(self, np.asarray(f, dtype=float), float(g), float(mu))


@dataclass
class VariationalForms:
    """The bilinear form ``a``, the yield functional ``j`` and the load ``(f, .)``."""

    ops: FlowOperators
    f: np.ndarray
    g: float
    mu: float

    def a(self, u: np.ndarray, v: np.ndarray) -> float:
        return self.mu * float(u @ (self.ops.L @ v))

    def j(self, v: np.ndarray) -> float:
        samples = self.ops.grad(v)
        return self.g * self.ops.quad_weight * float(np.linalg.norm(samples, axis=1).sum())

    def load(self, v: np.ndarray) -> float:
        return self.ops.area * float(self.f @ v)

    def energy(self, v: np.ndarray) -> float:
        return 0.5 * self.a(v, v) + self.j(v) - self.load(v)

    def residual(self, u: np.ndarray, v: np.ndarray) -> float:
        """``(f, v-u) - a(u, v-u) - j(v) + j(u)``; nonpositive for every ``v`` at the solution."""
        diff = v - u
        return self.load(diff) - self.a(u, diff) - self.j(v) + self.j(u)


@dataclass
class BinghamState:
    """Converged augmented-Lagrangian iterate.

    Attributes:
        ops: Operators the state lives on
        velocity: Velocity unknowns
        pressure: Pressure per fluid cell, mean zero
        w: Auxiliary gradient samples
        m: Multiplier samples
        rigid: The whole fluid is at rest
    """

    ops: FlowOperators
    velocity: np.ndarray
    pressure: np.ndarray
    w: np.ndarray
    m: np.ndarray
    iterations: int = 0
    converged: bool = True
    rigid: bool = False
    vi_residual: float = 0.0
    energy_history: List[float] = field(default_factory=list)
    residual_history: List[float] = field(default_factory=list)

    @property
    def history(self) -> List[float]:
        """Energy after each outer iteration."""
        return self.energy_history

    @property
    def u(self) -> VectorField:
        return self.ops.scatter(self.velocity)

    @property
    def p(self) -> ScalarField:
        return self.ops.pressure_field(self.pressure)

    @property
    def rigid_cells(self) -> np.ndarray:
        return self.ops.quadrant_cells_zero(self.w)

    @property
    def multiplier(self) -> TensorField:
        return self.ops.cell_tensor(self.m)

    @property
    def gradient(self) -> TensorField:
        return self.ops.cell_tensor(self.ops.grad(self.velocity))

    def diagnostics(self, g_eff: float, mu_eff: float) -> StressDiagnostics:
        """Constitutive stress evaluated with the solver's own gradient and multiplier."""
        return stress(
            self.u,
            self.p,
            g_eff,
            mu_eff,
            multiplier=self.multiplier,
            rigid=self.rigid_cells,
            velocity_gradient_field=self.gradient,
            fluid=self.ops.fluid,
        )


def balanced_by_pressure(ops: FlowOperators, v: np.ndarray, nu: float, load: np.ndarray) -> bool:
    """Whether the Stokes velocity ``v`` of ``load`` is roundoff, so that pressure alone balances the forcing."""
    scale = float(np.linalg.norm(load))
    if scale == 0:
        return True
    return float(np.linalg.norm(nu * (ops.L @ v))) <= BALANCED_TOL * scale


def _forcing_dofs(ops: FlowOperators, f: VectorField | np.ndarray) -> np.ndarray:
    if isinstance(f, VectorField):
        return ops.gather(f)
    f = np.asarray(f, dtype=float)
    if f.shape != (ops.n_dof,):
        raise ShapeMismatch(f"forcing vector has shape {f.shape}, expected ({ops.n_dof},)")
    return f


def _prepare_forcing(ops: FlowOperators, f: VectorField | np.ndarray) -> np.ndarray:
    dofs = _forcing_dofs(ops, f)
    if ops.needs_gauge:
        mean = (dofs[: ops.n_u].mean() if ops.n_u else 0.0, dofs[ops.n_u :].mean() if ops.n_v else 0.0)
        if max(abs(mean[0]), abs(mean[1])) > 1e-14 * max(1.0, float(np.abs(dofs).max())):
            logging.getLogger(__name__).warning(
                "Forcing mean %s has no periodic unobstructed response and is projected out",
                mean,
            )
        dofs = ops.remove_velocity_mean(dofs)
    return dofs


def project_divergence_free(ops: FlowOperators, v: VectorField | np.ndarray) -> np.ndarray:
    """Closest divergence-free field in the ``L`` energy norm."""
    dofs = _forcing_dofs(ops, v)
    system = ops.saddle(1.0, SolverConfig())
    out, _ = system.solve(ops.L @ dofs)
    return out


def random_probes(
    ops: FlowOperators,
    count: int,
    seed: int,
    scale: float,
) -> List[np.ndarray]:
    """``count`` random admissible divergence-free fields with ``|G v| = scale``."""
    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(count):
        z = project_divergence_free(ops, rng.standard_normal(ops.n_dof))
        norm = ops.quad_norm(ops.grad(z))
        probes.append(z * (scale / norm) if norm > 0 else z)
    return probes


def _probe_dofs(ops: FlowOperators, probe: VectorField | np.ndarray) -> np.ndarray:
    dofs = ops.gather(probe, strict=True) if isinstance(probe, VectorField) else np.asarray(probe, dtype=float)
    if dofs.shape != (ops.n_dof,):
        raise InadmissibleProbe(f"probe vector has shape {dofs.shape}, expected ({ops.n_dof},)")
    bound = 1e-8 * max(1.0, float(np.abs(dofs).max(initial=0.0)) / min(ops.grid.spacing))
    if ops.max_divergence(dofs) > bound:
        raise InadmissibleProbe(f"probe is not divergence free (max {ops.max_divergence(dofs):.3e})")
    return dofs


def residual_vi(
    state: BinghamState,
    f: VectorField | np.ndarray,
    g_eff: float,
    mu_eff: float,
    probes: Sequence[VectorField | np.ndarray],
) -> float:
    """Largest positive part of the variational-inequality residual over ``probes``.

    Raises:
        InadmissibleProbe: If a probe is nonzero on a closed face or not divergence free.
    """
    forms = state.ops.forms(_forcing_dofs(state.ops, f), g_eff, mu_eff)
    worst = 0.0
    for probe in probes:
        worst = max(worst, forms.residual(state.velocity, _probe_dofs(state.ops, probe)))
    return worst


def _vi_scale(forms: VariationalForms, u: np.ndarray, probes: Sequence[np.ndarray]) -> float:
    scale = forms.a(u, u) + forms.j(u) + abs(forms.load(u))
    for z in probes:
        scale = max(scale, forms.a(z, z) + forms.j(z) + abs(forms.load(z)))
    return max(scale, _TINY)


def _solver_probes(
    ops: FlowOperators,
    u: np.ndarray,
    cfg: SolverConfig,
    reference: float,
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    size = 0.1 * max(ops.quad_norm(ops.grad(u)), reference)
    perturbations = random_probes(ops, cfg.n_probes, cfg.seed, size)
    return [np.zeros_like(u), 2.0 * u] + [u + z for z in perturbations], perturbations


def energy(
    ops: FlowOperators,
    v: VectorField | np.ndarray,
    f: VectorField | np.ndarray,
    g_eff: float,
    mu_eff: float,
) -> float:
    """Discrete Bingham energy ``a(v, v)/2 + j(v) - (f, v)``."""
    dofs = ops.gather(v) if isinstance(v, VectorField) else np.asarray(v, dtype=float)
    return ops.forms(_forcing_dofs(ops, f), g_eff, mu_eff).energy(dofs)


def energy_balance(state: BinghamState, f: VectorField | np.ndarray, g_eff: float, mu_eff: float) -> float:
    """Relative residual of ``a(u, u) + j(u) = (f, u)``, which the probes ``0`` and ``2u`` imply."""
    forms = state.ops.forms(_forcing_dofs(state.ops, f), g_eff, mu_eff)
    u = state.velocity
    balance = forms.a(u, u) + forms.j(u) - forms.load(u)
    scale = forms.a(u, u) + forms.j(u) + abs(forms.load(u))
    return abs(balance) / scale if scale > 0 else 0.0


def solve_stokes(
    mask: Mask,
    f: VectorField,
    mu_eff: float,
    bc: BoundarySpec = "dirichlet0",
    cfg: SolverConfig | None = None,
    ops: FlowOperators | None = None,
) -> Tuple[VectorField, ScalarField]:
    """Solve ``-mu_eff lap u + grad p = f``, ``div u = 0`` on the fluid of ``mask``.

    Args:
        mask: Fluid mask
        f: Forcing on the faces of the mask grid
        mu_eff: Viscosity
        bc: ``periodic``, ``dirichlet0`` or one of them per axis
        cfg: Solver settings
        ops: Prebuilt operators for ``mask``

    Returns:
        Velocity (zero on closed faces) and pressure (mean zero over fluid cells).

    Raises:
        DisconnectedFluid: If the fluid is not connected.
        NonConvergence: If the divergence tolerance is not met.
    """
    cfg = cfg or SolverConfig()
    if mu_eff <= 0:
        raise ValueError(f"viscosity must be positive, got {mu_eff}")
    ops = ops or FlowOperators.from_mask(mask, bc)
    system = ops.saddle(mu_eff, cfg)
    v, p = system.solve(ops.area * _prepare_forcing(ops, f))
    div_max = ops.max_divergence(v)
    if div_max > cfg.tol_div:
        raise NonConvergence(f"divergence {div_max:.3e} exceeds {cfg.tol_div:.1e}", 1, div_max)
    return ops.scatter(v), ops.pressure_field(p)


def solve_bingham(
    mask: Mask | None,
    f: VectorField | np.ndarray,
    g_eff: float,
    mu_eff: float,
    bc: BoundarySpec = "dirichlet0",
    cfg: SolverConfig | None = None,
    initial: BinghamState | None = None,
    ops: FlowOperators | None = None,
) -> BinghamState:
    """Solve the Bingham variational inequality by augmented Lagrangian iterations.

    Args:
        mask: Fluid mask (ignored when ``ops`` is given)
        f: Forcing on the faces, or as velocity unknowns
        g_eff: Scaled yield stress
        mu_eff: Scaled viscosity
        bc: Boundary specification
        cfg: Solver settings
        initial: State whose ``w`` and ``m`` start the iteration
        ops: Prebuilt operators

    Returns:
        BinghamState: The converged state

    Raises:
        NegativeYield: If ``g_eff < 0``.
        NonConvergence: If the splitting, divergence and probe residuals are
            not all met within ``cfg.max_outer`` iterations.
    """
    logger = logging.getLogger(__name__)
    cfg = cfg or SolverConfig()
    if g_eff < 0:
        raise NegativeYield(f"yield stress must be nonnegative, got {g_eff}")
    if mu_eff <= 0:
        raise ValueError(f"viscosity must be positive, got {mu_eff}")
    if ops is None:
        if mask is None:
            raise ValueError("either a mask or prebuilt operators are required")
        ops = FlowOperators.from_mask(mask, bc)
    f_dofs = _prepare_forcing(ops, f)
    load = ops.area * f_dofs
    forms = ops.forms(f_dofs, g_eff, mu_eff)

    if g_eff == 0:
        v, p = ops.saddle(mu_eff, cfg).solve(load)
        rest = balanced_by_pressure(ops, v, mu_eff, load)
        if rest:
            v = np.zeros_like(v)
        gv = ops.grad(v)
        state = BinghamState(ops, v, p, gv, mu_eff * gv, energy_history=[forms.energy(v)])
        state.rigid = rest
        logger.info("Yield stress is zero; solved the Stokes system directly")
        return state

    r = cfg.augmentation or mu_eff
    system = ops.saddle(r, cfg)
    stokes, p = system.solve(load)
    reference = ops.quad_norm(ops.grad(stokes))
    if reference == 0 or balanced_by_pressure(ops, stokes, r, load):
        zeros = np.zeros((ops.n_quadrants, 4))
        logger.info("Forcing is balanced by pressure alone; the fluid is at rest")
        return BinghamState(ops, np.zeros(ops.n_dof), p, zeros, zeros.copy(), rigid=True, energy_history=[0.0])

    if initial is not None:
        w = np.array(initial.w, dtype=float)
        m = np.array(initial.m, dtype=float)
    else:
        w = np.zeros((ops.n_quadrants, 4))
        m = np.zeros((ops.n_quadrants, 4))
    energy_history: List[float] = []
    residual_history: List[float] = []
    v = stokes
    vi = np.inf
    for iteration in range(1, cfg.max_outer + 1):
        rhs = load - ops.quad_weight * (ops.G.T @ (m - r * w).ravel())
        v, p = system.solve(rhs)
        gv = ops.grad(v)
        w_new = shrink(m + r * gv, g_eff, mu_eff + r)
        m = m + r * (gv - w_new)
        primal = ops.quad_norm(gv - w_new) / reference
        dual = ops.quad_norm(w_new - w) / reference
        w = w_new
        energy_history.append(forms.energy(v))
        residual_history.append(max(primal, dual))
        logger.debug("iteration %d: primal %.3e dual %.3e", iteration, primal, dual)
        if max(primal, dual) > cfg.tol_aux:
            continue
        if ops.max_divergence(v) > cfg.tol_div:
            continue
        rigid = not np.any(w) or ops.quad_norm(gv) <= cfg.rigid_tol * reference
        candidate = np.zeros_like(v) if rigid else v
        probes, perturbations = _solver_probes(ops, candidate, cfg, reference)
        scale = _vi_scale(forms, candidate, perturbations)
        vi = max(forms.residual(candidate, z) for z in probes) / scale
        if vi <= cfg.tol_vi:
            if rigid:
                w = np.zeros_like(w)
                m = clip_to_yield(m, g_eff)
            logger.info(
                "Bingham solve converged in %d iterations (residual %.2e, rigid=%s)",
                iteration,
                residual_history[-1],
                rigid,
            )
            return BinghamState(
                ops,
                candidate,
                p - p.mean() if p.size else p,
                w,
                m,
                iterations=iteration,
                rigid=rigid,
                vi_residual=max(vi, 0.0),
                energy_history=energy_history,
                residual_history=residual_history,
            )
        if iteration % cfg.check_every == 0:
            logger.debug("probe residual %.3e above %.1e at iteration %d", vi, cfg.tol_vi, iteration)
    raise NonConvergence(
        f"Bingham solve did not converge in {cfg.max_outer} iterations",
        cfg.max_outer,
        residual_history[-1] if residual_history else float("nan"),
        residual_history,
    )
