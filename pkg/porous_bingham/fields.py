"""Staggered-grid fields and the discrete calculus shared by every solver.

Pressure-like scalars live at cell centers, velocity components on the faces
normal to them (MAC layout) and tensors at cell centers. Along a periodic axis
a component has one face per cell (face ``i`` is the lower face of cell
``i``); along a bounded axis it has one extra face.

Example:
    >>> import numpy as np
    >>> from porous_bingham.fields import StaggeredGrid, VectorField, divergence
    >>> grid = StaggeredGrid((4, 4), (0.25, 0.25), (True, True))
    >>> u = VectorField(grid, (np.ones(grid.face_shape(0)), np.zeros(grid.face_shape(1))))
    >>> float(abs(divergence(u).values).max())
    0.0
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from dataclasses import dataclass
from dataclasses import field
from typing import Sequence
from typing import Tuple

# Import third-party modules
import numpy as np
from scipy import sparse

# Import local modules
from porous_bingham.exceptions import MissingMultiplier
from porous_bingham.exceptions import ShapeMismatch


@dataclass(frozen=True)
class StaggeredGrid:
    """Regular 2D grid with per-axis periodicity."""

    dims: Tuple[int, int]
    spacing: Tuple[float, float]
    periodic: Tuple[bool, bool] = (False, False)
    origin: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if len(self.dims) != 2 or len(self.spacing) != 2 or len(self.periodic) != 2:
            raise ShapeMismatch("staggered grids are two-dimensional")
        if any(h <= 0 for h in self.spacing):
            raise ShapeMismatch(f"spacing must be positive, got {self.spacing}")
        if any(n < 2 for n in self.dims):
            raise ShapeMismatch(f"at least two cells per axis are required, got {self.dims}")

    @property
    def cell_volume(self) -> float:
        return self.spacing[0] * self.spacing[1]

    @property
    def extents(self) -> Tuple[float, float]:
        return (self.dims[0] * self.spacing[0], self.dims[1] * self.spacing[1])

    def face_shape(self, axis: int) -> Tuple[int, int]:
        shape = list(self.dims)
        if not self.periodic[axis]:
            shape[axis] += 1
        return (shape[0], shape[1])

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        x = self.origin[0] + (np.arange(self.dims[0]) + 0.5) * self.spacing[0]
        y = self.origin[1] + (np.arange(self.dims[1]) + 0.5) * self.spacing[1]
        return np.meshgrid(x, y, indexing="ij")

    def face_centers(self, axis: int) -> Tuple[np.ndarray, np.ndarray]:
        shape = self.face_shape(axis)
        coords = []
        for a in range(2):
            offset = 0.0 if a == axis else 0.5
            coords.append(self.origin[a] + (np.arange(shape[a]) + offset) * self.spacing[a])
        return np.meshgrid(coords[0], coords[1], indexing="ij")


@dataclass
class ScalarField:
    """Cell-centered scalar values."""

    grid: StaggeredGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.dims:
            raise ShapeMismatch(f"scalar field shape {self.values.shape} does not match grid {self.grid.dims}")


@dataclass
class VectorField:
    """Face-normal velocity components.

    Attributes:
        grid: The staggered grid
        components: The x-face and y-face arrays
        mask: Optional open-face indicators, one per component
        zero_extended: If set, closed faces are forced to zero
    """

    grid: StaggeredGrid
    components: Tuple[np.ndarray, np.ndarray]
    mask: Tuple[np.ndarray, np.ndarray] | None = None
    zero_extended: bool = False

    def __post_init__(self) -> None:
        comps = tuple(np.array(c, dtype=float) for c in self.components)
        for axis, comp in enumerate(comps):
            if comp.shape != self.grid.face_shape(axis):
                raise ShapeMismatch(
                    f"component {axis} has shape {comp.shape}, expected {self.grid.face_shape(axis)}",
                )
        if self.mask is not None:
            self.mask = tuple(np.asarray(m, dtype=bool) for m in self.mask)
            for axis, m in enumerate(self.mask):
                if m.shape != comps[axis].shape:
                    raise ShapeMismatch(f"face mask {axis} has shape {m.shape}")
            if self.zero_extended:
                comps = tuple(np.where(m, c, 0.0) for m, c in zip(self.mask, comps))
        self.components = (comps[0], comps[1])

    @property
    def ux(self) -> np.ndarray:
        return self.components[0]

    @property
    def uy(self) -> np.ndarray:
        return self.components[1]

    def scaled(self, factor: float) -> VectorField:
        return VectorField(self.grid, tuple(factor * c for c in self.components), self.mask, self.zero_extended)


@dataclass
class TensorField:
    """Cell-centered 2x2 tensors, ``values[i, j, a, b]``."""

    grid: StaggeredGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (*self.grid.dims, 2, 2):
            raise ShapeMismatch(f"tensor field shape {self.values.shape} does not match grid {self.grid.dims}")

    def sym(self) -> TensorField:
        return TensorField(self.grid, 0.5 * (self.values + np.swapaxes(self.values, -1, -2)))


@dataclass
class StressDiagnostics:
    """Bingham stress diagnostics at cell centers."""

    deviatoric: TensorField
    second_invariant: ScalarField
    strain_invariant: ScalarField
    rigid: np.ndarray
    total: TensorField
    strain: TensorField = field(repr=False)


def _check_grid(a: StaggeredGrid, b: StaggeredGrid) -> None:
    if a.dims != b.dims or a.periodic != b.periodic or not np.allclose(a.spacing, b.spacing):
        raise ShapeMismatch(f"incompatible grids {a} and {b}")


def _forward_difference(values: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return np.roll(values, -1, axis=axis) - values
    return np.diff(values, axis=axis)


def divergence(u: VectorField) -> ScalarField:
    """Conservative divergence at cell centers."""
    grid = u.grid
    div = np.zeros(grid.dims)
    for axis in range(2):
        div += _forward_difference(u.components[axis], axis, grid.periodic[axis]) / grid.spacing[axis]
    return ScalarField(grid, div)


def gradient(p: ScalarField) -> VectorField:
    """Face gradient of a cell-centered scalar, the negative adjoint of :func:`divergence`.

    Boundary faces of bounded axes carry zero.
    """
    grid = p.grid
    comps = []
    for axis in range(2):
        h = grid.spacing[axis]
        if grid.periodic[axis]:
            comps.append((p.values - np.roll(p.values, 1, axis=axis)) / h)
        else:
            g = np.zeros(grid.face_shape(axis))
            interior = [slice(None), slice(None)]
            interior[axis] = slice(1, grid.dims[axis])
            g[tuple(interior)] = np.diff(p.values, axis=axis) / h
            comps.append(g)
    return VectorField(grid, (comps[0], comps[1]))


def center_values(u: VectorField) -> np.ndarray:
    """Velocity interpolated to cell centers, shape ``dims + (2,)``."""
    grid = u.grid
    out = np.zeros((*grid.dims, 2))
    for axis in range(2):
        comp = u.components[axis]
        if grid.periodic[axis]:
            out[..., axis] = 0.5 * (comp + np.roll(comp, -1, axis=axis))
        else:
            lower = [slice(None), slice(None)]
            upper = [slice(None), slice(None)]
            lower[axis] = slice(0, grid.dims[axis])
            upper[axis] = slice(1, grid.dims[axis] + 1)
            out[..., axis] = 0.5 * (comp[tuple(lower)] + comp[tuple(upper)])
    return out


def _center_derivative(values: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)
    edge_order = 2 if values.shape[axis] >= 3 else 1
    return np.gradient(values, h, axis=axis, edge_order=edge_order)


def velocity_gradient(u: VectorField) -> TensorField:
    """Cell-centered ``grad u`` with ``values[..., i, j] = d u_i / d x_j``."""
    grid = u.grid
    centers = center_values(u)
    out = np.zeros((*grid.dims, 2, 2))
    for i in range(2):
        for j in range(2):
            out[..., i, j] = _center_derivative(centers[..., i], j, grid.spacing[j], grid.periodic[j])
    return TensorField(grid, out)


def strain(u: VectorField) -> TensorField:
    """Symmetric part of the velocity gradient."""
    return velocity_gradient(u).sym()


def second_invariant(tensor: TensorField) -> ScalarField:
    """``0.5 * sum_ij T_ij T_ij``."""
    return ScalarField(tensor.grid, 0.5 * np.sum(tensor.values**2, axis=(-2, -1)))


def stress(
    u: VectorField,
    p: ScalarField,
    g_eff: float,
    mu_eff: float,
    multiplier: TensorField | np.ndarray | None = None,
    rigid: np.ndarray | None = None,
    velocity_gradient_field: TensorField | None = None,
    fluid: np.ndarray | None = None,
    tol: float = 1e-12,
) -> StressDiagnostics:
    """Bingham deviatoric stress from the constitutive law.

    Where the strain invariant exceeds ``tol`` (relative to its maximum) the
    stress is ``g_eff D / sqrt(D_II) + mu_eff D``. Elsewhere the stress is
    read from the symmetric part of ``multiplier`` and the cell is flagged
    rigid.

    Args:
        u: Velocity
        p: Pressure, used for the total stress
        g_eff: Scaled yield stress
        mu_eff: Scaled viscosity
        multiplier: Augmented-Lagrangian multiplier per cell
        rigid: Cells known to be rigid (for example from the solver)
        velocity_gradient_field: Gradient to use instead of recomputing it from ``u``
        fluid: Cells to report on; others get zero stress
        tol: Relative threshold on ``D_II``

    Returns:
        StressDiagnostics: Stress, invariants and the rigid flags

    Raises:
        MissingMultiplier: If rigid fluid cells exist and no multiplier was given.
    """
    grid = u.grid
    _check_grid(grid, p.grid)
    grad = velocity_gradient_field if velocity_gradient_field is not None else velocity_gradient(u)
    d = grad.sym().values
    d_ii = 0.5 * np.sum(d**2, axis=(-2, -1))
    fluid = np.ones(grid.dims, dtype=bool) if fluid is None else np.asarray(fluid, dtype=bool)
    scale = float(d_ii[fluid].max()) if fluid.any() else 0.0
    flagged = d_ii <= tol * scale
    if rigid is not None:
        flagged = flagged | np.asarray(rigid, dtype=bool)
    flagged &= fluid

    sigma = np.zeros_like(d)
    flowing = fluid & ~flagged
    root = np.sqrt(d_ii[flowing])
    sigma[flowing] = (g_eff / root)[:, None, None] * d[flowing] + mu_eff * d[flowing]
    if flagged.any():
        if multiplier is None:
            raise MissingMultiplier(f"{int(flagged.sum())} rigid cells need a multiplier to report their stress")
        m = multiplier.values if isinstance(multiplier, TensorField) else np.asarray(multiplier, dtype=float)
        if m.shape != d.shape:
            raise ShapeMismatch(f"multiplier shape {m.shape} does not match {d.shape}")
        m_sym = 0.5 * (m + np.swapaxes(m, -1, -2))
        sigma[flagged] = m_sym[flagged]
    sigma_ii = 0.5 * np.sum(sigma**2, axis=(-2, -1))
    total = sigma - p.values[..., None, None] * np.eye(2)
    total[~fluid] = 0.0
    return StressDiagnostics(
        deviatoric=TensorField(grid, sigma),
        second_invariant=ScalarField(grid, sigma_ii),
        strain_invariant=ScalarField(grid, d_ii),
        rigid=flagged,
        total=TensorField(grid, total),
        strain=TensorField(grid, d),
    )


def integrate(f: ScalarField, mask: np.ndarray | None = None) -> float:
    """Midpoint quadrature of ``f`` over the (masked) grid."""
    values = f.values if mask is None else np.where(np.asarray(mask, dtype=bool), f.values, 0.0)
    if mask is not None and np.shape(mask) != f.grid.dims:
        raise ShapeMismatch(f"mask shape {np.shape(mask)} does not match grid {f.grid.dims}")
    return float(values.sum() * f.grid.cell_volume)


def l2_norm(f: ScalarField | VectorField, mask: np.ndarray | None = None) -> float:
    """Discrete L2 norm; vector fields use the face quadrature."""
    if isinstance(f, VectorField):
        total = sum(float(np.sum(c**2)) for c in f.components)
        return float(np.sqrt(total * f.grid.cell_volume))
    return float(np.sqrt(integrate(ScalarField(f.grid, f.values**2), mask)))


def block_mean(values: np.ndarray, block: Sequence[int]) -> np.ndarray:
    """Mean over non-overlapping ``block``-sized tiles of the two leading axes."""
    values = np.asarray(values, dtype=float)
    n1, n2 = values.shape[:2]
    b1, b2 = (int(b) for b in block)
    if b1 < 1 or b2 < 1 or n1 % b1 or n2 % b2:
        raise ShapeMismatch(f"shape {values.shape[:2]} is not divisible into blocks {tuple(block)}")
    tail = values.shape[2:]
    reshaped = values.reshape(n1 // b1, b1, n2 // b2, b2, *tail)
    return reshaped.mean(axis=(1, 3))


def cell_average(f: ScalarField, block: Sequence[int]) -> ScalarField:
    """Average ``f`` over aligned cells of ``block`` grid cells."""
    coarse = block_mean(f.values, block)
    grid = StaggeredGrid(
        coarse.shape,
        (f.grid.spacing[0] * block[0], f.grid.spacing[1] * block[1]),
        f.grid.periodic,
        f.grid.origin,
    )
    return ScalarField(grid, coarse)


def lookup(array: np.ndarray, i: np.ndarray, j: np.ndarray, periodic: Sequence[bool], fill: float | int) -> np.ndarray:
    """Read ``array[i, j]`` with wrap-around on periodic axes and ``fill`` outside bounded ones."""
    i = np.asarray(i)
    j = np.asarray(j)
    ok = np.ones(np.broadcast(i, j).shape, dtype=bool)
    idx = []
    for axis, k in enumerate((i, j)):
        k = np.broadcast_to(k, ok.shape)
        n = array.shape[axis]
        if periodic[axis]:
            k = np.mod(k, n)
        else:
            ok &= (k >= 0) & (k < n)
            k = np.clip(k, 0, n - 1)
        idx.append(k)
    out = np.full(ok.shape, fill, dtype=array.dtype)
    out[ok] = array[idx[0][ok], idx[1][ok]]
    return out


@dataclass
class FaceGradient:
    """Full cell-to-face gradient on the open faces of a fluid mask.

    Rows are interleaved: row ``2e + c`` is component ``c`` at face ``e``.
    """

    matrix: sparse.csr_matrix
    axis: np.ndarray
    index: np.ndarray
    cell_index: np.ndarray
    weight: float

    @property
    def n_faces(self) -> int:
        return int(self.axis.size)

    @property
    def n_cells(self) -> int:
        return int(self.cell_index.max() + 1) if self.cell_index.size else 0

    def normals(self) -> np.ndarray:
        out = np.zeros((self.n_faces, 2))
        out[np.arange(self.n_faces), self.axis] = 1.0
        return out


def face_gradient_matrix(
    fluid: np.ndarray,
    spacing: Sequence[float],
    periodic: Sequence[bool],
) -> FaceGradient:
    """Assemble the full gradient of a cell-centered scalar at every open face.

    A face is open when both adjacent cells are fluid. The normal component is
    the two-point difference across the face; the tangential component is the
    mean of the perpendicular differences on the open faces touching the two
    adjacent cells.

    Args:
        fluid: Boolean fluid cells
        spacing: Grid steps
        periodic: Per-axis periodicity

    Returns:
        FaceGradient: Matrix and face bookkeeping; the quadrature weight per
        face is ``hx * hy / 2``.
    """
    fluid = np.asarray(fluid, dtype=bool)
    nx, ny = fluid.shape
    hx, hy = (float(h) for h in spacing)
    cell_index = -np.ones(fluid.shape, dtype=np.int64)
    cells = np.flatnonzero(fluid)
    cell_index.flat[cells] = np.arange(cells.size)

    faces = []
    for axis in range(2):
        shape = [nx, ny]
        if not periodic[axis]:
            shape[axis] += 1
        fi, fj = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
        di, dj = (1, 0) if axis == 0 else (0, 1)
        lower = lookup(cell_index, fi - di, fj - dj, periodic, -1)
        upper = lookup(cell_index, fi, fj, periodic, -1)
        is_open = (lower >= 0) & (upper >= 0)
        faces.append((fi[is_open], fj[is_open], lower[is_open], upper[is_open]))

    n_x = faces[0][0].size
    axis_of = np.concatenate([np.zeros(n_x, dtype=np.int64), np.ones(faces[1][0].size, dtype=np.int64)])
    index = np.concatenate(
        [np.stack([faces[0][0], faces[0][1]], axis=1), np.stack([faces[1][0], faces[1][1]], axis=1)],
    )
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    def add(r: np.ndarray, c: np.ndarray, v: np.ndarray | float) -> None:
        v = np.broadcast_to(np.asarray(v, dtype=float), r.shape)
        keep = c >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(v[keep])

    # normal parts
    offset = 0
    for axis, h in ((0, hx), (1, hy)):
        fi, fj, lower, upper = faces[axis]
        e = offset + np.arange(fi.size)
        add(2 * e + axis, upper, 1.0 / h)
        add(2 * e + axis, lower, -1.0 / h)
        offset += fi.size

    # tangential parts: perpendicular open faces touching the two adjacent cells
    open_lookup = []
    for axis in range(2):
        shape = [nx, ny]
        if not periodic[axis]:
            shape[axis] += 1
        table = -np.ones(shape, dtype=np.int64)
        fi, fj, _, _ = faces[axis]
        table[fi, fj] = np.arange(fi.size)
        open_lookup.append(table)

    offset = 0
    for axis in range(2):
        other = 1 - axis
        h_other = hy if axis == 0 else hx
        fi, fj, _, _ = faces[axis]
        e = offset + np.arange(fi.size)
        if axis == 0:
            candidates = [(fi - 1, fj), (fi - 1, fj + 1), (fi, fj), (fi, fj + 1)]
        else:
            candidates = [(fi, fj - 1), (fi + 1, fj - 1), (fi, fj), (fi + 1, fj)]
        ids = [lookup(open_lookup[other], ci, cj, periodic, -1) for ci, cj in candidates]
        count = sum((k >= 0).astype(float) for k in ids)
        safe = np.where(count > 0, count, 1.0)
        ofi, ofj, olower, oupper = faces[other]
        for k in ids:
            valid = k >= 0
            kk = np.where(valid, k, 0)
            upper_cell = np.where(valid, oupper[kk] if oupper.size else -1, -1)
            lower_cell = np.where(valid, olower[kk] if olower.size else -1, -1)
            add(2 * e + other, upper_cell, 1.0 / (h_other * safe))
            add(2 * e + other, lower_cell, -1.0 / (h_other * safe))
        offset += fi.size

    n_faces = axis_of.size
    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * n_faces, cells.size),
    ).tocsr()
    return FaceGradient(matrix, axis_of, index, cell_index, 0.5 * hx * hy)
