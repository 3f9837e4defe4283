"""Discrete periodic unfolding at the two scales of the medium.

On nested grids unfolding is an exact relabeling of grid values: a field on
the domain grid becomes an array indexed by the epsilon cell ``k`` and the
grid point inside it (``T_eps``), and the cell-local part can be split once
more into the delta subcell and the point inside it (``T_delta``). No value is
interpolated, so every unfolding identity holds to rounding.

Example:
    >>> import numpy as np
    >>> from porous_bingham.geometry import DoublePeriodicDomain, Box, default_geometry
    >>> from porous_bingham.fields import ScalarField, StaggeredGrid
    >>> dom = DoublePeriodicDomain(Box((0.0, 0.0), (1.0, 1.0)), 0.5, default_geometry(), 4)
    >>> f = ScalarField(StaggeredGrid(dom.dims, dom.spacing), np.ones(dom.dims))
    >>> unfold_eps(f, dom).values.shape
    (2, 2, 16, 16)
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from dataclasses import dataclass
import logging
from typing import Literal
from typing import Tuple

# Import third-party modules
import numpy as np

# Import local modules
from porous_bingham.exceptions import GridNotNested
from porous_bingham.exceptions import ShapeMismatch
from porous_bingham.fields import ScalarField
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import VectorField
from porous_bingham.fields import center_values
from porous_bingham.geometry import ALIGN_TOL
from porous_bingham.geometry import DoublePeriodicDomain
from porous_bingham.models import GradientIdentityReport


@dataclass
class UnfoldedField:
    """Values of an unfolded field.

    Attributes:
        values: ``(n1, n2, m1, m2, ...)`` at level ``Y`` or
            ``(n1, n2, s1, s2, r1, r2, ...)`` at level ``YZ``; trailing axes
            hold vector components
        lambda_region: Epsilon cells not contained in the domain (values zero there)
        level: ``Y`` after one unfolding, ``YZ`` after two
        epsilon: Scale of the Y cells
        delta: Scale of the Z cells inside Y
        y_lengths: Edge lengths of Y
        subdivision: Delta cells per Y edge
    """

    values: np.ndarray
    lambda_region: np.ndarray
    level: Literal["Y", "YZ"]
    epsilon: float
    delta: float
    y_lengths: Tuple[float, float]
    subdivision: Tuple[int, int]

    @property
    def macro_shape(self) -> Tuple[int, int]:
        return (self.values.shape[0], self.values.shape[1])

    @property
    def micro_shape(self) -> Tuple[int, ...]:
        """Grid points per Y cell (level ``Y``) or per Z cell (level ``YZ``)."""
        if self.level == "Y":
            return tuple(self.values.shape[2:4])
        return tuple(self.values.shape[4:6])

    @property
    def component_shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape[4:] if self.level == "Y" else self.values.shape[6:])

    @property
    def y_spacing(self) -> Tuple[float, float]:
        """Grid step in the Y variable."""
        dims = self.values.shape[2:4] if self.level == "Y" else tuple(
            s * r for s, r in zip(self.values.shape[2:4], self.values.shape[4:6])
        )
        return (self.y_lengths[0] / dims[0], self.y_lengths[1] / dims[1])

    @property
    def z_lengths(self) -> Tuple[float, float]:
        return tuple(length / (self.delta * s) for length, s in zip(self.y_lengths, self.subdivision))

    def with_values(self, values: np.ndarray) -> UnfoldedField:
        return UnfoldedField(
            values,
            self.lambda_region,
            self.level,
            self.epsilon,
            self.delta,
            self.y_lengths,
            self.subdivision,
        )


def _divisor(length: float, step: float, what: str) -> int:
    ratio = length / step
    nearest = round(ratio)
    if nearest < 1 or abs(ratio - nearest) > ALIGN_TOL * max(1.0, ratio):
        raise GridNotNested(f"grid step {step} does not subdivide the {what} of length {length}")
    return int(nearest)


def _grid_values(
    f: ScalarField | VectorField | np.ndarray,
    dom: DoublePeriodicDomain,
) -> Tuple[np.ndarray, StaggeredGrid]:
    if isinstance(f, ScalarField):
        return f.values, f.grid
    if isinstance(f, VectorField):
        return center_values(f), f.grid
    values = np.asarray(f, dtype=float)
    return values, StaggeredGrid(values.shape[:2], dom.spacing, origin=dom.omega.corner)


def unfold_eps(f: ScalarField | VectorField | np.ndarray, dom: DoublePeriodicDomain) -> UnfoldedField:
    """Unfold a domain field at scale epsilon.

    ``T_eps(f)(x, y) = f(eps [x/eps]_Y + eps y)``: each epsilon cell's grid
    values become the cell-local field. Cells only partly inside the grid form
    the region ``Lambda`` and are filled with zeros.

    Args:
        f: Scalar field, face velocity (unfolded at cell centers) or raw array
        dom: The domain providing epsilon and the Y lattice

    Returns:
        UnfoldedField: Level ``Y`` values

    Raises:
        GridNotNested: If the grid step does not divide the epsilon cell or the
            grid origin is off the lattice.
    """
    values, grid = _grid_values(f, dom)
    lengths = dom.geometry.y_cell.lengths
    micro = tuple(
        _divisor(dom.epsilon * length, h, f"epsilon cell along axis {axis}")
        for axis, (length, h) in enumerate(zip(lengths, grid.spacing))
    )
    for axis in range(2):
        shift = (grid.origin[axis] - dom.omega.corner[axis]) / (dom.epsilon * lengths[axis])
        if abs(shift - round(shift)) > ALIGN_TOL * max(1.0, abs(shift)):
            raise GridNotNested(f"grid origin {grid.origin} is not on the epsilon lattice")
    dims = values.shape[:2]
    full = tuple(n // m for n, m in zip(dims, micro))
    cells = tuple(n // m + (1 if n % m else 0) for n, m in zip(dims, micro))
    tail = values.shape[2:]
    out = np.zeros((*cells, *micro, *tail))
    cropped = values[: full[0] * micro[0], : full[1] * micro[1]]
    block = cropped.reshape(full[0], micro[0], full[1], micro[1], *tail)
    out[: full[0], : full[1]] = np.moveaxis(block, 2, 1)
    lambda_region = np.ones(cells, dtype=bool)
    lambda_region[: full[0], : full[1]] = False
    if lambda_region.any():
        logging.getLogger(__name__).debug("%d epsilon cells are only partly covered", int(lambda_region.sum()))
    return UnfoldedField(
        out,
        lambda_region,
        "Y",
        dom.epsilon,
        dom.delta,
        tuple(lengths),
        tuple(dom.geometry.subdivision),
    )


def unfold_delta(v: UnfoldedField) -> UnfoldedField:
    """Unfold the Y variable at scale delta, ``T_delta(v)(x, y, z) = v(x, delta [y/delta]_Z + delta z)``.

    Raises:
        GridNotNested: If the Y grid does not subdivide the delta cells.
    """
    if v.level != "Y":
        raise GridNotNested("only a level Y field can be unfolded at scale delta")
    n1, n2, m1, m2 = v.values.shape[:4]
    s1, s2 = v.subdivision
    if m1 % s1 or m2 % s2:
        raise GridNotNested(f"Y grid {(m1, m2)} does not subdivide {(s1, s2)} delta cells")
    r1, r2 = m1 // s1, m2 // s2
    tail = v.values.shape[4:]
    block = v.values.reshape(n1, n2, s1, r1, s2, r2, *tail)
    values = np.moveaxis(block, 4, 3)
    return UnfoldedField(
        np.ascontiguousarray(values),
        v.lambda_region,
        "YZ",
        v.epsilon,
        v.delta,
        v.y_lengths,
        v.subdivision,
    )


def mean_Z(w: UnfoldedField) -> UnfoldedField:
    """Average over Z; the result is a level ``Y`` field constant on each delta cell."""
    if w.level != "YZ":
        raise ShapeMismatch("mean over Z needs a level YZ field")
    mean = w.values.mean(axis=(4, 5))
    r1, r2 = w.micro_shape
    values = np.repeat(np.repeat(mean, r1, axis=2), r2, axis=3)
    return UnfoldedField(values, w.lambda_region, "Y", w.epsilon, w.delta, w.y_lengths, w.subdivision)


def mean_Y(v: UnfoldedField, origin: Tuple[float, float] = (0.0, 0.0)) -> ScalarField | np.ndarray:
    """Average over Y (and Z for level ``YZ`` fields), one value per epsilon cell.

    Returns:
        A ScalarField on the epsilon lattice for scalar data, otherwise an
        array with the component axes kept.
    """
    axes = (2, 3) if v.level == "Y" else (2, 3, 4, 5)
    mean = v.values.mean(axis=axes)
    if mean.ndim > 2:
        return mean
    grid = StaggeredGrid(mean.shape, (v.epsilon * v.y_lengths[0], v.epsilon * v.y_lengths[1]), origin=origin)
    return ScalarField(grid, mean)


def integrate_unfolded(w: UnfoldedField) -> float:
    """Midpoint integral over ``Omega x Y`` or ``Omega x Y x Z`` with the true measures."""
    macro = w.epsilon**2 * w.y_lengths[0] * w.y_lengths[1]
    if w.level == "Y":
        hy = w.y_spacing
        return float(w.values.sum() * macro * hy[0] * hy[1])
    z_lengths = w.z_lengths
    block = (w.delta * z_lengths[0]) * (w.delta * z_lengths[1])
    r1, r2 = w.micro_shape
    hz = (z_lengths[0] / r1, z_lengths[1] / r2)
    return float(w.values.sum() * macro * block * hz[0] * hz[1])


def check_integral_identity(f: ScalarField, dom: DoublePeriodicDomain) -> float:
    """``|int_Omega f - (1/(|Y||Z|)) int_{Omega x Y x Z} T_delta(T_eps(f))|``."""
    lhs = float(f.values.sum() * f.grid.cell_volume)
    unfolded = unfold_delta(unfold_eps(f, dom))
    rhs = integrate_unfolded(unfolded) / (dom.geometry.y_cell.volume * dom.geometry.z_cell.volume)
    return abs(lhs - rhs)


def _difference(values: np.ndarray, axis: int) -> np.ndarray:
    return np.diff(values, axis=axis)


def check_gradient_identities(
    phi: ScalarField,
    dom: DoublePeriodicDomain,
    tolerance: float = 1e-12,
) -> GradientIdentityReport:
    """Compare micro-scale gradients of unfolded fields with unfolded macro gradients.

    The first gap is between ``grad_y T_eps(phi)`` and ``eps T_eps(grad phi)``,
    the second between ``grad_z T_delta(T_eps(phi))`` and
    ``eps delta T_delta(T_eps(grad phi))``. Both use the grid differences that
    stay inside one cell of the respective lattice. Gaps are relative to the
    largest scaled gradient.
    """
    h = phi.grid.spacing
    v = unfold_eps(phi, dom)
    w = unfold_delta(v)
    hy = v.y_spacing
    z_lengths = w.z_lengths
    r1, r2 = w.micro_shape
    hz = (z_lengths[0] / r1, z_lengths[1] / r2)
    eps = dom.epsilon
    eps_delta = dom.eps_delta
    gap_y = 0.0
    gap_z = 0.0
    scale = 0.0
    for axis in range(2):
        grad_phi = _difference(phi.values, axis) / h[axis]
        # pad back to the grid so the relabeling of the difference matches that of the field
        padded = np.zeros(phi.values.shape)
        index = [slice(None), slice(None)]
        index[axis] = slice(0, phi.values.shape[axis] - 1)
        padded[tuple(index)] = grad_phi
        unfolded_grad = unfold_eps(ScalarField(phi.grid, padded), dom)

        micro_y = _difference(v.values, 2 + axis) / hy[axis]
        index = [slice(None)] * 4
        index[2 + axis] = slice(0, v.values.shape[2 + axis] - 1)
        reference_y = eps * unfolded_grad.values[tuple(index)]
        gap_y = max(gap_y, float(np.abs(micro_y - reference_y).max(initial=0.0)))

        micro_z = _difference(w.values, 4 + axis) / hz[axis]
        grad_w = unfold_delta(unfolded_grad).values
        index = [slice(None)] * 6
        index[4 + axis] = slice(0, w.values.shape[4 + axis] - 1)
        reference_z = eps_delta * grad_w[tuple(index)]
        gap_z = max(gap_z, float(np.abs(micro_z - reference_z).max(initial=0.0)))
        scale = max(scale, float(np.abs(reference_y).max(initial=0.0)), float(np.abs(reference_z).max(initial=0.0)))
    if scale > 0:
        gap_y /= scale
        gap_z /= scale
    return GradientIdentityReport(gap_y=gap_y, gap_z=gap_z, scale=scale, tolerance=tolerance)


def fold(v: UnfoldedField) -> np.ndarray:
    """Inverse of :func:`unfold_eps` on covered cells (level ``Y``) or of both unfoldings."""
    values = v.values
    if v.level == "YZ":
        values = np.moveaxis(values, 3, 4)
        n1, n2, s1, r1, s2, r2 = values.shape[:6]
        values = values.reshape(n1, n2, s1 * r1, s2 * r2, *values.shape[6:])
    n1, n2, m1, m2 = values.shape[:4]
    tail = values.shape[4:]
    return np.moveaxis(values, 1, 2).reshape(n1 * m1, n2 * m2, *tail)
