"""Two-level periodic cell geometries and the doubly perforated domain.

A :class:`CellGeometry` holds the cell ``Y`` with its obstacles ``Y_s`` and the
cell ``Z`` with its obstacles ``Z_s``. ``Y`` is tiled by ``subdivision`` copies
of ``delta * Z``. A :class:`DoublePeriodicDomain` tiles the box ``Omega`` with
``epsilon * Y`` cells; its fluid part is the product of the two fluid
indicators.

Example:
    >>> from porous_bingham.geometry import default_geometry, build_cell_masks
    >>> geom = default_geometry()
    >>> y_star, z_star, y_fluid = build_cell_masks(geom, 8)
    >>> int(z_star.values.sum())
    48
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
from dataclasses import dataclass
from dataclasses import field
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Sequence
from typing import Tuple

# Import third-party modules
import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

# Import local modules
from porous_bingham.exceptions import DisconnectedFluid
from porous_bingham.exceptions import DomainNotCovered
from porous_bingham.exceptions import GeometryError
from porous_bingham.exceptions import ResolutionTooCoarse
from porous_bingham.filesystem import resolve_geometry_file
from porous_bingham.models import BoxModel
from porous_bingham.models import CellModel
from porous_bingham.models import CheckResult
from porous_bingham.models import GeometryModel
from porous_bingham.models import GeometryReport


ALIGN_TOL = 1e-9

Vector = Tuple[float, ...]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``corner + [0, extents]``."""

    corner: Vector
    extents: Vector

    def __post_init__(self) -> None:
        object.__setattr__(self, "corner", tuple(float(c) for c in self.corner))
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        if len(self.corner) != len(self.extents):
            raise GeometryError(f"Box corner {self.corner} and extents {self.extents} differ in dimension")
        if any(e <= 0 for e in self.extents):
            raise GeometryError(f"Box extents must be positive, got {self.extents}")

    @property
    def upper(self) -> Vector:
        return tuple(c + e for c, e in zip(self.corner, self.extents))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def scaled(self, factor: float, offset: Sequence[float] | None = None) -> Box:
        offset = offset if offset is not None else (0.0,) * len(self.corner)
        return Box(
            tuple(o + factor * c for o, c in zip(offset, self.corner)),
            tuple(factor * e for e in self.extents),
        )

    def overlap_volume(self, other: Box) -> float:
        volume = 1.0
        for lo_a, hi_a, lo_b, hi_b in zip(self.corner, self.upper, other.corner, other.upper):
            width = min(hi_a, hi_b) - max(lo_a, lo_b)
            if width <= 0:
                return 0.0
            volume *= width
        return volume

    def contains(self, other: Box, tol: float = ALIGN_TOL) -> bool:
        return all(
            lo_a - tol <= lo_b and hi_b <= hi_a + tol
            for lo_a, hi_a, lo_b, hi_b in zip(self.corner, self.upper, other.corner, other.upper)
        )

    def to_dict(self) -> dict:
        return {"corner": list(self.corner), "extents": list(self.extents)}


@dataclass(frozen=True)
class RectCell:
    """Rectangular periodicity cell with box obstacles.

    Construction checks the invariants that make the cell usable: obstacles
    inside the open cell, pairwise disjoint, and a nonempty fluid part.
    """

    lengths: Vector
    obstacles: Tuple[Box, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for check in _cell_checks("cell", self):
            if not check.passed:
                raise GeometryError(f"{check.name}: {check.detail}")

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def solid_volume(self) -> float:
        return sum(box.volume for box in self.obstacles)

    @property
    def fluid_volume(self) -> float:
        return self.volume - self.solid_volume

    def to_dict(self) -> dict:
        return {"lengths": list(self.lengths), "obstacles": [box.to_dict() for box in self.obstacles]}


@dataclass(frozen=True)
class CellGeometry:
    """The pair of reference cells ``(Y, Y_s)`` and ``(Z, Z_s)``.

    Covering and intersection rules are not enforced here so that invalid
    inputs can still be reported by :func:`validate_geometry`.
    """

    y_cell: RectCell
    z_cell: RectCell
    subdivision: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "subdivision", tuple(int(s) for s in self.subdivision))
        if not (self.y_cell.dim == self.z_cell.dim == len(self.subdivision)):
            raise GeometryError("Y, Z and subdivision must share the same dimension")
        if any(s < 1 for s in self.subdivision):
            raise GeometryError(f"subdivision must be positive, got {self.subdivision}")

    @property
    def dim(self) -> int:
        return self.y_cell.dim

    @property
    def axis_deltas(self) -> Vector:
        return tuple(
            ly / (s * lz) for ly, s, lz in zip(self.y_cell.lengths, self.subdivision, self.z_cell.lengths)
        )

    @property
    def delta(self) -> float:
        return self.axis_deltas[0]

    @property
    def subcell_lengths(self) -> Vector:
        return tuple(ly / s for ly, s in zip(self.y_cell.lengths, self.subdivision))

    @property
    def fluid_fraction(self) -> float:
        """Closed-form ``|Y_f| / |Y|`` assuming the covering rule holds."""
        y_solid = self.y_cell.solid_volume / self.y_cell.volume
        z_solid = self.z_cell.solid_volume / self.z_cell.volume
        return 1.0 - y_solid - (1.0 - y_solid) * z_solid

    @property
    def filtration_factor(self) -> float:
        """``|Y*| |Z*| / (|Y| |Z|)``."""
        return (self.y_cell.fluid_volume / self.y_cell.volume) * (self.z_cell.fluid_volume / self.z_cell.volume)

    def refined(self, factor: int) -> CellGeometry:
        """Same Y and Z with ``factor`` times more subcells per axis (delta divided by ``factor``)."""
        if factor < 1:
            raise GeometryError(f"refinement factor must be positive, got {factor}")
        return CellGeometry(self.y_cell, self.z_cell, tuple(s * factor for s in self.subdivision))

    def to_dict(self) -> dict:
        return {
            "y_cell": self.y_cell.to_dict(),
            "z_cell": self.z_cell.to_dict(),
            "subdivision": list(self.subdivision),
        }

    @property
    def geometry_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class Mask:
    """Boolean fluid indicator on a regular cell grid (``True`` is fluid)."""

    values: np.ndarray
    spacing: Vector
    origin: Vector = field(default=(0.0, 0.0))

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=bool)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def fluid_count(self) -> int:
        return int(self.values.sum())

    @property
    def fluid_fraction(self) -> float:
        return self.fluid_count / self.values.size

    def n_components(self, periodic: Sequence[bool] = (False, False)) -> int:
        count, _ = label_components(self.values, periodic)
        return count

    def is_connected(self, periodic: Sequence[bool] = (False, False)) -> bool:
        return self.n_components(periodic) == 1


def label_components(values: np.ndarray, periodic: Sequence[bool] = (False, False)) -> Tuple[int, np.ndarray]:
    """Label 4-connected components of the ``True`` cells.

    Args:
        values: Boolean cell array
        periodic: Per-axis wrap-around flags

    Returns:
        Tuple of the component count and an integer label array (-1 on ``False`` cells).
    """
    values = np.asarray(values, dtype=bool)
    index = -np.ones(values.shape, dtype=np.int64)
    cells = np.flatnonzero(values)
    index.flat[cells] = np.arange(cells.size)
    if cells.size == 0:
        return 0, index
    rows = []
    cols = []
    for axis in range(values.ndim):
        if periodic[axis]:
            a = index
            b = np.roll(index, -1, axis=axis)
        else:
            a = np.delete(index, -1, axis=axis)
            b = np.delete(index, 0, axis=axis)
        link = (a >= 0) & (b >= 0)
        rows.append(a[link])
        cols.append(b[link])
    row = np.concatenate(rows)
    col = np.concatenate(cols)
    graph = sparse.coo_matrix((np.ones(row.size), (row, col)), shape=(cells.size, cells.size))
    count, labels = csgraph.connected_components(graph, directed=False)
    out = -np.ones(values.shape, dtype=np.int64)
    out.flat[cells] = labels
    return int(count), out


def _grid_index(coordinate: float, step: float, what: str) -> int:
    position = coordinate / step
    nearest = round(position)
    if abs(position - nearest) > ALIGN_TOL * max(1.0, abs(position)):
        raise ResolutionTooCoarse(f"{what} at {coordinate} is not on a grid line of step {step}")
    return int(nearest)


def rasterize(cell: RectCell, dims: Sequence[int]) -> Mask:
    """Rasterize a cell onto ``dims`` grid cells; obstacle edges must land on grid lines."""
    spacing = tuple(length / n for length, n in zip(cell.lengths, dims))
    values = np.ones(tuple(dims), dtype=bool)
    for number, box in enumerate(cell.obstacles):
        slices = []
        for axis, (lo, hi) in enumerate(zip(box.corner, box.upper)):
            start = _grid_index(lo, spacing[axis], f"obstacle {number} lower edge (axis {axis})")
            stop = _grid_index(hi, spacing[axis], f"obstacle {number} upper edge (axis {axis})")
            slices.append(slice(start, stop))
        values[tuple(slices)] = False
    return Mask(values, spacing)


def build_cell_masks(geom: CellGeometry, resolution: int) -> Tuple[Mask, Mask, Mask]:
    """Discretize ``Y*``, ``Z*`` and ``Y_f``.

    Args:
        geom: The cell geometry
        resolution: Grid points per Z-subcell edge (at least 4)

    Returns:
        The masks of ``Y*`` and ``Y_f`` on the same ``subdivision * resolution``
        grid, and the mask of ``Z*`` on a ``resolution`` grid.

    Raises:
        ResolutionTooCoarse: If the resolution is below 4 or an obstacle edge
            does not fall on a grid line.
    """
    if resolution < 4:
        raise ResolutionTooCoarse(f"resolution must be at least 4 grid points per subcell, got {resolution}")
    z_star = rasterize(geom.z_cell, (resolution,) * geom.dim)
    y_dims = tuple(s * resolution for s in geom.subdivision)
    y_star = rasterize(geom.y_cell, y_dims)
    y_fluid = Mask(y_star.values & np.tile(z_star.values, geom.subdivision), y_star.spacing)
    return y_star, z_star, y_fluid


@dataclass(frozen=True)
class DoublePeriodicDomain:
    """The box ``Omega`` tiled by ``epsilon Y`` cells, each tiled by ``epsilon delta Z`` subcells."""

    omega: Box
    epsilon: float
    geometry: CellGeometry
    grid_per_subcell: int

    def __post_init__(self) -> None:
        eps_delta = self.epsilon * self.geometry.delta
        if not (0 < eps_delta < self.epsilon < 1):
            raise GeometryError(
                f"scales must satisfy 0 < epsilon*delta < epsilon < 1, got epsilon={self.epsilon}, "
                f"delta={self.geometry.delta}",
            )
        for axis, (extent, length) in enumerate(zip(self.omega.extents, self.geometry.y_cell.lengths)):
            cells = extent / (self.epsilon * length)
            if abs(cells - round(cells)) > ALIGN_TOL * max(1.0, cells) or round(cells) < 1:
                raise DomainNotCovered(
                    f"Omega extent {extent} on axis {axis} is not a whole number of epsilon cells "
                    f"({cells:.6g})",
                )
        if self.grid_per_subcell < 1:
            raise GeometryError("grid_per_subcell must be positive")

    @property
    def delta(self) -> float:
        return self.geometry.delta

    @property
    def eps_delta(self) -> float:
        return self.epsilon * self.geometry.delta

    @property
    def cells(self) -> Tuple[int, ...]:
        """Number of epsilon cells per axis."""
        return tuple(
            int(round(extent / (self.epsilon * length)))
            for extent, length in zip(self.omega.extents, self.geometry.y_cell.lengths)
        )

    @property
    def micro_dims(self) -> Tuple[int, ...]:
        """Grid cells per epsilon cell."""
        return tuple(s * self.grid_per_subcell for s in self.geometry.subdivision)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(n * m for n, m in zip(self.cells, self.micro_dims))

    @property
    def spacing(self) -> Vector:
        return tuple(
            self.eps_delta * lz / self.grid_per_subcell for lz in self.geometry.z_cell.lengths
        )

    def with_epsilon(self, epsilon: float, geometry: CellGeometry | None = None) -> DoublePeriodicDomain:
        return DoublePeriodicDomain(self.omega, epsilon, geometry or self.geometry, self.grid_per_subcell)


def build_domain_mask(dom: DoublePeriodicDomain) -> Mask:
    """Fluid indicator of ``Omega_{eps delta}`` on the domain grid.

    Raises:
        ResolutionTooCoarse: If ``grid_per_subcell`` is below 4.
        DisconnectedFluid: If the fluid region is not connected.
    """
    logger = logging.getLogger(__name__)
    _, _, y_fluid = build_cell_masks(dom.geometry, dom.grid_per_subcell)
    values = np.tile(y_fluid.values, dom.cells)
    mask = Mask(values, dom.spacing, dom.omega.corner)
    count = mask.n_components()
    if count != 1:
        raise DisconnectedFluid(f"fluid region of Omega has {count} connected components")
    logger.debug("Domain mask %s with fluid fraction %.6f", mask.shape, mask.fluid_fraction)
    return mask


def _cell_checks(prefix: str, cell: RectCell) -> list[CheckResult]:
    checks = []
    inside = CheckResult(name=f"{prefix}.inside", passed=True)
    for number, box in enumerate(cell.obstacles):
        if len(box.corner) != len(cell.lengths):
            inside = CheckResult(name=inside.name, passed=False, detail=f"obstacle {number} has wrong dimension")
            break
        if any(lo <= 0 or hi >= length for lo, hi, length in zip(box.corner, box.upper, cell.lengths)):
            inside = CheckResult(
                name=inside.name,
                passed=False,
                detail=f"obstacle {number} {box.to_dict()} is not inside the open cell {list(cell.lengths)}",
            )
            break
    checks.append(inside)

    disjoint = CheckResult(name=f"{prefix}.disjoint", passed=True)
    for a in range(len(cell.obstacles)):
        for b in range(a + 1, len(cell.obstacles)):
            if cell.obstacles[a].overlap_volume(cell.obstacles[b]) > 0:
                disjoint = CheckResult(name=disjoint.name, passed=False, detail=f"obstacles {a} and {b} overlap")
                break
        if not disjoint.passed:
            break
    checks.append(disjoint)

    solid = sum(box.volume for box in cell.obstacles)
    volume = float(np.prod(cell.lengths))
    checks.append(
        CheckResult(
            name=f"{prefix}.fluid_nonempty",
            passed=solid < volume,
            measured=volume - solid,
            detail="" if solid < volume else "obstacles fill the cell",
        ),
    )
    return checks


def _lattice_boxes(geom: CellGeometry) -> list[Tuple[Tuple[int, ...], Box]]:
    """Every copy ``delta (l + Z_s)`` inside ``Y`` with its lattice index."""
    sub_lengths = geom.subcell_lengths
    factor = geom.delta
    copies = []
    for index in np.ndindex(*geom.subdivision):
        offset = tuple(i * length for i, length in zip(index, sub_lengths))
        for box in geom.z_cell.obstacles:
            copies.append((tuple(int(i) for i in index), box.scaled(factor, offset)))
    return copies


def validate_geometry(geom: CellGeometry) -> GeometryReport:
    """Check every invariant of a cell geometry.

    Never raises for a violated invariant; each failure is recorded with the
    first offending box.

    Args:
        geom: The cell geometry to check

    Returns:
        GeometryReport: One check per invariant
    """
    report = GeometryReport()
    report.checks.extend(_cell_checks("y_cell", geom.y_cell))
    report.checks.extend(_cell_checks("z_cell", geom.z_cell))

    deltas = geom.axis_deltas
    spread = max(deltas) - min(deltas)
    report.checks.append(
        CheckResult(
            name="delta_consistency",
            passed=spread <= 1e-12 * max(deltas),
            measured=spread,
            tolerance=1e-12 * max(deltas),
            detail=f"per-axis delta {list(deltas)}",
        ),
    )

    covering = CheckResult(name="covering", passed=True)
    for number, box in enumerate(geom.y_cell.obstacles):
        for axis, (lo, hi) in enumerate(zip(box.corner, box.upper)):
            step = geom.subcell_lengths[axis]
            aligned = all(
                abs(v / step - round(v / step)) <= ALIGN_TOL * max(1.0, abs(v / step)) for v in (lo, hi)
            )
            if not aligned:
                covering = CheckResult(
                    name="covering",
                    passed=False,
                    detail=f"Y_s box {number} {box.to_dict()} is not a union of delta-Z subcells (axis {axis})",
                )
                break
        if not covering.passed:
            break
    report.checks.append(covering)

    intersection = CheckResult(name="intersection", passed=True)
    for number, box in enumerate(geom.y_cell.obstacles):
        for index, copy in _lattice_boxes(geom):
            overlap = box.overlap_volume(copy)
            if overlap > 0 and not box.contains(copy):
                intersection = CheckResult(
                    name="intersection",
                    passed=False,
                    measured=overlap,
                    detail=f"Y_s box {number} {box.to_dict()} cuts the Z_s copy in subcell {list(index)}",
                )
                break
        if not intersection.passed:
            break
    report.checks.append(intersection)
    return report


def require_valid(geom: CellGeometry) -> CellGeometry:
    """Raise :class:`GeometryError` naming the first failed invariant."""
    report = validate_geometry(geom)
    for check in report.checks:
        if not check.passed:
            raise GeometryError(f"geometry check {check.name} failed: {check.detail}")
    return geom


def _box(model: BoxModel) -> Box:
    return Box(tuple(model.corner), tuple(model.extents))


def _cell(model: CellModel) -> RectCell:
    return RectCell(tuple(model.lengths), tuple(_box(b) for b in model.obstacles))


def geometry_from_model(model: GeometryModel) -> CellGeometry:
    return CellGeometry(_cell(model.y_cell), _cell(model.z_cell), tuple(model.subdivision))


def domain_from_model(
    model: GeometryModel,
    epsilon: float | None = None,
    grid_per_subcell: int | None = None,
) -> DoublePeriodicDomain:
    return DoublePeriodicDomain(
        _box(model.omega),
        model.epsilon if epsilon is None else epsilon,
        geometry_from_model(model),
        model.grid_per_subcell if grid_per_subcell is None else grid_per_subcell,
    )


def load_geometry(name: str | Path) -> GeometryModel:
    """Geometry model from a file path or a shipped geometry name."""
    return GeometryModel.from_file(resolve_geometry_file(str(name)))


def default_geometry() -> CellGeometry:
    """Unit Y with a 4x4 subdivision, Y_s the central 2x2 subcells, Z_s the box [0.25, 0.75]^2."""
    central = Box((0.25, 0.25), (0.5, 0.5))
    return CellGeometry(RectCell((1.0, 1.0), (central,)), RectCell((1.0, 1.0), (central,)), (4, 4))


def level_domain(
    base: DoublePeriodicDomain,
    epsilon: float,
    delta_mode: str = "fixed",
) -> DoublePeriodicDomain:
    """Domain at scale ``epsilon`` derived from ``base``.

    ``fixed`` keeps delta; ``proportional`` refines the subdivision so that
    delta shrinks by the same factor as epsilon.
    """
    if delta_mode == "fixed":
        return base.with_epsilon(epsilon)
    if delta_mode != "proportional":
        raise GeometryError(f"unknown delta mode {delta_mode!r}")
    ratio = base.epsilon / epsilon
    factor = int(round(ratio))
    if factor < 1 or not math.isclose(ratio, factor, rel_tol=1e-12):
        raise GeometryError(f"epsilon {epsilon} is not a dyadic refinement of {base.epsilon}")
    return base.with_epsilon(epsilon, base.geometry.refined(factor))
