"""Deterministic result files.

Every float is written with 17 significant digits and JSON documents are
written with sorted keys, so identical inputs produce byte-identical files.

Example:
    >>> import numpy as np
    >>> from porous_bingham.export import write_csv, read_csv
    >>> path = write_csv("out/table.csv", ["a", "b"], np.array([[1.0, 2.0]]))
    >>> read_csv(path)[1].tolist()
    [[1.0, 2.0]]
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
import json
import logging
from pathlib import Path
from typing import Any
from typing import Dict
from typing import List
from typing import Mapping
from typing import Sequence
from typing import Tuple
from typing import Union

# Import third-party modules
from jinja2 import Environment
from jinja2 import FileSystemLoader
from jinja2 import StrictUndefined
import numpy as np
from pydantic import BaseModel

# Import local modules
from porous_bingham.__version__ import __version__
from porous_bingham.exceptions import IOFailure
from porous_bingham.fields import ScalarField
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import VectorField
from porous_bingham.geometry import Mask
from porous_bingham.models import ConvergenceReport
from porous_bingham.models import PropertyReport
from porous_bingham.models import RunManifest
from porous_bingham.unfolding import UnfoldedField


GRID_FORMAT_VERSION = 1
FLOAT_FORMAT = "%.17g"

Exportable = Union[ScalarField, VectorField, BaseModel, Mapping[str, Any]]


def f17(value: Any) -> str:
    """Format a number with 17 significant digits; ``None`` becomes ``-``."""
    if value is None:
        return "-"
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "{:.17g}".format(float(value))


def get_template_path() -> Path:
    return Path(__file__).parent / "templates"


def _environment() -> Environment:
    env = Environment(
        loader=FileSystemLoader(str(get_template_path())),
        undefined=StrictUndefined,
        keep_trailing_newline=True,
        trim_blocks=False,
    )
    env.filters["f17"] = f17
    return env


def _write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise IOFailure(f"cannot write {path}: {e}") from e
    logging.getLogger(__name__).debug("Wrote %s", path)
    return path


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IOFailure(f"cannot read {path}: {e}") from e


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: np.ndarray | Sequence[Sequence[Any]],
    fmt: str | Sequence[str] = FLOAT_FORMAT,
) -> Path:
    """Write a table with a header line; numbers get 17 significant digits by default.

    Args:
        path: Output file
        header: Column names
        rows: Table rows; mixed rows need one ``fmt`` entry per column
        fmt: ``np.savetxt`` format, shared or per column

    Raises:
        ValueError: If the rows do not have one value per header column.
        IOFailure: If the file cannot be written.
    """
    table = rows if isinstance(rows, np.ndarray) else np.array(rows, dtype=float if isinstance(fmt, str) else object)
    if table.size == 0:
        table = table.reshape(0, len(header))
    if table.ndim != 2 or table.shape[1] != len(header):
        raise ValueError(f"{len(header)} columns in the header but rows of shape {table.shape[1:]}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            np.savetxt(f, table, fmt=fmt, delimiter=",", header=",".join(header), comments="")
    except OSError as e:
        raise IOFailure(f"cannot write {path}: {e}") from e
    logging.getLogger(__name__).debug("Wrote %s", path)
    return path


def read_csv(path: str | Path) -> Tuple[List[str], np.ndarray]:
    """Read a numeric table written by :func:`write_csv`.

    Raises:
        IOFailure: If the file cannot be read or parsed.
    """
    lines = _read_text(path).splitlines()
    if not lines:
        raise IOFailure(f"{path} is empty")
    header = lines[0].split(",")
    body = [line for line in lines[1:] if line]
    if not body:
        return header, np.zeros((0, len(header)))
    try:
        rows = np.loadtxt(body, delimiter=",", ndmin=2)
    except ValueError as e:
        raise IOFailure(f"malformed CSV {path}: {e}") from e
    return header, rows.reshape(-1, len(header))


def _grid_arrays(field: ScalarField | VectorField) -> List[Tuple[str, str, np.ndarray]]:
    if isinstance(field, ScalarField):
        return [("value", "cell", field.values)]
    return [("ux", "xface", field.ux), ("uy", "yface", field.uy)]


def write_grid(
    path: str | Path,
    fields: Mapping[str, ScalarField | VectorField],
    attributes: Mapping[str, float] | None = None,
    name: str = "fields",
) -> Path:
    """Write fields sharing one grid as a text header followed by flat arrays.

    Arrays are written in C order, one value per line, in the order the
    header lists them.

    Raises:
        ValueError: If the fields do not share a grid.
        IOFailure: If the file cannot be written.
    """
    if not fields:
        raise ValueError("at least one field is required")
    grids = {(f.grid.dims, f.grid.spacing, f.grid.origin, f.grid.periodic) for f in fields.values()}
    if len(grids) != 1:
        raise ValueError("all fields of a grid file must share one grid")
    grid = next(iter(fields.values())).grid
    arrays = []
    for key in fields:
        for component, location, values in _grid_arrays(fields[key]):
            arrays.append({"name": f"{key}.{component}", "location": location, "values": values, "shape": values.shape})
    header = _environment().get_template("grid_header.j2").render(
        format_version=GRID_FORMAT_VERSION,
        name=name,
        dims=grid.dims,
        spacing=grid.spacing,
        origin=grid.origin,
        periodic=grid.periodic,
        arrays=arrays,
        attributes=dict(attributes or {}),
    )
    body = "\n".join(FLOAT_FORMAT % v for array in arrays for v in np.ravel(array["values"]))
    return _write_text(path, header + body + "\n")


def read_grid(path: str | Path) -> Tuple[StaggeredGrid, Dict[str, np.ndarray], Dict[str, float]]:
    """Read a file written by :func:`write_grid`.

    Returns:
        The grid, the arrays by ``field.component`` name and the attributes.

    Raises:
        IOFailure: If the file cannot be read or is malformed.
    """
    lines = _read_text(path).splitlines()
    try:
        meta: Dict[str, List[str]] = {}
        shapes: List[Tuple[str, Tuple[int, ...]]] = []
        attributes: Dict[str, float] = {}
        start = lines.index("data") + 1
        for line in lines[1 : start - 1]:
            key, *rest = line.split()
            if key == "array":
                shapes.append((rest[0], tuple(int(n) for n in rest[2].split("x"))))
            elif key == "attribute":
                attributes[rest[0]] = float(rest[1])
            else:
                meta[key] = rest
        if int(meta["format_version"][0]) != GRID_FORMAT_VERSION:
            raise IOFailure(f"unsupported grid format {meta['format_version'][0]} in {path}")
        grid = StaggeredGrid(
            tuple(int(n) for n in meta["dims"]),
            tuple(float(h) for h in meta["spacing"]),
            tuple(bool(int(p)) for p in meta["periodic"]),
            tuple(float(o) for o in meta["origin"]),
        )
        values = np.array([float(v) for v in lines[start:] if v], dtype=float)
        arrays: Dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            arrays[name] = values[offset : offset + size].reshape(shape)
            offset += size
        if offset != values.size:
            raise IOFailure(f"{path} holds {values.size} values, the header announces {offset}")
    except (KeyError, IndexError, ValueError) as e:
        raise IOFailure(f"malformed grid file {path}: {e}") from e
    return grid, arrays, attributes


def write_mask_pgm(path: str | Path, mask: Mask) -> Path:
    """Plain PGM image of a mask, fluid white, first axis horizontal, origin bottom-left."""
    image = np.flipud(mask.values.T).astype(int) * 255
    lines = ["P2", f"{image.shape[1]} {image.shape[0]}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in image)
    return _write_text(path, "\n".join(lines) + "\n")


def write_mask_csv(path: str | Path, mask: Mask) -> Path:
    """One row per grid cell: ``i,j,x,y,fluid``."""
    i, j = np.meshgrid(*(np.arange(n) for n in mask.shape), indexing="ij")
    x = mask.origin[0] + (i + 0.5) * mask.spacing[0]
    y = mask.origin[1] + (j + 0.5) * mask.spacing[1]
    rows = np.stack([i.ravel(), j.ravel(), x.ravel(), y.ravel(), mask.values.ravel()], axis=1)
    return write_csv(path, ["i", "j", "x", "y", "fluid"], rows)


def write_unfolded_csv(path: str | Path, field: UnfoldedField) -> Path:
    """Columns ``k1,k2,y1,y2[,z1,z2],value...`` with cell-centered micro coordinates."""
    values = field.values
    index_shape = values.shape[:4] if field.level == "Y" else values.shape[:6]
    n_components = int(np.prod(values.shape[len(index_shape) :], dtype=int))
    grids = np.meshgrid(*(np.arange(n) for n in index_shape), indexing="ij")
    columns = [g.ravel().astype(float) for g in grids]
    if field.level == "Y":
        hy = field.y_spacing
        columns[2] = (columns[2] + 0.5) * hy[0]
        columns[3] = (columns[3] + 0.5) * hy[1]
        header = ["k1", "k2", "y1", "y2"]
    else:
        r1, r2 = field.micro_shape
        z_lengths = field.z_lengths
        delta_cell = (field.y_lengths[0] / field.subdivision[0], field.y_lengths[1] / field.subdivision[1])
        y1 = columns[2] * delta_cell[0]
        y2 = columns[3] * delta_cell[1]
        z1 = (columns[4] + 0.5) * z_lengths[0] / r1
        z2 = (columns[5] + 0.5) * z_lengths[1] / r2
        columns = [columns[0], columns[1], y1, y2, z1, z2]
        header = ["k1", "k2", "y1", "y2", "z1", "z2"]
    flat = values.reshape(-1, n_components)
    if n_components == 1:
        header.append("value")
    else:
        header.extend(f"value{c}" for c in range(n_components))
    return write_csv(path, header, np.column_stack(columns + [flat]))


def to_jsonable(value: Any) -> Any:
    """Convert models and arrays into plain JSON types."""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else str(v)
    return value


def write_json(path: str | Path, payload: Any) -> Path:
    return _write_text(path, json.dumps(to_jsonable(payload), sort_keys=True, indent=2) + "\n")


def write_manifest(path: str | Path, manifest: RunManifest) -> Path:
    """Write ``manifest.json``; a directory gets the file name appended."""
    path = Path(path)
    if path.suffix != ".json":
        path = path / "manifest.json"
    return write_json(path, manifest.payload())


def read_manifest(path: str | Path) -> RunManifest:
    try:
        return RunManifest.model_validate(json.loads(_read_text(path)))
    except ValueError as e:
        raise IOFailure(f"malformed manifest {path}: {e}") from e


def render_report(report: ConvergenceReport | PropertyReport, title: str) -> str:
    """Markdown summary of a study or property report."""
    levels = report.levels if isinstance(report, ConvergenceReport) else []
    return _environment().get_template("report.md.j2").render(
        title=title,
        version=__version__,
        geometry_hash=getattr(report, "geometry_hash", ""),
        passed=report.passed,
        filtration_factor=getattr(report, "filtration_factor", None),
        levels=levels,
        slopes=getattr(report, "slopes", {}),
        checks=report.checks,
    )


def write_report(path: str | Path, report: ConvergenceReport | PropertyReport, title: str) -> Path:
    return _write_text(path, render_report(report, title))


def _or_nan(value: float | None) -> float:
    return float("nan") if value is None else float(value)


def export(obj: Exportable, path: str | Path, fmt: str) -> Path:
    """Write a field, a report or a manifest in one of the formats ``csv``, ``grid`` or ``manifest``.

    Raises:
        ValueError: If the object cannot be written in that format.
        IOFailure: If the file cannot be written.
    """
    if fmt == "grid":
        if not isinstance(obj, (ScalarField, VectorField)):
            raise ValueError(f"grid export needs a field, got {type(obj).__name__}")
        return write_grid(path, {"field": obj})
    if fmt == "csv":
        if isinstance(obj, ScalarField):
            x, y = obj.grid.cell_centers()
            return write_csv(path, ["x", "y", "value"], np.column_stack([x.ravel(), y.ravel(), obj.values.ravel()]))
        if isinstance(obj, ConvergenceReport):
            header = [
                "epsilon",
                "delta",
                "gap_u",
                "gap_p",
                "gap_p_fluid",
                "pressure_cauchy",
                "rigid_fraction",
                "failed",
            ]
            rows = [
                [
                    level.epsilon,
                    level.delta,
                    _or_nan(level.gap_u),
                    _or_nan(level.gap_p),
                    _or_nan(level.gap_p_fluid),
                    _or_nan(level.pressure_cauchy),
                    _or_nan(level.rigid_fraction),
                    int(level.failed),
                ]
                for level in obj.levels
            ]
            return write_csv(path, header, rows)
        if isinstance(obj, PropertyReport):
            rows = [[c.name, int(c.passed), _or_nan(c.measured), _or_nan(c.tolerance)] for c in obj.checks]
            columns = ["name", "passed", "measured", "tolerance"]
            return write_csv(path, columns, rows, ["%s", "%d", FLOAT_FORMAT, FLOAT_FORMAT])
        raise ValueError(f"csv export is not available for {type(obj).__name__}")
    if fmt == "manifest":
        if isinstance(obj, RunManifest):
            return write_manifest(path, obj)
        return write_json(path, obj)
    raise ValueError(f"unknown export format {fmt!r}")
