"""Result file tests."""
# Import future modules
from __future__ import annotations

# Import built-in modules
import json

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from porous_bingham.exceptions import IOFailure
from porous_bingham.export import export
from porous_bingham.export import f17
from porous_bingham.export import read_csv
from porous_bingham.export import read_grid
from porous_bingham.export import read_manifest
from porous_bingham.export import render_report
from porous_bingham.export import to_jsonable
from porous_bingham.export import write_csv
from porous_bingham.export import write_grid
from porous_bingham.export import write_manifest
from porous_bingham.export import write_mask_csv
from porous_bingham.export import write_mask_pgm
from porous_bingham.export import write_unfolded_csv
from porous_bingham.fields import ScalarField
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import VectorField
from porous_bingham.geometry import Mask
from porous_bingham.models import CheckResult
from porous_bingham.models import ConvergenceReport
from porous_bingham.models import LevelRecord
from porous_bingham.models import PropertyReport
from porous_bingham.models import RunManifest
from porous_bingham.unfolding import unfold_delta
from porous_bingham.unfolding import unfold_eps


GRID = StaggeredGrid((3, 2), (0.5, 0.25), (False, True), (1.0, 0.0))


def test_f17() -> None:
    assert f17(None) == "-"
    assert f17(True) == "1"
    assert f17(np.bool_(False)) == "0"
    assert f17(3) == "3"
    assert f17(0.1) == "0.10000000000000001"


def test_csv(tmp_path) -> None:
    path = write_csv(tmp_path / "a" / "table.csv", ["x", "y"], np.array([[0.1, 2.0], [3.0, -4.5]]))
    header, rows = read_csv(path)
    assert header == ["x", "y"]
    np.testing.assert_array_equal(rows, [[0.1, 2.0], [3.0, -4.5]])
    with pytest.raises(ValueError):
        write_csv(tmp_path / "bad.csv", ["x"], [[1.0, 2.0]])
    with pytest.raises(IOFailure):
        read_csv(tmp_path / "missing.csv")


def test_csv_formats(tmp_path) -> None:
    path = write_csv(tmp_path / "t.csv", ["x"], np.array([[0.1]]))
    assert path.read_text(encoding="utf-8") == "x\n0.10000000000000001\n"
    mixed = write_csv(tmp_path / "mixed.csv", ["name", "n", "value"], [["a", 1, 0.5]], ["%s", "%d", "%.17g"])
    assert mixed.read_text(encoding="utf-8").splitlines() == ["name,n,value", "a,1,0.5"]
    header, rows = read_csv(write_csv(tmp_path / "empty.csv", ["x", "y"], []))
    assert header == ["x", "y"]
    assert rows.shape == (0, 2)
    (tmp_path / "bad.csv").write_text("x\nabc\n", encoding="utf-8")
    with pytest.raises(IOFailure):
        read_csv(tmp_path / "bad.csv")


def test_grid_file(tmp_path) -> None:
    rng = np.random.default_rng(0)
    p = ScalarField(GRID, rng.standard_normal(GRID.dims))
    u = VectorField(GRID, (rng.standard_normal(GRID.face_shape(0)), rng.standard_normal(GRID.face_shape(1))))
    path = write_grid(tmp_path / "level.grid", {"p": p, "u": u}, {"epsilon": 0.25}, name="level")
    grid, arrays, attributes = read_grid(path)
    assert grid.dims == GRID.dims
    assert grid.spacing == GRID.spacing
    assert grid.periodic == GRID.periodic
    assert grid.origin == GRID.origin
    assert list(arrays) == ["p.value", "u.ux", "u.uy"]
    np.testing.assert_array_equal(arrays["p.value"], p.values)
    np.testing.assert_array_equal(arrays["u.uy"], u.uy)
    assert attributes == {"epsilon": 0.25}


def test_grid_file_is_deterministic(tmp_path) -> None:
    p = ScalarField(GRID, np.full(GRID.dims, 1.0 / 3.0))
    first = write_grid(tmp_path / "a.grid", {"p": p}).read_bytes()
    second = write_grid(tmp_path / "b.grid", {"p": p}).read_bytes()
    assert first == second


def test_grid_fields_must_share_a_grid(tmp_path) -> None:
    other = StaggeredGrid((3, 2), (0.5, 0.25))
    with pytest.raises(ValueError):
        write_grid(
            tmp_path / "x.grid",
            {"a": ScalarField(GRID, np.zeros(GRID.dims)), "b": ScalarField(other, np.zeros(other.dims))},
        )


def test_truncated_grid_file(tmp_path) -> None:
    path = write_grid(tmp_path / "p.grid", {"p": ScalarField(GRID, np.zeros(GRID.dims))})
    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    with pytest.raises(IOFailure):
        read_grid(path)


def test_mask_files(tmp_path) -> None:
    values = np.array([[True, False], [True, True]])
    mask = Mask(values, (0.5, 0.5))
    pgm = write_mask_pgm(tmp_path / "mask.pgm", mask).read_text(encoding="utf-8").splitlines()
    assert pgm[:3] == ["P2", "2 2", "255"]
    # First axis horizontal, origin bottom-left.
    assert pgm[3:] == ["0 255", "255 255"]
    header, rows = read_csv(write_mask_csv(tmp_path / "mask.csv", mask))
    assert header == ["i", "j", "x", "y", "fluid"]
    np.testing.assert_array_equal(rows[1], [0, 1, 0.25, 0.75, 0])


def test_unfolded_csv(tmp_path, domain) -> None:
    values = np.ones(domain.dims)
    header, rows = read_csv(write_unfolded_csv(tmp_path / "y.csv", unfold_eps(values, domain)))
    assert header == ["k1", "k2", "y1", "y2", "value"]
    assert rows.shape == (4 * 16 * 16, 5)
    header, rows = read_csv(write_unfolded_csv(tmp_path / "yz.csv", unfold_delta(unfold_eps(values, domain))))
    assert header == ["k1", "k2", "y1", "y2", "z1", "z2", "value"]
    assert rows.shape == (4 * 16 * 16, 7)


def test_to_jsonable() -> None:
    payload = to_jsonable({"a": np.arange(2), "b": np.float64("nan"), "c": (np.int64(1), np.bool_(True))})
    assert payload == {"a": [0, 1], "b": "nan", "c": [1, True]}
    json.dumps(payload)


def test_manifest_round_trip(tmp_path) -> None:
    manifest = RunManifest(command="converge", version="0.1.0", config={"g": 0.1}, results={"z": 1, "a": 2})
    path = write_manifest(tmp_path, manifest)
    assert path.name == "manifest.json"
    text = path.read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"z"')
    assert read_manifest(path) == manifest
    path.write_text("{", encoding="utf-8")
    with pytest.raises(IOFailure):
        read_manifest(path)


def test_render_report() -> None:
    report = ConvergenceReport(
        levels=[
            LevelRecord(epsilon=0.5, delta=0.25, gap_u=0.1),
            LevelRecord(epsilon=0.25, delta=0.25, failed=True, error="diverged"),
        ],
        slopes={"gap_u": 1.0},
        checks=[CheckResult(name="gap_u.decreasing", passed=True, measured=1.0)],
        filtration_factor=0.5625,
        geometry_hash="abc",
    )
    text = render_report(report, "Convergence")
    assert text.startswith("# Convergence")
    assert "**FAIL**" in text
    assert "diverged" in text
    assert "- gap_u: 1" in text
    assert "| gap_u.decreasing | yes | 1 | - |  |" in text


def test_export_formats(tmp_path) -> None:
    p = ScalarField(GRID, np.zeros(GRID.dims))
    header, rows = read_csv(export(p, tmp_path / "p.csv", "csv"))
    assert header == ["x", "y", "value"]
    assert rows.shape == (6, 3)
    assert export(p, tmp_path / "p.grid", "grid").exists()
    report = PropertyReport(checks=[CheckResult(name="x", passed=False, measured=2.0, tolerance=1.0)])
    lines = export(report, tmp_path / "checks.csv", "csv").read_text(encoding="utf-8").splitlines()
    assert lines == ["name,passed,measured,tolerance", "x,0,2,1"]
    assert export({"k": 1}, tmp_path / "any.json", "manifest").exists()
    with pytest.raises(ValueError):
        export(p, tmp_path / "p.vtk", "vtk")
    with pytest.raises(ValueError):
        export({"k": 1}, tmp_path / "k.grid", "grid")
