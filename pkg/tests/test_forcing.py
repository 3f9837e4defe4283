"""Forcing plugin tests."""
# Import future modules
from __future__ import annotations

# Import built-in modules
import os

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from porous_bingham.exceptions import IOFailure
from porous_bingham.exceptions import ShapeMismatch
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import VectorField
from porous_bingham.filesystem import get_forcings
from porous_bingham.forcing import BaseForcing
from porous_bingham.forcing import GriddedForcing
from porous_bingham.forcing import load_forcing
from porous_bingham.forcing import resolve_forcing
from porous_bingham.forcing import sample_forcing


GRID = StaggeredGrid((4, 4), (0.25, 0.25))


def test_base_forcing_is_abstract() -> None:
    with pytest.raises(TypeError):
        BaseForcing()


def test_scale_and_broadcast() -> None:
    forcing = load_forcing(get_forcings()["uniform"])(scale=2.0)
    fx, fy = forcing(np.zeros((3, 2)), np.zeros((3, 2)))
    assert fx.shape == fy.shape == (3, 2)
    np.testing.assert_array_equal(fx, 2.0)
    np.testing.assert_array_equal(fy, 0.0)


def test_sample_on_faces() -> None:
    u = resolve_forcing("shear").sample(GRID)
    assert u.ux.shape == (5, 4)
    assert u.uy.shape == (4, 5)
    _, y = GRID.face_centers(0)
    np.testing.assert_allclose(u.ux, np.sin(2 * np.pi * y))
    assert not u.uy.any()


def test_sample_passes_vector_fields_through() -> None:
    field = VectorField(GRID, (np.ones((5, 4)), np.zeros((4, 5))))
    assert sample_forcing(field, GRID) is field
    with pytest.raises(ShapeMismatch):
        sample_forcing(field, StaggeredGrid((4, 4), (0.25, 0.25), (True, True)))


def test_swirl_has_no_normal_component() -> None:
    u = resolve_forcing("swirl").sample(GRID)
    np.testing.assert_allclose(u.ux[[0, -1], :], 0.0, atol=1e-12)
    np.testing.assert_allclose(u.uy[:, [0, -1]], 0.0, atol=1e-12)


def test_gridded_forcing(test_data_root) -> None:
    forcing = GriddedForcing(os.path.join(test_data_root, "forcing.csv"), scale=3.0)
    fx, fy = forcing(np.array([0.5, 2.0]), np.array([0.25, 0.0]))
    np.testing.assert_allclose(fx, [3.0, 12.0])
    np.testing.assert_allclose(fy, [3.0, 3.0])


def test_gridded_forcing_errors(tmp_path) -> None:
    with pytest.raises(IOFailure):
        GriddedForcing(tmp_path / "missing.csv")
    three = tmp_path / "three.csv"
    three.write_text("0,0,1\n1,0,1\n", encoding="utf-8")
    with pytest.raises(IOFailure):
        GriddedForcing(three)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("0,0,1,1\n1,0,1,1\n0,1,1,1\n", encoding="utf-8")
    with pytest.raises(IOFailure):
        GriddedForcing(ragged)


def test_load_forcing_without_class(tmp_path) -> None:
    empty = tmp_path / "empty.py"
    empty.write_text("VALUE = 1\n", encoding="utf-8")
    with pytest.raises(AttributeError):
        load_forcing(empty)


def test_resolve_forcing(test_data_root) -> None:
    custom = os.path.join(test_data_root, "custom_forcings")
    forcing = resolve_forcing("forcing_b", scale=2.0, extra_path=custom)
    fx, fy = forcing(np.zeros(2), np.zeros(2))
    np.testing.assert_array_equal(fy, [-2.0, -2.0])
    from_file = resolve_forcing(os.path.join(custom, "forcing_a.py"))
    np.testing.assert_array_equal(from_file(np.array([0.5]), np.array([0.25]))[0], [0.5])
    assert isinstance(resolve_forcing(os.path.join(test_data_root, "forcing.csv")), GriddedForcing)
    with pytest.raises(KeyError):
        resolve_forcing("no-such-forcing")
