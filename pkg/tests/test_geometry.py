"""Geometry tests."""
# Import future modules
from __future__ import annotations

# Import built-in modules
import os

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from porous_bingham.exceptions import DisconnectedFluid
from porous_bingham.exceptions import DomainNotCovered
from porous_bingham.exceptions import GeometryError
from porous_bingham.exceptions import ResolutionTooCoarse
from porous_bingham.geometry import Box
from porous_bingham.geometry import CellGeometry
from porous_bingham.geometry import DoublePeriodicDomain
from porous_bingham.geometry import RectCell
from porous_bingham.geometry import build_cell_masks
from porous_bingham.geometry import build_domain_mask
from porous_bingham.geometry import domain_from_model
from porous_bingham.geometry import label_components
from porous_bingham.geometry import level_domain
from porous_bingham.geometry import load_geometry
from porous_bingham.geometry import require_valid
from porous_bingham.geometry import validate_geometry


UNIT = Box((0.0, 0.0), (1.0, 1.0))


def test_default_geometry_scales(geometry) -> None:
    assert geometry.delta == 0.25
    assert geometry.filtration_factor == pytest.approx(0.5625)
    assert geometry.fluid_fraction == pytest.approx(0.5625)


def test_build_cell_masks(geometry) -> None:
    y_star, z_star, y_fluid = build_cell_masks(geometry, 8)
    assert z_star.shape == (8, 8)
    assert z_star.fluid_count == 48
    assert y_star.shape == (32, 32)
    assert y_star.fluid_count == 768
    assert y_fluid.fluid_count == 576
    assert y_fluid.fluid_fraction == pytest.approx(geometry.fluid_fraction)


@pytest.mark.parametrize("resolution", [3, 6])
def test_build_cell_masks_too_coarse(geometry, resolution: int) -> None:
    with pytest.raises(ResolutionTooCoarse):
        build_cell_masks(geometry, resolution)


def test_domain_dimensions(domain) -> None:
    assert domain.eps_delta == 0.125
    assert domain.cells == (2, 2)
    assert domain.micro_dims == (16, 16)
    assert domain.dims == (32, 32)
    assert domain.spacing == (0.03125, 0.03125)


def test_domain_mask_is_tiled(domain) -> None:
    mask = build_domain_mask(domain)
    assert mask.shape == (32, 32)
    assert mask.is_connected()
    assert mask.fluid_fraction == pytest.approx(0.5625)
    np.testing.assert_array_equal(mask.values[:16, :16], mask.values[16:, 16:])


def test_domain_not_covered(geometry) -> None:
    with pytest.raises(DomainNotCovered):
        DoublePeriodicDomain(UNIT, 0.3, geometry, 4)


def test_domain_scale_out_of_range(geometry) -> None:
    with pytest.raises(GeometryError):
        DoublePeriodicDomain(UNIT, 1.0, geometry, 4)


def test_level_domain(domain) -> None:
    fixed = level_domain(domain, 0.25)
    assert fixed.delta == domain.delta
    assert fixed.cells == (4, 4)
    proportional = level_domain(domain, 0.25, "proportional")
    assert proportional.geometry.subdivision == (8, 8)
    assert proportional.eps_delta == pytest.approx(domain.eps_delta / 4)
    with pytest.raises(GeometryError):
        level_domain(domain, 0.25, "linear")


def test_box_extents_must_be_positive() -> None:
    with pytest.raises(GeometryError):
        Box((0.0, 0.0), (0.5, 0.0))


def test_obstacle_outside_open_cell() -> None:
    with pytest.raises(GeometryError):
        RectCell((1.0, 1.0), (Box((0.0, 0.25), (0.5, 0.5)),))


def test_overlapping_obstacles() -> None:
    with pytest.raises(GeometryError):
        RectCell((1.0, 1.0), (Box((0.25, 0.25), (0.5, 0.5)), Box((0.5, 0.5), (0.25, 0.25))))


def test_validate_default(geometry) -> None:
    report = validate_geometry(geometry)
    assert report.passed
    names = {check.name for check in report.checks}
    assert names == {
        "y_cell.inside",
        "y_cell.disjoint",
        "y_cell.fluid_nonempty",
        "z_cell.inside",
        "z_cell.disjoint",
        "z_cell.fluid_nonempty",
        "delta_consistency",
        "covering",
        "intersection",
    }


def test_validate_unaligned_obstacle() -> None:
    central = Box((0.25, 0.25), (0.5, 0.5))
    unaligned = RectCell((1.0, 1.0), (Box((0.3, 0.25), (0.45, 0.5)),))
    geom = CellGeometry(unaligned, RectCell((1.0, 1.0), (central,)), (4, 4))
    report = validate_geometry(geom)
    assert not report.passed
    assert not report.check("covering").passed
    with pytest.raises(GeometryError, match="covering"):
        require_valid(geom)


def test_validate_inconsistent_delta() -> None:
    central = Box((0.25, 0.25), (0.5, 0.5))
    geom = CellGeometry(RectCell((1.0, 2.0)), RectCell((1.0, 1.0), (central,)), (4, 4))
    assert not validate_geometry(geom).check("delta_consistency").passed


def test_enclosed_fluid_is_disconnected(test_data_root) -> None:
    model = load_geometry(os.path.join(test_data_root, "ring.json"))
    dom = domain_from_model(model)
    assert validate_geometry(dom.geometry).passed
    with pytest.raises(DisconnectedFluid):
        build_domain_mask(dom)


def test_label_components_periodic() -> None:
    values = np.zeros((4, 4), dtype=bool)
    values[0, :] = True
    values[3, :] = True
    assert label_components(values)[0] == 2
    assert label_components(values, (True, False))[0] == 1


def test_shipped_geometry_matches_default(geometry) -> None:
    model = load_geometry("default")
    assert domain_from_model(model).geometry.geometry_hash == geometry.geometry_hash
    assert len(geometry.geometry_hash) == 64
