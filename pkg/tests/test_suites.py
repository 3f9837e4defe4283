"""Property suite tests."""
# Import future modules
from __future__ import annotations

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from porous_bingham.models import CellConfig
from porous_bingham.models import StudyConfig
from porous_bingham.models import SuiteConfig
from porous_bingham.suites import cell_suite
from porous_bingham.suites import convergence_suite
from porous_bingham.suites import fitted_order
from porous_bingham.suites import geometry_suite
from porous_bingham.suites import is_decreasing
from porous_bingham.suites import obstacle_mask
from porous_bingham.suites import run_property_suites
from porous_bingham.suites import saddle_suite
from porous_bingham.suites import unfolding_suite


def test_fitted_order() -> None:
    assert fitted_order([0.5, 0.25], [0.2, 0.05]) == pytest.approx(2.0)
    assert fitted_order([0.5, 0.25, 0.125], [0.1, 0.05, 0.025]) == pytest.approx(1.0)
    assert np.isnan(fitted_order([0.5, 0.25], [0.2, 0.0]))


def test_is_decreasing() -> None:
    assert is_decreasing([3.0, 2.0, 1.0])
    assert is_decreasing([1.0])
    assert not is_decreasing([3.0, 3.0])


def test_geometry_suite(geometry) -> None:
    report = geometry_suite(geometry)
    assert report.passed
    assert report.check("geometry.covering").passed
    assert all(check.name.startswith("geometry.") for check in report.checks)


def test_unfolding_suite(domain) -> None:
    report = unfolding_suite(domain)
    failed = [check.name for check in report.checks if not check.passed]
    assert not failed
    assert report.check("unfolding.integral_identity").measured <= 1e-12


def test_unfolding_suite_records_errors(domain) -> None:
    report = unfolding_suite(domain, spacing=(0.03, 0.03))
    assert not report.passed
    assert "GridNotNested" in report.check("unfolding.error").detail


def test_obstacle_mask() -> None:
    mask = obstacle_mask(16)
    assert mask.fluid_count == 240
    assert mask.is_connected()


def test_cell_suite(geometry) -> None:
    report = cell_suite(geometry, cell=CellConfig(resolution_y=4, resolution_z=8))
    assert report.passed
    names = [check.name for check in report.checks]
    assert names == [
        "cell.symmetric",
        "cell.positive_definite",
        "cell.diagonal",
        "cell.zero_at_origin",
        "cell.stokes_limit",
    ]


@pytest.mark.slow
def test_saddle_suite(loose_solver) -> None:
    report = saddle_suite(loose_solver)
    assert report.check("saddle.stokes_consistency").passed
    assert report.check("saddle.zero_forcing_rigid").passed
    assert report.check("saddle.divergence").passed


@pytest.mark.slow
def test_convergence_suite(domain) -> None:
    report = convergence_suite(domain, SuiteConfig(epsilons=[0.5, 0.25, 0.125]))
    for name in ("strong_yz", "scaled_gradient", "transfer"):
        check = report.check(f"convergence.{name}")
        assert check.passed, check.detail
    assert report.check("convergence.zero_extension").passed


def test_convergence_suite_needs_two_levels(domain) -> None:
    report = convergence_suite(domain, SuiteConfig(epsilons=[0.5]))
    assert [check.name for check in report.checks] == ["convergence.levels"]
    assert not report.passed


def test_run_property_suites() -> None:
    cfg = StudyConfig(suite=SuiteConfig(epsilons=[0.5], include_cell=False, include_saddle=False))
    report = run_property_suites(cfg)
    assert not report.passed
    assert not report.check("convergence.levels").passed
    assert report.check("geometry.covering").passed
    assert report.check("unfolding.linearity").passed
    with pytest.raises(KeyError):
        report.check("saddle.divergence")
