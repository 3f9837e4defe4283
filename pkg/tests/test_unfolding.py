"""Unfolding operator tests."""
# Import future modules
from __future__ import annotations

# Import third-party modules
from hypothesis import HealthCheck
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st
import numpy as np
import pytest

# Import local modules
from porous_bingham.exceptions import GridNotNested
from porous_bingham.exceptions import ShapeMismatch
from porous_bingham.fields import ScalarField
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import block_mean
from porous_bingham.unfolding import check_gradient_identities
from porous_bingham.unfolding import check_integral_identity
from porous_bingham.unfolding import fold
from porous_bingham.unfolding import integrate_unfolded
from porous_bingham.unfolding import mean_Y
from porous_bingham.unfolding import mean_Z
from porous_bingham.unfolding import unfold_delta
from porous_bingham.unfolding import unfold_eps


def _random_field(domain, seed: int) -> ScalarField:
    rng = np.random.default_rng(seed)
    return ScalarField(StaggeredGrid(domain.dims, domain.spacing), rng.standard_normal(domain.dims))


def test_unfolded_shapes(domain) -> None:
    f = _random_field(domain, 0)
    v = unfold_eps(f, domain)
    assert v.level == "Y"
    assert v.values.shape == (2, 2, 16, 16)
    assert not v.lambda_region.any()
    w = unfold_delta(v)
    assert w.level == "YZ"
    assert w.values.shape == (2, 2, 4, 4, 4, 4)


def test_unfold_eps_relabels_cells(domain) -> None:
    f = _random_field(domain, 1)
    v = unfold_eps(f, domain)
    np.testing.assert_array_equal(v.values[1, 0], f.values[16:, :16])


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_fold_inverts_both_unfoldings(domain, seed: int) -> None:
    f = _random_field(domain, seed)
    v = unfold_eps(f, domain)
    np.testing.assert_array_equal(fold(v), f.values)
    np.testing.assert_array_equal(fold(unfold_delta(v)), f.values)


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_mean_y_is_cell_average(domain, seed: int) -> None:
    f = _random_field(domain, seed)
    mean = mean_Y(unfold_eps(f, domain))
    np.testing.assert_allclose(mean.values, block_mean(f.values, domain.micro_dims), rtol=1e-12, atol=1e-14)
    assert mean.grid.spacing == (0.5, 0.5)


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_integral_identity(domain, seed: int) -> None:
    f = _random_field(domain, seed)
    scale = float(np.abs(f.values).sum() * f.grid.cell_volume)
    assert check_integral_identity(f, domain) <= 1e-12 * scale


def test_integrate_unfolded_matches_domain_integral(domain) -> None:
    f = _random_field(domain, 2)
    direct = float(f.values.sum() * f.grid.cell_volume)
    assert integrate_unfolded(unfold_eps(f, domain)) == pytest.approx(direct, rel=1e-12, abs=1e-14)


def test_mean_z_is_constant_on_delta_cells(domain) -> None:
    f = _random_field(domain, 4)
    w = unfold_delta(unfold_eps(f, domain))
    averaged = mean_Z(w)
    assert averaged.level == "Y"
    block = averaged.values[0, 0, :4, :4]
    np.testing.assert_allclose(block, block[0, 0])
    assert block[0, 0] == pytest.approx(w.values[0, 0, 0, 0].mean())


def test_gradient_identities(domain) -> None:
    x, y = StaggeredGrid(domain.dims, domain.spacing).cell_centers()
    phi = ScalarField(StaggeredGrid(domain.dims, domain.spacing), np.sin(2 * np.pi * x) * np.cos(np.pi * y))
    report = check_gradient_identities(phi, domain)
    assert report.passed
    assert report.scale > 0


def test_partly_covered_cells_form_lambda(domain) -> None:
    values = np.ones((36, 32))
    v = unfold_eps(values, domain)
    assert v.macro_shape == (3, 2)
    assert v.lambda_region[2].all()
    assert not v.lambda_region[:2].any()
    assert not v.values[2].any()


def test_unnested_grid(domain) -> None:
    f = ScalarField(StaggeredGrid((32, 32), (0.03, 0.03)), np.ones((32, 32)))
    with pytest.raises(GridNotNested):
        unfold_eps(f, domain)


def test_level_mismatches(domain) -> None:
    v = unfold_eps(_random_field(domain, 5), domain)
    with pytest.raises(ShapeMismatch):
        mean_Z(v)
    with pytest.raises(GridNotNested):
        unfold_delta(unfold_delta(v))
