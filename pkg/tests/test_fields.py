"""Staggered-grid field tests."""
# Import future modules
from __future__ import annotations

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from porous_bingham.exceptions import MissingMultiplier
from porous_bingham.exceptions import ShapeMismatch
from porous_bingham.fields import ScalarField
from porous_bingham.fields import StaggeredGrid
from porous_bingham.fields import VectorField
from porous_bingham.fields import block_mean
from porous_bingham.fields import cell_average
from porous_bingham.fields import divergence
from porous_bingham.fields import face_gradient_matrix
from porous_bingham.fields import gradient
from porous_bingham.fields import integrate
from porous_bingham.fields import lookup
from porous_bingham.fields import stress


def _shear(grid: StaggeredGrid) -> VectorField:
    _, y = grid.face_centers(0)
    return VectorField(grid, (y, np.zeros(grid.face_shape(1))))


def test_face_shapes() -> None:
    bounded = StaggeredGrid((4, 4), (0.25, 0.25))
    periodic = StaggeredGrid((4, 4), (0.25, 0.25), (True, True))
    assert bounded.face_shape(0) == (5, 4)
    assert bounded.face_shape(1) == (4, 5)
    assert periodic.face_shape(0) == (4, 4)


def test_grid_needs_two_cells() -> None:
    with pytest.raises(ShapeMismatch):
        StaggeredGrid((1, 4), (1.0, 0.25))


def test_vector_field_shape_is_checked() -> None:
    grid = StaggeredGrid((4, 4), (0.25, 0.25))
    with pytest.raises(ShapeMismatch):
        VectorField(grid, (np.zeros((4, 4)), np.zeros((4, 5))))


def test_zero_extension_clears_closed_faces() -> None:
    grid = StaggeredGrid((4, 4), (0.25, 0.25))
    mask = (np.zeros((5, 4), dtype=bool), np.ones((4, 5), dtype=bool))
    u = VectorField(grid, (np.ones((5, 4)), np.ones((4, 5))), mask, zero_extended=True)
    assert not u.ux.any()
    assert u.uy.all()


def test_divergence_gradient_adjoint() -> None:
    rng = np.random.default_rng(3)
    grid = StaggeredGrid((6, 5), (0.2, 0.3), (True, True))
    p = ScalarField(grid, rng.standard_normal(grid.dims))
    u = VectorField(grid, (rng.standard_normal(grid.face_shape(0)), rng.standard_normal(grid.face_shape(1))))
    lhs = float(np.sum(p.values * divergence(u).values))
    grad = gradient(p)
    rhs = -sum(float(np.sum(a * b)) for a, b in zip(u.components, grad.components))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_shear_stress() -> None:
    grid = StaggeredGrid((4, 4), (0.25, 0.25))
    u = _shear(grid)
    p = ScalarField(grid, np.zeros(grid.dims))
    diag = stress(u, p, g_eff=1.0, mu_eff=2.0)
    np.testing.assert_allclose(diag.strain.values[..., 0, 1], 0.5)
    np.testing.assert_allclose(diag.deviatoric.values[..., 0, 1], 2.0)
    np.testing.assert_allclose(diag.second_invariant.values, 4.0)
    assert not diag.rigid.any()


def test_stress_at_rest_needs_multiplier() -> None:
    grid = StaggeredGrid((4, 4), (0.25, 0.25))
    u = VectorField(grid, (np.zeros(grid.face_shape(0)), np.zeros(grid.face_shape(1))))
    p = ScalarField(grid, np.zeros(grid.dims))
    with pytest.raises(MissingMultiplier):
        stress(u, p, g_eff=1.0, mu_eff=1.0)
    multiplier = np.zeros((*grid.dims, 2, 2))
    multiplier[..., 0, 1] = 0.5
    diag = stress(u, p, g_eff=1.0, mu_eff=1.0, multiplier=multiplier)
    assert diag.rigid.all()
    np.testing.assert_allclose(diag.deviatoric.values[..., 0, 1], 0.25)


def test_total_stress_carries_pressure() -> None:
    grid = StaggeredGrid((4, 4), (0.25, 0.25))
    p = ScalarField(grid, np.full(grid.dims, 3.0))
    diag = stress(_shear(grid), p, g_eff=0.0, mu_eff=1.0)
    np.testing.assert_allclose(diag.total.values[..., 0, 0], -3.0)


def test_integrate() -> None:
    grid = StaggeredGrid((4, 4), (0.25, 0.25))
    ones = ScalarField(grid, np.ones(grid.dims))
    assert integrate(ones) == pytest.approx(1.0)
    half = np.zeros(grid.dims, dtype=bool)
    half[:2] = True
    assert integrate(ones, half) == pytest.approx(0.5)


def test_block_mean() -> None:
    values = np.arange(16, dtype=float).reshape(4, 4)
    np.testing.assert_allclose(block_mean(values, (2, 2)), [[2.5, 4.5], [10.5, 12.5]])
    with pytest.raises(ShapeMismatch):
        block_mean(values, (3, 2))


def test_cell_average_grid() -> None:
    grid = StaggeredGrid((4, 4), (0.25, 0.25))
    coarse = cell_average(ScalarField(grid, np.ones(grid.dims)), (2, 2))
    assert coarse.grid.dims == (2, 2)
    assert coarse.grid.spacing == (0.5, 0.5)


def test_lookup_wraps_and_fills() -> None:
    array = np.arange(9).reshape(3, 3)
    out = lookup(array, np.array([-1, 3]), np.array([0, 0]), (True, False), -1)
    np.testing.assert_array_equal(out, [6, 0])
    out = lookup(array, np.array([0, 0]), np.array([-1, 3]), (True, False), -1)
    np.testing.assert_array_equal(out, [-1, -1])


def test_face_gradient_of_linear_pressure() -> None:
    fluid = np.ones((4, 4), dtype=bool)
    faces = face_gradient_matrix(fluid, (0.25, 0.25), (False, False))
    assert faces.n_faces == 24
    assert faces.weight == pytest.approx(0.25 * 0.25 / 2)
    x, _ = StaggeredGrid((4, 4), (0.25, 0.25)).cell_centers()
    grad = faces.matrix @ x.ravel()
    np.testing.assert_allclose(grad[0::2], 1.0)
    np.testing.assert_allclose(grad[1::2], 0.0, atol=1e-12)
