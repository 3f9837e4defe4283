"""Homogenized Darcy tests."""
# Import future modules
from __future__ import annotations

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from porous_bingham.cell_problems import EffectiveLaw
from porous_bingham.cell_problems import linear_law
from porous_bingham.darcy_macro import LawInterpolant
from porous_bingham.darcy_macro import MacroDiscretization
from porous_bingham.darcy_macro import check_permeability
from porous_bingham.darcy_macro import linearization
from porous_bingham.darcy_macro import solve_linear_darcy
from porous_bingham.darcy_macro import solve_nonlinear_darcy
from porous_bingham.exceptions import ShapeMismatch
from porous_bingham.exceptions import SingularK
from porous_bingham.geometry import Box


OMEGA = Box((0.0, 0.0), (1.0, 1.0))


def radial(x, y):
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def gradient_forcing(x, y):
    return np.ones_like(x, dtype=float), np.ones_like(y, dtype=float)


def _linear_table(slope: float) -> EffectiveLaw:
    law = EffectiveLaw(geometry=None, g=0.1, mu=1.0)
    for a in (-2.0, 0.0, 2.0):
        for b in (-2.0, 0.0, 2.0):
            law.store((a, b), slope * np.array([a, b]))
    return law


@pytest.mark.parametrize(
    "K",
    [
        np.array([[1.0, 0.5], [0.0, 1.0]]),
        np.array([[1.0, 0.0], [0.0, -1.0]]),
        np.array([[np.nan, 0.0], [0.0, 1.0]]),
        np.eye(3),
    ],
)
def test_check_permeability_rejects(K) -> None:
    with pytest.raises(SingularK):
        check_permeability(K)


def test_check_permeability_accepts_fields() -> None:
    field = np.broadcast_to(np.eye(2), (4, 4, 2, 2))
    assert check_permeability(field).shape == (4, 4, 2, 2)


def test_gradient_forcing_is_balanced_by_pressure() -> None:
    sol = solve_linear_darcy(np.diag([2.0, 1.0]), gradient_forcing, OMEGA, 8)
    assert sol.iterations == 1
    assert np.abs(sol.u0.ux).max() < 1e-10
    assert np.abs(sol.u0.uy).max() < 1e-10
    x, y = sol.p_hat.grid.cell_centers()
    np.testing.assert_allclose(sol.p_hat.values, x + y - 1.0, atol=1e-10)


def test_linear_darcy_invariants() -> None:
    sol = solve_linear_darcy(np.diag([2.0, 1.0]), radial, OMEGA, 8)
    assert sol.divergence_max < 1e-8
    assert sol.boundary_flux_max == 0.0
    assert abs(sol.p_hat.values.mean()) < 1e-12
    assert sol.compatibility < 1e-8
    assert not sol.rigid
    assert sol.cell_velocity.shape == (8, 8, 2)


def test_cell_permeability_field_matches_constant() -> None:
    constant = solve_linear_darcy(np.eye(2), radial, OMEGA, 6)
    field = solve_linear_darcy(np.broadcast_to(np.eye(2), (6, 6, 2, 2)), radial, OMEGA, 6)
    np.testing.assert_allclose(field.p_hat.values, constant.p_hat.values, atol=1e-12)


def test_face_permeability_shape() -> None:
    disc = MacroDiscretization(OMEGA, 4)
    with pytest.raises(ShapeMismatch):
        disc.face_permeability(np.ones((3, 3, 2, 2)))


def test_interpolant_requirements() -> None:
    with pytest.raises(SingularK):
        LawInterpolant(EffectiveLaw(geometry=None, g=0.0, mu=1.0))
    sparse_law = EffectiveLaw(geometry=None, g=0.1, mu=1.0)
    sparse_law.store((1.0, 0.0), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        LawInterpolant(sparse_law)


def test_interpolant_of_linear_table() -> None:
    evaluate = LawInterpolant(_linear_table(3.0))
    np.testing.assert_allclose(evaluate(np.array([[0.5, -1.0], [1.5, 1.5]])), [[1.5, -3.0], [4.5, 4.5]])
    # Outside the samples the nearest stored value is used.
    np.testing.assert_allclose(evaluate(np.array([[5.0, 0.0]])), [[6.0, 0.0]])


def test_linearization_fits_the_table() -> None:
    np.testing.assert_allclose(linearization(_linear_table(2.0)), 2.0 * np.eye(2), atol=1e-12)
    np.testing.assert_array_equal(linearization(linear_law(np.eye(2))), np.eye(2))


def test_nonlinear_darcy_with_linear_law() -> None:
    linear = solve_linear_darcy(2.0 * np.eye(2), radial, OMEGA, 8)
    sol = solve_nonlinear_darcy(linear_law(2.0 * np.eye(2)), radial, OMEGA, 8)
    assert sol.iterations == 0
    np.testing.assert_allclose(sol.p_hat.values, linear.p_hat.values, atol=1e-10)


def test_nonlinear_darcy_with_tabulated_law() -> None:
    linear = solve_linear_darcy(2.0 * np.eye(2), radial, OMEGA, 8)
    sol = solve_nonlinear_darcy(_linear_table(2.0), radial, OMEGA, 8)
    np.testing.assert_allclose(sol.u0.ux, linear.u0.ux, atol=1e-8)
    np.testing.assert_allclose(sol.u0.uy, linear.u0.uy, atol=1e-8)
    assert all(b <= a for a, b in zip(sol.history, sol.history[1:]))


def test_nonlinear_darcy_rigid() -> None:
    law = EffectiveLaw(geometry=None, g=1.0, mu=1.0, linear_K=np.eye(2))
    for a in (-2.0, 0.0, 2.0):
        for b in (-2.0, 0.0, 2.0):
            law.store((a, b), np.zeros(2))
    sol = solve_nonlinear_darcy(law, radial, OMEGA, 8)
    assert sol.rigid
    assert sol.iterations == 0
    assert not sol.u0.ux.any()
