"""Fine-scale solver tests."""
# Import future modules
from __future__ import annotations

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from porous_bingham.exceptions import MissingMultiplier
from porous_bingham.fine_scale import apriori_norms
from porous_bingham.fine_scale import dirichlet_laplacian
from porous_bingham.fine_scale import extend_pressure
from porous_bingham.fine_scale import extend_pressure_field
from porous_bingham.fine_scale import poincare_constant
from porous_bingham.fine_scale import rigid_zones
from porous_bingham.fine_scale import scaled_coefficients
from porous_bingham.fine_scale import solve_fine
from porous_bingham.fine_scale import unit_square_mask
from porous_bingham.geometry import Mask
from porous_bingham.geometry import build_domain_mask


def zero(x, y):
    return np.zeros_like(x), np.zeros_like(y)


def uniform(x, y):
    return np.ones_like(x), np.zeros_like(y)


def swirl(x, y):
    return (
        np.pi * np.sin(np.pi * x) ** 2 * np.sin(2.0 * np.pi * y),
        -np.pi * np.sin(2.0 * np.pi * x) * np.sin(np.pi * y) ** 2,
    )


@pytest.fixture()
def flowing(domain, loose_solver):
    """Swirl-driven Bingham flow with a small yield stress."""
    return solve_fine(domain, swirl, g=0.05, mu=1.0, cfg=loose_solver)


def test_scaled_coefficients(domain) -> None:
    g_eff, mu_eff = scaled_coefficients(domain, 2.0, 1.0)
    assert g_eff == pytest.approx(0.25)
    assert mu_eff == pytest.approx(0.03125)


def test_zero_forcing_is_at_rest(domain) -> None:
    sol = solve_fine(domain, zero, g=1.0, mu=1.0)
    assert not sol.u.ux.any()
    assert not sol.u.uy.any()
    assert sol.state.rigid
    assert sol.diagnostics["rigid"] == 1.0
    norms = apriori_norms(sol)
    assert norms.u_l2 == 0.0
    assert norms.scaled_grad_u_l2 == 0.0
    mask, report = rigid_zones(sol)
    assert report.rigid_fraction == 1.0
    assert report.passed
    assert mask.sum() == sol.mask.fluid_count


def test_newtonian_fine_solve(domain) -> None:
    sol = solve_fine(domain, swirl, g=0.0, mu=1.0)
    assert sol.eps_delta == 0.125
    assert sol.mu_eff == pytest.approx(0.03125)
    assert sol.diagnostics["divergence_max"] < 1e-8
    assert sol.diagnostics["energy_balance"] < 1e-8
    assert np.abs(sol.u.ux).max() > 0
    assert not sol.state.rigid
    fluid = sol.mask.values
    assert not sol.p_fluid.values[~fluid].any()
    assert sol.p_fluid.values[fluid].mean() == pytest.approx(0.0, abs=1e-10)
    assert sol.p_ext.values.mean() == pytest.approx(0.0, abs=1e-10)
    np.testing.assert_allclose(extend_pressure(sol).values, sol.p_ext.values)
    _, report = rigid_zones(sol)
    assert report.rigid_fraction == 0.0
    assert report.passed


def test_pressure_balanced_forcing_is_rigid(domain, loose_solver) -> None:
    # A constant load is a gradient; the pressure takes all of it.
    sol = solve_fine(domain, uniform, g=0.5, mu=1.0, cfg=loose_solver)
    assert sol.state.rigid
    assert sol.state.iterations == 0
    assert not sol.u.ux.any()
    assert not sol.u.uy.any()
    mask, report = rigid_zones(sol, cfg=loose_solver)
    assert report.rigid_fraction == 1.0
    assert report.passed
    assert mask.sum() == sol.mask.fluid_count
    norms = apriori_norms(sol)
    assert norms.u_l2 == 0.0
    assert norms.p_ext_l2 > 0.0
    assert norms.bound_ratio == pytest.approx(norms.p_ext_l2 / norms.forcing_l2)


def test_bingham_fine_solve_flows(flowing, loose_solver) -> None:
    assert not flowing.state.rigid
    assert flowing.state.iterations > 0
    assert flowing.diagnostics["divergence_max"] < 1e-8
    assert flowing.diagnostics["vi_residual"] <= loose_solver.tol_vi
    norms = apriori_norms(flowing)
    assert norms.u_l2 > 0.0
    assert norms.scaled_grad_u_l2 > 0.0
    assert norms.forcing_l2 > 0.0
    total = norms.u_l2 + norms.scaled_grad_u_l2 + norms.p_ext_l2
    assert norms.bound_ratio == pytest.approx(total / norms.forcing_l2)
    doubled = apriori_norms(flowing, lambda x, y: tuple(2.0 * c for c in swirl(x, y)))
    assert doubled.forcing_l2 == pytest.approx(2.0 * norms.forcing_l2)
    assert doubled.bound_ratio == pytest.approx(norms.bound_ratio / 2.0)


def test_threshold_law_of_flowing_solution(flowing, loose_solver) -> None:
    mask, report = rigid_zones(flowing, cfg=loose_solver)
    assert report.passed, report
    assert report.constitutive_residual <= 1e-6
    assert report.rigid_fraction < 1.0
    assert not mask[~flowing.mask.values].any()


def test_threshold_law_rejects_unrelated_fields(flowing, loose_solver) -> None:
    state = flowing.state
    rng = np.random.default_rng(0)
    noise = rng.standard_normal(state.velocity.shape)
    state.velocity = noise
    state.m = rng.standard_normal(state.m.shape)
    state.w = state.ops.grad(noise)
    _, report = rigid_zones(flowing, cfg=loose_solver)
    assert not report.passed
    assert report.constitutive_residual > 1e-2


def test_threshold_law_needs_multiplier(flowing) -> None:
    flowing.state.m = None
    with pytest.raises(MissingMultiplier):
        rigid_zones(flowing)


def test_fine_solve_accepts_prebuilt_mask(domain) -> None:
    mask = build_domain_mask(domain)
    sol = solve_fine(domain, zero, g=1.0, mu=1.0, mask=mask)
    assert sol.mask is mask


def test_extend_pressure_field() -> None:
    p = np.arange(16, dtype=float).reshape(4, 4)
    fluid = np.ones((4, 4), dtype=bool)
    fluid[1, 1] = False
    out = extend_pressure_field(p, fluid, renormalize=False)
    assert out[1, 1] == 5.0
    np.testing.assert_array_equal(out[fluid], p[fluid])
    assert extend_pressure_field(p, fluid).mean() == pytest.approx(0.0, abs=1e-12)


def test_extend_pressure_per_component() -> None:
    p = np.zeros((5, 5))
    p[:, :2] = 1.0
    p[:, 3:] = 3.0
    fluid = np.ones((5, 5), dtype=bool)
    fluid[1, 0] = False
    fluid[3, 4] = False
    out = extend_pressure_field(p, fluid, renormalize=False)
    assert out[1, 0] == 1.0
    assert out[3, 4] == 3.0


def test_dirichlet_laplacian() -> None:
    A = dirichlet_laplacian(unit_square_mask(2)).toarray()
    np.testing.assert_allclose(A, A.T)
    np.testing.assert_allclose(np.diag(A), 24.0)
    assert A[0, 1] == -4.0
    assert A[0, 3] == 0.0


def test_poincare_constant_of_unit_square() -> None:
    assert poincare_constant(unit_square_mask(16)) == pytest.approx(1.0 / (np.pi * np.sqrt(2.0)), rel=1e-2)


def test_poincare_constant_scales_with_size() -> None:
    unit = poincare_constant(unit_square_mask(16))
    half = poincare_constant(Mask(np.ones((16, 16), dtype=bool), (1.0 / 32, 1.0 / 32)))
    assert half == pytest.approx(unit / 2.0, rel=1e-5)


def test_poincare_constant_of_domain(domain) -> None:
    # Obstacles at scale eps delta keep the constant at that order.
    constant = poincare_constant(domain)
    assert 0.0 < constant < domain.eps_delta
