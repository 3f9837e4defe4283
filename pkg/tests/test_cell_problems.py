"""Cell problem and effective law tests."""
# Import future modules
from __future__ import annotations

# Import built-in modules
import json

# Import third-party modules
import numpy as np
import pytest

# Import local modules
from porous_bingham.cell_problems import EffectiveLaw
from porous_bingham.cell_problems import build_law
from porous_bingham.cell_problems import cross_check_strategies
from porous_bingham.cell_problems import discretize_cell
from porous_bingham.cell_problems import estimate_yield_threshold
from porous_bingham.cell_problems import eval_K
from porous_bingham.cell_problems import eval_K_many
from porous_bingham.cell_problems import linear_law
from porous_bingham.cell_problems import load_law
from porous_bingham.cell_problems import monotonicity_defect
from porous_bingham.cell_problems import quantize
from porous_bingham.cell_problems import save_law
from porous_bingham.cell_problems import solve_linear_cell
from porous_bingham.cell_problems import solve_nonlinear_cell
from porous_bingham.cell_problems import table_axis
from porous_bingham.cell_problems import tabulate_law
from porous_bingham.exceptions import GeometryError
from porous_bingham.exceptions import IOFailure
from porous_bingham.exceptions import NegativeYield
from porous_bingham.exceptions import NoBracket
from porous_bingham.geometry import CellGeometry
from porous_bingham.geometry import RectCell
from porous_bingham.models import CellConfig


RESOLUTION = (4, 8)


@pytest.fixture()
def permeability(geometry):
    _, K = solve_linear_cell(geometry, 1.0, RESOLUTION)
    return K


def test_linear_permeability_is_spd(permeability) -> None:
    np.testing.assert_allclose(permeability, permeability.T, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(permeability) > 0)
    # The default cells are symmetric under swapping the axes.
    assert permeability[0, 0] == pytest.approx(permeability[1, 1], rel=1e-8)
    assert permeability[0, 1] == pytest.approx(0.0, abs=1e-10)


def test_linear_permeability_scales_with_viscosity(geometry, permeability) -> None:
    _, K = solve_linear_cell(geometry, 2.0, RESOLUTION)
    np.testing.assert_allclose(K, permeability / 2.0, rtol=1e-10)


def test_linear_cell_velocities_are_divergence_free(geometry) -> None:
    chis, _ = solve_linear_cell(geometry, 1.0, RESOLUTION)
    disc = discretize_cell(geometry, *RESOLUTION)
    for chi in chis:
        assert chi.shape == (disc.z_ops.n_dof, disc.n_faces)
        assert disc.max_divergence(chi) < 1e-9
        assert disc.y_constraint_residual(chi) < 1e-9


def test_zero_yield_matches_linear_law(geometry, permeability) -> None:
    solution = solve_nonlinear_cell(geometry, (0.3, -0.2), 0.0, 1.0, resolution=RESOLUTION)
    np.testing.assert_allclose(solution.K, permeability @ np.array([0.3, -0.2]), rtol=1e-10, atol=1e-14)
    assert solution.iterations == 0


def test_large_yield_is_rigid(geometry, loose_solver) -> None:
    solution = solve_nonlinear_cell(geometry, (1.0, 0.0), 10.0, 1.0, resolution=RESOLUTION, cfg=loose_solver)
    assert solution.rigid
    np.testing.assert_array_equal(solution.K, 0.0)


def test_small_yield_slows_the_flow(geometry, permeability, loose_solver) -> None:
    solution = solve_nonlinear_cell(geometry, (1.0, 0.0), 0.01, 1.0, resolution=RESOLUTION, cfg=loose_solver)
    assert not solution.rigid
    assert 0.0 < solution.K[0] < permeability[0, 0]
    assert solution.vi_residual <= loose_solver.tol_vi


def test_nonlinear_cell_errors(geometry) -> None:
    with pytest.raises(NegativeYield):
        solve_nonlinear_cell(geometry, (1.0, 0.0), -0.1, 1.0, resolution=RESOLUTION)
    with pytest.raises(ValueError):
        solve_nonlinear_cell(geometry, (1.0, 0.0), 0.1, 1.0, strategy="newton", resolution=RESOLUTION)


def test_z_cell_needs_an_obstacle(geometry) -> None:
    bare = CellGeometry(geometry.y_cell, RectCell((1.0, 1.0)), (4, 4))
    with pytest.raises(GeometryError):
        discretize_cell(bare, *RESOLUTION)


@pytest.mark.slow
def test_strategies_agree(geometry, loose_solver) -> None:
    gap = cross_check_strategies(geometry, [(1.0, 0.0)], 0.01, 1.0, RESOLUTION, loose_solver)
    assert gap <= 0.05


def test_quantize() -> None:
    assert quantize((0.0, 0.0)) == quantize((0.0, -0.0))
    assert quantize((1.0, 0.0)) == quantize((1.0 + 1e-5, 0.0))
    assert quantize((1.0, 0.0)) != quantize((1.1, 0.0))
    assert quantize((0.0, 1.0))[1] == 90


def test_eval_k_linear_law() -> None:
    law = linear_law(np.array([[2.0, 0.0], [0.0, 1.0]]))
    assert law.is_linear
    np.testing.assert_array_equal(eval_K(law, (0.0, 0.0)), [0.0, 0.0])
    np.testing.assert_allclose(eval_K(law, (1.0, 1.0)), [2.0, 1.0])
    values = eval_K_many(law, [(1.0, 0.0), (0.0, 3.0), (-1.0, 0.0)])
    np.testing.assert_allclose(np.stack(values), [[2.0, 0.0], [0.0, 3.0], [-2.0, 0.0]])


def test_eval_k_reads_the_table() -> None:
    law = EffectiveLaw(geometry=None, g=0.1, mu=1.0)
    law.store((1.0, 0.0), np.array([0.5, 0.0]))
    np.testing.assert_allclose(eval_K(law, (1.0, 0.0)), [0.5, 0.0])
    with pytest.raises(ValueError):
        eval_K(law, (0.0, 1.0))


def test_yield_threshold_needs_yield_stress(geometry) -> None:
    with pytest.raises(NoBracket):
        estimate_yield_threshold(geometry, (1.0, 0.0), 0.0, 1.0)
    with pytest.raises(ValueError):
        estimate_yield_threshold(geometry, (1.0, 1.0), 0.1, 1.0)


def test_table_axis() -> None:
    np.testing.assert_allclose(table_axis(5, 2.0, 0.0), [-2.0, -1.0, 0.0, 1.0, 2.0])
    axis = table_axis(5, 2.0, 1.0)
    assert axis.size == 11
    np.testing.assert_allclose(axis, -axis[::-1])
    assert 0.8 in axis
    assert 1.5 in axis


def test_monotonicity_defect() -> None:
    law = EffectiveLaw(geometry=None, g=0.1, mu=1.0)
    for lam in ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)):
        law.store(lam, np.array(lam) * 0.5)
    assert monotonicity_defect(law) == pytest.approx(0.0)
    law.store((2.0, 0.0), np.array([-1.0, 0.0]))
    assert monotonicity_defect(law) < 0


def test_save_and_load_law(tmp_path) -> None:
    law = EffectiveLaw(geometry=None, g=0.1, mu=1.0, linear_K=np.eye(2), geometry_hash="abc")
    law.store((1.0, 0.0), np.array([0.25, 0.0]))
    law.store((0.0, -1.0), np.array([0.0, -0.25]))
    path = save_law(law, tmp_path / "law" / "law.txt")
    header = json.loads(path.read_text(encoding="utf-8").splitlines()[1])
    assert header["format_version"] == 1
    loaded = load_law(path)
    assert loaded.geometry_hash == "abc"
    np.testing.assert_array_equal(loaded.linear_K, np.eye(2))
    np.testing.assert_array_equal(loaded.lookup((0.0, -1.0)), [0.0, -0.25])
    assert len(loaded.table) == 2


def test_load_law_rejects_other_versions(tmp_path) -> None:
    path = tmp_path / "law.txt"
    path.write_text('# law\n{"format_version": 99, "g": 0, "mu": 1}\nlinear_K none\n', encoding="utf-8")
    with pytest.raises(IOFailure):
        load_law(path)
    with pytest.raises(IOFailure):
        load_law(tmp_path / "missing.txt")


def test_yield_threshold_brackets_rigidity(geometry, loose_solver) -> None:
    cell = CellConfig(resolution_y=RESOLUTION[0], resolution_z=RESOLUTION[1])
    law = EffectiveLaw(geometry=geometry, g=0.1, mu=1.0, cell=cell, solver=loose_solver)
    threshold = estimate_yield_threshold(geometry, (1.0, 0.0), 0.1, 1.0, cell, loose_solver, law)
    assert threshold > 0.0
    assert list(law.yield_thresholds.values()) == [threshold]
    below = solve_nonlinear_cell(geometry, (0.9 * threshold, 0.0), 0.1, 1.0, resolution=RESOLUTION, cfg=loose_solver)
    above = solve_nonlinear_cell(geometry, (1.1 * threshold, 0.0), 0.1, 1.0, resolution=RESOLUTION, cfg=loose_solver)
    assert below.rigid
    np.testing.assert_array_equal(below.K, 0.0)
    assert not above.rigid
    assert above.K[0] > 0.0


@pytest.mark.slow
def test_tabulated_law_is_monotone(geometry, loose_solver) -> None:
    cell = CellConfig(resolution_y=RESOLUTION[0], resolution_z=RESOLUTION[1], table_size=3)
    law = build_law(geometry, 0.1, 1.0, cell, loose_solver)
    axes = tabulate_law(law)
    assert axes[0].size > 3
    assert set(law.yield_thresholds) == {"1,0", "0,1"}
    lams, values = law.samples()
    assert lams.shape[0] * (lams.shape[0] - 1) // 2 >= 100
    # Well inside the yield surface the law vanishes.
    assert not np.any(values[np.linalg.norm(lams, axis=1) < 0.5 * min(law.yield_thresholds.values())])
    scale = float(np.abs(values).max()) * float(np.abs(lams).max())
    assert monotonicity_defect(law) >= -1e-3 * scale
