"""Data models for porous-bingham.

This module defines the Pydantic models used for configuration files, solver
settings and the machine-readable reports written by the harness.

Example:
    >>> from porous_bingham.models import SolverConfig
    >>> cfg = SolverConfig(tol_aux=1e-7)
    >>> cfg.model_dump()["linear_solver"]
    'direct'
"""
# Import future modules
from __future__ import annotations

# Import built-in modules
import json
import logging
from pathlib import Path
from typing import Any
from typing import List
from typing import Literal
from typing import Optional

# Import third-party modules
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import field_validator
from pydantic import model_validator


class SolverConfig(BaseModel):
    """Settings shared by the Stokes and Bingham saddle-point solvers.

    Attributes:
        tol_div: Target for the max-norm of the discrete divergence
        tol_vi: Relative target for the variational-inequality residual
        tol_aux: Relative target for the splitting residual ``|Gv - w|``
        max_outer: Cap on augmented-Lagrangian iterations
        augmentation: Augmentation parameter ``r``; ``None`` means ``mu_eff``
        linear_solver: ``direct`` (sparse LU) or ``cg`` (augmented Uzawa)
    """

    model_config = ConfigDict(
        json_schema_extra={
            "examples": [
                {
                    "tol_div": 1e-9,
                    "tol_vi": 1e-5,
                    "tol_aux": 1e-6,
                    "max_outer": 5000,
                    "linear_solver": "direct",
                },
            ],
        },
    )

    tol_div: float = Field(1e-9, gt=0, description="Divergence residual target (max norm)")
    tol_vi: float = Field(1e-5, gt=0, description="Relative variational-inequality residual target")
    tol_aux: float = Field(1e-6, gt=0, description="Relative splitting residual target")
    max_outer: int = Field(5000, ge=1, description="Maximum number of outer iterations")
    augmentation: Optional[float] = Field(
        None,
        gt=0,
        description="Augmentation parameter r; defaults to the effective viscosity",
    )
    linear_solver: Literal["direct", "cg"] = Field("direct", description="Inner linear solver")
    linear_tol: float = Field(1e-12, gt=0, description="Relative tolerance of the iterative linear solver")
    linear_max_iter: int = Field(2000, ge=1, description="Iteration cap of the iterative linear solver")
    check_every: int = Field(25, ge=1, description="Evaluate the probe residual every N iterations")
    n_probes: int = Field(5, ge=0, description="Number of random admissible probes")
    rigid_tol: float = Field(
        1e-4,
        gt=0,
        description="A converged state whose gradient is below rigid_tol times the first iterate is rigid",
    )
    seed: int = Field(0, description="Seed for the random probes")


class BoxModel(BaseModel):
    """Axis-aligned box given by its lower corner and extents."""

    corner: List[float] = Field(..., description="Lower corner", examples=[[0.25, 0.25]])
    extents: List[float] = Field(..., description="Edge lengths", examples=[[0.5, 0.5]])

    @model_validator(mode="after")
    def _same_dimension(self) -> BoxModel:
        if len(self.corner) != len(self.extents):
            raise ValueError("corner and extents must have the same length")
        return self


class CellModel(BaseModel):
    """Reference periodicity cell with its obstacle boxes."""

    lengths: List[float] = Field(..., description="Cell edge lengths", examples=[[1.0, 1.0]])
    obstacles: List[BoxModel] = Field(default_factory=list, description="Obstacle boxes in cell coordinates")


class GeometryModel(BaseModel):
    """Schema of a geometry file.

    Attributes:
        y_cell: The cell Y with its obstacles Y_s
        z_cell: The cell Z with its obstacles Z_s
        subdivision: Number of delta-Z cells tiling Y along each axis
        omega: Macroscopic box
        epsilon: Default scale used when the file is simulated directly
        grid_per_subcell: Grid points per subcell edge
    """

    model_config = ConfigDict(
        json_schema_extra={
            "examples": [
                {
                    "y_cell": {
                        "lengths": [1.0, 1.0],
                        "obstacles": [{"corner": [0.25, 0.25], "extents": [0.5, 0.5]}],
                    },
                    "z_cell": {
                        "lengths": [1.0, 1.0],
                        "obstacles": [{"corner": [0.25, 0.25], "extents": [0.5, 0.5]}],
                    },
                    "subdivision": [4, 4],
                    "omega": {"corner": [0.0, 0.0], "extents": [1.0, 1.0]},
                    "epsilon": 0.5,
                    "grid_per_subcell": 8,
                },
            ],
        },
    )

    y_cell: CellModel
    z_cell: CellModel
    subdivision: List[int] = Field(..., description="delta-Z cells per Y edge", examples=[[4, 4]])
    omega: BoxModel = Field(
        default_factory=lambda: BoxModel(corner=[0.0, 0.0], extents=[1.0, 1.0]),
        description="Macroscopic domain",
    )
    epsilon: float = Field(0.5, gt=0, lt=1, description="Scale of the Y cells")
    grid_per_subcell: int = Field(8, ge=1, description="Grid points per delta-Z subcell edge")

    @classmethod
    def from_file(cls, path: str | Path) -> GeometryModel:
        """Read and validate a geometry JSON file."""
        # Import local modules
        from porous_bingham.exceptions import IOFailure

        try:
            with open(path, encoding="utf-8") as f:
                payload = json.load(f)
        except OSError as e:
            raise IOFailure(f"Cannot read geometry file {path}: {e}") from e
        return cls.model_validate(payload)


class PhysicsConfig(BaseModel):
    """Material parameters and forcing."""

    g: float = Field(0.0, ge=0, description="Yield stress")
    mu: float = Field(1.0, gt=0, description="Viscosity")
    forcing: str = Field(
        "swirl",
        description="Forcing preset name, a .py forcing plugin, or a gridded .csv file",
        examples=["uniform", "swirl", "my_forcing.py", "forcing.csv"],
    )
    forcing_scale: float = Field(1.0, description="Multiplier applied to the forcing")


class CellConfig(BaseModel):
    """Resolution and strategy of the cell problems."""

    resolution_y: int = Field(8, ge=2, description="Grid cells per Y edge")
    resolution_z: int = Field(8, ge=4, description="Grid cells per Z edge")
    strategy: Literal["product", "two_level"] = Field("product", description="Nonlinear cell strategy")
    table_size: int = Field(9, ge=3, description="Base points per axis of the tabulated law")
    table_extent: Optional[float] = Field(
        None,
        gt=0,
        description="Half-width of the tabulated lambda box; defaults to the forcing magnitude bound",
    )
    outer_tol: float = Field(1e-6, gt=0, description="Relative tolerance of the two-level outer iteration")
    outer_max_iter: int = Field(200, ge=1, description="Iteration cap of the two-level outer iteration")


class MacroConfig(BaseModel):
    """Settings of the homogenized Darcy solver."""

    resolution: Optional[int] = Field(None, ge=2, description="Macro cells per axis; defaults to twice the finest n")
    damping: float = Field(0.5, gt=0, le=1, description="Picard damping factor")
    aitken: bool = Field(False, description="Enable Aitken acceleration of the Picard step")
    tol: float = Field(1e-10, gt=0, description="Relative divergence tolerance")
    max_iter: int = Field(500, ge=1, description="Picard iteration cap")


class SuiteConfig(BaseModel):
    """Settings of the property suites."""

    epsilons: List[float] = Field(default_factory=lambda: [0.5, 0.25, 0.125])
    grid_per_subcell: int = Field(4, ge=1)
    weak_ratio: float = Field(0.1, gt=0, le=1, description="Required final/initial ratio of weak gaps")
    identity_tol: float = Field(1e-12, gt=0, description="Tolerance of the exact unfolding identities")
    include_cell: bool = Field(True, description="Run the cell-problem suite")
    include_saddle: bool = Field(True, description="Run the saddle-solver suite")


class StudyConfig(BaseModel):
    """Complete configuration of a study run.

    Attributes:
        geometry: Path to the geometry file
        physics: Yield stress, viscosity and forcing
        epsilons: Strictly decreasing dyadic list of scales
        delta_mode: ``fixed`` keeps delta, ``proportional`` halves it with epsilon
        output_dir: Where results are written
        seed: Seed for every random quantity
    """

    model_config = ConfigDict(
        json_schema_extra={
            "examples": [
                {
                    "geometry": "default.json",
                    "physics": {"g": 0.0, "mu": 1.0, "forcing": "swirl"},
                    "epsilons": [0.5, 0.25, 0.125],
                    "delta_mode": "fixed",
                    "grid_per_subcell": 8,
                    "output_dir": "results",
                    "seed": 0,
                },
            ],
        },
    )

    geometry: str = Field("default", description="Geometry file or shipped geometry name")
    physics: PhysicsConfig = Field(default_factory=PhysicsConfig)
    epsilons: List[float] = Field(default_factory=lambda: [0.5, 0.25, 0.125])
    delta_mode: Literal["fixed", "proportional"] = Field("fixed")
    grid_per_subcell: int = Field(8, ge=4, description="Grid points per epsilon-delta subcell edge")
    solver: SolverConfig = Field(default_factory=SolverConfig)
    cell: CellConfig = Field(default_factory=CellConfig)
    macro: MacroConfig = Field(default_factory=MacroConfig)
    suite: SuiteConfig = Field(default_factory=SuiteConfig)
    output_dir: str = Field("results")
    seed: int = Field(0)

    @field_validator("epsilons")
    @classmethod
    def _dyadic(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("at least one epsilon level is required")
        for eps in value:
            if not 0 < eps < 1:
                raise ValueError(f"epsilon must lie in (0, 1), got {eps}")
        for coarse, fine in zip(value, value[1:]):
            if abs(fine * 2.0 - coarse) > 1e-12 * coarse:
                raise ValueError(f"epsilon levels must halve: {coarse} -> {fine}")
        return value

    @field_validator("grid_per_subcell")
    @classmethod
    def _resolution_hint(cls, value: int) -> int:
        if value < 8:
            logging.getLogger(__name__).warning(
                "grid_per_subcell=%d is below the recommended 8 points per subcell",
                value,
            )
        return value


class CheckResult(BaseModel):
    """One named pass/fail check with its measured value."""

    name: str = Field(..., examples=["covering"])
    passed: bool
    measured: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ""


class GeometryReport(BaseModel):
    """Result of validating a cell geometry."""

    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str) -> CheckResult:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)


class PropertyReport(BaseModel):
    """Aggregated pass/fail report of the property suites."""

    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str) -> CheckResult:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)

    def extend(self, other: PropertyReport) -> None:
        self.checks.extend(other.checks)


class GradientIdentityReport(BaseModel):
    """Pointwise gaps of the two unfolding gradient identities."""

    gap_y: float
    gap_z: float
    scale: float
    tolerance: float = 1e-12

    @property
    def passed(self) -> bool:
        return max(self.gap_y, self.gap_z) <= self.tolerance * max(self.scale, 1.0)


class AprioriNorms(BaseModel):
    """The three norms bounded by the a-priori estimates and their ratio to the forcing."""

    u_l2: float
    scaled_grad_u_l2: float
    p_ext_l2: float
    forcing_l2: float = 0.0
    bound_ratio: float = 0.0


class RigidZoneReport(BaseModel):
    """Consistency of a Bingham solution with the threshold law."""

    rigid_fraction: float
    rigid_strain: float
    strain_tolerance: float
    constitutive_residual: float
    constitutive_tolerance: float = 1e-6

    @property
    def passed(self) -> bool:
        return (
            self.rigid_strain <= self.strain_tolerance
            and self.constitutive_residual <= self.constitutive_tolerance
        )


class LevelRecord(BaseModel):
    """Per-level entry of a convergence study."""

    epsilon: float
    delta: float
    failed: bool = False
    error: str = ""
    norms: Optional[AprioriNorms] = None
    gap_u: Optional[float] = None
    gap_p: Optional[float] = None
    gap_p_fluid: Optional[float] = None
    pressure_cauchy: Optional[float] = None
    rigid_fraction: Optional[float] = None
    iterations: Optional[int] = None
    vi_residual: Optional[float] = None
    energy_balance: Optional[float] = None
    divergence_max: Optional[float] = None
    poincare_constant: Optional[float] = None
    threshold_law: Optional[RigidZoneReport] = None


class PoincareReport(BaseModel):
    """Poincare constants over a dyadic sweep and the fitted slope against ``eps delta``."""

    eps_delta: List[float] = Field(default_factory=list)
    constants: List[float] = Field(default_factory=list)
    slope: float = float("nan")
    lower: float = 0.85
    upper: float = 1.15

    @property
    def passed(self) -> bool:
        return self.lower <= self.slope <= self.upper


class ConvergenceReport(BaseModel):
    """Result of a homogenization convergence study."""

    levels: List[LevelRecord] = Field(default_factory=list)
    slopes: dict = Field(default_factory=dict)
    checks: List[CheckResult] = Field(default_factory=list)
    filtration_factor: Optional[float] = None
    geometry_hash: str = ""

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks) and not any(level.failed for level in self.levels)


class RunManifest(BaseModel):
    """Everything needed to reproduce a CLI run."""

    command: str
    version: str
    geometry_hash: str = ""
    config: dict = Field(default_factory=dict)
    results: dict = Field(default_factory=dict)
    passed: bool = True

    def payload(self) -> dict[str, Any]:
        return self.model_dump()
