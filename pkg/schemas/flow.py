"""
Flow schemas.

Pydantic models for the run configuration, the per-step trajectory records,
the disc reports of the degenerate case and the trajectory container.
"""

from typing import Any, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Classification = Literal["ConvergedCylinder", "DegenerateTwoDiscs", "ThreePointDegenerate", "MaxTime"]
OdeEventKind = Literal["ell_floor", "b_ceiling"]
Side = Literal["plus", "minus"]


class FlowConfig(BaseModel):
    """
    Complete description of one flow run. Every field maps to one key of
    the INI config (see SECTION_KEYS); defaults reproduce the documented ones.
    """

    model_config = ConfigDict(extra="forbid")

    # [grid]
    n_x: int = Field(64, description="Cells over x in [-1, 1]; at least 8.")
    n_theta: int = Field(48, description="Periodic cells over θ; at least 12 and divisible by 3.")

    # [flow]
    h: float = Field(1e-2, description="Time step of the scheme.")
    t_max: float = Field(5.0, description="Final time T; 0 returns the initial record only.")
    eta: float = Field(1.0, description="Parameter η of the collar family.")
    ell_init: Optional[float] = Field(None, description="Initial ℓ; defaults to ℓ0(η), the identity chart.")
    n_sub: int = Field(4, description="Midpoint substeps of the metric ODE per time step.")
    clamp: bool = Field(False, description="Apply the L-infinity clamp after every map step.")

    # [tolerances]
    tol_lin: float = Field(1e-10, description="Relative residual of the interior CG solve.")
    tol_kkt: float = Field(1e-8, description="Projected-gradient tolerance on the boundary lifts.")
    eps_stat: float = Field(1e-3, description="Stop when ‖1/4 P^V Re Φ‖ falls below this value ...")
    eps_map: float = Field(1e-3, description="... and ‖D_t^h u‖ falls below this value.")
    eps_half: float = Field(5e-2, description="Per-half stationarity residual accepted after an ℓ-floor event.")
    max_inner: int = Field(200, description="Maximum block-descent sweeps per map step.")
    rel_decrease: float = Field(1e-11, description="Relative objective decrease ending the inner iteration.")
    max_relax: int = Field(200, description="Maximum frozen-metric map steps after an ℓ-floor event.")

    # [classification]
    ell_floor: float = Field(1e-6, description="ℓ at which the cylinder is declared degenerate.")
    b_ceiling: float = Field(0.995, description="|b^±| at which the three-point normalisation degenerates.")

    # [curves]
    curve_preset: Optional[str] = Field(None, description="Name of a built-in curve preset.")
    curve_plus: Optional[str] = Field(None, description="Curve file for Γ^+ (x = +1).")
    curve_minus: Optional[str] = Field(None, description="Curve file for Γ^- (x = -1).")

    # [output]
    output_dir: str = Field("output", description="Directory receiving trajectory, state dump and meshes.")
    mesh_stride: int = Field(0, description="Export an OBJ mesh every this many steps; 0 exports the final mesh only.")
    log_stride: int = Field(10, description="Log a step summary every this many steps.")

    @field_validator("n_x")
    @classmethod
    def _check_n_x(cls, v: int) -> int:
        if v < 8:
            raise ValueError("n_x must be at least 8")
        return v

    @field_validator("n_theta")
    @classmethod
    def _check_n_theta(cls, v: int) -> int:
        if v < 12 or v % 3 != 0:
            raise ValueError("n_theta must be at least 12 and divisible by 3")
        return v

    @field_validator("h", "eta", "tol_lin", "tol_kkt", "eps_stat", "eps_map", "eps_half", "rel_decrease", "ell_floor")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not np.isfinite(v) or v <= 0:
            raise ValueError("must be positive")
        return float(v)

    @field_validator("t_max")
    @classmethod
    def _nonnegative(cls, v: float) -> float:
        if not np.isfinite(v) or v < 0:
            raise ValueError("must be nonnegative")
        return float(v)

    @field_validator("ell_init")
    @classmethod
    def _check_ell_init(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and (not np.isfinite(v) or v <= 0):
            raise ValueError("must be positive")
        return v

    @field_validator("b_ceiling")
    @classmethod
    def _check_ceiling(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("must lie in (0, 1)")
        return float(v)

    @field_validator("n_sub", "max_inner", "max_relax", "log_stride")
    @classmethod
    def _at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @field_validator("mesh_stride")
    @classmethod
    def _stride(cls, v: int) -> int:
        if v < 0:
            raise ValueError("must be nonnegative")
        return v

    @model_validator(mode="after")
    def _check_curves(self) -> "FlowConfig":
        files = (self.curve_plus is not None, self.curve_minus is not None)
        if self.curve_preset is None and not all(files):
            raise ValueError("either curve_preset or both curve_plus and curve_minus are required")
        if self.curve_preset is not None and any(files):
            raise ValueError("curve_preset excludes curve files")
        return self


SECTION_KEYS: dict[str, tuple[str, ...]] = {
    "grid": ("n_x", "n_theta"),
    "flow": ("h", "t_max", "eta", "ell_init", "n_sub", "clamp"),
    "tolerances": ("tol_lin", "tol_kkt", "eps_stat", "eps_map", "eps_half", "max_inner", "rel_decrease", "max_relax"),
    "classification": ("ell_floor", "b_ceiling"),
    "curves": ("curve_preset", "curve_plus", "curve_minus"),
    "output": ("output_dir", "mesh_stride", "log_stride"),
}


class FlowRecord(BaseModel):
    """One row of trajectory.csv."""

    step: int
    time: float
    energy: float
    area: float
    ell: float
    re_b_plus: float
    im_b_plus: float
    re_b_minus: float
    im_b_minus: float
    phi_plus: float
    phi_minus: float
    winding_plus: int = Field(..., description="n^+ = floor(φ^+/2π)")
    winding_minus: int = Field(..., description="n^- = floor(φ^-/2π)")
    phi_plus_mod: float = Field(..., description="φ^+ - 2π n^+ in [0, 2π)")
    phi_minus_mod: float = Field(..., description="φ^- - 2π n^- in [0, 2π)")
    dtu_norm: float = Field(..., description="‖D_t^h u‖_{L^2(g)}")
    dtg_norm: float = Field(..., description="‖∂_t g‖_{L^2(g)} at the start of the metric phase")
    projected_norm: float = Field(..., description="‖1/4 P^V Re Φ‖_{L^2(g)} at the record")
    hopf_l1: float = Field(..., description="‖Re Φ‖_{L^1(g)}")
    weighted_energy: float = Field(..., description="I = ∫ e(u, g) ρ^{-2} dv_g")
    stationarity: float = Field(..., description="Probe-field stationarity residual relative to E")
    energy_lower_bound: float = Field(..., description="π δ_Γ^2 / (2 Y(ℓ))")
    metric_length: float = Field(..., description="Length ∫‖∂_t g‖ dt of the metric curve so far")


RECORD_COLUMNS = tuple(FlowRecord.model_fields)


class DiscReport(BaseModel):
    """One half C^± of a degenerated cylinder."""

    side: Side
    area: float
    energy: float
    conformality_l1: float = Field(..., description="‖Re Φ‖_{L^1} on the half, restricted to |x| >= 0.1")
    conformality_relative: float = Field(..., description="conformality_l1 divided by the energy of the half")
    boundary_span: float = Field(..., description="Total variation of the boundary lift over one turn; 2π exactly when Γ^± is covered once monotonically")
    monotonicity_violation: float = Field(..., description="Largest backward step of the boundary lift, 0 for a monotone lift")
    trace_error: float = Field(..., description="Largest distance of boundary values from the curve")
    stationarity: float = Field(..., description="Stationarity residual of the half")


class FlowTrajectory(BaseModel):
    """Append-only list of records plus the end-of-run information used by classify."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: list[FlowRecord] = Field(default_factory=list)
    event: Optional[OdeEventKind] = None
    half_stationarity: Optional[tuple[float, float]] = None
    relaxation_converged: Optional[bool] = None
    classification: Optional[Classification] = None
    delta_gamma: Optional[float] = None
    final_map: Any = Field(None, exclude=True)
    final_state: Any = Field(None, exclude=True)

    def append(self, record: FlowRecord) -> None:
        if self.records and record.time <= self.records[-1].time:
            raise ValueError("trajectory times must be strictly increasing")
        self.records.append(record)

    @property
    def last(self) -> FlowRecord:
        return self.records[-1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.records], columns=list(RECORD_COLUMNS))
