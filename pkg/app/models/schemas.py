from typing import Optional, List, Dict, Any, Literal
from pydantic import BaseModel, Field


SweepVariable = Literal["power_db", "l_sr", "none"]


class SweepSpec(BaseModel):
    """Sweep variable and its points"""
    variable: SweepVariable = Field("none", description="Swept quantity: power_db, l_sr or none")
    values: List[float] = Field(default_factory=list, description="Sweep points (dB for power_db, distance for l_sr)")


class TrialRecord(BaseModel):
    """Metrics of one scheme on one channel realization"""
    trial_index: int = Field(..., ge=0, description="Channel realization index")
    scheme: str = Field(..., description="Design scheme")
    sweep_value: float = Field(..., description="Sweep point this trial belongs to")
    capacity_bits: float = Field(..., ge=0, description="Sum capacity in bits per channel use")
    sum_mse: float = Field(..., gt=0, description="tr(E_1) + tr(E_2)")
    outer_iters: int = Field(..., ge=0, description="Outer sweeps run by the design")
    converged: bool = Field(..., description="Outer loop met its tolerance")
    termination: str = Field(..., description="tolerance, worsened or max_iters")
    non_monotone_sweeps: int = Field(0, ge=0, description="Outer sweeps that worsened the objective")
    precoder_fallbacks: int = Field(0, ge=0, description="Sweeps that kept the previous precoders")
    relay_fallbacks: int = Field(0, ge=0, description="Sweeps that kept the previous relay matrix")
    inner_iters: int = Field(0, ge=0, description="alpha iterations of the final relay update")
    inner_maxed_out: bool = Field(False, description="alpha iteration hit its cap")
    alpha_final: float = Field(0.0, description="alpha used for the final relay allocation")
    alpha_min: float = Field(0.0, description="Smallest alpha iterate")
    alpha_max: float = Field(0.0, description="Largest alpha iterate")
    power_residual: float = Field(0.0, description="Modified minus true relay power before rescaling")
    source1_power: float = Field(..., ge=0, description="tr(F_1 F_1^H)")
    source2_power: float = Field(..., ge=0, description="tr(F_2 F_2^H)")
    relay_power: float = Field(..., ge=0, description="True relay transmit power")
    feasible: bool = Field(..., description="All power constraints hold")


class PointSummary(BaseModel):
    """Ensemble statistics of one scheme at one sweep point"""
    scheme: str
    sweep_value: float
    trials: int
    ergodic_capacity: float
    capacity_stderr: float
    sum_mse: float
    mse_stderr: float
    capacity_samples: List[float] = Field(default_factory=list, description="Sorted ascending, for the ECDF")


class CampaignResult(BaseModel):
    """Aggregated campaign output"""
    sweep_variable: SweepVariable
    sweep_values: List[float]
    schemes: List[str]
    trials: int
    seed: int
    config: Dict[str, Any] = Field(..., description="Snapshot of the base network configuration")
    summaries: List[PointSummary] = Field(default_factory=list)
    records: List[TrialRecord] = Field(default_factory=list)

    def summary(self, scheme: str, sweep_value: float) -> PointSummary:
        for item in self.summaries:
            if item.scheme == scheme and item.sweep_value == sweep_value:
                return item
        raise KeyError(f"no summary for {scheme} at {sweep_value}")


class SimulateRequest(BaseModel):
    """Request model for simulate endpoint"""
    mode: Literal["capacity", "mse"] = Field("capacity", description="Design criterion")
    schemes: List[str] = Field(default_factory=lambda: ["jds", "nas", "sos", "nod"], description="Schemes to compare")
    sweep: SweepSpec = Field(default_factory=SweepSpec, description="Sweep definition")
    trials: int = Field(20, ge=1, description="Channel realizations per sweep point")
    seed: int = Field(2012, ge=0, description="Base seed")
    ns: int = Field(4, ge=1)
    nr: int = Field(4, ge=1)
    nd: int = Field(4, ge=1)
    p_db: float = Field(20.0, description="P1 = P2 = Pr in dB")
    lsr: float = Field(5.0, gt=0)
    lrd: float = Field(5.0, gt=0)
    include_graph: bool = Field(False, description="Attach a base64 PNG of the results")


class SimulateResponse(BaseModel):
    """Response model for simulate endpoint"""
    run_id: str = Field(..., description="Identifier to fetch the run again")
    summaries: List[PointSummary] = Field(..., description="Per scheme and sweep point statistics")
    graph: Optional[str] = Field(None, description="Base64-encoded graph image")


class DesignRequest(BaseModel):
    """Request model for a single-realization design"""
    mode: Literal["capacity", "mse"] = "capacity"
    schemes: List[str] = Field(default_factory=lambda: ["jds", "nas", "sos", "nod"])
    seed: int = Field(2012, ge=0)
    trial_index: int = Field(0, ge=0)
    ns: int = Field(4, ge=1)
    nr: int = Field(4, ge=1)
    nd: int = Field(4, ge=1)
    p_db: float = 20.0
    lsr: float = Field(5.0, gt=0)
    lrd: float = Field(5.0, gt=0)


class DesignResponse(BaseModel):
    """Response model for a single-realization design"""
    records: List[TrialRecord]


class ErrorResponse(BaseModel):
    """Error response model"""
    error: str = Field(..., description="Error message")
    detail: Optional[str] = Field(None, description="Additional error details")


class HealthResponse(BaseModel):
    """Health check response model"""
    status: str = Field(..., description="Service status")
    version: str = Field(..., description="API version")
