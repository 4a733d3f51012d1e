from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class PauliCoeff(BaseModel):
    term: str = Field(..., min_length=1, description="Pauli string over the subsystems in canonical order, e.g. IZZI.")
    coeff: float


class ProcessFile(BaseModel):
    """On-disk / on-wire form of a process matrix."""
    dims: Dict[str, int] = Field(..., description="Subsystem dimensions: AI, AO, BI, BO and optionally AIp, BIp.")
    format: Literal["pauli", "dense"] = "pauli"
    pauli_coeffs: Optional[List[PauliCoeff]] = Field(
        default=None, description="Nonzero Pauli coefficients (qubit processes).")
    dense: Optional[List[Tuple[float, float]]] = Field(
        default=None, description="Row-major matrix entries as [re, im] pairs.")

    @model_validator(mode="after")
    def _one_payload(self) -> "ProcessFile":
        if (self.pauli_coeffs is None) == (self.dense is None):
            raise ValueError("exactly one of pauli_coeffs / dense must be present")
        expected = "pauli_coeffs" if self.format == "pauli" else "dense"
        if getattr(self, expected) is None:
            raise ValueError(f"format {self.format!r} requires the {expected} field")
        return self


class GameFile(BaseModel):
    settings: Tuple[int, int]
    outcomes: Tuple[int, int]
    coeffs: List[Tuple[int, int, int, int, float]] = Field(
        ..., description="Sparse entries [a, b, x, y, c].")
    bound: Optional[float] = Field(default=None, description="Causal bound; computed when omitted.")
    name: str = "custom"


class TableFile(BaseModel):
    settings: Tuple[int, int]
    outcomes: Tuple[int, int]
    entries: List[Tuple[int, int, int, int, float]] = Field(
        ..., description="Sparse entries [a, b, x, y, p]; missing entries are zero.")


class RunManifest(BaseModel):
    """Everything needed to rerun a command that produced a CSV."""
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    seeds: List[int] = Field(default_factory=list)
    tool_version: str
    wall_time: float = Field(..., ge=0.0, description="Seconds.")
    created_at: str
    output: Optional[str] = None
    rows: int = 0


# ----------------------------------------------------------------------
# HTTP bodies
# ----------------------------------------------------------------------

class RobustnessRequest(BaseModel):
    process: ProcessFile
    tol: Optional[float] = Field(default=None, gt=0.0, description="Interior-point tolerance.")


class RobustnessResponse(BaseModel):
    lambda_opt: float
    separable: bool
    witness: Optional[List[PauliCoeff]] = None
    solver: Dict[str, Any] = Field(default_factory=dict)


class ValidityResponse(BaseModel):
    psd: bool
    normalized: bool
    in_valid_subspace: bool
    min_eigenvalue: float
    trace: float
    subspace_defect: float
    valid: bool


class WitnessResponse(BaseModel):
    terms: List[PauliCoeff]
    check_passed: bool
    certified: Optional[bool] = None
    certificate_value: Optional[float] = None


class RegionRow(BaseModel):
    q: float
    eps_v: float
    eps_c: float


class WernerWindowResponse(BaseModel):
    alpha: float
    r_mix: float
    r_mix_tb: float
    gamma_low: float
    gamma_high: float
    closed_forms: Dict[str, float]
    gamma_check: Optional[float] = None
    r_wer: Optional[float] = None
    r_wer_tb: Optional[float] = None
    check_passed: Optional[bool] = None


class CausalLPRequest(BaseModel):
    table: TableFile
    tol: Optional[float] = Field(default=None, gt=0.0)


class CausalLPResponse(BaseModel):
    causal: bool
    q: Optional[float] = None
    certificate: Optional[List[Tuple[int, int, int, int, float]]] = None
    certificate_bound: Optional[float] = None
    certificate_value: Optional[float] = None
