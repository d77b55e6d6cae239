"""Pydantic schemas for scenario files and verification reports."""
import hashlib
import math
from datetime import datetime, timezone
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .core.environment import (
    EnvironmentSpec,
    ImmigrationAtom,
    ImmigrationFamily,
    OffspringFamily,
)


class Section(BaseModel):
    """Scenario section; unknown keys are errors."""

    model_config = ConfigDict(extra='forbid', frozen=True)


class EnvironmentSection(Section):
    """``[environment]``: offspring family, alpha, nu and immigration atoms."""

    family: OffspringFamily = OffspringFamily.LINEAR_FRACTIONAL
    alpha: float = Field(1.0, gt=0.0)
    nu: float = Field(0.0, ge=0.0)
    immigration: Dict[int, float] = Field(default_factory=dict, description="k -> c_k")
    start_index: Optional[int] = Field(default=None, ge=1)

    @field_validator('immigration')
    @classmethod
    def validate_immigration(cls, v: Dict[int, float]) -> Dict[int, float]:
        """Atoms are k >= 1 with weights c_k >= 0."""
        if any(k < 1 or c < 0.0 for k, c in v.items()):
            raise ValueError('immigration atoms need k >= 1 and c_k >= 0')
        return dict(sorted(v.items()))

    def to_spec(self) -> EnvironmentSpec:
        family = ImmigrationFamily.CATEGORICAL_SCALED if self.immigration else ImmigrationFamily.NONE
        return EnvironmentSpec(
            offspring_family=self.family,
            alpha=self.alpha,
            nu=self.nu,
            immigration_family=family,
            immigration_support=tuple(ImmigrationAtom(value=k, weight=c) for k, c in self.immigration.items()),
            start_index=self.start_index,
        )


class LimitSection(Section):
    """``[limit]``: the conditioning window and the limit-simulation sizes."""

    eps: float = Field(0.5, gt=0.0, le=1.0)
    z_replicates: int = Field(1_000_000, ge=1000)
    w_times: List[float] = Field(default_factory=lambda: [0.5, 1.0])
    kernel_cap: int = Field(64, ge=8)


class GridSection(Section):
    """``[grid]``: scaled observation times and scale parameters."""

    times: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    n_values: List[int] = Field(default_factory=lambda: [100, 1000, 10000])
    n_mc: int = Field(2000, ge=1)
    truncation: int = Field(256, ge=64)
    diagnostics_horizon: int = Field(100_000, ge=1)

    @field_validator('times')
    @classmethod
    def validate_times(cls, v: List[float]) -> List[float]:
        """Times are positive and strictly increasing; at most three are joint-checked."""
        if not v or v[0] <= 0.0 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError('grid times must be positive and strictly increasing')
        if len(v) > 3:
            raise ValueError('joint laws are checked on at most 3 time points')
        return v

    @field_validator('n_values')
    @classmethod
    def validate_n_values(cls, v: List[int]) -> List[int]:
        """Scale parameters are positive and increasing."""
        if not v or v[0] < 1 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError('n_values must be positive and strictly increasing')
        return v


class MCSection(Section):
    """``[mc]``: Monte Carlo sizes and seeding."""

    replicates: int = Field(100_000, ge=1000)
    seed: int = Field(20240601, ge=0, lt=2 ** 64)
    workers: int = Field(1, ge=1)
    batch_size: Optional[int] = Field(default=None, ge=1)


class ToleranceSection(Section):
    """``[tolerances]``: budgets per kind of check."""

    exact: float = Field(1e-8, gt=0.0)
    identity: float = Field(1e-12, gt=0.0)
    mc: float = Field(0.03, gt=0.0)
    yaglom: float = Field(0.02, gt=0.0)
    immigration: float = Field(0.02, gt=0.0)
    survival: float = Field(0.10, gt=0.0)
    mean: float = Field(0.05, gt=0.0)
    ratio: float = Field(0.01, gt=0.0)
    shape: float = Field(0.05, gt=0.0)
    rates: float = Field(1e-6, gt=0.0)
    simulator: float = Field(0.01, gt=0.0)
    scaling: float = Field(0.05, gt=0.0)
    z_score: float = Field(3.0, gt=0.0)


class ScenarioConfig(Section):
    """A complete scenario file."""

    name: str = Field(..., min_length=1)
    environment: EnvironmentSection = Field(default_factory=EnvironmentSection)
    limit: LimitSection = Field(default_factory=LimitSection)
    grid: GridSection = Field(default_factory=GridSection)
    mc: MCSection = Field(default_factory=MCSection)
    tolerances: ToleranceSection = Field(default_factory=ToleranceSection)

    @model_validator(mode='after')
    def validate_scenario(self) -> 'ScenarioConfig':
        """The environment must build and the grid must contain t = 1."""
        self.environment.to_spec()
        if not any(math.isclose(t, 1.0) for t in self.grid.times):
            raise ValueError('grid times must contain 1')
        if self.grid.times[0] < self.limit.eps and not math.isclose(self.grid.times[0], self.limit.eps):
            raise ValueError(f'grid starts below eps = {self.limit.eps}')
        return self

    @property
    def spec(self) -> EnvironmentSpec:
        return self.environment.to_spec()

    @property
    def inversion_closed(self) -> bool:
        keys = {round(t, 9) for t in self.grid.times}
        return {round(1.0 / t, 9) for t in self.grid.times} == keys

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()


class CheckRecord(BaseModel):
    """Outcome of one check."""

    name: str
    kind: Literal["exact", "tv", "scalar"]
    value: float = Field(description="Measured TV distance, residual or statistic")
    tolerance: float
    passed: bool
    reference: Optional[float] = Field(default=None, description="Target value of a scalar check")
    confidence_radius: Optional[float] = None
    samples: Optional[int] = None
    tail_mass: Optional[float] = None
    runtime_s: float = 0.0
    details: Dict[str, Any] = Field(default_factory=dict)


class PmfRow(BaseModel):
    """One row of ``pmf_<check>.csv``."""

    state: int
    exact: Optional[float] = None
    limit: Optional[float] = None
    mc: Optional[float] = None
    mc_ci_radius: Optional[float] = None


class PmfTable(BaseModel):
    """Per-state comparison behind one check."""

    check: str
    rows: List[PmfRow]


class ReportMetadata(BaseModel):
    """Provenance of a report."""

    scenario: str
    seed: int
    config_hash: str
    version: str
    truncation: int
    n_mc: int
    created: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))


class VerificationReport(BaseModel):
    """Checks and tables produced by one experiment."""

    experiment: str
    metadata: ReportMetadata
    checks: List[CheckRecord] = Field(default_factory=list)
    tables: List[PmfTable] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[CheckRecord]:
        return [check for check in self.checks if not check.passed]


class ErrorResponse(BaseModel):
    """Structured error payload printed on configuration errors."""

    error_type: str
    message: str
    details: Optional[Dict[str, Any]] = None
    timestamp: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
