"""Configuration, report and error types shared across the lab."""

import hashlib
import json
import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from .config import (
    DEFAULT_EPS,
    DEFAULT_HORIZON,
    DEFAULT_LEVELS,
    DEFAULT_OUT,
    DEFAULT_REPLICATES,
    DEFAULT_SEED,
)


class IpdiffError(Exception):
    """Base class for all lab errors."""


class ParameterDomainError(IpdiffError, ValueError):
    """A parameter lies outside its domain, or is NaN/infinite."""


class GridError(ParameterDomainError):
    """A time grid is incompatible with the path it should resolve."""


class ResolutionError(IpdiffError):
    """An estimator cannot resolve the requested quantity at the given grid or truncation."""


class HorizonExhausted(IpdiffError):
    """The simulation horizon ran out before the stopping event."""

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class AbsorptionSignal(IpdiffError):
    """A total-mass path hit zero before the requested time change completed."""

    def __init__(self, message: str, level: float):
        super().__init__(message)
        self.level = level


class ConfigError(IpdiffError):
    """Invalid command line or configuration file."""


def check_real(name: str, value: float, *, low: Optional[float] = None, high: Optional[float] = None,
               low_open: bool = False, high_open: bool = False) -> float:
    """Validate a finite real against an interval; raise ParameterDomainError otherwise."""
    try:
        v = float(value)
    except (TypeError, ValueError) as e:
        raise ParameterDomainError(f"{name} must be a real number, got {value!r}") from e
    if not math.isfinite(v):
        raise ParameterDomainError(f"{name} must be finite, got {v}")
    if low is not None and (v < low or (low_open and v == low)):
        raise ParameterDomainError(f"{name}={v} below domain {'(' if low_open else '['}{low}")
    if high is not None and (v > high or (high_open and v == high)):
        raise ParameterDomainError(f"{name}={v} above domain {high}{')' if high_open else ']'}")
    return v


class GlobalParams(BaseModel):
    """Stable index alpha; the Bessel dimension is derived as d = 1 - alpha."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., gt=0.0, lt=1.0, description="Stable index of the scaffolding is 1 + alpha")

    @computed_field
    @property
    def d(self) -> float:
        return 1.0 - self.alpha

    @classmethod
    def from_d(cls, d: float) -> "GlobalParams":
        check_real("d", d, low=0.0, high=1.0, low_open=True, high_open=True)
        return cls(alpha=1.0 - d)


class RunConfig(BaseModel):
    """Complete description of one command invocation."""
    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "command": "verify",
                "alpha": 0.5,
                "eps": 0.001,
                "levels": [0.25, 0.5, 1.0],
                "replicates": 200,
                "master_seed": 20240101,
                "suite": "trivial",
            }
        },
    )

    command: Literal["simulate", "verify", "crosscheck", "laws"] = "verify"
    alpha: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    d: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    eps: float = Field(default=DEFAULT_EPS, gt=0.0, description="Small-jump truncation")
    dt: Optional[float] = Field(default=None, gt=0.0, description="Spindle grid step; default is a fraction of each lifetime")
    levels: List[float] = Field(default_factory=lambda: list(DEFAULT_LEVELS))
    replicates: int = Field(default=DEFAULT_REPLICATES, ge=1)
    horizon: float = Field(default=DEFAULT_HORIZON, gt=0.0)
    master_seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    out: str = Field(default=DEFAULT_OUT, min_length=1)
    threads: int = Field(default=1, ge=1)
    suite: str = "trivial"
    mode: Literal["type1", "type0", "bessel"] = "type1"
    initial_blocks: List[float] = Field(default_factory=lambda: [1.0])
    u: float = Field(default=1.0, ge=0.0)
    y_calib: Optional[float] = Field(default=None, gt=0.0)
    drop_constant: bool = False
    scale: float = Field(default=1.0, gt=0.0, description="Multiplier on every replicate count of a suite")
    dump_paths: bool = False

    @field_validator("levels")
    @classmethod
    def _levels_sorted(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("levels must be nonempty")
        if any(not math.isfinite(y) or y < 0 for y in v):
            raise ValueError("levels must be finite and nonnegative")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("levels must be strictly increasing")
        return v

    @field_validator("initial_blocks")
    @classmethod
    def _blocks_positive(cls, v: List[float]) -> List[float]:
        if any(not math.isfinite(b) or b <= 0 for b in v):
            raise ValueError("initial blocks must be positive")
        return v

    @model_validator(mode="after")
    def _one_of_alpha_d(self) -> "RunConfig":
        if (self.alpha is None) == (self.d is None):
            raise ValueError("exactly one of alpha and d must be given")
        return self

    @property
    def params(self) -> GlobalParams:
        if self.alpha is not None:
            return GlobalParams(alpha=self.alpha)
        return GlobalParams.from_d(self.d)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


class LawSpec(BaseModel):
    """Registry entry for a closed-form reference law."""
    name: str = Field(..., min_length=1)
    anchor: str = Field(..., description="Result the law is quoted from")
    kind: Literal["laplace_transform", "tail_rate", "density", "sampler"]
    parameters: Dict[str, Any] = Field(default_factory=dict)
    domain: str = ""
    formula: str = ""


class TestReport(BaseModel):
    """Outcome of one Monte Carlo comparison against a reference law."""
    __test__ = False

    name: str
    anchor: str
    sample_sizes: List[int] = Field(default_factory=list)
    statistic: float = float("nan")
    p_value: Optional[float] = None
    z_scores: List[float] = Field(default_factory=list)
    passed: bool
    tolerance: str
    runtime_seconds: float = 0.0
    metadata: Dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "name": "besq0-total-mass",
                "anchor": "total mass process of a type-1 evolution is BESQ(0)",
                "sample_sizes": [10000],
                "statistic": 1.3,
                "z_scores": [0.4, -1.3, 0.9],
                "passed": True,
                "tolerance": "|z| <= 4",
            }
        }
    )
