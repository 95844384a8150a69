"""Pydantic models shared across the freshness analysis."""

from __future__ import annotations

import math
from enum import StrEnum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SeriesControl(BaseModel):
    """Truncation policy for the infinite series."""

    model_config = ConfigDict(frozen=True)

    rel_tolerance: float = Field(default=1e-12, gt=0)
    max_terms: int = Field(default=500, ge=1)


class GammaParams(BaseModel):
    """Shape/rate parameters of the Gamma consensus-latency distribution."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., gt=0)
    beta: float = Field(..., gt=0)

    @property
    def mean(self) -> float:
        return self.alpha / self.beta

    @property
    def sd(self) -> float:
        return math.sqrt(self.alpha) / self.beta

    @property
    def skewness(self) -> float:
        return 2.0 / math.sqrt(self.alpha)


class ChannelParams(BaseModel):
    """Uplink channel parameters, all in SI units.

    Attributes:
        P: Transmit power (W).
        N0: Noise power spectral density (W/Hz).
        W: Bandwidth (Hz).
        lambda_bs: Base-station (interferer) density (per m^2).
        l: Source to base-station distance (m).
        n: Pathloss exponent, strictly above 2.
    """

    model_config = ConfigDict(frozen=True)

    P: float = Field(..., gt=0)
    N0: float = Field(..., gt=0)
    W: float = Field(..., gt=0)
    lambda_bs: float = Field(..., gt=0)
    l: float = Field(..., gt=0)
    n: float = Field(..., gt=2)


class AoiModel(BaseModel):
    """Everything the closed forms consume: latency law, effective rate and T_tx."""

    model_config = ConfigDict(frozen=True)

    gamma: GammaParams
    rho: float = Field(..., gt=0)
    t_tx: float = Field(default=0.0, ge=0)

    @property
    def mean_cycle(self) -> float:
        """Mean inter-update time E[T_k] = 1/rho + alpha/beta."""
        return 1.0 / self.rho + self.gamma.mean

    def slack(self, v: float | TargetAoi) -> float:
        """Return T_v = (v - t_tx)+ for a target AoI."""
        target = v if isinstance(v, TargetAoi) else TargetAoi(v=v)
        return target.slack(self.t_tx)


class TargetAoi(BaseModel):
    """A target age v (seconds)."""

    model_config = ConfigDict(frozen=True)

    v: float = Field(..., ge=0)

    def slack(self, t_tx: float) -> float:
        return max(0.0, self.v - t_tx)


class Knob(StrEnum):
    """Ordering-service knob a measured parameter row was recorded under."""

    TARGET_STP = "target_stp"
    BLOCK_SIZE = "block_size"
    TIMEOUT = "timeout"


class HlfParamRow(BaseModel):
    """One measured row of fitted consensus-latency parameters."""

    model_config = ConfigDict(frozen=True)

    knob: Knob
    knob_value: float
    alpha: float = Field(..., gt=0)
    beta: float = Field(..., gt=0)
    avg_latency: float = Field(..., gt=0)
    sd: float = Field(..., gt=0)
    skewness: float
    ks_statistic: float = Field(..., ge=0, le=1)

    @property
    def gamma(self) -> GammaParams:
        return GammaParams(alpha=self.alpha, beta=self.beta)

    def mean_mismatch(self) -> float:
        """Return |alpha/beta - avg_latency|; reported only, several rows disagree."""
        return abs(self.alpha / self.beta - self.avg_latency)


class LatencyTrace(BaseModel):
    """Measured consensus latencies in seconds."""

    samples: list[float] = Field(..., min_length=2)

    @field_validator("samples")
    @classmethod
    def _positive(cls, value: list[float]) -> list[float]:
        for i, x in enumerate(value):
            if not (x > 0 and math.isfinite(x)):
                raise ValueError(f"sample #{i} is not a positive finite latency: {x!r}")
        return value


class FitReport(BaseModel):
    """Result of fitting a Gamma law to a trace and checking it with KS."""

    alpha: float
    beta: float
    mean: float
    sd: float
    skewness: float
    n_samples: int
    ks_statistic: float
    critical_value: float
    passed: bool

    @property
    def gamma(self) -> GammaParams:
        return GammaParams(alpha=self.alpha, beta=self.beta)


class ViolationResult(BaseModel):
    """A violation probability together with how it was obtained."""

    value: float = Field(..., ge=0, le=1)
    raw: float
    method: Literal["series", "quadrature"]
    clamped: bool = False
    note: str | None = None


class SimConfig(BaseModel):
    """Parameters of one Monte Carlo run.

    Exactly one of ``stop_updates`` and ``stop_horizon`` must be given.
    """

    model_config = ConfigDict(frozen=True)

    rho_s: float = Field(..., gt=0)
    zeta: float = Field(..., gt=0, le=1)
    t_tx: float = Field(default=0.0, ge=0)
    gamma: GammaParams
    stop_updates: int | None = Field(default=None, gt=0)
    stop_horizon: float | None = Field(default=None, gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    max_events: int = Field(default=200_000_000, gt=0)
    latency_trace: list[float] | None = None

    @model_validator(mode="after")
    def _one_stop(self) -> "SimConfig":
        if (self.stop_updates is None) == (self.stop_horizon is None):
            raise ValueError("exactly one of stop_updates / stop_horizon must be set")
        if self.latency_trace is not None:
            if not self.latency_trace or any(not (x > 0) for x in self.latency_trace):
                raise ValueError("latency_trace must be non-empty and strictly positive")
        return self

    @property
    def rho(self) -> float:
        return self.rho_s * self.zeta


class EmpiricalMetrics(BaseModel):
    """Time-average metrics measured on a sample path.

    ``covered_time`` and ``n_effective`` are the weights used when runs are merged.
    """

    avg_aoi: float
    p_v: dict[float, float]
    p_pv: dict[float, float]
    n_effective: int
    covered_time: float
    avg_aoi_stderr: float = 0.0
    p_v_stderr: dict[float, float] = Field(default_factory=dict)
