"""Configuration: runtime settings from the environment and experiment files.

Experiment files are TOML with dotted keys (``channel.P_watts = 1.0``).
Nested tables are flattened to dotted keys so command-line overrides can be
merged key by key before validation.
"""
from __future__ import annotations

import math
import os
import tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Literal, Mapping, Union

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ledger_freshness.exceptions import ConfigError
from ledger_freshness.models import AoiModel, ChannelParams, GammaParams, Knob, LatencyTrace, SeriesControl, SimConfig

DEFAULT_SEED = 20190101
DEFAULT_V_GRID = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]


def dbm_per_hz_to_w_per_hz(value: float) -> float:
    """Convert a power spectral density from dBm/Hz to W/Hz."""
    return 10.0 ** ((value - 30.0) / 10.0)


def per_km2_to_per_m2(value: float) -> float:
    return value / 1e6


@dataclass
class RuntimeConfig:
    """Process-wide defaults.

    Attributes:
        seed: Default master seed for simulations.
        log_level: Logging level name.
        series_tol: Relative truncation tolerance of the infinite series.
        series_max_terms: Term cap of the infinite series.
    """

    seed: int = DEFAULT_SEED
    log_level: str = "WARNING"
    series_tol: float = 1e-12
    series_max_terms: int = 500

    @classmethod
    def from_env(cls) -> "RuntimeConfig":
        """Create configuration from environment variables.

        Environment variables:
            FRESHNESS_SEED: Master seed (default: 20190101)
            FRESHNESS_LOG_LEVEL: Logging level (default: "WARNING")
            FRESHNESS_SERIES_TOL: Series tolerance (default: 1e-12)
            FRESHNESS_SERIES_MAX_TERMS: Series term cap (default: 500)

        Raises:
            ConfigError: If a variable does not parse.
        """
        return cls(
            seed=_env("FRESHNESS_SEED", int, DEFAULT_SEED),
            log_level=os.getenv("FRESHNESS_LOG_LEVEL", "WARNING").upper(),
            series_tol=_env("FRESHNESS_SERIES_TOL", float, 1e-12),
            series_max_terms=_env("FRESHNESS_SERIES_MAX_TERMS", int, 500),
        )

    def validate(self) -> None:
        """Validate the configuration.

        Raises:
            ConfigError: If a value is out of range.
        """
        if not (0 <= self.seed < 2**64):
            raise ConfigError(f"FRESHNESS_SEED must lie in [0, 2^64), got {self.seed}")
        if self.log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"FRESHNESS_LOG_LEVEL is not a logging level: {self.log_level!r}")
        if not (0 < self.series_tol < 1):
            raise ConfigError(f"FRESHNESS_SERIES_TOL must lie in (0, 1), got {self.series_tol}")
        if self.series_max_terms < 1:
            raise ConfigError(f"FRESHNESS_SERIES_MAX_TERMS must be positive, got {self.series_max_terms}")

    def series_control(self) -> SeriesControl:
        return SeriesControl(rel_tolerance=self.series_tol, max_terms=self.series_max_terms)


def _env(name: str, cast: type, default: Any) -> Any:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {cast.__name__}") from exc


def get_runtime_config() -> RuntimeConfig:
    """Read and validate the runtime configuration."""
    config = RuntimeConfig.from_env()
    config.validate()
    return config


class ChannelInputs(BaseModel):
    """Channel parameters in the units experiment files use."""

    model_config = ConfigDict(extra="forbid")

    P_watts: float = Field(default=1.0, gt=0)
    N0_dbm_per_hz: float = -100.0
    W_hz: float = Field(default=1e6, gt=0)
    lambda_bs_per_km2: float = Field(default=1e-4, gt=0)
    l_m: float = Field(default=37.0, gt=0)
    n: float = Field(default=4.0, gt=2)

    def to_params(self) -> ChannelParams:
        return ChannelParams(
            P=self.P_watts,
            N0=dbm_per_hz_to_w_per_hz(self.N0_dbm_per_hz),
            W=self.W_hz,
            lambda_bs=per_km2_to_per_m2(self.lambda_bs_per_km2),
            l=self.l_m,
            n=self.n,
        )


class ExplicitGamma(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["explicit"] = "explicit"
    alpha: float = Field(..., gt=0)
    beta: float = Field(..., gt=0)

    def resolve(self) -> GammaParams:
        return GammaParams(alpha=self.alpha, beta=self.beta)


class TableGamma(BaseModel):
    """Parameters taken from a measured row; ``nearest`` allows the closest row."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["table"] = "table"
    knob: Knob = Knob.TARGET_STP
    value: float = 0.6
    nearest: bool = False

    def resolve(self) -> GammaParams:
        from ledger_freshness.latency_model import lookup_params, nearest_row

        row = nearest_row(self.knob, self.value) if self.nearest else lookup_params(self.knob, self.value)
        return row.gamma


class TraceGamma(BaseModel):
    """Parameters fitted to a measured trace file."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["trace"] = "trace"
    path: Path

    def load(self) -> LatencyTrace:
        from ledger_freshness.latency_model import load_trace

        return load_trace(self.path)

    def resolve(self) -> GammaParams:
        from ledger_freshness.latency_model import fit_gamma

        return fit_gamma(self.load())


GammaSource = Annotated[Union[ExplicitGamma, TableGamma, TraceGamma], Field(discriminator="kind")]


class SimSettings(BaseModel):
    """Simulation settings; exactly one stop criterion."""

    model_config = ConfigDict(extra="forbid")

    stop_updates: int | None = Field(default=200_000, gt=0)
    stop_horizon: float | None = Field(default=None, gt=0)
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    max_events: int = Field(default=200_000_000, gt=0)
    empirical_latency: bool = False

    @model_validator(mode="after")
    def _one_stop(self) -> "SimSettings":
        if (self.stop_updates is None) == (self.stop_horizon is None):
            raise ValueError("exactly one of sim.stop_updates / sim.stop_horizon must be set")
        return self


class ExperimentConfig(BaseModel):
    """One experiment: channel, source, latency law, target grid and simulation settings."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    channel: ChannelInputs = Field(default_factory=ChannelInputs)
    rho_s: float = Field(default=15.0, gt=0)
    zeta: float = Field(default=0.6, gt=0, le=1)
    D: float = Field(default=5e5, gt=0)
    gamma_source: GammaSource = Field(
        default_factory=TableGamma,
        validation_alias=AliasChoices("gamma_source", "gamma"),
    )
    v_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_V_GRID), min_length=1)
    sim: SimSettings = Field(default_factory=SimSettings)
    output: Path | None = None

    @field_validator("v_grid")
    @classmethod
    def _increasing(cls, value: list[float]) -> list[float]:
        for x in value:
            if not (x >= 0 and math.isfinite(x)):
                raise ValueError(f"target ages must be non-negative, got {x!r}")
        for a, b in zip(value, value[1:]):
            if not b > a:
                raise ValueError(f"v_grid must be strictly increasing ({a} then {b})")
        return value

    def channel_params(self) -> ChannelParams:
        return self.channel.to_params()

    def gamma(self) -> GammaParams:
        return self.gamma_source.resolve()

    def aoi_model(self, zeta: float | None = None, gamma: GammaParams | None = None) -> AoiModel:
        from ledger_freshness.aoi import aoi_model_for

        z = self.zeta if zeta is None else zeta
        return aoi_model_for(gamma or self.gamma(), self.rho_s, z, self.channel_params(), self.D)

    def sim_config(self, seed: int, model: AoiModel | None = None) -> SimConfig:
        """Build the simulator input; ``model`` supplies t_tx and the latency law when given."""
        model = model or self.aoi_model()
        trace = None
        if self.sim.empirical_latency:
            if not isinstance(self.gamma_source, TraceGamma):
                raise ConfigError("sim.empirical_latency needs a trace gamma source")
            trace = self.gamma_source.load().samples
        return SimConfig(
            rho_s=self.rho_s,
            zeta=model.rho / self.rho_s,
            t_tx=model.t_tx,
            gamma=model.gamma,
            stop_updates=self.sim.stop_updates,
            stop_horizon=self.sim.stop_horizon,
            seed=seed,
            max_events=self.sim.max_events,
            latency_trace=trace,
        )


def flatten(data: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """Flatten nested tables into dotted keys."""
    out: dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(flatten(value, f"{dotted}."))
        else:
            out[dotted] = value
    return out


def unflatten(flat: Mapping[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for dotted, value in flat.items():
        *parents, leaf = dotted.split(".")
        node = out
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"key {dotted!r} conflicts with scalar {part!r}")
            node = child
        node[leaf] = value
    return out


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}" if loc else err["msg"])
    return "; ".join(parts)


def read_config_file(path: Path) -> dict[str, Any]:
    """Read a TOML experiment file into dotted keys.

    Raises:
        ConfigError: If the file is missing or is not valid TOML.
    """
    try:
        with Path(path).open("rb") as fh:
            return flatten(tomllib.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_experiment_config(
    path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a file plus dotted-key overrides.

    Overrides win over file values. Setting one stop criterion clears the other.

    Raises:
        ConfigError: On unreadable files or validation failures, with field-level messages.
    """
    flat = read_config_file(path) if path is not None else {}
    overrides = dict(overrides or {})
    if "sim.stop_horizon" in overrides:
        flat["sim.stop_updates"] = None
    if "sim.stop_updates" in overrides:
        flat["sim.stop_horizon"] = None
    # Switching the gamma source drops the file's keys for the old kind.
    if "gamma.kind" in overrides:
        for key in [k for k in flat if k.startswith("gamma.")]:
            del flat[key]
    flat.update(overrides)
    try:
        return ExperimentConfig.model_validate(unflatten(flat))
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from exc
