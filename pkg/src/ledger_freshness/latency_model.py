"""Consensus-latency model: Gamma MLE, KS check, sampling and measured rows."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import ValidationError
from scipy import stats

from ledger_freshness.exceptions import (
    DegenerateTraceError,
    DomainError,
    ParamsNotFoundError,
    TraceFormatError,
)
from ledger_freshness.models import FitReport, GammaParams, HlfParamRow, Knob, LatencyTrace

logger = logging.getLogger(__name__)

# Critical value of the KS statistic for 1000 samples at significance 0.01.
KS_CRITICAL_1000 = 0.0515

_DEGENERATE_A = 1e-12

# Fitted (alpha, beta) per ordering-service setting, measured on a four-peer
# Fabric v1.3 network (Kafka ordering) and averaged over five runs. Rows are
# (knob, value, alpha, beta, avg latency s, sd s, skewness, KS statistic).
# Default setting: target STP 0.6, block size 20, timeout 3 s.
_MEASURED: tuple[tuple[Knob, float, float, float, float, float, float, float], ...] = (
    (Knob.TARGET_STP, 0.3, 5.64, 3.01, 2.42, 0.95, 0.093, 0.0732),
    (Knob.TARGET_STP, 0.4, 5.94, 2.45, 2.42, 0.92, 0.086, 0.0623),
    (Knob.TARGET_STP, 0.5, 5.39, 2.85, 2.17, 0.87, 0.095, 0.0506),
    (Knob.TARGET_STP, 0.6, 5.42, 2.84, 1.90, 0.76, 0.097, 0.0504),
    (Knob.TARGET_STP, 0.7, 7.18, 3.73, 1.92, 0.67, 0.071, 0.0462),
    (Knob.TARGET_STP, 0.8, 7.71, 4.12, 1.87, 0.63, 0.066, 0.0423),
    (Knob.TARGET_STP, 0.9, 7.50, 4.35, 1.73, 0.60, 0.068, 0.0369),
    (Knob.TARGET_STP, 1.0, 6.57, 3.82, 1.76, 0.76, 0.085, 0.0532),
    (Knob.BLOCK_SIZE, 3, 1.62, 0.30, 5.71, 4.03, 0.342, 0.0831),
    (Knob.BLOCK_SIZE, 5, 2.90, 1.38, 2.16, 1.25, 0.182, 0.0333),
    (Knob.BLOCK_SIZE, 7, 4.35, 2.58, 1.70, 0.85, 0.121, 0.0498),
    (Knob.BLOCK_SIZE, 10, 5.24, 3.30, 1.59, 0.74, 0.099, 0.0495),
    (Knob.BLOCK_SIZE, 12, 5.81, 3.66, 1.58, 0.63, 0.074, 0.0382),
    (Knob.BLOCK_SIZE, 15, 6.95, 3.85, 1.80, 0.65, 0.074, 0.0381),
    (Knob.BLOCK_SIZE, 20, 5.42, 2.84, 1.90, 0.76, 0.097, 0.0504),
    (Knob.BLOCK_SIZE, 25, 4.85, 2.36, 2.05, 0.86, 0.107, 0.0604),
    (Knob.TIMEOUT, 0.5, 2.74, 0.89, 3.08, 2.00, 0.194, 0.0420),
    (Knob.TIMEOUT, 0.6, 4.26, 2.04, 2.10, 1.07, 0.122, 0.0452),
    (Knob.TIMEOUT, 0.7, 8.28, 5.40, 1.53, 0.54, 0.061, 0.0494),
    (Knob.TIMEOUT, 0.75, 6.78, 5.19, 1.30, 0.47, 0.076, 0.0489),
    (Knob.TIMEOUT, 1.0, 6.96, 4.65, 1.50, 0.54, 0.075, 0.0588),
    (Knob.TIMEOUT, 1.25, 9.62, 5.37, 1.79, 0.55, 0.053, 0.0446),
    (Knob.TIMEOUT, 1.5, 9.86, 5.20, 1.89, 0.56, 0.052, 0.0603),
    (Knob.TIMEOUT, 2.0, 6.79, 3.62, 1.87, 0.66, 0.075, 0.0535),
    (Knob.TIMEOUT, 2.5, 5.64, 3.01, 1.97, 0.72, 0.091, 0.0497),
    (Knob.TIMEOUT, 3.0, 5.42, 2.84, 1.89, 0.76, 0.097, 0.0504),
    (Knob.TIMEOUT, 3.5, 5.39, 2.85, 1.89, 0.75, 0.091, 0.0503),
)

MEASURED_ROWS: tuple[HlfParamRow, ...] = tuple(
    HlfParamRow(
        knob=knob,
        knob_value=value,
        alpha=alpha,
        beta=beta,
        avg_latency=avg,
        sd=sd,
        skewness=skew,
        ks_statistic=ks,
    )
    for knob, value, alpha, beta, avg, sd, skew, ks in _MEASURED
)


def as_knob(knob: Knob | str) -> Knob:
    try:
        return Knob(knob)
    except ValueError as exc:
        choices = ", ".join(k.value for k in Knob)
        raise DomainError(f"unknown knob {knob!r}; expected one of {choices}") from exc


def _samples(trace: LatencyTrace | Sequence[float]) -> np.ndarray:
    """Validate a trace and return its samples as an array.

    Raises:
        DomainError: If there are fewer than 2 samples or any sample is not positive.
    """
    values = trace.samples if isinstance(trace, LatencyTrace) else list(trace)
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise DomainError(f"a latency trace needs at least 2 samples, got {arr.size}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("latency samples must be positive and finite")
    return arr


def fit_gamma(trace: LatencyTrace | Sequence[float]) -> GammaParams:
    """Fit a Gamma law with the one-step closed-form maximum likelihood estimator.

    alpha = (1 + sqrt(1 + 4A/3)) / (4A), beta = alpha / mean, where
    A = log(mean) - mean(log x).

    Raises:
        DomainError: If any sample is not positive.
        DegenerateTraceError: If A <= 1e-12 (near-constant samples).
    """
    x = _samples(trace)
    mean = float(np.mean(x))
    a_stat = math.log(mean) - float(np.mean(np.log(x)))
    if a_stat <= _DEGENERATE_A:
        raise DegenerateTraceError(
            f"degenerate trace: samples are (nearly) constant (A={a_stat:.3e})"
        )
    alpha = (1.0 + math.sqrt(1.0 + 4.0 * a_stat / 3.0)) / (4.0 * a_stat)
    return GammaParams(alpha=alpha, beta=alpha / mean)


def ks_statistic(trace: LatencyTrace | Sequence[float], params: GammaParams) -> float:
    """Largest gap between the empirical CDF of the trace and the Gamma CDF."""
    x = np.sort(_samples(trace))
    n = x.size
    cdf = stats.gamma.cdf(x, a=params.alpha, scale=1.0 / params.beta)
    i = np.arange(1, n + 1, dtype=float)
    upper = np.abs(i / n - cdf)
    lower = np.abs((i - 1.0) / n - cdf)
    return float(max(upper.max(), lower.max()))


def fit_report(trace: LatencyTrace | Sequence[float], critical: float = KS_CRITICAL_1000) -> FitReport:
    """Fit, then score the fit against the KS critical value."""
    params = fit_gamma(trace)
    ks = ks_statistic(trace, params)
    passed = ks < critical
    logger.info("fitted alpha=%.4f beta=%.4f KS=%.4f (%s)", params.alpha, params.beta, ks, "pass" if passed else "fail")
    return FitReport(
        alpha=params.alpha,
        beta=params.beta,
        mean=params.mean,
        sd=params.sd,
        skewness=params.skewness,
        n_samples=len(_samples(trace)),
        ks_statistic=ks,
        critical_value=critical,
        passed=passed,
    )


def sample_latency(params: GammaParams, rng: np.random.Generator) -> float:
    """Draw one consensus latency; advances ``rng``."""
    return float(rng.gamma(shape=params.alpha, scale=1.0 / params.beta))


def sample_latencies(params: GammaParams, rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.gamma(shape=params.alpha, scale=1.0 / params.beta, size=size)


def synthetic_trace(params: GammaParams, n: int, seed: int) -> LatencyTrace:
    """Deterministic Gamma trace of ``n`` samples."""
    if n < 2:
        raise DomainError(f"a trace needs at least 2 samples, got n={n}")
    rng = np.random.default_rng(seed)
    return LatencyTrace(samples=sample_latencies(params, rng, n).tolist())


def load_trace(path: Path) -> LatencyTrace:
    """Read a trace file: one positive latency (seconds) per line.

    Blank lines and lines starting with ``#`` are ignored.

    Raises:
        TraceFormatError: If the file is missing or a line is not a positive number.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceFormatError(f"cannot read trace file: {path}") from exc
    samples: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            samples.append(float(line))
        except ValueError as exc:
            raise TraceFormatError(f"{path}:{lineno}: not a number: {line!r}") from exc
    try:
        return LatencyTrace(samples=samples)
    except ValidationError as exc:
        raise TraceFormatError(f"{path}: {exc.errors()[0]['msg']}") from exc


def write_trace(path: Path, samples: Sequence[float]) -> Path:
    path = Path(path)
    path.write_text("".join(f"{x:.9f}\n" for x in samples), encoding="utf-8")
    return path


def all_rows(knob: Knob | str | None = None) -> list[HlfParamRow]:
    if knob is None:
        return list(MEASURED_ROWS)
    k = as_knob(knob)
    return [row for row in MEASURED_ROWS if row.knob is k]


def available_values(knob: Knob | str) -> list[float]:
    return [row.knob_value for row in all_rows(knob)]


def lookup_params(knob: Knob | str, value: float) -> HlfParamRow:
    """Return the measured row for ``(knob, value)``; no interpolation.

    Raises:
        DomainError: If the knob is unknown.
        ParamsNotFoundError: If no row has this value; the message lists the available ones.
    """
    k = as_knob(knob)
    for row in all_rows(k):
        if math.isclose(row.knob_value, value, rel_tol=0.0, abs_tol=1e-9):
            return row
    values = ", ".join(f"{v:g}" for v in available_values(k))
    raise ParamsNotFoundError(f"no measured row for {k.value}={value:g}; available: {values}")


def nearest_row(knob: Knob | str, value: float) -> HlfParamRow:
    """Return the measured row whose knob value is closest to ``value``."""
    rows = all_rows(knob)
    row = min(rows, key=lambda r: (abs(r.knob_value - value), r.knob_value))
    if not math.isclose(row.knob_value, value, rel_tol=0.0, abs_tol=1e-9):
        logger.info(
            "no %s row at %g; using nearest row %g (alpha=%.2f, beta=%.2f)",
            row.knob.value,
            value,
            row.knob_value,
            row.alpha,
            row.beta,
        )
    return row
