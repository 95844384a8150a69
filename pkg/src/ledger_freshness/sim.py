"""Monte Carlo sample paths of the status-update process.

A source generates packets as a Poisson(rho_s) stream; each is delivered with
probability zeta and reaches the blockchain T_tx later. The first arrival at
or after the last commit is effective and commits after a consensus latency;
arrivals that land while a commit is pending fail version validation and are
counted as invalid. Invalid packets never draw a latency.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ledger_freshness.exceptions import DomainError, InsufficientDataError, RunawaySimulationError
from ledger_freshness.models import EmpiricalMetrics, SimConfig

logger = logging.getLogger(__name__)

_CHUNK = 1 << 16
_LATENCY_BATCH = 1 << 12
STDERR_BATCHES = 20


@dataclass(frozen=True)
class SamplePath:
    """Effective updates of one run.

    ``generation``, ``arrival`` and ``update`` hold G_k, A_k and U_k.
    ``arrival_count`` is the number of delivered packets examined, so
    ``len(path) + invalid_count == arrival_count``.
    """

    generation: np.ndarray
    arrival: np.ndarray
    update: np.ndarray
    invalid_count: int
    arrival_count: int
    total_time: float

    def __len__(self) -> int:
        return int(self.update.size)

    @property
    def updates(self) -> list[tuple[float, float, float]]:
        return list(zip(self.generation.tolist(), self.arrival.tolist(), self.update.tolist()))

    def inter_update_times(self) -> np.ndarray:
        return np.diff(self.update)

    def effective_intervals(self) -> np.ndarray:
        """G_k - G_{k-1} between consecutive effective packets."""
        return np.diff(self.generation)

    def peaks(self) -> np.ndarray:
        """AoI just before each commit after the first: U_k - G_{k-1}."""
        return self.update[1:] - self.generation[:-1]

    def latencies(self) -> np.ndarray:
        return self.update - self.arrival


class _LatencySource:
    """Batched consensus latencies from a Gamma law or a measured trace."""

    def __init__(self, config: SimConfig, rng: np.random.Generator) -> None:
        self._rng = rng
        self._shape = config.gamma.alpha
        self._scale = 1.0 / config.gamma.beta
        self._trace = None if config.latency_trace is None else np.asarray(config.latency_trace, dtype=float)
        self._buf = np.empty(0)
        self._pos = 0

    def next(self) -> float:
        if self._pos == self._buf.size:
            if self._trace is None:
                self._buf = self._rng.gamma(self._shape, self._scale, size=_LATENCY_BATCH)
            else:
                self._buf = self._rng.choice(self._trace, size=_LATENCY_BATCH, replace=True)
            self._pos = 0
        x = float(self._buf[self._pos])
        self._pos += 1
        return x


def simulate(config: SimConfig) -> SamplePath:
    """Run one sample path.

    Generation, delivery thinning and consensus latencies use three
    independent streams spawned from ``config.seed``.

    Raises:
        RunawaySimulationError: If ``config.max_events`` packets are generated
            before the stop condition is met.
    """
    gen_seq, thin_seq, cons_seq = np.random.SeedSequence(config.seed).spawn(3)
    rng_gen = np.random.default_rng(gen_seq)
    rng_thin = np.random.default_rng(thin_seq)
    latency = _LatencySource(config, np.random.default_rng(cons_seq))

    horizon = config.stop_horizon
    target = config.stop_updates
    mean_gap = 1.0 / config.rho_s

    gens: list[float] = []
    arrs: list[float] = []
    upds: list[float] = []
    invalid = 0
    examined = 0
    generated = 0
    clock = 0.0
    u_last = 0.0
    done = False

    while not done:
        if generated >= config.max_events:
            raise RunawaySimulationError(
                f"generated {generated} packets without reaching the stop condition "
                f"({len(upds)} effective updates so far)"
            )
        n = min(_CHUNK, config.max_events - generated)
        g = clock + np.cumsum(rng_gen.exponential(mean_gap, size=n))
        delivered = rng_thin.random(n) < config.zeta
        generated += n
        clock = float(g[-1])
        if horizon is not None and clock > horizon:
            cut = int(np.searchsorted(g, horizon, side="right"))
            g, delivered = g[:cut], delivered[:cut]
            done = True
        g = g[delivered]
        a = g + config.t_tx

        pos = 0
        while pos < a.size:
            idx = pos + int(np.searchsorted(a[pos:], u_last, side="left"))
            if idx >= a.size:
                invalid += a.size - pos
                examined += a.size - pos
                pos = a.size
                break
            invalid += idx - pos
            examined += idx - pos + 1
            u_last = float(a[idx]) + latency.next()
            gens.append(float(g[idx]))
            arrs.append(float(a[idx]))
            upds.append(u_last)
            pos = idx + 1
            if target is not None and len(upds) >= target:
                done = True
                break

    total_time = horizon if horizon is not None else (upds[-1] if upds else 0.0)
    path = SamplePath(
        generation=np.asarray(gens),
        arrival=np.asarray(arrs),
        update=np.asarray(upds),
        invalid_count=invalid,
        arrival_count=examined,
        total_time=float(total_time),
    )
    logger.info(
        "simulated seed=%d: %d effective, %d invalid, %d generated, T=%.6g s",
        config.seed,
        len(path),
        invalid,
        generated,
        path.total_time,
    )
    return path


def _batch_stderr(num: np.ndarray, den: np.ndarray) -> float:
    """Batch-means standard error of the ratio sum(num) / sum(den)."""
    n_batches = min(STDERR_BATCHES, num.size)
    if n_batches < 2:
        return math.nan
    ratios = np.array(
        [n.sum() / d.sum() for n, d in zip(np.array_split(num, n_batches), np.array_split(den, n_batches))]
    )
    return float(ratios.std(ddof=1) / math.sqrt(n_batches))


def empirical_metrics(path: SamplePath, v_grid: Sequence[float]) -> EmpiricalMetrics:
    """Time-average AoI and violation fractions of a sample path.

    The first update only anchors the sawtooth: area before it is excluded,
    as is anything after the last commit. For the interval ending at U_j the
    AoI starts at U_{j-1} - G_{j-1} and grows with slope 1 for
    T_j = U_j - U_{j-1}, so its area is T_j·a0 + T_j^2/2 and the time it
    spends at or above v is min((peak - v)+, T_j).

    Raises:
        InsufficientDataError: If the path has fewer than 2 updates.
        DomainError: If a grid value is negative.
    """
    if len(path) < 2:
        raise InsufficientDataError(f"need at least 2 effective updates, got {len(path)}")
    v = np.asarray(list(v_grid), dtype=float)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise DomainError("target ages must be non-negative")

    spans = path.inter_update_times()
    start_age = path.update[:-1] - path.generation[:-1]
    peaks = start_age + spans
    areas = spans * start_age + 0.5 * spans**2
    covered = math.fsum(spans)

    above = np.minimum(np.clip(peaks[:, None] - v[None, :], 0.0, None), spans[:, None])
    # Same reduction as covered, so a target every interval clears gives exactly 1.
    p_v = np.array([math.fsum(col) for col in above.T]) / covered
    p_pv = (peaks[:, None] >= v[None, :]).mean(axis=0)

    keys = [float(x) for x in v]
    return EmpiricalMetrics(
        avg_aoi=float(areas.sum() / covered),
        p_v={k: float(min(1.0, p)) for k, p in zip(keys, p_v)},
        p_pv={k: float(p) for k, p in zip(keys, p_pv)},
        n_effective=int(spans.size),
        covered_time=covered,
        avg_aoi_stderr=_batch_stderr(areas, spans),
        p_v_stderr={k: _batch_stderr(above[:, i], spans) for i, k in enumerate(keys)},
    )


def _combine(values: Iterable[tuple[float, float]]) -> float:
    pairs = list(values)
    total = math.fsum(w for _, w in pairs)
    return math.fsum(x * w for x, w in pairs) / total


def _combine_stderr(values: Iterable[tuple[float, float]]) -> float:
    pairs = list(values)
    total = math.fsum(w for _, w in pairs)
    return math.sqrt(math.fsum((s * w) ** 2 for s, w in pairs)) / total


def merge_metrics(parts: Sequence[EmpiricalMetrics]) -> EmpiricalMetrics:
    """Merge independent runs.

    Time averages are weighted by covered time and peak fractions by the
    number of counted updates. Sums are exactly rounded, so the result does
    not depend on the order of ``parts``.

    Raises:
        DomainError: If ``parts`` is empty or the runs used different grids.
    """
    if not parts:
        raise DomainError("nothing to merge")
    keys = sorted(parts[0].p_v)
    for part in parts[1:]:
        if sorted(part.p_v) != keys:
            raise DomainError("cannot merge metrics computed on different v grids")
    if len(parts) == 1:
        return parts[0]

    return EmpiricalMetrics(
        avg_aoi=_combine((p.avg_aoi, p.covered_time) for p in parts),
        p_v={k: _combine((p.p_v[k], p.covered_time) for p in parts) for k in keys},
        p_pv={k: _combine((p.p_pv[k], float(p.n_effective)) for p in parts) for k in keys},
        n_effective=sum(p.n_effective for p in parts),
        covered_time=math.fsum(p.covered_time for p in parts),
        avg_aoi_stderr=_combine_stderr((p.avg_aoi_stderr, p.covered_time) for p in parts),
        p_v_stderr={
            k: _combine_stderr((p.p_v_stderr.get(k, math.nan), p.covered_time) for p in parts) for k in keys
        },
    )


def derive_seed(master_seed: int, key: float) -> int:
    """Stable 64-bit seed for one sweep point, independent of scheduling order."""
    bits = int(np.float64(key).view(np.uint64))
    state = np.random.SeedSequence([int(master_seed), bits]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def write_sample_path(path: Path, sample_path: SamplePath) -> Path:
    """Write ``k,G,A,U`` rows with 9 decimal places."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "G", "A", "U"])
        for k, (g, a, u) in enumerate(sample_path.updates, start=1):
            writer.writerow([k, f"{g:.9f}", f"{a:.9f}", f"{u:.9f}"])
    return path
