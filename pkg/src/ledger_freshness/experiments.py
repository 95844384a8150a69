"""Report builders behind the command line and the HTTP API.

Every builder returns a :class:`Report`: a header, rows and optional notes.
Notes are written as ``#`` lines above the CSV header.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from ledger_freshness.aoi import average_aoi, evaluate_aoi_violation, evaluate_paoi_violation
from ledger_freshness.config import ExperimentConfig, get_runtime_config
from ledger_freshness.latency_model import KS_CRITICAL_1000, all_rows, as_knob, fit_report, load_trace
from ledger_freshness.models import AoiModel, FitReport, Knob, SeriesControl
from ledger_freshness.sim import derive_seed, empirical_metrics, simulate, write_sample_path

logger = logging.getLogger(__name__)

LOW_SAMPLE_THRESHOLD = 1000

ANALYZE_HEADER = ["v", "avg_aoi", "p_v", "p_pv", "method_flags"]
SIMULATE_HEADER = ["v", "avg_aoi_sim", "p_v_sim", "p_pv_sim", "n_effective", "seed", "low_sample"]
FIT_HEADER = [
    "alpha",
    "beta",
    "mean",
    "sd",
    "skewness",
    "n_samples",
    "ks_statistic",
    "critical_value",
    "passed",
]
SWEEP_HEADER = ["knob_value", "alpha", "beta", "t_tx", "avg_aoi", "p_v", "p_pv"]
SWEEP_SIM_HEADER = ["avg_aoi_sim", "p_v_sim", "p_pv_sim", "seed"]
COMPARE_HEADER = [
    "v",
    "p_v",
    "p_v_sim",
    "abs_diff_p_v",
    "p_pv",
    "p_pv_sim",
    "abs_diff_p_pv",
    "avg_aoi",
    "avg_aoi_sim",
    "abs_diff_avg_aoi",
]


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


@dataclass
class Report:
    """Tabular result with a mandatory header row."""

    header: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def iter_csv(self) -> Iterator[str]:
        """Yield the CSV text chunk by chunk (notes, header, then one row at a time)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for note in self.notes:
            yield f"# {note}\n"
        writer.writerow(self.header)
        yield buf.getvalue()
        buf.seek(0)
        buf.truncate(0)
        for row in self.rows:
            writer.writerow([_cell(x) for x in row])
            yield buf.getvalue()
            buf.seek(0)
            buf.truncate(0)

    def to_csv(self) -> str:
        return "".join(self.iter_csv())

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path

    def column(self, name: str) -> list[Any]:
        i = self.header.index(name)
        return [row[i] for row in self.rows]


def read_report(text: str) -> list[dict[str, str]]:
    """Parse CSV text written by :meth:`Report.to_csv`; note lines are skipped."""
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _seed(config: ExperimentConfig, seed: int | None) -> int:
    if seed is not None:
        return seed
    if config.sim.seed is not None:
        return config.sim.seed
    return get_runtime_config().seed


def _model_note(model: AoiModel) -> str:
    g = model.gamma
    return f"alpha={g.alpha:.9g} beta={g.beta:.9g} rho={model.rho:.9g} t_tx={model.t_tx:.9g}"


def _flags(*results) -> str:
    flags = "/".join(r.method for r in results)
    if any(r.clamped for r in results):
        flags += "+clamped"
    return flags


def run_analyze(config: ExperimentConfig, ctl: SeriesControl | None = None) -> Report:
    """Closed-form metrics for each target age in ``config.v_grid``."""
    ctl = ctl or get_runtime_config().series_control()
    model = config.aoi_model()
    avg = average_aoi(model)
    report = Report(header=list(ANALYZE_HEADER), notes=[_model_note(model)])
    for v in config.v_grid:
        p_v = evaluate_aoi_violation(model, v, ctl)
        p_pv = evaluate_paoi_violation(model, v, ctl)
        report.rows.append([v, avg, p_v.value, p_pv.value, _flags(p_v, p_pv)])
    return report


def run_simulate(
    config: ExperimentConfig,
    seed: int | None = None,
    dump_path: Path | None = None,
) -> Report:
    """Monte Carlo metrics for each target age; deterministic per seed.

    Raises:
        RunawaySimulationError: If the event cap is reached first.
    """
    seed = _seed(config, seed)
    path = simulate(config.sim_config(seed))
    if dump_path is not None:
        write_sample_path(dump_path, path)
    metrics = empirical_metrics(path, config.v_grid)
    low = metrics.n_effective < LOW_SAMPLE_THRESHOLD
    if low:
        logger.warning(
            "only %d effective updates counted (< %d); estimates are noisy",
            metrics.n_effective,
            LOW_SAMPLE_THRESHOLD,
        )
    report = Report(header=list(SIMULATE_HEADER))
    for v in config.v_grid:
        report.rows.append(
            [v, metrics.avg_aoi, metrics.p_v[float(v)], metrics.p_pv[float(v)], metrics.n_effective, seed, low]
        )
    return report


def fit_table(report: FitReport) -> Report:
    return Report(
        header=list(FIT_HEADER),
        rows=[[getattr(report, name) for name in FIT_HEADER]],
    )


def gamma_snippet(report: FitReport) -> str:
    """TOML lines selecting the fitted law as an explicit gamma source."""
    return f'gamma.kind = "explicit"\ngamma.alpha = {report.alpha!r}\ngamma.beta = {report.beta!r}\n'


def run_fit(
    trace_path: Path,
    critical: float = KS_CRITICAL_1000,
    emit_config: Path | None = None,
) -> FitReport:
    """Fit a Gamma law to a trace file and score it against the KS critical value.

    Raises:
        TraceFormatError: If the file cannot be read.
        DegenerateTraceError: If all samples are (nearly) equal.
    """
    report = fit_report(load_trace(trace_path), critical=critical)
    if emit_config is not None:
        Path(emit_config).write_text(gamma_snippet(report), encoding="utf-8")
    return report


def run_sweep(
    config: ExperimentConfig,
    knob: Knob | str,
    fixed_v: float,
    *,
    simulate_points: bool = False,
    seed: int | None = None,
    ctl: SeriesControl | None = None,
) -> Report:
    """Metrics at ``fixed_v`` for every measured row of ``knob``.

    For the target STP, each row's value is also the zeta used for rho and
    T_tx; the other knobs keep ``config.zeta``. Latency parameters always
    come from the row itself. With ``simulate_points`` every row is also
    simulated under a seed derived from the master seed and the row value.
    """
    ctl = ctl or get_runtime_config().series_control()
    knob = as_knob(knob)
    master = _seed(config, seed)
    header = list(SWEEP_HEADER) + (list(SWEEP_SIM_HEADER) if simulate_points else [])
    report = Report(
        header=header,
        notes=[
            f"knob={knob.value} v={fixed_v:g} D={config.D:g} rho_s={config.rho_s:g}",
            "alpha, beta from the measured row at each knob value (no interpolation)",
        ],
    )
    for row in all_rows(knob):
        if knob is Knob.TARGET_STP and row.knob_value >= 1.0:
            logger.warning("skipping zeta=%g: transmission latency is infinite", row.knob_value)
            continue
        zeta = row.knob_value if knob is Knob.TARGET_STP else config.zeta
        model = config.aoi_model(zeta=zeta, gamma=row.gamma)
        line: list[Any] = [
            row.knob_value,
            row.alpha,
            row.beta,
            model.t_tx,
            average_aoi(model),
            evaluate_aoi_violation(model, fixed_v, ctl).value,
            evaluate_paoi_violation(model, fixed_v, ctl).value,
        ]
        if simulate_points:
            point_seed = derive_seed(master, row.knob_value)
            metrics = empirical_metrics(simulate(config.sim_config(point_seed, model)), [fixed_v])
            line += [metrics.avg_aoi, metrics.p_v[float(fixed_v)], metrics.p_pv[float(fixed_v)], point_seed]
        report.rows.append(line)
    return report


def run_compare(config: ExperimentConfig, seed: int | None = None, ctl: SeriesControl | None = None) -> Report:
    """Analysis and simulation side by side with per-v absolute differences."""
    analysis = run_analyze(config, ctl)
    simulation = run_simulate(config, seed)
    report = Report(header=list(COMPARE_HEADER), notes=list(analysis.notes))
    for a_row, s_row in zip(analysis.rows, simulation.rows):
        v, avg, p_v, p_pv, _ = a_row
        _, avg_sim, p_v_sim, p_pv_sim, *_ = s_row
        report.rows.append(
            [
                v,
                p_v,
                p_v_sim,
                abs(p_v - p_v_sim),
                p_pv,
                p_pv_sim,
                abs(p_pv - p_pv_sim),
                avg,
                avg_sim,
                abs(avg - avg_sim),
            ]
        )
    return report
