from __future__ import annotations

from pathlib import Path

import pytest

from ledger_freshness.aoi import average_aoi
from ledger_freshness.config import ExplicitGamma, load_experiment_config
from ledger_freshness.exceptions import DegenerateTraceError, DomainError
from ledger_freshness.experiments import (
    ANALYZE_HEADER,
    COMPARE_HEADER,
    FIT_HEADER,
    SIMULATE_HEADER,
    SWEEP_HEADER,
    SWEEP_SIM_HEADER,
    Report,
    fit_table,
    read_report,
    run_analyze,
    run_compare,
    run_fit,
    run_simulate,
    run_sweep,
)
from ledger_freshness.models import Knob
from ledger_freshness.sim import derive_seed


def _write(tmp_path: Path, name: str, content: str) -> Path:
    path = tmp_path / name
    path.write_text(content, encoding="utf-8")
    return path


def test_analyze_default_setting() -> None:
    config = load_experiment_config()
    report = run_analyze(config)
    assert report.header == ANALYZE_HEADER
    assert len(report.rows) == 8
    assert report.column("v") == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
    p_v = report.column("p_v")
    assert all(b <= a for a, b in zip(p_v, p_v[1:]))
    assert all(0.0 <= p <= 1.0 for p in p_v + report.column("p_pv"))
    expected = average_aoi(config.aoi_model())
    assert all(a == pytest.approx(expected) for a in report.column("avg_aoi"))
    assert set(report.column("method_flags")) == {"series/series"}
    assert report.notes and "alpha=5.42" in report.notes[0]


def test_analyze_targets_below_transmission_latency_are_certain() -> None:
    config = load_experiment_config(None, {"v_grid": [0.1, 0.2, 5.0]})
    report = run_analyze(config)
    assert report.column("p_v")[:2] == [1.0, 1.0]
    assert report.column("p_pv")[:2] == [1.0, 1.0]
    assert report.column("p_v")[2] < 1.0


def test_report_csv_round_trip() -> None:
    report = Report(header=["v", "x", "ok"], rows=[[1.0, 0.123456789012, True]], notes=["hello"])
    text = report.to_csv()
    assert text.splitlines()[0] == "# hello"
    assert text.splitlines()[1] == "v,x,ok"
    rows = read_report(text)
    assert rows == [{"v": "1", "x": "0.123456789", "ok": "1"}]


def test_simulate_is_deterministic_per_seed() -> None:
    config = load_experiment_config(None, {"sim.stop_updates": 2_000})
    first = run_simulate(config, seed=5)
    second = run_simulate(config, seed=5)
    other = run_simulate(config, seed=6)
    assert first.header == SIMULATE_HEADER
    assert first.to_csv() == second.to_csv()
    assert first.to_csv() != other.to_csv()
    assert set(first.column("seed")) == {5}
    assert set(first.column("low_sample")) == {False}


def test_simulate_seed_falls_back_to_config_then_environment() -> None:
    config = load_experiment_config(None, {"sim.stop_updates": 200, "sim.seed": 17})
    assert set(run_simulate(config).column("seed")) == {17}
    config = load_experiment_config(None, {"sim.stop_updates": 200})
    assert set(run_simulate(config).column("seed")) == {20190101}


def test_simulate_flags_low_sample_runs(caplog: pytest.LogCaptureFixture) -> None:
    config = load_experiment_config(None, {"sim.stop_updates": 100})
    report = run_simulate(config, seed=1)
    assert set(report.column("low_sample")) == {True}
    assert set(report.column("n_effective")) == {99}
    assert "noisy" in caplog.text
    assert read_report(report.to_csv())[0]["low_sample"] == "1"


def test_simulate_dumps_the_sample_path(tmp_path: Path) -> None:
    config = load_experiment_config(None, {"sim.stop_updates": 10})
    run_simulate(config, seed=1, dump_path=tmp_path / "path.csv")
    lines = (tmp_path / "path.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "k,G,A,U"
    assert len(lines) == 11


def test_fit_and_emitted_snippet(tmp_path: Path, trace_file: Path) -> None:
    snippet = tmp_path / "gamma.toml"
    report = run_fit(trace_file, emit_config=snippet)
    assert report.passed
    assert report.n_samples == 1000
    config = load_experiment_config(snippet)
    assert config.gamma_source == ExplicitGamma(alpha=report.alpha, beta=report.beta)

    rows = read_report(fit_table(report).to_csv())
    assert list(rows[0]) == FIT_HEADER
    assert rows[0]["passed"] == "1"
    assert float(rows[0]["alpha"]) == pytest.approx(report.alpha, rel=1e-8)


def test_fit_scores_against_given_critical_value(trace_file: Path) -> None:
    report = run_fit(trace_file, critical=1e-6)
    assert report.critical_value == 1e-6
    assert not report.passed


def test_fit_rejects_degenerate_trace(tmp_path: Path) -> None:
    path = _write(tmp_path, "flat.txt", "1.9\n1.9\n1.9\n")
    with pytest.raises(DegenerateTraceError):
        run_fit(path)


SWEEP_METRICS = ["avg_aoi", "p_v", "p_pv"]


def _half_size_config():
    return load_experiment_config(None, {"D": 2.5e5})


@pytest.mark.parametrize("metric", SWEEP_METRICS)
def test_sweep_block_size_has_interior_minimum(metric: str) -> None:
    report = run_sweep(_half_size_config(), Knob.BLOCK_SIZE, 5.5)
    assert report.header == SWEEP_HEADER
    values = report.column("knob_value")
    column = report.column(metric)
    assert values == [3, 5, 7, 10, 12, 15, 20, 25]
    assert values[column.index(min(column))] == 12
    assert column[0] > min(column) and column[-1] > min(column)
    # Every row keeps the configured zeta, so t_tx is constant.
    assert len(set(report.column("t_tx"))) == 1


@pytest.mark.parametrize("metric", SWEEP_METRICS)
def test_sweep_timeout_has_interior_minimum(metric: str) -> None:
    report = run_sweep(_half_size_config(), "timeout", 5.5)
    column = dict(zip(report.column("knob_value"), report.column(metric)))
    best = min(column, key=column.get)
    assert best == 0.75
    assert column[min(column)] > column[best] and column[max(column)] > column[best]
    assert all(0.0 <= p <= 1.0 for p in report.column("p_v") + report.column("p_pv"))


@pytest.mark.parametrize(("metric", "rel"), [("avg_aoi", 0.02), ("p_v", 0.06), ("p_pv", 0.06)])
def test_sweep_timeout_plateau(metric: str, rel: float) -> None:
    report = run_sweep(_half_size_config(), "timeout", 5.5)
    column = dict(zip(report.column("knob_value"), report.column(metric)))
    assert column[3.5] == pytest.approx(column[3.0], rel=rel)
    # The measured rows keep the tail metrics slightly apart at long timeouts.
    assert column[3.5] <= column[3.0]


def test_sweep_target_stp_skips_certain_delivery(caplog: pytest.LogCaptureFixture) -> None:
    report = run_sweep(load_experiment_config(), Knob.TARGET_STP, 5.5)
    values = report.column("knob_value")
    assert values == [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    t_tx = report.column("t_tx")
    assert t_tx == sorted(t_tx)
    assert "zeta=1" in caplog.text


def test_sweep_with_simulation_uses_derived_seeds() -> None:
    config = load_experiment_config(None, {"sim.stop_updates": 500})
    report = run_sweep(config, Knob.TIMEOUT, 5.5, simulate_points=True, seed=3)
    assert report.header == SWEEP_HEADER + SWEEP_SIM_HEADER
    for value, seed in zip(report.column("knob_value"), report.column("seed")):
        assert seed == derive_seed(3, value)
    again = run_sweep(config, Knob.TIMEOUT, 5.5, simulate_points=True, seed=3)
    assert again.to_csv() == report.to_csv()


def test_sweep_rejects_unknown_knob() -> None:
    with pytest.raises(DomainError):
        run_sweep(load_experiment_config(), "batch_timeout_ms", 5.5)


def test_compare_columns_and_differences() -> None:
    config = load_experiment_config(None, {"sim.stop_updates": 20_000, "v_grid": [2.0, 5.0]})
    report = run_compare(config, seed=2)
    assert report.header == COMPARE_HEADER
    for row in read_report(report.to_csv()):
        assert float(row["abs_diff_p_v"]) == pytest.approx(abs(float(row["p_v"]) - float(row["p_v_sim"])), abs=1e-8)
        assert float(row["abs_diff_p_v"]) < 0.05
        assert float(row["abs_diff_avg_aoi"]) < 0.1
