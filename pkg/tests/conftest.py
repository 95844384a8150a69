"""Pytest configuration and fixtures for ledger-freshness tests."""
from __future__ import annotations

from pathlib import Path

import pytest

from ledger_freshness.latency_model import synthetic_trace, write_trace
from ledger_freshness.models import GammaParams, LatencyTrace


@pytest.fixture(autouse=True)
def pinned_env(monkeypatch):
    """Pin the runtime environment so tests do not depend on the caller's shell."""
    monkeypatch.setenv("FRESHNESS_SEED", "20190101")
    monkeypatch.setenv("FRESHNESS_LOG_LEVEL", "WARNING")
    monkeypatch.delenv("FRESHNESS_SERIES_TOL", raising=False)
    monkeypatch.delenv("FRESHNESS_SERIES_MAX_TERMS", raising=False)
    yield


@pytest.fixture
def default_row_trace() -> LatencyTrace:
    """1000 draws from the default measured row (5.42, 2.84), seed 7."""
    return synthetic_trace(GammaParams(alpha=5.42, beta=2.84), 1000, seed=7)


@pytest.fixture
def trace_file(tmp_path: Path, default_row_trace: LatencyTrace) -> Path:
    return write_trace(tmp_path / "trace.txt", default_row_trace.samples)
