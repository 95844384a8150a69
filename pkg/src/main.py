from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Any

from fastapi import FastAPI, File, Query, UploadFile
from fastapi.responses import JSONResponse, StreamingResponse

from ledger_freshness import __version__
from ledger_freshness.config import ExperimentConfig, load_experiment_config
from ledger_freshness.exceptions import FreshnessError
from ledger_freshness.experiments import Report, run_analyze, run_fit, run_simulate, run_sweep
from ledger_freshness.latency_model import all_rows
from ledger_freshness.models import Knob

app = FastAPI(title="Ledger Freshness", version=__version__)

# Simulations behind HTTP default to a short run.
API_STOP_UPDATES = 20_000


def _error(exc: Exception | str, status_code: int = 400) -> JSONResponse:
    return JSONResponse({"error": str(exc)}, status_code=status_code)


def _config(
    *,
    knob: str | None,
    value: float | None,
    alpha: float | None,
    beta: float | None,
    zeta: float | None,
    D: float | None,
    rho_s: float | None,
    v: list[float] | None,
    extra: dict[str, Any] | None = None,
) -> ExperimentConfig:
    """Build an experiment from query parameters; unset ones keep the defaults."""
    overrides: dict[str, Any] = dict(extra or {})
    if alpha is not None or beta is not None:
        overrides.update({"gamma.kind": "explicit", "gamma.alpha": alpha, "gamma.beta": beta})
    elif knob is not None or value is not None:
        overrides["gamma.kind"] = "table"
        if knob is not None:
            overrides["gamma.knob"] = knob
        if value is not None:
            overrides["gamma.value"] = value
    for key, val in (("zeta", zeta), ("D", D), ("rho_s", rho_s), ("v_grid", v)):
        if val is not None:
            overrides[key] = val
    config = load_experiment_config(None, overrides)
    config.gamma()
    return config


def _csv(report: Report, filename: str) -> StreamingResponse:
    headers = {"Content-Disposition": f"attachment; filename={filename}"}
    return StreamingResponse(report.iter_csv(), media_type="text/csv; charset=utf-8", headers=headers)


@app.get("/api/tables", response_class=JSONResponse)
def tables(knob: str | None = None) -> Any:
    """Measured latency-parameter rows, optionally for one knob."""
    try:
        rows = all_rows(knob)
    except FreshnessError as exc:
        return _error(exc, 404)
    return [row.model_dump(mode="json") for row in rows]


@app.get("/api/analyze.csv")
def analyze_csv(
    knob: str | None = None,
    value: float | None = None,
    alpha: float | None = None,
    beta: float | None = None,
    zeta: float | None = None,
    D: float | None = None,
    rho_s: float | None = None,
    v: list[float] | None = Query(None),
) -> Any:
    try:
        config = _config(knob=knob, value=value, alpha=alpha, beta=beta, zeta=zeta, D=D, rho_s=rho_s, v=v)
        report = run_analyze(config)
    except FreshnessError as exc:
        return _error(exc)
    return _csv(report, "analyze.csv")


@app.get("/api/simulate.csv")
def simulate_csv(
    knob: str | None = None,
    value: float | None = None,
    alpha: float | None = None,
    beta: float | None = None,
    zeta: float | None = None,
    D: float | None = None,
    rho_s: float | None = None,
    v: list[float] | None = Query(None),
    seed: int | None = None,
    stop_updates: int = API_STOP_UPDATES,
) -> Any:
    try:
        config = _config(
            knob=knob,
            value=value,
            alpha=alpha,
            beta=beta,
            zeta=zeta,
            D=D,
            rho_s=rho_s,
            v=v,
            extra={"sim.stop_updates": stop_updates, "sim.stop_horizon": None},
        )
        report = run_simulate(config, seed)
    except FreshnessError as exc:
        return _error(exc)
    return _csv(report, "simulate.csv")


@app.get("/api/sweep/{knob}.csv")
def sweep_csv(knob: str, v: float = 5.5, D: float | None = None, zeta: float | None = None) -> Any:
    if knob not in {k.value for k in Knob}:
        return _error(f"unknown knob {knob!r}", 404)
    try:
        config = _config(knob=None, value=None, alpha=None, beta=None, zeta=zeta, D=D, rho_s=None, v=None)
        report = run_sweep(config, knob, v)
    except FreshnessError as exc:
        return _error(exc)
    return _csv(report, f"sweep_{knob}.csv")


@app.post("/api/fit", response_class=JSONResponse)
async def fit(file: UploadFile = File(...)) -> Any:
    """Fit a Gamma law to an uploaded trace (one latency per line)."""
    data = await file.read()
    try:
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / Path(file.filename or "trace.txt").name
            path.write_bytes(data)
            report = run_fit(path)
    except FreshnessError as exc:
        return _error(exc)
    return report.model_dump()


if __name__ == "__main__":
    import sys
    import uvicorn

    dev_mode = "dev" in sys.argv

    if dev_mode:
        print("🔧 Starting in DEVELOPMENT mode (hot reload enabled)")
        uvicorn.run(
            "main:app",
            host="127.0.0.1",
            port=8000,
            reload=True,
            reload_dirs=["src"],
        )
    else:
        print("🚀 Starting in PRODUCTION mode")
        uvicorn.run(
            app,
            host="0.0.0.0",
            port=8000,
        )
