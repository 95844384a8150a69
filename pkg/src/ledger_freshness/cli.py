"""Command-line front end: ``ledger-freshness <command> [options]``.

Exit codes: 0 on success, 1 on runtime or numeric failures, 2 on
configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from pydantic import ValidationError

from ledger_freshness import __version__
from ledger_freshness.config import ExperimentConfig, get_runtime_config, load_experiment_config
from ledger_freshness.exceptions import ConfigError, DomainError, FreshnessError, ParamsNotFoundError
from ledger_freshness.experiments import (
    Report,
    fit_table,
    run_analyze,
    run_compare,
    run_fit,
    run_simulate,
    run_sweep,
)
from ledger_freshness.latency_model import KS_CRITICAL_1000, lookup_params, synthetic_trace, write_trace
from ledger_freshness.models import GammaParams, Knob

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

_KNOBS = [k.value for k in Knob]


def _v_grid(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML experiment file with dotted keys")
    p.add_argument("--seed", type=int, help="master seed (default: FRESHNESS_SEED)")
    p.add_argument("--out", type=Path, help="write the CSV here instead of stdout")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")


def _add_experiment(p: argparse.ArgumentParser, *, table_knob: bool = True) -> None:
    p.add_argument("--v-grid", type=_v_grid, help="comma-separated target ages in seconds")
    p.add_argument("--zeta", type=float, help="target STP")
    p.add_argument("--rho-s", type=float, dest="rho_s", help="packet generation rate (1/s)")
    p.add_argument("--D", type=float, dest="D", help="status-update size (bits)")
    p.add_argument("--alpha", type=float, help="explicit Gamma shape")
    p.add_argument("--beta", type=float, help="explicit Gamma rate")
    if table_knob:
        p.add_argument("--knob", choices=_KNOBS, help="measured row family for the latency law")
    p.add_argument("--value", type=float, help="knob value of the measured row")
    p.add_argument("--nearest", action="store_true", help="use the closest measured row")
    p.add_argument("--trace", type=Path, help="fit the latency law to this trace file")
    p.add_argument("--stop-updates", type=int, dest="stop_updates", help="stop after this many effective updates")
    p.add_argument("--stop-horizon", type=float, dest="stop_horizon", help="stop at this simulated time (s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ledger-freshness",
        description="Information freshness of blockchain-backed monitoring networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="closed-form AoI, AoI and PAoI violation probabilities")
    _add_common(p)
    _add_experiment(p)
    p.set_defaults(handler=_cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo estimates of the same metrics")
    _add_common(p)
    _add_experiment(p)
    p.add_argument("--dump-path", type=Path, dest="dump_path", help="write the sample path as k,G,A,U")
    p.add_argument(
        "--empirical-latency",
        action="store_true",
        dest="empirical_latency",
        help="resample consensus latencies from the trace instead of the fitted law",
    )
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("compare", help="analysis next to simulation with absolute differences")
    _add_common(p)
    _add_experiment(p)
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser("sweep", help="metrics at a fixed v across the measured rows of a knob")
    _add_common(p)
    _add_experiment(p, table_knob=False)
    p.add_argument("--knob", choices=_KNOBS, required=True, dest="sweep_knob", help="knob to sweep")
    p.add_argument("--v", type=float, default=5.5, dest="fixed_v", help="target age (default: 5.5)")
    p.add_argument("--simulate", action="store_true", help="also simulate every point")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("fit", help="fit a Gamma law to a latency trace and run the KS check")
    _add_common(p)
    p.add_argument("trace_path", type=Path, help="one positive latency (s) per line")
    p.add_argument("--critical", type=float, default=KS_CRITICAL_1000, help="KS critical value")
    p.add_argument("--emit-config", type=Path, dest="emit_config", help="write a gamma-source TOML snippet")
    p.set_defaults(handler=_cmd_fit, experiment=False)

    p = sub.add_parser("synth-trace", help="write a synthetic latency trace")
    _add_common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--knob", choices=_KNOBS)
    p.add_argument("--value", type=float)
    p.add_argument("--n", type=int, default=1000, help="number of samples (default: 1000)")
    p.set_defaults(handler=_cmd_synth_trace, experiment=False)

    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for attr, key in (
        ("v_grid", "v_grid"),
        ("zeta", "zeta"),
        ("rho_s", "rho_s"),
        ("D", "D"),
        ("stop_updates", "sim.stop_updates"),
        ("stop_horizon", "sim.stop_horizon"),
        ("seed", "sim.seed"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    if getattr(args, "empirical_latency", False):
        out["sim.empirical_latency"] = True

    explicit = args.alpha is not None or args.beta is not None
    table = getattr(args, "knob", None) is not None or args.value is not None
    trace = args.trace is not None
    if explicit + table + trace > 1:
        raise ConfigError("choose one latency source: --alpha/--beta, --knob/--value or --trace")
    if explicit:
        out.update({"gamma.kind": "explicit", "gamma.alpha": args.alpha, "gamma.beta": args.beta})
    elif table:
        out.update({"gamma.kind": "table", "gamma.nearest": args.nearest})
        if getattr(args, "knob", None) is not None:
            out["gamma.knob"] = args.knob
        if args.value is not None:
            out["gamma.value"] = args.value
    elif trace:
        out.update({"gamma.kind": "trace", "gamma.path": str(args.trace)})
    return out


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    config = load_experiment_config(args.config, _overrides(args))
    # Surface unknown rows and bad parameters before any work starts.
    config.gamma()
    return config


def _emit(report: Report, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(report.to_csv())
    else:
        report.write(out)
        logger.info("wrote %s", out)


def _cmd_analyze(args: argparse.Namespace, config: ExperimentConfig) -> int:
    _emit(run_analyze(config), args.out or config.output)
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace, config: ExperimentConfig) -> int:
    _emit(run_simulate(config, args.seed, dump_path=args.dump_path), args.out or config.output)
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace, config: ExperimentConfig) -> int:
    _emit(run_compare(config, args.seed), args.out or config.output)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace, config: ExperimentConfig) -> int:
    report = run_sweep(config, args.sweep_knob, args.fixed_v, simulate_points=args.simulate, seed=args.seed)
    _emit(report, args.out or config.output)
    return EXIT_OK


def _cmd_fit(args: argparse.Namespace, config: None) -> int:
    report = run_fit(args.trace_path, args.critical, emit_config=args.emit_config)
    _emit(fit_table(report), args.out)
    verdict = "pass" if report.passed else "fail"
    print(f"KS {report.ks_statistic:.4f} vs critical {report.critical_value:.4f}: {verdict}", file=sys.stderr)
    return EXIT_OK


def _cmd_synth_trace(args: argparse.Namespace, config: None) -> int:
    if args.alpha is not None and args.beta is not None:
        try:
            params = GammaParams(alpha=args.alpha, beta=args.beta)
        except ValidationError as exc:
            raise ConfigError(f"invalid Gamma parameters: {exc.errors()[0]['msg']}") from exc
    elif args.knob is not None and args.value is not None:
        params = lookup_params(args.knob, args.value).gamma
    else:
        raise ConfigError("synth-trace needs --alpha/--beta or --knob/--value")
    if args.out is None:
        raise ConfigError("synth-trace needs --out")
    seed = args.seed if args.seed is not None else get_runtime_config().seed
    trace = synthetic_trace(params, args.n, seed)
    write_trace(args.out, trace.samples)
    logger.info("wrote %d samples to %s", len(trace.samples), args.out)
    return EXIT_OK


def _configure_logging(verbose: int, default_level: str) -> None:
    level = {0: default_level, 1: "INFO"}.get(verbose, "DEBUG")
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _fail(exc: Exception) -> None:
    print(f"error: {exc}", file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        runtime = get_runtime_config()
    except ConfigError as exc:
        _fail(exc)
        return EXIT_CONFIG
    _configure_logging(args.verbose, runtime.log_level)

    handler: Callable[[argparse.Namespace, Any], int] = args.handler
    config: ExperimentConfig | None = None
    try:
        if getattr(args, "experiment", True):
            config = _experiment(args)
    except (ConfigError, DomainError, ParamsNotFoundError) as exc:
        _fail(exc)
        return EXIT_CONFIG
    except FreshnessError as exc:
        _fail(exc)
        return EXIT_FAILURE

    try:
        return handler(args, config)
    except ConfigError as exc:
        _fail(exc)
        return EXIT_CONFIG
    except FreshnessError as exc:
        _fail(exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
