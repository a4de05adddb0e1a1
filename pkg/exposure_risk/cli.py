"""
Command-line front door.

    exposure-risk [--config PATH] <subcommand> [options]

Every numeric default lives in the engine config; flags only name inputs,
outputs and seeds. Exit codes: 0 success, 1 data error, 2 config or
parameter error, 3 model-validity error.
"""

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from exposure_risk.alerts.notifier import should_notify
from exposure_risk.config import EngineConfig, config, default_engine_config, load_config
from exposure_risk.errors import (
    ConfigError,
    DataError,
    ExposureRiskError,
    ModelValidityError,
    ParameterError,
)
from exposure_risk.main import ExposureRiskAgent
from exposure_risk.utils.logger import Logger

EXIT_OK = 0
EXIT_DATA = 1
EXIT_CONFIG = 2
EXIT_MODEL = 3

DECASCADE_OUTPUT = "decascade.jsonl"

GridSpec = Union[str, float, Sequence[float]]


@dataclass
class CommandOutcome:
    """Exit code, one-line summary and written artifacts of a command."""

    exit_code: int
    summary: str
    artifacts: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, ParameterError)):
        return EXIT_CONFIG
    if isinstance(exc, ModelValidityError):
        return EXIT_MODEL
    return EXIT_DATA


def _run(what: str, action: Callable[[], CommandOutcome]) -> CommandOutcome:
    try:
        return action()
    except (ExposureRiskError, ValidationError, OSError) as exc:
        return CommandOutcome(exit_code_for(exc), f"{what} failed: {exc}")


def parse_grid(spec: GridSpec) -> np.ndarray:
    """
    Parse a grid given as a single value, "start:stop:step" (stop included)
    or an explicit sequence of values.

    Raises:
        ParameterError: on malformed specs, empty grids or non-positive steps
    """
    if isinstance(spec, (int, float)):
        values = np.array([float(spec)])
    elif isinstance(spec, str):
        try:
            parts = [float(part) for part in spec.split(":")]
        except ValueError:
            raise ParameterError(f"invalid grid spec {spec!r}") from None
        if len(parts) == 1:
            values = np.array(parts)
        elif len(parts) == 3:
            start, stop, step = parts
            if not step > 0 or stop < start:
                raise ParameterError(f"grid {spec!r} needs step > 0 and stop >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = start + step * np.arange(count)
        else:
            raise ParameterError(f"grid spec must be VALUE or START:STOP:STEP, got {spec!r}")
    else:
        values = np.asarray(list(spec), dtype=float)

    if values.size == 0:
        raise ParameterError("grid must contain at least one value")
    if not np.all(np.isfinite(values)):
        raise ParameterError(f"grid {spec!r} contains non-finite values")
    return values


def cmd_score(config: EngineConfig, events_path, reports_path, out_path,
              store_dir=None) -> CommandOutcome:
    def action() -> CommandOutcome:
        ledgers, artifacts = ExposureRiskAgent(config).score(events_path, reports_path,
                                                             out_path, store_dir)
        notified = sum(1 for ledger in ledgers if should_notify(ledger, config.risk))
        return CommandOutcome(EXIT_OK, f"scored {len(ledgers)} recipients, {notified} notified",
                              artifacts)

    return _run("score", action)


def cmd_decascade(config: EngineConfig, store_path, source_id: str, test_time: int,
                  out_path=None) -> CommandOutcome:
    """Apply a negative test; outcomes default to <store>/decascade.jsonl."""
    out_path = out_path or Path(store_path) / DECASCADE_OUTPUT

    def action() -> CommandOutcome:
        if not Path(store_path).is_dir():
            raise DataError(f"store {store_path} does not exist")
        records, artifacts = ExposureRiskAgent(config).decascade(store_path, source_id,
                                                                 test_time, out_path)
        counts = {}
        for record in records:
            counts[record["outcome"]] = counts.get(record["outcome"], 0) + 1
        tally = ", ".join(f"{count} {outcome}" for outcome, count in sorted(counts.items()))
        return CommandOutcome(EXIT_OK, f"negative test for {source_id}: {tally or 'no recipients'}",
                              artifacts)

    return _run("decascade", action)


def cmd_validate_infectiousness(config: EngineConfig, out_path, n: Optional[int] = None,
                                seed: Optional[int] = None) -> CommandOutcome:
    def action() -> CommandOutcome:
        report, fit, artifacts = ExposureRiskAgent(config).validate_infectiousness(out_path, n, seed)
        summary = (f"ks={report.ks_statistic:.4f} (bound {fit['ks_bound']}), "
                   f"mean={report.sample_mean:.3f}, sd={report.sample_sd:.3f}, "
                   f"skewness={report.skewness:.3f}")
        if not fit["within_bound"]:
            return CommandOutcome(EXIT_MODEL, f"Gaussian fit outside bound: {summary}", artifacts)
        return CommandOutcome(EXIT_OK, summary, artifacts)

    return _run("validate-infectiousness", action)


def cmd_decay_curve(config: EngineConfig, out_path, infection_probs: Sequence[float]) -> CommandOutcome:
    def action() -> CommandOutcome:
        for p in infection_probs:
            if not 0 < p < 1:
                raise ParameterError(f"initial infection probability must be in (0, 1), got {p}")
        frame, release_days, artifacts = ExposureRiskAgent(config).decay_curve(out_path, infection_probs)
        releases = ", ".join(f"p={p}: " + ("beyond horizon" if days is None else f"{days:.2f} d")
                             for p, days in release_days.items())
        return CommandOutcome(EXIT_OK, f"decay curves over {frame['time_from_event_days'].nunique()} grid "
                                       f"points; release below {config.prob.release_threshold} at {releases}",
                              artifacts)

    return _run("decay-curve", action)


def cmd_risk_surface(config: EngineConfig, out_path, grids: Mapping[str, GridSpec]) -> CommandOutcome:
    """
    Emit the risk score over the cross-product of the distance,
    time_from_onset and duration grids.
    """
    def action() -> CommandOutcome:
        missing = {"distance", "time_from_onset", "duration"} - set(grids)
        if missing:
            raise ParameterError(f"missing grids: {sorted(missing)}")
        frame, artifacts = ExposureRiskAgent(config).risk_surface(
            out_path,
            parse_grid(grids["distance"]),
            parse_grid(grids["time_from_onset"]),
            parse_grid(grids["duration"]),
        )
        return CommandOutcome(EXIT_OK, f"risk surface with {len(frame)} points", artifacts)

    return _run("risk-surface", action)


def cmd_fit_nu(config: EngineConfig, outcomes_path, method: str, out_path,
               seed: Optional[int] = None) -> CommandOutcome:
    def action() -> CommandOutcome:
        _, summary, artifacts = ExposureRiskAgent(config).fit_nu(outcomes_path, method, out_path, seed)
        line = (f"nu posterior ({method}, {summary['records']} records): "
                f"mean={summary['mean']:.4f} sd={summary['sd']:.4f} "
                f"90% CI=[{summary['credible_low']:.4f}, {summary['credible_high']:.4f}]")
        if summary.get("warning"):
            line += f" warning: {summary['warning']}"
        return CommandOutcome(EXIT_OK, line, artifacts)

    return _run("fit-nu", action)


def cmd_simulate_outcomes(config: EngineConfig, out_path, true_nu: float, m: int,
                          rho_low: float, rho_high: float, seed: Optional[int] = None) -> CommandOutcome:
    def action() -> CommandOutcome:
        artifacts = ExposureRiskAgent(config).simulate_outcomes(out_path, true_nu, m,
                                                                rho_low, rho_high, seed)
        return CommandOutcome(EXIT_OK, f"simulated {m} outcomes with nu={true_nu}", artifacts)

    return _run("simulate-outcomes", action)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exposure-risk",
        description="Contact-tracing risk scoring, notification and nu inference",
    )
    parser.add_argument("--config", help="Engine config TOML (default: $EXPOSURE_RISK_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="Score recipients from contact events and source reports")
    p.add_argument("--events", required=True, help="events.jsonl")
    p.add_argument("--reports", required=True, help="reports.jsonl")
    p.add_argument("--out", required=True, help="Per-recipient CSV")
    p.add_argument("--store", help="Store directory to ingest the reports into")

    p = sub.add_parser("decascade", help="Apply a source's negative test to a store")
    p.add_argument("--store", required=True, help="Store directory")
    p.add_argument("--source-id", required=True)
    p.add_argument("--test-time", required=True, type=int, help="Minutes since the Unix epoch")
    p.add_argument("--out", help=f"Outcomes JSONL (default: <store>/{DECASCADE_OUTPUT})")

    p = sub.add_parser("validate-infectiousness",
                       help="Compare generation minus incubation samples with the Gaussian factor")
    p.add_argument("--out", required=True, help="Histogram CSV")
    p.add_argument("--n", type=int, help="Sample count (default: [validation].samples)")
    p.add_argument("--seed", type=int, help="RNG seed (default: [prob].seed)")

    p = sub.add_parser("decay-curve", help="Symptom-free infection probability over time")
    p.add_argument("--out", required=True)
    p.add_argument("--probs", required=True, nargs="+", type=float,
                   help="Initial infection probabilities in (0, 1)")

    p = sub.add_parser("risk-surface", help="Risk score over distance, onset offset and duration grids")
    p.add_argument("--out", required=True)
    p.add_argument("--distance", required=True, help="Metres: VALUE or START:STOP:STEP")
    p.add_argument("--time-from-onset", required=True,
                   help="Days: VALUE or START:STOP:STEP (use --time-from-onset=-5:10:1 for negatives)")
    p.add_argument("--duration", required=True, help="Minutes: VALUE or START:STOP:STEP")

    p = sub.add_parser("fit-nu", help="Posterior of nu from observed outcomes")
    p.add_argument("--outcomes", required=True, help="CSV with rho_total and infected columns")
    p.add_argument("--method", choices=["grid", "mcmc"], default="grid")
    p.add_argument("--out", required=True, help="Posterior grid CSV")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("simulate-outcomes", help="Synthetic outcomes for a known nu")
    p.add_argument("--out", required=True)
    p.add_argument("--true-nu", required=True, type=float)
    p.add_argument("--m", required=True, type=int)
    p.add_argument("--rho-low", type=float, default=0.0)
    p.add_argument("--rho-high", type=float, default=10.0)
    p.add_argument("--seed", type=int)

    return parser


def dispatch(args: argparse.Namespace, engine_config: EngineConfig) -> CommandOutcome:
    if args.command == "score":
        return cmd_score(engine_config, args.events, args.reports, args.out, args.store)
    if args.command == "decascade":
        return cmd_decascade(engine_config, args.store, args.source_id, args.test_time, args.out)
    if args.command == "validate-infectiousness":
        return cmd_validate_infectiousness(engine_config, args.out, args.n, args.seed)
    if args.command == "decay-curve":
        return cmd_decay_curve(engine_config, args.out, args.probs)
    if args.command == "risk-surface":
        return cmd_risk_surface(engine_config, args.out, {
            "distance": args.distance,
            "time_from_onset": args.time_from_onset,
            "duration": args.duration,
        })
    if args.command == "fit-nu":
        return cmd_fit_nu(engine_config, args.outcomes, args.method, args.out, args.seed)
    return cmd_simulate_outcomes(engine_config, args.out, args.true_nu, args.m,
                                 args.rho_low, args.rho_high, args.seed)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger = Logger(log_level=config.get("log_level", "INFO"), log_file=config.get("log_file"))

    config_path = args.config or config.get("config_path")
    try:
        engine_config = load_config(config_path) if config_path else default_engine_config()
    except ConfigError as exc:
        logger.error(str(exc))
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG

    outcome = dispatch(args, engine_config)
    if outcome.ok:
        print(outcome.summary)
    else:
        logger.error(outcome.summary, {"exit_code": outcome.exit_code, "command": args.command})
        print(outcome.summary, file=sys.stderr)
    for artifact in outcome.artifacts:
        logger.debug("Wrote artifact", {"path": artifact})
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
