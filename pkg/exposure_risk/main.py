"""
Main entry point for the exposure risk toolkit.

This module wires the engine components together and provides the work
behind each command-line subcommand.
"""

from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from joblib import Parallel, delayed

from exposure_risk.alerts.notifier import NegativeTestEvent, should_notify
from exposure_risk.config import Config, EngineConfig, config
from exposure_risk.errors import DataError, HorizonError, ParameterError
from exposure_risk.epi.distributions import (
    FitReport,
    SumCdf,
    analytic_moments,
    build_sum_cdf,
    difference_histogram,
    gaussian_fit_report,
    sample_difference,
)
from exposure_risk.register.exporter import RegisterExporter, companion_path
from exposure_risk.register.store import EventStore
from exposure_risk.risk.engine import MINUTES_PER_DAY, RecipientLedger, RiskParams, risk_surface, total_risk
from exposure_risk.risk.inference import (
    Posterior,
    posterior_grid,
    posterior_mcmc,
    simulate_outcomes,
)
from exposure_risk.risk.probability import (
    ExposureEvent,
    ProbParams,
    RecipientExposure,
    decay_curve,
    exposure_from_ledger,
    infection_probability_from_rho,
    release_time,
    rho_for_probability,
)
from exposure_risk.utils.file_loader import FileLoader
from exposure_risk.utils.logger import Logger

SCORE_COLUMNS = ["recipient_id", "total_risk", "notify", "infection_probability", "prob_notify"]


class ExposureRiskAgent:
    """
    Orchestrates scoring, notification, validation and inference runs.

    Every method writes its artifacts atomically and returns their paths
    along with the computed result.
    """

    def __init__(self, engine_config: EngineConfig, app_config: Config = config):
        """
        Initialize the agent.

        Args:
            engine_config: Validated engine configuration
            app_config: Application settings (logging)
        """
        self.engine_config = engine_config
        self.logger = Logger(
            log_level=app_config.get("log_level", "INFO"),
            log_file=app_config.get("log_file"),
        )
        self.file_loader = FileLoader()
        self.exporter = RegisterExporter()

    @property
    def risk_params(self) -> RiskParams:
        return self.engine_config.risk

    @cached_property
    def sum_cdf(self) -> SumCdf:
        prob = self.engine_config.prob
        self.logger.info("Building symptom-time CDF", {"samples": prob.mc_samples,
                                                       "grid_step": prob.grid_step,
                                                       "seed": prob.seed})
        return build_sum_cdf(self.engine_config.epi, prob.mc_samples, prob.grid_step,
                             prob.seed, prob.cdf_coverage)

    @cached_property
    def prob_params(self) -> ProbParams:
        prob = self.engine_config.prob
        return ProbParams(nu=prob.nu, p_min=prob.p_min, sum_cdf=self.sum_cdf,
                          decay_model=prob.decay_model)

    def score(self, events_path, reports_path, out_path,
              store_dir: Optional[str] = None) -> Tuple[List[RecipientLedger], List[str]]:
        """
        Score every recipient appearing in the inputs.

        Args:
            events_path: events.jsonl
            reports_path: reports.jsonl
            out_path: Per-recipient CSV; a breakdown JSONL is written next to it
            store_dir: Optional store directory to ingest the reports into

        Returns:
            Tuple of (ledgers sorted by recipient id, written artifact paths)
        """
        self.logger.info("Scoring contact events", {"events": str(events_path),
                                                    "reports": str(reports_path)})
        try:
            reports = self.file_loader.assemble_reports(events_path, reports_path)
            params = self.risk_params

            store = None
            if store_dir:
                store = EventStore.open(store_dir, params)
                duplicates = sorted(r.source_id for r in reports if r.source_id in store.reports)
                if duplicates:
                    raise DataError(f"store already holds reports for sources {duplicates}",
                                    field="source_id")

            recipients = sorted({e.recipient_id for r in reports for e in r.events})

            ledgers = Parallel(n_jobs=self.engine_config.runtime.n_jobs)(
                delayed(total_risk)(reports, recipient, params) for recipient in recipients
            )
            ledgers = [ledger for ledger in ledgers if ledger.per_source]

            nu = self.engine_config.prob.nu
            p_min = self.engine_config.prob.p_min
            rows = []
            for ledger in ledgers:
                exposure = exposure_from_ledger(ledger)
                probability = float(infection_probability_from_rho(exposure.rho_total, nu))
                rows.append({
                    "recipient_id": ledger.recipient_id,
                    "total_risk": ledger.total,
                    "notify": should_notify(ledger, params),
                    "infection_probability": probability,
                    "prob_notify": probability >= p_min,
                })
            frame = pd.DataFrame(rows, columns=SCORE_COLUMNS)

            artifacts = [
                self.exporter.export_to_csv(frame, out_path),
                self.exporter.export_to_jsonl((l.to_dict() for l in ledgers),
                                              companion_path(out_path, ".breakdown.jsonl")),
            ]

            if store is not None:
                for report in reports:
                    store.ingest_report(report, params)
                artifacts.append(str(store.journal_path))

            self.logger.info("Scoring complete", {"recipients": len(ledgers),
                                                  "notified": int(frame["notify"].sum())})
            return ledgers, artifacts
        except Exception as e:
            self.logger.error(f"Error scoring contact events: {str(e)}", exc_info=True)
            raise

    def decascade(self, store_dir, source_id: str, test_time: int, out_path) -> Tuple[List[Dict[str, Any]], List[str]]:
        """
        Apply a negative test to a store and write the outcome records.

        Returns:
            Tuple of (outcome records, written artifact paths)
        """
        self.logger.info("De-cascading negative test", {"source_id": source_id, "test_time": test_time})
        try:
            negative = NegativeTestEvent(source_id=source_id, test_time=test_time)
            store = EventStore.open(store_dir, self.risk_params)
            records = [r.to_dict() for r in store.apply_negative_test(negative, self.risk_params)]
            artifacts = [self.exporter.export_to_jsonl(records, out_path), str(store.journal_path)]
            return records, artifacts
        except Exception as e:
            self.logger.error(f"Error de-cascading source {source_id}: {str(e)}", exc_info=True)
            raise

    def validate_infectiousness(self, out_path, n: Optional[int] = None,
                                seed: Optional[int] = None) -> Tuple[FitReport, Dict[str, Any], List[str]]:
        """
        Compare sampled (generation - incubation) with the Gaussian factor.

        Returns:
            Tuple of (fit report, JSON report written, artifact paths)
        """
        validation = self.engine_config.validation
        n = validation.samples if n is None else n
        seed = self.engine_config.prob.seed if seed is None else seed
        if n < validation.min_samples:
            self.logger.warning("Sample size below recommended minimum",
                                {"n": n, "recommended": validation.min_samples})

        params = self.risk_params
        samples = sample_difference(self.engine_config.epi, n, seed)
        report = gaussian_fit_report(samples, params.mu0, params.sigma0)
        histogram = difference_histogram(samples, params.mu0, params.sigma0, validation.bins)

        moments = analytic_moments(self.engine_config.epi)
        fit = {
            **report.to_dict(),
            "seed": seed,
            "ks_bound": validation.ks_bound,
            "within_bound": report.ks_statistic < validation.ks_bound,
            "analytic_mean": moments["difference_mean"],
            "analytic_sd": moments["difference_var"] ** 0.5,
        }
        artifacts = [
            self.exporter.export_to_csv(histogram, out_path),
            self.exporter.export_to_json(fit, companion_path(out_path, ".fit.json")),
        ]
        self.logger.info("Infectiousness validation complete", fit)
        return report, fit, artifacts

    def decay_curve(self, out_path, infection_probs: Sequence[float]) -> Tuple[pd.DataFrame, Dict[str, Optional[float]], List[str]]:
        """
        Single-event decay curves, plus the day on which each curve first
        drops below [prob].release_threshold (None past the CDF horizon).

        Returns:
            Tuple of (curves, release day per initial probability, artifact paths)
        """
        params = self.prob_params
        threshold = self.engine_config.prob.release_threshold
        frame = decay_curve(infection_probs, params)

        release_days: Dict[str, Optional[float]] = {}
        for p in infection_probs:
            exposure = RecipientExposure("curve", (ExposureEvent(0.0, rho_for_probability(p, params.nu)),))
            try:
                release_days[str(p)] = release_time(exposure, threshold, params) / MINUTES_PER_DAY
            except HorizonError:
                self.logger.warning("Decay curve stays above the release threshold",
                                    {"p": p, "threshold": threshold})
                release_days[str(p)] = None

        artifacts = [
            self.exporter.export_to_csv(frame, out_path),
            self.exporter.export_to_json({"release_threshold": threshold, "release_days": release_days},
                                         companion_path(out_path, ".release.json")),
        ]
        return frame, release_days, artifacts

    def risk_surface(self, out_path, distances: Sequence[float], time_from_onset_days: Sequence[float],
                     durations: Sequence[float]) -> Tuple[pd.DataFrame, List[str]]:
        frame = risk_surface(distances, time_from_onset_days, durations, self.risk_params)
        return frame, [self.exporter.export_to_csv(frame, out_path)]

    def fit_nu(self, outcomes_path, method: str, out_path,
               seed: Optional[int] = None) -> Tuple[Posterior, Dict[str, Any], List[str]]:
        """
        Estimate the posterior of nu from an outcomes CSV.

        Args:
            outcomes_path: CSV with rho_total and infected columns
            method: "grid" or "mcmc"
            out_path: Posterior grid CSV (mcmc also writes a samples CSV)
            seed: MCMC seed, defaults to the config seed

        Returns:
            Tuple of (posterior, summary, artifact paths)
        """
        inference = self.engine_config.inference
        try:
            data = self.file_loader.read_outcomes(outcomes_path)
            self.logger.info("Fitting nu", {"records": len(data), "method": method})

            if method == "grid":
                posterior = posterior_grid(data, inference.grid_size)
            elif method == "mcmc":
                seed = self.engine_config.prob.seed if seed is None else seed
                posterior = posterior_mcmc(
                    data,
                    n_samples=inference.mcmc_samples,
                    burn_in=int(inference.burn_in_fraction * inference.mcmc_samples),
                    step=inference.step,
                    seed=seed,
                    thin=inference.thin,
                    grid_size=inference.grid_size,
                )
            else:
                raise ParameterError(f"method must be 'grid' or 'mcmc', got {method!r}")

            summary = {**posterior.summary(0.9), "records": len(data)}
            artifacts = [self.exporter.export_to_csv(posterior.grid_frame(), out_path)]
            if posterior.samples is not None:
                artifacts.append(self.exporter.export_to_csv(
                    pd.DataFrame({"nu": posterior.samples}), companion_path(out_path, ".samples.csv")))
            artifacts.append(self.exporter.export_to_json(summary, companion_path(out_path, ".diagnostics.json")))
            self.logger.info("Posterior summary", summary)
            return posterior, summary, artifacts
        except Exception as e:
            self.logger.error(f"Error fitting nu: {str(e)}", exc_info=True)
            raise

    def simulate_outcomes(self, out_path, true_nu: float, m: int, rho_low: float, rho_high: float,
                          seed: Optional[int] = None) -> List[str]:
        seed = self.engine_config.prob.seed if seed is None else seed
        data = simulate_outcomes(true_nu, m, rho_low, rho_high, seed)
        return [self.exporter.export_to_csv(data.to_frame(), out_path)]

