"""
Probabilistic reading of the risk score.

With a base parameter nu in (0, 1), a contact event E leaves the recipient
uninfected with probability nu ** rho(E), and the event's risk score r(E)
estimates rho(E). Summing over independent events gives
P(infected) = 1 - nu ** rho_j. Combined with G, the CDF of generation plus
incubation period, the probability of being infected given no symptoms by
time t decays towards zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd
from numpy.random import default_rng

from exposure_risk.epi.distributions import EpiDistributions, SumCdf, eval_cdf, sample_sum
from exposure_risk.errors import HorizonError, ModelValidityError, ParameterError
from exposure_risk.risk.engine import MINUTES_PER_DAY, RecipientLedger

logger = logging.getLogger(__name__)


class DecayModel(str, Enum):
    """How the symptom-free probability combines several events."""

    # Union numerator over a first-order (summed) denominator
    TRUNCATED = "truncated"
    # Exact under independent per-event infection and symptom delays
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class ProbParams:
    nu: float
    p_min: float
    sum_cdf: SumCdf
    decay_model: DecayModel = DecayModel.TRUNCATED

    def __post_init__(self):
        if not 0 < self.nu < 1:
            raise ParameterError(f"nu must be in (0, 1), got {self.nu}")
        if not 0 < self.p_min < 1:
            raise ParameterError(f"p_min must be in (0, 1), got {self.p_min}")
        object.__setattr__(self, "decay_model", DecayModel(self.decay_model))


@dataclass(frozen=True)
class ExposureEvent:
    event_time: float  # minutes since the Unix epoch
    rho: float

    def __post_init__(self):
        if not self.rho >= 0:
            raise ParameterError(f"rho must be >= 0, got {self.rho}")


@dataclass(frozen=True)
class RecipientExposure:
    recipient_id: str
    events: Tuple[ExposureEvent, ...] = field(default_factory=tuple)

    @property
    def rho_total(self) -> float:
        return math.fsum(e.rho for e in self.events)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        times = np.array([e.event_time for e in self.events], dtype=float)
        rhos = np.array([e.rho for e in self.events], dtype=float)
        return times, rhos


def exposure_from_ledger(ledger: RecipientLedger) -> RecipientExposure:
    """Use each event's risk score as its rho."""
    events = tuple(
        ExposureEvent(event_time=float(e.start_time), rho=e.risk)
        for source_id in sorted(ledger.per_source)
        for e in ledger.per_source[source_id].event_risks
    )
    return RecipientExposure(recipient_id=ledger.recipient_id, events=events)


def survival(rho: npt.ArrayLike, nu: float):
    """Probability of not being infected, nu ** rho."""
    return np.power(nu, rho)


def infection_probability_from_rho(rho: npt.ArrayLike, nu: float):
    """1 - nu ** rho, computed without cancellation for small rho."""
    return -np.expm1(np.asarray(rho, dtype=float) * math.log(nu))


def rho_for_probability(p: float, nu: float) -> float:
    """Exposure at which a single event infects with probability p."""
    return math.log1p(-p) / math.log(nu)


def infection_probability(exposure: RecipientExposure, params: ProbParams) -> float:
    """P(I_j) = 1 - nu ** rho_j."""
    return float(infection_probability_from_rho(exposure.rho_total, params.nu))


def prob_notify(exposure: RecipientExposure, params: ProbParams) -> bool:
    """True iff the infection probability is at least p_min."""
    return infection_probability(exposure, params) >= params.p_min


def _symptom_free(times: np.ndarray, p_inf: np.ndarray, t: float, params: ProbParams) -> float:
    g = np.asarray(eval_cdf(params.sum_cdf, (t - times) / MINUTES_PER_DAY), dtype=float)

    if params.decay_model is DecayModel.INDEPENDENT:
        no_symptoms = float(np.prod(1.0 - g * p_inf))
        if no_symptoms <= 0:
            raise ModelValidityError(f"probability of no symptoms by t={t} is zero")
        return (no_symptoms - float(np.prod(1.0 - p_inf))) / no_symptoms

    numerator = 1.0 - float(np.prod(1.0 - (1.0 - g) * p_inf))
    denominator = 1.0 - float(np.sum(g * p_inf))
    if denominator <= 0:
        raise ModelValidityError(
            f"denominator {denominator:.6g} <= 0 at t={t}: the pairwise-independence "
            f"approximation breaks down for this exposure")
    return numerator / denominator


def symptom_free_infection_probability(exposure: RecipientExposure, t: float,
                                       params: ProbParams) -> float:
    """
    Probability that the recipient is infected given no symptoms by time t.

    Args:
        exposure: The recipient's contact events and their rho values
        t: Absolute time in minutes
        params: nu, G and the decay model

    Returns:
        Probability in [0, 1]

    Raises:
        ModelValidityError: if the summed denominator is not positive
    """
    times, rhos = exposure.arrays()
    if times.size == 0:
        return 0.0
    return _symptom_free(times, infection_probability_from_rho(rhos, params.nu), t, params)


def release_time(exposure: RecipientExposure, threshold: float, params: ProbParams) -> float:
    """
    Earliest time at which the symptom-free infection probability drops
    below threshold, scanning G's grid from the latest event. A threshold
    at or above the probability at the latest event releases immediately.

    Returns:
        Absolute time in minutes

    Raises:
        HorizonError: if the probability stays at or above threshold over
            the whole grid
    """
    if not 0 < threshold < 1:
        raise ParameterError(f"threshold must be in (0, 1), got {threshold}")
    times, rhos = exposure.arrays()
    if times.size == 0:
        raise ParameterError(f"exposure of {exposure.recipient_id!r} has no events")

    p_inf = infection_probability_from_rho(rhos, params.nu)
    start = float(times.max())
    # Already at or below the threshold: release at the latest event
    if _symptom_free(times, p_inf, start, params) <= threshold:
        return start

    for offset in params.sum_cdf.grid_times:
        t = start + float(offset) * MINUTES_PER_DAY
        if _symptom_free(times, p_inf, t, params) < threshold:
            return t

    raise HorizonError(
        f"probability for {exposure.recipient_id!r} stays >= {threshold} over the "
        f"{params.sum_cdf.horizon:.2f}-day CDF horizon")


def decay_curve(initial_probs: Iterable[float], params: ProbParams) -> pd.DataFrame:
    """
    Symptom-free infection probability after a single event, over G's grid.

    Returns:
        Long-format DataFrame with columns time_from_event_days,
        infection_prob_initial, conditional_probability
    """
    probs = [float(p) for p in initial_probs]
    for p in probs:
        if not 0 < p < 1:
            raise ParameterError(f"initial infection probability must be in (0, 1), got {p}")

    grid = params.sum_cdf.grid_times
    frames = []
    for p in probs:
        exposure = RecipientExposure("curve", (ExposureEvent(0.0, rho_for_probability(p, params.nu)),))
        conditional = [
            symptom_free_infection_probability(exposure, float(day) * MINUTES_PER_DAY, params)
            for day in grid
        ]
        frames.append(pd.DataFrame({
            "time_from_event_days": grid,
            "infection_prob_initial": p,
            "conditional_probability": conditional,
        }))
    if not frames:
        return pd.DataFrame(columns=["time_from_event_days", "infection_prob_initial",
                                     "conditional_probability"])
    return pd.concat(frames, ignore_index=True)


def monte_carlo_symptom_free_probability(exposure: RecipientExposure, times: Sequence[float],
                                         nu: float, dist: EpiDistributions, n_trials: int,
                                         seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Simulate infection and symptom onset for an exposure.

    Each event infects independently with probability 1 - nu ** rho; an
    infection from event E produces symptoms at t_E plus a generation plus
    incubation period draw.

    Returns:
        Tuple of (frequency, standard error) arrays, one entry per time, of
        "infected and no symptoms by t" among trials with no symptoms by t
    """
    if n_trials < 1:
        raise ParameterError(f"n_trials must be >= 1, got {n_trials}")
    event_times, rhos = exposure.arrays()
    rng = default_rng(seed)
    n_events = event_times.size

    infected = rng.random((n_trials, n_events)) < infection_probability_from_rho(rhos, nu)
    delays = sample_sum(dist, n_trials * n_events, int(rng.integers(2 ** 31)))
    onset = event_times + delays.reshape(n_trials, n_events) * MINUTES_PER_DAY
    any_infected = infected.any(axis=1)

    frequencies, errors = [], []
    for t in times:
        symptomatic = (infected & (onset <= t)).any(axis=1)
        no_symptoms = ~symptomatic
        count = int(no_symptoms.sum())
        if count == 0:
            frequencies.append(float("nan"))
            errors.append(float("nan"))
            continue
        freq = float((any_infected & no_symptoms).sum()) / count
        frequencies.append(freq)
        errors.append(math.sqrt(freq * (1.0 - freq) / count))
    return np.array(frequencies), np.array(errors)
