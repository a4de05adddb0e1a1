"""
Contact-event risk scoring.

A contact event E between a source i and a recipient scores

    r(E) = alpha * c * D * I * duration

with D = min(1, d_min^2 / d^2) and I a Gaussian weight on the time between
the event and the source's noon-marked symptom onset. Event scores are summed
per (source, recipient) pair inside the storage window, then over sources.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from exposure_risk.errors import DataError, ParameterError

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440
NOON_OFFSET_MINUTES = 720


class RiskParams(BaseModel):
    """Tunable constants of the risk score."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    d_min: float = Field(1.0, gt=0, description="metres")
    mu0: float = Field(-0.3, description="days")
    sigma0: float = Field(2.75, gt=0, description="days")
    delta_t_max: float = Field(10080, gt=0, description="minutes")
    r_min: float = Field(1.83, gt=0)
    # r_min is published to two decimals; totals within half a unit of the
    # last digit reach it
    r_min_tolerance: float = Field(0.005, ge=0)
    rssi_ref: float = Field(-60.0, description="dBm measured at rssi_ref_distance")
    rssi_ref_distance: float = Field(1.0, gt=0, description="metres")
    path_loss_exponent: float = Field(2.0, gt=0)
    include_post_onset_events: bool = True
    note: Optional[str] = None


class ContactEvent(BaseModel):
    """One recorded proximity interaction between a source and a recipient."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    source_id: str = Field(min_length=1)
    recipient_id: str = Field(min_length=1)
    start_time: int = Field(description="minutes since the Unix epoch")
    duration: float = Field(gt=0, description="minutes")
    distance: Optional[float] = Field(None, gt=0, description="metres")
    rssi: Optional[float] = Field(None, description="dBm")
    context_factor: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _check_proximity(self) -> "ContactEvent":
        if self.distance is None and self.rssi is None:
            raise ValueError("at least one of distance or rssi is required")
        return self


class SourceReport(BaseModel):
    """A symptomatic source's upload of its contact history."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    source_id: str = Field(min_length=1)
    symptom_onset_time: int = Field(description="minutes since the Unix epoch, noon of onset day")
    report_time: int = Field(description="minutes since the Unix epoch")
    events: Tuple[ContactEvent, ...] = ()
    source_weight: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _check_invariants(self) -> "SourceReport":
        if self.symptom_onset_time % MINUTES_PER_DAY != NOON_OFFSET_MINUTES:
            raise ValueError("symptom_onset_time must be marked to noon of the onset day")
        for index, event in enumerate(self.events):
            if event.source_id != self.source_id:
                raise ValueError(f"events.{index}.source_id {event.source_id!r} "
                                 f"does not match report source {self.source_id!r}")
            if event.start_time > self.report_time:
                raise ValueError(f"events.{index}.start_time is after report_time")
        return self


@dataclass(frozen=True)
class EventContribution:
    """Risk of one contact event as recorded in a ledger."""

    event_index: int
    start_time: int
    risk: float


@dataclass(frozen=True)
class SourceContribution:
    """Per-source share of a recipient's risk."""

    source_id: str
    event_risks: Tuple[EventContribution, ...] = ()

    @property
    def risk(self) -> float:
        return math.fsum(e.risk for e in self.event_risks)

    def zero_before(self, test_time: int) -> "SourceContribution":
        """Zero every event that started before test_time."""
        return replace(self, event_risks=tuple(
            replace(e, risk=0.0) if e.start_time < test_time else e
            for e in self.event_risks
        ))


@dataclass(frozen=True)
class RecipientLedger:
    """Decomposition of a recipient's risk by source."""

    recipient_id: str
    per_source: Dict[str, SourceContribution] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return math.fsum(c.risk for c in self.per_source.values())

    def source_risk(self, source_id: str) -> float:
        contribution = self.per_source.get(source_id)
        return contribution.risk if contribution else 0.0

    def with_source(self, contribution: SourceContribution) -> "RecipientLedger":
        per_source = dict(self.per_source)
        per_source[contribution.source_id] = contribution
        return replace(self, per_source=per_source)

    def without_source(self, source_id: str) -> "RecipientLedger":
        per_source = {k: v for k, v in self.per_source.items() if k != source_id}
        return replace(self, per_source=per_source)

    def zero_source_before(self, source_id: str, test_time: int) -> "RecipientLedger":
        if source_id not in self.per_source:
            return self
        return self.with_source(self.per_source[source_id].zero_before(test_time))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "recipient_id": self.recipient_id,
            "total": self.total,
            "per_source": {
                source_id: {
                    "risk": contribution.risk,
                    "event_risks": [
                        {"event_index": e.event_index, "start_time": e.start_time, "risk": e.risk}
                        for e in contribution.event_risks
                    ],
                }
                for source_id, contribution in sorted(self.per_source.items())
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RecipientLedger":
        per_source = {
            source_id: SourceContribution(
                source_id=source_id,
                event_risks=tuple(
                    EventContribution(int(e["event_index"]), int(e["start_time"]), float(e["risk"]))
                    for e in entry["event_risks"]
                ),
            )
            for source_id, entry in data.get("per_source", {}).items()
        }
        return cls(recipient_id=data["recipient_id"], per_source=per_source)


def distance_factor(d: float, params: RiskParams) -> float:
    """
    Distance attenuation min(1, d_min^2 / d^2).

    Raises:
        ParameterError: if d <= 0
    """
    if not d > 0:
        raise ParameterError(f"distance must be > 0, got {d}")
    return min(1.0, params.d_min ** 2 / d ** 2)


def rssi_to_distance(rssi: float, params: RiskParams) -> float:
    """
    Invert the log-distance path-loss model.

    d = d_ref * 10 ** ((rssi_ref - rssi) / (10 * n))
    """
    exponent = (params.rssi_ref - rssi) / (10.0 * params.path_loss_exponent)
    return params.rssi_ref_distance * 10.0 ** exponent


def infectiousness_factor(event_start: float, symptom_onset: float, params: RiskParams) -> float:
    """
    Gaussian weight on the event's offset from symptom onset, maximal (1)
    when the offset in days equals mu0.
    """
    delta_days = (event_start - symptom_onset) / MINUTES_PER_DAY
    z = (delta_days - params.mu0) / params.sigma0
    return math.exp(-0.5 * z * z)


def resolve_distance(event: ContactEvent, params: RiskParams) -> float:
    """Explicit distance wins over an RSSI-derived estimate."""
    if event.distance is not None:
        return event.distance
    if event.rssi is not None:
        return rssi_to_distance(event.rssi, params)
    raise DataError(f"event {event.source_id}->{event.recipient_id} at {event.start_time} "
                    f"has neither distance nor rssi", field="distance")


def event_risk(event: ContactEvent, report: SourceReport, params: RiskParams) -> float:
    """
    Risk of transmission for a single contact event.

    Args:
        event: Contact event belonging to report
        report: The source's report (onset time and source weight)
        params: Risk parameters

    Returns:
        alpha * c * D * I * duration (duration in minutes)
    """
    distance = resolve_distance(event, params)
    return (
        report.source_weight
        * event.context_factor
        * distance_factor(distance, params)
        * infectiousness_factor(event.start_time, report.symptom_onset_time, params)
        * event.duration
    )


def in_window(event: ContactEvent, report: SourceReport, params: RiskParams) -> bool:
    """Whether an event's start time falls inside the source's storage window."""
    if not report.symptom_onset_time - params.delta_t_max < event.start_time:
        return False
    if not params.include_post_onset_events and event.start_time > report.symptom_onset_time:
        return False
    return True


def pair_contribution(report: SourceReport, recipient: str, params: RiskParams) -> SourceContribution:
    """Per-event risks of every in-window event from report's source to recipient."""
    event_risks = tuple(
        EventContribution(index, event.start_time, event_risk(event, report, params))
        for index, event in enumerate(report.events)
        if event.recipient_id == recipient and in_window(event, report, params)
    )
    return SourceContribution(source_id=report.source_id, event_risks=event_risks)


def pair_risk(report: SourceReport, recipient: str, params: RiskParams) -> float:
    """Total risk of transmission from report's source to recipient."""
    return pair_contribution(report, recipient, params).risk


def recipients_of(report: SourceReport) -> List[str]:
    """Sorted identifiers of every recipient appearing in a report."""
    return sorted({event.recipient_id for event in report.events})


def total_risk(reports: Sequence[SourceReport], recipient: str, params: RiskParams) -> RecipientLedger:
    """
    Aggregate a recipient's risk over all source reports.

    Raises:
        DataError: if two reports share a source_id
    """
    ledger = RecipientLedger(recipient_id=recipient)
    seen = set()
    for report in reports:
        if report.source_id in seen:
            raise DataError(f"duplicate report for source {report.source_id!r}", field="source_id")
        seen.add(report.source_id)
        contribution = pair_contribution(report, recipient, params)
        if contribution.event_risks:
            ledger = ledger.with_source(contribution)
    return ledger


def risk_surface(distances: Iterable[float], time_from_onset_days: Iterable[float],
                 durations: Iterable[float], params: RiskParams,
                 context_factor: float = 1.0, source_weight: float = 1.0) -> pd.DataFrame:
    """
    Risk score of a single contact event over a grid of inputs.

    Args:
        distances: Distances in metres (> 0)
        time_from_onset_days: Event offsets from noon-marked onset, in days
        durations: Event durations in minutes (> 0)
        params: Risk parameters
        context_factor: Context factor c, 1 for visualisation
        source_weight: Source weight alpha

    Returns:
        Long-format DataFrame with columns distance, time_from_onset_days,
        duration_min, risk_score covering the cross-product
    """
    d = np.asarray(list(distances), dtype=float)
    t = np.asarray(list(time_from_onset_days), dtype=float)
    dt = np.asarray(list(durations), dtype=float)
    if d.size == 0 or t.size == 0 or dt.size == 0:
        raise ParameterError("every grid must contain at least one value")
    if np.any(d <= 0) or np.any(dt <= 0):
        raise ParameterError("distances and durations must be > 0")

    dd, tt, dtt = (a.ravel() for a in np.meshgrid(d, t, dt, indexing="ij"))
    distance_term = np.minimum(1.0, params.d_min ** 2 / dd ** 2)
    infectiousness = np.exp(-0.5 * ((tt - params.mu0) / params.sigma0) ** 2)
    risk = source_weight * context_factor * distance_term * infectiousness * dtt

    return pd.DataFrame({
        "distance": dd,
        "time_from_onset_days": tt,
        "duration_min": dtt,
        "risk_score": risk,
    })
