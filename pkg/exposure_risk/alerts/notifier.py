"""
Exposure notification and de-cascading.

A recipient is notified when their total risk reaches r_min and is advised
for a fixed 14-day window. When a source tests negative, its contributions
before the test time are zeroed and notified recipients whose revised total
falls below r_min are released.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from exposure_risk.risk.engine import MINUTES_PER_DAY, RecipientLedger, RiskParams

logger = logging.getLogger(__name__)

ADVICE_PERIOD_MINUTES = 14 * MINUTES_PER_DAY


class Outcome(str, Enum):
    """Result of a de-cascade for one recipient."""

    RELEASED = "released"
    STILL_NOTIFIED = "still_notified"
    UNAFFECTED = "unaffected"
    UNKNOWN_SOURCE = "unknown_source"


class NegativeTestEvent(BaseModel):
    """A source's negative test result."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    source_id: str = Field(min_length=1)
    test_time: int = Field(description="minutes since the Unix epoch")


@dataclass(frozen=True)
class NotificationState:
    """Notification status of a recipient together with its risk ledger."""

    recipient_id: str
    ledger: RecipientLedger
    notified_at: Optional[int] = None
    advice_until: Optional[int] = None

    @property
    def is_notified(self) -> bool:
        return self.notified_at is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "recipient_id": self.recipient_id,
            "notified_at": self.notified_at,
            "advice_until": self.advice_until,
            "total": self.ledger.total,
        }


@dataclass(frozen=True)
class DecascadeRecord:
    """One line of de-cascade output."""

    recipient_id: Optional[str]
    outcome: Outcome
    old_total: float
    new_total: float
    cause_source_id: str
    test_time: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "recipient_id": self.recipient_id,
            "outcome": self.outcome.value,
            "old_total": self.old_total,
            "new_total": self.new_total,
            "cause_source_id": self.cause_source_id,
            "test_time": self.test_time,
        }


def should_notify(ledger: RecipientLedger, params: RiskParams) -> bool:
    """True iff the recipient's total risk reaches r_min (less r_min_tolerance)."""
    return ledger.total >= params.r_min - params.r_min_tolerance


def advice_active(state: NotificationState, now: int) -> bool:
    """True iff the recipient is inside the half-open advice window."""
    return state.notified_at is not None and now < state.advice_until


def notify(state: NotificationState, now: int) -> NotificationState:
    """Start a fresh 14-day advice window at now."""
    return replace(state, notified_at=now, advice_until=now + ADVICE_PERIOD_MINUTES)


def release(state: NotificationState) -> NotificationState:
    return replace(state, notified_at=None, advice_until=None)


def update_state(state: NotificationState, ledger: RecipientLedger, now: int,
                 params: RiskParams) -> NotificationState:
    """
    Attach a new ledger and notify when the threshold is crossed.

    Recipients that are already notified keep their original window; a
    released recipient is notified again (with a restarted clock) once new
    reports push the total back over r_min.
    """
    updated = replace(state, ledger=ledger)
    if not updated.is_notified and should_notify(ledger, params):
        logger.info("Notifying %s (total %.4f >= r_min %.4f)",
                    state.recipient_id, ledger.total, params.r_min)
        updated = notify(updated, now)
    return updated


def decascade(states: Sequence[NotificationState], negative: NegativeTestEvent,
              params: RiskParams) -> Tuple[List[NotificationState], List[DecascadeRecord]]:
    """
    Remove a negative-tested source's risk before the test time.

    The full set of new states is computed before anything is returned, so
    callers commit all affected ledgers together or not at all.

    A notified recipient is released only when the new total fails
    should_notify, which subtracts r_min_tolerance from r_min. With the
    defaults a total in [1.825, 1.83) therefore stays notified. Set
    r_min_tolerance = 0 to release every total below r_min.

    Args:
        states: Current notification states
        negative: The negative test
        params: Risk parameters (r_min)

    Returns:
        Tuple of (new states in input order, records sorted by recipient id)
    """
    source_id = negative.source_id
    affected = [s for s in states if source_id in s.ledger.per_source]

    if not affected:
        logger.warning("Negative test for unknown source %s; nothing to de-cascade", source_id)
        record = DecascadeRecord(
            recipient_id=None,
            outcome=Outcome.UNKNOWN_SOURCE,
            old_total=0.0,
            new_total=0.0,
            cause_source_id=source_id,
            test_time=negative.test_time,
        )
        return list(states), [record]

    new_states: List[NotificationState] = []
    records: List[DecascadeRecord] = []
    for state in states:
        if source_id not in state.ledger.per_source:
            new_states.append(state)
            continue

        old_total = state.ledger.total
        ledger = state.ledger.zero_source_before(source_id, negative.test_time)
        new_total = ledger.total
        updated = replace(state, ledger=ledger)

        if state.is_notified and not should_notify(ledger, params):
            outcome = Outcome.RELEASED
            updated = release(updated)
        elif state.is_notified:
            outcome = Outcome.STILL_NOTIFIED
        else:
            outcome = Outcome.UNAFFECTED

        new_states.append(updated)
        records.append(DecascadeRecord(
            recipient_id=state.recipient_id,
            outcome=outcome,
            old_total=old_total,
            new_total=new_total,
            cause_source_id=source_id,
            test_time=negative.test_time,
        ))

    records.sort(key=lambda r: r.recipient_id)
    logger.info("De-cascaded source %s: %d recipients, %d released", source_id, len(records),
                sum(r.outcome is Outcome.RELEASED for r in records))
    return new_states, records
