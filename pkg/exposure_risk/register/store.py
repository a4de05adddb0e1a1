"""
Journal-backed store of source reports, recipient ledgers and notification
states.

The journal is the only persisted state: one JSON line per operation
(`ingest` of a source report or `decascade` of a negative test). Opening a
store replays its journal, so ledgers are always derivable from it.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from pydantic import ValidationError

from exposure_risk.alerts.notifier import (
    DecascadeRecord,
    NegativeTestEvent,
    NotificationState,
    Outcome,
    decascade,
    update_state,
)
from exposure_risk.errors import DataError, JournalError
from exposure_risk.risk.engine import (
    RecipientLedger,
    RiskParams,
    SourceReport,
    pair_contribution,
    recipients_of,
)
from exposure_risk.utils.file_loader import FileLoader

logger = logging.getLogger(__name__)

JOURNAL_FILE = "journal.jsonl"
OP_INGEST = "ingest"
OP_DECASCADE = "decascade"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class EventStore:
    """
    Reports, ledgers and notification states, plus the journal that
    produced them. With a directory, journal entries are also appended to
    `<directory>/journal.jsonl`.
    """

    directory: Optional[Path] = None
    reports: Dict[str, SourceReport] = field(default_factory=dict)
    ledgers: Dict[str, RecipientLedger] = field(default_factory=dict)
    notifications: Dict[str, NotificationState] = field(default_factory=dict)
    negative_tests: Dict[Tuple[str, int], List[DecascadeRecord]] = field(default_factory=dict)
    journal: List[Dict[str, Any]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def journal_path(self) -> Optional[Path]:
        return self.directory / JOURNAL_FILE if self.directory else None

    @classmethod
    def open(cls, directory, params: RiskParams) -> "EventStore":
        """
        Open (or create) a store directory, replaying its journal.

        Raises:
            JournalError: naming the first corrupt journal line
        """
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        journal_path = path / JOURNAL_FILE
        entries = read_journal(journal_path) if journal_path.exists() else []
        store = replay(entries, params)
        store.directory = path
        logger.info("Opened store %s (%d journal entries, %d recipients)",
                    path, len(entries), len(store.ledgers))
        return store

    def _append(self, op: str, payload: Dict[str, Any]) -> None:
        entry = {"op": op, "payload": payload, "ts": _now()}
        with self._lock:
            if self.journal_path is not None:
                with self.journal_path.open("a", encoding="utf-8") as f:
                    f.write(json.dumps(entry, sort_keys=True) + "\n")
                    f.flush()
                    os.fsync(f.fileno())
            self.journal.append(entry)

    def _state(self, recipient_id: str) -> NotificationState:
        existing = self.notifications.get(recipient_id)
        if existing is not None:
            return existing
        ledger = self.ledgers.get(recipient_id, RecipientLedger(recipient_id=recipient_id))
        return NotificationState(recipient_id=recipient_id, ledger=ledger)

    def _apply_ingest(self, report: SourceReport, params: RiskParams) -> List[str]:
        if report.source_id in self.reports:
            raise DataError(f"duplicate report for source {report.source_id!r}", field="source_id")

        updated = []
        ledgers = dict(self.ledgers)
        states = dict(self.notifications)
        for recipient_id in recipients_of(report):
            contribution = pair_contribution(report, recipient_id, params)
            if not contribution.event_risks:
                continue
            ledger = ledgers.get(recipient_id, RecipientLedger(recipient_id=recipient_id))
            ledger = ledger.with_source(contribution)
            ledgers[recipient_id] = ledger
            states[recipient_id] = update_state(self._state(recipient_id), ledger,
                                                report.report_time, params)
            updated.append(recipient_id)

        self.reports[report.source_id] = report
        self.ledgers = ledgers
        self.notifications = states
        return updated

    def ingest_report(self, report: SourceReport, params: RiskParams) -> List[str]:
        """
        Add a source report and update the ledgers it touches.

        Args:
            report: Validated source report
            params: Risk parameters

        Returns:
            Sorted identifiers of the recipients whose ledgers changed

        Raises:
            DataError: if the source already has a report
        """
        updated = self._apply_ingest(report, params)
        self._append(OP_INGEST, {"report": report.model_dump(mode="json")})
        logger.info("Ingested report %s touching %d recipients", report.source_id, len(updated))
        return updated

    def _apply_decascade(self, negative: NegativeTestEvent, params: RiskParams) -> Tuple[List[DecascadeRecord], bool]:
        key = (negative.source_id, negative.test_time)
        if key in self.negative_tests:
            return self.negative_tests[key], True

        recipient_ids = sorted(self.ledgers)
        states = [self._state(r) for r in recipient_ids]
        new_states, records = decascade(states, negative, params)

        # Committed together once every state has been computed
        if not (records and records[0].outcome is Outcome.UNKNOWN_SOURCE):
            for state in new_states:
                self.notifications[state.recipient_id] = state
                self.ledgers[state.recipient_id] = state.ledger
        self.negative_tests[key] = records
        return records, False

    def apply_negative_test(self, negative: NegativeTestEvent, params: RiskParams) -> List[DecascadeRecord]:
        """
        De-cascade a negative test and journal it.

        A repeated (source_id, test_time) returns the records of the first
        application unchanged and journals an entry marked as a repeat.

        Raises:
            DataError: if the source has no report in the store
        """
        if negative.source_id not in self.reports:
            raise DataError(f"unknown source {negative.source_id!r}", field="source_id")
        records, repeat = self._apply_decascade(negative, params)
        payload = negative.model_dump(mode="json")
        if repeat:
            payload["repeat"] = True
        self._append(OP_DECASCADE, payload)
        return records

    def verify(self, params: RiskParams) -> bool:
        """Rebuild from the journal and compare ledgers and states."""
        rebuilt = rebuild(self, params)
        return rebuilt.ledgers == self.ledgers and rebuilt.notifications == self.notifications


def read_journal(path) -> List[Dict[str, Any]]:
    """
    Read journal entries.

    Raises:
        JournalError: naming the first line that cannot be decoded
    """
    entries = []
    try:
        for number, entry in FileLoader.iter_jsonl(path):
            if not isinstance(entry, dict) or entry.get("op") not in (OP_INGEST, OP_DECASCADE):
                raise JournalError("journal entry must be an object with a known op", line=number)
            entry["_line"] = number
            entries.append(entry)
    except JournalError:
        raise
    except DataError as exc:
        raise JournalError(f"corrupt journal: {exc}", line=exc.line) from exc
    return entries


def replay(entries: Iterable[Dict[str, Any]], params: RiskParams) -> EventStore:
    """
    Build a fresh in-memory store by replaying journal entries in order.

    Raises:
        JournalError: naming the journal line (or entry index) that failed
    """
    store = EventStore()
    for index, raw in enumerate(entries, start=1):
        entry = {k: v for k, v in raw.items() if k != "_line"}
        line = raw.get("_line", index)
        try:
            if entry["op"] == OP_INGEST:
                store._apply_ingest(SourceReport.model_validate(entry["payload"]["report"]), params)
            elif entry["op"] == OP_DECASCADE:
                payload = {k: v for k, v in entry["payload"].items() if k != "repeat"}
                store._apply_decascade(NegativeTestEvent.model_validate(payload), params)
            else:
                raise JournalError(f"unknown op {entry['op']!r}", line=line)
        except (KeyError, TypeError, ValidationError, DataError) as exc:
            if isinstance(exc, JournalError):
                raise
            raise JournalError(f"cannot replay entry: {exc}", line=line) from exc
        store.journal.append(entry)
    return store


def rebuild(store: EventStore, params: RiskParams) -> EventStore:
    """Fresh in-memory store produced by replaying store's journal."""
    return replay(store.journal, params)
