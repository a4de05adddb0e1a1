"""
Readers for contact events, source reports and outcome datasets.
"""

import json
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterator, List, Tuple

import pandas as pd
from pydantic import ValidationError

from exposure_risk.errors import DataError
from exposure_risk.risk.engine import ContactEvent, SourceReport
from exposure_risk.risk.inference import OutcomeDataset

# JSONL field name -> model field name
EVENT_FIELDS = {
    "source_id": "source_id",
    "recipient_id": "recipient_id",
    "start_time_min": "start_time",
    "duration_min": "duration",
    "distance_m": "distance",
    "rssi_dbm": "rssi",
    "context_factor": "context_factor",
}
REPORT_FIELDS = {
    "source_id": "source_id",
    "symptom_onset_min": "symptom_onset_time",
    "report_min": "report_time",
    "source_weight": "source_weight",
}


def _format_validation(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(p) for p in error['loc']) or 'record'}: {error['msg']}"
        for error in exc.errors()
    )


def _rename(record: Dict[str, Any], mapping: Dict[str, str], line: int) -> Dict[str, Any]:
    unknown = sorted(set(record) - set(mapping))
    if unknown:
        raise DataError(f"unknown fields {unknown}", line=line)
    return {mapping[k]: v for k, v in record.items() if v is not None}


class FileLoader:
    """
    Loads input files, collecting every per-line problem before failing.
    """

    @staticmethod
    def iter_jsonl(path) -> Iterator[Tuple[int, Any]]:
        """
        Yield (line number, decoded object) for every non-blank line.

        Raises:
            DataError: on the first line that is not valid JSON
        """
        with Path(path).open("r", encoding="utf-8") as f:
            for number, raw in enumerate(f, start=1):
                if not raw.strip():
                    continue
                try:
                    yield number, json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise DataError(f"invalid JSON: {exc.msg}", line=number) from exc

    def _read_records(self, path, mapping: Dict[str, str], build) -> Tuple[List[Tuple[int, Any]], List[DataError]]:
        records, errors = [], []
        with Path(path).open("r", encoding="utf-8") as f:
            for number, raw in enumerate(f, start=1):
                if not raw.strip():
                    continue
                try:
                    data = json.loads(raw)
                    if not isinstance(data, dict):
                        raise DataError("expected a JSON object", line=number)
                    records.append((number, build(_rename(data, mapping, number))))
                except json.JSONDecodeError as exc:
                    errors.append(DataError(f"invalid JSON: {exc.msg}", line=number))
                except ValidationError as exc:
                    errors.append(DataError(_format_validation(exc), line=number))
                except DataError as exc:
                    errors.append(exc)
        return records, errors

    def read_events(self, path) -> Tuple[List[Tuple[int, ContactEvent]], List[DataError]]:
        """
        Read events.jsonl.

        Returns:
            Tuple of ((line, event) pairs, per-line errors)
        """
        return self._read_records(path, EVENT_FIELDS, ContactEvent.model_validate)

    def read_report_headers(self, path) -> Tuple[List[Tuple[int, Dict[str, Any]]], List[DataError]]:
        """
        Read reports.jsonl without events attached.

        Report invariants that involve events are checked in assemble_reports.
        """
        def build(header: Dict[str, Any]) -> Dict[str, Any]:
            SourceReport.model_validate(header)
            return header

        return self._read_records(path, REPORT_FIELDS, build)

    def assemble_reports(self, events_path, reports_path) -> List[SourceReport]:
        """
        Join events to their source reports.

        Raises:
            DataError: summarising every parse error, orphan event, duplicate
                report and report invariant violation found
        """
        events, errors = self.read_events(events_path)
        headers, header_errors = self.read_report_headers(reports_path)
        errors = [DataError(f"{Path(events_path).name}: {e}") for e in errors]
        errors += [DataError(f"{Path(reports_path).name}: {e}") for e in header_errors]

        by_source: Dict[str, Dict[str, Any]] = {}
        for number, header in headers:
            if header["source_id"] in by_source:
                errors.append(DataError(f"{Path(reports_path).name}: line {number}: "
                                        f"duplicate report for source {header['source_id']!r}"))
                continue
            by_source[header["source_id"]] = header

        grouped: Dict[str, List[ContactEvent]] = defaultdict(list)
        for number, event in events:
            if event.source_id not in by_source:
                errors.append(DataError(f"{Path(events_path).name}: line {number}: "
                                        f"event references missing report for source "
                                        f"{event.source_id!r}"))
                continue
            grouped[event.source_id].append(event)

        reports = []
        for source_id in sorted(by_source):
            try:
                reports.append(SourceReport.model_validate(
                    {**by_source[source_id], "events": grouped.get(source_id, [])}))
            except ValidationError as exc:
                errors.append(DataError(f"report {source_id!r}: {_format_validation(exc)}"))

        if errors:
            raise DataError(f"{len(errors)} input problem(s):\n  " +
                            "\n  ".join(str(e) for e in errors))
        return reports

    @staticmethod
    def read_outcomes(path) -> OutcomeDataset:
        """
        Read an outcomes CSV with columns rho_total and infected (0/1).

        Raises:
            DataError: on missing columns or bad values
            ImpossibleObservationError: for infected rows with rho_total = 0
        """
        try:
            frame = pd.read_csv(path)
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
            raise DataError(f"{path}: cannot parse outcomes CSV: {exc}") from exc
        missing = {"rho_total", "infected"} - set(frame.columns)
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        bad = ~frame["infected"].isin([0, 1])
        if bad.any():
            row = int(bad.to_numpy().nonzero()[0][0]) + 1
            raise DataError(f"{path}: row {row}: infected must be 0 or 1", field="infected")
        dataset = OutcomeDataset(rho=frame["rho_total"].to_numpy(dtype=float),
                                 infected=frame["infected"].to_numpy(dtype=int).astype(bool))
        return dataset.validate()
