"""
Writers for command outputs.

Every artifact is written to a temporary file in the target directory and
renamed into place, so readers never observe a partial file.
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable

import pandas as pd


class RegisterExporter:
    """Atomic CSV / JSONL / JSON writers."""

    @staticmethod
    def _write_atomic(path, text: str) -> str:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(text)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp_name, target)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        return str(target)

    def export_to_csv(self, frame: pd.DataFrame, path) -> str:
        return self._write_atomic(path, frame.to_csv(index=False, lineterminator="\n"))

    def export_to_jsonl(self, records: Iterable[Dict[str, Any]], path) -> str:
        lines = [json.dumps(record, sort_keys=True) for record in records]
        return self._write_atomic(path, "".join(line + "\n" for line in lines))

    def export_to_json(self, data: Dict[str, Any], path) -> str:
        return self._write_atomic(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def companion_path(path, suffix: str) -> Path:
    """Sibling path sharing path's stem, e.g. scores.csv -> scores.fit.json."""
    target = Path(path)
    return target.with_name(f"{target.stem}{suffix}")
