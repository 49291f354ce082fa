"""
Run directory layout and the append-only record log.

    <out>/<run_id>/
        manifest.json    frozen RunManifest
        records.jsonl    one PredictionRecord per line, appended as samples finish
        metrics.json     MetricsSummary, written when the run completes

When the log holds several lines for one sample id, the last valid line wins.
"""

import json
import os
import threading
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import ValidationError

from models.domain import MetricsSummary
from models.run import PredictionRecord, RunManifest
from pipeline.errors import DataError, RunIOError
from utils.helpers import atomic_write_text, utc_now
from utils.logging import get_pipeline_logger

logger = get_pipeline_logger("record_log")

MANIFEST_FILE = "manifest.json"
RECORDS_FILE = "records.jsonl"
METRICS_FILE = "metrics.json"


class RunDirectory:
    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()

    @property
    def manifest_path(self) -> Path:
        return self.path / MANIFEST_FILE

    @property
    def records_path(self) -> Path:
        return self.path / RECORDS_FILE

    @property
    def metrics_path(self) -> Path:
        return self.path / METRICS_FILE

    def exists(self) -> bool:
        return self.manifest_path.is_file()

    def create(self) -> None:
        try:
            self.path.mkdir(parents=True, exist_ok=True)
            marker = self.path / ".write_check"
            marker.write_text("", encoding="utf-8")
            marker.unlink()
        except OSError as e:
            raise RunIOError(f"Run directory {self.path} is not writable: {e}")

    def write_manifest(self, manifest: RunManifest) -> None:
        try:
            atomic_write_text(self.manifest_path, manifest.model_dump_json(indent=2) + "\n")
        except OSError as e:
            raise RunIOError(f"Cannot write {self.manifest_path}: {e}")

    def read_manifest(self) -> RunManifest:
        try:
            return RunManifest.model_validate_json(self.manifest_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise RunIOError(f"No {MANIFEST_FILE} in {self.path}")
        except OSError as e:
            raise RunIOError(f"Cannot read {self.manifest_path}: {e}")
        except ValidationError as e:
            raise DataError(f"Invalid manifest {self.manifest_path}: {e.error_count()} errors")

    def append_record(self, record: PredictionRecord) -> None:
        """Durably append one record line; serialized across threads."""
        line = json.dumps(
            record.to_log_dict(recorded_at=utc_now().isoformat()),
            ensure_ascii=False,
            separators=(",", ":"),
        )
        with self._lock:
            try:
                with open(self.records_path, "a", encoding="utf-8") as f:
                    f.write(line + "\n")
                    f.flush()
                    os.fsync(f.fileno())
            except OSError as e:
                raise RunIOError(f"Cannot append to {self.records_path}: {e}")

    def read_records(self) -> Dict[str, PredictionRecord]:
        """Valid records by sample id; corrupt lines are skipped with a warning."""
        records: Dict[str, PredictionRecord] = {}
        if not self.records_path.is_file():
            return records

        try:
            lines = self.records_path.read_text(encoding="utf-8").splitlines()
        except (OSError, UnicodeDecodeError) as e:
            raise RunIOError(f"Cannot read {self.records_path}: {e}")

        for line_number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = PredictionRecord.from_log_dict(json.loads(line))
            except (ValueError, KeyError, TypeError, ValidationError) as e:
                logger.warning(
                    f"Skipping corrupt record line {line_number} in {self.records_path}: {e}"
                )
                continue
            records[record.sample_id] = record
        return records

    def write_metrics(self, metrics: MetricsSummary) -> None:
        try:
            atomic_write_text(self.metrics_path, metrics.model_dump_json(indent=2) + "\n")
        except OSError as e:
            raise RunIOError(f"Cannot write {self.metrics_path}: {e}")

    def read_metrics(self) -> Optional[MetricsSummary]:
        if not self.metrics_path.is_file():
            return None
        try:
            return MetricsSummary.model_validate_json(self.metrics_path.read_text(encoding="utf-8"))
        except (OSError, ValidationError) as e:
            raise DataError(f"Invalid metrics file {self.metrics_path}: {e}")

    def masked_record_lines(self) -> List[dict]:
        """Record-log entries with the timing sidecar removed, for reproducibility checks."""
        entries = []
        for line in self.records_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                entry = json.loads(line)
                entry.pop("timing", None)
                entries.append(entry)
        return entries
