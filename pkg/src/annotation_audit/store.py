"""Append-only JSON-lines store for annotation records."""

import json
import os
import threading

from .exceptions import StoreFormatError, ValidationError
from .model import AnnotationRecord

FIELDS = ("task_id", "datapoint_id", "config_id", "raw_output", "mapped_label", "is_na", "confidence", "timestamp")


def _dumps(record):
    return json.dumps({f: getattr(record, f) for f in FIELDS}, ensure_ascii=False)


class AnnotationStore:
    """Single-writer, multi-reader record log.

    Records are appended one per line. When several lines share a
    ``(task_id, datapoint_id, config_id)`` key the last one wins on load.
    Appending a record that is identical to the current latest record for
    its key is a no-op, so replaying a fully cached run leaves the file
    byte-identical.
    """

    def __init__(self, path):
        self.path = os.fspath(path)
        self._lock = threading.Lock()

    def _read_lines(self):
        if not os.path.exists(self.path):
            return
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                    yield AnnotationRecord.from_dict(data)
                except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
                    raise StoreFormatError(self.path, lineno, f"malformed record: {exc}") from None

    def latest(self):
        """Map each key to its most recent record, in first-seen key order."""
        out = {}
        for rec in self._read_lines():
            out[rec.key] = rec
        return out

    def append(self, records):
        records = list(records)
        with self._lock:
            current = self.latest()
            new = []
            for rec in records:
                if current.get(rec.key) == rec:
                    continue
                current[rec.key] = rec
                new.append(rec)
            if not new:
                return 0
            directory = os.path.dirname(os.path.abspath(self.path))
            os.makedirs(directory, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                for rec in new:
                    fh.write(_dumps(rec) + "\n")
            return len(new)

    def load(self, task_id=None, config_id=None):
        recs = self.latest().values()
        return [
            r
            for r in recs
            if (task_id is None or r.task_id == task_id) and (config_id is None or r.config_id == config_id)
        ]


def store_annotations(records, path):
    store = AnnotationStore(path)
    store.append(records)
    return store


def load_annotations(path, task_id=None, config_id=None):
    return AnnotationStore(path).load(task_id=task_id, config_id=config_id)
