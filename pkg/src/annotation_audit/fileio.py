"""Atomic file output and schema-checked JSON loading."""

import contextlib
import csv
import io
import json
import math
import os
import tempfile

from .exceptions import ValidationError


@contextlib.contextmanager
def atomic_open(path, mode="w"):
    """Write to a temp file beside ``path`` and rename it into place on success."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, mode, encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def csv_text(rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, rows, columns):
    with atomic_open(path) as fh:
        fh.write(csv_text(rows, columns))


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj):
    with atomic_open(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _line_of(text, needle):
    idx = text.find(needle)
    return None if idx < 0 else text.count("\n", 0, idx) + 1


def load_json(path, parse=None):
    """Load a JSON document, optionally passing it through ``parse``.

    Decode errors and ``ValidationError``/``KeyError`` raised by ``parse``
    are re-raised as ``ValidationError`` prefixed with ``path:line``. For
    schema errors the line is located by searching for the first quoted
    token in the message, which is usually the offending id.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if parse is None:
        return data
    try:
        return parse(data)
    except (ValidationError, KeyError, TypeError) as exc:
        msg = str(exc)
        line = None
        if "'" in msg:
            parts = msg.split("'")
            if len(parts) >= 3:
                line = _line_of(text, f'"{parts[1]}"')
        where = f"{path}:{line}" if line else f"{path}"
        raise ValidationError(f"{where}: {msg}") from None
