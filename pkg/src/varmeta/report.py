"""JSON reports and delimiter-separated tables.

Floats are written with ``repr`` (shortest round-trip form), so reading a
report back reproduces every number exactly.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def to_plain(obj):
    """Recursively convert dataclasses, enums and numpy values to JSON-ready Python objects."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dumps_report(report) -> str:
    return json.dumps(to_plain(report), indent=2, allow_nan=False) + "\n"


def write_report(report, path) -> None:
    Path(path).write_text(dumps_report(report), encoding="utf-8")


def read_report(path_or_text) -> dict:
    """Load a report from a path or from a JSON string."""
    text = str(path_or_text)
    if not text.lstrip().startswith("{"):
        text = Path(path_or_text).read_text(encoding="utf-8")
    return json.loads(text)


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "" if not math.isfinite(value) else repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(format_cell(v) for v in value)
    return str(value)


def table_text(header: Sequence[str], rows: Iterable[Sequence], delimiter: str = ",") -> str:
    lines = [delimiter.join(header)]
    for row in rows:
        lines.append(delimiter.join(format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def records_text(records: Sequence, delimiter: str = ",") -> str:
    """Table of a homogeneous list of dataclass instances, one column per field."""
    if not records:
        return ""
    header = [f.name for f in dataclasses.fields(records[0])]
    rows = ([to_plain(getattr(r, h)) for h in header] for r in records)
    return table_text(header, rows, delimiter)


def read_table(text: str, delimiter: str = ",") -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split(delimiter)
    return [dict(zip(header, ln.split(delimiter))) for ln in lines[1:]]
