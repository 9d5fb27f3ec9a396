"""Reading study summary tables from delimiter-separated text."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .estimators import StudyF

SUMMARY_COLUMNS = ("study_id", "n1", "mean1", "sd1", "n2", "mean2", "sd2")
DIRECT_F_COLUMNS = ("study_id", "f", "nu1", "nu2")
_DELIMITERS = ",\t;|"


class IngestError(ValueError):
    """Validation failure; ``diagnostics`` holds one message per offending row."""

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass(frozen=True)
class StudySummary:
    """One two-arm study. Arm 1 is the numerator of the variance ratio.

    When the table gives the ratio directly, ``f`` is set and the SD columns
    are empty.
    """

    study_id: str
    n1: int
    sd1: Optional[float]
    n2: int
    sd2: Optional[float]
    mean1: Optional[float] = None
    mean2: Optional[float] = None
    f: Optional[float] = None

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError(f"study {self.study_id}: arm sizes must be at least 2")
        if self.f is None:
            if self.sd1 is None or self.sd2 is None or not (self.sd1 > 0 and self.sd2 > 0):
                raise ValueError(f"study {self.study_id}: standard deviations must be positive")
        elif not self.f > 0:
            raise ValueError(f"study {self.study_id}: variance ratio must be positive")

    @property
    def ratio(self) -> float:
        if self.f is not None:
            return self.f
        return self.sd1 ** 2 / self.sd2 ** 2

    def to_study(self) -> StudyF:
        return StudyF(self.ratio, self.n1, self.n2, self.study_id)


@dataclass(frozen=True)
class StudyTable:
    rows: tuple

    def __post_init__(self):
        if not self.rows:
            raise IngestError(["no data rows"])
        ids = [r.study_id for r in self.rows]
        if len(set(ids)) != len(ids):
            raise IngestError(["duplicate study_id"])

    def __len__(self):
        return len(self.rows)

    def studies(self) -> list[StudyF]:
        return [r.to_study() for r in self.rows]

    @property
    def study_ids(self) -> list[str]:
        return [r.study_id for r in self.rows]


def _sniff(header_line: str) -> str:
    try:
        return csv.Sniffer().sniff(header_line, delimiters=_DELIMITERS).delimiter
    except csv.Error:
        return ","


def _number(text, name, line, problems, optional=False):
    text = (text or "").strip()
    if text == "" or text.upper() == "NA":
        if optional:
            return None
        problems.append(f"row {line}: missing value for {name}")
        return None
    try:
        value = float(text)
    except ValueError:
        problems.append(f"row {line}: non-numeric {name} {text!r}")
        return None
    if not math.isfinite(value):
        problems.append(f"row {line}: non-finite {name} {text!r}")
        return None
    return value


def _count(text, name, line, problems, minimum):
    value = _number(text, name, line, problems)
    if value is None:
        return None
    if value != int(value):
        problems.append(f"row {line}: {name} must be an integer, got {text.strip()!r}")
        return None
    if value < minimum:
        problems.append(f"row {line}: {name} = {int(value)} is below {minimum}")
        return None
    return int(value)


def _positive(text, name, line, problems):
    value = _number(text, name, line, problems)
    if value is not None and value <= 0:
        problems.append(f"row {line}: {name} must be positive, got {text.strip()!r}")
        return None
    return value


def parse_rows(lines: Iterable[str]) -> StudyTable:
    """Validate a header-plus-rows text table. Row numbers count the header as row 1."""
    lines = list(lines)
    content = [ln for ln in lines if ln.strip()]
    if not content:
        raise IngestError(["no data rows"])
    reader = csv.reader(lines, delimiter=_sniff(content[0]))
    header = None
    problems: list[str] = []
    rows = []
    seen = {}
    for line_no, record in enumerate(reader, start=1):
        if not any(cell.strip() for cell in record):
            continue
        if header is None:
            header = [h.strip().lower() for h in record]
            if set(SUMMARY_COLUMNS) <= set(header):
                direct = False
            elif set(DIRECT_F_COLUMNS) <= set(header):
                direct = True
            else:
                raise IngestError([
                    f"row {line_no}: header must contain {','.join(SUMMARY_COLUMNS)} "
                    f"or {','.join(DIRECT_F_COLUMNS)}"
                ])
            continue
        if len(record) != len(header):
            problems.append(f"row {line_no}: expected {len(header)} fields, got {len(record)}")
            continue
        cell = dict(zip(header, record))
        study_id = cell["study_id"].strip()
        before = len(problems)
        if not study_id:
            problems.append(f"row {line_no}: empty study_id")
        elif study_id in seen:
            problems.append(f"row {line_no}: duplicate study_id {study_id!r} (first seen in row {seen[study_id]})")
        else:
            seen[study_id] = line_no
        if direct:
            f = _positive(cell["f"], "f", line_no, problems)
            nu1 = _count(cell["nu1"], "nu1", line_no, problems, 1)
            nu2 = _count(cell["nu2"], "nu2", line_no, problems, 1)
            if len(problems) == before:
                rows.append(StudySummary(study_id, nu1 + 1, None, nu2 + 1, None, f=f))
        else:
            n1 = _count(cell["n1"], "n1", line_no, problems, 2)
            n2 = _count(cell["n2"], "n2", line_no, problems, 2)
            sd1 = _positive(cell["sd1"], "sd1", line_no, problems)
            sd2 = _positive(cell["sd2"], "sd2", line_no, problems)
            mean1 = _number(cell["mean1"], "mean1", line_no, problems, optional=True)
            mean2 = _number(cell["mean2"], "mean2", line_no, problems, optional=True)
            if len(problems) == before:
                rows.append(StudySummary(study_id, n1, sd1, n2, sd2, mean1, mean2))
    if problems:
        raise IngestError(problems)
    if not rows:
        raise IngestError(["no data rows"])
    return StudyTable(tuple(rows))


def ingest(path) -> StudyTable:
    path = Path(path)
    if not path.exists():
        raise IngestError([f"{path}: file not found"])
    with path.open(newline="", encoding="utf-8-sig") as fh:
        return parse_rows(fh.read().splitlines())


def table_to_csv(table: StudyTable) -> str:
    """Serialize a table in the summary (or direct-F) layout with round-trip floats."""
    direct = any(r.f is not None for r in table.rows)
    out = []
    if direct:
        out.append(",".join(DIRECT_F_COLUMNS))
        for r in table.rows:
            out.append(f"{r.study_id},{r.ratio!r},{r.n1 - 1},{r.n2 - 1}")
    else:
        out.append(",".join(SUMMARY_COLUMNS))
        for r in table.rows:
            m1 = "" if r.mean1 is None else repr(r.mean1)
            m2 = "" if r.mean2 is None else repr(r.mean2)
            out.append(f"{r.study_id},{r.n1},{m1},{r.sd1!r},{r.n2},{m2},{r.sd2!r}")
    return "\n".join(out) + "\n"
