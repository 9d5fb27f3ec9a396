"""Bundled example data: bone mineral density by VDR genotype (13 studies)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources

from .ingest import StudySummary, StudyTable

GENOTYPES = ("BB", "Bb", "bb")


@dataclass(frozen=True)
class Arm:
    n: int
    mean: float
    sd: float


def pool_arms(*arms: Arm) -> Arm:
    """Combine subgroup summaries into the summary of their union.

    The pooled variance adds the between-group spread to the within-group sums
    of squares, so the result equals the SD computed from the raw union.
    """
    if not arms:
        raise ValueError("at least one arm is required")
    n = sum(a.n for a in arms)
    mean = math.fsum(a.n * a.mean for a in arms) / n
    ss = math.fsum((a.n - 1) * a.sd ** 2 + a.n * (a.mean - mean) ** 2 for a in arms)
    return Arm(n, mean, math.sqrt(ss / (n - 1)))


def _raw_rows():
    text = resources.files("varmeta").joinpath("data/bmd_arms.csv").read_text(encoding="utf-8")
    return list(csv.DictReader(io.StringIO(text)))


def bmd_groups() -> list[dict]:
    """Per-study genotype summaries as printed, plus the printed combined Bb/bb arm."""
    out = []
    for row in _raw_rows():
        entry = {"study_id": row["study"]}
        for g in GENOTYPES + ("Bbbb",):
            entry[g] = Arm(int(row[f"n_{g}"]), float(row[f"mean_{g}"]), float(row[f"sd_{g}"]))
        out.append(entry)
    return out


def bmd_table() -> StudyTable:
    """BB (numerator) against the pooled Bb and bb genotypes.

    The combined arm is rebuilt from the two subgroups rather than taken from
    the rounded combined SD column, which carries only three decimals.
    """
    rows = []
    for entry in bmd_groups():
        bb = entry["BB"]
        rest = pool_arms(entry["Bb"], entry["bb"])
        rows.append(StudySummary(entry["study_id"], bb.n, bb.sd, rest.n, rest.sd, bb.mean, rest.mean))
    return StudyTable(tuple(rows))


def bmd_studies():
    return bmd_table().studies()


FIXTURES = {"bmd": bmd_table}
