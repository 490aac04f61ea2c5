"""Aggregate run reports into one table."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .stats import monotone

COLUMNS = {
    "kind": "experiment kind",
    "report": "source report name",
    "label": "row label within the report",
    "eps": "mollification scale (plane units; blank if not applicable)",
    "r": "ball or annulus radius (plane units; blank if not applicable)",
    "mesh": "lattice spacing (plane units)",
    "n": "samples pooled into the row",
    "low_n": "true if fewer than 10 samples",
    "stat": "primary pooled statistic of the row",
    "ci_low": "lower end of the Wilson 95% interval (probabilities only)",
    "ci_high": "upper end of the Wilson 95% interval (probabilities only)",
    "monotone": "pass iff stat is monotone down the table (schedule order)",
}


class SummaryError(ValueError):
    pass


def _interval(row):
    for key in ("p_F", "p_narrow", "p", "within_3se"):
        if isinstance(row.get(key), dict) and "wilson95" in row[key]:
            return row[key]["wilson95"]
    return [None, None]


def _sort_key(row):
    def desc(x):
        return -x if isinstance(x, (int, float)) and x is not None else math.inf

    return (desc(row.get("eps")), desc(row.get("r")), desc(row.get("mesh")), str(row.get("label")))


def summarize(reports) -> list[dict]:
    """One row per (eps, r, mesh, label) across ``reports`` (dicts or paths), sorted by eps descending."""
    loaded = []
    for rep in reports:
        if not isinstance(rep, dict):
            rep = json.loads(Path(rep).read_text())
        loaded.append(rep)
    if not loaded:
        raise SummaryError("no reports given")
    kinds = {rep["kind"] for rep in loaded}
    if len(kinds) != 1:
        raise SummaryError(f"reports mix experiment kinds: {sorted(kinds)}")
    rows = []
    for rep in loaded:
        for row in rep["rows"]:
            lo, hi = _interval(row)
            rows.append({"kind": rep["kind"], "report": rep.get("name", ""), "label": row.get("label"),
                         "eps": row.get("eps"), "r": row.get("r"), "mesh": row.get("mesh"), "n": row.get("n"),
                         "low_n": row.get("low_n"), "stat": row.get("stat"), "ci_low": lo, "ci_high": hi})
    rows.sort(key=_sort_key)
    stats = [r["stat"] for r in rows if r["stat"] is not None]
    flag = "pass" if monotone(stats) else "fail"
    for r in rows:
        r["monotone"] = flag
    return rows


def rows_to_csv(rows, columns=None) -> str:
    columns = list(columns or COLUMNS)
    buf = io.StringIO()
    for c in columns:
        buf.write(f"# {c}: {COLUMNS.get(c, '')}\n")
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({c: "" if row.get(c) is None else row.get(c) for c in columns})
    return buf.getvalue()


def read_csv_rows(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
