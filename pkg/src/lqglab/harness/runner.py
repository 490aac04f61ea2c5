"""Seeded ensemble runner: per-sample records, pooled rows, atomic report files."""
from __future__ import annotations

import json
import os
import platform
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .config import ExperimentConfig
from .experiments import KIND_FUNCS, check_geometry

OUT_DIR_ENV = "LQGLAB_OUT_DIR"
DEFAULT_OUT_DIR = "lqglab-out"


def version_stamp() -> dict:
    from .. import __version__

    return {"lqglab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def record_line(rec: dict) -> str:
    return json.dumps(_jsonable(rec), sort_keys=True, allow_nan=True)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _one_sample(cfg: ExperimentConfig, index: int) -> dict:
    seed = cfg.seed(index)
    sample_fn, _ = KIND_FUNCS[cfg.kind]
    try:
        body = sample_fn(cfg, seed)
        return {"index": index, "seed": seed, "ok": True, "data": _jsonable(body)}
    except Exception as exc:  # recorded, not raised: partial-failure policy
        return {"index": index, "seed": seed, "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _run_chunk(args):
    cfg, indices = args
    return [_one_sample(cfg, i) for i in indices]


@dataclass
class RunReport:
    config: dict
    records: list
    rows: list
    summary: dict
    wall_clock: float
    version: dict = field(default_factory=version_stamp)
    kind: str = ""
    name: str = ""

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r["ok"]]

    def to_dict(self, records_file: str | None = None) -> dict:
        return _jsonable({
            "kind": self.kind,
            "name": self.name,
            "config": self.config,
            "records_file": records_file,
            "n_records": len(self.records),
            "failures": [{"index": r["index"], "seed": r["seed"], "error": r["error"]} for r in self.failures],
            "rows": self.rows,
            "summary": self.summary,
            "wall_clock_seconds": self.wall_clock,
            "version": self.version,
        })

    def records_text(self) -> str:
        return "".join(record_line(r) + "\n" for r in self.records)


def pool(cfg: ExperimentConfig, records: list) -> tuple[list, dict]:
    """Pooled rows from successful records only."""
    _, pool_fn = KIND_FUNCS[cfg.kind]
    good = [r["data"] for r in sorted(records, key=lambda r: r["index"]) if r["ok"]]
    if not good:
        return [], {"error": "no successful samples"}
    rows, summary = pool_fn(cfg, good)
    summary = dict(summary)
    summary["n_ok"] = len(good)
    summary["n_failed"] = len(records) - len(good)
    return rows, summary


def run(cfg: ExperimentConfig, workers: int = 1) -> RunReport:
    """Run every sample (``seed = base_seed + index``) and pool the results.

    With ``workers > 1`` samples are spread over a process pool; records are
    merged by index, so the output does not depend on ``workers``.
    """
    check_geometry(cfg)
    t0 = time.perf_counter()
    indices = list(range(cfg.sample_count))
    if workers <= 1 or cfg.sample_count == 1:
        records = [_one_sample(cfg, i) for i in indices]
    else:
        chunks = [indices[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = [r for part in ex.map(_run_chunk, [(cfg, c) for c in chunks if c]) for r in part]
    records.sort(key=lambda r: r["index"])
    rows, summary = pool(cfg, records)
    return RunReport(cfg.echo(), records, rows, summary, time.perf_counter() - t0, kind=cfg.kind, name=cfg.name)


def resolve_out_dir(cli_value=None, cfg: ExperimentConfig | None = None) -> Path:
    if cli_value:
        return Path(cli_value)
    if cfg is not None and cfg.out_dir:
        return Path(cfg.out_dir)
    return Path(os.environ.get(OUT_DIR_ENV, DEFAULT_OUT_DIR))


def write_report(report: RunReport, out_dir, fmt: str = "json") -> dict:
    """Write ``<name>.records.jsonl`` and ``<name>.report.json`` (plus ``.csv`` rows if asked).

    Wall-clock time lives only in the report, never in the records file.
    """
    from .summary import rows_to_csv

    out_dir = Path(out_dir)
    rec_path = out_dir / f"{report.name}.records.jsonl"
    rep_path = out_dir / f"{report.name}.report.json"
    atomic_write(rec_path, report.records_text())
    atomic_write(rep_path, json.dumps(report.to_dict(rec_path.name), indent=2, sort_keys=True) + "\n")
    paths = {"records": rec_path, "report": rep_path}
    if fmt == "csv":
        csv_path = out_dir / f"{report.name}.rows.csv"
        atomic_write(csv_path, rows_to_csv(report.to_dict()["rows"]))
        paths["csv"] = csv_path
    return paths
