"""Pooled statistics for run reports."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

LOW_N = 10


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return (float(ci.low), float(ci.high))


def proportion(flags) -> dict:
    flags = [bool(f) for f in flags]
    n, k = len(flags), sum(flags)
    lo, hi = wilson_interval(k, n)
    return {"n": n, "k": k, "p": k / n if n else float("nan"), "wilson95": [lo, hi], "low_n": n < LOW_N}


def describe(values) -> dict:
    x = np.asarray([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    n = int(x.size)
    if n == 0:
        return {"n": 0, "low_n": True}
    q25, med, q75 = np.percentile(x, [25, 50, 75])
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return {
        "n": n,
        "mean": float(x.mean()),
        "stderr": se,
        "median": float(med),
        "q25": float(q25),
        "q75": float(q75),
        "iqr": float(q75 - q25),
        "min": float(x.min()),
        "max": float(x.max()),
        "low_n": n < LOW_N,
    }


def monotone(seq, direction: str = "either") -> bool:
    """Is ``seq`` monotone (non-strict)? ``direction`` is up, down, or either."""
    seq = list(seq)
    up = all(a <= b for a, b in zip(seq, seq[1:]))
    down = all(a >= b for a, b in zip(seq, seq[1:]))
    return {"up": up, "down": down, "either": up or down}[direction]
