"""Variation statistics for latency series.

Range is ``max - min``; the coefficient of variation is ``std / mean`` with
the population standard deviation (divide by n). Quantiles interpolate
linearly between order statistics at rank ``(n - 1) * q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, UndefinedCorrelationError

DEFAULT_QUANTILES = (0.5, 0.8, 0.99)


@dataclass(frozen=True)
class VariationSummary:
    n: int
    mean_ms: float
    std_ms: float
    range_ms: float
    cv: float
    min_ms: float
    max_ms: float
    percentiles: dict[float, float] = field(default_factory=dict)

    def as_row(self) -> dict[str, float]:
        row: dict[str, float] = {
            "n": self.n,
            "mean_ms": self.mean_ms,
            "std_ms": self.std_ms,
            "range_ms": self.range_ms,
            "cv": self.cv,
            "min_ms": self.min_ms,
            "max_ms": self.max_ms,
        }
        for q, v in self.percentiles.items():
            row[f"p{q * 100:g}"] = v
        return row


def as_series(series: Sequence[float] | np.ndarray, name: str = "series") -> np.ndarray:
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.size == 0:
        raise DataError(f"{name} is empty")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataError(f"{name}[{bad[0]}] is not finite ({arr[bad[0]]!r})")
    return arr


def quantile(series: Sequence[float] | np.ndarray, q: float) -> float:
    """Linear-interpolation quantile, rank ``h = (n-1) q``."""
    if not 0.0 <= q <= 1.0:
        raise DataError(f"quantile must lie in [0, 1], got {q}")
    return _interp(np.sort(as_series(series)), q)


def _interp(ordered: np.ndarray, q: float) -> float:
    h = (ordered.size - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, ordered.size - 1)
    return float(ordered[lo] + (h - lo) * (ordered[hi] - ordered[lo]))


def summarize(
    series: Sequence[float] | np.ndarray,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
) -> VariationSummary:
    xs = as_series(series)
    for q in quantiles:
        if not 0.0 < q < 1.0:
            raise DataError(f"quantile must lie in (0, 1), got {q}")
    ordered = np.sort(xs)
    mean = float(ordered.mean())
    std = float(np.sqrt(np.mean((ordered - mean) ** 2)))
    lo, hi = float(ordered[0]), float(ordered[-1])
    cv = std / mean if mean > 0 else (0.0 if std == 0 else math.inf)
    pct = {float(q): _interp(ordered, q) for q in sorted(quantiles)}
    return VariationSummary(
        n=int(ordered.size),
        mean_ms=mean,
        std_ms=std,
        range_ms=hi - lo,
        cv=cv,
        min_ms=lo,
        max_ms=hi,
        percentiles=pct,
    )


def pearson(xs: Sequence[float] | np.ndarray, ys: Sequence[float] | np.ndarray) -> float:
    x = as_series(xs, "xs")
    y = as_series(ys, "ys")
    if x.size != y.size:
        raise DataError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DataError("pearson needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        which = "xs" if sxx == 0.0 else "ys"
        raise UndefinedCorrelationError(f"{which} is constant; correlation undefined")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def cdf_points(series: Sequence[float] | np.ndarray) -> list[tuple[float, float]]:
    xs = np.sort(as_series(series))
    n = xs.size
    return [(float(v), (k + 1) / n) for k, v in enumerate(xs)]


def format_cdf(points: Sequence[tuple[float, float]]) -> str:
    lines = ["value_ms,fraction"]
    lines += [f"{v:.6f},{f:.6f}" for v, f in points]
    return "\n".join(lines) + "\n"
