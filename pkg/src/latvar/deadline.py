"""Deadline-policy consequences over a latency series.

Waste is the unused budget ``deadline - t`` of a job that met its
deadline; missed jobs add no waste and count toward the miss rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import stats
from .errors import DataError

WORST = "worst-observed"
MEAN = "mean"
QUANTILE = "quantile"
FIXED = "fixed"


@dataclass(frozen=True)
class DeadlinePolicy:
    kind: str
    value: float | None = None
    termination: bool = False

    def __post_init__(self) -> None:
        if self.kind == QUANTILE:
            if self.value is None or not 0.0 < self.value < 1.0:
                raise DataError(f"quantile policy needs q in (0, 1), got {self.value}")
        elif self.kind == FIXED:
            if self.value is None or not self.value > 0:
                raise DataError(f"fixed policy needs a deadline > 0 ms, got {self.value}")
        elif self.kind not in (WORST, MEAN):
            raise DataError(f"unknown deadline policy {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == QUANTILE:
            base = f"q:{self.value:g}"
        elif self.kind == FIXED:
            base = f"fixed:{self.value:g}"
        elif self.kind == WORST:
            base = "worst"
        else:
            base = "mean"
        return base + ("+terminate" if self.termination else "")

    @classmethod
    def parse(cls, text: str, termination: bool = False) -> "DeadlinePolicy":
        """Parse ``worst``, ``mean``, ``q:<q>`` or ``fixed:<ms>``."""
        if text in ("worst", WORST):
            return cls(WORST, termination=termination)
        if text == "mean":
            return cls(MEAN, termination=termination)
        head, _, tail = text.partition(":")
        kinds = {"q": QUANTILE, "quantile": QUANTILE, "fixed": FIXED}
        if head in kinds and tail:
            try:
                value = float(tail)
            except ValueError:
                raise DataError(f"bad number in policy {text!r}") from None
            return cls(kinds[head], value, termination)
        raise DataError(f"unknown deadline policy {text!r}")


@dataclass(frozen=True)
class DeadlineReport:
    policy: str
    deadline_ms: float
    miss_rate: float
    mean_waste_ms: float
    waste_p95_ms: float
    effective_period_ms: float
    cv_effective: float
    slack_ms: tuple[float, ...]

    def waste_fraction_at_least(self, threshold_ms: float) -> float:
        """Fraction of all jobs whose wasted budget is at least ``threshold_ms``."""
        slack = np.asarray(self.slack_ms)
        return float(np.mean(slack >= threshold_ms))

    def as_row(self) -> dict[str, object]:
        return {
            "policy": self.policy,
            "deadline_ms": self.deadline_ms,
            "miss_rate": self.miss_rate,
            "mean_waste_ms": self.mean_waste_ms,
            "waste_p95_ms": self.waste_p95_ms,
            "effective_period_ms": self.effective_period_ms,
            "cv_effective": self.cv_effective,
        }


REPORT_COLUMNS = (
    "policy",
    "deadline_ms",
    "miss_rate",
    "mean_waste_ms",
    "waste_p95_ms",
    "effective_period_ms",
    "cv_effective",
)


def resolve_deadline(policy: DeadlinePolicy, series: Sequence[float]) -> float:
    xs = stats.as_series(series)
    if policy.kind == WORST:
        return float(xs.max())
    if policy.kind == MEAN:
        return float(np.sort(xs).mean())
    if policy.kind == QUANTILE:
        return stats.quantile(xs, policy.value)
    return float(policy.value)


def assess(policy: DeadlinePolicy, series: Sequence[float]) -> DeadlineReport:
    xs = stats.as_series(series)
    deadline = resolve_deadline(policy, xs)
    met = xs <= deadline
    waste = deadline - xs[met]
    if policy.termination:
        effective = np.minimum(xs, deadline)
        period = float(effective.mean())
    else:
        effective = xs
        # overrunning jobs push the next release back
        period = float(np.maximum(xs, deadline).mean())
    eff = stats.summarize(effective, quantiles=())
    return DeadlineReport(
        policy=policy.label,
        deadline_ms=deadline,
        miss_rate=float(np.mean(~met)),
        mean_waste_ms=float(waste.mean()) if waste.size else 0.0,
        waste_p95_ms=stats.quantile(waste, 0.95) if waste.size else 0.0,
        effective_period_ms=period,
        cv_effective=eff.cv,
        slack_ms=tuple(float(v) for v in deadline - xs),
    )


def compare(policies: Sequence[DeadlinePolicy], series: Sequence[float]) -> list[DeadlineReport]:
    return [assess(p, series) for p in policies]
