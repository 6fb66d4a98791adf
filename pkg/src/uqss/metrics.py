"""Interval quality metrics (PICP, PINAW, PINAFD), the CWC and CWFDC costs,
the mid-interval deviation norm, and aggregation across repeated trials."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MetricsError",
    "IntervalSet",
    "IntervalMetrics",
    "AggregateMetrics",
    "CostParams",
    "picp",
    "pinaw",
    "pinafd",
    "cwc",
    "cwfdc",
    "mid_interval_norm",
    "interval_metrics",
    "aggregate",
    "report_row",
    "REPORT_COLUMNS",
    "write_report_csv",
    "write_report_json",
]

REPORT_COLUMNS = (
    "dataset",
    "method",
    "nominal",
    "n_trials",
    "mu_pinaw",
    "mu_picp",
    "sigma_picp",
    "mu_pinafd",
    "mu_cwc",
    "mu_cwfdc",
)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class IntervalSet:
    """Per-sample lower/upper bounds targeting a nominal coverage."""

    lower: np.ndarray
    upper: np.ndarray
    nominal_coverage: float

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).ravel()
        hi = np.asarray(self.upper, dtype=np.float64).ravel()
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape:
            raise MetricsError("lower and upper lengths differ")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise MetricsError("non-finite bounds")
        if np.any(hi < lo):
            raise MetricsError("upper < lower; repair bound swaps before building an IntervalSet")
        if not 0.0 < self.nominal_coverage < 1.0:
            raise MetricsError("nominal_coverage must be in (0, 1)")

    def __len__(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower


@dataclass(frozen=True)
class CostParams:
    """Hyperparameters of the interval cost functions.

    delta defaults to alpha/20 when unset.  beta1_mid/beta2_mid weight the
    mid-interval cost terms.
    """

    eta: float = 50.0
    rho: float = 1.0
    beta: float = 10.0
    delta: float | None = None
    epsilon: float = 1e-10
    beta1_mid: float = 1.0
    beta2_mid: float = 0.5

    def __post_init__(self):
        if self.eta <= 0 or self.epsilon <= 0:
            raise MetricsError("eta and epsilon must be positive")

    def resolved_delta(self, nominal: float) -> float:
        return (1.0 - nominal) / 20.0 if self.delta is None else self.delta


def _check_lengths(targets: np.ndarray, intervals: IntervalSet) -> np.ndarray:
    t = np.asarray(targets, dtype=np.float64).ravel()
    if t.shape[0] != len(intervals):
        raise MetricsError(f"{t.shape[0]} targets vs {len(intervals)} intervals")
    return t


def picp(targets, intervals: IntervalSet) -> float:
    """Fraction of targets inside their interval, bounds inclusive."""
    t = _check_lengths(targets, intervals)
    covered = (t >= intervals.lower) & (t <= intervals.upper)
    return float(np.mean(covered))


def pinaw(intervals: IntervalSet, target_range: float) -> float:
    """Average interval width normalized by the target range."""
    if target_range <= 0:
        raise MetricsError("target_range must be positive")
    return float(np.mean(intervals.widths) / target_range)


def pinafd(targets, intervals: IntervalSet, target_range: float, epsilon: float = 1e-10) -> float:
    """Normalized average distance from uncovered targets to the nearest bound."""
    if target_range <= 0:
        raise MetricsError("target_range must be positive")
    t = _check_lengths(targets, intervals)
    miss = (t < intervals.lower) | (t > intervals.upper)
    dist = np.minimum(np.abs(t - intervals.upper), np.abs(intervals.lower - t))
    total = float(np.sum(dist[miss]))
    return total / (target_range * float(np.sum(miss)) + epsilon)


def cwc(pinaw_value: float, picp_value: float, nominal: float, eta: float = 50.0) -> float:
    """Coverage width criterion: PINAW with an exponential under-coverage penalty.

    The penalty switches off entirely once coverage reaches nominal, so the
    criterion then equals PINAW.
    """
    gamma = 1.0 if picp_value < nominal else 0.0
    return pinaw_value * (1.0 + gamma * math.exp(eta * (nominal - picp_value)))


def cwfdc(
    pinaw_value: float,
    pinafd_value: float,
    picp_value: float,
    nominal: float,
    params: CostParams = CostParams(),
) -> float:
    """Coverage width failure distance criterion:
    PINAW + rho*PINAFD + beta*(nominal + delta - PICP)^2."""
    delta = params.resolved_delta(nominal)
    gap = nominal + delta - picp_value
    return pinaw_value + params.rho * pinafd_value + params.beta * gap * gap


def mid_interval_norm(targets, intervals: IntervalSet) -> float:
    """Euclidean norm of the deviations of targets from interval midpoints."""
    t = _check_lengths(targets, intervals)
    e = t - (intervals.upper + intervals.lower) / 2.0
    return float(np.sqrt(np.sum(e * e)))


@dataclass(frozen=True)
class IntervalMetrics:
    """One evaluation row: all interval metrics for one trained model on one set."""

    picp: float
    pinaw: float
    pinafd: float
    cwc: float
    cwfdc: float
    n: int
    nominal: float


def interval_metrics(
    targets,
    intervals: IntervalSet,
    target_range: float,
    params: CostParams = CostParams(),
) -> IntervalMetrics:
    """Compute every metric at once for a target vector and its intervals."""
    p = picp(targets, intervals)
    w = pinaw(intervals, target_range)
    fd = pinafd(targets, intervals, target_range, params.epsilon)
    nominal = intervals.nominal_coverage
    return IntervalMetrics(
        picp=p,
        pinaw=w,
        pinafd=fd,
        cwc=cwc(w, p, nominal, params.eta),
        cwfdc=cwfdc(w, fd, p, nominal, params),
        n=len(intervals),
        nominal=nominal,
    )


@dataclass(frozen=True)
class AggregateMetrics:
    """Mean and population standard deviation of each metric across trials."""

    n_trials: int
    nominal: float
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)


_AGG_FIELDS = ("pinaw", "picp", "pinafd", "cwc", "cwfdc")


def aggregate(trials: list[IntervalMetrics]) -> AggregateMetrics:
    """Summarize repeated trials; std is population (divide by trial count)."""
    if not trials:
        raise MetricsError("aggregate needs at least one trial")
    mean, std = {}, {}
    for name in _AGG_FIELDS:
        vals = np.array([getattr(t, name) for t in trials], dtype=np.float64)
        mean[name] = float(vals.mean())
        std[name] = float(vals.std())  # ddof=0
    return AggregateMetrics(n_trials=len(trials), nominal=trials[0].nominal, mean=mean, std=std)


def report_row(agg: AggregateMetrics, dataset: str, method: str) -> dict:
    """One report row in the documented column order."""
    return {
        "dataset": dataset,
        "method": method,
        "nominal": agg.nominal,
        "n_trials": agg.n_trials,
        "mu_pinaw": agg.mean["pinaw"],
        "mu_picp": agg.mean["picp"],
        "sigma_picp": agg.std["picp"],
        "mu_pinafd": agg.mean["pinafd"],
        "mu_cwc": agg.mean["cwc"],
        "mu_cwfdc": agg.mean["cwfdc"],
    }


def write_report_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in REPORT_COLUMNS})


def write_report_json(rows: list[dict], path) -> None:
    out = [{k: row[k] for k in REPORT_COLUMNS} for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(out, fh, indent=1, sort_keys=False)
        fh.write("\n")
