"""Empirical uncertainty bounds from neighbor target distributions, the
bound-correction calibration sweep, distilled per-quantile bound networks,
and the sample-density model.

Intervals built directly from similar-sample quantiles inherit the extra
spread of the neighborhood (neighbors are close, not identical), so they
cover more than requested.  The calibration sweep measures, for every nominal
quantile on a 0.01..0.99 grid, the cumulative probability those bounds
actually achieve on the training set, and the resulting monotone map is
inverted to find which nominal quantile to request for a desired one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nnet import (
    ModelBundle,
    NetSpec,
    TrainConfig,
    fit_mse,
    forward,
    init_network,
)
from .simsearch import NeighborIndex

__all__ = [
    "BoundsError",
    "CalibrationError",
    "CalibrationMap",
    "NeuralCalibrationMap",
    "IntervalSet",  # re-export used by interval assembly
    "DensityModel",
    "CALIBRATION_GRID",
    "isotonic_nondecreasing",
    "empirical_quantile",
    "sorted_neighbor_targets",
    "raw_bound",
    "calibration_sweep",
    "calibration_sweep_heldout",
    "fit_nn_calibration",
    "corrected_bound_targets",
    "train_ub_net",
    "predict_interval",
    "inverse_threshold_scores",
    "density_targets",
    "train_density_net",
]

from .metrics import IntervalSet

CALIBRATION_GRID = np.arange(1, 100) / 100.0  # 0.01 .. 0.99 step 0.01


class BoundsError(ValueError):
    pass


class CalibrationError(ValueError):
    pass


def isotonic_nondecreasing(y: np.ndarray) -> np.ndarray:
    """Least-squares nondecreasing projection (pool adjacent violators)."""
    y = np.asarray(y, dtype=np.float64)
    sums = []
    counts = []
    for v in y:
        sums.append(float(v))
        counts.append(1)
        while len(sums) > 1 and sums[-1] * counts[-2] < sums[-2] * counts[-1]:
            s, c = sums.pop(), counts.pop()
            sums[-1] += s
            counts[-1] += c
    out = np.empty_like(y)
    pos = 0
    for s, c in zip(sums, counts):
        out[pos : pos + c] = s / c
        pos += c
    return out


def empirical_quantile(sorted_values: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile of an ascending vector."""
    v = np.asarray(sorted_values, dtype=np.float64).ravel()
    if v.size == 0:
        raise BoundsError("empty value vector")
    if not 0.0 <= q <= 1.0:
        raise BoundsError(f"q must be in [0, 1], got {q}")
    if np.any(np.diff(v) < 0):
        raise BoundsError("values must be sorted ascending")
    p = q * (v.size - 1)
    lo = int(np.floor(p))
    hi = min(lo + 1, v.size - 1)
    frac = p - lo
    return float(v[lo] + frac * (v[hi] - v[lo]))


def _row_quantiles(sorted_rows: np.ndarray, q: float) -> np.ndarray:
    """empirical_quantile applied to every row of an ascending-rows matrix."""
    m = sorted_rows.shape[1]
    p = q * (m - 1)
    lo = int(np.floor(p))
    hi = min(lo + 1, m - 1)
    frac = p - lo
    return sorted_rows[:, lo] + frac * (sorted_rows[:, hi] - sorted_rows[:, lo])


def sorted_neighbor_targets(idx: NeighborIndex, train: Dataset) -> np.ndarray:
    """(N, n_select) matrix of each anchor's neighbor targets, rows ascending."""
    if idx.n_anchors != train.n_samples:
        raise BoundsError("index and dataset sizes disagree")
    return np.sort(train.targets[idx.neighbor_ids], axis=1)


def raw_bound(idx: NeighborIndex, train: Dataset, anchor: int, q: float) -> float:
    """Uncorrected bound: the q-quantile of the anchor's neighbor targets."""
    if not 0 <= anchor < idx.n_anchors:
        raise BoundsError(f"anchor {anchor} out of range")
    values = np.sort(train.targets[idx.neighbor_ids[anchor]])
    return empirical_quantile(values, q)


@dataclass(frozen=True)
class CalibrationMap:
    """Nominal-vs-achieved cumulative probabilities with a monotone inverse.

    found is the isotonic projection of the achieved fractions; inverse() maps
    a desired cumulative probability to the nominal quantile to request,
    clamped to the grid.
    """

    grid_nominal: np.ndarray
    found_raw: np.ndarray
    found: np.ndarray

    def __post_init__(self):
        for name in ("grid_nominal", "found_raw", "found"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.grid_nominal.shape == self.found_raw.shape == self.found.shape):
            raise CalibrationError("grid shapes disagree")
        if np.any(np.diff(self.found) < 0):
            raise CalibrationError("found must be nondecreasing")
        for arr in (self.found_raw, self.found):
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise CalibrationError("achieved probabilities must lie in [0, 1]")

    def inverse(self, desired_q: float | np.ndarray):
        """Nominal quantile whose achieved probability is desired_q."""
        lo, hi = float(self.grid_nominal[0]), float(self.grid_nominal[-1])
        out = np.clip(np.interp(desired_q, self.found, self.grid_nominal), lo, hi)
        return float(out) if np.isscalar(desired_q) else out


def calibration_sweep(idx: NeighborIndex, train: Dataset, grid: np.ndarray | None = None) -> CalibrationMap:
    """Measure achieved cumulative probabilities of the raw bounds on the
    training set and build the monotone correction map.

    For each nominal q on the grid, every anchor's raw bound is computed and
    found(q) is the fraction of anchors whose own target falls at or below
    their bound.  The found curve is projected nondecreasing before inversion.
    """
    g = CALIBRATION_GRID if grid is None else np.asarray(grid, dtype=np.float64)
    sorted_t = sorted_neighbor_targets(idx, train)
    found_raw = np.empty_like(g)
    for i, q in enumerate(g):
        bounds = _row_quantiles(sorted_t, float(q))
        found_raw[i] = np.mean(train.targets <= bounds)
    found = isotonic_nondecreasing(found_raw)
    if found.max() == found.min():
        raise CalibrationError(
            "degenerate calibration: achieved probability is constant over the grid"
        )
    return CalibrationMap(grid_nominal=g.copy(), found_raw=found_raw, found=found)


def calibration_sweep_heldout(
    nn_p: ModelBundle,
    nn_e: ModelBundle,
    reference: Dataset,
    calib: Dataset,
    n_select: int,
    r_var: float,
    grid: np.ndarray | None = None,
) -> CalibrationMap:
    """Calibration sweep measured on samples outside the neighbor pool.

    Bounds for each calibration sample come from its neighbors within the
    reference set, so the achieved probabilities are free of the in-sample
    bias of sweeping the training set against itself.
    """
    from .simsearch import query_neighbor_ids

    g = CALIBRATION_GRID if grid is None else np.asarray(grid, dtype=np.float64)
    ids = query_neighbor_ids(nn_p, nn_e, reference, calib.features, n_select, r_var)
    sorted_t = np.sort(reference.targets[ids], axis=1)
    found_raw = np.empty_like(g)
    for i, q in enumerate(g):
        bounds = _row_quantiles(sorted_t, float(q))
        found_raw[i] = np.mean(calib.targets <= bounds)
    found = isotonic_nondecreasing(found_raw)
    if found.max() == found.min():
        raise CalibrationError(
            "degenerate calibration: achieved probability is constant over the grid"
        )
    return CalibrationMap(grid_nominal=g.copy(), found_raw=found_raw, found=found)


@dataclass(frozen=True)
class NeuralCalibrationMap:
    """Bound-correction map backed by a small net fit to (found -> nominal).

    Same interface as CalibrationMap; the isotonic map remains the reference.
    """

    net: ModelBundle
    grid_nominal: np.ndarray
    found_raw: np.ndarray
    found: np.ndarray

    def inverse(self, desired_q: float | np.ndarray):
        arr = np.atleast_1d(np.asarray(desired_q, dtype=np.float64))
        lo, hi = float(self.grid_nominal[0]), float(self.grid_nominal[-1])
        out = np.clip(forward(self.net, arr[:, None])[:, 0], lo, hi)
        return float(out[0]) if np.isscalar(desired_q) else out


def fit_nn_calibration(
    cal: CalibrationMap,
    cfg: TrainConfig | None = None,
    spec: NetSpec | None = None,
) -> NeuralCalibrationMap:
    """Distill a calibration map into a bound-correction net."""
    if cfg is None:
        cfg = TrainConfig(epochs=600, learning_rate=0.05)
    if spec is None:
        spec = NetSpec(input_dim=1, hidden_layers=(32, 32), seed=cfg.seed)
    net = init_network(spec, role="bound_correction")
    net = fit_mse(net, cal.found[:, None], cal.grid_nominal, cfg)
    return NeuralCalibrationMap(
        net=net, grid_nominal=cal.grid_nominal, found_raw=cal.found_raw, found=cal.found
    )


def corrected_bound_targets(
    idx: NeighborIndex, train: Dataset, cal, desired_q: float
) -> np.ndarray:
    """Per-anchor bound labels at the corrected quantile; the training targets
    for a direct bound net."""
    if not 0.01 <= desired_q <= 0.99:
        raise BoundsError(f"desired_q must be in [0.01, 0.99], got {desired_q}")
    q = float(cal.inverse(desired_q))
    return _row_quantiles(sorted_neighbor_targets(idx, train), q)


def train_ub_net(
    train: Dataset,
    labels: np.ndarray,
    desired_q: float,
    cfg: TrainConfig,
    spec: NetSpec | None = None,
    normalizer=None,
    init_from: ModelBundle | None = None,
) -> ModelBundle:
    """Fit one scalar bound net to corrected bound labels; the bundle records
    which cumulative probability it serves.

    init_from warm-starts from an already-trained net (normally the point
    net): a bound curve is the mean curve plus a slowly varying offset, so the
    warm start converges faster and more reliably than a fresh init.
    """
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if labels.shape[0] != train.n_samples:
        raise BoundsError("label count does not match the dataset")
    if init_from is not None:
        net = init_from.clone()
        net.role = "ub"
        net.normalizer = normalizer if normalizer is not None else init_from.normalizer
        net.training_meta = {}
    else:
        if spec is None:
            spec = NetSpec(input_dim=train.n_inputs, hidden_layers=(32, 32), seed=cfg.seed)
        net = init_network(spec, role="ub", normalizer=normalizer)
    net = fit_mse(net, train.features, labels, cfg)
    net.training_meta["quantile"] = float(desired_q)
    return net


def predict_interval(
    lower_net: ModelBundle,
    upper_net: ModelBundle,
    x: np.ndarray,
    denormalize: bool = False,
    with_swap_mask: bool = False,
):
    """Evaluate both bound nets; swap any crossed pair so upper >= lower.

    Both nets must be bound nets sharing a normalizer, with the lower net's
    recorded quantile below the upper net's.
    """
    for net in (lower_net, upper_net):
        if net.role != "ub" or "quantile" not in net.training_meta:
            raise BoundsError("predict_interval needs bound nets with recorded quantiles")
    if lower_net.training_meta["quantile"] >= upper_net.training_meta["quantile"]:
        raise BoundsError("lower net quantile must be below upper net quantile")
    if lower_net.normalizer != upper_net.normalizer:
        raise BoundsError("bound nets do not share a normalizer")
    single = np.ndim(x) == 1
    rows = np.atleast_2d(np.asarray(x, dtype=np.float64))
    raw_lo = forward(lower_net, rows)[:, 0]
    raw_hi = forward(upper_net, rows)[:, 0]
    swapped = raw_hi < raw_lo
    lo = np.where(swapped, raw_hi, raw_lo)
    hi = np.where(swapped, raw_lo, raw_hi)
    if denormalize:
        if lower_net.normalizer is None:
            raise BoundsError("no normalizer stored; cannot denormalize")
        lo = lower_net.normalizer.inverse_targets(lo)
        hi = lower_net.normalizer.inverse_targets(hi)
    if single:
        lo, hi, swapped = float(lo[0]), float(hi[0]), bool(swapped[0])
    return (lo, hi, swapped) if with_swap_mask else (lo, hi)


def inverse_threshold_scores(thresholds: np.ndarray, epsilon: float = 1e-6) -> np.ndarray:
    """Raw density scores: the inverse of the similarity thresholds."""
    return 1.0 / (np.asarray(thresholds, dtype=np.float64) + epsilon)


def density_targets(idx: NeighborIndex, epsilon: float = 1e-6) -> np.ndarray:
    """Inverse-threshold scores min-max normalized to [0, 1].

    A tight threshold means many close samples, hence high density.  If all
    thresholds are equal the scores are all zero by convention.
    """
    s = inverse_threshold_scores(idx.thresholds, epsilon)
    span = s.max() - s.min()
    if span == 0.0:
        return np.zeros_like(s)
    return (s - s.min()) / span


@dataclass
class DensityModel:
    """Scalar net predicting the normalized density score (clamped to >= 0)."""

    net: ModelBundle
    epsilon: float
    score_min: float
    score_max: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = forward(self.net, x)
        return np.maximum(out, 0.0)


def train_density_net(
    train: Dataset,
    targets: np.ndarray,
    cfg: TrainConfig,
    spec: NetSpec | None = None,
    epsilon: float = 1e-6,
    score_bounds: tuple[float, float] | None = None,
    normalizer=None,
) -> DensityModel:
    """Fit the density net to density_targets output."""
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if targets.shape[0] != train.n_samples:
        raise BoundsError("density target count does not match the dataset")
    if spec is None:
        spec = NetSpec(input_dim=train.n_inputs, hidden_layers=(32, 32), seed=cfg.seed)
    net = init_network(spec, role="density", normalizer=normalizer)
    net = fit_mse(net, train.features, targets, cfg)
    lo, hi = score_bounds if score_bounds is not None else (0.0, 1.0)
    net.training_meta.update({"epsilon": epsilon, "score_min": lo, "score_max": hi})
    return DensityModel(net=net, epsilon=epsilon, score_min=lo, score_max=hi)
