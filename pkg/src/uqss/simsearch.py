"""Sensitivity-weighted similar-sample selection.

For every anchor sample the prediction and absolute-error networks are
differentiated at the anchor, the two gradient magnitudes are blended by the
error/target variance ratio, and the blend weights a per-input deviation
metric: inputs the model reacts to strongly tolerate only small differences,
while inputs it ignores may differ freely.  The closest samples under that
metric become the anchor's similar-sample set; the largest accepted deviation
is its similarity threshold (later reused as an inverse density score).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataError, Dataset
from .nnet import ModelBundle, forward, input_gradient

__all__ = [
    "SimsearchError",
    "SensitivityProfile",
    "NeighborIndex",
    "NeighborTable",
    "abs_error_dataset",
    "variance_ratio",
    "sensitivities",
    "sensitivity_matrix",
    "weighted_deviation",
    "index_from_sensitivities",
    "build_neighbor_index",
    "neighbors_of",
    "query_neighbor_ids",
    "query_neighbors",
]

_CHUNK = 256  # anchors per vectorized block; bounds peak memory at ~chunk*N*n floats


class SimsearchError(ValueError):
    pass


@dataclass(frozen=True)
class SensitivityProfile:
    """Gradient magnitudes at one anchor: prediction (s_p), absolute error (s_e),
    and their variance-ratio blend (s_en)."""

    s_p: np.ndarray
    s_e: np.ndarray
    s_en: np.ndarray
    anchor_index: int = -1


@dataclass(frozen=True)
class NeighborIndex:
    """Selected similar samples for every anchor of a training set.

    neighbor_ids[i] holds the n_select nearest rows to anchor i under its own
    weighted deviation metric, ascending; neighbor_devs the matching
    deviations; thresholds[i] the largest accepted deviation.
    """

    neighbor_ids: np.ndarray  # (N, n_select) int
    thresholds: np.ndarray  # (N,)
    neighbor_devs: np.ndarray  # (N, n_select)
    r_var: float
    n_select: int

    def __post_init__(self):
        ids = np.asarray(self.neighbor_ids, dtype=np.int64)
        devs = np.asarray(self.neighbor_devs, dtype=np.float64)
        th = np.asarray(self.thresholds, dtype=np.float64)
        for name, arr in (("neighbor_ids", ids), ("neighbor_devs", devs), ("thresholds", th)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if ids.shape != devs.shape or ids.shape[0] != th.shape[0]:
            raise SimsearchError("index array shapes disagree")
        if ids.shape[1] != self.n_select:
            raise SimsearchError("neighbor_ids width must equal n_select")

    @property
    def n_anchors(self) -> int:
        return self.neighbor_ids.shape[0]


@dataclass(frozen=True)
class NeighborTable:
    """Neighbors of one anchor, sorted by ascending weighted deviation."""

    anchor: int
    neighbor_ids: np.ndarray
    deviations: np.ndarray
    features: np.ndarray
    targets: np.ndarray


def abs_error_dataset(nn_p: ModelBundle, train: Dataset) -> Dataset:
    """Same features, targets replaced by |prediction - target|."""
    if train.n_inputs != nn_p.spec.input_dim:
        raise SimsearchError(
            f"dataset has {train.n_inputs} inputs but the model expects {nn_p.spec.input_dim}"
        )
    preds = forward(nn_p, train.features)[:, 0]
    ae = np.abs(preds - train.targets)
    return Dataset(train.features, ae, train.feature_names + ("abs_error",))


def variance_ratio(ae: np.ndarray, t: np.ndarray) -> float:
    """clamp(Var(AE)/Var(T), 0, 1) with population variances."""
    var_t = float(np.var(np.asarray(t, dtype=np.float64)))
    if var_t <= 0.0:
        raise SimsearchError("target variance is zero")
    var_ae = float(np.var(np.asarray(ae, dtype=np.float64)))
    return float(np.clip(var_ae / var_t, 0.0, 1.0))


def _blend(s_p: np.ndarray, s_e: np.ndarray, r_var: float) -> np.ndarray:
    r = float(np.clip(r_var, 0.0, 1.0))
    return s_e * r + s_p * (1.0 - r)


def sensitivities(
    nn_p: ModelBundle, nn_e: ModelBundle, x: np.ndarray, r_var: float
) -> SensitivityProfile:
    """Sensitivity profile at one input point."""
    s_p = np.abs(input_gradient(nn_p, x))
    s_e = np.abs(input_gradient(nn_e, x))
    return SensitivityProfile(s_p=s_p, s_e=s_e, s_en=_blend(s_p, s_e, r_var), anchor_index=-1)


def sensitivity_matrix(
    nn_p: ModelBundle, nn_e: ModelBundle, x: np.ndarray, r_var: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch (s_p, s_e, s_en) rows for every row of x."""
    s_p = np.abs(input_gradient(nn_p, x))
    s_e = np.abs(input_gradient(nn_e, x))
    return s_p, s_e, _blend(s_p, s_e, r_var)


def weighted_deviation(
    profile: SensitivityProfile, x_i: np.ndarray, x_j: np.ndarray, input_ranges: np.ndarray
) -> float:
    """max over inputs of s_en * |x_i - x_j| / range."""
    r = np.asarray(input_ranges, dtype=np.float64)
    if np.any(r <= 0.0):
        raise SimsearchError("input ranges must be positive")
    xi = np.asarray(x_i, dtype=np.float64)
    xj = np.asarray(x_j, dtype=np.float64)
    if not xi.shape == xj.shape == profile.s_en.shape == r.shape:
        raise SimsearchError("dimension mismatch")
    return float(np.max(profile.s_en * np.abs(xi - xj) / r))


def index_from_sensitivities(
    s_en: np.ndarray,
    features: np.ndarray,
    input_ranges: np.ndarray,
    n_select: int,
    r_var: float = 0.0,
) -> NeighborIndex:
    """Neighbor selection from precomputed combined sensitivities.

    Each anchor row i of s_en weights the deviation metric for that anchor;
    ties break by ascending sample index; the anchor never selects itself.
    """
    x = np.asarray(features, dtype=np.float64)
    s = np.asarray(s_en, dtype=np.float64)
    r = np.asarray(input_ranges, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= n_select < n:
        raise SimsearchError(f"n_select must be in [1, {n - 1}], got {n_select}")
    if np.any(r <= 0.0):
        raise SimsearchError("input ranges must be positive")
    w = s / r
    ids = np.empty((n, n_select), dtype=np.int64)
    devs = np.empty((n, n_select), dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        block = np.abs(x[start:stop, None, :] - x[None, :, :]) * w[start:stop, None, :]
        dev = block.max(axis=2)  # (chunk, N)
        dev[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = np.argsort(dev, axis=1, kind="stable")[:, :n_select]
        ids[start:stop] = order
        devs[start:stop] = np.take_along_axis(dev, order, axis=1)
    return NeighborIndex(
        neighbor_ids=ids,
        thresholds=devs[:, -1].copy(),
        neighbor_devs=devs,
        r_var=float(np.clip(r_var, 0.0, 1.0)),
        n_select=n_select,
    )


def build_neighbor_index(
    nn_p: ModelBundle, nn_e: ModelBundle, train: Dataset, n_select: int
) -> NeighborIndex:
    """Run the full similar-sample selection over a training set."""
    try:
        train.require_positive_ranges()
    except DataError as exc:
        raise SimsearchError(str(exc)) from exc
    preds = forward(nn_p, train.features)[:, 0]
    ae = np.abs(preds - train.targets)
    r_var = variance_ratio(ae, train.targets)
    _, _, s_en = sensitivity_matrix(nn_p, nn_e, train.features, r_var)
    return index_from_sensitivities(s_en, train.features, train.input_ranges, n_select, r_var)


def neighbors_of(idx: NeighborIndex, train: Dataset, anchor: int) -> NeighborTable:
    """The stored neighbor list of a training anchor, ascending by deviation."""
    if not 0 <= anchor < idx.n_anchors:
        raise SimsearchError(f"anchor {anchor} out of range [0, {idx.n_anchors})")
    ids = idx.neighbor_ids[anchor]
    return NeighborTable(
        anchor=anchor,
        neighbor_ids=ids.copy(),
        deviations=idx.neighbor_devs[anchor].copy(),
        features=train.features[ids],
        targets=train.targets[ids],
    )


def query_neighbor_ids(
    nn_p: ModelBundle,
    nn_e: ModelBundle,
    train: Dataset,
    queries: np.ndarray,
    n_select: int,
    r_var: float,
) -> np.ndarray:
    """(M, n_select) neighbor rows in train for M query points not in train."""
    x = np.asarray(queries, dtype=np.float64)
    if not 1 <= n_select <= train.n_samples:
        raise SimsearchError(f"n_select must be in [1, {train.n_samples}]")
    ranges = train.input_ranges
    if np.any(ranges <= 0.0):
        raise SimsearchError("input ranges must be positive")
    _, _, s_en = sensitivity_matrix(nn_p, nn_e, x, r_var)
    w = s_en / ranges
    ids = np.empty((x.shape[0], n_select), dtype=np.int64)
    for start in range(0, x.shape[0], _CHUNK):
        stop = min(start + _CHUNK, x.shape[0])
        block = np.abs(x[start:stop, None, :] - train.features[None, :, :]) * w[start:stop, None, :]
        dev = block.max(axis=2)
        ids[start:stop] = np.argsort(dev, axis=1, kind="stable")[:, :n_select]
    return ids


def query_neighbors(
    nn_p: ModelBundle,
    nn_e: ModelBundle,
    train: Dataset,
    x: np.ndarray,
    n_select: int,
    r_var: float | None = None,
) -> NeighborTable:
    """Similar samples for a novel input point (not necessarily a train row).

    The variance ratio is recomputed from the training set unless supplied.
    """
    if r_var is None:
        preds = forward(nn_p, train.features)[:, 0]
        r_var = variance_ratio(np.abs(preds - train.targets), train.targets)
    if not 1 <= n_select <= train.n_samples:
        raise SimsearchError(f"n_select must be in [1, {train.n_samples}]")
    profile = sensitivities(nn_p, nn_e, np.asarray(x, dtype=np.float64), r_var)
    ranges = train.input_ranges
    if np.any(ranges <= 0.0):
        raise SimsearchError("input ranges must be positive")
    dev = np.max(np.abs(train.features - x) * (profile.s_en / ranges), axis=1)
    order = np.argsort(dev, kind="stable")[:n_select]
    return NeighborTable(
        anchor=-1,
        neighbor_ids=order.astype(np.int64),
        deviations=dev[order],
        features=train.features[order],
        targets=train.targets[order],
    )
