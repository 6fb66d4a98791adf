"""Dataset container, CSV ingestion, min-max normalization, splits, and synthetic generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "Normalizer",
    "SplitSpec",
    "IngestStats",
    "ingest_csv",
    "load_csv",
    "write_csv",
    "normalize",
    "split",
    "gen_dataset1",
    "gen_dataset3",
]


class DataError(ValueError):
    """Raised for unusable input data (bad CSV cells, degenerate columns, bad splits)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """An immutable feature matrix plus target vector.

    Column ranges are always recomputed from the stored values, so they stay
    consistent through normalization and subsetting.  Construction does not
    require positive ranges: derived datasets (e.g. absolute-error targets
    from a perfect predictor) may be constant.  Operations that need positive
    ranges (normalization, CSV ingestion, deviation weighting) check there.
    """

    features: np.ndarray  # (N, n)
    targets: np.ndarray  # (N,)
    column_names: tuple[str, ...]  # n feature names + target name

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        targs = np.asarray(self.targets, dtype=np.float64).ravel()
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "targets", _readonly(targs))
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise DataError("dataset needs at least one row and one feature column")
        if targs.shape[0] != feats.shape[0]:
            raise DataError(
                f"feature rows ({feats.shape[0]}) and targets ({targs.shape[0]}) disagree"
            )
        if len(self.column_names) != feats.shape[1] + 1:
            raise DataError(
                f"expected {feats.shape[1] + 1} column names, got {len(self.column_names)}"
            )
        object.__setattr__(self, "column_names", tuple(str(c) for c in self.column_names))
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(targs)):
            raise DataError("dataset contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.features.shape[1]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.column_names[:-1]

    @property
    def target_name(self) -> str:
        return self.column_names[-1]

    @property
    def input_ranges(self) -> np.ndarray:
        """Per-column max - min, recomputed from the stored features."""
        return self.features.max(axis=0) - self.features.min(axis=0)

    @property
    def target_range(self) -> float:
        return float(self.targets.max() - self.targets.min())

    def require_positive_ranges(self) -> None:
        """Raise if any feature column or the target is constant."""
        ranges = self.input_ranges
        for k in np.flatnonzero(ranges <= 0.0):
            raise DataError(f"zero-range column {self.feature_names[int(k)]!r}")
        if self.target_range <= 0.0:
            raise DataError(f"degenerate target range: column {self.target_name!r} is constant")

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset, preserving column names."""
        return Dataset(self.features[rows], self.targets[rows], self.column_names)


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-column min-max transform for the inputs and the target."""

    input_min: np.ndarray
    input_max: np.ndarray
    target_min: float
    target_max: float

    def __post_init__(self):
        object.__setattr__(self, "input_min", _readonly(self.input_min))
        object.__setattr__(self, "input_max", _readonly(self.input_max))
        if np.any(self.input_max < self.input_min) or self.target_max < self.target_min:
            raise DataError("normalizer max < min")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Normalizer):
            return NotImplemented
        return (
            np.array_equal(self.input_min, other.input_min)
            and np.array_equal(self.input_max, other.input_max)
            and self.target_min == other.target_min
            and self.target_max == other.target_max
        )

    def transform_features(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.input_min) / (
            self.input_max - self.input_min
        )

    def inverse_features(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * (self.input_max - self.input_min) + self.input_min

    def transform_targets(self, t: np.ndarray) -> np.ndarray:
        return (np.asarray(t, dtype=np.float64) - self.target_min) / (
            self.target_max - self.target_min
        )

    def inverse_targets(self, t: np.ndarray) -> np.ndarray:
        return np.asarray(t, dtype=np.float64) * (self.target_max - self.target_min) + self.target_min

    def transform(self, d: Dataset) -> Dataset:
        return Dataset(
            self.transform_features(d.features), self.transform_targets(d.targets), d.column_names
        )

    def inverse(self, d: Dataset) -> Dataset:
        return Dataset(
            self.inverse_features(d.features), self.inverse_targets(d.targets), d.column_names
        )


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/test partition parameters."""

    train_fraction: float
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.seed < 0:
            raise DataError("seed must be nonnegative")


@dataclass(frozen=True)
class IngestStats:
    """Row bookkeeping from CSV ingestion."""

    kept: int
    dropped: int
    columns_used: tuple[str, ...] = field(default=())


def ingest_csv(path, target_column) -> tuple[Dataset, IngestStats]:
    """Read a delimited file into a Dataset, dropping rows with missing cells.

    The file must be UTF-8 with a header row and comma delimiter.  Cells are
    decimal numbers ('.' radix, scientific notation accepted).  A row with
    any empty cell is dropped and counted; a non-empty cell that does not
    parse as a finite number is an error reported with its position.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"unreadable file {path!s}: {exc}") from exc

    lines = [ln for ln in text.replace("\r\n", "\n").split("\n") if ln.strip() != ""]
    if not lines:
        raise DataError(f"empty file {path!s}")
    header = [c.strip() for c in lines[0].split(",")]
    n_cols = len(header)

    if isinstance(target_column, int):
        if not 0 <= target_column < n_cols:
            raise DataError(f"unknown target column index {target_column}")
        t_idx = target_column
    else:
        if target_column not in header:
            raise DataError(f"unknown target column {target_column!r}")
        t_idx = header.index(target_column)
    feat_idx = [k for k in range(n_cols) if k != t_idx]

    rows: list[list[float]] = []
    dropped = 0
    for lineno, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != n_cols:
            raise DataError(f"row {lineno} has {len(cells)} cells, expected {n_cols}")
        if any(c == "" for c in cells):
            dropped += 1
            continue
        parsed = []
        for k, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"non-numeric cell at row {lineno}, column {header[k]!r}: {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"non-finite cell at row {lineno}, column {header[k]!r}: {cell!r}")
            parsed.append(v)
        rows.append(parsed)

    if not rows:
        raise DataError(f"zero usable rows in {path!s} ({dropped} dropped)")
    arr = np.array(rows, dtype=np.float64)
    names = tuple(header[k] for k in feat_idx) + (header[t_idx],)
    d = Dataset(arr[:, feat_idx], arr[:, t_idx], names)
    d.require_positive_ranges()
    return d, IngestStats(kept=len(rows), dropped=dropped, columns_used=names)


def load_csv(path, target_column) -> Dataset:
    """ingest_csv without the bookkeeping."""
    d, _ = ingest_csv(path, target_column)
    return d


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(d: Dataset, path) -> None:
    """Write a Dataset back to the ingestible CSV form (full float precision)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(d.column_names) + "\n")
        for i in range(d.n_samples):
            cells = [_fmt(v) for v in d.features[i]] + [_fmt(d.targets[i])]
            fh.write(",".join(cells) + "\n")


def normalize(d: Dataset) -> tuple[Dataset, Normalizer]:
    """Map every input column and the target onto [0, 1] by min-max."""
    d.require_positive_ranges()
    norm = Normalizer(
        input_min=d.features.min(axis=0),
        input_max=d.features.max(axis=0),
        target_min=float(d.targets.min()),
        target_max=float(d.targets.max()),
    )
    return norm.transform(d), norm


def split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint train/test row partition; identical spec gives identical split."""
    n = d.n_samples
    n_train = int(math.floor(spec.train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DataError(
            f"train_fraction {spec.train_fraction} leaves an empty part for N={n}"
        )
    if spec.shuffle:
        order = np.random.default_rng(spec.seed).permutation(n)
    else:
        order = np.arange(n)
    return d.take(order[:n_train]), d.take(order[n_train:])


def gen_dataset1(num_samples: int, seed: int) -> Dataset:
    """Single-input benchmark with homoscedastic noise.

    x ~ U[0,1], t = 0.5 + 0.35*sin(4*pi*x) + e with e ~ U[-0.08, 0.08].
    """
    if num_samples < 10:
        raise DataError("num_samples must be >= 10")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, num_samples)
    eps = rng.uniform(-0.08, 0.08, num_samples)
    t = 0.5 + 0.35 * np.sin(4.0 * np.pi * x) + eps
    return Dataset(x[:, None], t, ("x1", "t"))


def gen_dataset3(num_samples: int, seed: int) -> Dataset:
    """Three-input benchmark: input 1 drives the mean, input 2 the noise width,
    input 3 is unrelated to the target.

    x1, x2, x3 ~ U[0,4]; t = sin(pi*x1/2) + e with e ~ U[-w(x2), 0] and
    w(x2) = 0.1 + 0.35*clamp((x2-1)/2, 0, 1), so the noise is one-sided: the
    upper envelope is the mean curve while the lower envelope widens with x2.
    """
    if num_samples < 10:
        raise DataError("num_samples must be >= 10")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 4.0, (num_samples, 3))
    w = 0.1 + 0.35 * np.clip((x[:, 1] - 1.0) / 2.0, 0.0, 1.0)
    eps = -rng.uniform(0.0, 1.0, num_samples) * w
    t = np.sin(np.pi * x[:, 0] / 2.0) + eps
    return Dataset(x, t, ("x1", "x2", "x3", "t"))
