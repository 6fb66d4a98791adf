"""End-to-end training pipeline, its file-backed bundle format, and run manifests.

A trained bundle directory holds the point and absolute-error nets, the
neighbor index, the calibration table, one bound net per quantile, the density
net, the raw train/test splits, and a manifest hashing every artifact.  Bundles
are write-once: every command that produces output writes into a fresh
directory and records a manifest.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, Normalizer, SplitSpec, gen_dataset1, gen_dataset3
from .data import load_csv, normalize, split, write_csv
from .metrics import CostParams, IntervalSet, aggregate, interval_metrics, report_row
from .nnet import (
    ModelBundle,
    NetSpec,
    TrainConfig,
    init_network,
    load_model,
    predict,
    save_model,
    train_mse,
)
from .simsearch import NeighborIndex, abs_error_dataset, build_neighbor_index
from .uqbounds import (
    CalibrationMap,
    DensityModel,
    NeuralCalibrationMap,
    calibration_sweep,
    calibration_sweep_heldout,
    corrected_bound_targets,
    density_targets,
    fit_nn_calibration,
    inverse_threshold_scores,
    predict_interval,
    train_density_net,
    train_ub_net,
)

__all__ = [
    "ConfigError",
    "StageError",
    "Profile",
    "PROFILES",
    "PipelineConfig",
    "TrainedPipeline",
    "quantile_pair",
    "train_pipeline",
    "save_bundle",
    "load_bundle",
    "find_bundles",
    "pipeline_intervals",
    "pipeline_predict",
    "evaluate_bundles",
    "sha256_file",
    "write_manifest",
    "bundle_hash_of",
]

BUNDLE_FORMAT = "uqss-bundle v1"


class ConfigError(ValueError):
    """Bad configuration or usage; maps to exit code 2."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class Profile:
    """Net widths and schedules for one working scale.

    Bound nets warm-start from the trained point net (they only have to learn
    an offset from the mean curve), so they get a shorter schedule.
    """

    hidden: tuple[int, ...]
    epochs: int
    learning_rate: float
    batch_size: int | str
    ub_epochs: int
    baseline_hidden: tuple[int, ...]
    pretrain_epochs: int
    finetune_epochs: int
    pretrain_lr: float
    finetune_lr: float
    baseline_sharpness: float
    baseline_trials: int


PROFILES = {
    # small nets for fast local runs and the test suite
    "desk": Profile(
        hidden=(32, 32),
        epochs=800,
        learning_rate=0.005,
        batch_size=128,
        ub_epochs=400,
        baseline_hidden=(32, 32),
        pretrain_epochs=300,
        finetune_epochs=2000,
        pretrain_lr=5e-2,
        finetune_lr=4e-3,
        baseline_sharpness=200.0,
        baseline_trials=10,
    ),
    # the published working point: 2x500 pipeline nets at lr 0.05 for 600
    # epochs, 2x1000 baseline nets with 1000/5000 epoch schedules
    "paper": Profile(
        hidden=(500, 500),
        epochs=600,
        learning_rate=0.05,
        batch_size="full",
        ub_epochs=600,
        baseline_hidden=(1000, 1000),
        pretrain_epochs=1000,
        finetune_epochs=5000,
        pretrain_lr=5e-2,
        finetune_lr=5e-5,
        baseline_sharpness=50.0,
        baseline_trials=100,
    ),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Full description of one training run; round-trips through INI text."""

    # dataset
    source: str = "generator"  # generator | csv
    generator: str = "d1"  # d1 | d3
    n_samples: int = 2000
    data_seed: int = 7
    csv_path: str | None = None
    target_column: str | None = None
    # split
    train_fraction: float = 0.8
    split_seed: int = 11
    shuffle: bool = True
    # pipeline
    profile: str = "desk"
    n_select: int = 40
    nominals: tuple[float, ...] = (0.9,)
    quantiles: tuple[float, ...] | None = None
    calibration: str = "isotonic"  # isotonic | nn
    calibration_split: float = 0.0
    base_seed: int = 100
    trials: int = 1
    # optional net overrides
    hidden: tuple[int, ...] | None = None
    epochs: int | None = None
    learning_rate: float | None = None

    def __post_init__(self):
        if self.source not in ("generator", "csv"):
            raise ConfigError(f"dataset source must be generator or csv, got {self.source!r}")
        if self.source == "generator" and self.generator not in ("d1", "d3"):
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.source == "csv" and (not self.csv_path or self.target_column is None):
            raise ConfigError("csv source needs path and target_column")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.calibration not in ("isotonic", "nn"):
            raise ConfigError(f"calibration must be isotonic or nn, got {self.calibration!r}")
        if not 0.0 <= self.calibration_split < 1.0:
            raise ConfigError("calibration_split must be in [0, 1)")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.n_select < 1:
            raise ConfigError("n_select must be >= 1")
        for nominal in self.nominals:
            if not 0.5 < nominal <= 0.98:
                raise ConfigError(
                    f"nominal coverage {nominal} outside (0.5, 0.98]; the calibration "
                    "grid spans quantiles 0.01..0.99"
                )
        if self.quantiles is not None:
            for q in self.quantiles:
                if not 0.01 <= q <= 0.99:
                    raise ConfigError(f"quantile {q} outside [0.01, 0.99]")

    def resolved(self) -> Profile:
        base = PROFILES[self.profile]
        return replace(
            base,
            hidden=self.hidden or base.hidden,
            epochs=self.epochs or base.epochs,
            learning_rate=self.learning_rate or base.learning_rate,
        )

    def needed_quantiles(self) -> tuple[float, ...]:
        if self.quantiles is not None:
            qs = set(round(float(q), 6) for q in self.quantiles)
        else:
            qs = set()
            for nominal in self.nominals:
                lo, hi = quantile_pair(nominal)
                qs.update((lo, hi))
        return tuple(sorted(qs))

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["dataset"] = {"source": self.source}
        if self.source == "generator":
            cp["dataset"]["generator"] = self.generator
            cp["dataset"]["n_samples"] = str(self.n_samples)
            cp["dataset"]["seed"] = str(self.data_seed)
        else:
            cp["dataset"]["path"] = str(self.csv_path)
            cp["dataset"]["target_column"] = str(self.target_column)
        cp["split"] = {
            "train_fraction": repr(self.train_fraction),
            "seed": str(self.split_seed),
            "shuffle": "true" if self.shuffle else "false",
        }
        cp["pipeline"] = {
            "profile": self.profile,
            "n_select": str(self.n_select),
            "nominals": ", ".join(repr(v) for v in self.nominals),
            "calibration": self.calibration,
            "calibration_split": repr(self.calibration_split),
            "base_seed": str(self.base_seed),
            "trials": str(self.trials),
        }
        if self.quantiles is not None:
            cp["pipeline"]["quantiles"] = ", ".join(repr(v) for v in self.quantiles)
        nets = {}
        if self.hidden is not None:
            nets["hidden"] = ", ".join(str(h) for h in self.hidden)
        if self.epochs is not None:
            nets["epochs"] = str(self.epochs)
        if self.learning_rate is not None:
            nets["learning_rate"] = repr(self.learning_rate)
        if nets:
            cp["nets"] = nets
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @staticmethod
    def from_ini(text: str) -> "PipelineConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"bad config: {exc}") from exc
        known = {
            "dataset": {"source", "generator", "n_samples", "seed", "path", "target_column"},
            "split": {"train_fraction", "seed", "shuffle"},
            "pipeline": {
                "profile",
                "n_select",
                "nominals",
                "quantiles",
                "calibration",
                "calibration_split",
                "base_seed",
                "trials",
            },
            "nets": {"hidden", "epochs", "learning_rate"},
        }
        for section in cp.sections():
            if section not in known:
                raise ConfigError(f"unknown config section [{section}]")
            extra = set(cp[section]) - known[section]
            if extra:
                raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
        defaults = PipelineConfig()
        kwargs: dict = {}
        try:
            if cp.has_section("dataset"):
                ds = cp["dataset"]
                kwargs["source"] = ds.get("source", defaults.source)
                kwargs["generator"] = ds.get("generator", defaults.generator)
                kwargs["n_samples"] = ds.getint("n_samples", defaults.n_samples)
                kwargs["data_seed"] = ds.getint("seed", defaults.data_seed)
                kwargs["csv_path"] = ds.get("path", None)
                kwargs["target_column"] = ds.get("target_column", None)
            if cp.has_section("split"):
                sp = cp["split"]
                kwargs["train_fraction"] = sp.getfloat("train_fraction", defaults.train_fraction)
                kwargs["split_seed"] = sp.getint("seed", defaults.split_seed)
                kwargs["shuffle"] = sp.getboolean("shuffle", defaults.shuffle)
            if cp.has_section("pipeline"):
                pl = cp["pipeline"]
                kwargs["profile"] = pl.get("profile", defaults.profile)
                kwargs["n_select"] = pl.getint("n_select", defaults.n_select)
                if pl.get("nominals", None):
                    kwargs["nominals"] = tuple(
                        float(v) for v in pl["nominals"].replace(",", " ").split()
                    )
                if pl.get("quantiles", None):
                    kwargs["quantiles"] = tuple(
                        float(v) for v in pl["quantiles"].replace(",", " ").split()
                    )
                kwargs["calibration"] = pl.get("calibration", defaults.calibration)
                kwargs["calibration_split"] = pl.getfloat(
                    "calibration_split", defaults.calibration_split
                )
                kwargs["base_seed"] = pl.getint("base_seed", defaults.base_seed)
                kwargs["trials"] = pl.getint("trials", defaults.trials)
            if cp.has_section("nets"):
                nets = cp["nets"]
                if nets.get("hidden", None):
                    kwargs["hidden"] = tuple(
                        int(v) for v in nets["hidden"].replace(",", " ").split()
                    )
                if nets.get("epochs", None):
                    kwargs["epochs"] = nets.getint("epochs")
                if nets.get("learning_rate", None):
                    kwargs["learning_rate"] = nets.getfloat("learning_rate")
        except ValueError as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        return PipelineConfig(**kwargs)

    @staticmethod
    def from_ini_file(path) -> "PipelineConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!s}: {exc}") from exc
        return PipelineConfig.from_ini(text)


def quantile_pair(nominal: float) -> tuple[float, float]:
    """Symmetric tail split of a nominal coverage into (lower, upper) quantiles."""
    alpha = 1.0 - nominal
    return round(alpha / 2.0, 6), round(1.0 - alpha / 2.0, 6)


@dataclass
class TrainedPipeline:
    """All pieces produced by one training run, in memory."""

    config: PipelineConfig
    train_raw: Dataset
    test_raw: Dataset
    train: Dataset
    test: Dataset
    normalizer: Normalizer
    point_net: ModelBundle
    error_net: ModelBundle
    index: NeighborIndex
    density: DensityModel
    density_tertiles: tuple[float, float]
    calmap: CalibrationMap | NeuralCalibrationMap
    ub_nets: dict[float, ModelBundle]
    r_var: float
    stage_seconds: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    def nominal_nets(self, nominal: float) -> tuple[ModelBundle, ModelBundle]:
        lo_q, hi_q = quantile_pair(nominal)
        for q in (lo_q, hi_q):
            if q not in self.ub_nets:
                raise ConfigError(
                    f"no bound net for quantile {q}; bundle has {sorted(self.ub_nets)}"
                )
        return self.ub_nets[lo_q], self.ub_nets[hi_q]


def _seed_map(base: int, quantiles: tuple[float, ...]) -> dict:
    seeds = {
        "point": 1000 * base + 1,
        "abs_error": 1000 * base + 2,
        "density": 1000 * base + 3,
        "bound_correction": 1000 * base + 4,
    }
    for i, q in enumerate(quantiles):
        seeds[f"ub_{q:.6f}"] = 1000 * base + 10 + i
    return seeds


def resolve_dataset(cfg: PipelineConfig) -> Dataset:
    if cfg.source == "generator":
        gen = gen_dataset1 if cfg.generator == "d1" else gen_dataset3
        return gen(cfg.n_samples, cfg.data_seed)
    target: str | int = cfg.target_column
    if isinstance(target, str) and target.lstrip("-").isdigit():
        target = int(target)
    return load_csv(cfg.csv_path, target)


def train_pipeline(
    cfg: PipelineConfig, dataset: Dataset | None = None, base_seed: int | None = None
) -> TrainedPipeline:
    """Run every training stage in order and return the assembled pipeline.

    Stage failures are re-raised as StageError with the stage name attached.
    """
    profile = cfg.resolved()
    quantiles = cfg.needed_quantiles()
    base = cfg.base_seed if base_seed is None else base_seed
    seeds = _seed_map(base, quantiles)
    timings: dict[str, float] = {}

    def run(stage: str, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            raise StageError(stage, exc) from exc
        timings[stage] = time.perf_counter() - t0
        return result

    if dataset is None:
        dataset = run("dataset", lambda: resolve_dataset(cfg))

    train_raw, test_raw = run(
        "split", lambda: split(dataset, SplitSpec(cfg.train_fraction, cfg.split_seed, cfg.shuffle))
    )
    train, norm = run("normalize", lambda: normalize(train_raw))
    test = norm.transform(test_raw)

    n_inputs = train.n_inputs

    def net_cfg(seed: int, epochs: int | None = None) -> TrainConfig:
        return TrainConfig(
            epochs=epochs or profile.epochs,
            learning_rate=profile.learning_rate,
            batch_size=profile.batch_size,
            seed=seed,
        )

    def make_spec(seed: int, input_dim: int = n_inputs) -> NetSpec:
        return NetSpec(input_dim=input_dim, hidden_layers=profile.hidden, seed=seed)

    def train_point():
        net = init_network(make_spec(seeds["point"]), role="point", normalizer=norm)
        return train_mse(net, train, net_cfg(seeds["point"]))

    point_net = run("point_net", train_point)

    def train_error():
        ae = abs_error_dataset(point_net, train)
        net = init_network(make_spec(seeds["abs_error"]), role="abs_error", normalizer=norm)
        return train_mse(net, ae, net_cfg(seeds["abs_error"]))

    error_net = run("abs_error_net", train_error)

    index = run("neighbor_index", lambda: build_neighbor_index(point_net, error_net, train, cfg.n_select))

    def train_density():
        targets = density_targets(index)
        scores = inverse_threshold_scores(index.thresholds)
        model = train_density_net(
            train,
            targets,
            net_cfg(seeds["density"]),
            spec=make_spec(seeds["density"]),
            score_bounds=(float(scores.min()), float(scores.max())),
            normalizer=norm,
        )
        preds = model.predict(train.features)[:, 0]
        tertiles = (float(np.quantile(preds, 1 / 3)), float(np.quantile(preds, 2 / 3)))
        return model, tertiles

    density, density_tertiles = run("density_net", train_density)

    def run_calibration():
        if cfg.calibration_split > 0.0:
            rng = np.random.default_rng(base)
            perm = rng.permutation(train.n_samples)
            n_cal = int(np.floor(cfg.calibration_split * train.n_samples))
            if n_cal < 1 or train.n_samples - n_cal <= cfg.n_select:
                raise ConfigError(
                    f"calibration_split {cfg.calibration_split} leaves too few samples"
                )
            calib = train.take(perm[:n_cal])
            reference = train.take(perm[n_cal:])
            calmap = calibration_sweep_heldout(
                point_net, error_net, reference, calib, cfg.n_select, index.r_var
            )
        else:
            calmap = calibration_sweep(index, train)
        if cfg.calibration == "nn":
            calmap = fit_nn_calibration(
                calmap,
                cfg=net_cfg(seeds["bound_correction"]),
                spec=NetSpec(input_dim=1, hidden_layers=profile.hidden, seed=seeds["bound_correction"]),
            )
        return calmap

    calmap = run("calibration", run_calibration)

    def train_bounds():
        nets = {}
        for q in quantiles:
            labels = corrected_bound_targets(index, train, calmap, q)
            seed = seeds[f"ub_{q:.6f}"]
            nets[q] = train_ub_net(
                train,
                labels,
                q,
                net_cfg(seed, epochs=profile.ub_epochs),
                spec=make_spec(seed),
                normalizer=norm,
                init_from=point_net,
            )
        return nets

    ub_nets = run("ub_nets", train_bounds)

    return TrainedPipeline(
        config=cfg,
        train_raw=train_raw,
        test_raw=test_raw,
        train=train,
        test=test,
        normalizer=norm,
        point_net=point_net,
        error_net=error_net,
        index=index,
        density=density,
        density_tertiles=density_tertiles,
        calmap=calmap,
        ub_nets=ub_nets,
        r_var=index.r_var,
        stage_seconds=timings,
        seeds=seeds,
    )


def pipeline_intervals(
    tp: TrainedPipeline, x_norm: np.ndarray, nominal: float, denormalize: bool = False
) -> tuple[np.ndarray, np.ndarray, int]:
    """Interval predictions for normalized inputs; returns repaired bounds and
    the number of swap repairs."""
    lower_net, upper_net = tp.nominal_nets(nominal)
    lo, hi, swapped = predict_interval(
        lower_net, upper_net, x_norm, denormalize=denormalize, with_swap_mask=True
    )
    return lo, hi, int(np.sum(swapped))


def pipeline_predict(tp: TrainedPipeline, x_raw: np.ndarray, nominal: float) -> dict:
    """Denormalized point prediction, interval, and density for raw inputs."""
    x = tp.normalizer.transform_features(np.atleast_2d(np.asarray(x_raw, dtype=np.float64)))
    lo, hi, swaps = pipeline_intervals(tp, x, nominal, denormalize=True)
    point = tp.normalizer.inverse_targets(predict(tp.point_net, x)[:, 0])
    dens = tp.density.predict(x)[:, 0]
    return {
        "lower": lo,
        "upper": hi,
        "point": point,
        "density": dens,
        "n_swapped": swaps,
    }


def density_band(tp: TrainedPipeline, score: float) -> str:
    t1, t2 = tp.density_tertiles
    if score < t1:
        return "low"
    if score < t2:
        return "medium"
    return "high"


# ---------------------------------------------------------------------------
# bundle serialization


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir: Path, doc: dict) -> Path:
    path = Path(outdir) / "manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def bundle_hash_of(file_hashes: dict[str, str]) -> str:
    lines = "".join(f"{name}:{digest}\n" for name, digest in sorted(file_hashes.items()))
    return hashlib.sha256(lines.encode("utf-8")).hexdigest()


def _write_index_csv(index: NeighborIndex, path: Path) -> None:
    k = index.n_select
    header = (
        ["anchor", "threshold"]
        + [f"neighbor_{j}" for j in range(k)]
        + [f"deviation_{j}" for j in range(k)]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(index.n_anchors):
            cells = [str(i), repr(float(index.thresholds[i]))]
            cells += [str(int(v)) for v in index.neighbor_ids[i]]
            cells += [repr(float(v)) for v in index.neighbor_devs[i]]
            fh.write(",".join(cells) + "\n")


def _read_index_csv(path: Path, r_var: float) -> NeighborIndex:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        k = sum(1 for c in header if c.startswith("neighbor_"))
        ids, devs, ths = [], [], []
        for line in fh:
            cells = line.rstrip("\n").split(",")
            ths.append(float(cells[1]))
            ids.append([int(v) for v in cells[2 : 2 + k]])
            devs.append([float(v) for v in cells[2 + k : 2 + 2 * k]])
    return NeighborIndex(
        neighbor_ids=np.array(ids, dtype=np.int64),
        thresholds=np.array(ths, dtype=np.float64),
        neighbor_devs=np.array(devs, dtype=np.float64),
        r_var=r_var,
        n_select=k,
    )


def _write_calibration_csv(calmap, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("nominal,found_raw,found_isotonic\n")
        for g, raw, iso in zip(calmap.grid_nominal, calmap.found_raw, calmap.found):
            fh.write(f"{float(g)!r},{float(raw)!r},{float(iso)!r}\n")


def _read_calibration_csv(path: Path) -> CalibrationMap:
    grid, raw, iso = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            g, r, i = line.rstrip("\n").split(",")
            grid.append(float(g))
            raw.append(float(r))
            iso.append(float(i))
    return CalibrationMap(
        grid_nominal=np.array(grid), found_raw=np.array(raw), found=np.array(iso)
    )


def save_bundle(tp: TrainedPipeline, outdir, command: str = "train") -> dict:
    """Write every pipeline artifact plus a manifest; returns the manifest doc."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(tp.point_net, out / "point.model")
    save_model(tp.error_net, out / "abs_error.model")
    save_model(tp.density.net, out / "density.model")
    for q, net in tp.ub_nets.items():
        save_model(net, out / f"ub_q{q:.4f}.model")
    if isinstance(tp.calmap, NeuralCalibrationMap):
        save_model(tp.calmap.net, out / "bound_correction.model")
    _write_index_csv(tp.index, out / "neighbor_index.csv")
    _write_calibration_csv(tp.calmap, out / "calibration.csv")
    write_csv(tp.train_raw, out / "train.csv")
    write_csv(tp.test_raw, out / "test.csv")
    (out / "config.ini").write_text(tp.config.to_ini(), encoding="utf-8")
    bundle_doc = {
        "format": BUNDLE_FORMAT,
        "r_var": tp.r_var,
        "n_select": tp.config.n_select,
        "quantiles": [float(q) for q in sorted(tp.ub_nets)],
        "nominals": list(tp.config.nominals),
        "calibration": tp.config.calibration,
        "density": {
            "epsilon": tp.density.epsilon,
            "score_min": tp.density.score_min,
            "score_max": tp.density.score_max,
            "tertiles": list(tp.density_tertiles),
        },
        "column_names": list(tp.train_raw.column_names),
        "seeds": tp.seeds,
    }
    with open(out / "bundle.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(bundle_doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    hashes = {
        p.name: sha256_file(p)
        for p in sorted(out.iterdir())
        if p.is_file() and p.name != "manifest.json"
    }
    manifest = {
        "command": command,
        "versions": {
            "uqss": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "config": tp.config.to_ini(),
        "seeds": tp.seeds,
        "stage_seconds": tp.stage_seconds,
        "outputs": hashes,
        "inputs": {},
        "bundle_hash": bundle_hash_of(hashes),
    }
    write_manifest(out, manifest)
    return manifest


def load_bundle(bundle_dir) -> TrainedPipeline:
    """Reconstruct a TrainedPipeline from a bundle directory."""
    out = Path(bundle_dir)
    if not (out / "bundle.json").is_file():
        raise ConfigError(f"{out} is not a bundle directory (no bundle.json)")
    bundle_doc = json.loads((out / "bundle.json").read_text(encoding="utf-8"))
    if bundle_doc.get("format") != BUNDLE_FORMAT:
        raise ConfigError(f"unsupported bundle format {bundle_doc.get('format')!r}")
    cfg = PipelineConfig.from_ini((out / "config.ini").read_text(encoding="utf-8"))
    point_net = load_model(out / "point.model")
    error_net = load_model(out / "abs_error.model")
    density_net = load_model(out / "density.model")
    norm = point_net.normalizer
    if norm is None:
        raise ConfigError("bundle point net is missing its normalizer")
    names = bundle_doc["column_names"]
    train_raw = load_csv(out / "train.csv", names[-1])
    test_raw = load_csv(out / "test.csv", names[-1])
    train = norm.transform(train_raw)
    test = norm.transform(test_raw)
    index = _read_index_csv(out / "neighbor_index.csv", float(bundle_doc["r_var"]))
    calmap = _read_calibration_csv(out / "calibration.csv")
    if bundle_doc["calibration"] == "nn":
        bc_net = load_model(out / "bound_correction.model")
        calmap = NeuralCalibrationMap(
            net=bc_net,
            grid_nominal=calmap.grid_nominal,
            found_raw=calmap.found_raw,
            found=calmap.found,
        )
    ub_nets = {}
    for q in bundle_doc["quantiles"]:
        net = load_model(out / f"ub_q{q:.4f}.model")
        ub_nets[round(float(q), 6)] = net
    dens_doc = bundle_doc["density"]
    density = DensityModel(
        net=density_net,
        epsilon=float(dens_doc["epsilon"]),
        score_min=float(dens_doc["score_min"]),
        score_max=float(dens_doc["score_max"]),
    )
    return TrainedPipeline(
        config=cfg,
        train_raw=train_raw,
        test_raw=test_raw,
        train=train,
        test=test,
        normalizer=norm,
        point_net=point_net,
        error_net=error_net,
        index=index,
        density=density,
        density_tertiles=tuple(dens_doc["tertiles"]),
        calmap=calmap,
        ub_nets=ub_nets,
        r_var=float(bundle_doc["r_var"]),
        seeds=bundle_doc.get("seeds", {}),
    )


def find_bundles(paths) -> list[Path]:
    """Expand bundle dirs and multi-trial parents into a flat bundle list."""
    found: list[Path] = []
    for p in paths:
        p = Path(p)
        if (p / "bundle.json").is_file():
            found.append(p)
            continue
        trials = sorted(d for d in p.glob("trial_*") if (d / "bundle.json").is_file())
        if not trials:
            raise ConfigError(f"{p} contains no bundle")
        found.extend(trials)
    return found


def evaluate_bundles(
    tps: list[TrainedPipeline],
    test_raw: Dataset,
    nominals: tuple[float, ...],
    params: CostParams = CostParams(),
    dataset_label: str = "test",
    method: str = "similar-samples",
) -> tuple[list[dict], dict]:
    """Metrics rows (one per nominal, aggregated over bundles) plus swap stats.

    Metrics are computed in raw target units with the target range of the
    evaluation set, consistent across bundles.
    """
    rows = []
    swap_stats = {"n_swapped": 0, "n_predictions": 0}
    target_range = test_raw.target_range
    for nominal in nominals:
        trials = []
        for tp in tps:
            x = tp.normalizer.transform_features(test_raw.features)
            lo, hi, swaps = pipeline_intervals(tp, x, nominal, denormalize=True)
            swap_stats["n_swapped"] += swaps
            swap_stats["n_predictions"] += len(lo)
            intervals = IntervalSet(lower=lo, upper=hi, nominal_coverage=nominal)
            trials.append(interval_metrics(test_raw.targets, intervals, target_range, params))
        rows.append(report_row(aggregate(trials), dataset=dataset_label, method=method))
    return rows, swap_stats
