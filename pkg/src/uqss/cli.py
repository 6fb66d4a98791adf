"""Command-line surface.

Subcommands: gen, train, predict, evaluate, neighbors, density, baseline,
config.  Every artifact-producing command writes into a fresh output
directory (or file) and records a manifest hashing its outputs.  Exit codes:
0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, Dataset, SplitSpec, gen_dataset1, gen_dataset3, ingest_csv, write_csv
from .direct_baseline import BaselineConfig, run_baseline_trials
from .metrics import aggregate, report_row, write_report_csv, write_report_json
from .nnet import ModelFormatError, NetSpec, TrainingDivergedError
from .pipeline import (
    PROFILES,
    ConfigError,
    PipelineConfig,
    StageError,
    density_band,
    evaluate_bundles,
    find_bundles,
    load_bundle,
    pipeline_predict,
    quantile_pair,
    save_bundle,
    sha256_file,
    train_pipeline,
    write_manifest,
)
from .simsearch import neighbors_of, query_neighbors

GENERATORS = {"d1": gen_dataset1, "d3": gen_dataset3}
COST_NAMES = {"lube": "lube_cwc", "mid": "mid_interval", "cwfdc": "cwfdc"}


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _output_root() -> Path:
    return Path(os.environ.get("UQSS_OUTPUT_ROOT", "runs"))


def _fresh_dir(output: str | None, command: str) -> Path:
    """A new output directory; an existing path is a collision error."""
    if output:
        out = Path(output)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = _output_root() / f"{command}-{stamp}-{os.getpid()}"
    try:
        out.mkdir(parents=True, exist_ok=False)
    except FileExistsError:
        raise ConfigError(f"output directory {out} already exists") from None
    return out


def _versions() -> dict:
    import platform

    return {"uqss": __version__, "python": platform.python_version(), "numpy": np.__version__}


def _read_matrix_csv(path) -> tuple[list[str], np.ndarray]:
    """Header plus a full numeric matrix; missing or bad cells are errors here."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"unreadable file {path!s}: {exc}") from exc
    lines = [ln for ln in text.replace("\r\n", "\n").split("\n") if ln.strip() != ""]
    if len(lines) < 2:
        raise DataError(f"{path!s} has no data rows")
    header = [c.strip() for c in lines[0].split(",")]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise DataError(f"row {lineno} has {len(cells)} cells, expected {len(header)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise DataError(f"non-numeric cell in row {lineno} of {path!s}") from None
    return header, np.array(rows, dtype=np.float64)


def _features_from_csv(path, feature_names: tuple[str, ...]) -> np.ndarray:
    """Extract the bundle's feature columns by name; extra columns are ignored."""
    header, mat = _read_matrix_csv(path)
    missing = [c for c in feature_names if c not in header]
    if missing:
        raise DataError(f"{path!s} lacks feature columns {missing}")
    cols = [header.index(c) for c in feature_names]
    return mat[:, cols]


def _parse_point(text: str, n: int) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse feature vector {text!r}") from None
    if len(vals) != n:
        raise ConfigError(f"feature vector needs {n} values, got {len(vals)}")
    return np.array(vals, dtype=np.float64)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    gen = GENERATORS[args.dataset]
    d = gen(args.n, args.seed)
    if args.output:
        out = Path(args.output)
        if out.exists():
            raise ConfigError(f"output file {out} already exists")
        out.parent.mkdir(parents=True, exist_ok=True)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        root = _output_root()
        root.mkdir(parents=True, exist_ok=True)
        out = root / f"{args.dataset}-n{args.n}-seed{args.seed}-{stamp}.csv"
        if out.exists():
            raise ConfigError(f"output file {out} already exists")
    write_csv(d, out)
    manifest = {
        "command": "gen",
        "versions": _versions(),
        "args": {"dataset": args.dataset, "n": args.n, "seed": args.seed},
        "inputs": {},
        "outputs": {out.name: sha256_file(out)},
    }
    mpath = out.with_suffix(out.suffix + ".manifest.json")
    with open(mpath, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out} ({d.n_samples} rows) and {mpath.name}")
    return 0


def cmd_train(args) -> int:
    cfg = PipelineConfig.from_ini_file(args.config)
    out = _fresh_dir(args.output, "train")
    try:
        if cfg.trials == 1:
            tp = train_pipeline(cfg)
            manifest = save_bundle(tp, out)
            _print_stage_summary(tp, out)
            print(f"bundle hash {manifest['bundle_hash']}")
        else:
            child_hashes = {}
            for trial in range(cfg.trials):
                tp = train_pipeline(cfg, base_seed=cfg.base_seed + trial)
                tdir = out / f"trial_{trial:03d}"
                manifest = save_bundle(tp, tdir)
                child_hashes[tdir.name] = manifest["bundle_hash"]
                print(f"trial {trial}: bundle hash {manifest['bundle_hash']}")
            write_manifest(
                out,
                {
                    "command": "train",
                    "versions": _versions(),
                    "config": cfg.to_ini(),
                    "trials": cfg.trials,
                    "outputs": child_hashes,
                    "inputs": {Path(args.config).name: sha256_file(args.config)},
                },
            )
    except StageError as exc:
        _quarantine(out)
        print(f"error: {exc}", file=sys.stderr)
        print(f"partial outputs moved to {out / 'failed'}", file=sys.stderr)
        return 1
    print(f"bundle written to {out}")
    return 0


def _quarantine(out: Path) -> None:
    failed = out / "failed"
    failed.mkdir(exist_ok=True)
    for item in list(out.iterdir()):
        if item.name != "failed":
            shutil.move(str(item), str(failed / item.name))


def _print_stage_summary(tp, out: Path) -> None:
    for stage, seconds in tp.stage_seconds.items():
        print(f"  {stage}: {seconds:.2f}s")
    print(f"  variance ratio {tp.r_var:.4f}; quantiles {sorted(tp.ub_nets)}")


def cmd_predict(args) -> int:
    bundles = find_bundles([args.bundle])
    tp = load_bundle(bundles[0])
    features = _features_from_csv(args.input, tp.train_raw.feature_names)
    result = pipeline_predict(tp, features, args.nominal)
    out = _fresh_dir(args.output, "predict")
    table = out / "intervals.csv"
    names = tp.train_raw.feature_names
    with open(table, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + ",lower,upper,point_prediction,density\n")
        for i in range(features.shape[0]):
            cells = [repr(float(v)) for v in features[i]]
            cells += [
                repr(float(result["lower"][i])),
                repr(float(result["upper"][i])),
                repr(float(result["point"][i])),
                repr(float(result["density"][i])),
            ]
            fh.write(",".join(cells) + "\n")
    outputs = {table.name: sha256_file(table)}
    if not args.no_figures:
        from .plots import interval_figure

        fig = interval_figure(
            features[:, 0],
            None,
            result["lower"],
            result["upper"],
            out / "intervals.png",
            point=result["point"],
            xlabel=names[0],
            title=f"predicted intervals at nominal {args.nominal}",
        )
        outputs["intervals.png"] = sha256_file(fig)
    write_manifest(
        out,
        {
            "command": "predict",
            "versions": _versions(),
            "args": {"nominal": args.nominal, "input": str(args.input), "bundle": str(args.bundle)},
            "inputs": {Path(args.input).name: sha256_file(args.input)},
            "outputs": outputs,
            "swap_repairs": result["n_swapped"],
            "n_predictions": int(features.shape[0]),
        },
    )
    print(
        f"wrote {table} ({features.shape[0]} rows, {result['n_swapped']} bound swaps repaired)"
    )
    return 0


def cmd_evaluate(args) -> int:
    bundle_dirs = find_bundles(args.bundles)
    tps = [load_bundle(b) for b in bundle_dirs]
    if args.test:
        test_raw, _ = ingest_csv(args.test, tps[0].train_raw.target_name)
    else:
        test_raw = tps[0].test_raw
    nominals = tuple(args.nominals) if args.nominals else tuple(tps[0].config.nominals)
    rows, swap_stats = evaluate_bundles(tps, test_raw, nominals)
    out = _fresh_dir(args.output, "evaluate")
    write_report_csv(rows, out / "report.csv")
    write_report_json(rows, out / "report.json")
    outputs = {name: sha256_file(out / name) for name in ("report.csv", "report.json")}
    if not args.no_figures:
        from .plots import calibration_figure, interval_figure

        cal = tps[0].calmap
        fig = calibration_figure(
            cal.grid_nominal, cal.found_raw, cal.found, out / "calibration.png"
        )
        outputs["calibration.png"] = sha256_file(fig)
        for nominal in nominals:
            x = tps[0].normalizer.transform_features(test_raw.features)
            from .pipeline import pipeline_intervals

            lo, hi, _ = pipeline_intervals(tps[0], x, nominal, denormalize=True)
            name = f"intervals-{nominal:g}.png"
            fig = interval_figure(
                test_raw.features[:, 0],
                test_raw.targets,
                lo,
                hi,
                out / name,
                xlabel=test_raw.feature_names[0],
                title=f"held-out intervals at nominal {nominal:g}",
            )
            outputs[name] = sha256_file(fig)
    write_manifest(
        out,
        {
            "command": "evaluate",
            "versions": _versions(),
            "args": {
                "bundles": [str(b) for b in bundle_dirs],
                "nominals": list(nominals),
                "test": str(args.test) if args.test else "(bundle test split)",
            },
            "inputs": {Path(args.test).name: sha256_file(args.test)} if args.test else {},
            "outputs": outputs,
            "swap_repairs": swap_stats["n_swapped"],
            "n_predictions": swap_stats["n_predictions"],
        },
    )
    for row in rows:
        print(
            f"nominal {row['nominal']:g}: PINAW {row['mu_pinaw']:.4f} "
            f"PICP {row['mu_picp']:.4f} (sigma {row['sigma_picp']:.4f}) "
            f"PINAFD {row['mu_pinafd']:.4f} CWC {row['mu_cwc']:.4f} CWFDC {row['mu_cwfdc']:.4f}"
        )
    print(f"report written to {out}")
    return 0


def cmd_neighbors(args) -> int:
    tp = load_bundle(find_bundles([args.bundle])[0])
    if (args.anchor is None) == (args.point is None):
        raise ConfigError("give exactly one of --anchor or --point")
    if args.anchor is not None:
        table = neighbors_of(tp.index, tp.train, args.anchor)
        anchor_norm = tp.train.features[args.anchor]
    else:
        raw = _parse_point(args.point, tp.train.n_inputs)
        anchor_norm = tp.normalizer.transform_features(raw)
        table = query_neighbors(
            tp.point_net, tp.error_net, tp.train, anchor_norm, tp.index.n_select, tp.r_var
        )
    out = _fresh_dir(args.output, "neighbors")
    names = tp.train_raw.feature_names
    feats_raw = tp.normalizer.inverse_features(table.features)
    targs_raw = tp.normalizer.inverse_targets(table.targets)
    path = out / "neighbors.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rank,neighbor_index,deviation," + ",".join(names) + ",target\n")
        for rank in range(len(table.neighbor_ids)):
            cells = [
                str(rank),
                str(int(table.neighbor_ids[rank])),
                repr(float(table.deviations[rank])),
            ]
            cells += [repr(float(v)) for v in feats_raw[rank]]
            cells.append(repr(float(targs_raw[rank])))
            fh.write(",".join(cells) + "\n")
    outputs = {path.name: sha256_file(path)}
    cols = _plot_columns(args.plot_cols, names)
    if cols is not None:
        cx, cy = cols
        pd_path = out / "plotdata.csv"
        with open(pd_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{names[cx]},{names[cy] if cy < len(names) else 'target'},target\n")
            for rank in range(feats_raw.shape[0]):
                second = feats_raw[rank, cy] if cy < len(names) else targs_raw[rank]
                fh.write(
                    f"{float(feats_raw[rank, cx])!r},{float(second)!r},{float(targs_raw[rank])!r}\n"
                )
        outputs[pd_path.name] = sha256_file(pd_path)
    if not args.no_figures:
        from .plots import neighbors_figure

        anchor_raw = tp.normalizer.inverse_features(anchor_norm)
        all_raw = tp.train_raw.features
        if tp.train.n_inputs == 1:
            # single input: plot input vs target, anchor at its known/predicted target
            if args.anchor is not None:
                anchor_y = float(tp.normalizer.inverse_targets(tp.train.targets[args.anchor]))
            else:
                from .nnet import predict as net_predict

                anchor_y = float(
                    tp.normalizer.inverse_targets(net_predict(tp.point_net, anchor_norm)[0])
                )
            fig = neighbors_figure(
                np.array([anchor_raw[0], anchor_y]),
                np.column_stack([feats_raw[:, 0], targs_raw]),
                np.column_stack([all_raw[:, 0], tp.train_raw.targets]),
                out / "neighbors.png",
                xlabel=names[0],
                ylabel="target",
            )
        else:
            cx, cy = cols if cols is not None else (0, 1)
            cy = min(cy, tp.train.n_inputs - 1)
            fig = neighbors_figure(
                anchor_raw[[cx, cy]],
                feats_raw[:, [cx, cy]],
                all_raw[:, [cx, cy]],
                out / "neighbors.png",
                xlabel=names[cx],
                ylabel=names[cy],
            )
        outputs["neighbors.png"] = sha256_file(fig)
    write_manifest(
        out,
        {
            "command": "neighbors",
            "versions": _versions(),
            "args": {"bundle": str(args.bundle), "anchor": args.anchor, "point": args.point},
            "inputs": {},
            "outputs": outputs,
        },
    )
    print(f"wrote {path} ({len(table.neighbor_ids)} neighbors)")
    return 0


def _plot_columns(spec: str | None, names: tuple[str, ...]):
    if not spec:
        return None
    parts = [p.strip() for p in spec.split(",")]
    if len(parts) != 2:
        raise ConfigError("--plot-cols needs two comma-separated column names")
    cols = []
    for p in parts:
        if p not in names:
            raise ConfigError(f"unknown plot column {p!r}")
        cols.append(names.index(p))
    return tuple(cols)


def cmd_density(args) -> int:
    tp = load_bundle(find_bundles([args.bundle])[0])
    raw = _parse_point(args.point, tp.train.n_inputs)
    x = tp.normalizer.transform_features(raw)
    score = float(tp.density.predict(x[None, :])[0, 0])
    band = density_band(tp, score)
    out = _fresh_dir(args.output, "density")
    doc = {"point": raw.tolist(), "density": score, "band": band}
    path = out / "density.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_manifest(
        out,
        {
            "command": "density",
            "versions": _versions(),
            "args": {"bundle": str(args.bundle), "point": args.point},
            "inputs": {},
            "outputs": {path.name: sha256_file(path)},
        },
    )
    print(f"density {score:.4f} ({band})")
    return 0


def cmd_baseline(args) -> int:
    if args.config:
        cfg = PipelineConfig.from_ini_file(args.config)
    else:
        cfg = PipelineConfig()
    from .pipeline import resolve_dataset

    data = resolve_dataset(cfg)
    profile = PROFILES[args.profile]
    spec = NetSpec(
        input_dim=data.n_inputs, hidden_layers=profile.baseline_hidden, output_dim=2, seed=args.seed
    )
    bcfg = BaselineConfig(
        net=spec,
        cost_kind=COST_NAMES[args.cost],
        pretrain_epochs=profile.pretrain_epochs,
        finetune_epochs=profile.finetune_epochs,
        pretrain_lr=profile.pretrain_lr,
        finetune_lr=profile.finetune_lr,
        sigmoid_sharpness=profile.baseline_sharpness,
        seed=args.seed,
    )
    trials = args.trials if args.trials else profile.baseline_trials
    split_spec = SplitSpec(cfg.train_fraction, cfg.split_seed, cfg.shuffle)
    results, nets, swap_stats = run_baseline_trials(data, args.nominal, bcfg, trials, split_spec)
    label = cfg.generator if cfg.source == "generator" else Path(cfg.csv_path).name
    rows = [report_row(aggregate(results), dataset=label, method=f"direct-{args.cost}")]
    out = _fresh_dir(args.output, "baseline")
    write_report_csv(rows, out / "report.csv")
    write_report_json(rows, out / "report.json")
    outputs = {name: sha256_file(out / name) for name in ("report.csv", "report.json")}
    if not args.no_figures:
        from .plots import cost_trace_figure

        fig = cost_trace_figure(nets[0].cost_trace, out / "cost_trace.png")
        outputs["cost_trace.png"] = sha256_file(fig)
    write_manifest(
        out,
        {
            "command": "baseline",
            "versions": _versions(),
            "args": {
                "cost": args.cost,
                "nominal": args.nominal,
                "trials": trials,
                "profile": args.profile,
                "seed": args.seed,
            },
            "inputs": {Path(args.config).name: sha256_file(args.config)} if args.config else {},
            "outputs": outputs,
            "swap_repairs": swap_stats["n_swapped"],
            "n_predictions": swap_stats["n_predictions"],
        },
    )
    row = rows[0]
    print(
        f"{label} nominal {args.nominal:g} ({trials} trials): "
        f"PINAW {row['mu_pinaw']:.4f} PICP {row['mu_picp']:.4f} "
        f"(sigma {row['sigma_picp']:.4f}) CWFDC {row['mu_cwfdc']:.4f}"
    )
    print(f"report written to {out}")
    return 0


def cmd_config(args) -> int:
    if args.dump_defaults:
        print(PipelineConfig().to_ini(), end="")
        return 0
    if args.validate:
        PipelineConfig.from_ini_file(args.validate)
        print(f"{args.validate}: valid")
        return 0
    raise ConfigError("config needs --dump-defaults or --validate PATH")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqss",
        description="Similarity- and sensitivity-based prediction intervals for regression.",
    )
    parser.add_argument("--version", action="version", version=f"uqss {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    p.add_argument("--dataset", choices=sorted(GENERATORS), required=True)
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="output CSV path (must not exist)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a full pipeline bundle from a config file")
    p.add_argument("config", help="INI config path (see: uqss config --dump-defaults)")
    p.add_argument("--output", help="bundle directory (must not exist)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict intervals for a feature CSV")
    p.add_argument("bundle", help="trained bundle directory")
    p.add_argument("input", help="CSV with the bundle's feature columns")
    p.add_argument("--nominal", type=float, default=0.9)
    p.add_argument("--output", help="output directory (must not exist)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="evaluate one or more bundles on test data")
    p.add_argument("bundles", nargs="+", help="bundle directories (trials aggregate)")
    p.add_argument("--test", help="test CSV; defaults to the bundle's stored test split")
    p.add_argument("--nominals", type=float, nargs="+")
    p.add_argument("--output", help="output directory (must not exist)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("neighbors", help="inspect the similar samples of an anchor")
    p.add_argument("bundle")
    p.add_argument("--anchor", type=int, help="row index in the bundle's train split")
    p.add_argument("--point", help="comma-separated raw feature vector")
    p.add_argument("--plot-cols", help="two feature columns for the plot-data export")
    p.add_argument("--output", help="output directory (must not exist)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("density", help="sample-density score for a feature vector")
    p.add_argument("bundle")
    p.add_argument("--point", required=True, help="comma-separated raw feature vector")
    p.add_argument("--output", help="output directory (must not exist)")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("baseline", help="cost-function direct interval baseline")
    p.add_argument("--config", help="INI config for the dataset/split (defaults: d1, N=2000)")
    p.add_argument("--cost", choices=sorted(COST_NAMES), default="cwfdc")
    p.add_argument("--nominal", type=float, default=0.9)
    p.add_argument("--trials", type=int, help="default: profile trial count")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="output directory (must not exist)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("config", help="configuration helpers")
    p.add_argument("--dump-defaults", action="store_true", help="print the default config INI")
    p.add_argument("--validate", help="parse a config file and report problems")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(str(exc), 2)
    except (DataError, ModelFormatError, TrainingDivergedError, StageError) as exc:
        return _fail(str(exc), 1)
    except ValueError as exc:
        return _fail(str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
