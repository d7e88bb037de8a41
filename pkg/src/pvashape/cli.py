"""Command-line orchestration of the pipeline.

Every command reads and writes the documented JSON/NDJSON artifacts and
drops a manifest next to its primary output (the manifest carries the
config snapshot, paths, stage timings and versions; timings live only
there so the artifacts themselves stay byte-reproducible). Exit codes:
0 success, 1 usage error, 2 data or validation error, 3 training
divergence.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .core import (Config, STREAM_SPLIT, STREAM_TRAIN, SeededRng,
                   ValidationError, config_hash, load_dataset, save_dataset)
from .discovery import discover, load_pool, save_pool
from .augment import balance_dataset
from .distance import ShapeletLengthError
from .explain import build_explain_report, emit_plot_data
from .features import (apply_scaler, fit_scaler, load_features, save_features,
                       transform_dataset)
from .model import (ModelCheckpoint, TrainingDivergedError, load_checkpoint,
                    save_checkpoint, train, tune_k)
from .pipeline import SynthConfig, generate_synthetic, split, subset_channels
from . import workflow

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this CLI reserves 2 for data
    errors, so usage problems are remapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_code_with(message))

    def exit_code_with(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_USAGE


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None, help="number of perceptually important points")
    p.add_argument("--g", type=int, default=None, help="shapelet pool size")
    p.add_argument("--rsa", type=int, default=None, help="augmented copies per minority instance")
    p.add_argument("--sigma-scale", type=float, default=None, help="noise std scale")
    p.add_argument("--logsig-depth", type=int, default=None)
    p.add_argument("--channels", default=None, help="comma-separated channel indices, e.g. 0,1")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--no-augment", action="store_true", help="ablate augmentation")
    p.add_argument("--no-shapelet-features", action="store_true",
                   help="ablate shapelet distance features")
    p.add_argument("--folds", type=int, default=None, help="cross-validation folds")


def build_config(args) -> Config:
    cfg = Config()
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = Config.from_dict({**cfg.to_dict(), **json.load(fh)})
    updates = {}
    for flag, field in [("seed", "seed"), ("k", "k"), ("g", "g"), ("rsa", "r_sa"),
                        ("sigma_scale", "noise_sigma_scale"),
                        ("logsig_depth", "logsig_depth"), ("threads", "threads"),
                        ("folds", "folds")]:
        value = getattr(args, flag, None)
        if value is not None:
            updates[field] = value
    channels = getattr(args, "channels", None)
    if channels is not None:
        try:
            updates["channel_subset"] = tuple(int(c) for c in str(channels).split(",") if c != "")
        except ValueError:
            raise ValidationError(f"bad --channels value: {channels!r}") from None
    if getattr(args, "no_augment", False):
        updates["use_augment"] = False
    if getattr(args, "no_shapelet_features", False):
        updates["use_shapelet_features"] = False
    return cfg.with_updates(**updates) if updates else cfg


def write_manifest(path, command: str, cfg: Config, inputs: dict, outputs: dict,
                   timings: dict) -> None:
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "timings_s": timings,
        "versions": {"pvashape": __version__,
                     "python": platform.python_version(),
                     "numpy": np.__version__},
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _write_json(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_pool_for(checkpoint: ModelCheckpoint, ckpt_path: str, pool_arg):
    """Pool from --pool, else from the checkpoint's recorded path (tried
    as-is, then relative to the checkpoint's directory)."""
    if pool_arg:
        return load_pool(pool_arg)
    if checkpoint.pool_path:
        if os.path.exists(checkpoint.pool_path):
            return load_pool(checkpoint.pool_path)
        sibling = os.path.join(os.path.dirname(os.path.abspath(ckpt_path)),
                               os.path.basename(checkpoint.pool_path))
        if os.path.exists(sibling):
            return load_pool(sibling)
    return None


def _parse_proportions(raw):
    if raw is None:
        return None
    props = json.loads(raw)
    if not isinstance(props, dict):
        raise ValidationError("--proportions must be a JSON object of class -> fraction")
    return {str(k): float(v) for k, v in props.items()}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = build_config(args)
    t0 = time.perf_counter()
    synth = SynthConfig(n_instances=args.n, class_proportions=_parse_proportions(args.proportions),
                        noise=args.noise, seed=cfg.seed, t=args.t)
    ds = generate_synthetic(synth)
    if cfg.channel_subset is not None:
        ds = subset_channels(ds, cfg.channel_subset)
    save_dataset(args.out, ds)
    write_manifest(f"{args.out}.manifest.json", "synth", cfg, {}, {"data": args.out},
                   {"synth": round(time.perf_counter() - t0, 6)})
    print(f"wrote {len(ds)} instances to {args.out}")
    return EXIT_OK


def cmd_discover(args) -> int:
    cfg = build_config(args)
    ds = load_dataset(args.data)
    ds = workflow.align_channels(ds, cfg)
    t0 = time.perf_counter()
    pool = discover(ds, cfg)
    save_pool(args.out, pool)
    write_manifest(f"{args.out}.manifest.json", "discover", cfg,
                   {"data": args.data}, {"pool": args.out},
                   {"discover": round(time.perf_counter() - t0, 6)})
    print(f"wrote pool of {len(pool)} shapelets to {args.out}")
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = build_config(args)
    ds = load_dataset(args.data)
    pool = load_pool(args.pool)
    t0 = time.perf_counter()
    out = balance_dataset(ds, pool, cfg)
    save_dataset(args.out, out)
    write_manifest(f"{args.out}.manifest.json", "augment", cfg,
                   {"data": args.data, "pool": args.pool}, {"data": args.out},
                   {"augment": round(time.perf_counter() - t0, 6)})
    print(f"wrote {len(out)} instances ({len(out) - len(ds)} augmented) to {args.out}")
    return EXIT_OK


def cmd_transform(args) -> int:
    cfg = build_config(args)
    ds = load_dataset(args.data)
    pool = load_pool(args.pool) if args.pool else None
    if cfg.use_shapelet_features and pool is None:
        raise ValidationError("shapelet features enabled but no --pool given "
                              "(pass --no-shapelet-features for statistics only)")
    t0 = time.perf_counter()
    z, ids, labels = transform_dataset(ds, pool, cfg.logsig_depth,
                                       include_shapelets=cfg.use_shapelet_features,
                                       znorm=cfg.znorm, threads=cfg.threads)
    save_features(args.out, z, ids, labels)
    write_manifest(f"{args.out}.manifest.json", "transform", cfg,
                   {"data": args.data, "pool": args.pool or ""},
                   {"features": args.out},
                   {"transform": round(time.perf_counter() - t0, 6)})
    print(f"wrote {z.shape[0]} x {z.shape[1]} feature matrix to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = build_config(args)
    z_tr, _, labels_tr = load_features(args.train_features)
    z_va, _, labels_va = load_features(args.val_features)
    t0 = time.perf_counter()
    scaler = fit_scaler(z_tr)
    ckpt = train(apply_scaler(z_tr, scaler), labels_tr,
                 apply_scaler(z_va, scaler), labels_va,
                 cfg, SeededRng(cfg.seed).derive(STREAM_TRAIN), scaler=scaler,
                 pool_path=args.pool)
    save_checkpoint(args.out, ckpt)
    write_manifest(f"{args.out}.manifest.json", "train", cfg,
                   {"train_features": args.train_features,
                    "val_features": args.val_features},
                   {"checkpoint": args.out},
                   {"train": round(time.perf_counter() - t0, 6)})
    print(f"best epoch {ckpt.best_epoch}, validation macro-F1 "
          f"{ckpt.best_val_macro_f1:.4f}; wrote {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    pool = _load_pool_for(ckpt, args.checkpoint, args.pool)
    t0 = time.perf_counter()
    report = workflow.evaluate_on(ckpt, ds, pool, threads=cfg.threads)
    _write_json(args.out, report.to_dict())
    write_manifest(f"{args.out}.manifest.json", "evaluate", ckpt.config,
                   {"data": args.data, "checkpoint": args.checkpoint},
                   {"metrics": args.out},
                   {"evaluate": round(time.perf_counter() - t0, 6)})
    print(f"accuracy {report.accuracy:.4f}, macro-F1 {report.macro_f1:.4f}; wrote {args.out}")
    return EXIT_OK


def cmd_tune_k(args) -> int:
    cfg = build_config(args)
    ds = load_dataset(args.data)
    ds = workflow.align_channels(ds, cfg)
    t0 = time.perf_counter()
    result = tune_k(ds, cfg, folds=args.folds)
    _write_json(args.out, result.to_dict())
    write_manifest(f"{args.out}.manifest.json", "tune-k", cfg,
                   {"data": args.data}, {"tuning": args.out},
                   {"tune_k": round(time.perf_counter() - t0, 6)})
    print(f"best k = {result.best_k}; wrote {args.out}")
    return EXIT_OK


def cmd_explain(args) -> int:
    build_config(args)
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    ds = workflow.align_channels(ds, ckpt.config)
    pool = _load_pool_for(ckpt, args.checkpoint, args.pool)
    if pool is None:
        raise ValidationError("explain requires a shapelet pool (--pool or a "
                              "checkpoint with a recorded pool path)")
    t0 = time.perf_counter()
    report = build_explain_report(ds, ckpt, pool, all_classes=args.all_classes,
                                  instance_id=args.instance)
    _write_json(args.out, report)
    outputs = {"report": args.out}
    if args.plot_data:
        emit_plot_data(report, args.plot_data)
        outputs["plot_data"] = args.plot_data
    write_manifest(f"{args.out}.manifest.json", "explain", ckpt.config,
                   {"data": args.data, "checkpoint": args.checkpoint}, outputs,
                   {"explain": round(time.perf_counter() - t0, 6)})
    print(f"explained {len(report['instances'])} instance(s); wrote {args.out}")
    return EXIT_OK


def cmd_run_all(args) -> int:
    cfg = build_config(args)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, fname) for name, fname in [
        ("data", "data.ndjson"), ("train", "train.ndjson"), ("val", "val.ndjson"),
        ("pool", "pool.json"), ("train_aug", "train_aug.ndjson"),
        ("features_train", "features_train.ndjson"),
        ("features_val", "features_val.ndjson"),
        ("checkpoint", "checkpoint.json"), ("metrics", "metrics.json"),
    ]}
    timings: dict = {}

    t0 = time.perf_counter()
    synth = SynthConfig(n_instances=args.n, class_proportions=_parse_proportions(args.proportions),
                        noise=args.noise, seed=cfg.seed, t=args.t)
    ds = generate_synthetic(synth)
    if cfg.channel_subset is not None:
        ds = subset_channels(ds, cfg.channel_subset)
    save_dataset(paths["data"], ds)
    timings["synth"] = round(time.perf_counter() - t0, 6)

    t0 = time.perf_counter()
    train_ds, val_ds = split(ds, args.train_fraction,
                             SeededRng(cfg.seed).derive(STREAM_SPLIT))
    save_dataset(paths["train"], train_ds)
    save_dataset(paths["val"], val_ds)
    timings["split"] = round(time.perf_counter() - t0, 6)

    # Record the pool as a sibling name so the checkpoint bytes do not
    # depend on the output directory; evaluate resolves it next to the
    # checkpoint file.
    result = workflow.fit(train_ds, val_ds, cfg,
                          pool_path=os.path.basename(paths["pool"]),
                          timings=timings)

    outputs = {k: paths[k] for k in ("data", "train", "val", "checkpoint", "metrics")}
    if result.pool is not None:
        save_pool(paths["pool"], result.pool)
        outputs["pool"] = paths["pool"]
    if cfg.use_augment and len(result.train_full) != len(train_ds):
        save_dataset(paths["train_aug"], result.train_full)
        outputs["train_aug"] = paths["train_aug"]
    save_features(paths["features_train"], result.z_train_raw, result.train_ids,
                  result.train_labels)
    save_features(paths["features_val"], result.z_val_raw, result.val_ids,
                  result.val_labels)
    outputs["features_train"] = paths["features_train"]
    outputs["features_val"] = paths["features_val"]
    save_checkpoint(paths["checkpoint"], result.checkpoint)
    _write_json(paths["metrics"], result.report.to_dict())

    write_manifest(os.path.join(out_dir, "manifest.json"), "run-all", cfg, {},
                   outputs, timings)
    r = result.report
    per_class = " ".join(f"{lab}={r.per_class_f1[lab]:.3f}" for lab in r.classes)
    print(f"accuracy {r.accuracy:.4f}, macro-F1 {r.macro_f1:.4f}, per-class F1: {per_class}")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="pvashape",
                     description="Shapelet-based ventilator-asynchrony pipeline")
    parser.add_argument("--version", action="version", version=f"pvashape {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, parents=[], add_help=True)
        _config_flags(p)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic labeled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--proportions", default=None, help="JSON object class -> fraction")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--t", type=int, default=150)

    p = add("discover", cmd_discover, "extract a shapelet pool from a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = add("augment", cmd_augment, "rebalance minority classes with guided noise")
    p.add_argument("--data", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)

    p = add("transform", cmd_transform, "compute feature vectors")
    p.add_argument("--data", required=True)
    p.add_argument("--pool", default=None)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the classification head on features")
    p.add_argument("--train-features", required=True)
    p.add_argument("--val-features", required=True)
    p.add_argument("--pool", default=None, help="pool path recorded in the checkpoint")
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "score a dataset with a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pool", default=None)
    p.add_argument("--out", required=True)

    p = add("tune-k", cmd_tune_k, "cross-validated search over the k grid")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = add("explain", cmd_explain, "per-instance shapelet match evidence")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pool", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--instance", default=None, help="explain a single instance id")
    p.add_argument("--all-classes", action="store_true",
                   help="report matches for every class, not just the predicted one")
    p.add_argument("--plot-data", default=None, help="also write plot-ready NDJSON here")

    p = add("run-all", cmd_run_all, "synth, discover, augment, transform, train, evaluate")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--proportions", default=None)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--t", type=int, default=150)
    p.add_argument("--train-fraction", type=float, default=0.8)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        return EXIT_OK if exc.code is None else EXIT_USAGE
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"pvashape: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValidationError, ShapeletLengthError) as exc:
        print(f"pvashape: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"pvashape: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"pvashape: bad JSON input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        print(f"pvashape: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
