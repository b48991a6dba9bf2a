"""Command-line interface.

Commands: ``synth`` (generate a synthetic dataset plus a runnable config),
``features`` (STFT caches and per-fold standardizers), ``train``, ``eval``,
and ``predict``.  Exit codes are stable for scripting: 0 success, 2 usage
error, 3 data error, 4 numeric divergence.

The effective configuration is echoed to stderr at startup so every run is
auditable; command results go to stdout.
"""

import argparse
import json
import sys
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .audio import read_wav
from .config import load_run_config, write_run_config
from .data import load_manifest, make_batch
from .dsp import (
    Spectrogram,
    StandardizerAccumulator,
    apply_standardizer,
    load_feature_cache,
    load_standardizer,
    save_feature_cache,
    save_standardizer,
    stft_magnitude,
    stft_params,
)
from .errors import (
    DivergenceError,
    ManifestError,
    MaskpoolError,
    TooShortError,
)
from .metrics import (
    ConfusionMatrix,
    EerResult,
    per_class_accuracy,
    write_class_report_csv,
    write_summary_json,
)
from .network import NetworkModel, format_parameter_table
from .numerics import Rng
from .reference import reference_forward_unpadded
from .training import TrainSettings, train_loop

DATA_ERROR_EXIT = 3
DIVERGENCE_EXIT = 4


def _echo_config(cfg):
    print("effective config:", file=sys.stderr)
    print(cfg.echo(), file=sys.stderr)


def _cache_path(features_dir: Path, entry_path: str) -> Path:
    tag = zlib.crc32(entry_path.encode("utf-8")) & 0xFFFFFFFF
    return features_dir / f"{Path(entry_path).stem}_{tag:08x}.mpfc"


def _standardizer_path(features_dir: Path, fold: int) -> Path:
    return features_dir / f"standardizer_fold{fold}.mpsd"


def _load_fold_features(cfg, manifest, entries):
    feats = []
    for entry in entries:
        cache = _cache_path(Path(cfg.paths.features_dir), entry.path)
        if not cache.exists():
            raise ManifestError(
                f"feature cache {cache} is missing; run 'maskpool features --config ...' first"
            )
        feats.append(load_feature_cache(cache))
    return feats


def _dataset(cfg, manifest, entries, standardizer):
    feats = _load_fold_features(cfg, manifest, entries)
    return [(apply_standardizer(standardizer, f), manifest.target_for(e))
            for f, e in zip(feats, entries)]


def _predict_proba_dataset(model, features, batch_size):
    out = np.empty((len(features), model.config.num_classes))
    for start in range(0, len(features), batch_size):
        chunk = features[start:start + batch_size]
        batch = make_batch([(f, 0) for f in chunk], min_frames=model.min_input_frames)
        out[start:start + len(chunk)] = model.predict_proba(batch.x, batch.mask.valid)
    return out


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    from .synth import synth_dataset

    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    out_dir = Path(args.out)
    task = "single" if args.task == "scene" else "multi"
    manifest = synth_dataset(
        out_dir, classes, task=task, n_per_class=args.n_per_class,
        duration_s=args.duration_s, fs=args.fs, seed=args.seed,
        num_folds=args.num_folds, noise_floor=args.noise_floor,
    )
    n_fft, _ = stft_params(args.fs)
    config = {
        "task": args.task,
        "num_folds": args.num_folds,
        "paths": {
            "manifest": "manifest.csv",
            "classes": "classes.txt",
            "features_dir": "features",
            "checkpoint_dir": "checkpoints",
            "report_dir": "reports",
        },
        "network": {
            "input_bins": n_fft // 2 + 1,
            "num_classes": len(manifest.class_names),
        },
        "training": {"seed": args.seed},
    }
    write_run_config(out_dir / "config.json", config)
    print(f"wrote {len(manifest.entries)} clips, manifest, classes, and config under {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# features

def cmd_features(args) -> int:
    cfg = load_run_config(args.config)
    _echo_config(cfg)
    manifest = load_manifest(cfg.paths.manifest, cfg.paths.classes,
                             cfg.manifest_task, cfg.num_folds)
    features_dir = Path(cfg.paths.features_dir)
    features_dir.mkdir(parents=True, exist_ok=True)

    failures = []
    sample_rate = None
    for entry in manifest.entries:
        try:
            clip = read_wav(entry.path)
            spec = stft_magnitude(clip, cfg.dsp.window_ms, cfg.dsp.hop_ms)
            if spec.bins != cfg.network.input_bins:
                raise ManifestError(
                    f"{entry.path}: {spec.bins} bins from a {clip.sample_rate} Hz clip, "
                    f"but config expects {cfg.network.input_bins}"
                )
            save_feature_cache(_cache_path(features_dir, entry.path), spec.mag)
            sample_rate = clip.sample_rate
        except MaskpoolError as exc:
            failures.append((entry.path, str(exc)))
    if failures:
        for path, message in failures:
            print(f"error: {path}: {message}", file=sys.stderr)
        print(f"{len(failures)} of {len(manifest.entries)} files failed", file=sys.stderr)
        return DATA_ERROR_EXIT

    n_fft, hop = stft_params(sample_rate, cfg.dsp.window_ms, cfg.dsp.hop_ms)
    folds = [args.fold] if args.fold is not None else list(range(1, cfg.num_folds + 1))
    for fold in folds:
        train_entries, _ = manifest.fold_split(fold)
        acc = StandardizerAccumulator(cfg.network.input_bins)
        for entry in train_entries:
            acc.add(Spectrogram(load_feature_cache(_cache_path(features_dir, entry.path))))
        std = acc.finalize()
        save_standardizer(
            _standardizer_path(features_dir, fold), std,
            metadata={"n_fft": n_fft, "hop": hop, "fold": fold,
                      "window_ms": cfg.dsp.window_ms, "hop_ms": cfg.dsp.hop_ms},
        )
    print(f"cached {len(manifest.entries)} feature files and "
          f"{len(folds)} standardizer(s) under {features_dir}")
    return 0


# ---------------------------------------------------------------------------
# train

def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.training.seed = args.seed
    if args.max_epochs is not None:
        cfg.training.max_epochs = args.max_epochs
    _echo_config(cfg)

    if args.dry_run:
        model = NetworkModel.build(cfg.network, Rng(cfg.training.seed).child("init"))
        print(format_parameter_table(cfg.network))
        print(f"checkpoint would hold {model.count_parameters():,} trainable values")
        return 0

    manifest = load_manifest(cfg.paths.manifest, cfg.paths.classes,
                             cfg.manifest_task, cfg.num_folds)
    train_entries, val_entries = manifest.fold_split(args.fold)
    standardizer, _ = load_standardizer(
        _standardizer_path(Path(cfg.paths.features_dir), args.fold))
    train_set = _dataset(cfg, manifest, train_entries, standardizer)
    val_set = _dataset(cfg, manifest, val_entries, standardizer)

    crop_enabled = cfg.task == "scene"
    crop_max = cfg.crop.max_frames
    if crop_enabled and crop_max is None:
        crop_max = max(f.shape[0] for f, _ in train_set)
    settings = TrainSettings(
        batch_size=cfg.training.batch_size,
        lr=cfg.training.lr,
        weight_decay=cfg.training.weight_decay,
        max_epochs=cfg.training.max_epochs,
        min_delta=cfg.training.min_delta,
        patience_lr=cfg.training.patience_lr,
        patience_stop=cfg.training.patience_stop,
        lr_floor=cfg.training.lr_floor,
        crop_min=cfg.crop.min_frames if crop_enabled else None,
        crop_max=crop_max if crop_enabled else None,
        seed=cfg.training.seed,
        deterministic=args.deterministic,
    )
    model = NetworkModel.build(cfg.network, Rng(cfg.training.seed).child("init"))
    checkpoint_dir = Path(cfg.paths.checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = checkpoint_dir / f"fold{args.fold}.mpnw"
    log_path = checkpoint_dir / f"fold{args.fold}.log.jsonl"
    with open(log_path, "w") as log_fh:
        result = train_loop(model, train_set, val_set, settings,
                            log_fh=log_fh, checkpoint_path=checkpoint_path)
    print(f"best validation loss {result.best_val_loss:.6f} at epoch {result.best_epoch} "
          f"({len(result.history)} epochs run)")
    print(f"checkpoint: {checkpoint_path}")
    print(f"log: {log_path}")
    return 0


# ---------------------------------------------------------------------------
# eval

def _eval_fold(cfg, manifest, fold, checkpoint_path, verify_limit):
    model = NetworkModel.load(checkpoint_path)
    model.check_compatible(cfg.network.input_bins, cfg.network.num_classes)
    standardizer, _ = load_standardizer(
        _standardizer_path(Path(cfg.paths.features_dir), fold))
    _, val_entries = manifest.fold_split(fold)
    dataset = _dataset(cfg, manifest, val_entries, standardizer)
    feats = [f for f, _ in dataset]
    proba = _predict_proba_dataset(model, feats, cfg.training.batch_size)

    verify_dev = None
    if verify_limit:
        verify_dev = 0.0
        check = feats[:verify_limit]
        batch = make_batch([(f, 0) for f in check], min_frames=model.min_input_frames)
        batched = model.forward(batch.x, batch.mask.valid, training=False)
        for i, f in enumerate(check):
            ref = reference_forward_unpadded(model, f)
            verify_dev = max(verify_dev, float(np.max(np.abs(ref - batched[i]))))

    if cfg.task == "scene":
        y_true = np.array([y for _, y in dataset], dtype=np.int64)
        y_pred = proba.argmax(axis=1)
        conf = ConfusionMatrix.from_predictions(y_true, y_pred, cfg.network.num_classes)
        return conf, verify_dev
    targets = np.stack([y for _, y in dataset])
    return (proba, targets), verify_dev


def _write_scene_reports(cfg, manifest, conf, folds, stem):
    report_dir = Path(cfg.paths.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    per_class, average = per_class_accuracy(conf)
    write_class_report_csv(report_dir / f"{stem}.csv", manifest.class_names,
                           per_class * 100.0, average * 100.0, "accuracy_percent")
    write_summary_json(report_dir / f"{stem}.json", cfg.task, folds, average,
                       {n: float(v) for n, v in zip(manifest.class_names, per_class)})
    return average


def _write_tagging_reports(cfg, manifest, scores, targets, folds, stem):
    report_dir = Path(cfg.paths.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    result = EerResult.from_scores(scores, targets)
    write_class_report_csv(report_dir / f"{stem}.csv", manifest.class_names,
                           result.per_tag, result.average, "equal_error_rate")
    write_summary_json(report_dir / f"{stem}.json", cfg.task, folds, result.average,
                       {n: float(v) for n, v in zip(manifest.class_names, result.per_tag)})
    return result.average


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    _echo_config(cfg)
    manifest = load_manifest(cfg.paths.manifest, cfg.paths.classes,
                             cfg.manifest_task, cfg.num_folds)
    if args.fold == "all":
        folds = list(range(1, cfg.num_folds + 1))
        if args.checkpoint is not None:
            raise ManifestError("--checkpoint only applies to a single fold")
    else:
        folds = [int(args.fold)]

    verify_limit = args.verify_limit if args.verify else 0
    fold_results = {}
    max_dev = None
    for fold in folds:
        checkpoint = (Path(args.checkpoint) if args.checkpoint is not None
                      else Path(cfg.paths.checkpoint_dir) / f"fold{fold}.mpnw")
        result, dev = _eval_fold(cfg, manifest, fold, checkpoint, verify_limit)
        fold_results[fold] = result
        if dev is not None:
            max_dev = dev if max_dev is None else max(max_dev, dev)

    if cfg.task == "scene":
        pooled = None
        for fold, conf in fold_results.items():
            _write_scene_reports(cfg, manifest, conf, [fold], f"fold{fold}_report")
            pooled = conf if pooled is None else pooled.merge(conf)
        average = _write_scene_reports(cfg, manifest, pooled, folds, "pooled_report")
        print(f"scene accuracy over folds {folds}: {average * 100.0:.2f}% "
              f"(reports in {cfg.paths.report_dir})")
    else:
        all_scores, all_targets = [], []
        for fold, (scores, targets) in fold_results.items():
            _write_tagging_reports(cfg, manifest, scores, targets, [fold],
                                   f"fold{fold}_report")
            all_scores.append(scores)
            all_targets.append(targets)
        average = _write_tagging_reports(cfg, manifest, np.vstack(all_scores),
                                         np.vstack(all_targets), folds, "pooled_report")
        print(f"tagging average EER over folds {folds}: {average:.4f} "
              f"(reports in {cfg.paths.report_dir})")
    if max_dev is not None:
        print(f"verify: max |batched - reference| logit deviation = {max_dev:.3e}")
    return 0


# ---------------------------------------------------------------------------
# predict

def cmd_predict(args) -> int:
    cfg = load_run_config(args.config)
    _echo_config(cfg)
    checkpoint = (Path(args.checkpoint) if args.checkpoint is not None
                  else Path(cfg.paths.checkpoint_dir) / f"fold{args.fold}.mpnw")
    standardizer_path = (Path(args.standardizer) if args.standardizer is not None
                         else _standardizer_path(Path(cfg.paths.features_dir), args.fold))
    model = NetworkModel.load(checkpoint)
    model.check_compatible(cfg.network.input_bins, cfg.network.num_classes)
    standardizer, _ = load_standardizer(standardizer_path)

    clip = read_wav(args.wav)
    spec = stft_magnitude(clip, cfg.dsp.window_ms, cfg.dsp.hop_ms)
    if spec.frames < model.min_input_frames:
        raise TooShortError(
            f"{args.wav}: {spec.frames} frames, but the network needs at least "
            f"{model.min_input_frames} frames of audio"
        )
    features = apply_standardizer(standardizer, spec.mag)
    proba = model.predict_proba(features[None, None, :, :], np.array([spec.frames]))[0]
    from .data import read_class_names

    class_names = read_class_names(cfg.paths.classes)
    print(json.dumps({name: float(p) for name, p in zip(class_names, proba)},
                     indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskpool",
        description="Variable-length audio classification with masked global pooling.",
    )
    parser.add_argument("--version", action="version", version=f"maskpool {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset and run config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--task", choices=("scene", "tagging"), default="scene")
    p.add_argument("--classes", default="tone:500,tone:1000,tone:2000",
                   help="comma-separated class specs: tone:FREQ or noise:LO-HI")
    p.add_argument("--n-per-class", type=int, default=20)
    p.add_argument("--duration-s", type=float, default=1.0)
    p.add_argument("--fs", type=int, choices=(16000, 44100), default=16000)
    p.add_argument("--num-folds", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-floor", type=float, default=0.005)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="extract feature caches and standardizers")
    p.add_argument("--config", required=True)
    p.add_argument("--fold", type=int, default=None,
                   help="fit the standardizer for this fold only (default: all folds)")
    p.add_argument("--threads", type=int, default=None, help="worker cap (reserved)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train one cross-validation fold")
    p.add_argument("--config", required=True)
    p.add_argument("--fold", type=int, default=1)
    p.add_argument("--dry-run", action="store_true",
                   help="print the per-layer parameter table and exit")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--deterministic", action="store_true",
                   help="zero out wall-clock fields so logs are byte-reproducible")
    p.add_argument("--threads", type=int, default=None, help="worker cap (reserved)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints and write reports")
    p.add_argument("--config", required=True)
    p.add_argument("--fold", default="all", help="fold number or 'all'")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--verify", action="store_true",
                   help="compare against the unbatched reference forward pass")
    p.add_argument("--verify-limit", type=int, default=8,
                   help="clips per fold to verify (reference path is slow)")
    p.add_argument("--threads", type=int, default=None, help="worker cap (reserved)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one WAV file")
    p.add_argument("--config", required=True)
    p.add_argument("--fold", type=int, default=1,
                   help="fold whose checkpoint/standardizer to use by default")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--standardizer", default=None)
    p.add_argument("wav")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DIVERGENCE_EXIT
    except (MaskpoolError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR_EXIT


def entrypoint():
    sys.exit(main())
