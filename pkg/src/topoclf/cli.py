"""Command line: ``synth | extract | train | eval | analyze``.

All subcommands take ``--config`` (INI, see ``config.py``) and ``--out``.
Every artifact embeds or sits next to the resolved run configuration, and
reruns with identical inputs produce byte-identical files. The
``TOPOCLF_WORKERS`` environment variable caps the extraction worker count
(default: available parallelism); it never changes output bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .betti import (
    build_feature_dataset,
    load_feature_csv,
    pca_project,
    save_distribution_csv,
    save_feature_csv,
    sidecar_path,
)
from .config import ConfigError, RunConfig, load_config
from .cubical import build_sublevel_filtration, compute_persistence, write_diagram_csv
from .image_io import DatasetError, ImageFormatError, scan_dataset
from .metrics import confusion_to_csv, evaluate, report_to_dict, roc_points_to_csv
from .neural import INIT_STREAM, make_rng
from .pipeline import (
    FusionModel,
    TdaMlpModel,
    TrainingDivergedError,
    embedding_matrix,
    load_checkpoint,
    load_embeddings,
    predict,
    save_checkpoint,
    split_indices,
    train,
)
from .synth import generate_dataset

WORKERS_ENV = "TOPOCLF_WORKERS"


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (
        ConfigError,
        DatasetError,
        ImageFormatError,
        TrainingDivergedError,
        FileNotFoundError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topoclf",
        description="Sublevel-persistence features and dense-network classification "
        "for grayscale image datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate the synthetic ring benchmark dataset")
    _common_args(synth)
    synth.add_argument("--per-class", type=int, default=None)
    synth.add_argument("--side", type=int, default=None)
    synth.add_argument("--seed", type=int, default=None)
    synth.set_defaults(handler=cmd_synth)

    extract = sub.add_parser("extract", help="extract Betti-curve features from a dataset")
    _common_args(extract)
    extract.add_argument("--dataset-root", default=None)
    extract.add_argument("--image-side", type=int, default=None)
    extract.add_argument(
        "--diagrams-dir",
        default=None,
        help="also dump per-sample persistence diagrams (CSV) into this directory",
    )
    extract.set_defaults(handler=cmd_extract)

    train_p = sub.add_parser("train", help="split, train, and checkpoint a classifier")
    _common_args(train_p)
    train_p.add_argument("--mode", choices=("tda", "fusion"), required=True)
    train_p.add_argument("--features", default=None, help="feature CSV (default <out>/features.csv)")
    train_p.add_argument("--embeddings", default=None, help="embedding CSV (fusion mode)")
    train_p.add_argument("--epochs", type=int, default=None)
    train_p.add_argument("--batch-size", type=int, default=None)
    train_p.set_defaults(handler=cmd_train)

    eval_p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _common_args(eval_p)
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--features", default=None)
    eval_p.add_argument("--embeddings", default=None)
    eval_p.set_defaults(handler=cmd_eval)

    analyze = sub.add_parser("analyze", help="write PCA and class-distribution exports")
    _common_args(analyze)
    analyze.add_argument("--features", default=None)
    analyze.set_defaults(handler=cmd_analyze)

    return parser


def _common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="INI run configuration")
    p.add_argument("--out", required=True, help="output directory")


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for arg_name, attr in (
        ("dataset_root", "dataset_root"),
        ("image_side", "image_side"),
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("per_class", "synth_per_class"),
        ("side", "synth_side"),
        ("seed", "synth_seed"),
    ):
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(cfg, attr, value)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return os.cpu_count() or 1


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    counts = generate_dataset(
        out,
        per_class=cfg.synth_per_class,
        side=cfg.synth_side,
        seed=cfg.synth_seed,
        noise=cfg.synth_noise,
    )
    _write_json(out / "synth.meta.json", {"config": cfg.to_dict(), "counts": counts})
    for name, count in counts.items():
        print(f"{name}: {count} images ({cfg.synth_side}x{cfg.synth_side})")
    return 0


def cmd_extract(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    samples, class_names = scan_dataset(cfg.dataset_root, cfg.image_side, cfg.class_names)
    if len(class_names) != cfg.n_classes:
        raise DatasetError(
            f"{cfg.dataset_root}: found {len(class_names)} class directories "
            f"({', '.join(class_names)}), expected {cfg.n_classes}"
        )
    for label, name in enumerate(class_names):
        count = sum(1 for s in samples if s.label == label)
        print(f"class {name} (label {label}): {count} samples")
    ds = build_feature_dataset(samples, cfg.bin_spec(), class_names, workers=_workers())
    save_feature_csv(ds, out / "features.csv", meta_extra={"config": cfg.to_dict()})
    if args.diagrams_dir:
        diag_dir = Path(args.diagrams_dir)
        diag_dir.mkdir(parents=True, exist_ok=True)
        for sample in samples:
            pd0, pd1 = compute_persistence(build_sublevel_filtration(sample.image))
            name = sample.sample_id.replace("/", "__") + ".csv"
            write_diagram_csv(pd0, pd1, diag_dir / name)
    print(f"wrote {out / 'features.csv'} ({len(ds)} rows, {ds.features.shape[1] + 2} columns)")
    return 0


def _resolve_features(args, out: Path) -> Path:
    path = Path(args.features) if args.features else out / "features.csv"
    if not path.is_file():
        raise FileNotFoundError(
            f"feature CSV {path} not found (run `topoclf extract` or pass --features)"
        )
    return path


def _resolve_embedding_block(args, out: Path, sample_ids) -> np.ndarray:
    path = Path(args.embeddings) if args.embeddings else out / "embeddings.csv"
    if not path.is_file():
        raise FileNotFoundError(
            f"embedding CSV {path} not found; fusion mode requires --embeddings"
        )
    return embedding_matrix(load_embeddings(path), sample_ids)


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    ds = load_feature_csv(_resolve_features(args, out))
    if ds.features.shape[1] != cfg.input_dim:
        raise ValueError(
            f"feature width {ds.features.shape[1]} does not match the configured "
            f"{cfg.input_dim} (= 2 x {cfg.bin_count} bins)"
        )
    split = split_indices(len(ds), cfg.split_config())
    for part, idx in (("train", split.train), ("validation", split.validation), ("test", split.test)):
        counts = np.bincount(ds.labels[idx], minlength=len(ds.class_names))
        pretty = ", ".join(f"{n}={c}" for n, c in zip(ds.class_names, counts))
        print(f"{part}: {len(idx)} samples ({pretty})")

    rng = make_rng(cfg.train_seed, INIT_STREAM)
    emb = None
    if args.mode == "fusion":
        emb = _resolve_embedding_block(args, out, ds.sample_ids)
        model: TdaMlpModel | FusionModel = FusionModel.build(
            rng,
            input_dim=cfg.input_dim,
            trunk_hidden=cfg.tda_hidden,
            embedding_dim=cfg.embedding_dim,
            head_hidden=cfg.fusion_hidden,
            n_classes=len(ds.class_names),
            dropout_p=cfg.dropout,
        )
    else:
        model = TdaMlpModel.build(
            rng, input_dim=cfg.input_dim, hidden=cfg.tda_hidden, n_classes=len(ds.class_names)
        )

    result = train(model, ds.features, ds.labels, split, cfg.train_config(), embeddings=emb)

    history_path = out / f"history_{args.mode}.csv"
    lines = ["epoch,train_loss,val_accuracy"]
    for row in result.history:
        lines.append(f"{row.epoch},{row.train_loss!r},{row.val_accuracy!r}")
    history_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_json(sidecar_path(history_path), {"config": cfg.to_dict()})

    checkpoint_path = out / f"checkpoint_{args.mode}.json"
    save_checkpoint(
        checkpoint_path, model, epoch=result.best_epoch, adam=result.adam, config=cfg.to_dict()
    )
    print(
        f"best epoch {result.best_epoch} (validation accuracy {result.best_val_accuracy:.4f}); "
        f"wrote {checkpoint_path} and {history_path}"
    )
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    ds = load_feature_csv(_resolve_features(args, out))
    model, payload = load_checkpoint(args.checkpoint)
    kind = payload["kind"]
    if model.n_classes != len(ds.class_names):
        raise ValueError(
            f"checkpoint was trained for {model.n_classes} classes but the dataset "
            f"has {len(ds.class_names)}"
        )
    if model.input_dim != ds.features.shape[1]:
        raise ValueError(
            f"checkpoint expects {model.input_dim}-wide features, CSV has "
            f"{ds.features.shape[1]}"
        )
    split = split_indices(len(ds), cfg.split_config())
    emb_test = None
    if kind == "fusion":
        emb = _resolve_embedding_block(args, out, ds.sample_ids)
        emb_test = emb[split.test]
    probs = predict(model, ds.features[split.test], emb_test)
    report = evaluate(ds.labels[split.test], probs, len(ds.class_names))

    _write_json(
        out / f"metrics_{kind}.json",
        report_to_dict(report, class_names=ds.class_names, config=cfg.to_dict()),
    )
    (out / f"confusion_{kind}.csv").write_text(
        confusion_to_csv(report.confusion, ds.class_names), encoding="utf-8"
    )
    for c, points in enumerate(report.roc_points):
        if points is None:
            continue
        (out / f"roc_{kind}_class{c}.csv").write_text(roc_points_to_csv(points), encoding="utf-8")
    print(
        f"test accuracy {report.accuracy:.4f}, macro F1 {report.macro_f1:.4f}, "
        f"macro AUC {report.macro_auc:.4f} ({report.n_samples} samples)"
    )
    return 0


def cmd_analyze(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    ds = load_feature_csv(_resolve_features(args, out))
    half = ds.bin_spec.count
    blocks = {
        "b0": ds.features[:, :half],
        "b1": ds.features[:, half:],
        "full": ds.features,
    }
    for name, block in blocks.items():
        coords, eigenvalues, _axes = pca_project(block.astype(np.float64))
        path = out / f"pca_{name}.csv"
        lines = ["sample_id,label,pc1,pc2,pc3"]
        for sid, label, row in zip(ds.sample_ids, ds.labels, coords):
            lines.append(f"{sid},{int(label)}," + ",".join(repr(float(v)) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        _write_json(
            sidecar_path(path),
            {"config": cfg.to_dict(), "eigenvalues": [float(v) for v in eigenvalues]},
        )
        print(f"wrote {path} (top eigenvalue {eigenvalues[0]:.4g})")
    dist_path = out / "distributions.csv"
    save_distribution_csv(ds, dist_path, meta_extra={"config": cfg.to_dict()})
    print(f"wrote {dist_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
