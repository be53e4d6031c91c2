"""Command-line frontend wiring the library into reproducible runs.

Subcommands: synth, train, eval, infer, export-attn, interpret.
Every command is deterministic given identical flags and seeds.  Exit
codes: 0 success, 1 runtime failure (single-line diagnostic on stderr),
2 usage error.  AESGRAPH_DATA provides the default dataset directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import interpret as interp
from .attention_log import build_attention_log, load_attention_log, write_attention_log
from .config import PROFILES, PlantConfig, TrainConfig
from .data import dataset_paths, load_dataset, read_manifest, write_dataset
from .metrics import dist_mean, dist_std, evaluate
from .model import Model, predict_records
from .synthetic import generate_synthetic
from .training import train

__all__ = ["main", "entrypoint", "build_parser"]


def _add_data_arg(p: argparse.ArgumentParser) -> None:
    env_default = os.environ.get("AESGRAPH_DATA")
    p.add_argument("--data", required=env_default is None, default=env_default, metavar="DIR",
                   help="dataset directory holding manifest.jsonl and features.bin "
                        "(default: $AESGRAPH_DATA)")


def _load_data(args):
    manifest_path, blob_path = dataset_paths(args.data)
    if not manifest_path.exists() or not blob_path.exists():
        raise FileNotFoundError(f"no dataset at {args.data} (expected {manifest_path.name} "
                                f"and {blob_path.name})")
    return read_manifest(manifest_path), load_dataset(manifest_path, blob_path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aesgraph",
        description="Aesthetic rating distribution prediction from object regions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True, help="number of records")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--global-mode", choices=["narrow", "wide"], default="narrow")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--plant-label", default=None, help="label carrying a planted signal")
    p.add_argument("--plant-kind", choices=["category", "attribute"], default="category")
    p.add_argument("--plant-corr", type=float, default=0.0,
                   help="planted correlation between the label channel and mean votes")
    p.add_argument("--plant-global", type=float, default=0.0)
    p.add_argument("--plant-subject", type=float, default=0.0)
    p.add_argument("--plant-spatial", type=float, default=0.0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset")
    _add_data_arg(p)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--profile", choices=sorted(PROFILES), default=None,
                   help="defaults to the dataset profile")
    p.add_argument("--arch", choices=["baseline", "region", "graph"], default="graph")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--steps", type=int, default=None, help="cap on optimizer steps (overrides --epochs)")
    p.add_argument("--batch", type=int, default=None,
                   help="batch size (default 128, or 8 at the desk profile)")
    p.add_argument("--lr", type=float, default=3e-5)
    p.add_argument("--no-lr-decay", action="store_true", help="hold the learning rate constant")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-split", choices=["train", "test"], default="test")
    p.add_argument("--relations", default="visual,semantic,spatial",
                   help="comma list of graph relations to enable")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    _add_data_arg(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out", default=None, help="report file (stdout if omitted)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("infer", help="write per-image distribution, mean, and std")
    _add_data_arg(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("export-attn", help="run a model over a dataset and write the attention log")
    _add_data_arg(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_attn)

    p = sub.add_parser("interpret", help="attention analytics: subjects and correlation tables")
    p.add_argument("--log", required=True, help="attention log from export-attn")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--top-k", type=int, default=interp.DEFAULT_TOP_K)
    p.add_argument("--margin", type=float, default=interp.DEFAULT_MARGIN)
    p.add_argument("--score", choices=["predicted", "ground_truth"], default="predicted")
    p.add_argument("--category", default=None, help="restrict subject discovery to one image category")
    p.add_argument("--plots", action="store_true", help="also write boxplot/scatter figures")
    p.set_defaults(func=_cmd_interpret)

    return parser


def _cmd_synth(args) -> int:
    plant = PlantConfig(
        label=args.plant_label,
        label_kind=args.plant_kind,
        correlation=args.plant_corr,
        global_weight=args.plant_global,
        subject_weight=args.plant_subject,
        spatial_weight=args.plant_spatial,
    )
    records = generate_synthetic(args.seed, args.n, profile=args.profile, plant=plant,
                                 global_mode=args.global_mode, train_fraction=args.train_fraction)
    manifest_path, blob_path = dataset_paths(args.out)
    manifest = write_dataset(records, manifest_path, blob_path)
    print(f"wrote {manifest.record_count} records to {args.out} "
          f"(profile={manifest.profile}, global_mode={manifest.global_mode})")
    return 0


def _cmd_train(args) -> int:
    manifest, records = _load_data(args)
    profile = args.profile or manifest.profile
    if profile not in PROFILES:
        raise ValueError(f"dataset profile {profile!r} is not trainable; pass --profile")
    batch = args.batch if args.batch is not None else (8 if profile == "desk" else 128)
    relations = {r.strip() for r in args.relations.split(",") if r.strip()}
    unknown = relations - {"visual", "semantic", "spatial"}
    if unknown:
        raise ValueError(f"unknown relations: {sorted(unknown)}")
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=batch,
        base_lr=args.lr,
        lr_schedule=not args.no_lr_decay,
        seed=args.seed,
        profile=profile,
        arch=args.arch,
        global_mode=manifest.global_mode,
        use_visual="visual" in relations,
        use_semantic="semantic" in relations,
        use_spatial="spatial" in relations,
        max_steps=args.steps,
        eval_split=args.eval_split,
    )
    result = train(records, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "best.ckpt").write_bytes(result.best_checkpoint)
    result.model.save(out / "final.ckpt")
    (out / "train_log.jsonl").write_text("\n".join(result.log_lines) + "\n", encoding="utf-8")
    (out / "eval_reports.jsonl").write_text(
        "\n".join(json.dumps({"epoch": i + 1, **r.__dict__}, sort_keys=True, separators=(",", ":"))
                  for i, r in enumerate(result.reports)) + "\n", encoding="utf-8")
    last = result.reports[-1]
    print(f"trained {len(result.log_lines)} steps; best epoch {result.best_epoch}; "
          f"final eval srcc_mean={last.srcc_mean:.4f} mean_emd={last.mean_emd:.4f}")
    return 0


def _select_split(records, split: str):
    if split == "all":
        return records
    selected = [r for r in records if r.split == split]
    if not selected:
        raise ValueError(f"no records in split {split!r}")
    return selected


def _cmd_eval(args) -> int:
    _, records = _load_data(args)
    records = _select_split(records, args.split)
    model = Model.load(args.ckpt)
    preds = predict_records(model, records)
    gt = np.stack([r.distribution for r in records])
    report = evaluate(preds.distributions, gt)
    text = report.to_text()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _cmd_infer(args) -> int:
    _, records = _load_data(args)
    records = _select_split(records, args.split)
    model = Model.load(args.ckpt)
    preds = predict_records(model, records)
    lines = []
    for i, rec in enumerate(records):
        dist = preds.distributions[i]
        lines.append(json.dumps({
            "id": rec.id,
            "mean": float(dist_mean(dist)),
            "std": float(dist_std(dist)),
            "distribution": [float(v) for v in dist],
        }, sort_keys=True, separators=(",", ":")))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} predictions to {args.out}")
    return 0


def _cmd_export_attn(args) -> int:
    _, records = _load_data(args)
    records = _select_split(records, args.split)
    model = Model.load(args.ckpt)
    preds = predict_records(model, records)
    entries = build_attention_log(records, preds.distributions, preds.attention, preds.alpha)
    write_attention_log(args.out, entries)
    print(f"wrote attention log for {len(entries)} images to {args.out}")
    return 0


def _cmd_interpret(args) -> int:
    log = load_attention_log(args.log)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    categories = [None] + sorted({e.category for e in log})
    subject_lines = []
    subjects_by_category = {}
    for category in categories:
        subjects = interp.discover_subjects(log, category=category, margin=args.margin,
                                            score_source=args.score)
        subjects_by_category[category] = subjects
        name = category or "all"
        listed = ", ".join(f"{s.label} (delta={s.delta:.4f})" for s in subjects) or "(none)"
        subject_lines.append(f"{name}: {listed}")
    (out / "subjects.txt").write_text("\n".join(subject_lines) + "\n", encoding="utf-8")

    summary = {"margin": args.margin, "top_k": args.top_k, "score": args.score}
    has_alpha = any(e.graph_attention is not None for e in log)
    for kind in ("category", "attribute"):
        table = interp.attention_score_correlation(log, kind, top_k=args.top_k,
                                                   score_source=args.score)
        table.write(out / f"attention_corr_{kind}.tsv")
        try:
            summary[f"cross_split_{kind}"] = interp.cross_split_correlation(table)
        except ValueError:
            summary[f"cross_split_{kind}"] = None
        if args.plots:
            from . import plots
            plots.cross_split_scatter(table, out / f"attention_corr_{kind}.png")
        if has_alpha:
            pair_table = interp.pair_attention_correlation(log, kind, top_k=args.top_k,
                                                           score_source=args.score)
            pair_table.write(out / f"pair_corr_{kind}.tsv")
            try:
                summary[f"cross_split_pair_{kind}"] = interp.cross_split_correlation(pair_table)
            except ValueError:
                summary[f"cross_split_pair_{kind}"] = None
    if args.plots:
        from . import plots
        plots.subject_gap_boxplot(log, subjects_by_category[None], out / "subject_gap.png")
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"wrote interpretation reports to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
