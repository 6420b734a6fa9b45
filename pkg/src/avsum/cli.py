"""Command-line surface tying the pipeline together.

Subcommands: synth (generate a dataset), train, summarize, eval (multi-seed
train/test benchmark), segment, gradcheck, sweep (F vs attention scale).
Every run with identical inputs, flags, and seed writes byte-identical
artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline, selection_eval as sel, training
from .dataset import SplitSpec, SyntheticSpec, generate_synthetic, load_dataset, make_split, save_dataset
from .decoder import VARIANTS, init_model, load_checkpoint, save_checkpoint, write_scores
from .training import GradCheckDims, TrainConfig, grad_check


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=VARIANTS, default="m-avs")
    p.add_argument("--attention-scale", type=int, default=9,
                   help="odd window width; >= 2T-1 attends globally")
    p.add_argument("--hidden", type=int, default=256, help="LSTM units per layer")
    p.add_argument("--layers", type=int, default=3, help="stacked LSTM layers")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    _add_model_flags(p)
    p.add_argument("--lr", type=float, default=0.15)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=60)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--budget", type=float, default=sel.DEFAULT_BUDGET)
    p.add_argument("--agg", choices=("mean", "max"), default="mean")
    p.add_argument("--test-fraction", type=float, default=0.20)
    p.add_argument("--augment", nargs="*", default=[],
                   help="extra dataset directories; their records only ever train")


def _load_with_augment(data_dir: str, augment_dirs: list[str]):
    records = load_dataset(data_dir)
    augment_tags = []
    for extra_dir in augment_dirs:
        extra = load_dataset(extra_dir)
        augment_tags.extend(sorted({r.source_dataset for r in extra}))
        records.extend(extra)
    return records, tuple(dict.fromkeys(augment_tags))


def _train_once(records, augment_tags, args, seed: int):
    spec = SplitSpec(seed=seed, test_fraction=args.test_fraction, augment_tags=augment_tags)
    train_recs, test_recs = make_split(records, spec)
    feature_dim = train_recs[0].features.shape[1]
    model = init_model(
        args.variant,
        feature_dim,
        hidden_size=args.hidden,
        num_layers=args.layers,
        attention_scale=args.attention_scale,
        seed=seed,
    )
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        attention_scale=args.attention_scale,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=seed,
        clip_norm=args.clip_norm,
        budget_fraction=args.budget,
        agg=args.agg,
    )
    best, report = training.train(
        model, train_recs, test_recs, config,
        log=lambda line: print(line, file=sys.stderr),
    )
    test_f, per_video = pipeline.evaluate_model(
        best, test_recs, budget_fraction=args.budget, agg=args.agg
    )
    return best, report, test_f, per_video


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_videos=args.videos,
        frames_range=(args.min_frames, args.max_frames),
        feature_dim=args.dim,
        n_shots_range=(args.min_shots, args.max_shots),
        exact_shot_length=args.shot_length,
        noise_scale=args.noise,
        source_tag=args.tag,
    )
    records = generate_synthetic(args.seed, spec)
    save_dataset(records, args.out)
    print(f"wrote {len(records)} videos to {args.out}")
    return 0


def _cmd_train(args) -> int:
    records, augment_tags = _load_with_augment(args.data, args.augment)
    best, report, test_f, _ = _train_once(records, augment_tags, args, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(best, out / "model.avsm")
    _json_dump(report.to_dict(), out / "train_report.json")
    print(f"best val F {report.best_f:.2f} at epoch {report.best_epoch}; "
          f"stopped after epoch {report.stop_epoch}; test F {test_f:.2f}")
    print(f"checkpoint: {out / 'model.avsm'}")
    return 0


def _cmd_summarize(args) -> int:
    model = load_checkpoint(args.checkpoint)
    records = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for record in records:
        scores, seg, summary = pipeline.summarize_record(
            model, record, budget_fraction=args.budget
        )
        write_scores(out / f"{record.id}.scores.tsv", scores)
        seg.write(out / f"{record.id}.shots.tsv")
        summary.write(out / f"{record.id}.summary.tsv")
    print(f"summarized {len(records)} videos into {out}")
    return 0


def _cmd_eval(args) -> int:
    records, augment_tags = _load_with_augment(args.data, args.augment)
    rows = []
    for i in range(args.seeds):
        seed = args.seed + i
        _, report, test_f, per_video = _train_once(records, augment_tags, args, seed)
        rows.append(
            {
                "seed": seed,
                "test_f": test_f,
                "best_val_f": report.best_f,
                "stop_epoch": report.stop_epoch,
                "per_video": {vid: r.to_dict() for vid, r in per_video.items()},
            }
        )
        print(f"seed {seed}: test F {test_f:.2f}")
    fs = np.array([r["test_f"] for r in rows])
    table = {
        "variant": args.variant,
        "agg": args.agg,
        "seeds": [r["seed"] for r in rows],
        "mean_f": float(fs.mean()),
        "std_f": float(fs.std()),
        "runs": rows,
    }
    print(f"{args.variant}: mean F {fs.mean():.2f} +- {fs.std():.2f} over {args.seeds} seeds")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _json_dump(table, out / "eval.json")
    return 0


def _cmd_segment(args) -> int:
    records = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for record in records:
        seg = pipeline.segment_record(
            record, max_shots=args.max_shots, penalty_weight=args.penalty
        )
        seg.write(out / f"{record.id}.shots.tsv")
    print(f"segmented {len(records)} videos into {out}")
    return 0


def _cmd_gradcheck(args) -> int:
    dims = GradCheckDims(
        frames=args.frames,
        feature_dim=args.dim,
        hidden=args.hidden,
        layers=args.layers,
        attention_scale=args.attention_scale,
    )
    worst = grad_check(args.variant, dims, seed=args.seed)
    print(f"{args.variant}: max relative gradient error {worst:.3e}")
    return 0 if worst < 1e-4 else 1


def _cmd_sweep(args) -> int:
    records, augment_tags = _load_with_augment(args.data, args.augment)
    scales = [int(s) for s in args.scales.split(",")]
    table = []
    for scale in scales:
        fs = []
        for i in range(args.seeds):
            seed = args.seed + i
            run_args = argparse.Namespace(**vars(args))
            run_args.attention_scale = scale
            _, _, test_f, _ = _train_once(records, augment_tags, run_args, seed)
            fs.append(test_f)
        arr = np.array(fs)
        table.append({"scale": scale, "mean_f": float(arr.mean()), "std_f": float(arr.std()),
                      "per_seed": fs})
        print(f"scale {scale:3d}: mean F {arr.mean():.2f} +- {arr.std():.2f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _json_dump({"variant": args.variant, "rows": table}, out / "sweep.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avsum",
        description="Attentive encoder-decoder video summarization pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--videos", type=int, default=10)
    p.add_argument("--min-frames", type=int, default=60)
    p.add_argument("--max-frames", type=int, default=96)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--min-shots", type=int, default=6)
    p.add_argument("--max-shots", type=int, default=10)
    p.add_argument("--shot-length", type=int, default=None,
                   help="force every shot to this exact length")
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--tag", default="synthetic")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="train one model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("summarize", help="score and summarize videos with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=float, default=sel.DEFAULT_BUDGET)
    p.set_defaults(fn=_cmd_summarize)

    p = sub.add_parser("eval", help="multi-seed train/test benchmark")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=5)
    _add_train_flags(p)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("segment", help="write shot boundaries for every video")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-shots", type=int, default=None)
    p.add_argument("--penalty", type=float, default=1.0)
    p.set_defaults(fn=_cmd_segment)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--variant", choices=VARIANTS, default="m-avs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--hidden", type=int, default=3)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--attention-scale", type=int, default=3)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("sweep", help="benchmark F-score across attention scales")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--scales", default="3,9,15")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=5)
    _add_train_flags(p)
    p.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
