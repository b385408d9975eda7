"""Command-line front end: gen-data, train, infer, eval, inspect.

Parameter precedence: command-line flags > config file (flat key=value
lines) > built-in defaults. All randomness flows from --seed.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys

import numpy as np

from . import datasets, evaluation, massspring, trainer
from .generator import load_checkpoint, save_checkpoint
from .losses import LossWeights


def _load_config_file(path):
    values = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(args, parser):
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
        defaults = {a.dest: a.default for a in parser._actions}
        for key, raw in file_values.items():
            if key not in defaults:
                raise SystemExit(f"unknown config key: {key}")
            # flags override the file: only fill values left at default
            if getattr(args, key) == defaults[key]:
                typ = type(defaults[key]) if defaults[key] is not None else str
                if typ is bool:
                    setattr(args, key, raw.lower() in ("1", "true", "yes"))
                else:
                    setattr(args, key, typ(raw))
    return args


def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("WAVELOSS_THREADS", "1")),
                   help="1 forces the deterministic single-threaded mode")


def _cmd_gen_data(args):
    if args.kind == "synthetic":
        records = datasets.generate_wave_dataset(
            args.M, args.k, args.count, args.frames, args.seed,
            randomize_fh=not args.fixed_fh)
    else:
        seeds = np.random.SeedSequence(args.seed).generate_state(args.count)
        records = [massspring.generate_mass_spring_record(
            int(s), resolution_low=args.M, k=args.k,
            steps=args.frames * args.frame_stride, frame_stride=args.frame_stride)
            for s in seeds]
    records, stats = datasets.normalize_dataset(records)
    n_test = max(1, args.count // 10) if args.count > 1 else 0
    splits = ["train"] * (args.count - n_test) + ["test"] * n_test
    datasets.save_dataset(records, args.out, stats=stats, splits=splits)
    lo = records[0].low.frames[0].sdf.spatial_shape
    hi = records[0].high.frames[0].sdf.spatial_shape
    print(f"wrote {len(records)} sequences ({args.frames} frames, "
          f"low {lo}, high {hi}) to {args.out}")


def _cmd_train(args):
    records, _ = datasets.load_dataset(args.dataset, split="train")
    weights = LossWeights(alpha=args.alpha, beta=args.beta, eps=args.eps)
    cfg = trainer.TrainConfig(
        iterations=args.iterations, batch_size=args.batch_size,
        T=args.T, weights=weights, seed=args.seed,
        checkpoint_interval=args.checkpoint_interval,
        loss_variant=args.loss, tile_size=args.tile_size,
        tile_overlap=args.tile_overlap, tile_band=args.tile_band)
    os.makedirs(args.out, exist_ok=True)
    params, gen_cfg, log = trainer.train(cfg, records, out_dir=args.out,
                                         resume=args.resume)
    trainer.write_log(os.path.join(args.out, "training_log.csv"), log, cfg)
    save_checkpoint(os.path.join(args.out, "model.wlck"), gen_cfg, params,
                    meta={"loss": args.loss, "iterations": args.iterations,
                          "seed": args.seed})
    print(f"trained {args.loss} model for {len(log)} iterations; final "
          f"loss {log[-1]['loss']:.6g}; wrote {args.out}/model.wlck")


def _cmd_infer(args):
    gen_cfg, params, _, _ = load_checkpoint(args.checkpoint)
    records, stats = datasets.load_dataset(args.dataset, split=args.split)
    preds = trainer.infer_records(params, gen_cfg, records,
                                  frames=args.frames)
    os.makedirs(args.out, exist_ok=True)
    out_records = []
    for rec, frames in zip(records, preds):
        gen_seq = datasets.SimSequence(
            frames=[datasets.Frame(sdf=p) for p in frames],
            resolution="high", k=rec.low.k, source="generated")
        T = len(frames)
        out_records.append(datasets.DatasetRecord(
            low=datasets.SimSequence(frames=rec.low.frames[:T],
                                     resolution="low", k=rec.low.k,
                                     source=rec.low.source),
            high=gen_seq))
    datasets.save_dataset(out_records, args.out, stats=stats,
                          splits=["generated"] * len(out_records))
    print(f"wrote {len(out_records)} generated sequences to {args.out}")


def _cmd_eval(args):
    gen_records, _ = datasets.load_dataset(args.generated, split=None)
    gt_records, _ = datasets.load_dataset(args.ground_truth, split=args.split)
    if len(gen_records) != len(gt_records):
        raise SystemExit(f"sequence count mismatch: {len(gen_records)} "
                         f"generated vs {len(gt_records)} ground truth")
    preds = [[f.sdf for f in rec.high.frames] for rec in gen_records]
    T = min(len(preds[0]), gt_records[0].frame_count)
    preds = [p[:T] for p in preds]
    report = evaluation.evaluate_model(preds, gt_records, frames=T,
                                       name=args.name)
    os.makedirs(args.out, exist_ok=True)
    evaluation.export_report(report, os.path.join(args.out, "report.csv"))
    evaluation.export_spectra(report, os.path.join(args.out, "spectra.csv"))
    first_gen = preds[0][0]
    first_gt = gt_records[0].high.frames[0].sdf
    evaluation.write_pgm(os.path.join(args.out, "frame_generated.pgm"),
                         first_gen.data[..., 0].T)
    evaluation.write_pgm(os.path.join(args.out, "frame_ground_truth.pgm"),
                         first_gt.data[..., 0].T)
    evaluation.export_subband_image(
        first_gen, os.path.join(args.out, "subbands_generated.pgm"))
    evaluation.export_subband_image(
        first_gt, os.path.join(args.out, "subbands_ground_truth.pgm"))
    row = report.rows[args.name]
    print(f"{args.name}: mae={row['mae']:.6g} "
          f"spatial_freq_mae={row['spatial_freq_mae']:.6g} "
          f"temporal_freq_mae={row['temporal_freq_mae']:.6g}")


def _cmd_inspect(args):
    path = args.path
    if os.path.isdir(path):
        manifest = os.path.join(path, "manifest.txt")
        with open(manifest) as f:
            lines = [ln.split() for ln in f if ln.strip()]
        print(f"{len(lines)} sequences "
              f"({sum(1 for _, s in lines if s == 'train')} train)")
        path = os.path.join(os.path.dirname(manifest), lines[0][0])
    rec, stats = datasets.load_record(path)
    lo = rec.low.frames[0].sdf.spatial_shape
    hi = rec.high.frames[0].sdf.spatial_shape
    print(f"{path}: {rec.frame_count} frames, k={rec.low.k}, "
          f"low {lo}, high {hi}, source {rec.low.source}")
    for name, (center, scale) in sorted(stats.fields.items()):
        print(f"  norm {name}: center={center:.6g} scale={scale:.6g}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="waveloss",
        description="Frequency-aware super-resolution of simulation "
                    "surfaces with wavelet-space losses")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a paired dataset")
    g.add_argument("kind", choices=["synthetic", "mass-spring"])
    g.add_argument("--M", type=int, default=16, help="low-res extent")
    g.add_argument("--k", type=int, default=4, help="up-sample factor")
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--frames", type=int, default=10)
    g.add_argument("--frame-stride", type=int, default=4,
                   help="mass-spring solver steps per stored frame")
    g.add_argument("--fixed-fh", action="store_true",
                   help="constant high-frequency component (deterministic "
                        "up-sampling variant)")
    g.add_argument("--out", required=True)
    _add_common(g)
    g.set_defaults(func=_cmd_gen_data)

    t = sub.add_parser("train", help="train a generator")
    t.add_argument("--dataset", required=True)
    t.add_argument("--loss", choices=["mae", "rfft", "wavelet"],
                   default="wavelet")
    t.add_argument("--alpha", type=float, default=100.0)
    t.add_argument("--beta", type=float, default=10.0)
    t.add_argument("--eps", type=float, default=2.0 ** -8)
    t.add_argument("--iterations", type=int, default=50000)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--T", type=int, default=10)
    t.add_argument("--tile-size", type=int, default=16)
    t.add_argument("--tile-overlap", type=int, default=8)
    t.add_argument("--tile-band", type=float, default=2.0)
    t.add_argument("--checkpoint-interval", type=int, default=1000)
    t.add_argument("--resume", help="trainer checkpoint to continue from")
    t.add_argument("--out", required=True)
    _add_common(t)
    t.set_defaults(func=_cmd_train)

    i = sub.add_parser("infer", help="run a checkpoint over a dataset")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--dataset", required=True)
    i.add_argument("--split", default="test")
    i.add_argument("--frames", type=int, default=None)
    i.add_argument("--out", required=True)
    _add_common(i)
    i.set_defaults(func=_cmd_infer)

    e = sub.add_parser("eval", help="metrics + spectra for generated data")
    e.add_argument("--generated", required=True)
    e.add_argument("--ground-truth", required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--name", default="model")
    e.add_argument("--out", required=True)
    _add_common(e)
    e.set_defaults(func=_cmd_eval)

    n = sub.add_parser("inspect", help="print dataset header")
    n.add_argument("path")
    _add_common(n)
    n.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for action in parser._subparsers._group_actions:
        sub = action.choices.get(args.command)
        if sub is not None:
            args = _apply_config_file(args, sub)
    created = getattr(args, "out", None)
    existed = created is not None and os.path.exists(created)
    try:
        args.func(args)
    except BrokenPipeError:
        raise
    except Exception as exc:  # partial outputs are removed on failure
        if created and not existed and os.path.isdir(created):
            shutil.rmtree(created, ignore_errors=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
