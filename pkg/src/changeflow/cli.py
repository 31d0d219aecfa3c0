"""Command-line entry point.

One executable with subcommands covering the whole pipeline:

  gen-data     synthesize a bi-temporal dataset with ground-truth masks
  train-codec  fit the mask codec on the dataset's train split
  train        train the velocity network + feature encoder
  infer        ensemble mask generation (PNG masks, confidence, trace, sidecar)
  eval         metrics / coherence / threshold-sweep CSVs from predictions
  sweep        validation-split threshold selection
  ablate       retrain under design variants with identical seeds and data
  bench        speed-accuracy trade-off over steps and repetitions

Configuration comes from an optional YAML file (sections ``flow``,
``generator``, ``codec``; keys named exactly as the dataclass fields) plus
flag overrides; flags win. The master seed resolves flag > config file >
CHANGEFLOW_SEED env var > 0. Exit code is 0 iff all outputs were written.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from . import evaluation, inference, synth, training
from .codec import load_codec, roundtrip_report, train_codec
from .config import DIFF_MODES, NORM_MODES, RESIZE_MODES, TIME_MODES, load_run_config
from .errors import LoadError
from .flow_core import mix_seed

log = logging.getLogger("changeflow")

BENCH_STEP_GRID = (1, 2, 5, 10, 20)
BENCH_REP_GRID = (1, 3, 5, 10)
DEFAULT_SWEEP_THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
VOTE_REGIME = (0.2, 0.4)  # thresholds equivalent to >=2-of-5 votes on binary stacks


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CHANGEFLOW_SEED")
    if env is not None:
        return int(env)
    return 0


def _flow_overrides(args) -> dict:
    keys = (
        "steps", "repetitions", "threshold", "epochs", "batch_size", "learning_rate",
        "t_sampling", "diff_mode", "norm_mode", "resize_mode",
    )
    out = {k: getattr(args, k, None) for k in keys}
    out["seed"] = args.resolved_seed
    return out


def _generator_overrides(args) -> dict:
    mapping = {
        "image_size": "image_size",
        "change_fraction": "target_change_fraction",
        "change_probability": "change_probability",
        "photometric": "photometric_amplitude",
        "texture_scale": "texture_scale",
        "radius_min": "radius_min",
        "radius_max": "radius_max",
    }
    out = {dest: getattr(args, src, None) for src, dest in mapping.items()}
    out["seed"] = args.resolved_seed
    return out


def _codec_overrides(args) -> dict:
    return {
        "kind": getattr(args, "codec_kind", None),
        "epochs": getattr(args, "codec_epochs", None),
        "seed": args.resolved_seed,
    }


def _load_config(args):
    return load_run_config(
        args.config,
        {
            "flow": _flow_overrides(args),
            "generator": _generator_overrides(args),
            "codec": _codec_overrides(args),
        },
    )


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_bundle(checkpoint: Path):
    """Checkpoint -> (eval-mode state, meta, codec); verifies the codec reference."""
    state, meta = training.load_train_checkpoint(checkpoint)
    codec_path = Path(checkpoint).parent / meta["codec_path"]
    if not codec_path.exists():
        raise LoadError(f"codec referenced by checkpoint not found: {codec_path}")
    if _sha256(codec_path) != meta["codec_sha256"]:
        raise LoadError(f"codec file {codec_path} does not match the checksum in {checkpoint}")
    return state, meta, load_codec(codec_path)


def _save_gray_png(values: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)).save(path)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    samples = synth.generate_dataset(cfg.generator, args.count)
    manifest = synth.write_dataset(samples, args.out, cfg.generator)
    sizes = {k: len(v) for k, v in manifest["splits"].items()}
    fraction = float(np.mean([s.mask.mean() for s in samples]))
    log.info("wrote %d samples to %s (splits %s, changed fraction %.3f)",
             len(samples), args.out, sizes, fraction)
    return 0


def cmd_train_codec(args) -> int:
    cfg = _load_config(args)
    masks = np.stack([s.mask for s in synth.read_split(args.data, "train")])
    if args.mask_limit:
        masks = masks[: args.mask_limit]
    codec, report = train_codec(masks, cfg.codec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    codec.save(out / "codec.ckpt")
    _write_csv(out / "codec_train_log.csv", ["epoch", "loss"],
               [[i, f"{v:.6f}"] for i, v in enumerate(report.epoch_losses)])
    summary = {
        "kind": cfg.codec.kind,
        "mask_count": int(masks.shape[0]),
        "epochs": cfg.codec.epochs,
        "holdout_f1": report.holdout.f1,
        "holdout_mae": report.holdout.mae,
        "wall_time_s": report.wall_time_s,
    }
    (out / "codec_report.json").write_text(json.dumps(summary, indent=2))
    log.info("codec trained: holdout F1=%.4f MAE=%.5f (%.0fs)",
             report.holdout.f1, report.holdout.mae, report.wall_time_s)
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    codec = load_codec(args.codec)
    result = training.train(cfg, args.data, codec, args.codec, args.out,
                            resume_from=args.resume)
    log.info("training done in %.0fs; checkpoint %s, first/last epoch loss %.4f/%.4f",
             result.wall_time_s, result.checkpoint_path,
             result.epoch_means[0], result.epoch_means[-1])
    return 0


def _infer_pairs(args, cfg):
    """Yield (pair_id, image_t1, image_t2) according to the input flags."""
    if not args.t1 and not args.data:
        raise LoadError("infer needs either --t1/--t2 or --data")
    if args.t1 and not args.t2:
        raise LoadError("--t1 requires --t2")
    if args.t1:
        sample = synth.load_sample_from_disk(args.t1, args.t2, args.mask) if args.mask else None
        if sample is None:
            img1 = np.asarray(Image.open(args.t1).convert("RGB")).astype(np.float32) / 255.0
            img2 = np.asarray(Image.open(args.t2).convert("RGB")).astype(np.float32) / 255.0
            yield Path(args.t1).stem, img1, img2
        else:
            yield sample.sample_id, sample.image_t1, sample.image_t2
        return
    samples = synth.read_split(args.data, args.split)
    if args.limit:
        samples = samples[: args.limit]
    for s in samples:
        yield s.sample_id, s.image_t1, s.image_t2


def cmd_infer(args) -> int:
    cfg = _load_config(args)
    state, meta, codec = _load_bundle(Path(args.checkpoint))
    out = Path(args.out)
    master = args.resolved_seed
    per_image: dict[str, dict] = {}
    count = 0
    for index, (pair_id, img1, img2) in enumerate(_infer_pairs(args, cfg)):
        image_seed = mix_seed(master, index)
        result = inference.ensemble_predict(
            state.model, state.cond, codec, img1, img2,
            cfg.flow.steps, cfg.flow.repetitions, image_seed,
            prebinarize=args.prebinarize, trace=args.trace,
        )
        mask = inference.binarize(result.confidence, cfg.flow.threshold)
        synth.save_mask_png(mask, out / "mask" / f"{pair_id}.png")
        _save_gray_png(result.confidence, out / "conf" / f"{pair_id}.png")
        if args.trace:
            for k, step_conf in enumerate(result.step_confidences):
                _save_gray_png(step_conf, out / "trace" / f"{pair_id}_step{k + 1:02d}.png")
        per_image[pair_id] = {"master_seed": image_seed, "member_seeds": result.seeds}
        count += 1
    sidecar = {
        "command": "infer",
        "checkpoint": str(args.checkpoint),
        "checkpoint_sha256": _sha256(Path(args.checkpoint)),
        "steps": cfg.flow.steps,
        "repetitions": cfg.flow.repetitions,
        "threshold": cfg.flow.threshold,
        "master_seed": master,
        "prebinarize": args.prebinarize,
        "trace": args.trace,
        "images": per_image,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "sidecar.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    log.info("wrote %d predictions to %s", count, out)
    return 0


def _read_predictions(pred_dir: Path, ids: list[str]):
    masks, confs = [], []
    for pair_id in ids:
        mask_path = pred_dir / "mask" / f"{pair_id}.png"
        if not mask_path.exists():
            raise LoadError(f"prediction mask missing: {mask_path}")
        masks.append(synth.load_mask_png(mask_path))
        conf_path = pred_dir / "conf" / f"{pair_id}.png"
        if conf_path.exists():
            confs.append(np.asarray(Image.open(conf_path).convert("L")).astype(np.float64) / 255.0)
    if confs and len(confs) != len(masks):
        raise LoadError(f"{pred_dir}: has confidence maps for only some predictions")
    return masks, confs


def cmd_eval(args) -> int:
    gts = {s.sample_id: s.mask for s in synth.read_split(args.gt_data, args.split)}
    pred_dir = Path(args.pred)
    ids = sorted(p.stem for p in (pred_dir / "mask").glob("*.png"))
    ids = [i for i in ids if i in gts]
    if not ids:
        raise LoadError(f"no predictions in {pred_dir} match ground-truth ids of split {args.split!r}")
    preds, confs = _read_predictions(pred_dir, ids)
    gt_masks = [gts[i] for i in ids]

    report = evaluation.binary_prf(preds, gt_masks, soft_preds=confs or None)
    auroc = evaluation.error_auroc(confs, preds, gt_masks) if confs else None
    coherence = evaluation.coherence_report(preds, gt_masks, args.min_area, args.connectivity)

    out = Path(args.out)
    _write_csv(out / "metrics.csv",
               ["samples", "precision", "recall", "f1", "mae", "error_auroc"],
               [[len(ids), f"{report.precision:.6f}", f"{report.recall:.6f}",
                 f"{report.f1:.6f}", f"{report.mae:.6f}",
                 "" if auroc is None else f"{auroc:.6f}"]])
    _write_csv(out / "coherence.csv",
               ["samples", "cc_deviation", "hole_deviation", "min_area", "connectivity"],
               [[len(ids), f"{coherence.cc_deviation:.6f}", f"{coherence.hole_deviation:.6f}",
                 args.min_area, args.connectivity]])
    if confs:
        rows = evaluation.threshold_sweep(confs, gt_masks, args.thresholds)
        _write_csv(out / "sweep.csv", ["threshold", "precision", "recall", "f1"],
                   [[f"{r['threshold']:.2f}", f"{r['precision']:.6f}",
                     f"{r['recall']:.6f}", f"{r['f1']:.6f}"] for r in rows])
    log.info("eval over %d samples: P=%.4f R=%.4f F1=%.4f", len(ids),
             report.precision, report.recall, report.f1)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    state, meta, codec = _load_bundle(Path(args.checkpoint))
    samples = synth.read_split(args.data, args.split)
    if args.limit:
        samples = samples[: args.limit]
    stacks, gts = [], []
    for index, s in enumerate(samples):
        result = inference.ensemble_predict(
            state.model, state.cond, codec, s.image_t1, s.image_t2,
            cfg.flow.steps, cfg.flow.repetitions, mix_seed(args.resolved_seed, index),
        )
        stacks.append(result.stack)
        gts.append(s.mask)
    rows = evaluation.threshold_sweep(stacks, gts, args.thresholds)
    out = Path(args.out)
    _write_csv(out / "sweep.csv", ["threshold", "precision", "recall", "f1"],
               [[f"{r['threshold']:.2f}", f"{r['precision']:.6f}",
                 f"{r['recall']:.6f}", f"{r['f1']:.6f}"] for r in rows])
    best = max(rows, key=lambda r: r["f1"])
    in_vote_regime = VOTE_REGIME[0] < best["threshold"] <= VOTE_REGIME[1]
    choice = {
        "split": args.split,
        "samples": len(samples),
        "chosen_threshold": best["threshold"],
        "chosen_f1": best["f1"],
        "two_of_five_regime": in_vote_regime,
        "note": (
            "threshold corresponds to the >=2-of-5 vote rule"
            if in_vote_regime
            else "threshold deviates from the >=2-of-5 vote regime"
        ),
    }
    (out / "chosen_threshold.json").write_text(json.dumps(choice, indent=2))
    log.info("best threshold %.2f (F1=%.4f, %s)", best["threshold"], best["f1"], choice["note"])
    return 0


_ABLATION_AXES = {
    "diff": ("diff_mode", DIFF_MODES),
    "norm": ("norm_mode", NORM_MODES),
    "tsample": ("t_sampling", TIME_MODES),
    "resize": ("resize_mode", RESIZE_MODES),
}


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    codec = load_codec(args.codec)
    field, values = _ABLATION_AXES[args.axis]
    out = Path(args.out)
    rows = []
    for value in values:
        variant_cfg = _load_config(args)
        setattr(variant_cfg.flow, field, value)
        variant_cfg.flow.validate()
        run_dir = out / f"{args.axis}_{value}"
        result = training.train(variant_cfg, args.data, codec, args.codec, run_dir)
        state = result.state
        state.model.eval()
        state.cond.eval()
        samples = synth.read_split(args.data, "val")
        if args.eval_limit:
            samples = samples[: args.eval_limit]
        preds, gts = [], []
        for index, s in enumerate(samples):
            r = inference.ensemble_predict(
                state.model, state.cond, codec, s.image_t1, s.image_t2,
                variant_cfg.flow.steps, variant_cfg.flow.repetitions,
                mix_seed(args.resolved_seed, index),
            )
            preds.append(inference.binarize(r.confidence, variant_cfg.flow.threshold))
            gts.append(s.mask)
        m = evaluation.binary_prf(preds, gts)
        rows.append([value, f"{m.f1:.6f}", f"{m.precision:.6f}", f"{m.recall:.6f}"])
        log.info("ablation %s=%s: F1=%.4f", field, value, m.f1)
    _write_csv(out / "ablation.csv", [field, "f1", "precision", "recall"], rows)
    return 0


def _time_ensemble(state, codec, sample, steps, reps, seed, warmup, timed) -> float:
    for _ in range(warmup):
        inference.ensemble_predict(state.model, state.cond, codec,
                                   sample.image_t1, sample.image_t2, steps, reps, seed)
    times = []
    for _ in range(timed):
        start = time.perf_counter()
        inference.ensemble_predict(state.model, state.cond, codec,
                                   sample.image_t1, sample.image_t2, steps, reps, seed)
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    state, meta, codec = _load_bundle(Path(args.checkpoint))
    samples = synth.read_split(args.data, "test")
    if args.eval_limit:
        eval_samples = samples[: args.eval_limit]
    else:
        eval_samples = samples
    timing_sample = samples[0]

    def f1_for(steps, reps):
        preds, gts = [], []
        for index, s in enumerate(eval_samples):
            r = inference.ensemble_predict(
                state.model, state.cond, codec, s.image_t1, s.image_t2,
                steps, reps, mix_seed(args.resolved_seed, index),
            )
            preds.append(inference.binarize(r.confidence, cfg.flow.threshold))
            gts.append(s.mask)
        m = evaluation.binary_prf(preds, gts)
        return m

    rows = []
    for steps in BENCH_STEP_GRID:
        wall = _time_ensemble(state, codec, timing_sample, steps, 5, args.resolved_seed,
                              args.warmup, args.timed_runs)
        m = f1_for(steps, 5)
        rows.append(["sweep_steps", steps, 5, f"{wall:.6f}", f"{m.f1:.6f}",
                     f"{m.precision:.6f}", f"{m.recall:.6f}"])
        log.info("bench T=%d N=5: %.4fs/img F1=%.4f", steps, wall, m.f1)
    for reps in BENCH_REP_GRID:
        wall = _time_ensemble(state, codec, timing_sample, 10, reps, args.resolved_seed,
                              args.warmup, args.timed_runs)
        m = f1_for(10, reps)
        rows.append(["sweep_reps", 10, reps, f"{wall:.6f}", f"{m.f1:.6f}",
                     f"{m.precision:.6f}", f"{m.recall:.6f}"])
        log.info("bench T=10 N=%d: %.4fs/img F1=%.4f", reps, wall, m.f1)
    out = Path(args.out)
    _write_csv(out / "bench.csv",
               ["mode", "steps", "repetitions", "wall_time_s", "f1", "precision", "recall"], rows)
    if args.plot:
        from .plots import render_bench_chart

        render_bench_chart(out / "bench.csv", out / "bench.png")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="YAML config file (sections: flow, generator, codec)")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (fallback: CHANGEFLOW_SEED env var, then 0)")


def _add_flow_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--steps", type=int, default=None, help="Euler integration steps T")
    parser.add_argument("--reps", dest="repetitions", type=int, default=None,
                        help="ensemble repetitions N")
    parser.add_argument("--threshold", type=float, default=None, help="binarization threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="changeflow",
        description="Latent rectified-flow change detection on bi-temporal image pairs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=2000, help="number of samples")
    p.add_argument("--image-size", dest="image_size", type=int, default=None)
    p.add_argument("--change-fraction", dest="change_fraction", type=float, default=None,
                   help="target changed-pixel fraction")
    p.add_argument("--change-probability", dest="change_probability", type=float, default=None)
    p.add_argument("--photometric", type=float, default=None,
                   help="brightness/contrast jitter amplitude")
    p.add_argument("--texture-scale", dest="texture_scale", type=float, default=None)
    p.add_argument("--radius-min", dest="radius_min", type=float, default=None)
    p.add_argument("--radius-max", dest="radius_max", type=float, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-codec", help="train the mask codec",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--codec-kind", choices=["conv", "identity"], default=None)
    p.add_argument("--codec-epochs", type=int, default=None)
    p.add_argument("--mask-limit", type=int, default=None,
                   help="cap the number of training masks")
    p.set_defaults(func=cmd_train_codec)

    p = sub.add_parser("train", help="train the velocity network",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--codec", type=Path, required=True, help="codec checkpoint")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--t-sampling", dest="t_sampling", choices=list(TIME_MODES), default=None)
    p.add_argument("--diff-mode", dest="diff_mode", choices=list(DIFF_MODES), default=None)
    p.add_argument("--norm-mode", dest="norm_mode", choices=list(NORM_MODES), default=None)
    p.add_argument("--resize-mode", dest="resize_mode", choices=list(RESIZE_MODES), default=None)
    p.add_argument("--resume", type=Path, default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="generate change masks",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    _add_flow_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--t1", type=Path, default=None, help="image at the first time point")
    p.add_argument("--t2", type=Path, default=None, help="image at the second time point")
    p.add_argument("--mask", type=Path, default=None, help="optional ground-truth mask")
    p.add_argument("--data", type=Path, default=None, help="dataset root (instead of --t1/--t2)")
    p.add_argument("--split", default="test", choices=list(synth.SPLITS))
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--trace", action="store_true", help="write per-step confidence PNGs")
    p.add_argument("--prebinarize", action="store_true",
                   help="threshold each ensemble member at 0.5 before averaging")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    p.add_argument("--pred", type=Path, required=True, help="directory written by infer")
    p.add_argument("--gt-data", dest="gt_data", type=Path, required=True, help="dataset root")
    p.add_argument("--split", default="test", choices=list(synth.SPLITS))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--min-area", dest="min_area", type=int, default=10)
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=4)
    p.add_argument("--thresholds", type=float, nargs="+", default=list(DEFAULT_SWEEP_THRESHOLDS))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="threshold selection on a split",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    _add_flow_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", default="val", choices=list(synth.SPLITS))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--thresholds", type=float, nargs="+", default=list(DEFAULT_SWEEP_THRESHOLDS))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="train design variants on identical data/seeds",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    _add_flow_flags(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--codec", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--axis", choices=list(_ABLATION_AXES), required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--eval-limit", dest="eval_limit", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="speed-accuracy trade-off over T and N",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_common(p)
    _add_flow_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--timed-runs", dest="timed_runs", type=int, default=100,
                   help="timed runs per configuration (median reported)")
    p.add_argument("--warmup", type=int, default=20, help="warm-up runs before timing")
    p.add_argument("--eval-limit", dest="eval_limit", type=int, default=None,
                   help="cap test samples used for F1")
    p.add_argument("--plot", action="store_true", help="also render a PNG line chart")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    args.resolved_seed = _resolve_seed(args)
    try:
        return args.func(args)
    except Exception as err:  # single-line diagnostic, nonzero exit
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
