"""Shared fixtures: the desk-scale artifact bundle (dataset, codec, flow model).

Heavy artifacts are trained once and cached under ``artifacts/acceptance`` at
the repo root (override with CHANGEFLOW_TEST_ARTIFACTS); a cold cache makes
the first run regenerate everything, which is the full desk training recipe.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from changeflow import synth, training
from changeflow.codec import load_codec, roundtrip_report, train_codec
from changeflow.config import CodecConfig, GeneratorConfig, RunConfig

ACCEPT_SEED = 20260810

REPO_ROOT = Path(__file__).resolve().parent.parent
ARTIFACTS = Path(os.environ.get("CHANGEFLOW_TEST_ARTIFACTS", REPO_ROOT / "artifacts" / "acceptance"))

DATASET_SIZE = 2000
CODEC_TRAIN_MASKS = 1000
CODEC_EVAL_MASKS = 200


def desk_generator_config() -> GeneratorConfig:
    return GeneratorConfig(seed=ACCEPT_SEED)


def desk_run_config() -> RunConfig:
    cfg = RunConfig()
    cfg.flow.seed = ACCEPT_SEED
    return cfg.validate()


@pytest.fixture(scope="session")
def desk_dataset() -> Path:
    root = ARTIFACTS / "dataset"
    if not (root / synth.MANIFEST_NAME).exists():
        samples = synth.generate_dataset(desk_generator_config(), DATASET_SIZE)
        synth.write_dataset(samples, root, desk_generator_config())
    return root


@pytest.fixture(scope="session")
def desk_codec_bundle(desk_dataset) -> dict:
    """Conv codec trained on 1000 train-split masks, judged on 200 test-split masks."""
    ckpt = ARTIFACTS / "codec.ckpt"
    report_path = ARTIFACTS / "codec_report.json"
    if not (ckpt.exists() and report_path.exists()):
        train_masks = np.stack([s.mask for s in synth.read_split(desk_dataset, "train")])
        eval_masks = np.stack([s.mask for s in synth.read_split(desk_dataset, "test")])
        cfg = CodecConfig(seed=ACCEPT_SEED)
        start = time.perf_counter()
        codec, train_report = train_codec(train_masks[:CODEC_TRAIN_MASKS], cfg)
        wall = time.perf_counter() - start
        holdout = roundtrip_report(codec, eval_masks[:CODEC_EVAL_MASKS])
        codec.save(ckpt)
        report = {
            "epochs": cfg.epochs,
            "train_mask_count": CODEC_TRAIN_MASKS,
            "eval_mask_count": CODEC_EVAL_MASKS,
            "holdout_f1": holdout.f1,
            "holdout_mae": holdout.mae,
            "internal_holdout_f1": train_report.holdout.f1,
            "internal_holdout_mae": train_report.holdout.mae,
            "epoch_losses": train_report.epoch_losses,
            "smoothed_losses": train_report.smoothed_losses,
            "wall_time_s": wall,
        }
        report_path.write_text(json.dumps(report, indent=2))
    return {
        "codec": load_codec(ckpt),
        "path": ckpt,
        "train_report": json.loads(report_path.read_text()),
    }


@pytest.fixture(scope="session")
def desk_flow_bundle(desk_dataset, desk_codec_bundle) -> dict:
    """Velocity model + conditioning trained for the full desk schedule."""
    ckpt = ARTIFACTS / "flow.ckpt"
    if not ckpt.exists():
        training.train(
            desk_run_config(),
            desk_dataset,
            desk_codec_bundle["codec"],
            desk_codec_bundle["path"],
            ARTIFACTS,
        )
    state, meta = training.load_train_checkpoint(ckpt)
    return {"state": state, "meta": meta, "path": ckpt, "codec": desk_codec_bundle["codec"]}
