"""End-to-end training of the velocity network with a frozen mask codec.

Per step: encode masks to target latents, draw noise and a timestep, form the
interpolated state, build conditioning from the image pair, predict velocity,
apply the velocity-regression loss, and step one optimizer over two parameter
groups (velocity net + normalization affine at the base rate, feature encoder
at half). Cosine-decayed learning rate without restarts, global-norm gradient
clipping, no gradient ever reaches the codec.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
import math
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import synth
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import encode_masks
from .config import FlowConfig, RunConfig
from .conditioning import CondVariant, ConditioningBuilder
from .errors import InvalidArgumentError, LoadError, NumericsError
from .flow_core import interpolate, mix_seed, rf_loss, sample_timesteps
from .velocity import VelocityModel, build_velocity_model, predict_velocity

log = logging.getLogger(__name__)

ENCODER_LR_SCALE = 0.5  # feature encoder trains at half the velocity net's rate


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Cosine decay from base_lr to 0 without restarts; clamps past the end."""
    if total_steps < 1:
        raise InvalidArgumentError(f"total_steps must be >= 1, got {total_steps}")
    s = min(max(step, 0), total_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * s / total_steps))


def make_conditioning_builder(cfg: FlowConfig, seed: int) -> ConditioningBuilder:
    variant = CondVariant(cfg.diff_mode, cfg.norm_mode, cfg.resize_mode)
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return ConditioningBuilder(variant, cfg.feature_channels, cfg.latent_size)


def make_optimizer(model: VelocityModel, cond: ConditioningBuilder, cfg: FlowConfig) -> torch.optim.Optimizer:
    affine_params = list(cond.affine.parameters()) if cond.affine is not None else []
    groups = [
        {"params": list(model.parameters()) + affine_params, "lr_scale": 1.0},
        {"params": list(cond.encoder.parameters()), "lr_scale": ENCODER_LR_SCALE},
    ]
    return torch.optim.AdamW(groups, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)


@dataclass
class TrainState:
    cfg: FlowConfig
    model: VelocityModel
    cond: ConditioningBuilder
    optimizer: torch.optim.Optimizer
    total_steps: int
    step: int = 0
    epoch: int = 0
    loss_history: list[float] = field(default_factory=list)
    t_history: list[float] = field(default_factory=list)
    noise_gen: torch.Generator | None = None
    time_rng: np.random.Generator | None = None
    data_rng: np.random.Generator | None = None


def init_train_state(cfg: FlowConfig, total_steps: int) -> TrainState:
    """Build model, conditioning, optimizer, and the three derived RNG streams."""
    model = build_velocity_model(cfg, seed=mix_seed(cfg.seed, 1))
    cond = make_conditioning_builder(cfg, seed=mix_seed(cfg.seed, 2))
    noise_gen = torch.Generator().manual_seed(mix_seed(cfg.seed, 3))
    time_rng = np.random.default_rng(mix_seed(cfg.seed, 4))
    data_rng = np.random.default_rng(mix_seed(cfg.seed, 5))
    return TrainState(
        cfg=cfg,
        model=model,
        cond=cond,
        optimizer=make_optimizer(model, cond, cfg),
        total_steps=total_steps,
        noise_gen=noise_gen,
        time_rng=time_rng,
        data_rng=data_rng,
    )


def flow_matching_loss(
    model: VelocityModel,
    cond_builder: ConditioningBuilder,
    codec,
    imgs1: torch.Tensor,
    imgs2: torch.Tensor,
    masks: torch.Tensor,
    x0: torch.Tensor,
    t: torch.Tensor,
) -> torch.Tensor:
    """Loss composition with explicit noise and timesteps (the sampled path of train_step)."""
    x1 = encode_masks(codec, masks)
    x_t = interpolate(x0, x1, t)
    cond = cond_builder(imgs1, imgs2)
    v_pred = predict_velocity(model, x_t, cond, t)
    return rf_loss(v_pred, x0, x1)


def train_step(state: TrainState, batch: dict, codec) -> float:
    """One optimizer step on a batch; returns the scalar loss."""
    cfg = state.cfg
    imgs1, imgs2, masks = batch["t1"], batch["t2"], batch["mask"]
    b = masks.shape[0]
    latent_shape = (b, cfg.latent_channels, cfg.latent_size, cfg.latent_size)
    x0 = torch.randn(latent_shape, generator=state.noise_gen)
    t_np = sample_timesteps(cfg.t_sampling, state.time_rng, b)
    t = torch.from_numpy(t_np).float()

    loss = flow_matching_loss(state.model, state.cond, codec, imgs1, imgs2, masks, x0, t)
    if not torch.isfinite(loss):
        raise NumericsError(
            f"non-finite loss at optimizer step {state.step}",
            step=state.step,
            details={"t": t_np.tolist(), "batch_ids": batch.get("ids", [])},
        )
    state.optimizer.zero_grad()
    loss.backward()
    if cfg.grad_clip > 0:
        params = [p for g in state.optimizer.param_groups for p in g["params"]]
        torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
    lr = cosine_lr(state.step, state.total_steps, cfg.learning_rate)
    for group in state.optimizer.param_groups:
        group["lr"] = lr * group["lr_scale"]
    state.optimizer.step()
    state.step += 1
    value = float(loss.item())
    state.loss_history.append(value)
    state.t_history.extend(t_np.tolist())
    return value


def _batch_tensors(samples: list[synth.ChangeSample], idx: np.ndarray, rng: np.random.Generator | None) -> dict:
    chosen = [samples[i] for i in idx]
    if rng is not None:
        chosen = [synth.augment(s, rng) for s in chosen]
    imgs1 = torch.from_numpy(np.stack([s.image_t1 for s in chosen])).permute(0, 3, 1, 2).contiguous()
    imgs2 = torch.from_numpy(np.stack([s.image_t2 for s in chosen])).permute(0, 3, 1, 2).contiguous()
    masks = torch.from_numpy(np.stack([s.mask for s in chosen]).astype(np.float32))
    return {"t1": imgs1, "t2": imgs2, "mask": masks, "ids": [s.sample_id for s in chosen]}


def _file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_train_checkpoint(path: str | Path, state: TrainState, codec_path: str | Path, extra_meta: dict | None = None) -> None:
    """Bundle model + conditioning weights, optimizer moments, config, seed, codec reference."""
    codec_path = Path(codec_path)
    tensors: dict[str, np.ndarray] = {}
    for name, value in state.model.state_dict().items():
        tensors[f"model.{name}"] = value.detach().cpu().numpy()
    for name, value in state.cond.state_dict().items():
        tensors[f"cond.{name}"] = value.detach().cpu().numpy()
    named = list(state.model.named_parameters()) + [
        (f"cond_{n}", p) for n, p in state.cond.named_parameters()
    ]
    for name, param in named:
        opt_state = state.optimizer.state.get(param)
        if opt_state and "exp_avg" in opt_state:
            tensors[f"opt.{name}.exp_avg"] = opt_state["exp_avg"].detach().cpu().numpy()
            tensors[f"opt.{name}.exp_avg_sq"] = opt_state["exp_avg_sq"].detach().cpu().numpy()
    meta = {
        "version": 1,
        "flow_config": dataclasses.asdict(state.cfg),
        "seed": state.cfg.seed,
        "step": state.step,
        "epoch": state.epoch,
        "total_steps": state.total_steps,
        "parameter_count": state.model.parameter_count,
        "codec_path": codec_path.name,
        "codec_sha256": _file_sha256(codec_path),
    }
    meta.update(extra_meta or {})
    save_checkpoint(path, "flow-train", meta, tensors)


def load_train_checkpoint(path: str | Path, *, for_resume: bool = False) -> tuple[TrainState, dict]:
    """Rebuild a TrainState from a checkpoint; optimizer moments restored when resuming."""
    kind, meta, tensors = load_checkpoint(path)
    if kind != "flow-train":
        raise LoadError(f"{path}: not a training checkpoint (kind={kind!r})")
    cfg = FlowConfig(**meta["flow_config"]).validate()
    state = init_train_state(cfg, total_steps=int(meta["total_steps"]))
    model_sd = {k[len("model."):]: torch.from_numpy(v) for k, v in tensors.items() if k.startswith("model.")}
    cond_sd = {k[len("cond."):]: torch.from_numpy(v) for k, v in tensors.items() if k.startswith("cond.")}
    state.model.load_state_dict(model_sd)
    state.cond.load_state_dict(cond_sd)
    state.step = int(meta["step"])
    state.epoch = int(meta["epoch"])
    if for_resume:
        named = list(state.model.named_parameters()) + [
            (f"cond_{n}", p) for n, p in state.cond.named_parameters()
        ]
        for name, param in named:
            avg_key = f"opt.{name}.exp_avg"
            if avg_key in tensors:
                state.optimizer.state[param] = {
                    "step": torch.tensor(float(state.step)),
                    "exp_avg": torch.from_numpy(tensors[avg_key]),
                    "exp_avg_sq": torch.from_numpy(tensors[f"opt.{name}.exp_avg_sq"]),
                }
    else:
        state.model.eval()
        state.cond.eval()
    return state, meta


@dataclass
class TrainResult:
    checkpoint_path: Path
    loss_csv_path: Path
    epoch_means: list[float]
    state: TrainState
    wall_time_s: float


def train(
    run_cfg: RunConfig,
    dataset_root: str | Path,
    codec,
    codec_path: str | Path,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
) -> TrainResult:
    """Run the configured number of epochs over the train split and write artifacts."""
    cfg = run_cfg.flow.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = synth.read_split(dataset_root, "train")
    if not samples:
        raise InvalidArgumentError(f"train split of {dataset_root} is empty")
    steps_per_epoch = math.ceil(len(samples) / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs

    if resume_from is not None:
        state, prev_meta = load_train_checkpoint(resume_from, for_resume=True)
        prev_cfg = dataclasses.asdict(state.cfg)
        next_cfg = dataclasses.asdict(cfg)
        prev_cfg.pop("epochs")  # extending the schedule is the point of resuming
        next_cfg.pop("epochs")
        if prev_cfg != next_cfg:
            raise InvalidArgumentError("resume checkpoint was trained with a different flow config")
        state.cfg = cfg
        state.total_steps = total_steps
        state.model.train()
        state.cond.train()
    else:
        state = init_train_state(cfg, total_steps)

    loss_csv = out_dir / "train_log.csv"
    mode = "a" if (resume_from is not None and loss_csv.exists()) else "w"
    start = time.perf_counter()
    epoch_means: list[float] = []
    with open(loss_csv, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(["epoch", "step", "loss", "lr"])
        for epoch in range(state.epoch, cfg.epochs):
            order = state.data_rng.permutation(len(samples))
            losses = []
            for s in range(0, len(order), cfg.batch_size):
                batch = _batch_tensors(samples, order[s:s + cfg.batch_size], state.data_rng)
                lr = cosine_lr(state.step, state.total_steps, cfg.learning_rate)
                loss = train_step(state, batch, codec)
                writer.writerow([epoch, state.step - 1, f"{loss:.6f}", f"{lr:.8f}"])
                losses.append(loss)
            state.epoch = epoch + 1
            epoch_means.append(float(np.mean(losses)))
            log.info("epoch %d/%d mean loss %.5f", epoch + 1, cfg.epochs, epoch_means[-1])
    wall = time.perf_counter() - start
    ckpt_path = out_dir / "flow.ckpt"
    # keep the referenced codec next to the checkpoint so the bundle is portable
    codec_path = Path(codec_path)
    local_codec = out_dir / codec_path.name
    if local_codec.resolve() != codec_path.resolve():
        shutil.copyfile(codec_path, local_codec)
    save_train_checkpoint(ckpt_path, state, local_codec, {"wall_time_s": wall})
    return TrainResult(ckpt_path, loss_csv, epoch_means, state, wall)
