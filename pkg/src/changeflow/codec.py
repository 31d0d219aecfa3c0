"""Mask codec: binary masks <-> compact latents.

The encode path replicates a binary mask over 3 channels, rescales
{0,1} -> [-1,1], and applies the encoder; the decode path maps a latent back
to a 3-channel image in [-1,1], rescales each channel to [0,1], averages the
channels, and clamps. Two codecs share this protocol:

* ``IdentityCodec`` — exact inverse (factor 1, 3 latent channels); its
  round trip reproduces the input bit for bit, which makes it the reference
  codec for tests.
* ``ConvMaskCodec`` — trainable convolutional autoencoder (factor 4,
  4 latent channels by default) standing in for a large pretrained
  autoencoder. Latents are squashed through tanh so the flow operates on a
  bounded, well-scaled state.

Encoding is deterministic: no sampling anywhere in the codec.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .config import CodecConfig
from .errors import InvalidArgumentError, LoadError, ShapeError


def _as_mask_tensor(mask: np.ndarray | torch.Tensor) -> torch.Tensor:
    """Validate a single H x W binary mask and return it as float32 torch."""
    if isinstance(mask, torch.Tensor):
        arr = mask.detach().cpu().numpy()
    else:
        arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {arr.shape}")
    vals = np.unique(arr)
    if not np.isin(vals, (0, 1)).all():
        raise InvalidArgumentError(f"mask entries must be exactly 0 or 1, found {vals[:8]}")
    return torch.from_numpy(arr.astype(np.float32))


class IdentityCodec:
    """Exact mask codec: replicate/rescale only, factor 1, 3 channels."""

    kind = "identity"
    factor = 1
    channels = 3

    def encoder_apply(self, x: torch.Tensor) -> torch.Tensor:
        return x

    def decoder_apply(self, z: torch.Tensor) -> torch.Tensor:
        return z

    def parameters(self):
        return iter(())

    def eval(self):
        return self

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, "codec/identity", {"version": 1, "factor": 1, "channels": 3}, {})


class ConvMaskCodec(nn.Module):
    """Convolutional autoencoder over replicated 3-channel masks.

    Spatial factor 4 (two stride-2 stages), tanh-bounded latent. Value
    convention: input rescaled to [-1,1], decoder output in [-1,1] via tanh.
    """

    kind = "conv"

    def __init__(self, channels: int = 4, base_width: int = 16):
        super().__init__()
        self.factor = 4
        self.channels = channels
        self.base_width = base_width
        w = base_width
        self.encoder = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(w, 2 * w, 4, stride=2, padding=1),
            nn.GroupNorm(8, 2 * w),
            nn.SiLU(),
            nn.Conv2d(2 * w, 3 * w, 4, stride=2, padding=1),
            nn.GroupNorm(8, 3 * w),
            nn.SiLU(),
            nn.Conv2d(3 * w, 3 * w, 3, padding=1),
            nn.GroupNorm(8, 3 * w),
            nn.SiLU(),
            nn.Conv2d(3 * w, channels, 3, padding=1),
            nn.Tanh(),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(channels, 3 * w, 3, padding=1),
            nn.GroupNorm(8, 3 * w),
            nn.SiLU(),
            nn.Conv2d(3 * w, 3 * w, 3, padding=1),
            nn.GroupNorm(8, 3 * w),
            nn.SiLU(),
            nn.Conv2d(3 * w, 8 * w, 3, padding=1),
            nn.PixelShuffle(2),
            nn.GroupNorm(8, 2 * w),
            nn.SiLU(),
            nn.Conv2d(2 * w, 2 * w, 3, padding=1),
            nn.GroupNorm(8, 2 * w),
            nn.SiLU(),
            nn.Conv2d(2 * w, 4 * w, 3, padding=1),
            nn.PixelShuffle(2),
            nn.GroupNorm(8, w),
            nn.SiLU(),
            nn.Conv2d(w, w, 3, padding=1),
            nn.GroupNorm(8, w),
            nn.SiLU(),
            nn.Conv2d(w, 3, 3, padding=1),
            nn.Tanh(),
        )

    def encoder_apply(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(x)

    def decoder_apply(self, z: torch.Tensor) -> torch.Tensor:
        return self.decoder(z)

    def save(self, path: str | Path) -> None:
        meta = {
            "version": 1,
            "factor": self.factor,
            "channels": self.channels,
            "base_width": self.base_width,
            "value_range": "[-1,1]",
        }
        tensors = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        save_checkpoint(path, "codec/conv", meta, tensors)


def load_codec(path: str | Path) -> IdentityCodec | ConvMaskCodec:
    kind, meta, tensors = load_checkpoint(path)
    if kind == "codec/identity":
        return IdentityCodec()
    if kind == "codec/conv":
        codec = ConvMaskCodec(channels=int(meta["channels"]), base_width=int(meta["base_width"]))
        codec.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
        codec.eval()
        return codec
    raise LoadError(f"{path}: not a codec checkpoint (kind={kind!r})")


def encode_masks(codec, masks: torch.Tensor) -> torch.Tensor:
    """Encode a (B, H, W) binary batch to (B, d, H/f, W/f) latents. No gradients."""
    if masks.dim() != 3:
        raise ShapeError(f"expected (B, H, W) masks, got {tuple(masks.shape)}")
    _, h, w = masks.shape
    f = codec.factor
    if h % f != 0 or w % f != 0:
        raise ShapeError(f"mask dims {h}x{w} not divisible by codec factor {f}")
    x = masks[:, None, :, :].repeat(1, 3, 1, 1) * 2.0 - 1.0
    with torch.no_grad():
        return codec.encoder_apply(x)


def encode_mask(codec, mask: np.ndarray | torch.Tensor) -> torch.Tensor:
    """Encode one H x W binary mask to a (d, H/f, W/f) latent."""
    m = _as_mask_tensor(mask)
    return encode_masks(codec, m[None])[0]


def decode_latents(codec, latents: torch.Tensor) -> torch.Tensor:
    """Decode (B, d, h, w) latents to (B, H, W) soft masks in [0, 1]."""
    if latents.dim() != 4:
        raise ShapeError(f"expected (B, d, h, w) latents, got {tuple(latents.shape)}")
    if latents.shape[1] != codec.channels:
        raise ShapeError(f"latent has {latents.shape[1]} channels, codec expects {codec.channels}")
    with torch.no_grad():
        rgb = codec.decoder_apply(latents)
    soft = ((rgb + 1.0) * 0.5).mean(dim=1)
    return soft.clamp(0.0, 1.0)


def decode_latent(codec, latent: torch.Tensor) -> torch.Tensor:
    """Decode one (d, h, w) latent to an H x W soft mask in [0, 1]."""
    if latent.dim() != 3:
        raise ShapeError(f"expected (d, h, w) latent, got {tuple(latent.shape)}")
    return decode_latents(codec, latent[None])[0]


@dataclass
class RoundtripReport:
    f1: float     # NaN when neither masks nor reconstructions contain positives
    mae: float


@dataclass
class CodecTrainReport:
    epoch_losses: list[float]
    smoothed_losses: list[float]
    holdout: RoundtripReport
    holdout_count: int
    wall_time_s: float


def roundtrip_report(codec, masks: np.ndarray, batch_size: int = 64) -> RoundtripReport:
    """Encode+decode every mask; pooled F1 on >=0.5 thresholded reconstructions, MAE on soft ones."""
    masks = np.asarray(masks)
    if masks.ndim != 3 or masks.shape[0] == 0:
        raise InvalidArgumentError(f"expected a non-empty (N, H, W) mask collection, got {masks.shape}")
    tp = fp = fn = 0
    abs_err = 0.0
    count = 0
    for start in range(0, masks.shape[0], batch_size):
        chunk = torch.from_numpy(masks[start:start + batch_size].astype(np.float32))
        soft = decode_latents(codec, encode_masks(codec, chunk)).numpy()
        hard = soft >= 0.5
        gt = masks[start:start + batch_size].astype(bool)
        tp += int(np.logical_and(hard, gt).sum())
        fp += int(np.logical_and(hard, ~gt).sum())
        fn += int(np.logical_and(~hard, gt).sum())
        abs_err += float(np.abs(soft - gt.astype(np.float32)).sum())
        count += gt.size
    if tp + fp + fn == 0:
        f1 = float("nan")
    else:
        f1 = 2 * tp / (2 * tp + fp + fn)
    return RoundtripReport(f1=f1, mae=abs_err / count)


def _smooth(values: list[float], window: int = 5) -> list[float]:
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(float(np.mean(values[lo:i + 1])))
    return out


def train_codec(masks: np.ndarray, cfg: CodecConfig) -> tuple[IdentityCodec | ConvMaskCodec, CodecTrainReport]:
    """Fit the conv codec on a mask collection with pixel MSE on the replicated target.

    A holdout slice is split off for the round-trip report. ``identity`` kind
    skips training entirely and reports an exact round trip.
    """
    masks = np.asarray(masks)
    if masks.ndim != 3 or masks.shape[0] == 0:
        raise InvalidArgumentError("train_codec needs a non-empty (N, H, W) mask collection")
    cfg.validate()
    start_time = time.perf_counter()

    if cfg.kind == "identity":
        codec = IdentityCodec()
        report = roundtrip_report(codec, masks)
        return codec, CodecTrainReport([], [], report, masks.shape[0], time.perf_counter() - start_time)

    if masks.shape[0] < 100:
        raise InvalidArgumentError(f"conv codec training needs >= 100 masks, got {masks.shape[0]}")

    n_hold = max(1, int(round(masks.shape[0] * cfg.holdout_fraction)))
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(masks.shape[0])
    hold_idx, train_idx = order[:n_hold], order[n_hold:]
    train_masks = masks[train_idx]
    hold_masks = masks[hold_idx]

    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        codec = ConvMaskCodec(channels=cfg.channels)
    if cfg.factor != codec.factor:
        raise InvalidArgumentError(f"conv codec implements factor {codec.factor}, config asks {cfg.factor}")

    opt = torch.optim.Adam(codec.parameters(), lr=cfg.learning_rate)
    total_steps = cfg.epochs * math.ceil(train_masks.shape[0] / cfg.batch_size)
    step = 0
    epoch_losses: list[float] = []
    targets = torch.from_numpy(train_masks.astype(np.float32))
    for _ in range(cfg.epochs):
        perm = rng.permutation(train_masks.shape[0])
        running = []
        for s in range(0, len(perm), cfg.batch_size):
            batch = targets[perm[s:s + cfg.batch_size]]
            x = batch[:, None].repeat(1, 3, 1, 1) * 2.0 - 1.0
            recon = codec.decoder_apply(codec.encoder_apply(x))
            loss = ((recon - x) ** 2).mean()
            for group in opt.param_groups:
                group["lr"] = cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
            opt.zero_grad()
            loss.backward()
            opt.step()
            running.append(loss.item())
            step += 1
        epoch_losses.append(float(np.mean(running)))
    codec.eval()
    report = roundtrip_report(codec, hold_masks)
    return codec, CodecTrainReport(
        epoch_losses=epoch_losses,
        smoothed_losses=_smooth(epoch_losses),
        holdout=report,
        holdout_count=int(n_hold),
        wall_time_s=time.perf_counter() - start_time,
    )
