"""Generation-guidance signal from a bi-temporal image pair.

One shared-weight feature encoder maps both images to feature grids; the
grids are normalized per spatial location, differenced (absolute by default,
with signed and concatenation variants for ablations), and spatially resized
to the latent grid. Absolute differencing keeps the signal agnostic to
temporal ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import DIFF_MODES, NORM_MODES, RESIZE_MODES
from .errors import InvalidArgumentError, ShapeError

_LN_EPS = 1e-5
_L2_EPS = 1e-6


@dataclass(frozen=True)
class CondVariant:
    """One point in the conditioning design space."""

    diff_mode: str = "abs_diff"
    norm_mode: str = "layer_norm"
    resize_mode: str = "bicubic"

    def __post_init__(self):
        if self.diff_mode not in DIFF_MODES:
            raise InvalidArgumentError(f"diff_mode must be one of {DIFF_MODES}, got {self.diff_mode!r}")
        if self.norm_mode not in NORM_MODES:
            raise InvalidArgumentError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        if self.resize_mode not in RESIZE_MODES:
            raise InvalidArgumentError(f"resize_mode must be one of {RESIZE_MODES}, got {self.resize_mode!r}")


class FeatureEncoder(nn.Module):
    """Small convolutional encoder, downsample factor 8, shared across time points."""

    def __init__(self, channels: int = 32, in_channels: int = 3):
        super().__init__()
        self.in_channels = in_channels
        self.channels = channels
        self.downsample = 8
        mid = max(channels // 2, 8)
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, mid, 3, stride=2, padding=1),
            nn.GroupNorm(4, mid),
            nn.SiLU(),
            nn.Conv2d(mid, channels, 3, stride=2, padding=1),
            nn.GroupNorm(8, channels),
            nn.SiLU(),
            nn.Conv2d(channels, channels, 3, stride=2, padding=1),
            nn.GroupNorm(8, channels),
            nn.SiLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return extract_features(self, image)


def extract_features(encoder: FeatureEncoder, image: torch.Tensor) -> torch.Tensor:
    """Run the shared encoder on (3, H, W) or (B, 3, H, W) images."""
    single = image.dim() == 3
    x = image[None] if single else image
    if x.dim() != 4 or x.shape[1] != encoder.in_channels:
        raise ShapeError(f"expected ({encoder.in_channels}, H, W) images, got {tuple(image.shape)}")
    if x.shape[2] % encoder.downsample or x.shape[3] % encoder.downsample:
        raise ShapeError(
            f"image dims {tuple(x.shape[2:])} not divisible by encoder downsample {encoder.downsample}"
        )
    feats = encoder.net(x)
    return feats[0] if single else feats


class ChannelAffine(nn.Module):
    """Learnable per-channel scale/shift for layer_norm, shared across both branches."""

    def __init__(self, channels: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        shape = (1, -1, 1, 1) if f.dim() == 4 else (-1, 1, 1)
        return f * self.weight.view(shape) + self.bias.view(shape)


def normalize_features(f: torch.Tensor, mode: str, affine: ChannelAffine | None = None) -> torch.Tensor:
    """Normalize the channel vector at every spatial location.

    ``layer_norm`` standardizes each location's channel vector to mean 0 /
    variance 1 (then applies the shared affine, identity at init);
    ``l2_norm`` divides by the Euclidean norm (plus epsilon, no parameters);
    ``none`` returns the input unchanged.
    """
    cdim = 1 if f.dim() == 4 else 0
    if mode == "layer_norm":
        if f.shape[cdim] < 2:
            raise ShapeError("layer_norm needs at least 2 channels")
        mean = f.mean(dim=cdim, keepdim=True)
        var = f.var(dim=cdim, unbiased=False, keepdim=True)
        out = (f - mean) / torch.sqrt(var + _LN_EPS)
        return affine(out) if affine is not None else out
    if mode == "l2_norm":
        norm = torch.linalg.vector_norm(f, dim=cdim, keepdim=True)
        return f / (norm + _L2_EPS)
    if mode == "none":
        return f
    raise InvalidArgumentError(f"unknown norm mode {mode!r}; expected one of {NORM_MODES}")


def build_conditioning(
    f1: torch.Tensor,
    f2: torch.Tensor,
    variant: CondVariant,
    affine: ChannelAffine | None = None,
) -> torch.Tensor:
    """Combine two normalized feature maps into the (pre-resize) guidance signal."""
    if f1.shape != f2.shape:
        raise ShapeError(f"feature shapes differ: {tuple(f1.shape)} vs {tuple(f2.shape)}")
    n1 = normalize_features(f1, variant.norm_mode, affine)
    n2 = normalize_features(f2, variant.norm_mode, affine)
    cdim = 1 if f1.dim() == 4 else 0
    if variant.diff_mode == "abs_diff":
        return torch.abs(n1 - n2)
    if variant.diff_mode == "signed_diff":
        # first acquisition minus the later one
        return n1 - n2
    if variant.diff_mode == "concat":
        return torch.cat([n1, n2], dim=cdim)
    raise InvalidArgumentError(f"unknown diff mode {variant.diff_mode!r}")


def resize_conditioning(signal: torch.Tensor, target: tuple[int, int], mode: str = "bicubic") -> torch.Tensor:
    """Per-channel spatial interpolation of the signal to the latent grid."""
    if mode not in RESIZE_MODES:
        raise InvalidArgumentError(f"unknown resize mode {mode!r}; expected one of {RESIZE_MODES}")
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise InvalidArgumentError(f"target dims must be positive, got {(th, tw)}")
    single = signal.dim() == 3
    x = signal[None] if single else signal
    if x.dim() != 4:
        raise ShapeError(f"expected (c, h, w) or (B, c, h, w) signal, got {tuple(signal.shape)}")
    if x.shape[2:] == (th, tw):
        return signal
    kwargs = {} if mode == "nearest" else {"align_corners": True}
    out = F.interpolate(x, size=(th, tw), mode=mode, **kwargs)
    return out[0] if single else out


class ConditioningBuilder(nn.Module):
    """Images -> resized guidance signal; owns the encoder and the shared affine."""

    def __init__(self, variant: CondVariant, feature_channels: int = 32, latent_size: int = 16):
        super().__init__()
        self.variant = variant
        self.latent_size = latent_size
        self.encoder = FeatureEncoder(channels=feature_channels)
        self.affine = ChannelAffine(feature_channels) if variant.norm_mode == "layer_norm" else None

    @property
    def cond_channels(self) -> int:
        c = self.encoder.channels
        return 2 * c if self.variant.diff_mode == "concat" else c

    def forward(self, image_t1: torch.Tensor, image_t2: torch.Tensor) -> torch.Tensor:
        if image_t1.shape != image_t2.shape:
            raise ShapeError(
                f"bi-temporal images must share a shape, got {tuple(image_t1.shape)} vs {tuple(image_t2.shape)}"
            )
        f1 = extract_features(self.encoder, image_t1)
        f2 = extract_features(self.encoder, image_t2)
        signal = build_conditioning(f1, f2, self.variant, self.affine)
        return resize_conditioning(signal, (self.latent_size, self.latent_size), self.variant.resize_mode)
