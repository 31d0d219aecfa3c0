"""Run configuration dataclasses and the YAML key-value file loader.

Config files are flat YAML mappings whose keys are exactly the dataclass
field names below; unknown keys are rejected so typos fail before any work.
CLI flags override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import InvalidArgumentError

DIFF_MODES = ("abs_diff", "signed_diff", "concat")
NORM_MODES = ("layer_norm", "l2_norm", "none")
RESIZE_MODES = ("bicubic", "bilinear", "nearest")
TIME_MODES = ("logit_normal", "uniform")
SHAPE_TYPES = ("rectangle", "ellipse", "polygon")
CODEC_KINDS = ("conv", "identity")


@dataclass
class FlowConfig:
    """All hyperparameters of flow training and inference."""

    # geometry (desk scale: 64x64 images, 16x16x4 latent, 8x8x32 features)
    image_size: int = 64
    codec_factor: int = 4
    latent_channels: int = 4
    feature_downsample: int = 8
    feature_channels: int = 32

    # velocity network
    model_dim: int = 128
    model_layers: int = 4
    model_heads: int = 4
    time_freq_dim: int = 128

    # inference
    steps: int = 10           # Euler steps T
    repetitions: int = 5      # ensemble size N
    threshold: float = 0.3    # binarization cutoff on the confidence map

    # training
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 6e-4   # velocity net; the feature encoder gets half
    weight_decay: float = 0.0
    grad_clip: float = 1.0
    t_sampling: str = "logit_normal"

    # conditioning construction
    diff_mode: str = "abs_diff"
    norm_mode: str = "layer_norm"
    resize_mode: str = "bicubic"

    # randomness
    seed: int = 0

    def validate(self) -> "FlowConfig":
        if self.steps < 1:
            raise InvalidArgumentError(f"steps must be >= 1, got {self.steps}")
        if self.repetitions < 1:
            raise InvalidArgumentError(f"repetitions must be >= 1, got {self.repetitions}")
        if not (0.0 < self.threshold < 1.0):
            raise InvalidArgumentError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.learning_rate <= 0:
            raise InvalidArgumentError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgumentError("epochs and batch_size must be >= 1")
        if self.image_size % self.codec_factor != 0:
            raise InvalidArgumentError(
                f"image_size {self.image_size} not divisible by codec_factor {self.codec_factor}"
            )
        if self.image_size % self.feature_downsample != 0:
            raise InvalidArgumentError(
                f"image_size {self.image_size} not divisible by feature_downsample {self.feature_downsample}"
            )
        if self.t_sampling not in TIME_MODES:
            raise InvalidArgumentError(f"t_sampling must be one of {TIME_MODES}, got {self.t_sampling!r}")
        if self.diff_mode not in DIFF_MODES:
            raise InvalidArgumentError(f"diff_mode must be one of {DIFF_MODES}, got {self.diff_mode!r}")
        if self.norm_mode not in NORM_MODES:
            raise InvalidArgumentError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        if self.resize_mode not in RESIZE_MODES:
            raise InvalidArgumentError(f"resize_mode must be one of {RESIZE_MODES}, got {self.resize_mode!r}")
        return self

    @property
    def latent_size(self) -> int:
        return self.image_size // self.codec_factor

    @property
    def feature_size(self) -> int:
        return self.image_size // self.feature_downsample

    @property
    def cond_channels(self) -> int:
        return 2 * self.feature_channels if self.diff_mode == "concat" else self.feature_channels


@dataclass
class GeneratorConfig:
    """Knobs of the synthetic bi-temporal pair generator."""

    image_size: int = 64
    objects_min: int = 2
    objects_max: int = 5
    shape_types: tuple[str, ...] = SHAPE_TYPES
    change_probability: float = 0.5
    photometric_amplitude: float = 0.08
    texture_scale: float = 16.0
    target_change_fraction: float = 0.08
    seed: int = 0

    # band half-width around the target fraction accepted per changed sample;
    # the dataset-level mean must land in the same band
    fraction_tolerance: float = 0.05
    max_retries: int = 60

    # explicit object radius range in pixels; None derives it from the target fraction
    radius_min: float | None = None
    radius_max: float | None = None

    def validate(self) -> "GeneratorConfig":
        if self.image_size < 8:
            raise InvalidArgumentError(f"image_size must be >= 8, got {self.image_size}")
        if not (1 <= self.objects_min <= self.objects_max):
            raise InvalidArgumentError(
                f"object count range invalid: ({self.objects_min}, {self.objects_max})"
            )
        unknown = set(self.shape_types) - set(SHAPE_TYPES)
        if unknown:
            raise InvalidArgumentError(f"unknown shape types {sorted(unknown)}; allowed: {SHAPE_TYPES}")
        if not (0.0 <= self.change_probability <= 1.0):
            raise InvalidArgumentError("change_probability must lie in [0, 1]")
        if not (0.0 < self.target_change_fraction < 1.0):
            raise InvalidArgumentError("target_change_fraction must lie in (0, 1)")
        if self.photometric_amplitude < 0:
            raise InvalidArgumentError("photometric_amplitude must be >= 0")
        if (self.radius_min is None) != (self.radius_max is None):
            raise InvalidArgumentError("radius_min and radius_max must be set together")
        if self.radius_min is not None and not (1.0 <= self.radius_min <= self.radius_max):
            raise InvalidArgumentError(
                f"object radius range invalid: ({self.radius_min}, {self.radius_max})"
            )
        return self


@dataclass
class CodecConfig:
    """Mask codec selection and training schedule."""

    kind: str = "conv"        # "conv" (trained) or "identity" (exact, f=1, d=3)
    factor: int = 4
    channels: int = 4
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 2e-3
    holdout_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> "CodecConfig":
        if self.kind not in CODEC_KINDS:
            raise InvalidArgumentError(f"codec kind must be one of {CODEC_KINDS}, got {self.kind!r}")
        if self.factor < 1 or self.channels < 1:
            raise InvalidArgumentError("codec factor and channels must be >= 1")
        if not (0.0 < self.holdout_fraction < 1.0):
            raise InvalidArgumentError("holdout_fraction must lie in (0, 1)")
        return self


_SECTIONS = {"flow": FlowConfig, "generator": GeneratorConfig, "codec": CodecConfig}


def _coerce(cls: type, raw: dict[str, Any]) -> Any:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise InvalidArgumentError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(raw)
    for f in dataclasses.fields(cls):
        if f.name in kwargs and isinstance(kwargs[f.name], list):
            kwargs[f.name] = tuple(kwargs[f.name])
    return cls(**kwargs).validate()


@dataclass
class RunConfig:
    """Everything a CLI command needs: per-section configs, fully validated."""

    flow: FlowConfig = field(default_factory=FlowConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)

    def validate(self) -> "RunConfig":
        self.flow.validate()
        self.generator.validate()
        self.codec.validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}


def load_run_config(path: str | Path | None, overrides: dict[str, dict[str, Any]] | None = None) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus override mappings.

    The file is a mapping with optional ``flow``/``generator``/``codec``
    sections; ``overrides`` uses the same two-level structure and wins over
    file values. Unknown sections or keys are rejected.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise InvalidArgumentError(f"config file {path} must contain a mapping")
        raw = loaded
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise InvalidArgumentError(f"unknown config sections: {sorted(unknown)}")
    merged: dict[str, dict[str, Any]] = {name: dict(raw.get(name) or {}) for name in _SECTIONS}
    for name, section in (overrides or {}).items():
        if name not in _SECTIONS:
            raise InvalidArgumentError(f"unknown config section {name!r}")
        merged[name].update({k: v for k, v in section.items() if v is not None})
    return RunConfig(**{name: _coerce(cls, merged[name]) for name, cls in _SECTIONS.items()})
