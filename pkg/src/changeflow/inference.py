"""Ensemble mask generation from a trained model.

A single generation Euler-integrates the learned velocity field from seeded
noise and decodes the final latent to a soft mask. An ensemble repeats this
from N seeds derived from one master seed (conditioning is computed once and
shared), averages the soft masks into a per-pixel confidence map, and
binarizes it at the configured threshold. For binary ensembles of five, the
default threshold 0.3 realizes the at-least-2-votes rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .codec import decode_latents
from .conditioning import ConditioningBuilder
from .errors import InvalidArgumentError, ShapeError
from .flow_core import euler_integrate, mix_seed, sample_initial_noise
from .velocity import VelocityModel, predict_velocity


def _pair_tensors(image_t1: np.ndarray | torch.Tensor, image_t2: np.ndarray | torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    def convert(img):
        if isinstance(img, np.ndarray):
            if img.ndim != 3 or img.shape[2] != 3:
                raise ShapeError(f"expected (H, W, 3) image array, got {img.shape}")
            return torch.from_numpy(np.ascontiguousarray(img.astype(np.float32))).permute(2, 0, 1)
        return img
    t1, t2 = convert(image_t1), convert(image_t2)
    if t1.shape != t2.shape:
        raise ShapeError(f"bi-temporal shapes differ: {tuple(t1.shape)} vs {tuple(t2.shape)}")
    return t1, t2


def compute_conditioning(cond_builder: ConditioningBuilder, image_t1, image_t2) -> torch.Tensor:
    """Build the (1, c, h, w) guidance signal for one pair, gradient-free."""
    t1, t2 = _pair_tensors(image_t1, image_t2)
    cond_builder.eval()
    with torch.no_grad():
        return cond_builder(t1[None], t2[None])


def generate_mask(
    model: VelocityModel,
    cond_builder: ConditioningBuilder,
    codec,
    image_t1,
    image_t2,
    steps: int,
    seed: int,
    *,
    trace: bool = False,
    cond: torch.Tensor | None = None,
) -> np.ndarray | tuple[np.ndarray, list[np.ndarray]]:
    """One soft mask from one noise seed; optionally every per-step decode."""
    if cond is None:
        cond = compute_conditioning(cond_builder, image_t1, image_t2)
    model.eval()
    latent_shape = (1, codec.channels, cond.shape[2], cond.shape[3])
    x0 = sample_initial_noise(latent_shape, seed)
    with torch.no_grad():
        result = euler_integrate(
            x0, lambda x, t: predict_velocity(model, x, cond, t), steps, trace=trace
        )
        if trace:
            final, states = result
            soft = decode_latents(codec, final)[0].numpy()
            return soft, [decode_latents(codec, s)[0].numpy() for s in states]
        soft = decode_latents(codec, result)[0].numpy()
    return soft


@dataclass
class EnsembleResult:
    stack: np.ndarray                 # (N, H, W) soft masks in [0, 1]
    confidence: np.ndarray            # (H, W) elementwise mean of the stack
    seeds: list[int]
    step_confidences: list[np.ndarray] = field(default_factory=list)  # per Euler step when traced


def ensemble_predict(
    model: VelocityModel,
    cond_builder: ConditioningBuilder,
    codec,
    image_t1,
    image_t2,
    steps: int,
    repetitions: int,
    master_seed: int,
    *,
    strategy: str = "batched",
    prebinarize: bool = False,
    trace: bool = False,
) -> EnsembleResult:
    """N independent generations aggregated into a confidence map.

    Per-repetition seeds are mix(master_seed, i). ``batched`` integrates all
    repetitions as one batch; ``sequential`` loops single generations — the
    two agree elementwise to float tolerance. ``prebinarize`` thresholds each
    member at 0.5 before averaging (vote-fraction confidence).
    """
    if repetitions < 1:
        raise InvalidArgumentError(f"repetitions must be >= 1, got {repetitions}")
    if strategy not in ("batched", "sequential"):
        raise InvalidArgumentError(f"unknown ensemble strategy {strategy!r}")
    seeds = [mix_seed(master_seed, i) for i in range(repetitions)]
    cond = compute_conditioning(cond_builder, image_t1, image_t2)
    model.eval()

    step_confidences: list[np.ndarray] = []
    if strategy == "sequential" and not trace:
        members = [
            generate_mask(model, cond_builder, codec, image_t1, image_t2, steps, s, cond=cond)
            for s in seeds
        ]
        stack = np.stack(members)
    else:
        latent_shape = (codec.channels, cond.shape[2], cond.shape[3])
        x0 = torch.stack([sample_initial_noise(latent_shape, s) for s in seeds])
        with torch.no_grad():
            result = euler_integrate(
                x0, lambda x, t: predict_velocity(model, x, cond, t), steps, trace=trace
            )
            if trace:
                final, states = result
                for state in states:
                    member_masks = decode_latents(codec, state).numpy()
                    if prebinarize:
                        member_masks = (member_masks >= 0.5).astype(np.float32)
                    step_confidences.append(member_masks.mean(axis=0))
            else:
                final = result
            stack = decode_latents(codec, final).numpy()

    if prebinarize:
        stack = (stack >= 0.5).astype(np.float32)
    confidence = stack.mean(axis=0)
    return EnsembleResult(stack=stack, confidence=confidence, seeds=seeds, step_confidences=step_confidences)


def binarize(confidence: np.ndarray, threshold: float) -> np.ndarray:
    """Pixel marked changed iff its confidence is >= threshold (inclusive)."""
    if not (0.0 < threshold < 1.0):
        raise InvalidArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    return (np.asarray(confidence) >= threshold).astype(np.uint8)
