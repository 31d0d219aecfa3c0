"""Core rectified-flow math.

Straight-line interpolation between noise and data, timestep sampling,
the velocity-regression loss, and explicit Euler integration of a velocity
field. Everything is a pure function of its inputs plus an explicit seeded
stream, so concurrent callers just need to own their streams.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import torch

from .errors import InvalidArgumentError, NumericsError, ShapeError

_MASK64 = (1 << 64) - 1
_GOLDEN64 = 0x9E3779B97F4A7C15

TIME_SAMPLING_MODES = ("logit_normal", "uniform")

VelocityFn = Callable[[torch.Tensor, float], torch.Tensor]


def mix_seed(master: int, index: int) -> int:
    """Derive the ``index``-th child seed from a master seed.

    SplitMix64 finalizer applied to ``master + (index + 1) * golden_ratio_64``.
    The mixing function is fixed so that repetition ``i`` of an ensemble is
    reproducible both in isolation and as part of a batch.
    """
    z = (int(master) + (int(index) + 1) * _GOLDEN64) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def sample_initial_noise(shape: Sequence[int], seed: int) -> torch.Tensor:
    """Draw a standard-normal tensor of the given shape, deterministic in ``seed``."""
    dims = tuple(int(s) for s in shape)
    if len(dims) == 0 or any(s <= 0 for s in dims):
        raise ShapeError(f"noise shape must have positive dimensions, got {dims}")
    gen = torch.Generator().manual_seed(int(seed) & _MASK64)
    return torch.randn(dims, generator=gen)


def _align_time(t: float | torch.Tensor, x: torch.Tensor) -> float | torch.Tensor:
    """Make a scalar or per-sample time broadcastable against ``x``."""
    if isinstance(t, torch.Tensor) and t.dim() > 0:
        if t.shape[0] != x.shape[0]:
            raise ShapeError(f"per-sample time has length {t.shape[0]}, batch is {x.shape[0]}")
        return t.view(-1, *([1] * (x.dim() - 1))).to(x.dtype)
    return float(t)


def interpolate(x0: torch.Tensor, x1: torch.Tensor, t: float | torch.Tensor) -> torch.Tensor:
    """Point on the straight path from ``x0`` (t=0) to ``x1`` (t=1)."""
    if x0.shape != x1.shape:
        raise ShapeError(f"endpoint shapes differ: {tuple(x0.shape)} vs {tuple(x1.shape)}")
    tt = _align_time(t, x0)
    return (1.0 - tt) * x0 + tt * x1


def sample_timesteps(mode: str, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` training timesteps in [0, 1].

    ``logit_normal`` squashes standard-normal draws through a sigmoid, which
    concentrates mass around t = 0.5; ``uniform`` is flat on [0, 1].
    """
    if mode == "logit_normal":
        s = np.asarray(rng.standard_normal(n), dtype=np.float64)
        return 1.0 / (1.0 + np.exp(-s))
    if mode == "uniform":
        return np.asarray(rng.random(n), dtype=np.float64)
    raise InvalidArgumentError(f"unknown time sampling mode {mode!r}; expected one of {TIME_SAMPLING_MODES}")


def sample_timestep(mode: str, rng: np.random.Generator) -> float:
    """Single-draw convenience wrapper around :func:`sample_timesteps`."""
    return float(sample_timesteps(mode, rng, 1)[0])


def rf_loss(v_pred: torch.Tensor, x0: torch.Tensor, x1: torch.Tensor) -> torch.Tensor:
    """Mean squared error between predicted velocity and the path velocity x1 - x0.

    Reduction is the mean over all entries, so the magnitude is independent of
    latent size. Differentiable; the analytic gradient w.r.t. ``v_pred`` is
    ``2 * (v_pred - (x1 - x0)) / numel``.
    """
    if not (v_pred.shape == x0.shape == x1.shape):
        raise ShapeError(
            f"velocity/endpoint shapes differ: {tuple(v_pred.shape)}, {tuple(x0.shape)}, {tuple(x1.shape)}"
        )
    return ((x1 - x0 - v_pred) ** 2).mean()


def euler_integrate(
    x0: torch.Tensor,
    velocity_fn: VelocityFn,
    num_steps: int,
    *,
    trace: bool = False,
) -> torch.Tensor | tuple[torch.Tensor, list[torch.Tensor]]:
    """Integrate dx/dt = v(x, t) from t=0 to t=1 with ``num_steps`` equal Euler steps.

    The time grid is t_k = k / num_steps for k = 0..num_steps-1, step 1/num_steps.
    With ``trace=True`` also returns the state after every step (length
    ``num_steps``; the last entry is the final state).
    """
    if num_steps < 1:
        raise InvalidArgumentError(f"step count must be >= 1, got {num_steps}")
    dt = 1.0 / num_steps
    x = x0
    states: list[torch.Tensor] = []
    for k in range(num_steps):
        v = velocity_fn(x, k * dt)
        if v.shape != x.shape:
            raise ShapeError(f"velocity shape {tuple(v.shape)} does not match state {tuple(x.shape)}")
        if not torch.isfinite(v).all():
            raise NumericsError(f"non-finite velocity at integration step {k}", step=k)
        x = x + dt * v
        if trace:
            states.append(x)
    if trace:
        return x, states
    return x
