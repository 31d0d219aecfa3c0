"""Velocity network: a small DiT-style transformer over latent-grid tokens.

The noisy latent and the conditioning signal are concatenated along channels,
tokenized at patch size 1, tagged with a fixed 2-D sinusoidal positional
encoding, and processed by transformer blocks whose normalization is
modulated by a learned projection of the time embedding. The output head
projects tokens back to latent channels at the original spatial dims.

No class embeddings and no classifier-free guidance. Modulation and output
projections use small random init (not zeros) so every parameter sees a
gradient from the first step on.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import FlowConfig
from .errors import InvalidArgumentError, ShapeError

# geometric frequency range of the sinusoidal time embedding; the top
# frequency bounds the Lipschitz constant of the embedding in t
TIME_FREQ_MIN = 0.01
TIME_FREQ_MAX = 10.0


def sinusoidal_time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Embed scalar times in [0, 1] as interleaved sin/cos at geometric frequencies.

    ``t`` is a (B,) tensor; the result is (B, dim) with layout
    [sin(f0 t), cos(f0 t), sin(f1 t), ...], so t = 0 maps to 0/1 alternation.
    """
    if dim % 2 != 0:
        raise InvalidArgumentError(f"time embedding dim must be even, got {dim}")
    half = dim // 2
    dtype = t.dtype if t.is_floating_point() else torch.float32
    freqs = torch.from_numpy(np.geomspace(TIME_FREQ_MIN, TIME_FREQ_MAX, half)).to(t.device, dtype)
    args = t.to(dtype)[:, None] * freqs[None, :]
    emb = torch.stack([torch.sin(args), torch.cos(args)], dim=-1)
    return emb.reshape(t.shape[0], dim)


def positional_encoding_2d(dim: int, grid_h: int, grid_w: int) -> torch.Tensor:
    """Fixed sin/cos encoding over a 2-D token grid, (grid_h * grid_w, dim)."""
    if dim % 4 != 0:
        raise InvalidArgumentError(f"positional encoding dim must be divisible by 4, got {dim}")
    half = dim // 2

    def axis_encoding(positions: np.ndarray) -> np.ndarray:
        omega = 1.0 / 10000 ** (np.arange(half // 2) / (half // 2))
        args = positions[:, None] * omega[None, :]
        return np.concatenate([np.sin(args), np.cos(args)], axis=1)

    ys, xs = np.meshgrid(np.arange(grid_h), np.arange(grid_w), indexing="ij")
    enc = np.concatenate(
        [axis_encoding(ys.reshape(-1).astype(np.float64)), axis_encoding(xs.reshape(-1).astype(np.float64))],
        axis=1,
    )
    return torch.from_numpy(enc.astype(np.float32))


class TimeEmbedder(nn.Module):
    """Sinusoidal embedding followed by the learned projection to model width."""

    def __init__(self, freq_dim: int, hidden: int):
        super().__init__()
        self.freq_dim = freq_dim
        self.mlp = nn.Sequential(
            nn.Linear(freq_dim, hidden),
            nn.SiLU(),
            nn.Linear(hidden, hidden),
        )

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.mlp(sinusoidal_time_embedding(t, self.freq_dim))


def _modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1.0 + scale[:, None, :]) + shift[:, None, :]


class DiTBlock(nn.Module):
    """Pre-norm attention + MLP with time-conditioned shift/scale/gate."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.GELU(approximate="tanh"),
            nn.Linear(hidden, dim),
        )
        self.modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 6 * dim))

    def _attention(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        out = F.scaled_dot_product_attention(qkv[0], qkv[1], qkv[2])
        return self.proj(out.transpose(1, 2).reshape(b, n, d))

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        shift1, scale1, gate1, shift2, scale2, gate2 = self.modulation(temb).chunk(6, dim=-1)
        x = x + gate1[:, None, :] * self._attention(_modulate(self.norm1(x), shift1, scale1))
        x = x + gate2[:, None, :] * self.mlp(_modulate(self.norm2(x), shift2, scale2))
        return x


class VelocityModel(nn.Module):
    """Maps (noisy latent ++ conditioning, t) to a velocity of the latent's shape."""

    def __init__(
        self,
        latent_channels: int,
        cond_channels: int,
        grid_size: int,
        dim: int = 128,
        layers: int = 4,
        heads: int = 4,
        time_freq_dim: int = 128,
    ):
        super().__init__()
        if latent_channels + cond_channels <= 0 or latent_channels < 1:
            raise InvalidArgumentError("channel counts must be positive")
        if dim % heads != 0:
            raise InvalidArgumentError(f"model dim {dim} not divisible by head count {heads}")
        if grid_size < 1 or layers < 1:
            raise InvalidArgumentError("grid size and layer count must be >= 1")
        self.latent_channels = latent_channels
        self.cond_channels = cond_channels
        self.in_channels = latent_channels + cond_channels
        self.grid_size = grid_size
        self.dim = dim

        self.token_in = nn.Linear(self.in_channels, dim)
        self.time_embedder = TimeEmbedder(time_freq_dim, dim)
        self.register_buffer("pos_enc", positional_encoding_2d(dim, grid_size, grid_size))
        self.blocks = nn.ModuleList([DiTBlock(dim, heads) for _ in range(layers)])
        self.final_norm = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.final_modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 2 * dim))
        self.token_out = nn.Linear(dim, latent_channels)
        self._init_weights()

    def _init_weights(self):
        for block in self.blocks:
            nn.init.normal_(block.modulation[1].weight, std=0.02)
            nn.init.zeros_(block.modulation[1].bias)
        nn.init.normal_(self.final_modulation[1].weight, std=0.02)
        nn.init.zeros_(self.final_modulation[1].bias)
        nn.init.normal_(self.token_out.weight, std=0.02)
        nn.init.zeros_(self.token_out.bias)

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} input channels, got {c}")
        if (h, w) != (self.grid_size, self.grid_size):
            raise ShapeError(f"expected a {self.grid_size}x{self.grid_size} grid, got {h}x{w}")
        tokens = self.token_in(x.flatten(2).transpose(1, 2)) + self.pos_enc[None]
        temb = self.time_embedder(t)
        for block in self.blocks:
            tokens = block(tokens, temb)
        shift, scale = self.final_modulation(temb).chunk(2, dim=-1)
        tokens = self.token_out(_modulate(self.final_norm(tokens), shift, scale))
        return tokens.transpose(1, 2).reshape(b, self.latent_channels, h, w)


def build_velocity_model(cfg: FlowConfig, seed: int) -> VelocityModel:
    """Construct the model with deterministic initialization from ``seed``."""
    cfg.validate()
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = VelocityModel(
            latent_channels=cfg.latent_channels,
            cond_channels=cfg.cond_channels,
            grid_size=cfg.latent_size,
            dim=cfg.model_dim,
            layers=cfg.model_layers,
            heads=cfg.model_heads,
            time_freq_dim=cfg.time_freq_dim,
        )
    return model


def _as_batch_time(t, batch: int, device, dtype) -> torch.Tensor:
    if isinstance(t, torch.Tensor):
        tt = t.to(device=device, dtype=dtype)
        if tt.dim() == 0:
            tt = tt.expand(batch)
        if tt.shape[0] != batch:
            raise ShapeError(f"time batch {tt.shape[0]} does not match input batch {batch}")
        return tt
    return torch.full((batch,), float(t), device=device, dtype=dtype)


def predict_velocity(
    model: VelocityModel,
    x_t: torch.Tensor,
    cond: torch.Tensor,
    t: float | torch.Tensor,
) -> torch.Tensor:
    """Concatenate latent and conditioning along channels and run the model."""
    single = x_t.dim() == 3
    x = x_t[None] if single else x_t
    c = cond[None] if cond.dim() == 3 else cond
    if c.shape[0] == 1 and x.shape[0] > 1:
        c = c.expand(x.shape[0], -1, -1, -1)
    if x.shape[2:] != c.shape[2:]:
        raise ShapeError(f"conditioning spatial dims {tuple(c.shape[2:])} != latent {tuple(x.shape[2:])}")
    if x.shape[0] != c.shape[0]:
        raise ShapeError(f"batch mismatch: latent {x.shape[0]} vs conditioning {c.shape[0]}")
    out = model(torch.cat([x, c], dim=1), _as_batch_time(t, x.shape[0], x.device, x.dtype))
    return out[0] if single else out
