"""Toy-scale multi-modal diffusion policy.

Stub patch-embedding encoders stand in for the large pre-trained vision /
tactile / audio backbones; the mechanics are the contract: a 6-block
12-head cross-attention combiner (tactile tokens query scene tokens),
classification-token pooling, concatenation + projection, and a 1-D
denoising U-Net that predicts 16-step x 14-wide action chunks.

Variants:
  visuo-proprio  -- tactile and audio inputs zeroed, no cross attention
  multi-concate  -- all modalities, pooling + projection only
  multi-crossatn -- all modalities with the cross-attention combiner
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

ACTION_HORIZON = 16
ACTION_DIM = 14
VARIANTS = ("visuo-proprio", "multi-concate", "multi-crossatn")


@dataclass(frozen=True)
class CombinerConfig:
    depth: int = 6
    heads: int = 12
    dim: int = 192
    cond_dim: int = 256
    image_size: int = 96
    patch: int = 16

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError("token dim must be divisible by the head count")


class PatchEmbed(nn.Module):
    """Trainable stand-in for a pre-trained ViT encoder: patchify + project."""

    def __init__(self, dim: int, patch: int, in_ch: int = 3):
        super().__init__()
        self.proj = nn.Conv2d(in_ch, dim, kernel_size=patch, stride=patch)

    def forward(self, x):
        # x: (B, H, W, C) -> tokens (B, N, dim)
        x = x.permute(0, 3, 1, 2)
        t = self.proj(x)
        return t.flatten(2).transpose(1, 2)


class AudioEmbed(nn.Module):
    """Patchify a log-mel spectrogram (stand-in for the audio transformer)."""

    def __init__(self, dim: int, patch: int = 16):
        super().__init__()
        self.proj = nn.Conv2d(1, dim, kernel_size=patch, stride=patch)

    def forward(self, mel):
        # mel: (B, frames, n_mels) -> tokens
        x = mel.unsqueeze(1)
        t = self.proj(x)
        return t.flatten(2).transpose(1, 2)


class CrossAttentionBlock(nn.Module):
    """Decoder-style block: self-attention over the query sequence (so the
    classification token aggregates its own stream), cross attention into
    the context tokens, then an MLP. All pre-norm residual."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm_self = nn.LayerNorm(dim)
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm_q = nn.LayerNorm(dim)
        self.norm_kv = nn.LayerNorm(dim)
        self.cross_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm_mlp = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim))
        self.last_attn_weights = None
        self.last_self_weights = None

    def forward(self, queries, context):
        s = self.norm_self(queries)
        mixed, self_w = self.self_attn(s, s, s, need_weights=True, average_attn_weights=False)
        self.last_self_weights = self_w
        x = queries + mixed
        q = self.norm_q(x)
        kv = self.norm_kv(context)
        attended, weights = self.cross_attn(q, kv, kv, need_weights=True, average_attn_weights=False)
        self.last_attn_weights = weights
        x = x + attended
        return x + self.mlp(self.norm_mlp(x))


class ModalityCombiner(nn.Module):
    """Encode each modality, fuse, and project to one conditioning vector."""

    def __init__(self, variant: str, config: CombinerConfig):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.variant = variant
        self.config = config
        dim = config.dim
        self.tactile_embed = PatchEmbed(dim, config.patch)
        self.scene_embed = PatchEmbed(dim, config.patch)
        self.audio_embed = AudioEmbed(dim)
        self.proprio_mlp = nn.Sequential(
            nn.Linear(2 * 28, 128), nn.SiLU(), nn.Linear(128, dim)
        )
        self.cls_token = nn.Parameter(torch.zeros(1, 1, dim))
        nn.init.normal_(self.cls_token, std=0.02)
        self.blocks = nn.ModuleList(
            CrossAttentionBlock(dim, config.heads) for _ in range(config.depth)
        )
        self.tactile_pool_proj = nn.Linear(dim, dim)
        self.scene_pool_proj = nn.Linear(dim, dim)
        self.audio_pool_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Sequential(
            nn.Linear(4 * dim, config.cond_dim), nn.SiLU(), nn.Linear(config.cond_dim, config.cond_dim)
        )

    @staticmethod
    def _flatten_history(frames):
        # (B, H=2, ...) -> (B*2, ...)
        b, h = frames.shape[:2]
        return frames.reshape(b * h, *frames.shape[2:]), b, h

    def forward(self, batch):
        tactile = batch["tactile"]
        audio = batch["audio_mel"]
        scene = batch["scene"]
        proprio = batch["proprio"]
        if self.variant == "visuo-proprio":
            # Masked modalities are replaced with zeros; gradients through
            # the zero multiplier vanish exactly.
            tactile = tactile * 0.0
            audio = audio * 0.0

        flat_t, b, h = self._flatten_history(tactile)
        t_tokens = self.tactile_embed(flat_t)
        t_tokens = t_tokens.reshape(b, h * t_tokens.shape[1], -1)
        flat_s, _, _ = self._flatten_history(scene)
        s_tokens = self.scene_embed(flat_s)
        s_tokens = s_tokens.reshape(b, h * s_tokens.shape[1], -1)
        flat_a, _, _ = self._flatten_history(audio)
        a_tokens = self.audio_embed(flat_a)
        a_tokens = a_tokens.reshape(b, h * a_tokens.shape[1], -1)

        if self.variant == "multi-crossatn":
            x = torch.cat([self.cls_token.expand(b, 1, -1), t_tokens], dim=1)
            for block in self.blocks:
                x = block(x, s_tokens)
            tactile_pooled = x[:, 0]
        else:
            tactile_pooled = self.tactile_pool_proj(t_tokens.mean(dim=1))
        scene_pooled = self.scene_pool_proj(s_tokens.mean(dim=1))
        audio_pooled = self.audio_pool_proj(a_tokens.mean(dim=1))
        proprio_feat = self.proprio_mlp(proprio.reshape(b, -1))
        fused = torch.cat([tactile_pooled, scene_pooled, audio_pooled, proprio_feat], dim=-1)
        return self.out_proj(fused)


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half)
    ang = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)


class FilmConvBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, cond_dim: int):
        super().__init__()
        self.conv = nn.Conv1d(in_ch, out_ch, kernel_size=3, padding=1)
        self.norm = nn.GroupNorm(8, out_ch)
        self.film = nn.Linear(cond_dim, 2 * out_ch)

    def forward(self, x, cond):
        h = self.norm(self.conv(x))
        scale, shift = self.film(cond).chunk(2, dim=-1)
        h = h * (1.0 + scale[..., None]) + shift[..., None]
        return F.silu(h)


class ActionDenoiser(nn.Module):
    """1-D U-Net over the 16-step action sequence, FiLM-conditioned on the
    fused observation features and the diffusion timestep."""

    def __init__(self, cond_dim: int, base: int = 64):
        super().__init__()
        self.temb = nn.Sequential(nn.Linear(128, cond_dim), nn.SiLU(), nn.Linear(cond_dim, cond_dim))
        full = 2 * cond_dim
        self.down1 = FilmConvBlock(ACTION_DIM, base, full)
        self.down2 = FilmConvBlock(base, 2 * base, full)
        self.pool = nn.AvgPool1d(2)
        self.mid = FilmConvBlock(2 * base, 2 * base, full)
        self.up = nn.ConvTranspose1d(2 * base, base, kernel_size=2, stride=2)
        self.up1 = FilmConvBlock(2 * base, base, full)
        self.out = nn.Conv1d(base, ACTION_DIM, kernel_size=3, padding=1)

    def forward(self, noisy_actions, t, cond):
        # noisy_actions: (B, 16, 14)
        x = noisy_actions.transpose(1, 2)
        temb = self.temb(sinusoidal_embedding(t, 128))
        c = torch.cat([temb, cond], dim=-1)
        h1 = self.down1(x, c)  # (B, base, 16)
        h2 = self.down2(self.pool(h1), c)  # (B, 2base, 8)
        m = self.mid(h2, c)
        u = self.up(m)  # (B, base, 16)
        u = self.up1(torch.cat([u, h1], dim=1), c)
        return self.out(u).transpose(1, 2)


def cosine_alpha_bar(steps: int, s: float = 0.008) -> np.ndarray:
    t = np.arange(steps + 1) / steps
    f = np.cos((t + s) / (1 + s) * np.pi / 2.0) ** 2
    return f / f[0]


class DiffusionSchedule:
    """100-step cosine noise schedule."""

    def __init__(self, steps: int = 100):
        self.steps = steps
        abar = cosine_alpha_bar(steps)
        betas = np.clip(1.0 - abar[1:] / abar[:-1], 1e-8, 0.999)
        self.betas = torch.from_numpy(betas).float()
        self.alphas = 1.0 - self.betas
        self.alpha_bar = torch.from_numpy(abar[1:]).float()

    def add_noise(self, x0, noise, t):
        ab = self.alpha_bar[t][:, None, None]
        return torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * noise


class TactileDiffusionPolicy(nn.Module):
    """Denoising policy with a chunk-predicting head: given a noised action
    chunk and the diffusion step, the U-Net outputs the clean 16 x 14 chunk
    conditioned on the fused observation features."""

    def __init__(self, variant: str, config: CombinerConfig | None = None, steps: int = 100):
        super().__init__()
        self.config = config or CombinerConfig()
        self.variant = variant
        self.combiner = ModalityCombiner(variant, self.config)
        self.denoiser = ActionDenoiser(self.config.cond_dim)
        self.schedule = DiffusionSchedule(steps)

    def forward(self, batch, noisy_actions, t):
        """Predict the clean action chunk from its noised version."""
        cond = self.combiner(batch)
        return self.denoiser(noisy_actions, t, cond)

    @torch.no_grad()
    def sample_actions(self, batch, generator: torch.Generator | None = None):
        """Ancestral denoising from pure noise to a (B, 16, 14) chunk."""
        cond = self.combiner(batch)
        b = cond.shape[0]
        sched = self.schedule
        x = torch.randn(b, ACTION_HORIZON, ACTION_DIM, generator=generator)
        for step in reversed(range(sched.steps)):
            t = torch.full((b,), step, dtype=torch.long)
            x0_hat = self.denoiser(x, t, cond)
            ab = sched.alpha_bar[step]
            ab_prev = sched.alpha_bar[step - 1] if step > 0 else torch.tensor(1.0)
            beta = sched.betas[step]
            alpha = sched.alphas[step]
            # Posterior mean for the x0 parameterization.
            mean = (
                torch.sqrt(ab_prev) * beta / (1.0 - ab) * x0_hat
                + torch.sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab) * x
            )
            if step > 0:
                var = beta * (1.0 - ab_prev) / (1.0 - ab)
                noise = torch.randn(x.shape, generator=generator)
                x = mean + torch.sqrt(var) * noise
            else:
                x = mean
        return x


def build_model(variant: str, config: CombinerConfig | None = None, seed: int = 0) -> TactileDiffusionPolicy:
    """Construct a policy variant with deterministic initialization."""
    torch.manual_seed(seed)
    return TactileDiffusionPolicy(variant, config)
