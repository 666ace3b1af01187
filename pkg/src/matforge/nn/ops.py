"""Attention and positional-encoding primitives for the material denoiser.

Everything is written out explicitly on torch tensors (float32 or float64)
so behavior is inspectable and bit-reproducible on CPU; autograd provides
the analytic gradients that the finite-difference suite checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from ..errors import IncompatibleWidth, NonFiniteInput, ShapeMismatch

ROPE_BASE = 10000.0


def softmax_rows(t: torch.Tensor) -> torch.Tensor:
    """Numerically stable softmax over the last axis (max subtraction)."""
    if t.shape[-1] == 0:
        raise ShapeMismatch("softmax over an empty axis")
    if not torch.isfinite(t).all():
        raise NonFiniteInput("softmax input contains NaN/Inf")
    shifted = t - t.max(dim=-1, keepdim=True).values
    e = torch.exp(shifted)
    return e / e.sum(dim=-1, keepdim=True)


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, d: int | None = None) -> torch.Tensor:
    """softmax(q k^T / sqrt(d)) v with d defaulting to the query width."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeMismatch(f"q width {q.shape[-1]} != k width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeMismatch(f"key count {k.shape[-2]} != value count {v.shape[-2]}")
    if d is None:
        d = q.shape[-1]
    scores = q @ k.transpose(-1, -2) / math.sqrt(float(d))
    return softmax_rows(scores) @ v


def rope_3d(tokens: torch.Tensor, coords: torch.Tensor, base: float = ROPE_BASE) -> torch.Tensor:
    """Rotary encoding driven by 3D coordinates.

    The channel width splits into three equal per-axis groups; inside a
    group, consecutive pairs rotate by angle base^(-2j/g) * coord_axis.
    Tokens of the same surface point therefore get matching phases no
    matter which view (or crop) they came from.
    """
    width = tokens.shape[-1]
    if width % 6 != 0:
        raise IncompatibleWidth(f"rope width must be divisible by 6, got {width}")
    if coords.shape[-1] != 3 or tokens.shape[:-1] != coords.shape[:-1]:
        raise ShapeMismatch(f"coords {tuple(coords.shape)} do not match tokens {tuple(tokens.shape)}")
    g = width // 3
    j = torch.arange(g // 2, dtype=tokens.dtype, device=tokens.device)
    freqs = base ** (-2.0 * j / g)
    out = []
    for axis in range(3):
        block = tokens[..., axis * g : (axis + 1) * g]
        angle = coords[..., axis : axis + 1] * freqs
        cos, sin = torch.cos(angle), torch.sin(angle)
        even, odd = block[..., 0::2], block[..., 1::2]
        rotated = torch.stack([even * cos - odd * sin, even * sin + odd * cos], dim=-1)
        out.append(rotated.flatten(-2))
    return torch.cat(out, dim=-1)


@dataclass
class ChannelEmbedding:
    """Learnable token table injected into one material channel."""

    channel: str  # "albedo" | "mr" | "normal"
    table: torch.Tensor  # (tokens, width)


@dataclass
class AttentionParams:
    """Projections for reference attention and channel injection.

    One query/key path; value and output projections are per channel so
    branches can diverge while sharing the attention mask.
    """

    w_q: torch.Tensor
    w_k: torch.Tensor
    w_v_albedo: torch.Tensor
    w_v_mr: torch.Tensor | None
    head_dim: int
    w_out_albedo: torch.Tensor | None = None
    w_out_mr: torch.Tensor | None = None
    w_v_normal: torch.Tensor | None = None
    w_out_normal: torch.Tensor | None = None

    def w_v(self, channel: str) -> torch.Tensor:
        w = {"albedo": self.w_v_albedo, "mr": self.w_v_mr, "normal": self.w_v_normal}[channel]
        if w is None:
            raise ShapeMismatch(f"no value projection for channel {channel!r}")
        return w

    def w_out(self, channel: str) -> torch.Tensor:
        w = {"albedo": self.w_out_albedo, "mr": self.w_out_mr, "normal": self.w_out_normal}[channel]
        if w is None:
            raise ShapeMismatch(f"no output projection for channel {channel!r}")
        return w


def inject_channel_embedding(
    hidden: torch.Tensor,
    emb: ChannelEmbedding,
    params: AttentionParams,
    q_basis: torch.Tensor | None = None,
) -> torch.Tensor:
    """Residual cross-attention from hidden tokens into the channel table.

    `q_basis` optionally supplies a normalized view of `hidden` for the
    query projection (the residual still adds to the raw hidden); without
    it the queries come from `hidden` directly.
    """
    if hidden.shape[-1] != params.w_q.shape[0]:
        raise ShapeMismatch(f"hidden width {hidden.shape[-1]} != w_q rows {params.w_q.shape[0]}")
    if emb.table.shape[-1] != params.w_k.shape[0]:
        raise ShapeMismatch(f"embedding width {emb.table.shape[-1]} != w_k rows {params.w_k.shape[0]}")
    q = (hidden if q_basis is None else q_basis) @ params.w_q
    k = emb.table @ params.w_k
    v = emb.table @ params.w_v(emb.channel)
    return hidden + attention(q, k, v, params.head_dim)
