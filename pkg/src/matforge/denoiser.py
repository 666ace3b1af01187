"""Multi-channel multi-view latent denoiser and flow-matching sampler.

Latents are raw pixel patches (no VAE at this scale). Each block runs:
joint self-attention over all views and channels with coordinate-driven
rotary phases (the cross-view consistency path), per-channel embedding
injection, reference attention with the mask computed once from the
albedo branch and reused verbatim for the other material channels, and a
shared feed-forward. Albedo is the query channel because it lives in the
same color space as the reference image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import (
    InvalidSteps,
    NonFiniteActivation,
    NonFiniteInput,
    ShapeMismatch,
    UntrainedModel,
)
from .materials import MaterialViews
from .nn.ops import (
    AttentionParams,
    ChannelEmbedding,
    attention,
    inject_channel_embedding,
    rope_3d,
    softmax_rows,
)

ALL_EMBEDDING_CHANNELS = ("albedo", "mr", "normal")
INIT_STD = 0.02
EMBED_TOKENS = 16


@dataclass
class DenoiserConfig:
    # patch content (patch^2 * 3 values) must not exceed the width, or the
    # velocity target's noise component is unrepresentable and the flow
    # loss floors far above zero; 4px patches fit the default width of 64
    width: int = 64
    depth: int = 4
    views: int = 6
    image_size: int = 64
    patch_size: int = 4
    channels: tuple[str, ...] = ("albedo", "mr")
    self_attention: bool = True
    time_features: int = 32

    def __post_init__(self):
        if "albedo" not in self.channels:
            raise ValueError("channel set must contain albedo")
        if self.channels[0] != "albedo":
            raise ValueError("albedo must come first (it provides the shared mask)")
        if self.image_size % self.patch_size != 0:
            raise ValueError("latent grid times patch size must equal image size")
        if self.width // 6 == 0:
            raise ValueError("width too small for 3-axis rotary groups")

    @property
    def latent_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def rope_dim(self) -> int:
        # q/k project to the largest multiple of 6 <= width so the three
        # rotary axis groups divide evenly (width itself need not)
        return 6 * (self.width // 6)


@dataclass
class DenoiserState:
    z_albedo: torch.Tensor  # (V,H,W,3)
    z_mr: torch.Tensor  # (V,H,W,3)
    t: float
    z_normal: torch.Tensor | None = None

    def channel(self, name: str) -> torch.Tensor:
        return {"albedo": self.z_albedo, "mr": self.z_mr, "normal": self.z_normal}[name]


@dataclass
class Conditioning:
    ref_tokens: torch.Tensor  # (Nr, P*P*3) raw reference patches in [-1,1]
    geom_tokens: torch.Tensor  # (V,h,w,P*P*6) normal+CCM patches in [-1,1]
    view_coords: torch.Tensor  # (V,h,w,3) per-token 3D coordinates
    gbuffers: list = field(default_factory=list)
    cameras: list = field(default_factory=list)

    def dropped(self) -> "Conditioning":
        """Reference-free copy for classifier-free guidance."""
        return Conditioning(
            ref_tokens=torch.zeros_like(self.ref_tokens),
            geom_tokens=self.geom_tokens,
            view_coords=self.view_coords,
            gbuffers=self.gbuffers,
            cameras=self.cameras,
        )


@dataclass
class MaskRecord:
    """One reference-attention event captured by instrumentation."""

    block_index: int
    t: float
    q_albedo: torch.Tensor
    k_ref: torch.Tensor
    head_dim: int
    mask_albedo: torch.Tensor  # the matrix multiplied with V_albedo
    mask_mr: torch.Tensor  # the matrix multiplied with V_MR


@dataclass
class InstrumentationHooks:
    """Recording and override hooks for the shared reference mask."""

    records: list[MaskRecord] | None = None
    mask_overrides: dict[int, torch.Tensor] | None = None

    def override_for(self, block_index: int):
        if self.mask_overrides is None:
            return None
        return self.mask_overrides.get(block_index)


def flow_interpolate(x0: torch.Tensor, noise: torch.Tensor, t: float) -> torch.Tensor:
    """Linear path (1-t)*x0 + t*noise; the training target is noise - x0."""
    if x0.shape != noise.shape:
        raise ShapeMismatch(f"{tuple(x0.shape)} vs {tuple(noise.shape)}")
    return (1.0 - t) * x0 + t * noise


def shared_mask_reference_attention(
    z_albedo: torch.Tensor,
    z_mr: torch.Tensor,
    ref_tokens: torch.Tensor,
    params: AttentionParams,
    hooks: InstrumentationHooks | None = None,
    block_index: int = 0,
    t: float = 0.0,
    q_basis: torch.Tensor | None = None,
):
    """Reference attention where the MR branch reuses the albedo mask.

    Queries come from the albedo branch (`q_basis` optionally substitutes a
    normalized view of it; residuals always add to the raw latents).
    """
    out = _shared_mask_attention(
        {"albedo": z_albedo, "mr": z_mr}, ref_tokens, params, hooks, block_index, t, q_basis
    )
    return out["albedo"], out["mr"]


def _shared_mask_attention(channels, ref_tokens, params, hooks, block_index, t, q_basis=None):
    z_albedo = channels["albedo"]
    if z_albedo.shape[-1] != params.w_q.shape[0]:
        raise ShapeMismatch("albedo width incompatible with w_q")
    if ref_tokens.shape[-1] != params.w_k.shape[0]:
        raise ShapeMismatch("reference width incompatible with w_k")
    q = (z_albedo if q_basis is None else q_basis) @ params.w_q
    k = ref_tokens @ params.w_k
    override = hooks.override_for(block_index) if hooks is not None else None
    if override is not None:
        mask = override
    else:
        mask = softmax_rows(q @ k.transpose(-1, -2) / math.sqrt(float(params.head_dim)))
    out = {}
    applied = {}
    for name, z in channels.items():
        values = ref_tokens @ params.w_v(name)
        out[name] = z + (mask @ values) @ params.w_out(name)
        applied[name] = mask
    if hooks is not None and hooks.records is not None:
        hooks.records.append(
            MaskRecord(
                block_index=block_index,
                t=t,
                q_albedo=q.detach().clone(),
                k_ref=k.detach().clone(),
                head_dim=params.head_dim,
                mask_albedo=applied["albedo"].detach().clone(),
                mask_mr=applied.get("mr", applied["albedo"]).detach().clone(),
            )
        )
    return out


def patchify(images: torch.Tensor, patch: int) -> torch.Tensor:
    """(V,H,W,C) -> (V, H/P, W/P, P*P*C)."""
    v, h, w, c = images.shape
    if h % patch or w % patch:
        raise ShapeMismatch(f"image {h}x{w} not divisible by patch {patch}")
    x = images.reshape(v, h // patch, patch, w // patch, patch, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(v, h // patch, w // patch, patch * patch * c)


def unpatchify(tokens: torch.Tensor, patch: int, channels: int = 3) -> torch.Tensor:
    v, h, w, _ = tokens.shape
    x = tokens.reshape(v, h, w, patch, patch, channels)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(v, h * patch, w * patch, channels)


def time_feature_vector(t: float, n: int, dtype, device=None) -> torch.Tensor:
    half = n // 2
    freqs = torch.exp(
        torch.linspace(math.log(1.0), math.log(1000.0), half, dtype=dtype, device=device)
    )
    angle = freqs * float(t)
    return torch.cat([torch.sin(angle), torch.cos(angle)])


class _Linear(nn.Module):
    """Plain affine map with seeded N(0, 0.02^2) weights."""

    def __init__(self, n_in, n_out, gen, dtype):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(n_in, n_out, generator=gen, dtype=dtype) * INIT_STD)
        self.bias = nn.Parameter(torch.zeros(n_out, dtype=dtype))

    def forward(self, x):
        return x @ self.weight + self.bias


def _mat(shape, gen, dtype):
    return nn.Parameter(torch.randn(*shape, generator=gen, dtype=dtype) * INIT_STD)


class DenoiserBlock(nn.Module):
    def __init__(self, config: DenoiserConfig, gen, dtype):
        super().__init__()
        w = config.width
        rd = config.rope_dim
        self.config = config
        self.ln_self = nn.LayerNorm(w, elementwise_affine=False, dtype=dtype)
        self.self_q = _mat((w, rd), gen, dtype)
        self.self_k = _mat((w, rd), gen, dtype)
        self.self_v = _mat((w, w), gen, dtype)
        self.self_out = _mat((w, w), gen, dtype)
        self.inj_q = _mat((w, w), gen, dtype)
        self.inj_k = _mat((w, w), gen, dtype)
        self.inj_v = nn.ParameterDict({c: _mat((w, w), gen, dtype) for c in config.channels})
        self.ref_q = _mat((w, w), gen, dtype)
        self.ref_k = _mat((w, w), gen, dtype)
        self.ref_v = nn.ParameterDict({c: _mat((w, w), gen, dtype) for c in config.channels})
        self.ref_out = nn.ParameterDict({c: _mat((w, w), gen, dtype) for c in config.channels})
        self.ln_ff = nn.LayerNorm(w, elementwise_affine=False, dtype=dtype)
        self.ff1 = _Linear(w, 4 * w, gen, dtype)
        self.ff2 = _Linear(4 * w, w, gen, dtype)
        # FiLM time modulation for the trunk: shift/scale/gate per sublayer.
        # Velocity targets scale like 1/t near t=0, so the trunk needs a
        # multiplicative time pathway; additive embeddings alone stall.
        self.adaln = _Linear(w, 6 * w, gen, dtype)
        # normalized query bases keep cross-attention logits bounded as the
        # residual stream grows over training; residuals still add raw
        self.ln_inj = nn.LayerNorm(w, elementwise_affine=False, dtype=dtype)
        self.ln_ref = nn.LayerNorm(w, elementwise_affine=False, dtype=dtype)

    def _inj_params(self) -> AttentionParams:
        return AttentionParams(
            w_q=self.inj_q,
            w_k=self.inj_k,
            w_v_albedo=self.inj_v["albedo"],
            w_v_mr=self.inj_v.get("mr"),
            w_v_normal=self.inj_v.get("normal"),
            head_dim=self.config.width,
        )

    def _ref_params(self) -> AttentionParams:
        return AttentionParams(
            w_q=self.ref_q,
            w_k=self.ref_k,
            w_v_albedo=self.ref_v["albedo"],
            w_v_mr=self.ref_v.get("mr"),
            w_out_albedo=self.ref_out["albedo"],
            w_out_mr=self.ref_out.get("mr"),
            w_v_normal=self.ref_v.get("normal"),
            w_out_normal=self.ref_out.get("normal"),
            head_dim=self.config.width,
        )

    def forward(self, chans, coords, ref_emb, embeddings, hooks, block_index, t, t_emb):
        names = list(chans)
        mod = self.adaln(torch.nn.functional.gelu(t_emb))
        sh_sa, sc_sa, g_sa, sh_ff, sc_ff, g_ff = torch.chunk(mod, 6, dim=-1)
        if self.config.self_attention:
            u = torch.cat([chans[n] for n in names], dim=0)
            cc = torch.cat([coords] * len(names), dim=0)
            un = self.ln_self(u) * (1.0 + sc_sa) + sh_sa
            q = rope_3d(un @ self.self_q, cc)
            k = rope_3d(un @ self.self_k, cc)
            v = un @ self.self_v
            u = u + g_sa * (attention(q, k, v, self.config.rope_dim) @ self.self_out)
            parts = torch.split(u, chans[names[0]].shape[0], dim=0)
            chans = dict(zip(names, parts))
        inj = self._inj_params()
        chans = {
            n: inject_channel_embedding(
                chans[n], ChannelEmbedding(n, embeddings[n]), inj, q_basis=self.ln_inj(chans[n])
            )
            for n in names
        }
        chans = _shared_mask_attention(
            chans, ref_emb, self._ref_params(), hooks, block_index, t,
            q_basis=self.ln_ref(chans["albedo"]),
        )
        out = {}
        for n in names:
            x = chans[n]
            h = self.ln_ff(x) * (1.0 + sc_ff) + sh_ff
            out[n] = x + g_ff * self.ff2(torch.nn.functional.gelu(self.ff1(h)))
        return out


class MaterialDenoiser(nn.Module):
    """Velocity model over per-view albedo/MR pixel latents."""

    def __init__(self, config: DenoiserConfig, seed: int = 0, dtype=torch.float32):
        super().__init__()
        self.config = config
        self.model_dtype = dtype
        p = config.patch_size
        gen = torch.Generator().manual_seed(seed)
        self.patch_embed = _Linear(p * p * 3, config.width, gen, dtype)
        self.geom_embed = _Linear(p * p * 6, config.width, gen, dtype)
        self.ref_embed = _Linear(p * p * 3, config.width, gen, dtype)
        self.time_in = _Linear(config.time_features, config.width, gen, dtype)
        self.time_out = _Linear(config.width, config.width, gen, dtype)
        self.ref_norm = nn.LayerNorm(config.width, elementwise_affine=False, dtype=dtype)
        # all three channel tables exist even when only albedo/mr are active
        self.embeddings = nn.ParameterDict(
            {c: _mat((EMBED_TOKENS, config.width), gen, dtype) for c in ALL_EMBEDDING_CHANNELS}
        )
        self.blocks = nn.ModuleList(
            [DenoiserBlock(config, gen, dtype) for _ in range(config.depth)]
        )
        self.final_ln = nn.LayerNorm(config.width, elementwise_affine=False, dtype=dtype)
        self.final_mod = _Linear(config.width, 2 * config.width, gen, dtype)
        self.de_embed = _Linear(config.width, p * p * 3, gen, dtype)
        self.trained = False

    def mark_trained(self):
        self.trained = True
        return self

    def velocity_fields(
        self,
        state: DenoiserState,
        cond: Conditioning,
        hooks: InstrumentationHooks | None = None,
    ) -> dict[str, torch.Tensor]:
        cfg = self.config
        p = cfg.patch_size
        za = state.z_albedo
        if za.ndim != 4 or za.shape[-1] != 3:
            raise ShapeMismatch(f"latents must be (V,H,W,3), got {tuple(za.shape)}")
        v, h, w = za.shape[0], za.shape[1] // p, za.shape[2] // p
        if cond.geom_tokens.shape[:3] != (v, h, w):
            raise ShapeMismatch(
                f"geometry tokens {tuple(cond.geom_tokens.shape[:3])} do not match latents {(v, h, w)}"
            )
        if cond.view_coords.shape != (v, h, w, 3):
            raise ShapeMismatch("view_coords must align with the latent token grid")

        chans = {}
        for name in cfg.channels:
            z = state.channel(name)
            if z is None or z.shape != za.shape:
                raise ShapeMismatch(f"channel {name} latent missing or mismatched")
            chans[name] = self.patch_embed(patchify(z, p)).reshape(v * h * w, cfg.width)
        geom = self.geom_embed(cond.geom_tokens).reshape(v * h * w, cfg.width)
        t_emb = self.time_out(
            torch.nn.functional.gelu(
                self.time_in(time_feature_vector(state.t, cfg.time_features, self.model_dtype))
            )
        )
        chans = {n: x + geom + t_emb for n, x in chans.items()}
        ref_emb = self.ref_norm(self.ref_embed(cond.ref_tokens))
        coords = cond.view_coords.reshape(v * h * w, 3)

        try:
            for i, block in enumerate(self.blocks):
                chans = block(chans, coords, ref_emb, self.embeddings, hooks, i, state.t, t_emb)
        except NonFiniteInput as exc:
            raise NonFiniteActivation(str(exc)) from exc
        shift, scale = torch.chunk(self.final_mod(torch.nn.functional.gelu(t_emb)), 2, dim=-1)
        out = {}
        for name in cfg.channels:
            head = self.final_ln(chans[name]) * (1.0 + scale) + shift
            tok = self.de_embed(head).reshape(v, h, w, p * p * 3)
            field_img = unpatchify(tok, p)
            if not torch.isfinite(field_img).all():
                raise NonFiniteActivation(f"non-finite velocity in channel {name}")
            out[name] = field_img
        return out

    def denoise_velocity(self, state, cond, hooks=None):
        fields = self.velocity_fields(state, cond, hooks)
        return fields["albedo"], fields["mr"]

    @torch.no_grad()
    def sample(
        self,
        cond: Conditioning,
        steps: int,
        seed: int,
        cfg_scale: float = 1.0,
        solver: str = "euler",
        hooks: InstrumentationHooks | None = None,
    ) -> MaterialViews:
        """Integrate the velocity ODE from t=1 to t=0 and decode views."""
        if not self.trained:
            raise UntrainedModel("load or train parameters before sampling")
        if steps < 1:
            raise InvalidSteps(f"steps must be >= 1, got {steps}")
        cfg = self.config
        p = cfg.patch_size
        v, h, w = cond.geom_tokens.shape[:3]
        gen = torch.Generator().manual_seed(seed)
        z1 = tuple(
            torch.randn((v, h * p, w * p, 3), generator=gen, dtype=self.model_dtype)
            for _ in cfg.channels
        )
        uncond = cond.dropped() if cfg_scale != 1.0 else None

        def velocity(zs, t):
            state = DenoiserState(
                z_albedo=zs[0],
                z_mr=zs[1] if len(zs) > 1 else zs[0],
                t=t,
                z_normal=zs[2] if len(zs) > 2 else None,
            )
            fields = self.velocity_fields(state, cond, hooks)
            vc = tuple(fields[n] for n in cfg.channels)
            if uncond is None:
                return vc
            fields_u = self.velocity_fields(state, uncond, hooks)
            vu = tuple(fields_u[n] for n in cfg.channels)
            return tuple(u + cfg_scale * (c - u) for c, u in zip(vc, vu))

        z0 = sample_ode(velocity, z1, steps, solver)
        decoded = [np.clip((z.cpu().numpy() + 1.0) * 0.5, 0.0, 1.0).astype(np.float32) for z in z0]
        by_name = dict(zip(cfg.channels, decoded))
        albedo = [by_name["albedo"][i] for i in range(v)]
        mr = [by_name["mr"][i] for i in range(v)]
        return MaterialViews(albedo=albedo, mr=mr, gbuffers=list(cond.gbuffers), cameras=list(cond.cameras))


def sample_ode(velocity_fn, z1: tuple, steps: int, solver: str = "euler") -> tuple:
    """Deterministic ODE integration from t=1 down to t=0.

    velocity_fn(zs, t) maps a tuple of tensors to a tuple of velocities
    dz/dt; Euler is first order, Heun second.
    """
    if steps < 1:
        raise InvalidSteps(f"steps must be >= 1, got {steps}")
    if solver not in ("euler", "heun"):
        raise ValueError(f"unknown solver {solver!r}")
    zs = tuple(z1)
    h = 1.0 / steps
    for k in range(steps):
        t = 1.0 - k * h
        v1 = velocity_fn(zs, t)
        if solver == "euler":
            zs = tuple(z - h * v for z, v in zip(zs, v1))
        else:
            zp = tuple(z - h * v for z, v in zip(zs, v1))
            v2 = velocity_fn(zp, t - h)
            zs = tuple(z - 0.5 * h * (a + b) for z, a, b in zip(zs, v1, v2))
    return zs


def build_conditioning(
    gbuffers,
    cameras,
    ref_image,
    patch_size: int,
    dtype=torch.float32,
    windows=None,
) -> Conditioning:
    """Assemble model conditioning from g-buffers and a reference image.

    `windows` optionally gives (row0, col0, full_size) per view for crops,
    so coordinate fallbacks for background tokens stay anchored to the
    camera rays of the original full frame.
    """
    geom_list, coord_list = [], []
    p = patch_size
    for i, (gb, cam) in enumerate(zip(gbuffers, cameras)):
        h, w = gb.mask.shape
        if h % p or w % p:
            raise ShapeMismatch(f"g-buffer {h}x{w} not divisible by patch {p}")
        planes = np.concatenate([gb.normal_map * 2.0 - 1.0, gb.ccm * 2.0 - 1.0], axis=-1)
        geom_list.append(planes)

        mask = gb.mask.astype(np.float64)
        ccm = gb.ccm.astype(np.float64)
        hp, wp = h // p, w // p
        m = mask.reshape(hp, p, wp, p)
        count = m.sum(axis=(1, 3))
        csum = (ccm * mask[..., None]).reshape(hp, p, wp, p, 3).sum(axis=(1, 3))
        if windows is not None:
            r0, c0, full = windows[i]
            mid = cam.pixel_midplane_points(full)[r0 : r0 + h, c0 : c0 + w]
        else:
            mid = cam.pixel_midplane_points(h)
        mid_mean = mid.reshape(hp, p, wp, p, 3).mean(axis=(1, 3)) + 0.5
        safe = np.maximum(count, 1.0)[..., None]
        coords = np.where(count[..., None] > 0, csum / safe, mid_mean)
        coord_list.append(coords)

    geom = torch.as_tensor(
        np.stack([patchify_np(g, p) for g in geom_list]), dtype=dtype
    )
    coords = torch.as_tensor(np.stack(coord_list), dtype=dtype)
    ref = np.asarray(ref_image, dtype=np.float64) * 2.0 - 1.0
    ref_tokens = torch.as_tensor(patchify_np(ref, p).reshape(-1, p * p * 3), dtype=dtype)
    return Conditioning(
        ref_tokens=ref_tokens,
        geom_tokens=geom,
        view_coords=coords,
        gbuffers=list(gbuffers),
        cameras=list(cameras),
    )


def patchify_np(image: np.ndarray, patch: int) -> np.ndarray:
    h, w, c = image.shape
    x = image.reshape(h // patch, patch, w // patch, patch, c)
    return x.transpose(0, 2, 1, 3, 4).reshape(h // patch, w // patch, patch * patch * c)


def save_model(path: str, model: MaterialDenoiser) -> None:
    from dataclasses import asdict

    from .nn.checkpoint import save_checkpoint

    meta = {"config": asdict(model.config), "trained": bool(model.trained)}
    meta["config"]["channels"] = list(model.config.channels)
    save_checkpoint(path, {k: v for k, v in model.state_dict().items()}, meta)


def load_model(path: str, dtype=torch.float32) -> MaterialDenoiser:
    from .errors import FormatError
    from .nn.checkpoint import load_checkpoint

    tensors, meta = load_checkpoint(path)
    if "config" not in meta:
        raise FormatError("checkpoint header mismatch: missing model config")
    cfg_dict = dict(meta["config"])
    cfg_dict["channels"] = tuple(cfg_dict.get("channels", ("albedo", "mr")))
    model = MaterialDenoiser(DenoiserConfig(**cfg_dict), seed=0, dtype=dtype)
    state = {k: torch.as_tensor(v, dtype=dtype) for k, v in tensors.items()}
    model.load_state_dict(state)
    if meta.get("trained", True):
        model.mark_trained()
    return model
