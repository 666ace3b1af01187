"""Flow-matching training with the dual-phase zoom-in strategy.

Phase 1 trains on full multi-view frames. Phase 2 resumes from a phase-1
checkpoint and trains on consistent random crops of reference and view
buffers (same fraction, independent origins); token coordinates are
recomputed from the cropped CCM so geometry conditioning stays truthful,
which is what lets the model run at higher resolutions than it was
trained on. An optional illumination-invariance term penalizes albedo
predictions that change when only the reference lighting changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .camera import Camera
from .dataset import Asset, Dataset
from .denoiser import (
    Conditioning,
    DenoiserConfig,
    DenoiserState,
    MaterialDenoiser,
    build_conditioning,
    flow_interpolate,
)
from .errors import DivergedLoss, ShapeMismatch
from .render import GBuffer


@dataclass
class TrainConfig:
    phase: int = 1
    views: int = 6
    image_size: int = 64
    zoom_range: tuple[float, float] = (0.4, 1.0)
    batch_size: int = 2
    learning_rate: float = 2e-3
    steps: int = 200
    seed: int = 0
    w_flow: float = 1.0
    w_illum: float = 0.0
    cfg_dropout: float = 0.1
    model: DenoiserConfig = field(default_factory=DenoiserConfig)

    def __post_init__(self):
        if self.phase not in (1, 2):
            raise ValueError("phase must be 1 or 2")
        lo, hi = self.zoom_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError("zoom_range must lie inside (0, 1]")
        if self.learning_rate < 0 or self.steps <= 0:
            raise ValueError("learning rate must be >= 0 and steps positive")


@dataclass
class TrainExample:
    """One optimization sample: concrete arrays, ready to crop or embed."""

    target_albedo: np.ndarray  # (V,H,W,3)
    target_mr: np.ndarray
    gbuffers: list[GBuffer]
    cameras: list[Camera]
    ref_image: np.ndarray
    ref_image_alt: np.ndarray | None
    t: float
    drop_ref: bool
    noise_albedo: torch.Tensor | None = None
    noise_mr: torch.Tensor | None = None
    windows: list | None = None  # (row0, col0, full_size) per view after cropping


@dataclass
class TrainResult:
    model: MaterialDenoiser
    history: list[dict]

    def loss_curve(self) -> list[float]:
        return [row["total"] for row in self.history]


def crop_view_size(full: int, fraction: float, patch: int) -> int:
    """Crop edge length: nearest patch multiple of fraction*full, >= 1 patch."""
    tokens = max(1, round(fraction * full / patch))
    return min(tokens * patch, full)


def crop_gbuffer(gb: GBuffer, row0: int, col0: int, size: int) -> GBuffer:
    """Restriction of all buffers to a window; values are untouched."""
    sl = (slice(row0, row0 + size), slice(col0, col0 + size))
    return GBuffer(
        normal_map=gb.normal_map[sl],
        ccm=gb.ccm[sl],
        depth=gb.depth[sl],
        mask=gb.mask[sl],
    )


def crop_example(
    example: TrainExample,
    fraction: float,
    view_origins: list[tuple[int, int]],
    ref_origin: tuple[int, int],
    patch: int,
) -> TrainExample:
    """Apply a consistent zoom-in crop (same fraction everywhere).

    View targets and g-buffers crop together per view; the reference crops
    independently. A fraction of 1.0 is the identity.
    """
    full = example.target_albedo.shape[1]
    size = crop_view_size(full, fraction, patch)
    alb = np.stack(
        [example.target_albedo[i, r : r + size, c : c + size] for i, (r, c) in enumerate(view_origins)]
    )
    mr = np.stack(
        [example.target_mr[i, r : r + size, c : c + size] for i, (r, c) in enumerate(view_origins)]
    )
    gbs = [crop_gbuffer(gb, r, c, size) for gb, (r, c) in zip(example.gbuffers, view_origins)]
    rfull = example.ref_image.shape[0]
    rsize = crop_view_size(rfull, fraction, patch)
    rr, rc = ref_origin
    ref = example.ref_image[rr : rr + rsize, rc : rc + rsize]
    ref_alt = (
        example.ref_image_alt[rr : rr + rsize, rc : rc + rsize]
        if example.ref_image_alt is not None
        else None
    )
    return replace(
        example,
        target_albedo=alb,
        target_mr=mr,
        gbuffers=gbs,
        ref_image=ref,
        ref_image_alt=ref_alt,
        windows=[(r, c, full) for (r, c) in view_origins],
    )


def illumination_invariance_loss(
    pred_albedo_light_a: torch.Tensor,
    pred_albedo_light_b: torch.Tensor,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean squared albedo difference between two lightings (covered pixels)."""
    if pred_albedo_light_a.shape != pred_albedo_light_b.shape:
        raise ShapeMismatch(
            f"{tuple(pred_albedo_light_a.shape)} vs {tuple(pred_albedo_light_b.shape)}"
        )
    diff = (pred_albedo_light_a - pred_albedo_light_b) ** 2
    if mask is None:
        return diff.mean()
    m = mask.to(diff.dtype)
    while m.ndim < diff.ndim:
        m = m[..., None]
    m = m.expand_as(diff)
    return (diff * m).sum() / torch.clamp(m.sum(), min=1.0)


def compute_example_loss(model: MaterialDenoiser, example: TrainExample, cfg: TrainConfig):
    """Flow-matching loss plus optional illumination-invariance term."""
    dtype = model.model_dtype
    x0_a = torch.as_tensor(example.target_albedo, dtype=dtype) * 2.0 - 1.0
    x0_m = torch.as_tensor(example.target_mr, dtype=dtype) * 2.0 - 1.0
    noise_a, noise_m = example.noise_albedo, example.noise_mr
    z_a = flow_interpolate(x0_a, noise_a, example.t)
    z_m = flow_interpolate(x0_m, noise_m, example.t)
    state = DenoiserState(z_albedo=z_a, z_mr=z_m, t=example.t)

    cond = build_conditioning(
        example.gbuffers, example.cameras, example.ref_image, cfg.model.patch_size,
        dtype=dtype, windows=example.windows,
    )
    if example.drop_ref:
        cond = cond.dropped()
    v_a, v_m = model.denoise_velocity(state, cond)
    flow = ((v_a - (noise_a - x0_a)) ** 2).mean() + ((v_m - (noise_m - x0_m)) ** 2).mean()

    illum = torch.zeros((), dtype=dtype)
    if cfg.w_illum > 0 and example.ref_image_alt is not None and not example.drop_ref:
        cond_alt = build_conditioning(
            example.gbuffers, example.cameras, example.ref_image_alt, cfg.model.patch_size,
            dtype=dtype, windows=example.windows,
        )
        v_a_alt, _ = model.denoise_velocity(state, cond_alt)
        x0_est = z_a - example.t * v_a
        x0_est_alt = z_a - example.t * v_a_alt
        mask = torch.as_tensor(np.stack([gb.mask for gb in example.gbuffers]), dtype=dtype)
        illum = illumination_invariance_loss(x0_est, x0_est_alt, mask)

    total = cfg.w_flow * flow + cfg.w_illum * illum
    return total, {"flow": float(flow.detach()), "illum": float(illum.detach())}


def draw_example(
    rng: np.random.Generator,
    gen: torch.Generator,
    data: Dataset,
    cfg: TrainConfig,
    zoom: bool,
    dtype,
) -> TrainExample:
    asset = data.assets[int(rng.integers(len(data.assets)))]
    n_lights = len(asset.lights)
    if cfg.w_illum > 0 and n_lights >= 2:
        ia, ib = [int(x) for x in rng.choice(n_lights, size=2, replace=False)]
        ref, ref_alt = asset.references[ia], asset.references[ib]
    else:
        ia = int(rng.integers(n_lights))
        ref, ref_alt = asset.references[ia], None
    example = TrainExample(
        target_albedo=asset.target_albedo,
        target_mr=asset.target_mr,
        gbuffers=asset.gbuffers,
        cameras=asset.cameras,
        ref_image=ref,
        ref_image_alt=ref_alt,
        t=float(rng.uniform(0.0, 1.0)),
        drop_ref=bool(rng.uniform() < cfg.cfg_dropout),
    )
    if zoom:
        patch = cfg.model.patch_size
        f = float(rng.uniform(cfg.zoom_range[0], cfg.zoom_range[1]))
        full = example.target_albedo.shape[1]
        size = crop_view_size(full, f, patch)
        origins = [
            (int(rng.integers(0, full - size + 1)), int(rng.integers(0, full - size + 1)))
            for _ in range(len(example.gbuffers))
        ]
        rfull = example.ref_image.shape[0]
        rsize = crop_view_size(rfull, f, patch)
        ref_origin = (
            int(rng.integers(0, rfull - rsize + 1)),
            int(rng.integers(0, rfull - rsize + 1)),
        )
        example = crop_example(example, f, origins, ref_origin, patch)
    shape = example.target_albedo.shape
    example.noise_albedo = torch.randn(shape, generator=gen, dtype=dtype)
    example.noise_mr = torch.randn(shape, generator=gen, dtype=dtype)
    return example


def _train(cfg: TrainConfig, data: Dataset, model: MaterialDenoiser, zoom: bool) -> TrainResult:
    opt = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed + 1)
    history = []
    for step in range(cfg.steps):
        opt.zero_grad()
        flow_sum = illum_sum = total_sum = 0.0
        for _ in range(cfg.batch_size):
            example = draw_example(rng, gen, data, cfg, zoom, model.model_dtype)
            loss, parts = compute_example_loss(model, example, cfg)
            (loss / cfg.batch_size).backward()
            flow_sum += parts["flow"] / cfg.batch_size
            illum_sum += parts["illum"] / cfg.batch_size
            total_sum += float(loss.detach()) / cfg.batch_size
        if not np.isfinite(total_sum):
            raise DivergedLoss(f"loss became non-finite at step {step}")
        opt.step()
        history.append(
            {"step": step, "flow_loss": flow_sum, "illum_loss": illum_sum, "total": total_sum}
        )
    model.mark_trained()
    return TrainResult(model=model, history=history)


def train_phase1(cfg: TrainConfig, data: Dataset, model: MaterialDenoiser | None = None) -> TrainResult:
    """Conventional full-frame multi-view training."""
    if cfg.phase != 1:
        raise ValueError("train_phase1 requires cfg.phase == 1")
    if model is None:
        model = MaterialDenoiser(cfg.model, seed=cfg.seed)
    return _train(cfg, data, model, zoom=False)


def train_phase2_zoomin(cfg: TrainConfig, data: Dataset, init: MaterialDenoiser) -> TrainResult:
    """Zoom-in training resumed from a phase-1 model."""
    if cfg.phase != 2:
        raise ValueError("train_phase2_zoomin requires cfg.phase == 2")
    model = MaterialDenoiser(cfg.model, seed=cfg.seed)
    model.load_state_dict(init.state_dict())
    if init.trained:
        model.mark_trained()
    return _train(cfg, data, model, zoom=True)


def evaluate_flow_loss(
    model: MaterialDenoiser,
    data: Dataset,
    cfg: TrainConfig,
    n_examples: int = 16,
    seed: int = 9173,
) -> float:
    """Flow loss on a frozen evaluation batch (fixed assets/t/noise draws).

    Gives a low-variance reading of training progress: evaluate once at
    init and once after training with the same seed.
    """
    from dataclasses import replace as dc_replace

    eval_cfg = dc_replace(cfg, cfg_dropout=0.0, w_illum=0.0)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    total = 0.0
    with torch.no_grad():
        for _ in range(n_examples):
            ex = draw_example(rng, gen, data, eval_cfg, zoom=False, dtype=model.model_dtype)
            _, parts = compute_example_loss(model, ex, eval_cfg)
            total += parts["flow"] / n_examples
    return total


def evaluation_conditioning(
    asset: Asset,
    patch_size: int,
    light_index: int = 0,
    image_size: int | None = None,
    dtype=torch.float32,
) -> Conditioning:
    """Conditioning for sampling an asset, optionally at a new resolution.

    Re-rendering at another size needs the asset mesh (in-memory datasets
    keep it; disk caches do not).
    """
    from dataclasses import replace as dc_replace

    from .render import rasterize_gbuffer, render_views

    if image_size is None or image_size == asset.gbuffers[0].mask.shape[0]:
        gbuffers, cameras = asset.gbuffers, asset.cameras
        ref = asset.references[light_index]
    else:
        if asset.mesh is None:
            raise ValueError("resizing evaluation requires the asset mesh")
        cameras = [dc_replace(cam, image_size=image_size) for cam in asset.cameras]
        gbuffers = [rasterize_gbuffer(asset.mesh, cam) for cam in cameras]
        ref_cam = dc_replace(asset.ref_camera, image_size=image_size)
        ref = render_views(asset.mesh, asset.material, [ref_cam], asset.lights[light_index])[0]
    return build_conditioning(gbuffers, cameras, ref, patch_size, dtype=dtype)


def save_history_csv(history: list[dict], path: str) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "flow_loss", "illum_loss", "total"])
        for row in history:
            writer.writerow([row["step"], row["flow_loss"], row["illum_loss"], row["total"]])
