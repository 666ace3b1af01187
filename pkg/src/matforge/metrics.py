"""Desk-scale quantitative evaluation: every number is recomputable.

Neural similarity metrics are out of reach without pretrained networks,
so evaluation rests on pixel fidelity (PSNR), cross-view agreement at CCM
correspondences, and re-render error from held-out cameras.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .brdf import Light
from .camera import Camera
from .errors import EmptyMask, NoCorrespondences, ShapeMismatch
from .imaging import sample_image_at_pixels
from .materials import MaterialSet, MaterialViews
from .mesh import Mesh
from .render import render_views

CONSISTENCY_THRESHOLD = 1.0 / 128.0  # world units, matches 8-bit CCM quantization


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """10*log10(1/MSE) for images in [0,1]; +inf when identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[: mask.ndim]:
            raise ShapeMismatch(f"mask {mask.shape} does not prefix image {a.shape}")
        if not mask.any():
            raise EmptyMask("mask selects no pixels")
        a, b = a[mask], b[mask]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def cross_view_consistency(
    views: MaterialViews,
    threshold: float = CONSISTENCY_THRESHOLD,
    samples_per_view: int = 4000,
    seed: int = 0,
) -> float:
    """RMSE of albedo at surface points observed by multiple views.

    Pixels are sampled per view, reprojected into every other view via the
    cameras carried by `views`, and paired when the CCM positions agree
    within `threshold`, both depths match (mutual visibility), and the
    surface faces both cameras.
    """
    if not views.cameras:
        raise ValueError("views must carry their cameras for reprojection")
    rng = np.random.default_rng(seed)
    sq_sum = 0.0
    count = 0
    v = views.num_views
    for i in range(v):
        gb_i = views.gbuffers[i]
        rows, cols = np.nonzero(gb_i.mask)
        if len(rows) == 0:
            continue
        take = min(samples_per_view, len(rows))
        sel = rng.choice(len(rows), size=take, replace=False)
        r, c = rows[sel], cols[sel]
        p = gb_i.ccm[r, c].astype(np.float64) - 0.5
        n = gb_i.normal_map[r, c].astype(np.float64) * 2.0 - 1.0
        albedo_i = np.asarray(views.albedo[i], dtype=np.float64)[r, c]
        cam_i = views.cameras[i]
        facing_i = (n @ -cam_i.view_direction) > 0.0
        for j in range(v):
            if j == i:
                continue
            cam_j = views.cameras[j]
            gb_j = views.gbuffers[j]
            s = cam_j.image_size
            pts, depth = cam_j.project(p)
            px, py = pts[..., 0], pts[..., 1]
            inb = (px >= 0) & (px <= s) & (py >= 0) & (py <= s)
            covered = sample_image_at_pixels(gb_j.mask.astype(np.float64), px, py) > 0.999
            depth_safe = np.where(gb_j.mask, gb_j.depth, 0.0)
            seen = sample_image_at_pixels(depth_safe, px, py)
            visible = np.abs(depth - seen) <= threshold
            ccm_j = sample_image_at_pixels(gb_j.ccm.astype(np.float64), px, py)
            agree = np.linalg.norm(ccm_j - (p + 0.5), axis=-1) <= threshold
            facing_j = (n @ -cam_j.view_direction) > 0.0
            ok = inb & covered & visible & agree & facing_i & facing_j
            if not ok.any():
                continue
            albedo_j = sample_image_at_pixels(np.asarray(views.albedo[j], dtype=np.float64), px, py)
            d2 = np.mean((albedo_i[ok] - albedo_j[ok]) ** 2, axis=-1)
            sq_sum += float(d2.sum())
            count += int(ok.sum())
    if count == 0:
        raise NoCorrespondences("no cross-view pixel pairs satisfied the matching criteria")
    return float(np.sqrt(sq_sum / count))


def heldout_rerender(
    mesh: Mesh,
    baked: MaterialSet,
    gt: MaterialSet,
    heldout_cameras: list[Camera],
    light: Light,
) -> float:
    """Mean PSNR between baked- and GT-textured renders from unseen views."""
    imgs_baked = render_views(mesh, baked, heldout_cameras, light)
    imgs_gt = render_views(mesh, gt, heldout_cameras, light)
    values = []
    for a, b in zip(imgs_baked, imgs_gt):
        silhouette = np.any(b > 0, axis=-1) | np.any(a > 0, axis=-1)
        values.append(psnr(a, b, mask=silhouette))
    finite = [v for v in values if np.isfinite(v)]
    return float(np.mean(finite)) if finite else float("inf")


@dataclass
class MetricReport:
    psnr_db: float | None = None
    cross_view_consistency_rmse: float | None = None
    heldout_rerender_psnr_db: float | None = None
    per_asset: list[dict] = field(default_factory=list)
    notes: str = "synthetic ground truth; every metric recomputable from inputs"

    def to_dict(self) -> dict:
        return {
            "psnr_db": self.psnr_db,
            "cross_view_consistency_rmse": self.cross_view_consistency_rmse,
            "heldout_rerender_psnr_db": self.heldout_rerender_psnr_db,
            "per_asset": self.per_asset,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=True)

    def to_markdown(self) -> str:
        def fmt(x):
            if x is None:
                return "-"
            return f"{x:.4g}" if np.isfinite(x) else "inf"

        lines = [
            "| metric | value |",
            "| --- | --- |",
            f"| PSNR (dB) | {fmt(self.psnr_db)} |",
            f"| cross-view RMSE | {fmt(self.cross_view_consistency_rmse)} |",
            f"| held-out re-render PSNR (dB) | {fmt(self.heldout_rerender_psnr_db)} |",
        ]
        if self.per_asset:
            lines.append("")
            keys = sorted({k for row in self.per_asset for k in row if k != "name"})
            lines.append("| asset | " + " | ".join(keys) + " |")
            lines.append("| --- | " + " | ".join(["---"] * len(keys)) + " |")
            for row in self.per_asset:
                cells = [fmt(row.get(k)) if isinstance(row.get(k), (int, float)) else str(row.get(k, "-")) for k in keys]
                lines.append(f"| {row.get('name', '?')} | " + " | ".join(cells) + " |")
        lines.append("")
        lines.append(f"_{self.notes}_")
        return "\n".join(lines)
