"""Fuse per-view material images into UV-space textures.

Each covered texel is reprojected into every view; views that pass the
depth-visibility and facing tests contribute with cos^k orientation
weights. Albedo and MR are blended with the same accepted sets and
weights, keeping the channels spatially locked together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .errors import MissingUVs
from .imaging import sample_image_at_pixels
from .materials import MaterialSet, MaterialViews
from .mesh import Mesh
from .raster import rasterize


@dataclass
class UVBuffers:
    position: np.ndarray  # (R,R,3) object-space surface point per texel
    normal: np.ndarray  # (R,R,3) unit surface normal per texel
    mask: np.ndarray  # (R,R) bool, texel owned by some triangle


@dataclass
class BakeDebug:
    accepted: np.ndarray  # (V,R,R) bool, view contributed at texel
    weights: np.ndarray  # (V,R,R) normalized blend weights (albedo == MR)


def rasterize_uv_positions(mesh: Mesh, resolution: int) -> UVBuffers:
    """Rasterize surface position and normal into the UV atlas."""
    if not mesh.has_uvs():
        raise MissingUVs("mesh has no UVs")
    pts = np.asarray(mesh.uvs, dtype=np.float64) * float(resolution)
    corners = mesh.corner_positions()
    normals = mesh.vertex_normals[mesh.triangles]
    attrs = np.concatenate([corners, normals], axis=2)
    res = rasterize(pts, None, attrs, resolution, resolution)
    nrm = res.attrs[..., 3:6]
    length = np.linalg.norm(nrm, axis=-1, keepdims=True)
    nrm = np.where(length > 1e-12, nrm / np.maximum(length, 1e-300), 0.0)
    return UVBuffers(position=res.attrs[..., 0:3], normal=nrm, mask=res.mask)


def _canonical_view_order(cameras: list[Camera]) -> list[int]:
    # permutation-invariant accumulation: fold views in a canonical order
    def key(idx):
        c = cameras[idx]
        return tuple(np.round(c.view_direction, 9)) + tuple(np.round(c.up, 9)) + (
            c.ortho_half_extent,
            c.image_size,
        )

    return sorted(range(len(cameras)), key=key)


def bake(
    mesh: Mesh,
    views: MaterialViews,
    cameras: list[Camera],
    resolution: int,
    cos_power: float = 4.0,
    depth_epsilon: float | None = None,
    sampling: str = "bilinear",
    return_debug: bool = False,
):
    """Project every texel into the views and blend accepted samples.

    Acceptance per texel and view: inside the image, fully covered
    footprint, |projected depth - stored g-buffer depth| <= epsilon, and
    cos(theta) = n.(-view_dir) > 0. Blend weights are cos(theta)^k
    normalized over accepted views; texels no view accepts stay unset in
    texel_mask (cavities are expected, not fatal).
    """
    if depth_epsilon is None:
        depth_epsilon = 2.0 / resolution
    uvb = rasterize_uv_positions(mesh, resolution)
    tex_rows, tex_cols = np.nonzero(uvb.mask)
    p = uvb.position[tex_rows, tex_cols]
    n = uvb.normal[tex_rows, tex_cols]
    n_tex = len(tex_rows)

    albedo_acc = np.zeros((n_tex, 3), dtype=np.float64)
    mr_acc = np.zeros((n_tex, 3), dtype=np.float64)
    weight_acc = np.zeros(n_tex, dtype=np.float64)
    debug_accept = np.zeros((len(cameras), resolution, resolution), dtype=bool)
    debug_weight = np.zeros((len(cameras), resolution, resolution), dtype=np.float64)

    for v in _canonical_view_order(cameras):
        cam = cameras[v]
        gb = views.gbuffers[v]
        s = cam.image_size
        pts, depth = cam.project(p)
        px, py = pts[..., 0], pts[..., 1]
        inb = (px >= 0.0) & (px <= s) & (py >= 0.0) & (py <= s)

        covered = sample_image_at_pixels(gb.mask.astype(np.float64), px, py) > 0.999
        depth_safe = np.where(gb.mask, gb.depth, 0.0)  # inf would poison bilinear
        seen_depth = sample_image_at_pixels(depth_safe, px, py)
        visible = np.abs(depth - seen_depth) <= depth_epsilon
        cos = np.maximum(0.0, n @ -cam.view_direction)
        accept = inb & covered & visible & (cos > 0.0)
        if not accept.any():
            continue
        w = np.where(accept, cos**cos_power, 0.0)
        alb = sample_image_at_pixels(np.asarray(views.albedo[v], dtype=np.float64), px, py, sampling)
        mr = sample_image_at_pixels(np.asarray(views.mr[v], dtype=np.float64), px, py, sampling)
        albedo_acc += w[:, None] * alb
        mr_acc += w[:, None] * mr
        weight_acc += w
        debug_accept[v, tex_rows, tex_cols] = accept
        debug_weight[v, tex_rows, tex_cols] = w

    baked_mask = weight_acc > 0.0
    denom = np.where(baked_mask, weight_acc, 1.0)[:, None]
    albedo = np.zeros((resolution, resolution, 3), dtype=np.float64)
    mr_tex = np.zeros((resolution, resolution, 3), dtype=np.float64)
    albedo[tex_rows, tex_cols] = np.where(baked_mask[:, None], albedo_acc / denom, 0.0)
    mr_tex[tex_rows, tex_cols] = np.where(baked_mask[:, None], mr_acc / denom, 0.0)
    full_mask = np.zeros((resolution, resolution), dtype=bool)
    full_mask[tex_rows, tex_cols] = baked_mask

    result = MaterialSet(
        albedo_texture=np.clip(albedo, 0.0, 1.0),
        mr_texture=np.clip(mr_tex, 0.0, 1.0),
        texel_mask=full_mask,
    )
    if return_debug:
        with np.errstate(invalid="ignore"):
            norm = debug_weight.sum(axis=0)
        norm = np.where(norm > 0, norm, 1.0)
        debug = BakeDebug(accepted=debug_accept, weights=debug_weight / norm)
        return result, debug
    return result


def dilate_seams(texture: np.ndarray, mask: np.ndarray, iterations: int) -> np.ndarray:
    """Flood uncovered texels from covered 4-neighbors; sources never change."""
    tex = np.asarray(texture, dtype=np.float64).copy()
    cur = np.asarray(mask, dtype=bool).copy()
    if tex.ndim == 2:
        tex = tex[..., None]
        squeeze = True
    else:
        squeeze = False
    for _ in range(int(iterations)):
        if cur.all():
            break
        m = cur.astype(np.float64)
        src = tex * m[..., None]
        acc = np.zeros_like(tex)
        cnt = np.zeros_like(m)
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            acc_shift = np.zeros_like(tex)
            cnt_shift = np.zeros_like(m)
            rs = slice(max(dr, 0), tex.shape[0] + min(dr, 0))
            rd = slice(max(-dr, 0), tex.shape[0] + min(-dr, 0))
            cs = slice(max(dc, 0), tex.shape[1] + min(dc, 0))
            cd = slice(max(-dc, 0), tex.shape[1] + min(-dc, 0))
            acc_shift[rd, cd] = src[rs, cs]
            cnt_shift[rd, cd] = m[rs, cs]
            acc += acc_shift
            cnt += cnt_shift
        newly = (~cur) & (cnt > 0)
        if not newly.any():
            break
        tex[newly] = acc[newly] / cnt[newly][:, None]
        cur |= newly
    return tex[..., 0] if squeeze else tex
