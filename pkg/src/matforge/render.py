"""Screen-space rendering: geometry buffers and shaded/intrinsic views.

Normals are stored encoded as n*0.5+0.5 and object-space positions as
p+0.5 (the canonical coordinate map), both 8-bit safe for meshes inside
the normalized unit cube.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brdf import Light, MaterialSample, shade_brdf
from .camera import Camera
from .errors import EmptyMesh, MissingUVs
from .imaging import bilinear_sample, nearest_sample
from .materials import MaterialSet
from .mesh import Mesh
from .raster import rasterize

DEPTH_SENTINEL = np.inf


@dataclass
class GBuffer:
    normal_map: np.ndarray  # (H,W,3) float32 in [0,1], 0.5 where empty
    ccm: np.ndarray  # (H,W,3) float32 in [0,1], 0 where empty
    depth: np.ndarray  # (H,W) float64 camera depth, +inf where empty
    mask: np.ndarray  # (H,W) bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def decoded_normals(self) -> np.ndarray:
        return self.normal_map * 2.0 - 1.0

    def decoded_positions(self) -> np.ndarray:
        return self.ccm - 0.5


def rasterize_gbuffer(mesh: Mesh, camera: Camera) -> GBuffer:
    """Z-buffered normal/CCM/depth/coverage buffers for one view."""
    if mesh.num_triangles == 0:
        raise EmptyMesh("cannot rasterize an empty mesh")
    corners = mesh.corner_positions()  # (T,3,3)
    pts2d, depth = camera.project(corners.reshape(-1, 3))
    pts2d = pts2d.reshape(-1, 3, 2)
    depth = depth.reshape(-1, 3)
    normals = mesh.vertex_normals[mesh.triangles]  # (T,3,3)
    attrs = np.concatenate([corners, normals], axis=2)  # position, normal
    s = camera.image_size
    res = rasterize(pts2d, depth, attrs, s, s)

    mask = res.mask
    pos = res.attrs[..., 0:3]
    nrm = res.attrs[..., 3:6]
    length = np.linalg.norm(nrm, axis=-1, keepdims=True)
    nrm = np.where(length > 1e-12, nrm / np.maximum(length, 1e-300), 0.0)

    normal_map = np.where(mask[..., None], nrm * 0.5 + 0.5, 0.5).astype(np.float32)
    ccm = np.where(mask[..., None], pos + 0.5, 0.0).astype(np.float32)
    depth_buf = np.where(mask, res.depth, DEPTH_SENTINEL)
    return GBuffer(normal_map=normal_map, ccm=ccm, depth=depth_buf, mask=mask)


def _rasterize_surface(mesh: Mesh, camera: Camera):
    """Per-pixel interpolated uv/normal buffers for material lookups."""
    if not mesh.has_uvs():
        raise MissingUVs("rendering with materials requires UVs")
    corners = mesh.corner_positions()
    pts2d, depth = camera.project(corners.reshape(-1, 3))
    pts2d = pts2d.reshape(-1, 3, 2)
    depth = depth.reshape(-1, 3)
    normals = mesh.vertex_normals[mesh.triangles]
    attrs = np.concatenate([mesh.uvs, normals], axis=2)  # (T,3,5)
    s = camera.image_size
    res = rasterize(pts2d, depth, attrs, s, s)
    uv = res.attrs[..., 0:2]
    nrm = res.attrs[..., 2:5]
    length = np.linalg.norm(nrm, axis=-1, keepdims=True)
    nrm = np.where(length > 1e-12, nrm / np.maximum(length, 1e-300), 0.0)
    return res.mask, uv, nrm


def render_views(
    mesh: Mesh,
    material: MaterialSet,
    cameras: list[Camera],
    light: Light,
    sampling: str = "bilinear",
) -> list[np.ndarray]:
    """Shaded renders of the textured mesh, one RGB image per camera.

    Per-pixel UV-sampled material shaded with the Cook-Torrance model;
    background black; output clipped to [0,1].
    """
    sampler = bilinear_sample if sampling == "bilinear" else nearest_sample
    images = []
    for camera in cameras:
        mask, uv, nrm = _rasterize_surface(mesh, camera)
        albedo = sampler(material.albedo_texture, uv)
        mr = sampler(material.mr_texture, uv)
        sample = MaterialSample(albedo=albedo, metallic=mr[..., 2], roughness=mr[..., 1])
        view = np.broadcast_to(-camera.view_direction, albedo.shape)
        rgb = shade_brdf(sample, nrm, view, light)
        img = np.where(mask[..., None], np.clip(rgb, 0.0, 1.0), 0.0)
        images.append(img.astype(np.float32))
    return images


def sample_material_views(
    mesh: Mesh,
    material: MaterialSet,
    cameras: list[Camera],
    sampling: str = "bilinear",
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Unlit per-view albedo and MR images (the intrinsic targets)."""
    sampler = bilinear_sample if sampling == "bilinear" else nearest_sample
    albedo_views, mr_views = [], []
    for camera in cameras:
        mask, uv, _ = _rasterize_surface(mesh, camera)
        albedo = np.where(mask[..., None], sampler(material.albedo_texture, uv), 0.0)
        mr = np.where(mask[..., None], sampler(material.mr_texture, uv), 0.0)
        albedo_views.append(albedo.astype(np.float32))
        mr_views.append(mr.astype(np.float32))
    return albedo_views, mr_views
