"""Procedural training corpus: textured primitives under varying lights.

Each asset is a primitive with procedural albedo (checker / gradient /
noise) and piecewise-constant metallic-roughness, rendered to per-view
intrinsic targets (lighting-free) plus shaded reference images under at
least two lights. Everything is a pure function of the seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .baking import dilate_seams, rasterize_uv_positions
from .brdf import Light
from .camera import Camera, make_orbit_camera, make_view_set
from .materials import MaterialSet
from .mesh import Mesh, normalize_to_unit_cube
from .primitives import make_cube, make_cylinder, make_icosphere, make_torus
from .render import GBuffer, render_views, rasterize_gbuffer, sample_material_views

SHAPE_BUILDERS = {
    "cube": make_cube,
    "icosphere": make_icosphere,
    "cylinder": make_cylinder,
    "torus": make_torus,
}
TEXTURE_KINDS = ("checker", "gradient", "noise")


@dataclass
class Asset:
    name: str
    shape: str
    mesh: Mesh | None
    material: MaterialSet  # ground-truth textures
    cameras: list[Camera]
    gbuffers: list[GBuffer]
    target_albedo: np.ndarray  # (V,H,W,3) intrinsic, lighting-free
    target_mr: np.ndarray  # (V,H,W,3)
    lights: list[Light]
    references: list[np.ndarray]  # per light, shaded reference render
    ref_camera: Camera


@dataclass
class Dataset:
    assets: list[Asset]
    views: int
    image_size: int
    seed: int


def checker_texture(rng: np.random.Generator, res: int, cells: int | None = None) -> np.ndarray:
    if cells is None:
        cells = int(rng.integers(4, 9))
    c1 = rng.uniform(0.15, 0.9, size=3)
    c2 = rng.uniform(0.15, 0.9, size=3)
    idx = np.arange(res) * cells // res
    parity = (idx[:, None] + idx[None, :]) % 2
    return np.where(parity[..., None] == 0, c1, c2).astype(np.float64)


def gradient_texture(rng: np.random.Generator, res: int) -> np.ndarray:
    corners = rng.uniform(0.1, 0.95, size=(2, 2, 3))
    u = (np.arange(res) + 0.5) / res
    top = corners[0, 0] * (1 - u)[:, None] + corners[0, 1] * u[:, None]
    bot = corners[1, 0] * (1 - u)[:, None] + corners[1, 1] * u[:, None]
    return (top[None, :, :] * (1 - u)[:, None, None] + bot[None, :, :] * u[:, None, None]).astype(
        np.float64
    )


def noise_texture(rng: np.random.Generator, res: int, base: int = 6) -> np.ndarray:
    coarse = rng.uniform(0.1, 0.95, size=(base, base, 3))
    from .imaging import bilinear_sample

    u = (np.arange(res) + 0.5) / res
    uu, vv = np.meshgrid(u, u)
    return bilinear_sample(coarse, np.stack([uu, vv], axis=-1))


def make_albedo_texture(rng: np.random.Generator, res: int, kind: str, cells: int | None = None) -> np.ndarray:
    if kind == "checker":
        return checker_texture(rng, res, cells)
    if kind == "gradient":
        return gradient_texture(rng, res)
    if kind == "noise":
        return noise_texture(rng, res)
    raise ValueError(f"unknown texture kind {kind!r}")


def make_mr_texture(rng: np.random.Generator, res: int) -> np.ndarray:
    """Piecewise-constant regions: metallic in {0,1}, roughness per region."""
    cells = int(rng.integers(2, 5))
    idx = np.arange(res) * cells // res
    region = (idx[:, None] + idx[None, :]) % 2
    metallic = np.where(region == 0, 0.0, 1.0)
    r0, r1 = rng.uniform(0.2, 0.9, size=2)
    roughness = np.where(region == 0, r0, r1)
    mr = np.zeros((res, res, 3), dtype=np.float64)
    mr[..., 1] = roughness
    mr[..., 2] = metallic
    return mr


def random_light(rng: np.random.Generator) -> Light:
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    radiance = rng.uniform(1.8, 3.0, size=3)
    ambient = np.full(3, rng.uniform(0.15, 0.35))
    return Light(direction=d, radiance=radiance, ambient=ambient)


def world_smooth_material(mesh: Mesh, res: int, seed: int = 0) -> MaterialSet:
    """Textures smooth as functions of the surface point.

    Colors vary with object-space position, so chart seams carry no color
    discontinuity; used by the render->bake round-trip oracles.
    """
    rng = np.random.default_rng(seed)
    uvb = rasterize_uv_positions(mesh, res)
    p = uvb.position
    freq = rng.uniform(1.5, 3.0, size=(3, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
    albedo = np.stack(
        [0.5 + 0.35 * np.sin(2.0 * np.pi * (p @ freq[c]) / 4.0 + phase[c]) for c in range(3)],
        axis=-1,
    )
    rough = 0.55 + 0.3 * np.sin(2.0 * np.pi * (p @ rng.uniform(1.0, 2.0, size=3)) / 4.0)
    metal = 0.5 + 0.5 * np.sin(2.0 * np.pi * (p @ rng.uniform(1.0, 2.0, size=3)) / 4.0)
    mr = np.stack([np.zeros_like(rough), rough, metal], axis=-1)
    albedo = dilate_seams(albedo * uvb.mask[..., None], uvb.mask, iterations=res)
    mr = dilate_seams(mr * uvb.mask[..., None], uvb.mask, iterations=res)
    return MaterialSet(
        albedo_texture=np.clip(albedo, 0.0, 1.0),
        mr_texture=np.clip(mr, 0.0, 1.0),
        texel_mask=np.ones((res, res), dtype=bool),
    )


def build_asset(
    name: str,
    shape: str,
    rng: np.random.Generator,
    views: int,
    image_size: int,
    texture_res: int,
    n_lights: int,
    texture_kind: str,
    checker_cells: int | None = None,
) -> Asset:
    mesh = normalize_to_unit_cube(SHAPE_BUILDERS[shape]())
    albedo = make_albedo_texture(rng, texture_res, texture_kind, cells=checker_cells)
    mr = make_mr_texture(rng, texture_res)
    material = MaterialSet(
        albedo_texture=albedo,
        mr_texture=mr,
        texel_mask=np.ones((texture_res, texture_res), dtype=bool),
    )
    cameras = make_view_set(views, image_size)
    gbuffers = [rasterize_gbuffer(mesh, cam) for cam in cameras]
    t_alb, t_mr = sample_material_views(mesh, material, cameras)
    lights = [random_light(rng) for _ in range(n_lights)]
    ref_camera = make_orbit_camera(
        azimuth_deg=float(rng.uniform(20.0, 70.0)),
        elevation_deg=float(rng.uniform(10.0, 35.0)),
        image_size=image_size,
    )
    references = [render_views(mesh, material, [ref_camera], light)[0] for light in lights]
    return Asset(
        name=name,
        shape=shape,
        mesh=mesh,
        material=material,
        cameras=cameras,
        gbuffers=gbuffers,
        target_albedo=np.stack(t_alb),
        target_mr=np.stack(t_mr),
        lights=lights,
        references=references,
        ref_camera=ref_camera,
    )


def make_synthetic_dataset(
    n_assets: int,
    seed: int,
    views: int = 6,
    image_size: int = 64,
    texture_res: int = 128,
    n_lights: int = 2,
    shapes: tuple[str, ...] = ("cube", "icosphere", "cylinder", "torus"),
    texture_kinds: tuple[str, ...] = TEXTURE_KINDS,
    checker_cells: int | None = None,
) -> Dataset:
    rng = np.random.default_rng(seed)
    assets = []
    for i in range(n_assets):
        assets.append(
            build_asset(
                name=f"asset_{i:04d}",
                shape=shapes[i % len(shapes)],
                rng=rng,
                views=views,
                image_size=image_size,
                texture_res=texture_res,
                n_lights=n_lights,
                texture_kind=texture_kinds[i % len(texture_kinds)],
                checker_cells=checker_cells,
            )
        )
    return Dataset(assets=assets, views=views, image_size=image_size, seed=seed)


def save_dataset(dataset: Dataset, out_dir: str) -> None:
    """Cache to disk as PNGs + manifest; meshes are not persisted."""
    from . import png_io
    from .camera import camera_to_dict

    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "views": dataset.views,
        "image_size": dataset.image_size,
        "seed": dataset.seed,
        "assets": [],
    }
    for asset in dataset.assets:
        adir = os.path.join(out_dir, asset.name)
        os.makedirs(adir, exist_ok=True)
        for i, gb in enumerate(asset.gbuffers):
            png_io.save_gbuffer(adir, i, gb)
            png_io.save_rgb(os.path.join(adir, f"{i}_albedo.png"), asset.target_albedo[i])
            png_io.save_rgb(os.path.join(adir, f"{i}_mr.png"), asset.target_mr[i])
        for j, ref in enumerate(asset.references):
            png_io.save_rgb(os.path.join(adir, f"ref_{j}.png"), ref)
        png_io.save_rgb(os.path.join(adir, "gt_albedo.png"), asset.material.albedo_texture)
        png_io.save_rgb(os.path.join(adir, "gt_mr.png"), asset.material.mr_texture)
        manifest["assets"].append(
            {
                "name": asset.name,
                "shape": asset.shape,
                "lights": [
                    {
                        "direction": list(map(float, l.direction)),
                        "radiance": list(map(float, l.radiance)),
                        "ambient": list(map(float, l.ambient)),
                    }
                    for l in asset.lights
                ],
                "ref_camera": camera_to_dict(asset.ref_camera),
            }
        )
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_dataset(path: str) -> Dataset:
    """Rehydrate a cached dataset (targets quantized to 8 bits, no meshes)."""
    from . import png_io
    from .camera import camera_from_dict
    from .errors import FormatError

    manifest_path = os.path.join(path, "manifest.json")
    if not os.path.exists(manifest_path):
        raise FormatError(f"no dataset manifest at {path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    views = manifest["views"]
    image_size = manifest["image_size"]
    cameras = make_view_set(views, image_size)
    assets = []
    for entry in manifest["assets"]:
        adir = os.path.join(path, entry["name"])
        gbuffers = [png_io.load_gbuffer(adir, i) for i in range(views)]
        t_alb = np.stack([png_io.load_rgb(os.path.join(adir, f"{i}_albedo.png")) for i in range(views)])
        t_mr = np.stack([png_io.load_rgb(os.path.join(adir, f"{i}_mr.png")) for i in range(views)])
        lights = [
            Light(
                direction=np.array(l["direction"]),
                radiance=np.array(l["radiance"]),
                ambient=np.array(l["ambient"]),
            )
            for l in entry["lights"]
        ]
        refs = []
        j = 0
        while os.path.exists(os.path.join(adir, f"ref_{j}.png")):
            refs.append(png_io.load_rgb(os.path.join(adir, f"ref_{j}.png")))
            j += 1
        gt_albedo = png_io.load_rgb(os.path.join(adir, "gt_albedo.png"))
        material = MaterialSet(
            albedo_texture=gt_albedo,
            mr_texture=png_io.load_rgb(os.path.join(adir, "gt_mr.png")),
            texel_mask=np.ones(gt_albedo.shape[:2], dtype=bool),
        )
        assets.append(
            Asset(
                name=entry["name"],
                shape=entry["shape"],
                mesh=None,
                material=material,
                cameras=cameras,
                gbuffers=gbuffers,
                target_albedo=t_alb,
                target_mr=t_mr,
                lights=lights,
                references=refs,
                ref_camera=camera_from_dict(entry["ref_camera"]),
            )
        )
    return Dataset(assets=assets, views=views, image_size=image_size, seed=manifest["seed"])
