"""Pipeline CLI: condition rendering, generation, baking, export, eval.

Subcommands compose; each is a pure function of its input files and flags
and reruns byte-identically. Options come from defaults, then an optional
TOML config, then command-line flags (flags win). Exit codes: 0 ok,
2 input error, 3 training divergence, 4 format error, 5 internal.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys

import numpy as np

from .errors import (
    DivergedLoss,
    EmptyMesh,
    FormatError,
    IoError,
    MatforgeError,
    MissingUVs,
    NoCorrespondences,
    ParseError,
    UnsupportedViewCount,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGED = 3
EXIT_FORMAT = 4
EXIT_INTERNAL = 5


def _apply_thread_cap():
    cap = os.environ.get("MATFORGE_THREADS")
    if cap:
        try:
            import torch

            torch.set_num_threads(max(1, int(cap)))
        except ValueError:
            pass


def _load_toml(path: str) -> dict:
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _merge_config(args: argparse.Namespace, parser_defaults: dict) -> argparse.Namespace:
    """defaults < TOML < explicit flags."""
    if not getattr(args, "config", None):
        return args
    table = _load_toml(args.config)
    for key, value in table.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            continue
        # a flag explicitly set on the command line wins over the file
        if getattr(args, attr) == parser_defaults.get(attr):
            setattr(args, attr, value)
    return args


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


class _Stage:
    """Write into `<out>.partial`, promote to `<out>` only on success."""

    def __init__(self, out_dir: str):
        self.final = out_dir
        self.work = out_dir.rstrip("/\\") + ".partial"

    def __enter__(self):
        if os.path.exists(self.work):
            shutil.rmtree(self.work)
        os.makedirs(self.work)
        return self.work

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            if os.path.exists(self.final):
                shutil.rmtree(self.final)
            os.replace(self.work, self.final)
        return False


def _load_normalized_mesh(path: str):
    from .mesh import compute_vertex_normals, load_mesh, normalize_to_unit_cube

    if not os.path.exists(path):
        raise ParseError(f"mesh not found: {path}")
    return compute_vertex_normals(normalize_to_unit_cube(load_mesh(path)))


def cmd_gbuffers(args) -> int:
    from . import png_io
    from .camera import camera_to_dict, make_view_set
    from .render import rasterize_gbuffer

    mesh = _load_normalized_mesh(args.mesh)
    cameras = make_view_set(args.views, args.size)
    with _Stage(args.out) as work:
        files = []
        for i, cam in enumerate(cameras):
            gb = rasterize_gbuffer(mesh, cam)
            files.extend(png_io.save_gbuffer(work, i, gb))
        _write_json(
            os.path.join(work, "manifest.json"),
            {
                "command": "gbuffers",
                "mesh": os.path.abspath(args.mesh),
                "views": args.views,
                "image_size": args.size,
                "cameras": [camera_to_dict(c) for c in cameras],
                "files": sorted(files),
            },
        )
    print(f"wrote {args.views * 4} g-buffer maps to {args.out}")
    return EXIT_OK


def cmd_dataset(args) -> int:
    from .dataset import make_synthetic_dataset, save_dataset

    data = make_synthetic_dataset(
        n_assets=args.assets, seed=args.seed, views=args.views, image_size=args.size,
        texture_res=args.texture_res,
    )
    with _Stage(args.out) as work:
        save_dataset(data, work)
    print(f"wrote {args.assets} assets to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .dataset import load_dataset, make_synthetic_dataset
    from .denoiser import DenoiserConfig, load_model, save_model
    from .training import TrainConfig, save_history_csv, train_phase1, train_phase2_zoomin

    if args.phase == 2 and not args.init:
        print("error: --phase 2 requires --init (a phase-1 checkpoint)", file=sys.stderr)
        return EXIT_INPUT
    if args.data:
        data = load_dataset(args.data)
    else:
        data = make_synthetic_dataset(
            n_assets=args.assets, seed=args.data_seed, views=args.views, image_size=args.size
        )
    model_cfg = DenoiserConfig(
        width=args.width,
        depth=args.depth,
        views=data.views,
        image_size=data.image_size,
        patch_size=args.patch,
    )
    cfg = TrainConfig(
        phase=args.phase,
        views=data.views,
        image_size=data.image_size,
        zoom_range=(args.zoom_min, args.zoom_max),
        batch_size=args.batch,
        learning_rate=args.lr,
        steps=args.steps,
        seed=args.seed,
        w_flow=args.w_flow,
        w_illum=args.w_illum,
        model=model_cfg,
    )
    if args.phase == 1:
        result = train_phase1(cfg, data)
    else:
        init = load_model(args.init)
        cfg.model = init.config
        result = train_phase2_zoomin(cfg, data, init)
    out_ckpt = args.out
    tmp = out_ckpt + ".partial"
    save_model(tmp, result.model)
    os.replace(tmp, out_ckpt)
    save_history_csv(result.history, os.path.splitext(out_ckpt)[0] + "_loss.csv")
    first, last = result.history[0]["total"], result.history[-1]["total"]
    print(f"trained phase {args.phase}: loss {first:.4f} -> {last:.4f}; checkpoint {out_ckpt}")
    return EXIT_OK


def _center_crop_to_patch(image: np.ndarray, patch: int) -> np.ndarray:
    h, w = image.shape[:2]
    ch, cw = (h // patch) * patch, (w // patch) * patch
    if ch == 0 or cw == 0:
        raise ParseError(f"reference image {h}x{w} smaller than one {patch}px patch")
    r0, c0 = (h - ch) // 2, (w - cw) // 2
    return image[r0 : r0 + ch, c0 : c0 + cw]


def cmd_generate(args) -> int:
    from . import png_io
    from .camera import camera_to_dict, make_view_set
    from .denoiser import build_conditioning, load_model
    from .render import rasterize_gbuffer

    model = load_model(args.checkpoint)
    mesh = _load_normalized_mesh(args.mesh)
    if not os.path.exists(args.ref):
        raise ParseError(f"reference image not found: {args.ref}")
    ref = _center_crop_to_patch(png_io.load_rgb(args.ref), model.config.patch_size)
    cameras = make_view_set(args.views, args.size)
    gbuffers = [rasterize_gbuffer(mesh, cam) for cam in cameras]
    cond = build_conditioning(gbuffers, cameras, ref, model.config.patch_size, dtype=model.model_dtype)
    views = model.sample(cond, steps=args.steps, seed=args.seed, cfg_scale=args.cfg_scale, solver=args.solver)
    with _Stage(args.out) as work:
        files = []
        for i in range(views.num_views):
            png_io.save_rgb(os.path.join(work, f"{i}_albedo.png"), views.albedo[i])
            png_io.save_rgb(os.path.join(work, f"{i}_mr.png"), views.mr[i])
            files += [f"{i}_albedo.png", f"{i}_mr.png"]
            files += png_io.save_gbuffer(work, i, gbuffers[i])
        _write_json(
            os.path.join(work, "manifest.json"),
            {
                "command": "generate",
                "checkpoint": os.path.abspath(args.checkpoint),
                "mesh": os.path.abspath(args.mesh),
                "reference": os.path.abspath(args.ref),
                "views": args.views,
                "image_size": args.size,
                "steps": args.steps,
                "seed": args.seed,
                "cfg_scale": args.cfg_scale,
                "solver": args.solver,
                "cameras": [camera_to_dict(c) for c in cameras],
                "files": sorted(files),
            },
        )
        if args.preview:
            _contact_sheet(os.path.join(work, "preview.png"), views.albedo + views.mr)
    print(f"generated {views.num_views} views in {args.out}")
    return EXIT_OK


def cmd_bake(args) -> int:
    from . import png_io
    from .baking import bake, dilate_seams
    from .camera import camera_from_dict
    from .gltf_io import export_gltf
    from .materials import MaterialSet, MaterialViews

    manifest_path = os.path.join(args.views_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ParseError(f"no manifest.json in {args.views_dir}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    cameras = [camera_from_dict(c) for c in manifest["cameras"]]
    mesh = _load_normalized_mesh(args.mesh)
    albedo, mr, gbuffers = [], [], []
    for i in range(len(cameras)):
        albedo.append(png_io.load_rgb(os.path.join(args.views_dir, f"{i}_albedo.png")))
        mr.append(png_io.load_rgb(os.path.join(args.views_dir, f"{i}_mr.png")))
        gbuffers.append(png_io.load_gbuffer(args.views_dir, i))
    views = MaterialViews(albedo=albedo, mr=mr, gbuffers=gbuffers, cameras=cameras)
    baked = bake(
        mesh, views, cameras, args.resolution,
        cos_power=args.cos_power, depth_epsilon=args.depth_epsilon,
    )
    dilated = MaterialSet(
        albedo_texture=dilate_seams(baked.albedo_texture, baked.texel_mask, args.dilate),
        mr_texture=dilate_seams(baked.mr_texture, baked.texel_mask, args.dilate),
        texel_mask=baked.texel_mask,
    )
    with _Stage(args.out) as work:
        png_io.save_rgb(os.path.join(work, "albedo.png"), dilated.albedo_texture)
        png_io.save_rgb(os.path.join(work, "mr.png"), dilated.mr_texture)
        png_io.save_mask(os.path.join(work, "mask.png"), baked.texel_mask)
        export_gltf(mesh, dilated, os.path.join(work, "asset.gltf"))
        _write_json(
            os.path.join(work, "manifest.json"),
            {
                "command": "bake",
                "mesh": os.path.abspath(args.mesh),
                "views_dir": os.path.abspath(args.views_dir),
                "resolution": args.resolution,
                "cos_power": args.cos_power,
                "depth_epsilon": args.depth_epsilon,
                "dilate_iterations": args.dilate,
                "covered_texels": int(baked.texel_mask.sum()),
            },
        )
        if args.preview:
            _contact_sheet(os.path.join(work, "preview.png"), [dilated.albedo_texture, dilated.mr_texture])
    print(f"baked {args.resolution}x{args.resolution} textures to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import png_io
    from .camera import camera_from_dict, make_orbit_camera
    from .brdf import Light
    from .materials import MaterialSet, MaterialViews
    from .metrics import MetricReport, cross_view_consistency, heldout_rerender, psnr

    manifest_path = os.path.join(args.views_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ParseError(f"no manifest.json in {args.views_dir}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    cameras = [camera_from_dict(c) for c in manifest["cameras"]]
    albedo, mr, gbuffers = [], [], []
    for i in range(len(cameras)):
        albedo.append(png_io.load_rgb(os.path.join(args.views_dir, f"{i}_albedo.png")))
        mr.append(png_io.load_rgb(os.path.join(args.views_dir, f"{i}_mr.png")))
        gbuffers.append(png_io.load_gbuffer(args.views_dir, i))
    views = MaterialViews(albedo=albedo, mr=mr, gbuffers=gbuffers, cameras=cameras)

    report = MetricReport()
    try:
        report.cross_view_consistency_rmse = cross_view_consistency(views, seed=args.seed)
    except NoCorrespondences:
        report.notes += "; no cross-view correspondences (disjoint view coverage)"

    if args.gt_views:
        vals = []
        for i in range(len(cameras)):
            gt = png_io.load_rgb(os.path.join(args.gt_views, f"{i}_albedo.png"))
            vals.append(psnr(albedo[i], gt, mask=gbuffers[i].mask))
        report.psnr_db = float(np.mean([v for v in vals if np.isfinite(v)])) if vals else None

    if args.baked_dir and args.gt_textures and args.mesh:
        mesh = _load_normalized_mesh(args.mesh)
        baked = MaterialSet(
            albedo_texture=png_io.load_rgb(os.path.join(args.baked_dir, "albedo.png")),
            mr_texture=png_io.load_rgb(os.path.join(args.baked_dir, "mr.png")),
            texel_mask=png_io.load_mask(os.path.join(args.baked_dir, "mask.png")),
        )
        gt = MaterialSet(
            albedo_texture=png_io.load_rgb(os.path.join(args.gt_textures, "gt_albedo.png")),
            mr_texture=png_io.load_rgb(os.path.join(args.gt_textures, "gt_mr.png")),
            texel_mask=baked.texel_mask,
        )
        heldout = [
            make_orbit_camera(az, el, manifest.get("image_size", 256))
            for az, el in ((45.0, 35.0), (225.0, -30.0))
        ]
        light = Light(direction=np.array([0.3, 0.4, 0.86]), radiance=np.full(3, 2.4), ambient=np.full(3, 0.25))
        report.heldout_rerender_psnr_db = heldout_rerender(mesh, baked, gt, heldout, light)

    with _Stage(args.out) as work:
        with open(os.path.join(work, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        with open(os.path.join(work, "report.md"), "w", encoding="utf-8") as fh:
            fh.write(report.to_markdown())
    print(report.to_markdown())
    return EXIT_OK


def cmd_pipeline(args) -> int:
    from types import SimpleNamespace

    stages_root = args.out
    os.makedirs(stages_root, exist_ok=True)
    gdir = os.path.join(stages_root, "views")
    bdir = os.path.join(stages_root, "baked")
    edir = os.path.join(stages_root, "eval")

    rc = cmd_generate(
        SimpleNamespace(
            checkpoint=args.checkpoint, mesh=args.mesh, ref=args.ref, views=args.views,
            size=args.size, steps=args.steps, seed=args.seed, cfg_scale=args.cfg_scale,
            solver=args.solver, out=gdir, preview=args.preview,
        )
    )
    if rc != EXIT_OK:
        return rc
    rc = cmd_bake(
        SimpleNamespace(
            mesh=args.mesh, views_dir=gdir, resolution=args.bake_resolution,
            cos_power=args.cos_power, depth_epsilon=None, dilate=args.dilate,
            out=bdir, preview=args.preview,
        )
    )
    if rc != EXIT_OK:
        return rc
    rc = cmd_eval(
        SimpleNamespace(
            views_dir=gdir, gt_views=None, baked_dir=bdir, gt_textures=None,
            mesh=args.mesh, seed=args.seed, out=edir,
        )
    )
    if rc != EXIT_OK:
        return rc
    for name in ("asset.gltf", "asset.bin", "asset_albedo.png", "asset_mr.png"):
        src = os.path.join(bdir, name)
        if os.path.exists(src):
            shutil.copyfile(src, os.path.join(stages_root, name))
    shutil.copyfile(os.path.join(edir, "report.json"), os.path.join(stages_root, "report.json"))
    print(f"pipeline complete: {os.path.join(stages_root, 'asset.gltf')}")
    return EXIT_OK


def _contact_sheet(path: str, images: list) -> None:
    from . import png_io

    if not images:
        return
    h = max(img.shape[0] for img in images)
    w = max(img.shape[1] for img in images)
    cols = min(len(images), 6)
    rows = (len(images) + cols - 1) // cols
    sheet = np.zeros((rows * h, cols * w, 3), dtype=np.float64)
    for idx, img in enumerate(images):
        r, c = divmod(idx, cols)
        sheet[r * h : r * h + img.shape[0], c * w : c * w + img.shape[1]] = img[..., :3]
    png_io.save_rgb(path, sheet)


_SUBCOMMAND_DEFAULTS: dict[str, dict] = {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML config file; flags override it")

    p = sub.add_parser("gbuffers", help="render per-view normal/CCM/depth/mask maps")
    add_common(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--views", type=int, default=6)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gbuffers)

    p = sub.add_parser("dataset", help="generate the synthetic training corpus")
    add_common(p)
    p.add_argument("--assets", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--views", type=int, default=6)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--texture-res", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train the material denoiser")
    add_common(p)
    p.add_argument("--data", help="dataset cache directory (from `dataset`)")
    p.add_argument("--assets", type=int, default=2, help="in-memory dataset size if --data absent")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--views", type=int, default=6)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--phase", type=int, choices=(1, 2), default=1)
    p.add_argument("--init", help="phase-1 checkpoint (required for --phase 2)")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--w-flow", type=float, default=1.0)
    p.add_argument("--w-illum", type=float, default=0.0)
    p.add_argument("--zoom-min", type=float, default=0.4)
    p.add_argument("--zoom-max", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample per-view material images")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--ref", required=True, help="reference image (pre-masked)")
    p.add_argument("--views", type=int, default=6)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cfg-scale", type=float, default=1.0)
    p.add_argument("--solver", choices=("euler", "heun"), default="euler")
    p.add_argument("--preview", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bake", help="fuse views into UV textures and export glTF")
    add_common(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--views-dir", required=True)
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--cos-power", type=float, default=4.0)
    p.add_argument("--depth-epsilon", type=float, default=None)
    p.add_argument("--dilate", type=int, default=4)
    p.add_argument("--preview", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bake)

    p = sub.add_parser("eval", help="metric report for generated views / baked textures")
    add_common(p)
    p.add_argument("--views-dir", required=True)
    p.add_argument("--gt-views", help="directory with ground-truth {i}_albedo.png")
    p.add_argument("--baked-dir", help="baked texture directory")
    p.add_argument("--gt-textures", help="directory with gt_albedo.png / gt_mr.png")
    p.add_argument("--mesh")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="gbuffers -> generate -> bake -> eval")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--views", type=int, default=6)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cfg-scale", type=float, default=1.0)
    p.add_argument("--solver", choices=("euler", "heun"), default="euler")
    p.add_argument("--bake-resolution", type=int, default=256)
    p.add_argument("--cos-power", type=float, default=4.0)
    p.add_argument("--dilate", type=int, default=4)
    p.add_argument("--preview", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    for name, sp in sub.choices.items():
        _SUBCOMMAND_DEFAULTS[name] = {
            action.dest: action.default for action in sp._actions if action.dest != "help"
        }
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    defaults = _SUBCOMMAND_DEFAULTS.get(args.command, {})
    args = _merge_config(args, defaults)
    try:
        return args.func(args)
    except DivergedLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (
        ParseError,
        MissingUVs,
        EmptyMesh,
        UnsupportedViewCount,
        IoError,
        FileNotFoundError,
        ValueError,  # config validation (sizes, zoom ranges, phases)
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MatforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
