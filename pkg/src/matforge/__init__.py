"""matforge: geometry-conditioned multi-view PBR material synthesis.

Pipeline: rasterize normal/CCM conditions from a UV-unwrapped mesh,
generate per-view albedo and metallic-roughness images with a
reference-guided multi-view denoiser (one attention mask shared across
material channels), bake the views into UV textures, and export glTF.
"""

__version__ = "0.1.0"

from .baking import bake, dilate_seams, rasterize_uv_positions
from .brdf import Light, MaterialSample, shade_brdf
from .camera import Camera, make_orbit_camera, make_view_set
from .denoiser import (
    Conditioning,
    DenoiserConfig,
    DenoiserState,
    InstrumentationHooks,
    MaterialDenoiser,
    build_conditioning,
    flow_interpolate,
    sample_ode,
    shared_mask_reference_attention,
)
from .dataset import Dataset, load_dataset, make_synthetic_dataset, save_dataset
from .gltf_io import export_gltf
from .materials import MaterialSet, MaterialViews
from .mesh import (
    AtlasReport,
    Mesh,
    compute_vertex_normals,
    load_mesh,
    make_mesh,
    normalize_to_unit_cube,
    validate_uv_atlas,
)
from .metrics import MetricReport, cross_view_consistency, heldout_rerender, psnr
from .render import GBuffer, rasterize_gbuffer, render_views, sample_material_views
from .training import (
    TrainConfig,
    TrainResult,
    illumination_invariance_loss,
    train_phase1,
    train_phase2_zoomin,
)

__all__ = [
    "AtlasReport",
    "Camera",
    "Conditioning",
    "Dataset",
    "DenoiserConfig",
    "DenoiserState",
    "GBuffer",
    "InstrumentationHooks",
    "Light",
    "MaterialDenoiser",
    "MaterialSample",
    "MaterialSet",
    "MaterialViews",
    "Mesh",
    "MetricReport",
    "TrainConfig",
    "TrainResult",
    "bake",
    "build_conditioning",
    "compute_vertex_normals",
    "cross_view_consistency",
    "dilate_seams",
    "export_gltf",
    "flow_interpolate",
    "heldout_rerender",
    "illumination_invariance_loss",
    "load_dataset",
    "load_mesh",
    "make_mesh",
    "make_orbit_camera",
    "make_synthetic_dataset",
    "make_view_set",
    "normalize_to_unit_cube",
    "psnr",
    "rasterize_gbuffer",
    "rasterize_uv_positions",
    "render_views",
    "sample_material_views",
    "sample_ode",
    "save_dataset",
    "shade_brdf",
    "shared_mask_reference_attention",
    "train_phase1",
    "train_phase2_zoomin",
    "validate_uv_atlas",
]
