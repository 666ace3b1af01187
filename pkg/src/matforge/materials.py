"""Material containers moving between generation, baking, and export."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MaterialSet:
    """UV-space textures: albedo RGB plus packed metallic-roughness.

    mr_texture packs G=roughness, B=metallic (R unused), matching the glTF
    metallicRoughness layout. texel_mask marks texels that received at
    least one view contribution before seam dilation.
    """

    albedo_texture: np.ndarray  # (R,R,3) float in [0,1]
    mr_texture: np.ndarray  # (R,R,3) float in [0,1]
    texel_mask: np.ndarray  # (R,R) bool

    @property
    def resolution(self) -> int:
        return self.albedo_texture.shape[0]

    def roughness(self) -> np.ndarray:
        return self.mr_texture[..., 1]

    def metallic(self) -> np.ndarray:
        return self.mr_texture[..., 2]


@dataclass
class MaterialViews:
    """Per-view generated albedo and metallic-roughness images.

    gbuffers carries the matching geometry buffers (one per view); views
    and buffers share image dimensions.
    """

    albedo: list  # V arrays (H,W,3) in [0,1]
    mr: list  # V arrays (H,W,3), G=roughness B=metallic
    gbuffers: list = field(default_factory=list)
    cameras: list = field(default_factory=list)

    @property
    def num_views(self) -> int:
        return len(self.albedo)
