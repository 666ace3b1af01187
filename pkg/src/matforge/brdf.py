"""Single-bounce Cook-Torrance shading in the metallic-roughness model.

GGX normal distribution, Smith visibility, Schlick Fresnel with the glTF
dielectric F0 of 0.04, Lambertian diffuse scaled by (1-F)(1-metallic), plus
an ambient term. No shadows or bounce light: direct + ambient is all the
illumination-variation the training data needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIELECTRIC_F0 = 0.04
MIN_ALPHA = 1e-4  # keeps the GGX lobe finite at roughness -> 0


@dataclass(frozen=True)
class MaterialSample:
    """Pointwise material; fields broadcast, so images work directly."""

    albedo: np.ndarray  # (...,3) in [0,1]
    metallic: np.ndarray  # (...) in [0,1]
    roughness: np.ndarray  # (...) in [0,1]


@dataclass(frozen=True)
class Light:
    """Directional light. `direction` points FROM the surface TOWARD the light."""

    direction: np.ndarray  # unit (3,)
    radiance: np.ndarray  # (3,) >= 0
    ambient: np.ndarray  # (3,) >= 0

    def __post_init__(self):
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=np.float64))
        object.__setattr__(self, "radiance", np.asarray(self.radiance, dtype=np.float64))
        object.__setattr__(self, "ambient", np.asarray(self.ambient, dtype=np.float64))
        if np.any(self.radiance < 0) or np.any(self.ambient < 0):
            raise ValueError("radiance and ambient must be non-negative")


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def shade_brdf(sample: MaterialSample, normal: np.ndarray, view: np.ndarray, light: Light) -> np.ndarray:
    """Outgoing RGB radiance, clamped to >= 0.

    `normal` and `view` are unit vectors (view points from the surface to
    the camera); all arguments broadcast over leading dimensions.
    """
    albedo = np.asarray(sample.albedo, dtype=np.float64)
    metallic = np.asarray(sample.metallic, dtype=np.float64)[..., None]
    roughness = np.asarray(sample.roughness, dtype=np.float64)[..., None]
    n = np.asarray(normal, dtype=np.float64)
    v = np.asarray(view, dtype=np.float64)
    l = np.broadcast_to(light.direction, n.shape)

    ndl = np.clip(_dot(n, l), 0.0, None)
    ndv = np.clip(_dot(n, v), 1e-9, None)
    h = l + v
    h = h / np.maximum(np.linalg.norm(h, axis=-1, keepdims=True), 1e-12)
    ndh = np.clip(_dot(n, h), 0.0, None)
    vdh = np.clip(_dot(v, h), 0.0, None)

    alpha = np.maximum(roughness * roughness, MIN_ALPHA)
    a2 = alpha * alpha
    denom = ndh * ndh * (a2 - 1.0) + 1.0
    dist = a2 / (np.pi * denom * denom)

    def g1(ndx):
        return 2.0 * ndx / (ndx + np.sqrt(a2 + (1.0 - a2) * ndx * ndx))

    geom = g1(np.maximum(ndl, 1e-9)) * g1(ndv)

    f0 = DIELECTRIC_F0 * (1.0 - metallic) + albedo * metallic
    fresnel = f0 + (1.0 - f0) * (1.0 - vdh) ** 5

    specular = dist * geom * fresnel / (4.0 * np.maximum(ndl, 1e-9) * ndv)
    kd = (1.0 - fresnel) * (1.0 - metallic)
    direct = (kd * albedo / np.pi + specular) * ndl * light.radiance
    out = direct + light.ambient * albedo
    return np.clip(out, 0.0, None)
