"""Image sampling helpers shared by rendering, baking, and metrics."""

from __future__ import annotations

import numpy as np


def bilinear_sample(image: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Sample (H,W,C) or (H,W) image at uv in [0,1]^2, clamp-to-edge.

    Texel (i,j) center sits at uv ((j+0.5)/W, (i+0.5)/H); uv v grows with
    image row (top-left origin).
    """
    squeeze = image.ndim == 2
    if squeeze:
        image = image[..., None]
    h, w = image.shape[:2]
    uv = np.asarray(uv, dtype=np.float64)
    x = uv[..., 0] * w - 0.5
    y = uv[..., 1] * h - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    top = image[y0c, x0c] * (1 - fx) + image[y0c, x1c] * fx
    bot = image[y1c, x0c] * (1 - fx) + image[y1c, x1c] * fx
    out = top * (1 - fy) + bot * fy
    return out[..., 0] if squeeze else out


def nearest_sample(image: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Nearest-texel sampling with the same conventions as bilinear_sample."""
    squeeze = image.ndim == 2
    if squeeze:
        image = image[..., None]
    h, w = image.shape[:2]
    uv = np.asarray(uv, dtype=np.float64)
    j = np.clip(np.floor(uv[..., 0] * w).astype(np.int64), 0, w - 1)
    i = np.clip(np.floor(uv[..., 1] * h).astype(np.int64), 0, h - 1)
    out = image[i, j]
    return out[..., 0] if squeeze else out


def sample_image_at_pixels(image: np.ndarray, px: np.ndarray, py: np.ndarray, mode: str = "bilinear") -> np.ndarray:
    """Sample at continuous pixel coordinates (x right, y down)."""
    h, w = image.shape[:2]
    # px,py are continuous pixel coords where (0.5,0.5) is the first center
    uv = np.stack([px / w, py / h], axis=-1)
    if mode == "bilinear":
        return bilinear_sample(image, uv)
    if mode == "nearest":
        return nearest_sample(image, uv)
    raise ValueError(f"unknown sampling mode: {mode}")
