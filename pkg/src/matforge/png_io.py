"""PNG serialization for views, g-buffers, and textures.

Color maps are 8-bit; depth uses 16-bit grayscale over a fixed [0,2] world
range so baking visibility survives the disk round trip. File naming
follows `{view_index}_{normal|ccm|depth|mask|render|albedo|mr}.png`.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .render import GBuffer

DEPTH_ENCODE_RANGE = 2.0  # camera depths of the normalized scene sit in [0,2]


def save_rgb(path: str, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def load_rgb(path: str) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def save_gray(path: str, image: np.ndarray) -> None:
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def load_gray(path: str) -> np.ndarray:
    img = Image.open(path).convert("L")
    return np.asarray(img, dtype=np.float32) / 255.0


def save_mask(path: str, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def load_mask(path: str) -> np.ndarray:
    img = Image.open(path).convert("L")
    return np.asarray(img) >= 128


def save_depth16(path: str, depth: np.ndarray) -> None:
    clipped = np.clip(np.nan_to_num(depth, posinf=DEPTH_ENCODE_RANGE), 0.0, DEPTH_ENCODE_RANGE)
    data = np.round(clipped / DEPTH_ENCODE_RANGE * 65535.0).astype(np.uint16)
    Image.fromarray(data).save(path)  # uint16 -> 16-bit grayscale PNG


def load_depth16(path: str) -> np.ndarray:
    img = Image.open(path)
    data = np.asarray(img, dtype=np.float64)
    return data / 65535.0 * DEPTH_ENCODE_RANGE


def save_gbuffer(directory: str, view_index: int, gbuffer: GBuffer) -> list[str]:
    names = []
    base = os.path.join(directory, f"{view_index}")
    save_rgb(base + "_normal.png", gbuffer.normal_map)
    save_rgb(base + "_ccm.png", gbuffer.ccm)
    save_depth16(base + "_depth.png", gbuffer.depth)
    save_mask(base + "_mask.png", gbuffer.mask)
    for suffix in ("normal", "ccm", "depth", "mask"):
        names.append(f"{view_index}_{suffix}.png")
    return names


def load_gbuffer(directory: str, view_index: int) -> GBuffer:
    base = os.path.join(directory, f"{view_index}")
    normal = load_rgb(base + "_normal.png")
    ccm = load_rgb(base + "_ccm.png")
    depth = load_depth16(base + "_depth.png")
    mask = load_mask(base + "_mask.png")
    depth = np.where(mask, depth, np.inf)
    return GBuffer(normal_map=normal, ccm=ccm, depth=depth, mask=mask)
