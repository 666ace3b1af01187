"""Deterministic triangle rasterization on an integer subpixel grid.

Screen and UV rasterization share this core. Coordinates are continuous
pixel units (x right, y down, pixel (i,j) center at (j+0.5, i+0.5)) snapped
to a 1/256 subpixel grid; coverage uses exact int64 edge functions with the
top-left fill rule, so adjacent triangles never double-cover a pixel and
results do not depend on float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

SUBPIXEL = 256  # snap factor; int64 edge products stay far below overflow


def _snap(pts: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(pts, dtype=np.float64) * SUBPIXEL).astype(np.int64)


def _is_top_left(ax: int, ay: int, bx: int, by: int) -> bool:
    # positive-orient winding in y-down coords: top edges run +x, left edges run -y
    ey = by - ay
    ex = bx - ax
    return (ey == 0 and ex > 0) or ey < 0


def _iter_covered(
    pts2d: np.ndarray, height: int, width: int
) -> Iterator[tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (triangle_index, rows, cols, corner_weights) for covered pixels.

    corner_weights is (N,3) float64, an exact partition of unity in the
    ORIGINAL corner order of the triangle.
    """
    snapped = _snap(pts2d)
    half = SUBPIXEL // 2
    for t in range(len(snapped)):
        v = snapped[t]
        order = (0, 1, 2)
        area = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[1, 1] - v[0, 1]) * (
            v[2, 0] - v[0, 0]
        )
        if area == 0:
            continue  # degenerate after snapping: excluded from rasterization
        if area < 0:
            order = (0, 2, 1)
            area = -area
        a, b, c = v[order[0]], v[order[1]], v[order[2]]

        xs = np.array([a[0], b[0], c[0]])
        ys = np.array([a[1], b[1], c[1]])
        jmin = max(0, int(np.ceil((xs.min() - half) / SUBPIXEL)))
        jmax = min(width - 1, int(np.floor((xs.max() - half) / SUBPIXEL)))
        imin = max(0, int(np.ceil((ys.min() - half) / SUBPIXEL)))
        imax = min(height - 1, int(np.floor((ys.max() - half) / SUBPIXEL)))
        if jmin > jmax or imin > imax:
            continue

        px = np.arange(jmin, jmax + 1, dtype=np.int64) * SUBPIXEL + half
        py = np.arange(imin, imax + 1, dtype=np.int64) * SUBPIXEL + half
        px = px[None, :]
        py = py[:, None]

        def edge(p, q):
            w = (q[0] - p[0]) * (py - p[1]) - (q[1] - p[1]) * (px - p[0])
            bias = 0 if _is_top_left(p[0], p[1], q[0], q[1]) else -1
            return w, bias

        w0, b0 = edge(b, c)
        w1, b1 = edge(c, a)
        w2, b2 = edge(a, b)
        inside = ((w0 + b0) >= 0) & ((w1 + b1) >= 0) & ((w2 + b2) >= 0)
        if not inside.any():
            continue
        rows, cols = np.nonzero(inside)
        lam = np.stack(
            [w0[rows, cols], w1[rows, cols], w2[rows, cols]], axis=1
        ).astype(np.float64) / float(area)
        lam[:, 2] = 1.0 - lam[:, 0] - lam[:, 1]  # exact partition of unity
        # undo the orientation swap so weights line up with input corners
        weights = np.empty_like(lam)
        weights[:, order[0]] = lam[:, 0]
        weights[:, order[1]] = lam[:, 1]
        weights[:, order[2]] = lam[:, 2]
        yield t, rows + imin, cols + jmin, weights


@dataclass
class RasterResult:
    tri_id: np.ndarray  # (H,W) int32, -1 where empty
    depth: np.ndarray  # (H,W) float64, +inf where empty
    attrs: np.ndarray | None  # (H,W,A) float64, 0 where empty

    @property
    def mask(self) -> np.ndarray:
        return self.tri_id >= 0


def rasterize(
    pts2d: np.ndarray,
    depths: np.ndarray | None,
    attrs: np.ndarray | None,
    height: int,
    width: int,
) -> RasterResult:
    """Z-buffered fill of triangles given per-corner screen points.

    pts2d: (T,3,2) pixel coords, depths: (T,3) camera depth or None,
    attrs: (T,3,A) per-corner attributes or None. Without depths the first
    covering triangle in index order wins; with depths the strictly nearer
    fragment wins and exact ties keep the lower triangle index.
    """
    tri_id = np.full((height, width), -1, dtype=np.int32)
    depth = np.full((height, width), np.inf, dtype=np.float64)
    out = None
    if attrs is not None:
        attrs = np.asarray(attrs, dtype=np.float64)
        out = np.zeros((height, width, attrs.shape[2]), dtype=np.float64)

    for t, rows, cols, weights in _iter_covered(pts2d, height, width):
        if depths is None:
            free = tri_id[rows, cols] < 0
            if not free.any():
                continue
            rows, cols, weights = rows[free], cols[free], weights[free]
            tri_id[rows, cols] = t
            if out is not None:
                out[rows, cols] = weights @ attrs[t]
        else:
            d = weights @ np.asarray(depths[t], dtype=np.float64)
            nearer = d < depth[rows, cols]
            if not nearer.any():
                continue
            rows, cols = rows[nearer], cols[nearer]
            tri_id[rows, cols] = t
            depth[rows, cols] = d[nearer]
            if out is not None:
                out[rows, cols] = weights[nearer] @ attrs[t]
    return RasterResult(tri_id=tri_id, depth=depth, attrs=out)


def coverage_count(uvs: np.ndarray, resolution: int) -> np.ndarray:
    """Per-texel cover count of a UV atlas, (R,R) int32.

    UV (0,0) maps to the top-left texel corner and v grows downward,
    matching the glTF image convention used throughout the package.
    """
    pts = np.asarray(uvs, dtype=np.float64) * float(resolution)
    counts = np.zeros((resolution, resolution), dtype=np.int32)
    for _t, rows, cols, _w in _iter_covered(pts, resolution, resolution):
        counts[rows, cols] += 1
    return counts
