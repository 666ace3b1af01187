"""Wavefront OBJ reader.

Supports v/vt/vn records and polygonal faces (fan-triangulated). Corners
are split by their full v/vt/vn triple; UVs are required because the
pipeline never unwraps.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyMesh, MissingUVs, ParseError
from .mesh import Mesh, make_mesh

UV_SLACK = 1e-3  # tolerate float dust outside [0,1] before rejecting


def _resolve_index(raw: int, count: int, what: str, line_no: int) -> int:
    if raw == 0:
        raise ParseError(f"line {line_no}: zero {what} index")
    idx = raw - 1 if raw > 0 else count + raw
    if not 0 <= idx < count:
        raise ParseError(f"line {line_no}: {what} index {raw} out of range (have {count})")
    return idx


def load_obj(path: str) -> Mesh:
    v: list[list[float]] = []
    vt: list[list[float]] = []
    vn: list[list[float]] = []
    face_corners: list[list[tuple[int, int | None, int | None]]] = []

    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    v.append([float(x) for x in parts[1:4]])
                elif tag == "vt":
                    vt.append([float(x) for x in parts[1:3]])
                elif tag == "vn":
                    vn.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    corners = []
                    for token in parts[1:]:
                        fields = token.split("/")
                        vi = _resolve_index(int(fields[0]), len(v), "vertex", line_no)
                        ti = ni = None
                        if len(fields) > 1 and fields[1]:
                            ti = _resolve_index(int(fields[1]), len(vt), "texcoord", line_no)
                        if len(fields) > 2 and fields[2]:
                            ni = _resolve_index(int(fields[2]), len(vn), "normal", line_no)
                        corners.append((vi, ti, ni))
                    if len(corners) < 3:
                        raise ParseError(f"line {line_no}: face with fewer than 3 corners")
                    face_corners.append(corners)
            except ParseError:
                raise
            except (ValueError, IndexError) as exc:
                raise ParseError(f"line {line_no}: {exc}") from exc

    if not v or not face_corners:
        raise EmptyMesh(f"{path}: no geometry")
    if any(ti is None for face in face_corners for (_, ti, _) in face):
        raise MissingUVs(f"{path}: faces without vt records; this pipeline does not unwrap")

    # split vertices by full corner triple, fan-triangulate polygons
    key_to_index: dict[tuple[int, int | None, int | None], int] = {}
    positions: list[list[float]] = []
    normals: list[list[float]] = []
    have_all_normals = all(ni is not None for face in face_corners for (_, _, ni) in face)

    def corner_index(key):
        if key not in key_to_index:
            key_to_index[key] = len(positions)
            positions.append(v[key[0]])
            if have_all_normals:
                normals.append(vn[key[2]])
        return key_to_index[key]

    triangles: list[list[int]] = []
    corner_uvs: list[list[list[float]]] = []
    for corners in face_corners:
        for k in range(1, len(corners) - 1):
            tri_keys = (corners[0], corners[k], corners[k + 1])
            triangles.append([corner_index(key) for key in tri_keys])
            # flip v: OBJ puts v=0 at the image bottom, we use top-left origin
            corner_uvs.append([[vt[key[1]][0], 1.0 - vt[key[1]][1]] for key in tri_keys])

    uvs = np.asarray(corner_uvs, dtype=np.float64)
    if uvs.min() < -UV_SLACK or uvs.max() > 1.0 + UV_SLACK:
        raise ParseError(f"{path}: UVs outside [0,1]; tiling atlases are not supported")
    uvs = np.clip(uvs, 0.0, 1.0)

    vertex_normals = None
    if have_all_normals:
        arr = np.asarray(normals, dtype=np.float64)
        length = np.linalg.norm(arr, axis=1, keepdims=True)
        if np.any(length < 1e-12):
            vertex_normals = None  # broken normals: recompute
        else:
            vertex_normals = arr / length
    return make_mesh(np.asarray(positions), np.asarray(triangles), vertex_normals=vertex_normals, uvs=uvs)
