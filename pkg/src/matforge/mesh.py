"""Triangle mesh container, normalization, normals, and UV-atlas checks.

Meshes must arrive UV-unwrapped: the pipeline bakes into an existing atlas
and never unwraps. UVs are stored per corner (T,3,2) so charts can share
vertex positions across seams.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyMesh, MissingUVs, ParseError


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh in object units.

    positions: (V,3) float64, triangles: (T,3) int32 indices,
    vertex_normals: (V,3) unit vectors, uvs: (T,3,2) per-corner in [0,1]^2
    (None if the source had none), chart_ids: (T,) atlas chart label per
    triangle (None when uvs is None).
    """

    positions: np.ndarray
    triangles: np.ndarray
    vertex_normals: np.ndarray
    uvs: np.ndarray | None
    chart_ids: np.ndarray | None

    def __post_init__(self):
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ParseError(f"positions must be (V,3), got {self.positions.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ParseError(f"triangles must be (T,3), got {self.triangles.shape}")
        if self.triangles.size and self.triangles.max() >= len(self.positions):
            raise ParseError("triangle index exceeds vertex count")
        if self.triangles.size and self.triangles.min() < 0:
            raise ParseError("negative triangle index")

    @property
    def num_vertices(self) -> int:
        return len(self.positions)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def has_uvs(self) -> bool:
        return self.uvs is not None

    def corner_positions(self) -> np.ndarray:
        """Per-corner positions, shape (T,3,3)."""
        return self.positions[self.triangles]

    def face_normals(self) -> np.ndarray:
        """Unit face normals, (T,3); zero vector for degenerate triangles."""
        p = self.corner_positions()
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(length > 1e-20, n / length, 0.0)
        return unit

    def face_areas(self) -> np.ndarray:
        p = self.corner_positions()
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)


@dataclass(frozen=True)
class AtlasReport:
    coverage_fraction: float
    overlap_texel_count: int
    chart_count: int


def make_mesh(
    positions,
    triangles,
    vertex_normals=None,
    uvs=None,
    chart_ids=None,
) -> Mesh:
    """Build a Mesh from array-likes, computing normals/charts when absent."""
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int32)
    if uvs is not None:
        uvs = np.ascontiguousarray(uvs, dtype=np.float64)
        if uvs.shape != (len(triangles), 3, 2):
            raise ParseError(f"uvs must be (T,3,2), got {uvs.shape}")
    if chart_ids is None and uvs is not None:
        chart_ids = compute_chart_ids(triangles, uvs)
    elif chart_ids is not None:
        chart_ids = np.ascontiguousarray(chart_ids, dtype=np.int32)
    if vertex_normals is None:
        mesh = Mesh(positions, triangles, np.zeros_like(positions), uvs, chart_ids)
        return compute_vertex_normals(mesh)
    vertex_normals = np.ascontiguousarray(vertex_normals, dtype=np.float64)
    return Mesh(positions, triangles, vertex_normals, uvs, chart_ids)


def load_mesh(path: str | os.PathLike) -> Mesh:
    """Load an OBJ or glTF (.gltf/.glb) mesh.

    Missing normals are computed; missing UVs raise MissingUVs.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ParseError(f"mesh not found: {path}")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        from .obj_io import load_obj

        return load_obj(path)
    if ext in (".gltf", ".glb"):
        from .gltf_io import load_gltf

        return load_gltf(path)
    raise ParseError(f"unsupported mesh format: {ext!r}")


def normalize_to_unit_cube(mesh: Mesh) -> Mesh:
    """Center the AABB at the origin and scale the longest side to 1.

    Uniform scale, so CCM = position + 0.5 maps into [0,1]^3 afterwards.
    """
    if mesh.num_vertices == 0 or mesh.num_triangles == 0:
        raise EmptyMesh("cannot normalize an empty mesh")
    lo = mesh.positions.min(axis=0)
    hi = mesh.positions.max(axis=0)
    center = 0.5 * (lo + hi)
    longest = float((hi - lo).max())
    if longest <= 0.0:
        raise EmptyMesh("mesh has zero extent")
    positions = (mesh.positions - center) / longest
    return replace(mesh, positions=positions)


def compute_vertex_normals(mesh: Mesh) -> Mesh:
    """Area-weighted vertex normals; degenerate triangles contribute zero."""
    if mesh.num_vertices == 0:
        return mesh  # nothing to compute; downstream ops reject empty meshes
    p = mesh.positions[mesh.triangles]
    # cross product magnitude is 2*area, so plain accumulation is area weighting
    weighted = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    acc = np.zeros_like(mesh.positions)
    for corner in range(3):
        np.add.at(acc, mesh.triangles[:, corner], weighted)
    length = np.linalg.norm(acc, axis=1, keepdims=True)
    normals = np.where(length > 1e-20, acc / np.maximum(length, 1e-300), 0.0)
    # isolated or fully-degenerate vertices get an arbitrary unit normal
    flat = np.linalg.norm(normals, axis=1) < 0.5
    normals[flat] = (0.0, 0.0, 1.0)
    return replace(mesh, vertex_normals=normals)


def compute_chart_ids(triangles: np.ndarray, uvs: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Label UV charts: connected components over edges whose corner UVs agree.

    Two triangles sharing a mesh edge belong to one chart iff both shared
    corners carry matching UVs on both sides (within tol).
    """
    n = len(triangles)
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    edge_map: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for t in range(n):
        tri = triangles[t]
        for c in range(3):
            a, b = int(tri[c]), int(tri[(c + 1) % 3])
            key = (min(a, b), max(a, b))
            edge_map.setdefault(key, []).append((t, c, (c + 1) % 3))
    for (va, _vb), users in edge_map.items():
        if len(users) < 2:
            continue
        for i in range(len(users)):
            for j in range(i + 1, len(users)):
                ti, ci0, ci1 = users[i]
                tj, cj0, cj1 = users[j]
                # orient corner UVs by vertex id so winding does not matter
                if int(triangles[ti][ci0]) == va:
                    uvi = (uvs[ti, ci0], uvs[ti, ci1])
                else:
                    uvi = (uvs[ti, ci1], uvs[ti, ci0])
                if int(triangles[tj][cj0]) == va:
                    uvj = (uvs[tj, cj0], uvs[tj, cj1])
                else:
                    uvj = (uvs[tj, cj1], uvs[tj, cj0])
                if (
                    np.abs(uvi[0] - uvj[0]).max() <= tol
                    and np.abs(uvi[1] - uvj[1]).max() <= tol
                ):
                    union(ti, tj)
    roots = np.array([find(t) for t in range(n)])
    _, ids = np.unique(roots, return_inverse=True)
    return ids.astype(np.int32)


def validate_uv_atlas(mesh: Mesh, resolution: int) -> AtlasReport:
    """Rasterize the atlas at `resolution` texels per side and report usage.

    Overlap counting relies on the top-left fill rule, so triangles that
    merely share a chart-interior edge do not double-cover seam texels.
    """
    if not mesh.has_uvs():
        raise MissingUVs("mesh has no UVs")
    from .raster import coverage_count

    counts = coverage_count(mesh.uvs, resolution)
    covered = int((counts > 0).sum())
    overlap = int((counts > 1).sum())
    charts = int(mesh.chart_ids.max()) + 1 if mesh.chart_ids is not None and len(mesh.chart_ids) else 0
    return AtlasReport(
        coverage_fraction=covered / float(resolution * resolution),
        overlap_texel_count=overlap,
        chart_count=charts,
    )
