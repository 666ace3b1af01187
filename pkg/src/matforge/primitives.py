"""Procedural UV-unwrapped primitives for synthetic data and test oracles.

Every primitive ships a valid non-overlapping atlas: charts are laid out
on a fixed grid with margins, and wrap seams are handled with per-corner
UVs so positions stay welded (smooth normals) while charts stay clean.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh, make_mesh


def make_quad() -> Mesh:
    """Unit quad in the z=0 plane facing +Z, single full-coverage chart."""
    positions = np.array(
        [
            [-0.5, -0.5, 0.0],
            [0.5, -0.5, 0.0],
            [0.5, 0.5, 0.0],
            [-0.5, 0.5, 0.0],
        ]
    )
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    # u follows +x, v follows -y so the texture reads upright from +Z
    corner_uv = {0: (0.0, 1.0), 1: (1.0, 1.0), 2: (1.0, 0.0), 3: (0.0, 0.0)}
    uvs = np.array([[corner_uv[i] for i in tri] for tri in triangles])
    return make_mesh(positions, triangles, uvs=uvs, chart_ids=[0, 0])


def make_cube() -> Mesh:
    """Axis-aligned unit cube, six charts on a 3x2 grid (one per face)."""
    faces = [
        # (normal axis, sign, tangent axis u, tangent axis v)
        (0, +1, 1, 2),
        (0, -1, 1, 2),
        (1, +1, 2, 0),
        (1, -1, 2, 0),
        (2, +1, 0, 1),
        (2, -1, 0, 1),
    ]
    margin = 0.02
    positions, triangles, uvs, chart_ids = [], [], [], []
    for f, (axis, sign, ua, va) in enumerate(faces):
        cell_x, cell_y = f % 3, f // 3
        x0, x1 = cell_x / 3.0 + margin, (cell_x + 1) / 3.0 - margin
        y0, y1 = cell_y / 2.0 + margin, (cell_y + 1) / 2.0 - margin
        base = len(positions)
        corners2d = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
        for cu, cv in corners2d:
            p = np.zeros(3)
            p[axis] = 0.5 * sign
            p[ua] = cu * sign  # flip one tangent so winding faces outward
            p[va] = cv
            positions.append(p)
        uv4 = [
            (x0, y1),
            (x1, y1),
            (x1, y0),
            (x0, y0),
        ]
        for tri in ((0, 1, 2), (0, 2, 3)):
            triangles.append([base + i for i in tri])
            uvs.append([uv4[i] for i in tri])
            chart_ids.append(f)
    return make_mesh(np.array(positions), np.array(triangles), uvs=np.array(uvs), chart_ids=chart_ids)


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return verts, faces


def make_icosphere(subdivisions: int = 2, radius: float = 0.5) -> Mesh:
    """Subdivided icosahedron, one chart per base face on a 5x4 grid."""
    verts, faces = _icosahedron()
    verts = list(verts)
    midpoint: dict[tuple[int, int], int] = {}

    def mid(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            p = verts[a] + verts[b]
            p = p / np.linalg.norm(p)
            midpoint[key] = len(verts)
            verts.append(p)
        return midpoint[key]

    # per final triangle: vertex ids, base face id, corner barycentrics
    tris = [(tuple(f), b, np.eye(3)) for b, f in enumerate(faces)]
    for _ in range(subdivisions):
        nxt = []
        for (a, b, c), base, bary in tris:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            m_ab = 0.5 * (bary[0] + bary[1])
            m_bc = 0.5 * (bary[1] + bary[2])
            m_ca = 0.5 * (bary[2] + bary[0])
            nxt.append(((a, ab, ca), base, np.stack([bary[0], m_ab, m_ca])))
            nxt.append(((ab, b, bc), base, np.stack([m_ab, bary[1], m_bc])))
            nxt.append(((ca, bc, c), base, np.stack([m_ca, m_bc, bary[2]])))
            nxt.append(((ab, bc, ca), base, np.stack([m_ab, m_bc, m_ca])))
        tris = nxt

    margin = 0.015
    chart_corners = []
    for f in range(20):
        cx, cy = f % 5, f // 5
        x0, x1 = cx / 5.0 + margin, (cx + 1) / 5.0 - margin
        y0, y1 = cy / 4.0 + margin, (cy + 1) / 4.0 - margin
        chart_corners.append(np.array([[x0, y1], [x1, y1], [0.5 * (x0 + x1), y0]]))

    positions = np.array(verts) * radius
    triangles = np.array([t for t, _, _ in tris])
    uvs = np.array([bary @ chart_corners[base] for _, base, bary in tris])
    chart_ids = [base for _, base, _ in tris]
    return make_mesh(positions, triangles, uvs=uvs, chart_ids=chart_ids)


def make_cylinder(radial_segments: int = 24, radius: float = 0.35, height: float = 1.0) -> Mesh:
    """Z-axis cylinder: unrolled side chart plus two cap disc charts."""
    positions, triangles, uvs, chart_ids = [], [], [], []
    hz = height / 2.0
    angles = np.arange(radial_segments) / radial_segments * 2.0 * np.pi
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)

    # side: welded rings, seam handled by per-corner u=1 on wrapping faces
    side_base = len(positions)
    for z in (-hz, hz):
        for x, y in ring:
            positions.append([x, y, z])
    u_of = lambda k: 0.02 + 0.96 * (k / radial_segments)
    v_bot, v_top = 0.48, 0.02
    for k in range(radial_segments):
        k1 = (k + 1) % radial_segments
        b0, b1 = side_base + k, side_base + k1
        t0, t1 = side_base + radial_segments + k, side_base + radial_segments + k1
        u0, u1 = u_of(k), u_of(k + 1)  # k+1 not wrapped: seam uses u at 1.0
        triangles.append([b0, b1, t1])
        uvs.append([(u0, v_bot), (u1, v_bot), (u1, v_top)])
        chart_ids.append(0)
        triangles.append([b0, t1, t0])
        uvs.append([(u0, v_bot), (u1, v_top), (u0, v_top)])
        chart_ids.append(0)

    # caps: duplicated rim for a hard edge, disc charts in the upper half
    for cap, (z, center_uv) in enumerate([(-hz, (0.25, 0.75)), (hz, (0.75, 0.75))]):
        base = len(positions)
        positions.append([0.0, 0.0, z])
        for x, y in ring:
            positions.append([x, y, z])
        r_uv = 0.2
        for k in range(radial_segments):
            k1 = (k + 1) % radial_segments
            a0, a1 = angles[k], angles[(k + 1) % radial_segments]
            uv_c = np.array(center_uv)
            # flip v so the chart is not mirrored on the -z cap
            sgn = 1.0 if z > 0 else -1.0
            uv0 = uv_c + r_uv * np.array([np.cos(a0), sgn * np.sin(a0)])
            uv1 = uv_c + r_uv * np.array([np.cos(a1), sgn * np.sin(a1)])
            if z > 0:
                triangles.append([base, base + 1 + k, base + 1 + k1])
                uvs.append([tuple(uv_c), tuple(uv0), tuple(uv1)])
            else:
                triangles.append([base, base + 1 + k1, base + 1 + k])
                uvs.append([tuple(uv_c), tuple(uv1), tuple(uv0)])
            chart_ids.append(1 + cap)
    return make_mesh(np.array(positions), np.array(triangles), uvs=np.array(uvs), chart_ids=chart_ids)


def make_torus(
    major_segments: int = 32,
    minor_segments: int = 16,
    major_radius: float = 0.35,
    minor_radius: float = 0.15,
) -> Mesh:
    """Torus around the Z axis, single rectangular chart with margins."""
    positions, triangles, uvs, chart_ids = [], [], [], []
    for i in range(major_segments):
        theta = 2.0 * np.pi * i / major_segments
        for j in range(minor_segments):
            phi = 2.0 * np.pi * j / minor_segments
            r = major_radius + minor_radius * np.cos(phi)
            positions.append([r * np.cos(theta), r * np.sin(theta), minor_radius * np.sin(phi)])

    m = 0.02

    def uv_at(i: int, j: int) -> tuple[float, float]:
        return (m + (1 - 2 * m) * i / major_segments, m + (1 - 2 * m) * j / minor_segments)

    def vid(i: int, j: int) -> int:
        return (i % major_segments) * minor_segments + (j % minor_segments)

    for i in range(major_segments):
        for j in range(minor_segments):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            uv00, uv10 = uv_at(i, j), uv_at(i + 1, j)
            uv01, uv11 = uv_at(i, j + 1), uv_at(i + 1, j + 1)
            triangles.append([v00, v10, v11])
            uvs.append([uv00, uv10, uv11])
            chart_ids.append(0)
            triangles.append([v00, v11, v01])
            uvs.append([uv00, uv11, uv01])
            chart_ids.append(0)
    return make_mesh(np.array(positions), np.array(triangles), uvs=np.array(uvs), chart_ids=chart_ids)
