import numpy as np
import pytest

import matforge as mf
from matforge.errors import EmptyMesh, UnsupportedViewCount
from matforge.raster import coverage_count, rasterize

from conftest import rotate_mesh, rotation_z


class TestViewSet:
    def test_six_views(self):
        cams = mf.make_view_set(6, 512)
        assert len(cams) == 6
        dirs = np.array([c.view_direction for c in cams])
        expected = -np.array(
            [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float
        )
        assert np.allclose(dirs, expected)
        assert all(c.image_size == 512 for c in cams)
        assert all(abs(c.ortho_half_extent - 0.6) < 1e-12 for c in cams)

    def test_four_views(self):
        cams = mf.make_view_set(4, 256)
        dirs = np.array([c.view_direction for c in cams])
        expected = -np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], dtype=float)
        assert np.allclose(dirs, expected, atol=1e-12)

    def test_unsupported_count(self):
        with pytest.raises(UnsupportedViewCount):
            mf.make_view_set(5, 256)


class TestGBuffer:
    def test_cube_plus_z_center(self, cube_mesh):
        cam = mf.make_view_set(6, 64)[4]  # above, looking -Z
        gb = mf.rasterize_gbuffer(cube_mesh, cam)
        for px in ((31, 31), (32, 32)):
            assert gb.mask[px]
            assert np.abs(gb.normal_map[px] - [0.5, 0.5, 1.0]).max() <= 1 / 255
            assert abs(gb.ccm[px][2] - 1.0) <= 1 / 255

    def test_background_pixel(self, cube_mesh):
        cam = mf.make_view_set(6, 64)[4]
        gb = mf.rasterize_gbuffer(cube_mesh, cam)
        assert not gb.mask[0, 0]
        assert np.all(gb.ccm[0, 0] == 0.0)
        assert np.all(gb.normal_map[0, 0] == 0.5)
        assert np.isinf(gb.depth[0, 0])

    def test_sphere_normal_equals_radial(self, sphere_mesh):
        cam = mf.make_view_set(6, 128)[0]
        gb = mf.rasterize_gbuffer(sphere_mesh, cam)
        n = gb.decoded_normals()[gb.mask]
        p = gb.decoded_positions()[gb.mask]
        radial = p / np.maximum(np.linalg.norm(p, axis=1, keepdims=True), 1e-9)
        cos = np.clip(np.sum(n * radial, axis=1), -1, 1)
        assert np.degrees(np.arccos(cos)).max() < 3.0

    def test_normals_unit_where_covered(self, sphere_mesh):
        cam = mf.make_view_set(6, 64)[2]
        gb = mf.rasterize_gbuffer(sphere_mesh, cam)
        lengths = np.linalg.norm(gb.decoded_normals()[gb.mask], axis=1)
        assert np.abs(lengths - 1.0).max() <= 2 / 255

    def test_ccm_range(self, sphere_mesh):
        cam = mf.make_view_set(6, 64)[1]
        gb = mf.rasterize_gbuffer(sphere_mesh, cam)
        covered = gb.ccm[gb.mask]
        assert covered.min() >= 0.0 and covered.max() <= 1.0

    def test_empty_mesh(self):
        mesh = mf.make_mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))
        with pytest.raises(EmptyMesh):
            mf.rasterize_gbuffer(mesh, mf.make_view_set(6, 32)[0])

    def test_view_symmetry_under_quarter_turn(self, sphere_mesh, cube_mesh):
        # rotating the mesh +90 deg about Z and viewing from +X matches
        # viewing the original from -Y (exact camera-frame equivalence)
        cams = mf.make_view_set(6, 64)
        for mesh in (sphere_mesh, cube_mesh):
            rotated = rotate_mesh(mesh, rotation_z(90.0))
            gb_rot = mf.rasterize_gbuffer(rotated, cams[0])
            gb_ref = mf.rasterize_gbuffer(mesh, cams[3])
            assert np.array_equal(gb_rot.mask, gb_ref.mask)
            # normals are stored in world space: rotate reference normals to compare
            n_ref = gb_ref.decoded_normals() @ rotation_z(90.0).T
            diff = np.abs(gb_rot.decoded_normals() - n_ref)[gb_rot.mask]
            assert diff.max() <= 2 / 255
            p_ref = gb_ref.decoded_positions() @ rotation_z(90.0).T
            diff_p = np.abs(gb_rot.decoded_positions() - p_ref)[gb_rot.mask]
            assert diff_p.max() <= 2 / 255


class TestRasterCore:
    def test_depth_test_keeps_nearer(self):
        # two stacked quads; the nearer one must win every covered pixel
        pts = np.array(
            [
                [[2.0, 2.0], [30.0, 2.0], [2.0, 30.0]],
                [[2.0, 2.0], [30.0, 2.0], [2.0, 30.0]],
            ]
        )
        depths = np.array([[5.0, 5.0, 5.0], [3.0, 3.0, 3.0]])
        attrs = np.array([[[1.0]] * 3, [[2.0]] * 3])
        res = rasterize(pts, depths, attrs, 32, 32)
        assert np.all(res.tri_id[res.mask] == 1)
        assert np.allclose(res.attrs[res.mask], 2.0, atol=1e-12)
        assert np.allclose(res.depth[res.mask], 3.0, atol=1e-12)

    def test_exact_tie_keeps_lower_index(self):
        pts = np.array(
            [
                [[2.0, 2.0], [30.0, 2.0], [2.0, 30.0]],
                [[2.0, 2.0], [30.0, 2.0], [2.0, 30.0]],
            ]
        )
        depths = np.full((2, 3), 4.0)
        attrs = np.array([[[1.0]] * 3, [[2.0]] * 3])
        res = rasterize(pts, depths, attrs, 32, 32)
        assert np.all(res.tri_id[res.mask] == 0)

    def test_shared_edge_no_double_coverage(self):
        # quad split along the diagonal: every covered texel exactly once
        uvs = np.array(
            [
                [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
                [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            ]
        )
        counts = coverage_count(uvs, 64)
        assert counts.max() == 1
        assert counts.sum() == 64 * 64

    def test_degenerate_triangle_skipped(self):
        pts = np.array([[[1.0, 1.0], [5.0, 1.0], [9.0, 1.0]]])  # zero area
        res = rasterize(pts, None, np.ones((1, 3, 1)), 16, 16)
        assert not res.mask.any()
