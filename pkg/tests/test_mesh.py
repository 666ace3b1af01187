import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import matforge as mf
from matforge.errors import EmptyMesh, MissingUVs, ParseError
from matforge.mesh import compute_chart_ids
from matforge.primitives import make_icosphere

from conftest import CUBE_OBJ, CUBE_OBJ_NO_UV, rotate_mesh


class TestLoadObj:
    def test_cube_counts(self, cube_obj_path):
        mesh = mf.load_mesh(cube_obj_path)
        assert mesh.num_triangles == 12
        assert 8 <= mesh.num_vertices <= 24
        assert mesh.uvs.shape == (12, 3, 2)

    def test_out_of_range_index(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 9/1\n")
        with pytest.raises(ParseError):
            mf.load_mesh(str(path))

    def test_missing_uvs(self, tmp_path):
        path = tmp_path / "nouv.obj"
        path.write_text(CUBE_OBJ_NO_UV)
        with pytest.raises(MissingUVs):
            mf.load_mesh(str(path))

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.obj"
        path.write_text("# nothing\n")
        with pytest.raises(EmptyMesh):
            mf.load_mesh(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            mf.load_mesh(str(tmp_path / "nope.obj"))

    def test_normals_computed_when_absent(self, cube_obj_path):
        mesh = mf.load_mesh(cube_obj_path)
        lengths = np.linalg.norm(mesh.vertex_normals, axis=1)
        assert np.allclose(lengths, 1.0, atol=1e-6)


class TestNormalize:
    def test_cube_from_0_2(self):
        mesh = mf.make_mesh(
            np.array([[0.0, 0, 0], [2, 0, 0], [2, 2, 0], [0, 2, 2]]),
            np.array([[0, 1, 2], [0, 2, 3]]),
        )
        out = mf.normalize_to_unit_cube(mesh)
        assert np.allclose(out.positions.min(axis=0), [-0.5, -0.5, -0.5], atol=1e-12)
        assert np.allclose(out.positions.max(axis=0), [0.5, 0.5, 0.5], atol=1e-12)

    def test_anisotropic_box_uniform_scale(self):
        box = np.array(
            [[0, 0, 0], [2, 0, 0], [2, 1, 0], [0, 1, 0], [0, 0, 1], [2, 0, 1], [2, 1, 1], [0, 1, 1]],
            dtype=np.float64,
        )
        mesh = mf.make_mesh(box, np.array([[0, 1, 2], [4, 5, 6]]))
        out = mf.normalize_to_unit_cube(mesh)
        lo, hi = out.positions.min(axis=0), out.positions.max(axis=0)
        assert np.allclose(lo, [-0.5, -0.25, -0.25], atol=1e-12)
        assert np.allclose(hi, [0.5, 0.25, 0.25], atol=1e-12)

    def test_idempotent(self, sphere_mesh):
        once = mf.normalize_to_unit_cube(sphere_mesh)
        twice = mf.normalize_to_unit_cube(once)
        assert np.abs(twice.positions - once.positions).max() < 1e-7

    def test_empty_mesh(self):
        mesh = mf.make_mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))
        with pytest.raises(EmptyMesh):
            mf.normalize_to_unit_cube(mesh)


class TestVertexNormals:
    def test_flat_quad(self, quad_mesh):
        out = mf.compute_vertex_normals(quad_mesh)
        assert np.allclose(out.vertex_normals, [0.0, 0.0, 1.0], atol=1e-12)

    def test_icosphere_radial(self):
        mesh = make_icosphere(2)
        out = mf.compute_vertex_normals(mesh)
        radial = mesh.positions / np.linalg.norm(mesh.positions, axis=1, keepdims=True)
        cos = np.clip(np.sum(out.vertex_normals * radial, axis=1), -1.0, 1.0)
        assert np.degrees(np.arccos(cos)).max() < 5.0

    def test_single_triangle(self):
        mesh = mf.make_mesh(
            np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]])
        )
        assert np.allclose(mesh.vertex_normals, [0, 0, 1], atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_rotation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0, 2 * np.pi)
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        rot = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
        mesh = make_icosphere(1)
        rotated = rotate_mesh(mesh, rot)
        n_then_rot = mf.compute_vertex_normals(mesh).vertex_normals @ rot.T
        rot_then_n = mf.compute_vertex_normals(rotated).vertex_normals
        assert np.abs(n_then_rot - rot_then_n).max() < 1e-6
        face_rot = mesh.face_normals() @ rot.T
        assert np.abs(face_rot - rotated.face_normals()).max() < 1e-6


class TestAtlas:
    def test_cube_disjoint_charts(self, cube_mesh):
        report = mf.validate_uv_atlas(cube_mesh, 256)
        assert report.overlap_texel_count == 0
        assert report.chart_count == 6
        assert 0.6 < report.coverage_fraction < 0.9

    def test_forced_collision(self):
        uvs = np.array(
            [
                [[0.1, 0.1], [0.9, 0.1], [0.5, 0.9]],
                [[0.1, 0.1], [0.9, 0.1], [0.5, 0.9]],
            ]
        )
        mesh = mf.make_mesh(
            np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]),
            np.array([[0, 1, 2], [0, 1, 3]]),
            uvs=uvs,
        )
        report = mf.validate_uv_atlas(mesh, 128)
        assert report.overlap_texel_count > 0

    def test_full_coverage_quad(self, quad_mesh):
        report = mf.validate_uv_atlas(quad_mesh, 256)
        assert report.coverage_fraction >= 0.98
        assert report.overlap_texel_count == 0

    def test_overlap_invariant_under_reordering(self, cube_mesh):
        rng = np.random.default_rng(5)
        perm = rng.permutation(cube_mesh.num_triangles)
        shuffled = mf.make_mesh(
            cube_mesh.positions,
            cube_mesh.triangles[perm],
            vertex_normals=cube_mesh.vertex_normals,
            uvs=cube_mesh.uvs[perm],
            chart_ids=cube_mesh.chart_ids[perm],
        )
        a = mf.validate_uv_atlas(cube_mesh, 173)
        b = mf.validate_uv_atlas(shuffled, 173)
        assert a.overlap_texel_count == b.overlap_texel_count
        assert a.coverage_fraction == b.coverage_fraction

    def test_missing_uvs(self):
        mesh = mf.make_mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
        with pytest.raises(MissingUVs):
            mf.validate_uv_atlas(mesh, 64)

    def test_chart_ids_merge_across_shared_edges(self, quad_mesh):
        ids = compute_chart_ids(quad_mesh.triangles, quad_mesh.uvs)
        assert len(set(ids.tolist())) == 1

    def test_chart_ids_split_at_uv_seams(self, cube_mesh):
        ids = compute_chart_ids(cube_mesh.triangles, cube_mesh.uvs)
        assert len(set(ids.tolist())) == 6
