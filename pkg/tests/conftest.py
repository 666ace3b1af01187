import numpy as np
import pytest
import torch

import matforge as mf
from matforge.primitives import make_cube, make_icosphere, make_quad

# keep CPU math run-to-run reproducible regardless of the host
torch.set_num_threads(2)

CUBE_OBJ = """# unit cube with shared uv square per face
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
vt 0.0 0.0
vt 1.0 0.0
vt 1.0 1.0
vt 0.0 1.0
f 1/1 4/2 3/3 2/4
f 5/1 6/2 7/3 8/4
f 1/1 2/2 6/3 5/4
f 2/1 3/2 7/3 6/4
f 3/1 4/2 8/3 7/4
f 4/1 1/2 5/3 8/4
"""

CUBE_OBJ_NO_UV = "".join(
    line + "\n"
    for line in CUBE_OBJ.splitlines()
    if not line.startswith("vt")
).replace("/1", "").replace("/2", "").replace("/3", "").replace("/4", "")


@pytest.fixture(scope="session")
def cube_mesh():
    return mf.normalize_to_unit_cube(make_cube())


@pytest.fixture(scope="session")
def quad_mesh():
    return make_quad()


@pytest.fixture(scope="session")
def sphere_mesh():
    return mf.normalize_to_unit_cube(make_icosphere(2))


@pytest.fixture()
def cube_obj_path(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ)
    return str(path)


@pytest.fixture(scope="session")
def tiny_config():
    return mf.DenoiserConfig(width=24, depth=2, views=4, image_size=32, patch_size=8)


@pytest.fixture(scope="session")
def tiny_model(tiny_config):
    model = mf.MaterialDenoiser(tiny_config, seed=7)
    model.mark_trained()
    return model


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory, tiny_model):
    from matforge.denoiser import save_model

    path = tmp_path_factory.mktemp("ckpt") / "tiny.ckpt"
    save_model(str(path), tiny_model)
    return str(path)


@pytest.fixture(scope="session")
def tiny_dataset():
    return mf.make_synthetic_dataset(2, seed=11, views=4, image_size=32, texture_res=64)


def rotation_z(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    return np.array(
        [[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]]
    )


def rotate_mesh(mesh, rot):
    from dataclasses import replace

    return replace(
        mesh,
        positions=mesh.positions @ rot.T,
        vertex_normals=mesh.vertex_normals @ rot.T,
    )
