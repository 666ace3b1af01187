"""glTF 2.0 reader and writer for textured assets.

Reads indexed triangle primitives (POSITION / NORMAL / TEXCOORD_0) from
.gltf or .glb; writes the baked asset as .gltf + .bin + PNG textures with
a pbrMetallicRoughness material (G=roughness, B=metallic).
"""

from __future__ import annotations

import base64
import json
import os
import struct

import numpy as np

from .errors import EmptyMesh, IoError, MissingUVs, ParseError
from .materials import MaterialSet
from .mesh import Mesh, make_mesh

_COMPONENT_DTYPES = {
    5120: np.int8,
    5121: np.uint8,
    5122: np.int16,
    5123: np.uint16,
    5125: np.uint32,
    5126: np.float32,
}
_TYPE_WIDTH = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4}
_NORMALIZE_MAX = {np.uint8: 255.0, np.uint16: 65535.0}


def _load_glb(path: str) -> tuple[dict, bytes | None]:
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != b"glTF":
            raise ParseError(f"{path}: not a GLB container")
        _, version, _length = struct.unpack("<4sII", header)
        if version != 2:
            raise ParseError(f"{path}: unsupported GLB version {version}")
        doc = None
        binary = None
        while True:
            chunk_header = fh.read(8)
            if len(chunk_header) < 8:
                break
            size, kind = struct.unpack("<I4s", chunk_header)
            payload = fh.read(size)
            if kind == b"JSON":
                doc = json.loads(payload.decode("utf-8"))
            elif kind == b"BIN\x00":
                binary = payload
        if doc is None:
            raise ParseError(f"{path}: GLB without JSON chunk")
        return doc, binary


def _buffer_bytes(doc: dict, index: int, base_dir: str, glb_bin: bytes | None) -> bytes:
    buf = doc["buffers"][index]
    uri = buf.get("uri")
    if uri is None:
        if glb_bin is None:
            raise ParseError("buffer without uri outside a GLB container")
        return glb_bin
    if uri.startswith("data:"):
        _, _, payload = uri.partition("base64,")
        return base64.b64decode(payload)
    with open(os.path.join(base_dir, uri), "rb") as fh:
        return fh.read()


def _read_accessor(doc: dict, index: int, buffers: list[bytes]) -> np.ndarray:
    acc = doc["accessors"][index]
    if "sparse" in acc:
        raise ParseError("sparse accessors are not supported")
    dtype = _COMPONENT_DTYPES.get(acc["componentType"])
    if dtype is None:
        raise ParseError(f"unknown componentType {acc['componentType']}")
    width = _TYPE_WIDTH.get(acc["type"])
    if width is None:
        raise ParseError(f"unsupported accessor type {acc['type']}")
    count = acc["count"]
    view = doc["bufferViews"][acc["bufferView"]]
    data = buffers[view["buffer"]]
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    itemsize = np.dtype(dtype).itemsize * width
    stride = view.get("byteStride", itemsize)
    out = np.empty((count, width), dtype=dtype)
    if stride == itemsize:
        flat = np.frombuffer(data, dtype=dtype, count=count * width, offset=start)
        out = flat.reshape(count, width).copy()
    else:
        for i in range(count):
            off = start + i * stride
            out[i] = np.frombuffer(data, dtype=dtype, count=width, offset=off)
    arr = out.astype(np.float64) if dtype != np.uint32 else out
    if acc.get("normalized") and dtype in (np.uint8, np.uint16):
        arr = arr / _NORMALIZE_MAX[dtype]
    return arr


def load_gltf(path: str) -> Mesh:
    base_dir = os.path.dirname(os.path.abspath(path))
    glb_bin = None
    if path.lower().endswith(".glb"):
        doc, glb_bin = _load_glb(path)
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if "asset" not in doc or str(doc["asset"].get("version", "")).split(".")[0] != "2":
        raise ParseError(f"{path}: not a glTF 2.0 document")
    buffers = [
        _buffer_bytes(doc, i, base_dir, glb_bin) for i in range(len(doc.get("buffers", [])))
    ]

    all_positions: list[np.ndarray] = []
    all_normals: list[np.ndarray] = []
    normals_present = True
    all_triangles: list[np.ndarray] = []
    all_uvs: list[np.ndarray] = []
    offset = 0
    for mesh_def in doc.get("meshes", []):
        for prim in mesh_def.get("primitives", []):
            if prim.get("mode", 4) != 4:
                continue
            attrs = prim["attributes"]
            if "POSITION" not in attrs:
                raise ParseError(f"{path}: primitive without POSITION")
            pos = _read_accessor(doc, attrs["POSITION"], buffers)
            if "TEXCOORD_0" not in attrs:
                raise MissingUVs(f"{path}: primitive without TEXCOORD_0")
            tex = _read_accessor(doc, attrs["TEXCOORD_0"], buffers)
            if "indices" in prim:
                idx = np.asarray(_read_accessor(doc, prim["indices"], buffers)).reshape(-1)
                idx = idx.astype(np.int64)
            else:
                idx = np.arange(len(pos), dtype=np.int64)
            if len(idx) % 3 != 0:
                raise ParseError(f"{path}: triangle index count not divisible by 3")
            if idx.size and (idx.max() >= len(pos) or idx.min() < 0):
                raise ParseError(f"{path}: index out of range")
            tris = idx.reshape(-1, 3)
            if "NORMAL" in attrs:
                all_normals.append(_read_accessor(doc, attrs["NORMAL"], buffers))
            else:
                normals_present = False
            all_positions.append(pos)
            all_triangles.append(tris + offset)
            all_uvs.append(np.clip(tex[tris], 0.0, 1.0))
            offset += len(pos)

    if not all_positions or not any(len(t) for t in all_triangles):
        raise EmptyMesh(f"{path}: no triangle primitives")
    positions = np.concatenate(all_positions)
    triangles = np.concatenate(all_triangles)
    uvs = np.concatenate(all_uvs)
    normals = np.concatenate(all_normals) if normals_present and all_normals else None
    return make_mesh(positions, triangles, vertex_normals=normals, uvs=uvs)


def _split_by_uv(mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Duplicate vertices so UVs become a per-vertex attribute."""
    key_to_index: dict[tuple, int] = {}
    positions, normals, uvs = [], [], []
    triangles = np.empty_like(mesh.triangles)
    for t in range(mesh.num_triangles):
        for c in range(3):
            vi = int(mesh.triangles[t, c])
            u, vv = mesh.uvs[t, c]
            key = (vi, round(float(u), 7), round(float(vv), 7))
            if key not in key_to_index:
                key_to_index[key] = len(positions)
                positions.append(mesh.positions[vi])
                normals.append(mesh.vertex_normals[vi])
                uvs.append([u, vv])
            triangles[t, c] = key_to_index[key]
    return (
        np.asarray(positions, dtype=np.float32),
        np.asarray(normals, dtype=np.float32),
        np.asarray(uvs, dtype=np.float32),
        triangles.astype(np.uint32),
    )


def export_gltf(mesh: Mesh, materials: MaterialSet, path: str) -> None:
    """Write `path` (.gltf) plus sibling .bin and albedo/mr PNG files."""
    if not mesh.has_uvs():
        raise MissingUVs("export requires UVs")
    from .png_io import save_rgb

    positions, normals, uvs, triangles = _split_by_uv(mesh)
    stem = os.path.splitext(os.path.basename(path))[0]
    out_dir = os.path.dirname(os.path.abspath(path))
    bin_name = stem + ".bin"
    albedo_name = stem + "_albedo.png"
    mr_name = stem + "_mr.png"

    blobs = []
    views = []
    accessors = []

    def add_blob(arr: np.ndarray, target: int, acc_type: str, component: int, normalized=False):
        raw = arr.tobytes()
        offset = sum(len(b) for b in blobs)
        pad = (-offset) % 4
        if pad:
            blobs.append(b"\x00" * pad)
            offset += pad
        blobs.append(raw)
        views.append(
            {"buffer": 0, "byteOffset": offset, "byteLength": len(raw), "target": target}
        )
        acc = {
            "bufferView": len(views) - 1,
            "componentType": component,
            "count": len(arr),
            "type": acc_type,
        }
        if acc_type == "VEC3" and component == 5126:
            acc["min"] = [float(x) for x in arr.min(axis=0)]
            acc["max"] = [float(x) for x in arr.max(axis=0)]
        accessors.append(acc)
        return len(accessors) - 1

    a_pos = add_blob(positions, 34962, "VEC3", 5126)
    a_nrm = add_blob(normals, 34962, "VEC3", 5126)
    a_uv = add_blob(uvs, 34962, "VEC2", 5126)
    a_idx = add_blob(triangles.reshape(-1, 1), 34963, "SCALAR", 5125)
    accessors[a_idx]["count"] = int(triangles.size)

    doc = {
        "asset": {"version": "2.0", "generator": "matforge"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0}],
        "meshes": [
            {
                "primitives": [
                    {
                        "attributes": {"POSITION": a_pos, "NORMAL": a_nrm, "TEXCOORD_0": a_uv},
                        "indices": a_idx,
                        "material": 0,
                        "mode": 4,
                    }
                ]
            }
        ],
        "materials": [
            {
                "name": "baked",
                "pbrMetallicRoughness": {
                    "baseColorTexture": {"index": 0},
                    "metallicRoughnessTexture": {"index": 1},
                    "metallicFactor": 1.0,
                    "roughnessFactor": 1.0,
                },
            }
        ],
        "textures": [{"sampler": 0, "source": 0}, {"sampler": 0, "source": 1}],
        "samplers": [{"magFilter": 9729, "minFilter": 9729, "wrapS": 33071, "wrapT": 33071}],
        "images": [{"uri": albedo_name}, {"uri": mr_name}],
        "buffers": [{"uri": bin_name, "byteLength": sum(len(b) for b in blobs)}],
        "bufferViews": views,
        "accessors": accessors,
    }
    try:
        with open(os.path.join(out_dir, bin_name), "wb") as fh:
            for blob in blobs:
                fh.write(blob)
        save_rgb(os.path.join(out_dir, albedo_name), materials.albedo_texture)
        save_rgb(os.path.join(out_dir, mr_name), materials.mr_texture)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
    except OSError as exc:
        raise IoError(f"failed to write {path}: {exc}") from exc
