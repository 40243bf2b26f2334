"""Mesh file loading: Wavefront OBJ and binary glTF (.glb).

Only geometry is read; materials, textures, skins, and animation are
ignored.  GLB support covers the common static-mesh subset: TRIANGLES
primitives, float32 positions, u8/u16/u32 indices, node TRS/matrix
transforms.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .geometry import TriMesh


class MeshLoadError(ValueError):
    pass


def load_mesh(path) -> TriMesh:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return load_obj(path)
    if suffix == ".glb":
        return load_glb(path)
    raise MeshLoadError(f"unsupported mesh format '{suffix}' for {path}")


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------


def load_obj(path) -> TriMesh:
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            if line.startswith("v "):
                parts = line.split()
                verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
            elif line.startswith("f "):
                idx = [_obj_index(tok, len(verts)) for tok in line.split()[1:]]
                for k in range(1, len(idx) - 1):  # fan for polygons
                    faces.append((idx[0], idx[k], idx[k + 1]))
    if not faces:
        raise MeshLoadError(f"no triangles in {path}")
    return TriMesh(np.asarray(verts), np.asarray(faces))


def _obj_index(token: str, vertex_count: int) -> int:
    i = int(token.split("/")[0])
    return i - 1 if i > 0 else vertex_count + i


def write_obj(path, mesh: TriMesh) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# GLB
# ---------------------------------------------------------------------------

_COMPONENT_DTYPES = {
    5120: np.int8,
    5121: np.uint8,
    5122: np.int16,
    5123: np.uint16,
    5125: np.uint32,
    5126: np.float32,
}
_TYPE_COUNTS = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4, "MAT4": 16}


def load_glb(path) -> TriMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"glTF":
        raise MeshLoadError(f"not a GLB file: {path}")
    version, length = struct.unpack_from("<II", data, 4)
    if version != 2:
        raise MeshLoadError(f"unsupported GLB version {version} in {path}")
    offset = 12
    gltf = None
    binary = b""
    while offset < length:
        chunk_len, chunk_type = struct.unpack_from("<II", data, offset)
        chunk = data[offset + 8 : offset + 8 + chunk_len]
        if chunk_type == 0x4E4F534A:  # JSON
            gltf = json.loads(chunk.decode("utf-8"))
        elif chunk_type == 0x004E4942:  # BIN
            binary = chunk
        offset += 8 + chunk_len + (-chunk_len) % 4
    if gltf is None:
        raise MeshLoadError(f"GLB without JSON chunk: {path}")
    return _assemble_gltf(gltf, binary, path)


def _read_accessor(gltf, binary, index) -> np.ndarray:
    acc = gltf["accessors"][index]
    if acc.get("sparse"):
        raise MeshLoadError("sparse accessors are not supported")
    dtype = _COMPONENT_DTYPES[acc["componentType"]]
    ncomp = _TYPE_COUNTS[acc["type"]]
    count = acc["count"]
    view = gltf["bufferViews"][acc["bufferView"]]
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    stride = view.get("byteStride")
    itemsize = np.dtype(dtype).itemsize * ncomp
    if stride is None or stride == itemsize:
        arr = np.frombuffer(binary, dtype=dtype, count=count * ncomp, offset=start)
        return arr.reshape(count, ncomp) if ncomp > 1 else arr
    rows = []
    for i in range(count):
        rows.append(np.frombuffer(binary, dtype=dtype, count=ncomp, offset=start + i * stride))
    arr = np.stack(rows)
    return arr if ncomp > 1 else arr.ravel()


def _node_matrix(node) -> np.ndarray:
    if "matrix" in node:
        return np.asarray(node["matrix"], dtype=float).reshape(4, 4).T  # column-major
    m = np.eye(4)
    if "scale" in node:
        m[:3, :3] = np.diag(node["scale"])
    if "rotation" in node:
        x, y, z, w = node["rotation"]
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        m[:3, :3] = r @ m[:3, :3]
    if "translation" in node:
        m[:3, 3] = node["translation"]
    return m


def _assemble_gltf(gltf, binary, path) -> TriMesh:
    all_verts: list[np.ndarray] = []
    all_faces: list[np.ndarray] = []
    base = 0

    def visit(node_index: int, parent: np.ndarray):
        nonlocal base
        node = gltf["nodes"][node_index]
        m = parent @ _node_matrix(node)
        if "mesh" in node:
            for prim in gltf["meshes"][node["mesh"]].get("primitives", []):
                if prim.get("mode", 4) != 4:
                    continue
                pos = _read_accessor(gltf, binary, prim["attributes"]["POSITION"]).astype(float)
                if "indices" in prim:
                    idx = _read_accessor(gltf, binary, prim["indices"]).astype(np.int64)
                else:
                    idx = np.arange(len(pos), dtype=np.int64)
                verts = pos @ m[:3, :3].T + m[:3, 3]
                all_verts.append(verts)
                all_faces.append(idx.reshape(-1, 3) + base)
                base += len(verts)
        for child in node.get("children", []):
            visit(child, m)

    scene_index = gltf.get("scene", 0)
    scenes = gltf.get("scenes", [])
    roots = scenes[scene_index]["nodes"] if scenes else range(len(gltf.get("nodes", [])))
    for root in roots:
        visit(root, np.eye(4))
    if not all_faces:
        raise MeshLoadError(f"no triangle geometry in {path}")
    return TriMesh(np.concatenate(all_verts), np.concatenate(all_faces))
