"""Scene data model and manifest loading.

A scene manifest is one JSON document listing objects (mesh path plus a
rigid 12-value row-major placement), architecture elements (inline world
polygons or world-frame mesh files), and rooms.  All loaded geometry is in
world frame, meters, Z-up, gravity along -Z.  Instances are immutable after
load and safe to share across concurrent metric evaluations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import meshio
from .geometry import (
    GeometrySet,
    OrientedBox,
    TriMesh,
    closest_surface_distance,
    points_in_triangles_2d,
    polygon_planarity,
    polygon_to_mesh,
    rasterize_occupancy,
)

logger = logging.getLogger(__name__)

ARCH_KINDS = ("wall", "floor", "ceiling", "window", "door")
DEFAULT_FRONT_AXIS = (0.0, 1.0, 0.0)
FLOOR_PLANARITY_TOL = 1e-4
WALL_ROOM_ATTACH_DISTANCE = 0.15  # walls this close to a room's floors belong to it


class SceneLoadError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectFootprint:
    """World 2D bounding rectangle sides of an object."""

    longer_side: float
    shorter_side: float


@dataclass(frozen=True)
class ObjectInstance:
    id: str
    description: str
    mesh: TriMesh               # local frame
    rotation: np.ndarray        # (3, 3)
    translation: np.ndarray     # (3,)
    obb: OrientedBox            # world frame
    world_mesh: TriMesh
    footprint: ObjectFootprint
    front_axis: np.ndarray | None  # unit vector, local frame; None when frontless
    image_refs: dict = field(default_factory=dict)
    mesh_path: str = ""


@dataclass(frozen=True)
class ArchElement:
    id: str
    kind: str
    mesh: TriMesh               # world frame
    front_normal: np.ndarray | None = None  # walls only; points into the room
    polygon: np.ndarray | None = None       # as given in the manifest, if inline
    mesh_path: str = ""


@dataclass(frozen=True)
class RoomRegion:
    id: str
    room_type: str
    floor_ids: tuple
    centroid_2d: np.ndarray
    mean_dimension: float       # mean of the room's 2D extent, meters
    wall_ids: tuple = ()


class SceneInstance:
    """Objects plus architecture with world transforms; the thing being scored."""

    def __init__(self, objects, architecture, rooms, manifest_path=None):
        self.objects: list[ObjectInstance] = list(objects)
        self.architecture: list[ArchElement] = list(architecture)
        self.rooms: list[RoomRegion] = list(rooms)
        self.manifest_path = Path(manifest_path) if manifest_path else None
        self._by_id = {o.id: o for o in self.objects}
        self._arch_by_id = {a.id: a for a in self.architecture}

    def object_by_id(self, object_id: str) -> ObjectInstance:
        return self._by_id[object_id]

    def arch_by_id(self, arch_id: str) -> ArchElement:
        return self._arch_by_id[arch_id]

    def arch_of_kind(self, kind: str) -> list[ArchElement]:
        return [a for a in self.architecture if a.kind == kind]

    @property
    def floors(self) -> list[ArchElement]:
        return self.arch_of_kind("floor")

    @property
    def walls(self) -> list[ArchElement]:
        return self.arch_of_kind("wall")

    @property
    def ceilings(self) -> list[ArchElement]:
        return self.arch_of_kind("ceiling")

    def room_floors(self, room: RoomRegion) -> list[ArchElement]:
        return [self._arch_by_id[i] for i in room.floor_ids]

    def room_walls(self, room: RoomRegion) -> list[ArchElement]:
        return [self._arch_by_id[i] for i in room.wall_ids]

    def object_geometry(self, exclude_ids=()) -> GeometrySet:
        ex = set(exclude_ids)
        return GeometrySet([(o.id, o.world_mesh) for o in self.objects if o.id not in ex])

    def arch_geometry(self, kinds=None) -> GeometrySet:
        kinds = set(kinds) if kinds is not None else set(ARCH_KINDS)
        return GeometrySet([(a.id, a.mesh) for a in self.architecture if a.kind in kinds])

    def occupancy(self, resolution: float):
        return rasterize_occupancy(
            [f.mesh for f in self.floors],
            [w.mesh for w in self.walls],
            [o.world_mesh for o in self.objects],
            resolution,
        )


def world_front_vector(obj: ObjectInstance) -> np.ndarray:
    """The object's semantic front direction in world frame (unit length)."""
    if obj.front_axis is None:
        raise ValueError(f"no front vector: object '{obj.id}' is frontless")
    v = obj.rotation @ obj.front_axis
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Programmatic construction
# ---------------------------------------------------------------------------


def object_from_mesh(
    obj_id: str,
    mesh: TriMesh,
    rotation=None,
    translation=(0.0, 0.0, 0.0),
    front_axis=DEFAULT_FRONT_AXIS,
    frontless: bool = False,
    description: str | None = None,
    image_refs: dict | None = None,
    mesh_path: str = "",
) -> ObjectInstance:
    """Build an ObjectInstance from an in-memory local mesh and a rigid placement."""
    rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    translation = np.asarray(translation, dtype=float)
    if frontless:
        front = None
    else:
        front = np.asarray(front_axis, dtype=float)
        front = front / np.linalg.norm(front)
    lo, hi = mesh.bounds
    obb = OrientedBox.from_local_aabb(lo, hi, rotation, translation)
    longer, shorter = obb.footprint_sides()
    return ObjectInstance(
        id=obj_id,
        description=description if description is not None else obj_id.replace("_", " "),
        mesh=mesh,
        rotation=rotation,
        translation=translation,
        obb=obb,
        world_mesh=mesh.transformed(rotation, translation),
        footprint=ObjectFootprint(longer, shorter),
        front_axis=front,
        image_refs=dict(image_refs or {}),
        mesh_path=mesh_path,
    )


def arch_from_polygon(arch_id: str, kind: str, polygon, front_normal=None) -> ArchElement:
    """Build an ArchElement from a world-frame planar polygon."""
    if kind not in ARCH_KINDS:
        raise SceneLoadError(f"unknown arch kind '{kind}' for element '{arch_id}'")
    polygon = np.asarray(polygon, dtype=float)
    if front_normal is not None:
        front_normal = np.asarray(front_normal, dtype=float)
        front_normal = front_normal / np.linalg.norm(front_normal)
    if kind == "wall" and front_normal is None:
        raise SceneLoadError(f"wall '{arch_id}' must declare front_normal")
    return ArchElement(
        id=arch_id, kind=kind, mesh=polygon_to_mesh(polygon),
        front_normal=front_normal, polygon=polygon,
    )


def make_room(room_id: str, room_type: str, floors, walls=()) -> RoomRegion:
    """Build a RoomRegion from already-constructed floor/wall elements."""
    centroid, mean_dim = _room_metrics([f.mesh for f in floors])
    return RoomRegion(
        id=room_id,
        room_type=room_type,
        floor_ids=tuple(f.id for f in floors),
        centroid_2d=centroid,
        mean_dimension=mean_dim,
        wall_ids=tuple(w.id for w in walls),
    )


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _parse_transform(values) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (12,):
        raise SceneLoadError(f"transform must have 12 row-major values, got {arr.shape}")
    m = arr.reshape(3, 4)
    rotation, translation = m[:, :3], m[:, 3]
    if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-4):
        raise SceneLoadError("transform rotation is not orthonormal (placements must be rigid)")
    return rotation, translation


def _load_object(entry, base_dir: Path, mesh_cache: dict) -> ObjectInstance:
    obj_id = entry["id"]
    mesh_path = entry["mesh"]
    resolved = (base_dir / mesh_path).resolve()
    if resolved not in mesh_cache:
        mesh = meshio.load_mesh(resolved)
        mesh, dropped = mesh.without_degenerate_triangles()
        if dropped:
            logger.warning("%s: dropped %d degenerate triangles", mesh_path, dropped)
        if len(mesh) == 0:
            raise SceneLoadError(f"mesh has no usable triangles: {mesh_path}")
        if mesh.boundary_edge_count():
            logger.warning("non-manifold mesh: %s", mesh_path)
        mesh_cache[resolved] = mesh
    mesh = mesh_cache[resolved]

    rotation, translation = _parse_transform(entry["transform"])
    front_axis = entry.get("front_axis", DEFAULT_FRONT_AXIS)
    if not entry.get("frontless") and np.linalg.norm(front_axis) < 1e-9:
        raise SceneLoadError(f"object '{obj_id}': zero-length front axis")
    return object_from_mesh(
        obj_id,
        mesh,
        rotation=rotation,
        translation=translation,
        front_axis=front_axis,
        frontless=bool(entry.get("frontless")),
        description=entry.get("description", obj_id),
        image_refs=entry.get("images", {}),
        mesh_path=mesh_path,
    )


def _load_arch(entry, base_dir: Path, mesh_cache: dict) -> ArchElement:
    kind = entry.get("kind")
    if kind not in ARCH_KINDS:
        raise SceneLoadError(f"unknown arch kind '{kind}' for element '{entry.get('id')}'")
    polygon = None
    mesh_path = ""
    if "polygon" in entry:
        polygon = np.asarray(entry["polygon"], dtype=float)
        if kind == "floor" and polygon_planarity(polygon) > FLOOR_PLANARITY_TOL:
            raise SceneLoadError(f"floor '{entry['id']}' polygon is not planar")
        mesh = polygon_to_mesh(polygon)
    elif "mesh" in entry:
        mesh_path = entry["mesh"]
        mesh = meshio.load_mesh((base_dir / mesh_path).resolve())
        mesh, _ = mesh.without_degenerate_triangles()
        if kind == "floor" and polygon_planarity(mesh.vertices) > FLOOR_PLANARITY_TOL:
            raise SceneLoadError(f"floor '{entry['id']}' mesh is not planar")
    else:
        raise SceneLoadError(f"arch element '{entry.get('id')}' needs 'polygon' or 'mesh'")
    front_normal = None
    if "front_normal" in entry:
        front_normal = np.asarray(entry["front_normal"], dtype=float)
        front_normal = front_normal / np.linalg.norm(front_normal)
    if kind == "wall" and front_normal is None:
        raise SceneLoadError(f"wall '{entry['id']}' must declare front_normal")
    return ArchElement(
        id=entry["id"], kind=kind, mesh=mesh, front_normal=front_normal,
        polygon=polygon, mesh_path=mesh_path,
    )


def _room_metrics(floor_meshes) -> tuple[np.ndarray, float]:
    areas = []
    centroids = []
    for mesh in floor_meshes:
        tri = mesh.triangles
        a = 0.5 * np.abs(
            (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1])
            - (tri[:, 1, 1] - tri[:, 0, 1]) * (tri[:, 2, 0] - tri[:, 0, 0])
        )
        c = tri[:, :, :2].mean(axis=1)
        areas.append(a)
        centroids.append(c)
    areas = np.concatenate(areas)
    centroids = np.concatenate(centroids)
    total = areas.sum()
    if total <= 0:
        raise SceneLoadError("room floors have zero area")
    centroid = (centroids * areas[:, None]).sum(axis=0) / total
    lo = np.min([m.bounds[0, :2] for m in floor_meshes], axis=0)
    hi = np.max([m.bounds[1, :2] for m in floor_meshes], axis=0)
    mean_dim = float((hi - lo).mean())
    return centroid, mean_dim


def _load_room(entry, arch_by_id) -> RoomRegion:
    floor_ids = tuple(entry.get("floor_ids", ()))
    if not floor_ids:
        raise SceneLoadError(f"room '{entry.get('id')}' references no floors")
    floors = []
    for fid in floor_ids:
        if fid not in arch_by_id or arch_by_id[fid].kind != "floor":
            raise SceneLoadError(f"room '{entry['id']}' references unknown floor '{fid}'")
        floors.append(arch_by_id[fid])
    centroid, mean_dim = _room_metrics([f.mesh for f in floors])
    if mean_dim <= 0:
        raise SceneLoadError(f"room '{entry['id']}' has non-positive extent")
    tris = np.concatenate([f.mesh.triangles[:, :, :2] for f in floors])
    if not points_in_triangles_2d(centroid[None, :], tris)[0]:
        logger.warning("room '%s': centroid falls outside its floor polygons", entry["id"])
    walls = tuple(
        a.id
        for a in arch_by_id.values()
        if a.kind == "wall"
        and min(closest_surface_distance(a.mesh, f.mesh) for f in floors)
        <= WALL_ROOM_ATTACH_DISTANCE
    )
    return RoomRegion(
        id=entry["id"],
        room_type=entry.get("room_type", ""),
        floor_ids=floor_ids,
        centroid_2d=centroid,
        mean_dimension=mean_dim,
        wall_ids=walls,
    )


def load_scene(manifest_path) -> SceneInstance:
    """Load a scene manifest and its referenced meshes into world space."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing file: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    base_dir = manifest_path.parent
    mesh_cache: dict = {}

    objects = []
    seen = set()
    for entry in manifest.get("objects", []):
        obj = _load_object(entry, base_dir, mesh_cache)
        if obj.id in seen:
            raise SceneLoadError(f"duplicate object id '{obj.id}'")
        seen.add(obj.id)
        objects.append(obj)

    architecture = [_load_arch(e, base_dir, mesh_cache) for e in manifest.get("architecture", [])]
    arch_by_id = {a.id: a for a in architecture}
    if len(arch_by_id) != len(architecture):
        raise SceneLoadError("duplicate architecture element id")

    rooms = [_load_room(e, arch_by_id) for e in manifest.get("rooms", [])]
    return SceneInstance(objects, architecture, rooms, manifest_path=manifest_path)


def save_manifest(scene: SceneInstance, path) -> None:
    """Write a manifest equivalent to the loaded scene (same mesh references)."""
    doc = {"objects": [], "architecture": [], "rooms": []}
    for o in scene.objects:
        transform = np.hstack([o.rotation, o.translation[:, None]]).reshape(-1)
        entry = {
            "id": o.id,
            "description": o.description,
            "mesh": o.mesh_path,
            "transform": [float(v) for v in transform],
        }
        if o.front_axis is None:
            entry["frontless"] = True
        else:
            entry["front_axis"] = [float(v) for v in o.front_axis]
        if o.image_refs:
            entry["images"] = dict(o.image_refs)
        doc["objects"].append(entry)
    for a in scene.architecture:
        entry = {"id": a.id, "kind": a.kind}
        if a.polygon is not None:
            entry["polygon"] = [[float(v) for v in p] for p in a.polygon]
        else:
            entry["mesh"] = a.mesh_path
        if a.front_normal is not None:
            entry["front_normal"] = [float(v) for v in a.front_normal]
        doc["architecture"].append(entry)
    for r in scene.rooms:
        doc["rooms"].append(
            {"id": r.id, "room_type": r.room_type, "floor_ids": list(r.floor_ids)}
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
