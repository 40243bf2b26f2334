"""Object matching, the nine scene metrics, and per-scene aggregation.

Fidelity metrics (CNT, ATR, OOR, OAR) check annotated constraints through
the category assignment produced by the judge; plausibility metrics (COL,
SUP, NAV, ACC, OOB) check physical common sense from geometry alone (SUP
and ACC consume judge verdicts for support types and functional sides).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .annotations import (
    ARCH_REFS,
    DatasetEntry,
    OARelationSpec,
    check_quantifier,
    normalize_room_token,
    serialize_spec,
)
from .geometry import (
    GeometrySet,
    cells_in_rect,
    closest_surface_distance,
    derive_seed,
    flood_components,
    floor_cover_mask,
    mesh_pair_intersects,
    ray_hit_fraction,
    ray_mesh_distances,
    rasterize_triangles_2d,
    sample_mesh_surface,
    sample_points_obb,
    support_hull_check,
    _grid_for_floors,
)
from .judge import (
    ArchMapping,
    Judge,
    JudgeError,
    JudgeRequest,
    RelationMapping,
    oa_mapping_from_response,
    oo_mapping_from_response,
    transcript_hash,
)
from .relations import (
    DISTANCE_BANDS,
    RelationScore,
    SideSpec,
    count_satisfied,
    score_containment,
    score_face,
    score_middle_of,
    score_object_distance,
    score_room_relation,
    score_side_family,
    score_surround,
    score_wall_relation,
)
from .scene import ObjectInstance, SceneInstance

logger = logging.getLogger(__name__)

ROOM_RELATIONS = ("inside_room", "middle_room", "corner_room")
WALL_RELATIONS = ("on_wall", "against_wall")
OOB_HIT_THRESHOLD = 0.99
SUPPORT_CONTACT_DISTANCE = 0.01  # meters; ray contacts count within this
SUPPORT_VERTEX_TOLERANCE = 0.01  # verts this close to the extreme cast rays
RAY_ORIGIN_BACKOFF = 1e-6


@dataclass
class EvalConfig:
    resolution: float = 0.05          # occupancy cell size, meters
    samples: int = 1000               # points per box/surface sample
    seed: int = 0
    acc_probe_depth: float = 0.5      # meters of clearance probed per side
    surround_tuple_cap: int = 10000   # combination cap per relation spec
    exempt_nonfloor_support_from_oob: bool = False


@dataclass(frozen=True)
class CategoryAssignment:
    """Many-to-one mapping from scene object instances to annotated categories."""

    by_category: dict       # category -> list of object ids (possibly empty)
    unmatched_objects: tuple

    def instances(self, category: str) -> list[str]:
        return list(self.by_category.get(category, []))


@dataclass(frozen=True)
class SpecResult:
    spec: str               # serialized annotation line
    passed: bool
    satisfied_count: int = 0
    candidate_count: int = 0
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "passed": self.passed,
            "satisfied_count": self.satisfied_count,
            "candidate_count": self.candidate_count,
            "reason": self.reason,
        }


def percent_passed(results) -> float | None:
    if not results:
        return None
    return 100.0 * sum(r.passed for r in results) / len(results)


class _RecordingJudge(Judge):
    """Wraps a judge, recording this evaluation's (hash, response) pairs."""

    def __init__(self, inner: Judge):
        self.inner = inner
        self.responses: dict[str, dict] = {}

    def judge(self, request: JudgeRequest) -> dict:
        response = self.inner.judge(request)
        self.responses[request.content_hash] = response
        return response


# ---------------------------------------------------------------------------
# Object matching
# ---------------------------------------------------------------------------


def match_objects(scene: SceneInstance, categories, judge: Judge) -> CategoryAssignment:
    """One judge call per object against the full category list."""
    categories = list(dict.fromkeys(categories))
    by_category = {c: [] for c in categories}
    unmatched = []
    for obj in scene.objects:
        request = JudgeRequest(
            task="match_category",
            payload={"object_description": obj.description, "categories": categories},
            image_refs=_image_refs(obj, "front"),
        )
        try:
            response = judge.judge(request)
        except JudgeError as exc:
            raise JudgeError(f"object '{obj.id}': {exc}", exc.request_hash) from exc
        if response["matched"]:
            by_category[response["matched_category"]].append(obj.id)
        else:
            unmatched.append(obj.id)
    return CategoryAssignment(by_category=by_category, unmatched_objects=tuple(unmatched))


def _image_refs(obj: ObjectInstance, *names) -> tuple:
    refs = [obj.image_refs[n] for n in names if n in obj.image_refs]
    return tuple(refs)


# ---------------------------------------------------------------------------
# Fidelity metrics
# ---------------------------------------------------------------------------


def eval_count(assignment: CategoryAssignment, count_specs) -> list[SpecResult]:
    results = []
    for spec in count_specs:
        actual = len(assignment.instances(spec.category))
        results.append(
            SpecResult(
                spec=serialize_spec(spec),
                passed=check_quantifier(spec.quantifier, spec.quantity, actual),
                satisfied_count=actual,
                candidate_count=actual,
            )
        )
    return results


def eval_attribute(
    scene: SceneInstance, assignment: CategoryAssignment, attr_specs, judge: Judge
) -> list[SpecResult]:
    """Judge-verified attributes per matched instance, quantified per spec.

    A spec whose category has no matched instances is automatically
    unsatisfied.
    """
    results = []
    for spec in attr_specs:
        line = serialize_spec(spec)
        instance_ids = assignment.instances(spec.category)
        if not instance_ids:
            results.append(SpecResult(line, False, reason="no matched instances"))
            continue
        satisfied = 0
        for obj_id in instance_ids:
            obj = scene.object_by_id(obj_id)
            response = judge.judge(
                JudgeRequest(
                    task="verify_attribute",
                    payload={
                        "object_description": obj.description,
                        "category": spec.category,
                        "attribute": spec.attribute,
                    },
                    image_refs=_image_refs(obj, "front", "scale"),
                )
            )
            satisfied += bool(response["satisfied"])
        results.append(
            SpecResult(
                line,
                check_quantifier(spec.quantifier, spec.quantity, satisfied),
                satisfied_count=satisfied,
                candidate_count=len(instance_ids),
            )
        )
    return results


class _SampleCache:
    def __init__(self, scene: SceneInstance, config: EvalConfig):
        self.scene = scene
        self.config = config
        self._points: dict[str, np.ndarray] = {}

    def points(self, obj: ObjectInstance) -> np.ndarray:
        if obj.id not in self._points:
            seed = derive_seed(self.config.seed, "box", obj.id)
            self._points[obj.id] = sample_points_obb(obj.obb, self.config.samples, seed).points
        return self._points[obj.id]


def _score_oo_pair(
    target: ObjectInstance,
    anchor: ObjectInstance,
    relation: str,
    side,
    samples: np.ndarray,
) -> RelationScore:
    if relation in DISTANCE_BANDS:
        return score_object_distance(target, anchor, relation)
    if relation in ("inside", "outside"):
        return score_containment(target.obb, anchor.obb, relation, samples)
    if relation == "face":
        return score_face(target, anchor, samples)
    if relation == "side_of":
        return score_side_family(samples, anchor, SideSpec(side, "side_of"))
    if relation == "side_region":
        return score_side_family(samples, anchor, SideSpec(side, "side_region"))
    if relation == "on_top":
        return score_side_family(samples, anchor, SideSpec("top", "on_top"))
    if relation == "long_short_side":
        return score_side_family(samples, anchor, SideSpec(side, "long_short"))
    if relation == "middle_of":
        return score_middle_of(target.obb, anchor.obb)
    raise ValueError(f"unknown object-object relation '{relation}'")


def _oo_tuples(assignment: CategoryAssignment, mapping: RelationMapping, cap: int):
    """All combinations of matched instances for the mapping's categories.

    Yields (anchor_id, [target_id, ...]) with targets flattened across the
    mapping's other categories, up to `cap` tuples.
    """
    anchors = assignment.instances(mapping.anchor_category)
    per_category = []
    for cat, count in zip(mapping.other_categories, mapping.other_counts):
        ids = assignment.instances(cat)
        if len(ids) < count:
            return  # not enough instances: no candidate tuples
        per_category.append(list(itertools.combinations(ids, count)))
    produced = 0
    for anchor_id in anchors:
        for chosen in itertools.product(*per_category):
            group = [i for combo in chosen for i in combo if i != anchor_id]
            if not group:
                continue
            if produced >= cap:
                logger.warning(
                    "relation '%s': combination cap %d reached, truncating",
                    mapping.relation_text,
                    cap,
                )
                return
            produced += 1
            yield anchor_id, group


def eval_oo(
    scene: SceneInstance,
    assignment: CategoryAssignment,
    oo_specs,
    judge: Judge,
    config: EvalConfig,
) -> list[SpecResult]:
    cache = _SampleCache(scene, config)
    results = []
    for spec in oo_specs:
        line = serialize_spec(spec)
        other_counts = spec.other_category_counts()
        response = judge.judge(
            JudgeRequest(
                task="map_oo_relation",
                payload={
                    "relation_text": spec.relation_text,
                    "anchor_category": spec.anchor_category,
                    "other_categories": [c for c, _ in other_counts],
                    "other_counts": [n for _, n in other_counts],
                },
            )
        )
        mapping = oo_mapping_from_response(spec.relation_text, response)
        if mapping.unmappable:
            results.append(
                SpecResult(line, False, reason=f"unmappable relation: {mapping.reason}")
            )
            continue
        involved = [mapping.anchor_category, *mapping.other_categories]
        empty = [c for c in involved if not assignment.instances(c)]
        if empty:
            results.append(
                SpecResult(line, False, reason=f"no matched instances for {empty}")
            )
            continue

        def scorer(tup):
            anchor_id, group_ids = tup
            anchor = scene.object_by_id(anchor_id)
            group = [scene.object_by_id(i) for i in group_ids]
            scores = []
            for relation, side in zip(mapping.mapped_types, mapping.sides):
                if relation == "surround":
                    if len(group) < 2:
                        scores.append(RelationScore(0.0))
                        continue
                    s, _ = score_surround(anchor.obb, [g.obb for g in group])
                    scores.append(s)
                else:
                    try:
                        member_scores = [
                            _score_oo_pair(g, anchor, relation, side, cache.points(g))
                            for g in group
                        ]
                    except ValueError:  # e.g. frontless target in a face relation
                        scores.append(RelationScore(0.0))
                        continue
                    scores.append(min(member_scores, key=lambda s: s.value))
            return scores

        sat = count_satisfied(
            spec.quantifier,
            spec.quantity,
            _oo_tuples(assignment, mapping, config.surround_tuple_cap),
            scorer,
        )
        results.append(
            SpecResult(
                line,
                sat.passed,
                satisfied_count=sat.satisfied_count,
                candidate_count=sat.candidate_count,
            )
        )
    return results


def _qualifying_rooms(scene: SceneInstance, spec: OARelationSpec, mapping: ArchMapping):
    rooms = list(scene.rooms)
    if mapping.specific_floors:
        wanted = set(mapping.specific_floors)
        rooms = [r for r in rooms if wanted & set(r.floor_ids)]
    if spec.arch_ref not in ARCH_REFS:  # room-type reference such as "bedroom"
        wanted_type = normalize_room_token(spec.arch_ref)
        rooms = [r for r in rooms if normalize_room_token(r.room_type) == wanted_type]
    return rooms


def eval_oa(
    scene: SceneInstance,
    assignment: CategoryAssignment,
    oa_specs,
    judge: Judge,
    config: EvalConfig,
) -> list[SpecResult]:
    cache = _SampleCache(scene, config)
    floor_ids = [f.id for f in scene.floors]
    results = []
    for spec in oa_specs:
        line = serialize_spec(spec)
        response = judge.judge(
            JudgeRequest(
                task="map_oa_relation",
                payload={
                    "relation_text": spec.relation_text,
                    "category": spec.category,
                    "arch_ref": spec.arch_ref,
                    "floor_ids": floor_ids,
                },
            )
        )
        mapping = oa_mapping_from_response(spec.relation_text, response)
        if mapping.mapped_type is None:
            results.append(
                SpecResult(line, False, reason=f"unmappable relation: {mapping.reason}")
            )
            continue
        instance_ids = assignment.instances(spec.category)
        if not instance_ids:
            results.append(SpecResult(line, False, reason="no matched instances"))
            continue
        relation = mapping.mapped_type

        if relation in ROOM_RELATIONS:
            elements = _qualifying_rooms(scene, spec, mapping)
        elif relation in WALL_RELATIONS:
            elements = scene.walls
        elif relation == "hang_ceiling":
            elements = scene.ceilings
        else:  # distance relation against a named element kind
            kind = mapping.arch_type
            if kind == "room":
                elements = _qualifying_rooms(scene, spec, mapping)
            elif kind == "floor" and mapping.specific_floors:
                elements = [scene.arch_by_id(i) for i in mapping.specific_floors]
            else:
                elements = scene.arch_of_kind(kind)
        if not elements:
            results.append(
                SpecResult(
                    line, False,
                    reason=f"no {mapping.arch_type} elements for relation '{relation}'",
                )
            )
            continue

        def scorer(tup):
            obj_id, element = tup
            obj = scene.object_by_id(obj_id)
            try:
                if relation in ROOM_RELATIONS:
                    return [
                        score_room_relation(obj, element, relation, scene, cache.points(obj))
                    ]
                if relation in WALL_RELATIONS:
                    return [score_wall_relation(obj, element, relation, cache.points(obj))]
                if relation == "hang_ceiling":
                    return [score_wall_relation(obj, element, relation)]
                if hasattr(element, "floor_ids"):  # distance to a room: nearest floor
                    d = min(
                        closest_surface_distance(obj.world_mesh, f.mesh)
                        for f in scene.room_floors(element)
                    )
                    return [RelationScore(DISTANCE_BANDS[relation].score(d))]
                return [score_object_distance(obj, element, relation)]
            except ValueError as exc:
                logger.warning("spec '%s': %s", line, exc)
                return [RelationScore(0.0)]

        pairs = [(i, e) for i in instance_ids for e in elements]
        sat = count_satisfied(spec.quantifier, spec.quantity, pairs, scorer)
        results.append(
            SpecResult(
                line,
                sat.passed,
                satisfied_count=sat.satisfied_count,
                candidate_count=sat.candidate_count,
            )
        )
    return results


# ---------------------------------------------------------------------------
# Plausibility metrics
# ---------------------------------------------------------------------------


def eval_collision(scene: SceneInstance):
    """All-pairs mesh collision: (% objects in collision, any-collision, pairs)."""
    colliding_pairs = []
    in_collision = set()
    objs = scene.objects
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            if mesh_pair_intersects(objs[i].world_mesh, objs[j].world_mesh):
                colliding_pairs.append((objs[i].id, objs[j].id))
                in_collision.add(objs[i].id)
                in_collision.add(objs[j].id)
    col_ob = 100.0 * len(in_collision) / len(objs) if objs else 0.0
    return col_ob, bool(colliding_pairs), colliding_pairs


_SUPPORT_LOCAL_DIRECTIONS = {
    "ground": np.array([0.0, 0.0, -1.0]),
    "object": np.array([0.0, 0.0, -1.0]),
    "ceiling": np.array([0.0, 0.0, 1.0]),
}


def support_direction(obj: ObjectInstance, support_type: str) -> np.ndarray:
    """World-frame support direction: down for ground/object, up for ceiling,
    backward (opposite the front axis) for wall-mounted objects."""
    if support_type == "wall":
        local = -(obj.front_axis if obj.front_axis is not None else np.array([0.0, 1.0, 0.0]))
    else:
        local = _SUPPORT_LOCAL_DIRECTIONS[support_type]
    d = obj.rotation @ local
    return d / np.linalg.norm(d)


def support_contacts(
    scene: SceneInstance, obj: ObjectInstance, direction: np.ndarray
) -> np.ndarray:
    """Ray contacts within 1 cm, cast from the mesh vertices nearest the direction."""
    verts = obj.world_mesh.vertices
    proj = verts @ direction
    support_verts = verts[proj >= proj.max() - SUPPORT_VERTEX_TOLERANCE]
    others = GeometrySet(
        [(o.id, o.world_mesh) for o in scene.objects if o.id != obj.id]
        + [(a.id, a.mesh) for a in scene.architecture]
    )
    if len(others) == 0:
        return np.zeros((0, 3))
    origins = support_verts - direction * RAY_ORIGIN_BACKOFF
    ts = ray_mesh_distances(origins, direction, others.triangles)
    contact = (ts - RAY_ORIGIN_BACKOFF) <= SUPPORT_CONTACT_DISTANCE
    return origins[contact] + ts[contact, None] * direction


def eval_support(scene: SceneInstance, judge: Judge):
    """Per-object stable support: (% supported or None, verdicts, support types)."""
    verdicts = {}
    types = {}
    for obj in scene.objects:
        response = judge.judge(
            JudgeRequest(
                task="support_type",
                payload={"object_description": obj.description},
                image_refs=_image_refs(obj, "front", "context"),
            )
        )
        support_type = response["support_type"]
        types[obj.id] = support_type
        direction = support_direction(obj, support_type)
        contacts = support_contacts(scene, obj, direction)
        if support_type in ("wall", "ceiling"):
            verdicts[obj.id] = len(contacts) > 0
        else:
            verdicts[obj.id] = support_hull_check(contacts[:, :2], obj.obb.center[:2])
    percent = 100.0 * sum(verdicts.values()) / len(verdicts) if verdicts else None
    return percent, verdicts, types


def eval_navigability(scene: SceneInstance, resolution: float):
    """Largest free component over total free cells; 0 when nothing is free."""
    mask = scene.occupancy(resolution)
    sizes = flood_components(mask)
    total = sum(sizes)
    if total == 0:
        return 0.0, {"largest": 0, "total_free": 0, "degenerate": True}
    return sizes[0] / total, {"largest": sizes[0], "total_free": total, "degenerate": False}


def _front_axes_2d(obj: ObjectInstance):
    front_local = obj.front_axis if obj.front_axis is not None else np.array([0.0, 1.0, 0.0])
    f = obj.rotation @ front_local
    f2 = f[:2]
    if np.linalg.norm(f2) < 1e-6:
        f2 = (obj.rotation @ np.array([0.0, 1.0, 0.0]))[:2]
    if np.linalg.norm(f2) < 1e-6:
        f2 = np.array([0.0, 1.0])
    f2 = f2 / np.linalg.norm(f2)
    r2 = np.array([f2[1], -f2[0]])  # front x up
    return r2, f2


class _OccupancyParts:
    """Static occupancy plus per-object footprints, for leave-one-out masks."""

    def __init__(self, scene: SceneInstance, resolution: float):
        floors = [f.mesh for f in scene.floors]
        if not floors:
            raise ValueError("accessibility needs at least one floor")
        self.resolution = resolution
        self.origin, self.shape = _grid_for_floors(floors, resolution)
        static = ~floor_cover_mask(floors, self.origin, resolution, self.shape)
        walls = [w.mesh for w in scene.walls]
        if walls:
            tris = np.concatenate([m.triangles[:, :, :2] for m in walls])
            static |= rasterize_triangles_2d(tris, self.origin, resolution, self.shape)
        self.static = static
        self.object_grids = {
            o.id: rasterize_triangles_2d(
                o.world_mesh.triangles[:, :, :2], self.origin, resolution, self.shape
            )
            for o in scene.objects
        }
        counts = np.zeros(self.shape, dtype=np.int32)
        for grid in self.object_grids.values():
            counts += grid
        self.counts = counts

    def occupied_without(self, obj_id: str) -> np.ndarray:
        counts = self.counts - self.object_grids[obj_id]
        return self.static | (counts > 0)

    def mask_like(self):
        from .geometry import OccupancyMask

        return OccupancyMask(self.resolution, self.origin, np.zeros(self.shape, dtype=bool))


def side_band_score(
    parts: _OccupancyParts, obj: ObjectInstance, side: str, depth: float
) -> float:
    """Free fraction of the probe band outside one lateral side of the object."""
    r2, f2 = _front_axes_2d(obj)
    center = obj.obb.center[:2]
    rel = obj.obb.corners()[:, :2] - center
    e_r = float(np.abs(rel @ r2).max())
    e_f = float(np.abs(rel @ f2).max())
    half = depth / 2.0
    if side == "front":
        band_center, half_sizes = center + f2 * (e_f + half), (e_r, half)
    elif side == "back":
        band_center, half_sizes = center - f2 * (e_f + half), (e_r, half)
    elif side == "right":
        band_center, half_sizes = center + r2 * (e_r + half), (half, e_f)
    elif side == "left":
        band_center, half_sizes = center - r2 * (e_r + half), (half, e_f)
    else:
        raise ValueError(f"not a lateral side: '{side}'")
    band = cells_in_rect(parts.mask_like(), band_center, (r2, f2), half_sizes)
    total = int(band.sum())
    if total == 0:
        return 1.0  # band thinner than a cell: nothing can block it
    occupied = parts.occupied_without(obj.id)
    return float((band & ~occupied).sum() / total)


def eval_accessibility(scene: SceneInstance, judge: Judge, config: EvalConfig):
    """Best free-side fraction per object; objects with no functional sides
    are excluded from the mean."""
    parts = _OccupancyParts(scene, config.resolution)
    scores = {}
    sides_by_object = {}
    for obj in scene.objects:
        response = judge.judge(
            JudgeRequest(
                task="functional_sides",
                payload={"object_description": obj.description},
            )
        )
        sides = response["sides"]
        sides_by_object[obj.id] = sides
        if not sides:
            scores[obj.id] = None
            continue
        scores[obj.id] = max(
            side_band_score(parts, obj, side, config.acc_probe_depth) for side in sides
        )
    scored = [v for v in scores.values() if v is not None]
    mean = sum(scored) / len(scored) if scored else None
    return scores, mean, sides_by_object


def classify_out_of_bounds(hit_fraction: float, threshold: float = OOB_HIT_THRESHOLD) -> bool:
    """Out of bounds when fewer than `threshold` of surface rays hit the floor."""
    return hit_fraction < threshold


def oob_hit_fraction(points: np.ndarray, floor_triangles: np.ndarray) -> float:
    return ray_hit_fraction(points, np.array([0.0, 0.0, -1.0]), floor_triangles)


def eval_oob(scene: SceneInstance, config: EvalConfig, support_types=None):
    """Surface-sampled downward-ray bounds test per object."""
    if not scene.floors:
        raise ValueError("out-of-bounds needs at least one floor")
    floor_tris = np.concatenate([f.mesh.triangles for f in scene.floors])
    flags = {}
    for obj in scene.objects:
        if (
            config.exempt_nonfloor_support_from_oob
            and support_types
            and support_types.get(obj.id) in ("wall", "ceiling")
        ):
            continue
        seed = derive_seed(config.seed, "oob", obj.id)
        pts = sample_mesh_surface(obj.world_mesh, config.samples, seed).points
        flags[obj.id] = classify_out_of_bounds(oob_hit_fraction(pts, floor_tris))
    percent = 100.0 * sum(flags.values()) / len(flags) if flags else None
    return percent, flags


# ---------------------------------------------------------------------------
# Whole-scene evaluation
# ---------------------------------------------------------------------------


@dataclass
class SceneReport:
    scene_id: str
    entry_id: str
    difficulty: str
    cnt: list = field(default_factory=list)
    atr: list = field(default_factory=list)
    oor: list = field(default_factory=list)
    oar: list = field(default_factory=list)
    col_ob: float | None = None
    col_sc: bool | None = None
    colliding_pairs: list = field(default_factory=list)
    sup: float | None = None
    sup_verdicts: dict = field(default_factory=dict)
    nav: float | None = None
    nav_detail: dict = field(default_factory=dict)
    acc: float | None = None
    acc_scores: dict = field(default_factory=dict)
    oob: float | None = None
    oob_flags: dict = field(default_factory=dict)
    unmatched_objects: tuple = ()
    seed: int = 0
    samples: int = 0
    resolution: float = 0.0
    judge_transcript_hash: str = ""
    errors: dict = field(default_factory=dict)

    @property
    def cnt_percent(self):
        return percent_passed(self.cnt)

    @property
    def atr_percent(self):
        return percent_passed(self.atr)

    @property
    def oor_percent(self):
        return percent_passed(self.oor)

    @property
    def oar_percent(self):
        return percent_passed(self.oar)

    def metric_values(self) -> dict:
        """Scalar metric values in report column order; None where undefined."""
        return {
            "cnt": self.cnt_percent,
            "atr": self.atr_percent,
            "oor": self.oor_percent,
            "oar": self.oar_percent,
            "col_ob": self.col_ob,
            "col_sc": None if self.col_sc is None else float(self.col_sc),
            "sup": self.sup,
            "nav": self.nav,
            "acc": self.acc,
            "oob": self.oob,
        }

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "entry_id": self.entry_id,
            "difficulty": self.difficulty,
            "metrics": self.metric_values(),
            "specs": {
                "cnt": [r.to_dict() for r in self.cnt],
                "atr": [r.to_dict() for r in self.atr],
                "oor": [r.to_dict() for r in self.oor],
                "oar": [r.to_dict() for r in self.oar],
            },
            "colliding_pairs": [list(p) for p in self.colliding_pairs],
            "sup_verdicts": dict(sorted(self.sup_verdicts.items())),
            "nav_detail": self.nav_detail,
            "acc_scores": dict(sorted(self.acc_scores.items())),
            "oob_flags": dict(sorted(self.oob_flags.items())),
            "unmatched_objects": sorted(self.unmatched_objects),
            "config": {
                "seed": self.seed,
                "samples": self.samples,
                "resolution": self.resolution,
            },
            "judge_transcript_hash": self.judge_transcript_hash,
            "errors": dict(sorted(self.errors.items())),
        }


def evaluate_scene(
    scene: SceneInstance,
    entry: DatasetEntry,
    judge: Judge,
    config: EvalConfig | None = None,
) -> SceneReport:
    """Run matching then all nine metrics; per-metric errors are recorded
    without aborting the rest."""
    config = config or EvalConfig()
    recording = _RecordingJudge(judge)
    report = SceneReport(
        scene_id=scene.manifest_path.parent.name if scene.manifest_path else entry.id,
        entry_id=entry.id,
        difficulty=entry.difficulty,
        seed=config.seed,
        samples=config.samples,
        resolution=config.resolution,
    )

    assignment = None
    try:
        assignment = match_objects(scene, entry.count_categories(), recording)
        report.unmatched_objects = assignment.unmatched_objects
    except JudgeError as exc:
        report.errors["matching"] = str(exc)

    if assignment is not None:
        for name, runner in (
            ("cnt", lambda: eval_count(assignment, entry.counts)),
            ("atr", lambda: eval_attribute(scene, assignment, entry.attributes, recording)),
            ("oor", lambda: eval_oo(scene, assignment, entry.oo_relations, recording, config)),
            ("oar", lambda: eval_oa(scene, assignment, entry.oa_relations, recording, config)),
        ):
            try:
                setattr(report, name, runner())
            except (JudgeError, ValueError) as exc:
                report.errors[name] = str(exc)

    try:
        report.col_ob, report.col_sc, report.colliding_pairs = eval_collision(scene)
    except ValueError as exc:
        report.errors["col"] = str(exc)
    try:
        report.sup, report.sup_verdicts, support_types = eval_support(scene, recording)
    except (JudgeError, ValueError) as exc:
        support_types = None
        report.errors["sup"] = str(exc)
    try:
        report.nav, report.nav_detail = eval_navigability(scene, config.resolution)
    except ValueError as exc:
        report.errors["nav"] = str(exc)
    try:
        report.acc_scores, report.acc, _ = eval_accessibility(scene, recording, config)
    except (JudgeError, ValueError) as exc:
        report.errors["acc"] = str(exc)
    try:
        report.oob, report.oob_flags = eval_oob(scene, config, support_types)
    except ValueError as exc:
        report.errors["oob"] = str(exc)

    report.judge_transcript_hash = transcript_hash(recording.responses)
    return report
