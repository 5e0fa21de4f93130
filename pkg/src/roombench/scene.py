"""Scene state: posed object instances, relation predicates, clusters,
and the versioned scene JSON format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import AssetCatalog, SurfaceSlot, default_catalog, part_world_boxes
from .errors import CyclicRelationError, SceneFormatError
from .geometry import (
    OrientedBox,
    RoomSpec,
    normalize_angle,
    obb_intersects,
    point_to_segment_distance,
)

# Relation vocabulary. Stacking kinds rest a child on a parent surface and
# are exempt from collision counting; stable kinds bind a child into its
# parent's movable cluster.
RELATION_KINDS = ("on_top_of", "against_wall", "front_against", "flush_wall", "on_surface_of")
STACKING_KINDS = frozenset({"on_top_of", "on_surface_of"})
STABLE_KINDS = frozenset({"on_top_of", "front_against", "on_surface_of"})
WALL_PARENT = "room-wall"

FRONT_AGAINST_REACH = 0.5  # facing ray must hit the parent within this range
FRONT_AGAINST_GAP = 0.1  # max footprint separation for front_against
AGAINST_WALL_GAP = 0.1  # max corner-to-wall distance for against_wall
FLUSH_WALL_GAP = 0.05  # max back-face-to-wall distance for flush_wall
FLUSH_WALL_ANGLE = math.radians(5.0)
STACK_Z_TOL = 1e-6


@dataclass(frozen=True)
class ObjectInstance:
    """A posed catalog asset. x/y locate the footprint center, z the
    resting plane (0 on the floor, parent surface height when stacked),
    yaw the facing direction (+x local)."""

    id: str
    category: str
    x: float
    y: float
    z: float
    yaw: float
    dims: tuple[float, float, float]
    relation_kind: str | None = None
    relation_parent: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def box(self) -> OrientedBox:
        dx, dy, dz = self.dims
        return OrientedBox(
            (self.x, self.y, self.z + dz / 2.0),
            (dx / 2.0, dy / 2.0, dz / 2.0),
            self.yaw,
        )

    @property
    def centroid(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z + self.dims[2] / 2.0)

    @property
    def top(self) -> float:
        return self.z + self.dims[2]

    def facing(self) -> tuple[float, float]:
        return (math.cos(self.yaw), math.sin(self.yaw))

    def part_boxes(self, catalog: AssetCatalog) -> list[OrientedBox]:
        return part_world_boxes(catalog.get(self.category), self.dims, self.x, self.y, self.z, self.yaw)


@dataclass
class Cluster:
    """A root instance plus the children transitively attached to it via
    stable relations, tracked with a root-aligned collective bounding box."""

    root: str
    children: list[str]
    collective_box: OrientedBox

    @property
    def members(self) -> list[str]:
        return [self.root, *self.children]


class SceneState:
    """Mutable container for one room's instances.

    Mutation goes through add/remove/replace so id allocation stays
    sequential and deterministic.
    """

    def __init__(self, room: RoomSpec, catalog: AssetCatalog | None = None):
        self.room = room
        self.catalog = catalog if catalog is not None else default_catalog()
        self.instances: dict[str, ObjectInstance] = {}
        self._id_counters: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.instances)

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self.instances

    def get(self, instance_id: str) -> ObjectInstance:
        try:
            return self.instances[instance_id]
        except KeyError:
            raise SceneFormatError(f"unknown instance id {instance_id!r}") from None

    def next_id(self, category: str) -> str:
        n = self._id_counters.get(category, 0)
        self._id_counters[category] = n + 1
        return f"{category}_{n:04d}"

    def peek_id(self, category: str) -> str:
        """The id next_id would hand out, without claiming it."""
        return f"{category}_{self._id_counters.get(category, 0):04d}"

    def add(self, instance: ObjectInstance) -> None:
        if instance.id in self.instances:
            raise SceneFormatError(f"duplicate instance id {instance.id!r}")
        self.instances[instance.id] = instance

    def remove(self, instance_id: str) -> ObjectInstance:
        return self.instances.pop(instance_id)

    def put(self, instance: ObjectInstance) -> None:
        """Replace an existing instance record in place (same id)."""
        if instance.id not in self.instances:
            raise SceneFormatError(f"unknown instance id {instance.id!r}")
        self.instances[instance.id] = instance

    def children_of(self, instance_id: str) -> list[str]:
        return [
            inst.id
            for inst in self.instances.values()
            if inst.relation_parent == instance_id and inst.relation_kind in STABLE_KINDS
        ]

    def by_category(self, category: str) -> list[ObjectInstance]:
        return [inst for inst in self.instances.values() if inst.category == category]

    def copy(self) -> "SceneState":
        dup = SceneState(self.room, self.catalog)
        dup.instances = dict(self.instances)
        dup._id_counters = dict(self._id_counters)
        return dup


# ---------------------------------------------------------------------------
# Relation predicates


def slot_world_height(parent: ObjectInstance, slot: SurfaceSlot) -> float:
    return parent.z + slot.height_fraction * parent.dims[2]


def slot_rect_local(parent: ObjectInstance, slot: SurfaceSlot) -> tuple[float, float, float, float]:
    """Slot rectangle (cx, cy, hx, hy) in the parent's local footprint frame."""
    pdx, pdy, _ = parent.dims
    return (
        slot.offset[0] * pdx,
        slot.offset[1] * pdy,
        slot.size[0] * pdx / 2.0,
        slot.size[1] * pdy / 2.0,
    )


def footprint_in_slot(child: ObjectInstance, parent: ObjectInstance, slot: SurfaceSlot, tol: float = 1e-6) -> bool:
    cx, cy, hx, hy = slot_rect_local(parent, slot)
    corners = child.box.footprint_corners()
    local = parent.box.to_local(corners)
    return bool(
        (np.abs(local[:, 0] - cx) <= hx + tol).all() and (np.abs(local[:, 1] - cy) <= hy + tol).all()
    )


def stacking_slots(catalog: AssetCatalog, parent: ObjectInstance, kind: str) -> list[SurfaceSlot]:
    spec = catalog.get(parent.category)
    if not spec.surface_slots:
        return []
    if kind == "on_top_of":
        return [spec.top_slot]
    return list(spec.surface_slots)


def stacked_on(child: ObjectInstance, parent: ObjectInstance, catalog: AssetCatalog, kind: str) -> bool:
    """Child rests on one of the parent's surface slots: resting plane at
    slot height and footprint within the slot rectangle."""
    for slot in stacking_slots(catalog, parent, kind):
        if abs(child.z - slot_world_height(parent, slot)) > STACK_Z_TOL:
            continue
        if slot.clear_height_fraction is not None:
            if child.dims[2] > slot.clear_height_fraction * parent.dims[2] + STACK_Z_TOL:
                continue
        if footprint_in_slot(child, parent, slot):
            return True
    return False


def _ray_hits_footprint(
    origin: tuple[float, float], direction: tuple[float, float], box: OrientedBox
) -> float | None:
    """Smallest t >= 0 where origin + t*direction enters the footprint, else None."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    ox = origin[0] - box.center[0]
    oy = origin[1] - box.center[1]
    lo_x = ox * c + oy * s
    lo_y = -ox * s + oy * c
    ld_x = direction[0] * c + direction[1] * s
    ld_y = -direction[0] * s + direction[1] * c
    hx, hy, _ = box.half_extents
    t0, t1 = -math.inf, math.inf
    for pos, vel, h in ((lo_x, ld_x, hx), (lo_y, ld_y, hy)):
        if abs(vel) < 1e-12:
            if abs(pos) > h:
                return None
            continue
        ta = (-h - pos) / vel
        tb = (h - pos) / vel
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if t0 > t1 or t1 < 0:
        return None
    return max(t0, 0.0)


def footprint_gap(a: OrientedBox, b: OrientedBox) -> float:
    """Minimum xy distance between two footprint rectangles (0 if they overlap)."""
    ca = a.footprint_corners()
    cb = b.footprint_corners()
    # SAT overlap check restricted to the plane
    overlapping = True
    for yaw in (a.yaw, b.yaw):
        c, s = math.cos(yaw), math.sin(yaw)
        for axis in ((c, s), (-s, c)):
            pa = ca @ axis
            pb = cb @ axis
            if min(pa.max(), pb.max()) - max(pa.min(), pb.min()) <= 0:
                overlapping = False
    if overlapping:
        return 0.0
    best = math.inf
    for corners, other in ((ca, cb), (cb, ca)):
        for p in corners:
            for i in range(4):
                q1 = other[i]
                q2 = other[(i + 1) % 4]
                best = min(best, point_to_segment_distance((p[0], p[1]), tuple(q1), tuple(q2)))
    return best


def front_against(child: ObjectInstance, parent: ObjectInstance) -> bool:
    """Child faces the parent: its +x ray reaches the parent's footprint
    within FRONT_AGAINST_REACH of its front face, and the footprints are
    separated by at most FRONT_AGAINST_GAP."""
    t = _ray_hits_footprint((child.x, child.y), child.facing(), parent.box)
    if t is None:
        return False
    if t - child.dims[0] / 2.0 > FRONT_AGAINST_REACH:
        return False
    return footprint_gap(child.box, parent.box) <= FRONT_AGAINST_GAP


def against_wall(child: ObjectInstance, room: RoomSpec) -> bool:
    corners = child.box.footprint_corners()
    return min(room.wall_distance(float(x), float(y)) for x, y in corners) <= AGAINST_WALL_GAP


def flush_wall(child: ObjectInstance, room: RoomSpec) -> bool:
    """Back face parallel to some wall edge (within FLUSH_WALL_ANGLE) and
    within FLUSH_WALL_GAP of it."""
    fx, fy = child.facing()
    back_mid = (child.x - fx * child.dims[0] / 2.0, child.y - fy * child.dims[0] / 2.0)
    for a, b in room.edges():
        ex, ey = b[0] - a[0], b[1] - a[1]
        norm = math.hypot(ex, ey)
        if norm < 1e-12:
            continue
        # CCW polygon: inward normal points left of the edge direction
        nx, ny = -ey / norm, ex / norm
        ang = abs(normalize_angle(math.atan2(fy, fx) - math.atan2(ny, nx)))
        if ang > FLUSH_WALL_ANGLE:
            continue
        if point_to_segment_distance(back_mid, a, b) <= FLUSH_WALL_GAP:
            return True
    return False


def relation_holds(scene: SceneState, child: ObjectInstance) -> bool:
    """Whether the child's recorded relation is geometrically satisfied."""
    kind = child.relation_kind
    if kind is None:
        return True
    if kind in ("against_wall", "flush_wall"):
        pred = against_wall if kind == "against_wall" else flush_wall
        return pred(child, scene.room)
    if child.relation_parent not in scene.instances:
        return False
    parent = scene.get(child.relation_parent)
    if kind in STACKING_KINDS:
        return stacked_on(child, parent, scene.catalog, kind)
    if kind == "front_against":
        return front_against(child, parent)
    return False


def relation_pair_holds(scene: SceneState, child: ObjectInstance, kind: str, parent: ObjectInstance) -> bool:
    """Geometric check of a specific (kind, parent) pair, recorded or not."""
    if kind in STACKING_KINDS:
        return stacked_on(child, parent, scene.catalog, kind)
    if kind == "front_against":
        return front_against(child, parent)
    return False


# ---------------------------------------------------------------------------
# Clusters


def _stable_parent(inst: ObjectInstance) -> str | None:
    if inst.relation_kind in STABLE_KINDS:
        return inst.relation_parent
    return None


def cluster_root_of(scene: SceneState, instance_id: str) -> str:
    """Follow stable-relation edges upward to the cluster root."""
    seen = set()
    current = instance_id
    while True:
        if current in seen:
            raise CyclicRelationError(f"relation cycle through {current!r}")
        seen.add(current)
        parent = _stable_parent(scene.get(current))
        if parent is None or parent not in scene.instances:
            return current
        current = parent


def collective_box(scene: SceneState, member_ids: list[str], root_id: str) -> OrientedBox:
    """Bounding box of all member boxes, aligned to the root's yaw."""
    root = scene.get(root_id)
    c, s = math.cos(root.yaw), math.sin(root.yaw)
    xs, ys, zs = [], [], []
    for mid in member_ids:
        box = scene.get(mid).box
        for px, py in box.footprint_corners():
            dx = px - root.x
            dy = py - root.y
            xs.append(dx * c + dy * s)
            ys.append(-dx * s + dy * c)
        zs.extend((box.bottom, box.top))
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    z0, z1 = min(zs), max(zs)
    lx = (x0 + x1) / 2.0
    ly = (y0 + y1) / 2.0
    center = (
        root.x + lx * c - ly * s,
        root.y + lx * s + ly * c,
        (z0 + z1) / 2.0,
    )
    half = (max((x1 - x0) / 2.0, 1e-9), max((y1 - y0) / 2.0, 1e-9), max((z1 - z0) / 2.0, 1e-9))
    return OrientedBox(center, half, root.yaw)


def identify_clusters(scene: SceneState) -> list[Cluster]:
    """Partition instances into clusters rooted at stable-relation sinks.

    Isolated instances (and instances related only to walls) form singleton
    clusters. Children keep scene insertion order. Raises on relation cycles.
    """
    roots: dict[str, list[str]] = {}
    for inst in scene.instances.values():
        root = cluster_root_of(scene, inst.id)
        roots.setdefault(root, [])
        if inst.id != root:
            roots[root].append(inst.id)
    clusters = []
    for inst_id in scene.instances:
        if inst_id in roots:
            members = [inst_id, *roots[inst_id]]
            clusters.append(Cluster(inst_id, roots[inst_id], collective_box(scene, members, inst_id)))
    return clusters


# ---------------------------------------------------------------------------
# Collision helpers


def is_stacking_pair(a: ObjectInstance, b: ObjectInstance) -> bool:
    """Direct parent-child pairs in a stacking relation rest by design."""
    return (
        (a.relation_kind in STACKING_KINDS and a.relation_parent == b.id)
        or (b.relation_kind in STACKING_KINDS and b.relation_parent == a.id)
    )


def colliding_pairs(scene: SceneState) -> list[tuple[str, str]]:
    """All unordered instance pairs in collision, stacking contacts exempt."""
    out = []
    items = list(scene.instances.values())
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            a, b = items[i], items[j]
            if is_stacking_pair(a, b):
                continue
            if obb_intersects(a.box, b.box):
                out.append(tuple(sorted((a.id, b.id))))
    return sorted(out)


# ---------------------------------------------------------------------------
# Serialization (schema scene/1)


def room_to_json(room: RoomSpec) -> dict:
    return {
        "floor_polygon": [[float(x), float(y)] for x, y in room.floor_polygon],
        "wall_height": float(room.wall_height),
        "door_position": [float(room.door_position[0]), float(room.door_position[1])],
    }


def room_from_json(data: dict) -> RoomSpec:
    return RoomSpec(
        tuple((float(x), float(y)) for x, y in data["floor_polygon"]),
        float(data["wall_height"]),
        (float(data["door_position"][0]), float(data["door_position"][1])),
    )


def instance_to_json(inst: ObjectInstance) -> dict:
    rel = None
    if inst.relation_kind is not None:
        rel = {"kind": inst.relation_kind, "parent": inst.relation_parent}
    return {
        "id": inst.id,
        "category": inst.category,
        "pose": {"x": float(inst.x), "y": float(inst.y), "z": float(inst.z), "yaw": float(inst.yaw)},
        "dims": [float(d) for d in inst.dims],
        "relation": rel,
    }


def scene_to_json(scene: SceneState) -> dict:
    clusters = identify_clusters(scene)
    return {
        "schema": "scene/1",
        "room": room_to_json(scene.room),
        "instances": [instance_to_json(inst) for inst in scene.instances.values()],
        "clusters": [
            {
                "root": c.root,
                "children": list(c.children),
                "collective_box": {
                    "center": [float(v) for v in c.collective_box.center],
                    "half_extents": [float(v) for v in c.collective_box.half_extents],
                    "yaw": float(c.collective_box.yaw),
                },
            }
            for c in clusters
        ],
    }


def scene_from_json(data: dict, catalog: AssetCatalog | None = None) -> SceneState:
    if data.get("schema") != "scene/1":
        raise SceneFormatError(f"unsupported scene schema {data.get('schema')!r}")
    scene = SceneState(room_from_json(data["room"]), catalog)
    for rec in data["instances"]:
        rel = rec.get("relation") or {}
        pose = rec["pose"]
        inst = ObjectInstance(
            id=rec["id"],
            category=rec["category"],
            x=float(pose["x"]),
            y=float(pose["y"]),
            z=float(pose["z"]),
            yaw=float(pose["yaw"]),
            dims=tuple(float(d) for d in rec["dims"]),
            relation_kind=rel.get("kind"),
            relation_parent=rel.get("parent"),
        )
        scene.add(inst)
        cat, _, num = inst.id.rpartition("_")
        if cat and num.isdigit():
            self_n = int(num) + 1
            if self_n > scene._id_counters.get(cat, 0):
                scene._id_counters[cat] = self_n
    return scene
