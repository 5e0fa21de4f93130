"""Layout optimization: simulated annealing over an action space with
instance-level moves, relation rewiring, and rigid cluster moves.

Hard feasibility (no collisions, nothing out of the room, recorded
relations geometrically valid) is maintained transactionally: a proposal
that would break it is reverted before it ever touches the scene. The
annealer therefore only walks feasible states and optimizes constraint
satisfaction plus the weighted score terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .catalog import AssetCatalog, SurfaceSlot, default_catalog
from .constraints import (
    OCCUPANCY_PENALTY_SCALE,
    ConstraintProgram,
    SatisfactionReport,
    SemanticSelector,
    evaluate_constraints,
    evaluate_score,
)
from .errors import LayoutActionError
from .geometry import (
    OrientedBox,
    RoomSpec,
    contained_in_room,
    make_grid_spec,
    obb_intersects,
    point_in_polygon,
    point_to_segment_distance,
)
from .raster import BEV_RESOLUTION, footprint_cell_indices
from .scene import (
    STABLE_KINDS,
    ObjectInstance,
    SceneState,
    is_stacking_pair,
    relation_holds,
    slot_rect_local,
    slot_world_height,
    stacked_on,
    stacking_slots,
)

ACTION_KINDS = (
    "add",
    "delete",
    "resample",
    "translate",
    "rotate",
    "change_relation_plane",
    "change_relation_target",
    "swap",
    "resample_cluster",
    "translate_cluster",
    "rotate_cluster",
)

INSTANCE_KINDS = tuple(k for k in ACTION_KINDS if not k.endswith("_cluster"))

# Constraint misses dominate the soft score by this factor in the energy.
PENALTY_WEIGHT = 1000.0

TRANSLATE_SIGMA = 0.45  # meters
ROTATE_SIGMA = 0.5  # radians
PLACEMENT_TRIES = 8  # samples per add/re-seat proposal

# Footprints must stay this far from the door so a camera can enter the room.
DOOR_CLEARANCE = 0.75  # meters


@dataclass
class Action:
    kind: str
    target: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise LayoutActionError(f"unknown action kind {self.kind!r}")


@dataclass
class ActionOutcome:
    committed: bool
    reason: str = ""


@dataclass
class OptimizerSchedule:
    max_steps: int = 20000
    initial_temperature: float = 5.0
    cooling_factor: float = 0.9995
    action_probabilities: dict[str, float] | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.cooling_factor < 1.0:
            raise ValueError("cooling_factor must lie in (0,1)")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")

    def probabilities(self, kinds: tuple[str, ...], delete_bias: float = 0.0) -> np.ndarray:
        base = self.action_probabilities or {}
        probs = np.array([base.get(k, 1.0) for k in kinds], dtype=float)
        if "delete" in kinds and delete_bias > 0.0:
            probs[kinds.index("delete")] += delete_bias * probs.sum()
        total = probs.sum()
        if total <= 0:
            raise ValueError("action probabilities sum to zero")
        return probs / total


@dataclass
class LayoutResult:
    scene: SceneState
    report: SatisfactionReport
    penalty: float
    score: float
    steps_used: int
    feasible: bool


# ---------------------------------------------------------------------------
# Proposals: each action becomes (updates, deletes, rigid) where updates maps
# instance ids to their new records (including additions) and rigid marks
# transforms that preserve all member-relative poses.


@dataclass
class _Proposal:
    updates: dict[str, ObjectInstance] = field(default_factory=dict)
    deletes: set[str] = field(default_factory=set)
    added: list[str] = field(default_factory=list)
    rigid: bool = False


def _subtree_ids(scene: SceneState, root_id: str) -> list[str]:
    """The instance plus its stable descendants, in scene order."""
    keep = {root_id}
    changed = True
    while changed:
        changed = False
        for inst in scene.instances.values():
            if inst.id in keep:
                continue
            if inst.relation_kind in STABLE_KINDS and inst.relation_parent in keep:
                keep.add(inst.id)
                changed = True
    return [i for i in scene.instances if i in keep]


def _rigid_transform(
    insts: list[ObjectInstance],
    pivot: tuple[float, float],
    delta_yaw: float,
    delta_pos: tuple[float, float],
) -> dict[str, ObjectInstance]:
    c, s = math.cos(delta_yaw), math.sin(delta_yaw)
    out = {}
    for inst in insts:
        dx = inst.x - pivot[0]
        dy = inst.y - pivot[1]
        out[inst.id] = replace(
            inst,
            x=pivot[0] + dx * c - dy * s + delta_pos[0],
            y=pivot[1] + dx * s + dy * c + delta_pos[1],
            yaw=inst.yaw + delta_yaw,
        )
    return out


def _reseat_descendants(
    scene: SceneState,
    proposal: _Proposal,
    parent: ObjectInstance,
    catalog: AssetCatalog,
) -> bool:
    """After a parent's dims changed, re-pin stacked children to their slot
    heights. Returns False when a child no longer sits on any slot."""
    for child_id in scene.children_of(parent.id):
        child = proposal.updates.get(child_id, scene.get(child_id))
        if child.relation_kind not in ("on_top_of", "on_surface_of"):
            continue
        seated = False
        for slot in stacking_slots(catalog, parent, child.relation_kind):
            new_child = replace(child, z=slot_world_height(parent, slot))
            if stacked_on(new_child, parent, catalog, child.relation_kind):
                proposal.updates[child_id] = new_child
                if not _reseat_descendants(scene, proposal, new_child, catalog):
                    return False
                seated = True
                break
        if not seated:
            return False
    return True


# ---------------------------------------------------------------------------
# Placement samplers


def _sample_floor_pose(
    rng: np.random.Generator, room: RoomSpec, dims: tuple[float, float, float]
) -> tuple[float, float, float] | None:
    x0, y0, x1, y1 = room.bounds()
    for _ in range(12):
        x = rng.uniform(x0, x1)
        y = rng.uniform(y0, y1)
        if room.contains_point(x, y):
            return x, y, float(rng.uniform(-math.pi, math.pi))
    return None


def _sample_packed_pose(
    rng: np.random.Generator,
    scene: SceneState,
    dims: tuple[float, float, float],
) -> tuple[float, float, float] | None:
    """Pose flush against a random floor object's side; independent uniform
    placement jams near 45% coverage, so dense rooms are built by packing
    new pieces tangent to existing ones."""
    anchors = [i for i in scene.instances.values() if i.z <= 1e-9]
    if not anchors:
        return None
    anchor = anchors[int(rng.integers(len(anchors)))]
    side = int(rng.integers(4))  # +x, -x, +y, -y in the anchor frame
    gap = 0.03
    ax, ay = anchor.dims[0] / 2.0, anchor.dims[1] / 2.0
    bx, by = dims[0] / 2.0, dims[1] / 2.0
    if side < 2:
        off = (ax + bx + gap) * (1 if side == 0 else -1)
        slide = rng.uniform(-(ay + by), ay + by)
        local = (off, slide)
    else:
        off = (ay + by + gap) * (1 if side == 2 else -1)
        slide = rng.uniform(-(ax + bx), ax + bx)
        local = (slide, off)
    c, s = math.cos(anchor.yaw), math.sin(anchor.yaw)
    x = anchor.x + c * local[0] - s * local[1]
    y = anchor.y + s * local[0] + c * local[1]
    if not scene.room.contains_point(x, y):
        return None
    return x, y, anchor.yaw


def _sample_wall_pose(
    rng: np.random.Generator,
    room: RoomSpec,
    dims: tuple[float, float, float],
    flush: bool,
) -> tuple[float, float, float]:
    edges = room.edges()
    lengths = np.array([math.dist(a, b) for a, b in edges])
    idx = int(rng.choice(len(edges), p=lengths / lengths.sum()))
    a, b = edges[idx]
    t = rng.uniform(0.08, 0.92)
    px = a[0] + t * (b[0] - a[0])
    py = a[1] + t * (b[1] - a[1])
    ex, ey = b[0] - a[0], b[1] - a[1]
    norm = math.hypot(ex, ey)
    nx, ny = -ey / norm, ex / norm  # inward normal of a CCW polygon edge
    gap = rng.uniform(0.0, 0.04) if flush else rng.uniform(0.0, 0.07)
    depth = dims[0] / 2.0 + gap
    yaw = math.atan2(ny, nx)
    if not flush:
        yaw += rng.uniform(-0.05, 0.05)
    return px + nx * depth, py + ny * depth, yaw


def _sample_front_pose(
    rng: np.random.Generator,
    parent: ObjectInstance,
    dims: tuple[float, float, float],
) -> tuple[float, float, float]:
    phx, phy = parent.dims[0] / 2.0, parent.dims[1] / 2.0
    sides = np.array([phy, phy, phx, phx])  # +x, -x, +y, -y half lengths
    side = int(rng.choice(4, p=sides / sides.sum()))
    t = rng.uniform(-0.85, 0.85)
    if side == 0:
        local = (phx, t * phy)
        normal_local = (1.0, 0.0)
    elif side == 1:
        local = (-phx, t * phy)
        normal_local = (-1.0, 0.0)
    elif side == 2:
        local = (t * phx, phy)
        normal_local = (0.0, 1.0)
    else:
        local = (t * phx, -phy)
        normal_local = (0.0, -1.0)
    c, s = math.cos(parent.yaw), math.sin(parent.yaw)
    wx = parent.x + local[0] * c - local[1] * s
    wy = parent.y + local[0] * s + local[1] * c
    nx = normal_local[0] * c - normal_local[1] * s
    ny = normal_local[0] * s + normal_local[1] * c
    gap = rng.uniform(0.02, 0.08)
    cx = wx + nx * (dims[0] / 2.0 + gap)
    cy = wy + ny * (dims[0] / 2.0 + gap)
    yaw = math.atan2(-ny, -nx)
    return cx, cy, yaw


def _sample_slot_pose(
    rng: np.random.Generator,
    parent: ObjectInstance,
    slot: SurfaceSlot,
    dims: tuple[float, float, float],
) -> tuple[float, float, float, float] | None:
    """(x, y, z, yaw) seating a child of the given dims on the slot, or None
    when it cannot fit."""
    scx, scy, shx, shy = slot_rect_local(parent, slot)
    if slot.clear_height_fraction is not None:
        if dims[2] > slot.clear_height_fraction * parent.dims[2]:
            return None
    yaw_local = float(rng.choice((0.0, math.pi / 2.0))) + float(rng.uniform(-0.15, 0.15))
    hx, hy = dims[0] / 2.0, dims[1] / 2.0
    c, s = abs(math.cos(yaw_local)), abs(math.sin(yaw_local))
    rx = c * hx + s * hy  # rotated footprint half-AABB in the parent frame
    ry = s * hx + c * hy
    if rx > shx or ry > shy:
        yaw_local = 0.0
        rx, ry = hx, hy
        if rx > shx or ry > shy:
            return None
    lx = scx + rng.uniform(-(shx - rx), (shx - rx)) if shx > rx else scx
    ly = scy + rng.uniform(-(shy - ry), (shy - ry)) if shy > ry else scy
    pc, ps = math.cos(parent.yaw), math.sin(parent.yaw)
    wx = parent.x + lx * pc - ly * ps
    wy = parent.y + lx * ps + ly * pc
    return wx, wy, slot_world_height(parent, slot), parent.yaw + yaw_local


# ---------------------------------------------------------------------------
# Proposal construction from an Action


def build_proposal(scene: SceneState, action: Action, catalog: AssetCatalog) -> _Proposal | str:
    """Translate an Action into concrete record changes, or a revert reason."""
    kind = action.kind
    if kind == "add":
        inst = action.params.get("instance")
        if inst is None:
            return "add requires a prebuilt instance"
        if inst.id in scene.instances:
            return f"instance id {inst.id!r} already exists"
        return _Proposal(updates={inst.id: inst}, added=[inst.id])

    if action.target is None or action.target not in scene.instances:
        raise LayoutActionError(f"unknown action target {action.target!r}")
    inst = scene.get(action.target)

    if kind == "delete":
        return _Proposal(deletes=set(_subtree_ids(scene, inst.id)))

    if kind == "translate":
        dx, dy = action.params["delta"]
        members = [scene.get(i) for i in _subtree_ids(scene, inst.id)]
        return _Proposal(
            updates=_rigid_transform(members, (inst.x, inst.y), 0.0, (dx, dy)),
            rigid=True,
        )

    if kind == "rotate":
        new_yaw = action.params["yaw"]
        members = [scene.get(i) for i in _subtree_ids(scene, inst.id)]
        return _Proposal(
            updates=_rigid_transform(members, (inst.x, inst.y), new_yaw - inst.yaw, (0.0, 0.0)),
            rigid=True,
        )

    if kind == "resample":
        dims = tuple(float(d) for d in action.params["dims"])
        proposal = _Proposal(updates={inst.id: replace(inst, dims=dims)})
        if not _reseat_descendants(scene, proposal, proposal.updates[inst.id], catalog):
            return "a stacked child no longer fits after resampling"
        return proposal

    if kind == "swap":
        other_id = action.params["other"]
        if other_id not in scene.instances:
            raise LayoutActionError(f"unknown swap partner {other_id!r}")
        other = scene.get(other_id)
        for a in (inst, other):
            if a.relation_kind in STABLE_KINDS or scene.children_of(a.id):
                return "swap targets must be unrelated and childless"
        if not (catalog.get(inst.category).tags & catalog.get(other.category).tags):
            return "swap targets share no tag"
        return _Proposal(
            updates={
                inst.id: replace(inst, x=other.x, y=other.y, yaw=other.yaw),
                other.id: replace(other, x=inst.x, y=inst.y, yaw=inst.yaw),
            }
        )

    if kind == "change_relation_target":
        new_parent_id = action.params["parent"]
        if new_parent_id not in scene.instances:
            raise LayoutActionError(f"unknown parent {new_parent_id!r}")
        x, y, z, yaw = action.params["pose"]
        moved = replace(inst, x=x, y=y, z=z, yaw=yaw, relation_parent=new_parent_id)
        proposal = _Proposal(updates={moved.id: moved})
        if scene.children_of(inst.id):
            members = [scene.get(i) for i in _subtree_ids(scene, inst.id) if i != inst.id]
            shifted = _rigid_transform(members, (inst.x, inst.y), yaw - inst.yaw, (0.0, 0.0))
            for mid, rec in shifted.items():
                proposal.updates[mid] = replace(
                    rec, x=rec.x + (x - inst.x), y=rec.y + (y - inst.y), z=rec.z + (z - inst.z)
                )
        return proposal

    if kind == "change_relation_plane":
        if inst.relation_kind != "on_surface_of" or inst.relation_parent not in scene.instances:
            return "target is not seated on a surface"
        x, y, z, yaw = action.params["pose"]
        return _Proposal(updates={inst.id: replace(inst, x=x, y=y, z=z, yaw=yaw)})

    # cluster actions: the target names the cluster root
    members_ids = _subtree_ids(scene, inst.id)
    if inst.relation_kind in STABLE_KINDS:
        return "cluster actions target cluster roots"
    members = [scene.get(i) for i in members_ids]

    if kind == "translate_cluster":
        dx, dy = action.params["delta"]
        return _Proposal(updates=_rigid_transform(members, (inst.x, inst.y), 0.0, (dx, dy)), rigid=True)
    if kind == "rotate_cluster":
        dyaw = action.params["delta_yaw"]
        return _Proposal(updates=_rigid_transform(members, (inst.x, inst.y), dyaw, (0.0, 0.0)), rigid=True)
    if kind == "resample_cluster":
        x, y = action.params["position"]
        yaw = action.params["yaw"]
        return _Proposal(
            updates=_rigid_transform(members, (inst.x, inst.y), yaw - inst.yaw, (x - inst.x, y - inst.y)),
            rigid=True,
        )
    raise LayoutActionError(f"unhandled action kind {kind!r}")


# ---------------------------------------------------------------------------
# Validation


class _SceneView:
    """Read-only overlay of a proposal on a scene."""

    def __init__(self, scene: SceneState, proposal: _Proposal):
        self.scene = scene
        self.proposal = proposal
        self.catalog = scene.catalog
        self.room = scene.room

    def ids(self):
        for iid in self.scene.instances:
            if iid not in self.proposal.deletes:
                yield iid
        yield from self.proposal.added

    def get(self, iid: str) -> ObjectInstance:
        got = self.proposal.updates.get(iid)
        return got if got is not None else self.scene.instances[iid]

    def instances_list(self) -> list[ObjectInstance]:
        return [self.get(i) for i in self.ids()]

    def materialize(self) -> SceneState:
        dup = SceneState(self.scene.room, self.scene.catalog)
        for iid in self.ids():
            dup.instances[iid] = self.get(iid)
        dup._id_counters = dict(self.scene._id_counters)
        for iid in self.proposal.added:
            cat, _, num = iid.rpartition("_")
            if cat and num.isdigit():
                dup._id_counters[cat] = max(dup._id_counters.get(cat, 0), int(num) + 1)
        return dup


def _roots_and_members(view: _SceneView) -> tuple[dict[str, str], dict[str, list[str]]]:
    member_root: dict[str, str] = {}

    def root_of(iid: str) -> str:
        seen = []
        cur = iid
        while cur not in member_root:
            seen.append(cur)
            inst = view.get(cur)
            parent = inst.relation_parent if inst.relation_kind in STABLE_KINDS else None
            if parent is None or parent in view.proposal.deletes or (
                parent not in view.scene.instances and parent not in view.proposal.updates
            ):
                member_root.update((i, cur) for i in seen)
                return cur
            if parent in seen:
                raise LayoutActionError(f"relation cycle through {parent!r}")
            cur = parent
        root = member_root[cur]
        member_root.update((i, root) for i in seen)
        return root

    members: dict[str, list[str]] = {}
    for iid in view.ids():
        members.setdefault(root_of(iid), []).append(iid)
    return member_root, members


def _collective_of(view: _SceneView, member_ids: list[str], root_id: str) -> OrientedBox:
    root = view.get(root_id)
    c, s = math.cos(root.yaw), math.sin(root.yaw)
    xs, ys, zs = [], [], []
    for mid in member_ids:
        box = view.get(mid).box
        for px, py in box.footprint_corners():
            dx = px - root.x
            dy = py - root.y
            xs.append(dx * c + dy * s)
            ys.append(-dx * s + dy * c)
        zs.extend((box.bottom, box.top))
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    z0, z1 = min(zs), max(zs)
    lx, ly = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    return OrientedBox(
        (root.x + lx * c - ly * s, root.y + lx * s + ly * c, (z0 + z1) / 2.0),
        (max((x1 - x0) / 2.0, 1e-9), max((y1 - y0) / 2.0, 1e-9), max((z1 - z0) / 2.0, 1e-9)),
        root.yaw,
    )


def _boxes_far_apart(a: OrientedBox, b: OrientedBox) -> bool:
    ra = math.hypot(a.half_extents[0], a.half_extents[1])
    rb = math.hypot(b.half_extents[0], b.half_extents[1])
    dx = a.center[0] - b.center[0]
    dy = a.center[1] - b.center[1]
    return dx * dx + dy * dy > (ra + rb) ** 2


def _clears_door(box: OrientedBox, room: RoomSpec) -> bool:
    """Whether the footprint keeps DOOR_CLEARANCE meters of space at the door."""
    door = room.door_position
    corners = box.footprint_corners()
    if point_in_polygon(door, corners):
        return False
    n = len(corners)
    for i in range(n):
        a = (float(corners[i][0]), float(corners[i][1]))
        b = (float(corners[(i + 1) % n][0]), float(corners[(i + 1) % n][1]))
        if point_to_segment_distance(door, a, b) < DOOR_CLEARANCE:
            return False
    return True


def _validate_staged(
    scene: SceneState,
    proposal: _Proposal,
    collective_cache: dict[str, OrientedBox] | None = None,
    member_root_cache: dict[str, str] | None = None,
) -> tuple[str, None] | tuple[None, tuple]:
    """Feasibility check returning (reason, None) on rejection, else
    (None, (scene2, member_root, members, collectives)) so a caller can
    commit by adoption instead of re-deriving everything."""
    view = _SceneView(scene, proposal)
    changed = set(proposal.updates) | set(proposal.added)

    for iid in changed:
        if not contained_in_room(view.get(iid).box, scene.room):
            return "out-of-boundary", None
        if not _clears_door(view.get(iid).box, scene.room):
            return "door blocked", None

    try:
        member_root, members = _roots_and_members(view)
    except LayoutActionError as exc:
        return str(exc), None

    # a cluster is affected when it gains a changed instance now or owned
    # one before the proposal (membership moves shrink the old cluster too)
    affected_roots = {member_root[i] for i in changed if i in member_root}
    if member_root_cache:
        for iid in set(changed) | proposal.deletes:
            old_root = member_root_cache.get(iid)
            if old_root is not None and old_root in members:
                affected_roots.add(old_root)

    # collective boxes: fresh for affected clusters, cached elsewhere
    collectives: dict[str, OrientedBox] = {}
    for root in members:
        cached = None
        if collective_cache is not None and root not in affected_roots:
            cached = collective_cache.get(root)
        collectives[root] = cached if cached is not None else _collective_of(view, members[root], root)

    roots_list = list(members)
    for root in affected_roots:
        box_a = collectives[root]
        for other in roots_list:
            if other == root:
                continue
            if other in affected_roots and other < root:
                continue  # the symmetric pair is handled once
            box_b = collectives[other]
            if _boxes_far_apart(box_a, box_b):
                continue
            if obb_intersects(box_a, box_b):
                return "cluster collision", None

    # a rigid move of a subtree nested inside a larger cluster still shifts
    # the subtree relative to the untouched members, so it gets the full
    # member treatment; only whole-cluster rigid moves may skip it
    subtree_move = any(
        view.get(i).relation_kind in STABLE_KINDS and view.get(i).relation_parent not in changed
        for i in changed
    )
    if not proposal.rigid or subtree_move:
        for root in affected_roots:
            mlist = members[root]
            changed_here = [m for m in mlist if m in changed]
            for a_id in changed_here:
                a = view.get(a_id)
                for b_id in mlist:
                    if b_id == a_id or (b_id in changed and b_id < a_id):
                        continue
                    b = view.get(b_id)
                    if is_stacking_pair(a, b):
                        continue
                    if obb_intersects(a.box, b.box):
                        return "member collision", None

    # relation validity of everything the proposal touched
    if proposal.rigid:
        # rigid transforms preserve relations between co-moving members;
        # anchors to anything outside the moved set (walls, an unmoved
        # parent) must be rechecked
        check_ids = {
            i
            for i in changed
            if view.get(i).relation_kind is not None and view.get(i).relation_parent not in changed
        }
    else:
        check_ids = set(changed)
        for inst in view.instances_list():
            if inst.relation_kind is not None and inst.relation_parent in changed:
                check_ids.add(inst.id)
    scene2 = view.materialize()
    for iid in check_ids:
        if iid in proposal.deletes:
            continue
        inst = scene2.get(iid)
        if inst.relation_kind is not None and not relation_holds(scene2, inst):
            return f"relation {inst.relation_kind} broken for {iid}", None
    return None, (scene2, member_root, members, collectives)


def validate_proposal(
    scene: SceneState,
    proposal: _Proposal,
    catalog: AssetCatalog,
    collective_cache: dict[str, OrientedBox] | None = None,
    member_root_cache: dict[str, str] | None = None,
) -> str | None:
    """None when the proposal keeps the scene feasible, else the reason."""
    reason, _ = _validate_staged(scene, proposal, collective_cache, member_root_cache)
    return reason


def apply_action(scene: SceneState, action: Action) -> ActionOutcome:
    """Transactional action application: commit on success (mutating the
    scene), revert with a reason otherwise. On revert the scene is
    untouched."""
    catalog = scene.catalog
    proposal = build_proposal(scene, action, catalog)
    if isinstance(proposal, str):
        return ActionOutcome(False, proposal)
    reason = validate_proposal(scene, proposal, catalog)
    if reason is not None:
        return ActionOutcome(False, reason)
    for iid in proposal.deletes:
        scene.instances.pop(iid, None)
    for iid, inst in proposal.updates.items():
        scene.instances[iid] = inst
    for iid in proposal.added:
        cat, _, num = iid.rpartition("_")
        if cat and num.isdigit():
            scene._id_counters[cat] = max(scene._id_counters.get(cat, 0), int(num) + 1)
    return ActionOutcome(True)


# ---------------------------------------------------------------------------
# Occupancy bookkeeping (incremental BEV-grid footprint union)


class _OccupancyTracker:
    """Counter grid over the BEV cells so the footprint-union area updates
    in O(changed cells) per action instead of a full re-rasterization."""

    def __init__(self, room: RoomSpec):
        self.origin, self.nx, self.ny = make_grid_spec(room, BEV_RESOLUTION)
        self.counts = np.zeros(self.nx * self.ny, dtype=np.int32)
        self.entries: dict[str, np.ndarray] = {}
        self.covered = 0
        self.floor_area = room.area()

    def cells_of(self, inst: ObjectInstance) -> np.ndarray:
        return footprint_cell_indices(inst.box, self.origin, BEV_RESOLUTION, self.nx, self.ny)

    def occupancy(self) -> float:
        area = self.covered * BEV_RESOLUTION * BEV_RESOLUTION
        return min(1.0, area / self.floor_area)

    def preview(self, proposal: _Proposal, view: _SceneView) -> tuple[float, tuple]:
        removals, additions = [], []
        new_entries: dict[str, np.ndarray | None] = {}
        for iid in proposal.deletes:
            old = self.entries.get(iid)
            if old is not None and old.size:
                removals.append(old)
            new_entries[iid] = None
        for iid in proposal.updates:
            old = self.entries.get(iid)
            if old is not None and old.size:
                removals.append(old)
            fresh = self.cells_of(view.get(iid))
            if fresh.size:
                additions.append(fresh)
            new_entries[iid] = fresh
        rem = np.concatenate(removals) if removals else np.empty(0, dtype=np.int64)
        add = np.concatenate(additions) if additions else np.empty(0, dtype=np.int64)
        if rem.size == 0 and add.size == 0:
            return self.occupancy(), (rem, add, new_entries, self.covered)
        touched = np.unique(np.concatenate([rem, add]))
        local = self.counts[touched].astype(np.int64)
        before = int((local > 0).sum())
        np.subtract.at(local, np.searchsorted(touched, rem), 1)
        np.add.at(local, np.searchsorted(touched, add), 1)
        after = int((local > 0).sum())
        covered = self.covered - before + after
        occ = min(1.0, covered * BEV_RESOLUTION * BEV_RESOLUTION / self.floor_area)
        return occ, (rem, add, new_entries, covered)

    def commit(self, token) -> None:
        rem, add, new_entries, covered = token
        if rem.size:
            np.subtract.at(self.counts, rem, 1)
        if add.size:
            np.add.at(self.counts, add, 1)
        for iid, cells in new_entries.items():
            if cells is None:
                self.entries.pop(iid, None)
            else:
                self.entries[iid] = cells
        self.covered = covered


# ---------------------------------------------------------------------------
# The annealer


class _Optimizer:
    def __init__(
        self,
        program: ConstraintProgram,
        catalog: AssetCatalog,
        schedule: OptimizerSchedule,
        hierarchical: bool = False,
    ):
        self.program = program
        self.catalog = catalog
        self.schedule = schedule
        self.hierarchical = hierarchical
        self.rng = np.random.default_rng(schedule.rng_seed)
        self.scene = SceneState(program.room_or_default(), catalog)
        self.frozen: set[str] = set()
        self.tracker = _OccupancyTracker(self.scene.room) if program.target_occupancy else None
        self.member_root: dict[str, str] = {}
        self.members: dict[str, list[str]] = {}
        self.collective: dict[str, OrientedBox] = {}
        self._area_cache: dict[str, float] = {}
        self.steps_used = 0

        kinds = list(ACTION_KINDS if not hierarchical else INSTANCE_KINDS)
        bias = program.hints.get("delete_bias", 0.0)
        self.kinds = tuple(kinds)
        self.probs = schedule.probabilities(self.kinds, delete_bias=bias)

    # -- record-trusting matching (geometric validity is a scene invariant)

    def _cat_ok(self, inst: ObjectInstance, sel: SemanticSelector) -> bool:
        if sel.category != "any" and inst.category != sel.category:
            return False
        if sel.tags and not sel.tags <= self.catalog.get(inst.category).tags:
            return False
        return True

    def _match_rec(self, inst: ObjectInstance, sel: SemanticSelector, scene: SceneState) -> bool:
        if not self._cat_ok(inst, sel):
            return False
        if sel.related_to is not None:
            kind, parent_sel = sel.related_to
            if inst.relation_kind != kind:
                return False
            if parent_sel is not None:
                if inst.relation_parent not in scene.instances:
                    return False
                if not self._match_rec(scene.instances[inst.relation_parent], parent_sel, scene):
                    return False
        return True

    def _tally(self, c, scene: SceneState) -> list[tuple[str | None, int]]:
        insts = scene.instances.values()
        if c.scope is None:
            return [(None, sum(1 for i in insts if self._match_rec(i, c.selector, scene)))]
        kind = c.selector.related_to[0]
        out = []
        for p in insts:
            if not self._match_rec(p, c.scope, scene):
                continue
            n = sum(
                1
                for i in insts
                if i.relation_kind == kind and i.relation_parent == p.id and self._cat_ok(i, c.selector)
            )
            out.append((p.id, n))
        return out

    def _fast_penalty(self, scene: SceneState, occupancy: float | None) -> float:
        penalty = 0.0
        for c in self.program.counts:
            for _, n in self._tally(c, scene):
                if n < c.low:
                    penalty += c.low - n
                elif n > c.high:
                    penalty += n - c.high
        for r in self.program.relations:
            for i in scene.instances.values():
                if not self._match_rec(i, r.child, scene):
                    continue
                if i.relation_kind != r.kind:
                    penalty += 1
                    continue
                if r.parent is not None:
                    if i.relation_parent not in scene.instances or not self._match_rec(
                        scene.instances[i.relation_parent], r.parent, scene
                    ):
                        penalty += 1
        if self.program.target_occupancy is not None and occupancy is not None:
            lo, hi = self.program.target_occupancy
            if occupancy < lo:
                penalty += OCCUPANCY_PENALTY_SCALE * (lo - occupancy)
            elif occupancy > hi:
                penalty += OCCUPANCY_PENALTY_SCALE * (occupancy - hi)
        return penalty

    # -- add guidance

    def _relation_for_category(self, category: str):
        """(kind, parent selector or None) from the first relation
        constraint covering this category, else (None, None)."""
        spec_tags = self.catalog.get(category).tags
        for r in self.program.relations:
            if r.child.category in (category, "any") and r.child.tags <= spec_tags:
                return r.kind, r.parent
        return None, None

    def _candidate_categories(self, sel: SemanticSelector) -> list[str]:
        return self.catalog.matching_categories(sel.category, sel.tags)

    def _add_candidates(self, scene: SceneState, growth: bool) -> list[tuple]:
        """(categories, kind, parent_ids-or-None, deficit) tuples for counts
        below their lower bound; with growth also counts below their upper
        bound (used when occupancy must rise)."""
        out = []
        for c in self.program.counts:
            cats = self._candidate_categories(c.selector)
            if not cats:
                continue
            related = c.selector.related_to
            for pid, n in self._tally(c, scene):
                target = c.high if growth else c.low
                if n >= target:
                    continue
                if c.scope is not None:
                    kind = related[0]
                    out.append((cats, kind, [pid], target - n))
                elif related is not None:
                    kind, parent_sel = related
                    if parent_sel is None:
                        out.append((cats, kind, None, target - n))
                    else:
                        parents = [
                            i.id for i in scene.instances.values() if self._match_rec(i, parent_sel, scene)
                        ]
                        if parents:
                            out.append((cats, kind, parents, target - n))
                else:
                    out.append((cats, None, None, target - n))
        return out

    def _is_root_level(self, kind: str | None) -> bool:
        return kind is None or kind in ("against_wall", "flush_wall")

    def _mean_area(self, category: str) -> float:
        cached = self._area_cache.get(category)
        if cached is None:
            (xl, xh), (yl, yh), _ = self.catalog.dimension_ranges(category, self.program.asset_overrides)
            cached = self._area_cache[category] = (xl + xh) / 2.0 * (yl + yh) / 2.0
        return cached

    def _needs_area(self, occ: float | None) -> bool:
        band = self.program.target_occupancy
        return band is not None and occ is not None and occ < band[0]

    def _build_add(self, scene: SceneState, candidates: list[tuple], occ: float | None = None) -> Action | None:
        if not candidates:
            return None
        weights = np.array([c[3] for c in candidates], dtype=float)
        cats, kind, parent_ids, _ = candidates[int(self.rng.choice(len(candidates), p=weights / weights.sum()))]
        # below the occupancy band, steer toward large-footprint pieces about
        # half the time; the other half stays uniform so small fillers can
        # still slot into a crowded room
        deficit = self._needs_area(occ)
        prefer_large = deficit and self.rng.random() < 0.5
        if prefer_large and len(cats) > 1:
            areas = np.array([self._mean_area(c) for c in cats], dtype=float)
            category = cats[int(self.rng.choice(len(cats), p=areas / areas.sum()))]
        else:
            category = cats[int(self.rng.integers(len(cats)))] if len(cats) > 1 else cats[0]
        if prefer_large:
            ranges = self.catalog.dimension_ranges(category, self.program.asset_overrides)
            dims = tuple(float(self.rng.uniform((lo + hi) / 2.0, hi)) for lo, hi in ranges)
        else:
            dims = self.catalog.sample_dims(self.rng, category, self.program.asset_overrides)
        if kind is None:
            rel_kind, rel_parent_sel = self._relation_for_category(category)
            if rel_kind is not None:
                kind = rel_kind
                if rel_parent_sel is not None:
                    parent_ids = [
                        i.id for i in scene.instances.values() if self._match_rec(i, rel_parent_sel, scene)
                    ]
                    if not parent_ids:
                        return None
        pose = None
        relation: tuple[str, str | None] | None = None
        if kind is None:
            p = None
            if deficit and self.rng.random() < 0.7:
                p = _sample_packed_pose(self.rng, scene, dims)
            if p is None:
                p = _sample_floor_pose(self.rng, scene.room, dims)
            if p is None:
                return None
            pose = (p[0], p[1], 0.0, p[2])
        elif kind in ("against_wall", "flush_wall"):
            x, y, yaw = _sample_wall_pose(self.rng, scene.room, dims, flush=kind == "flush_wall")
            pose = (x, y, 0.0, yaw)
            relation = (kind, None)
        elif kind == "front_against":
            pid = parent_ids[int(self.rng.integers(len(parent_ids)))]
            parent = scene.get(pid)
            x, y, yaw = _sample_front_pose(self.rng, parent, dims)
            pose = (x, y, 0.0, yaw)
            relation = (kind, pid)
        else:  # stacking
            pid = parent_ids[int(self.rng.integers(len(parent_ids)))]
            parent = scene.get(pid)
            slots = stacking_slots(self.catalog, parent, kind)
            if not slots:
                return None
            slot = slots[int(self.rng.integers(len(slots)))] if len(slots) > 1 else slots[0]
            seat = _sample_slot_pose(self.rng, parent, slot, dims)
            if seat is None:
                return None
            pose = seat
            relation = (kind, pid)
        inst = ObjectInstance(
            id=scene.peek_id(category),
            category=category,
            x=pose[0],
            y=pose[1],
            z=pose[2],
            yaw=pose[3],
            dims=dims,
            relation_kind=relation[0] if relation else None,
            relation_parent=relation[1] if relation else None,
        )
        return Action("add", params={"instance": inst})

    # -- other proposal samplers

    def _movable_ids(self, scene: SceneState) -> list[str]:
        return [i for i in scene.instances if i not in self.frozen]

    def _propose(self, kind: str, scene: SceneState, occ: float | None) -> Action | None:
        rng = self.rng
        if kind == "add":
            growth = (
                self.program.target_occupancy is not None
                and occ is not None
                and occ < self.program.target_occupancy[0]
            )
            candidates = self._add_candidates(scene, growth=False)
            if not candidates and growth:
                candidates = self._add_candidates(scene, growth=True)
            if self.hierarchical:
                candidates = [c for c in candidates if not self._is_root_level(c[1])]
            return self._build_add(scene, candidates, occ)
        if kind == "delete":
            over = []
            shrink = (
                self.program.target_occupancy is not None
                and occ is not None
                and occ > self.program.target_occupancy[1]
            )
            for c in self.program.counts:
                for pid, n in self._tally(c, scene):
                    bound = c.low if shrink else c.high
                    if n > bound:
                        for i in scene.instances.values():
                            if self._cat_ok(i, c.selector) and i.id not in self.frozen:
                                if c.scope is None or i.relation_parent == pid:
                                    over.append(i.id)
            # random deletes stay on leaves: removing a parent would take its
            # whole subtree and silence any child-count constraints with it
            pool = over or [
                i for i in self._movable_ids(scene) if not scene.children_of(i)
            ]
            if not pool:
                return None
            return Action("delete", pool[int(rng.integers(len(pool)))])
        if kind in ("translate", "rotate", "resample", "swap", "change_relation_plane", "change_relation_target"):
            pool = self._movable_ids(scene)
            if not pool:
                return None
            target = pool[int(rng.integers(len(pool)))]
            inst = scene.get(target)
            if kind == "translate":
                delta = rng.normal(0.0, TRANSLATE_SIGMA, 2)
                return Action("translate", target, {"delta": (float(delta[0]), float(delta[1]))})
            if kind == "rotate":
                return Action("rotate", target, {"yaw": float(inst.yaw + rng.normal(0.0, ROTATE_SIGMA))})
            if kind == "resample":
                dims = self.catalog.sample_dims(rng, inst.category, self.program.asset_overrides)
                return Action("resample", target, {"dims": dims})
            if kind == "swap":
                tags = self.catalog.get(inst.category).tags
                if inst.relation_kind in STABLE_KINDS or scene.children_of(inst.id):
                    return None
                partners = [
                    o.id
                    for o in scene.instances.values()
                    if o.id != inst.id
                    and o.id not in self.frozen
                    and o.relation_kind not in STABLE_KINDS
                    and not scene.children_of(o.id)
                    and (self.catalog.get(o.category).tags & tags)
                ]
                if not partners:
                    return None
                return Action("swap", target, {"other": partners[int(rng.integers(len(partners)))]})
            if kind == "change_relation_plane":
                if inst.relation_kind != "on_surface_of" or inst.relation_parent not in scene.instances:
                    return None
                parent = scene.get(inst.relation_parent)
                slots = stacking_slots(self.catalog, parent, "on_surface_of")
                others = [s for s in slots if abs(slot_world_height(parent, s) - inst.z) > 1e-6]
                if not others:
                    return None
                slot = others[int(rng.integers(len(others)))]
                seat = _sample_slot_pose(rng, parent, slot, inst.dims)
                if seat is None:
                    return None
                return Action("change_relation_plane", target, {"pose": seat})
            # change_relation_target
            if inst.relation_kind not in STABLE_KINDS or inst.relation_parent not in scene.instances:
                return None
            current = scene.get(inst.relation_parent)
            alternates = [
                o for o in scene.instances.values() if o.category == current.category and o.id != current.id
            ]
            if not alternates:
                return None
            parent = alternates[int(rng.integers(len(alternates)))]
            if inst.relation_kind == "front_against":
                x, y, yaw = _sample_front_pose(rng, parent, inst.dims)
                seat = (x, y, 0.0, yaw)
            else:
                slots = stacking_slots(self.catalog, parent, inst.relation_kind)
                if not slots:
                    return None
                slot = slots[int(rng.integers(len(slots)))] if len(slots) > 1 else slots[0]
                seat = _sample_slot_pose(rng, parent, slot, inst.dims)
                if seat is None:
                    return None
            return Action("change_relation_target", target, {"parent": parent.id, "pose": seat})
        # cluster actions
        roots = [r for r in self.members if r not in self.frozen]
        if not roots:
            return None
        root = roots[int(rng.integers(len(roots)))]
        if kind == "translate_cluster":
            delta = rng.normal(0.0, TRANSLATE_SIGMA, 2)
            return Action("translate_cluster", root, {"delta": (float(delta[0]), float(delta[1]))})
        if kind == "rotate_cluster":
            if rng.random() < 0.35:
                dyaw = float(rng.choice((math.pi / 2.0, -math.pi / 2.0, math.pi)))
            else:
                dyaw = float(rng.normal(0.0, ROTATE_SIGMA))
            return Action("rotate_cluster", root, {"delta_yaw": dyaw})
        if kind == "resample_cluster":
            p = _sample_floor_pose(rng, scene.room, scene.get(root).dims)
            if p is None:
                return None
            return Action("resample_cluster", root, {"position": (p[0], p[1]), "yaw": p[2]})
        return None

    # -- the loop

    def _try_action(self, action: Action) -> tuple | None:
        """Validate an action; on success return the staged commit
        (scene2, member_root, members, collectives, occ, token)."""
        proposal = build_proposal(self.scene, action, self.catalog)
        if isinstance(proposal, str):
            return None
        reason, staged = _validate_staged(self.scene, proposal, self.collective, self.member_root)
        if reason is not None:
            return None
        scene2, member_root, members, collectives = staged
        occ, token = (None, None)
        if self.tracker is not None:
            occ, token = self.tracker.preview(proposal, _SceneView(self.scene, proposal))
        return scene2, member_root, members, collectives, occ, token

    def _adopt(self, staged: tuple) -> None:
        scene2, member_root, members, collectives, _, token = staged
        self.scene = scene2
        self.member_root = member_root
        self.members = members
        self.collective = collectives
        if self.tracker is not None and token is not None:
            self.tracker.commit(token)

    def _current_occ(self) -> float | None:
        return self.tracker.occupancy() if self.tracker is not None else None

    def _greedy_adds(self, root_level: bool | None = None, max_failures: int = 150) -> None:
        """Constructive warm start: keep committing valid guided adds while
        they lower the penalty."""
        failures = 0
        while failures < max_failures:
            occ = self._current_occ()
            growth = (
                self.program.target_occupancy is not None
                and occ is not None
                and occ < self.program.target_occupancy[0]
            )
            candidates = self._add_candidates(self.scene, growth=False)
            if not candidates and growth:
                candidates = self._add_candidates(self.scene, growth=True)
            if root_level is True:
                candidates = [c for c in candidates if self._is_root_level(c[1])]
            elif root_level is False:
                candidates = [c for c in candidates if not self._is_root_level(c[1])]
            if not candidates:
                return
            action = self._build_add(self.scene, candidates, occ)
            if action is None:
                failures += 1
                continue
            staged = self._try_action(action)
            if staged is None:
                failures += 1
                continue
            self._adopt(staged)
            failures = 0

    def run(self) -> LayoutResult:
        program = self.program
        if self.hierarchical:
            self._greedy_adds(root_level=True)
            self.frozen = {
                i for i in self.scene.instances if self.scene.get(i).relation_kind not in STABLE_KINDS
            }
            self._greedy_adds(root_level=False)
        else:
            self._greedy_adds()

        occ = self._current_occ()
        cur_penalty = self._fast_penalty(self.scene, occ)
        cur_score = evaluate_score(program, self.scene) if program.scores else 0.0
        cur_energy = cur_penalty * PENALTY_WEIGHT - cur_score
        best_key = (cur_penalty, -cur_score)
        best_scene = self.scene
        temperature = self.schedule.initial_temperature

        for step in range(self.schedule.max_steps):
            self.steps_used = step + 1
            if cur_penalty <= 0.0 and not program.scores:
                self.steps_used = step
                break
            kind = self.kinds[int(self.rng.choice(len(self.kinds), p=self.probs))]
            temperature *= self.schedule.cooling_factor
            tries = PLACEMENT_TRIES if kind == "add" else 1
            staged = None
            for _ in range(tries):
                action = self._propose(kind, self.scene, self._current_occ())
                if action is None:
                    break
                staged = self._try_action(action)
                if staged is not None:
                    break
            if staged is None:
                continue
            scene2, _, _, _, occ2, _ = staged
            new_penalty = self._fast_penalty(scene2, occ2)
            new_score = evaluate_score(program, scene2) if program.scores else 0.0
            new_energy = new_penalty * PENALTY_WEIGHT - new_score
            accept = new_energy <= cur_energy
            if not accept:
                accept = self.rng.random() < math.exp(
                    min(0.0, (cur_energy - new_energy) / max(temperature, 1e-9))
                )
            if not accept:
                continue
            self._adopt(staged)
            cur_penalty, cur_score, cur_energy = new_penalty, new_score, new_energy
            key = (cur_penalty, -cur_score)
            if key < best_key:
                best_key = key
                best_scene = self.scene

        report = evaluate_constraints(program, best_scene)
        final_penalty = best_key[0]
        return LayoutResult(
            scene=best_scene,
            report=report,
            penalty=float(final_penalty),
            score=float(-best_key[1]),
            steps_used=self.steps_used,
            feasible=final_penalty <= 0.0,
        )


def optimize_layout(
    program: ConstraintProgram,
    catalog: AssetCatalog | None = None,
    schedule: OptimizerSchedule | None = None,
) -> LayoutResult:
    """Build a scene satisfying the program by cluster-aware annealing.

    The returned scene is always hard-feasible (no collisions, nothing out
    of bounds); the report records any remaining constraint misses.
    Deterministic for a fixed (program, catalog, schedule).
    """
    catalog = catalog if catalog is not None else default_catalog()
    schedule = schedule if schedule is not None else OptimizerSchedule()
    return _Optimizer(program, catalog, schedule).run()


def optimize_layout_hierarchical(
    program: ConstraintProgram,
    catalog: AssetCatalog | None = None,
    schedule: OptimizerSchedule | None = None,
) -> LayoutResult:
    """Ablation baseline: roots are placed first and frozen, cluster moves
    are disabled, and only child-level actions remain."""
    catalog = catalog if catalog is not None else default_catalog()
    schedule = schedule if schedule is not None else OptimizerSchedule()
    return _Optimizer(program, catalog, schedule, hierarchical=True).run()
