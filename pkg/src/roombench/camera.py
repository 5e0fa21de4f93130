"""Camera trajectory planning over the accessibility grid.

Greedy nearest-target visiting: starting at the door, repeatedly pick the
closest unvisited target, sample aimed 4-DOF viewpoints in an annulus
around it until one passes the accessibility, field-of-view, and
occlusion checks, then dolly there along a shortest 8-connected grid
path. Targets that exhaust their sampling budget are reported as
unreachable together with the best evaluation seen.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InaccessibleCellError, PathNotFoundError, SceneFormatError
from .geometry import (
    BoolGrid,
    CameraIntrinsics,
    accessible_grid,
    fov_containment,
    normalize_angle,
)
from .raster import occlusion_rate
from .scene import ObjectInstance, SceneState

SQRT2 = math.sqrt(2.0)

# orthogonal neighbors first, then diagonals; relaxation scans in this
# exact order, which makes path tie-breaking deterministic
NEIGHBOR_OFFSETS = (
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
)

MIN_VIEW_DISTANCE = 0.5  # inner annulus radius for viewpoint sampling
WAYPOINT_STEP = 0.25  # arc-length spacing of interpolated trajectory frames


@dataclass(frozen=True)
class CameraPose:
    """4-DOF pose: planar position, fixed height, yaw and pitch (roll is
    always zero)."""

    x: float
    y: float
    z: float
    yaw: float
    pitch: float

    def __post_init__(self):
        if not -math.pi / 2.0 <= self.pitch <= math.pi / 2.0:
            raise ValueError("pitch must lie in [-pi/2, pi/2]")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def roll(self) -> float:
        return 0.0

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z, "yaw": self.yaw, "pitch": self.pitch}

    @staticmethod
    def from_json(data: dict) -> "CameraPose":
        return CameraPose(
            float(data["x"]), float(data["y"]), float(data["z"]),
            float(data["yaw"]), float(data["pitch"]),
        )


@dataclass
class TrajectoryParams:
    max_sampling_times: int = 64
    max_distance: float = 4.0
    fov_threshold: float = 0.95
    occlusion_required_range: tuple[float, float] = (0.0, 0.1)
    camera_height: float = 1.0
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    grid_resolution: float = 0.1
    clearance: float = 0.25

    def __post_init__(self):
        if self.max_sampling_times < 1:
            raise ValueError("max_sampling_times must be at least 1")
        if self.max_distance <= 0:
            raise ValueError("max_distance must be positive")
        if not 0.0 < self.fov_threshold <= 1.0:
            raise ValueError("fov_threshold must lie in (0, 1]")
        lo, hi = self.occlusion_required_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("occlusion_required_range must be a well-ordered interval in [0, 1]")


@dataclass
class ViewpointEvaluation:
    pose: CameraPose
    accessible: bool
    fov_percent: float
    occlusion: float
    accepted: bool

    def to_json(self) -> dict:
        return {
            "pose": self.pose.to_json(),
            "accessible": self.accessible,
            "fov_percent": self.fov_percent,
            "occlusion": self.occlusion,
            "accepted": self.accepted,
        }

    @staticmethod
    def from_json(data: dict) -> "ViewpointEvaluation":
        return ViewpointEvaluation(
            pose=CameraPose.from_json(data["pose"]),
            accessible=bool(data["accessible"]),
            fov_percent=float(data["fov_percent"]),
            occlusion=float(data["occlusion"]),
            accepted=bool(data["accepted"]),
        )


@dataclass
class TrajectoryLeg:
    target_id: str
    viewpoint: ViewpointEvaluation
    cells: list[tuple[int, int]]
    waypoints: list[tuple[float, float]]


@dataclass
class UnreachableTarget:
    target_id: str
    reason: str
    best: ViewpointEvaluation | None


@dataclass
class Trajectory:
    start: CameraPose
    legs: list[TrajectoryLeg]
    unreachable: list[UnreachableTarget]
    # populated by the planner; deserialized trajectories carry None unless
    # the caller recomputes accessibility from the scene
    grid: BoolGrid | None = None


def find_closest_target(position: tuple[float, float], remaining, scene: SceneState) -> str:
    """Nearest remaining target by centroid distance; ids break ties."""
    if not remaining:
        raise SceneFormatError("no remaining targets")
    px, py = position
    best_id = None
    best_key = None
    for tid in remaining:
        inst = scene.get(tid)
        key = (math.hypot(inst.x - px, inst.y - py), tid)
        if best_key is None or key < best_key:
            best_key = key
            best_id = tid
    return best_id


def _aim_at(x: float, y: float, z: float, target: ObjectInstance) -> tuple[float, float]:
    """Yaw/pitch pointing the optical axis at the target's vertical center."""
    cx, cy, cz = target.centroid
    yaw = math.atan2(cy - y, cx - x)
    pitch = math.atan2(z - cz, math.hypot(cx - x, cy - y))
    return yaw, pitch


def sample_viewpoint(
    rng: np.random.Generator,
    target: ObjectInstance,
    params: TrajectoryParams,
) -> CameraPose:
    """Uniform-area sample in the annulus around the target, aimed at it."""
    r0, r1 = MIN_VIEW_DISTANCE, max(params.max_distance, MIN_VIEW_DISTANCE)
    r = math.sqrt(r0 * r0 + rng.random() * (r1 * r1 - r0 * r0))
    phi = rng.random() * 2.0 * math.pi
    x = target.x + r * math.cos(phi)
    y = target.y + r * math.sin(phi)
    z = params.camera_height
    yaw, pitch = _aim_at(x, y, z, target)
    return CameraPose(x, y, z, yaw, pitch)


def evaluate_viewpoint(
    pose: CameraPose,
    target: ObjectInstance,
    params: TrajectoryParams,
    scene: SceneState,
    grid: BoolGrid | None = None,
) -> ViewpointEvaluation:
    """Run the accessibility, field-of-view, and occlusion checks."""
    if grid is None:
        grid = accessible_grid(
            scene.room,
            [inst.box for inst in scene.instances.values()],
            params.grid_resolution,
            params.clearance,
        )
    accessible = grid.is_free(*grid.cell_of(pose.x, pose.y))
    position = np.array(pose.position)
    fov = fov_containment(target.box, position, pose.yaw, pose.pitch, params.intrinsics)
    occ = occlusion_rate(scene, pose.position, pose.yaw, pose.pitch, target.id, params.intrinsics)
    lo, hi = params.occlusion_required_range
    accepted = accessible and fov > params.fov_threshold and lo <= occ <= hi
    return ViewpointEvaluation(pose, accessible, float(fov), float(occ), accepted)


def dijkstra_path(
    grid: BoolGrid,
    start: tuple[int, int],
    goal: tuple[int, int],
) -> list[tuple[int, int]]:
    """Shortest 8-connected path between accessible cells.

    Orthogonal steps cost 1, diagonal steps sqrt(2); among equal-cost
    paths the NEIGHBOR_OFFSETS scan order decides deterministically.
    """
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.is_free(*cell):
            raise InaccessibleCellError(f"{name} cell {cell} is not accessible")
    if start == goal:
        return [start]
    dist: dict[tuple[int, int], float] = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    heap = [(0.0, counter, start)]
    done = set()
    while heap:
        d, _, cell = heapq.heappop(heap)
        if cell in done:
            continue
        if cell == goal:
            path = [cell]
            while cell != start:
                cell = parent[cell]
                path.append(cell)
            path.reverse()
            return path
        done.add(cell)
        cx, cy = cell
        for dx, dy in NEIGHBOR_OFFSETS:
            nxt = (cx + dx, cy + dy)
            if nxt in done or not grid.is_free(*nxt):
                continue
            nd = d + (1.0 if dx == 0 or dy == 0 else SQRT2)
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                parent[nxt] = cell
                counter += 1
                heapq.heappush(heap, (nd, counter, nxt))
    raise PathNotFoundError(f"no grid path from {start} to {goal}")


def path_cost(cells: list[tuple[int, int]]) -> float:
    total = 0.0
    for (ax, ay), (bx, by) in zip(cells, cells[1:]):
        total += 1.0 if ax == bx or ay == by else SQRT2
    return total


def _door_cell(scene: SceneState, grid: BoolGrid) -> tuple[int, int]:
    """The accessible interior cell just inside the door.

    The door point sits on a wall edge, so its own cell center usually
    falls outside the floor polygon; probe a few steps along the inward
    wall normal instead.
    """
    room = scene.room
    door = room.door_position
    best_edge = None
    best_d = math.inf
    for a, b in room.edges():
        d = _point_segment_distance(door, a, b)
        if d < best_d:
            best_d = d
            best_edge = (a, b)
    (ax, ay), (bx, by) = best_edge
    ex, ey = bx - ax, by - ay
    norm = math.hypot(ex, ey)
    nx_, ny_ = -ey / norm, ex / norm  # interior lies left of CCW edges
    for steps in (0.75, 1.5, 2.5, 4.0):
        px = door[0] + nx_ * steps * grid.resolution
        py = door[1] + ny_ * steps * grid.resolution
        cell = grid.cell_of(px, py)
        if grid.is_free(*cell):
            return cell
    raise InaccessibleCellError("door cell is not accessible")


def _point_segment_distance(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    vx, vy = bx - ax, by - ay
    denom = vx * vx + vy * vy
    t = 0.0 if denom == 0 else max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / denom))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def _evaluation_rank(ev: ViewpointEvaluation, params: TrajectoryParams) -> tuple:
    lo, hi = params.occlusion_required_range
    occ_miss = max(lo - ev.occlusion, ev.occlusion - hi, 0.0)
    return (ev.accessible, ev.fov_percent, -occ_miss)


def _failure_reason(best: ViewpointEvaluation | None, params: TrajectoryParams) -> str:
    if best is None:
        return "no viewpoint sampled"
    if not best.accessible:
        return "no accessible viewpoint"
    if best.fov_percent <= params.fov_threshold:
        return "field of view below threshold"
    lo, hi = params.occlusion_required_range
    if not lo <= best.occlusion <= hi:
        return "occlusion outside required range"
    return "no grid path to any valid viewpoint"


def plan_trajectory(
    scene: SceneState,
    targets: list[str],
    params: TrajectoryParams | None = None,
    rng_seed: int = 0,
) -> Trajectory:
    """Greedy nearest-target trajectory from the door.

    For each leg the planner draws up to max_sampling_times viewpoints
    and takes the first one that passes every check and is reachable by a
    grid path; a target whose budget runs out lands in `unreachable` with
    its best-seen evaluation and the failing check as reason.
    """
    params = params if params is not None else TrajectoryParams()
    for tid in targets:
        scene.get(tid)  # raises on unknown ids
    grid = accessible_grid(
        scene.room,
        [inst.box for inst in scene.instances.values()],
        params.grid_resolution,
        params.clearance,
    )
    door_cell = _door_cell(scene, grid)
    sx, sy = grid.center_of(*door_cell)
    croom = scene.room.centroid()
    start = CameraPose(
        sx, sy, params.camera_height, math.atan2(croom[1] - sy, croom[0] - sx), 0.0
    )

    rng = np.random.default_rng(rng_seed)
    remaining = set(targets)
    legs: list[TrajectoryLeg] = []
    unreachable: list[UnreachableTarget] = []
    current_cell = door_cell

    while remaining:
        here = grid.center_of(*current_cell)
        tid = find_closest_target(here, remaining, scene)
        remaining.discard(tid)
        target = scene.get(tid)
        chosen = None
        chosen_cells = None
        best = None
        for _ in range(params.max_sampling_times):
            pose = sample_viewpoint(rng, target, params)
            ev = evaluate_viewpoint(pose, target, params, scene, grid)
            if best is None or _evaluation_rank(ev, params) > _evaluation_rank(best, params):
                best = ev
            if not ev.accepted:
                continue
            try:
                cells = dijkstra_path(grid, current_cell, grid.cell_of(ev.pose.x, ev.pose.y))
            except PathNotFoundError:
                continue
            chosen, chosen_cells = ev, cells
            break
        if chosen is None:
            unreachable.append(UnreachableTarget(tid, _failure_reason(best, params), best))
            continue
        waypoints = [grid.center_of(ix, iy) for ix, iy in chosen_cells]
        legs.append(TrajectoryLeg(tid, chosen, chosen_cells, waypoints))
        current_cell = chosen_cells[-1]

    return Trajectory(start=start, legs=legs, unreachable=unreachable, grid=grid)


def interpolate_path(waypoints: list[tuple[float, float]], step: float = WAYPOINT_STEP) -> list[tuple[float, float]]:
    """Points every `step` meters of arc length along a polyline,
    endpoints included."""
    if not waypoints:
        return []
    if len(waypoints) == 1:
        return [tuple(waypoints[0])]
    pts = [tuple(waypoints[0])]
    carried = 0.0
    for (ax, ay), (bx, by) in zip(waypoints, waypoints[1:]):
        seg = math.hypot(bx - ax, by - ay)
        if seg <= 0:
            continue
        along = step - carried
        while along <= seg:
            t = along / seg
            pts.append((ax + t * (bx - ax), ay + t * (by - ay)))
            along += step
        carried = seg - (along - step)
    last = tuple(waypoints[-1])
    if math.hypot(pts[-1][0] - last[0], pts[-1][1] - last[1]) > 1e-9:
        pts.append(last)
    return pts


def trajectory_frames(traj: Trajectory, camera_height: float, step: float = WAYPOINT_STEP) -> list[tuple[CameraPose, str | None]]:
    """(pose, leg-target-or-None) frames along the trajectory.

    Travel frames look along the direction of motion with zero pitch; the
    final frame of each leg is its accepted viewpoint (aimed at the
    target), tagged with the target id.
    """
    frames: list[tuple[CameraPose, str | None]] = [(traj.start, None)]
    for leg in traj.legs:
        pts = interpolate_path(leg.waypoints, step)
        for (ax, ay), (bx, by) in zip(pts, pts[1:]):
            yaw = math.atan2(by - ay, bx - ax)
            frames.append((CameraPose(bx, by, camera_height, yaw, 0.0), None))
        frames.append((leg.viewpoint.pose, leg.target_id))
    return frames


def trajectory_to_json(traj: Trajectory, params: TrajectoryParams) -> dict:
    return {
        "schema": "trajectory/1",
        "camera_height": params.camera_height,
        "grid": {
            "origin": list(traj.grid.origin),
            "resolution": traj.grid.resolution,
            "shape": list(traj.grid.shape),
        },
        "start": traj.start.to_json(),
        "legs": [
            {
                "target": leg.target_id,
                "viewpoint": leg.viewpoint.to_json(),
                "cells": [list(c) for c in leg.cells],
                "path": [list(p) for p in leg.waypoints],
            }
            for leg in traj.legs
        ],
        "unreachable": [
            {
                "target": u.target_id,
                "reason": u.reason,
                "best": u.best.to_json() if u.best is not None else None,
            }
            for u in traj.unreachable
        ],
    }


def trajectory_from_json(data: dict, grid: BoolGrid | None = None) -> Trajectory:
    if data.get("schema") != "trajectory/1":
        raise SceneFormatError("not a trajectory/1 document")
    legs = [
        TrajectoryLeg(
            target_id=leg["target"],
            viewpoint=ViewpointEvaluation.from_json(leg["viewpoint"]),
            cells=[tuple(c) for c in leg["cells"]],
            waypoints=[tuple(p) for p in leg["path"]],
        )
        for leg in data["legs"]
    ]
    unreachable = [
        UnreachableTarget(
            target_id=u["target"],
            reason=u["reason"],
            best=ViewpointEvaluation.from_json(u["best"]) if u.get("best") else None,
        )
        for u in data["unreachable"]
    ]
    return Trajectory(
        start=CameraPose.from_json(data["start"]),
        legs=legs,
        unreachable=unreachable,
        grid=grid,
    )
