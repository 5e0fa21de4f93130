"""Shared builders for hand-constructed rooms and scenes, plus slow
reference implementations (ray casting, polygon unions) used as oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from roombench.geometry import CameraIntrinsics, RoomSpec, camera_rotation
from roombench.scene import ObjectInstance, SceneState


def make_room(
    width: float = 6.0,
    depth: float = 5.0,
    door: tuple[float, float] | None = None,
    height: float = 3.0,
) -> RoomSpec:
    """Axis-aligned rectangular room with the door on the bottom wall."""
    return RoomSpec(
        floor_polygon=((0.0, 0.0), (width, 0.0), (width, depth), (0.0, depth)),
        wall_height=height,
        door_position=door if door is not None else (width / 2.0, 0.0),
    )


def place(
    scene: SceneState,
    category: str,
    x: float,
    y: float,
    dims: tuple[float, float, float],
    yaw: float = 0.0,
    z: float = 0.0,
    kind: str | None = None,
    parent: str | None = None,
) -> ObjectInstance:
    """Add a raw instance without any geometric validation."""
    inst = ObjectInstance(
        id=scene.next_id(category),
        category=category,
        x=x,
        y=y,
        z=z,
        yaw=yaw,
        dims=dims,
        relation_kind=kind,
        relation_parent=parent,
    )
    scene.add(inst)
    return inst


def ray_box_t(origin, direction, box) -> float:
    """Entry parameter of a ray against an oriented box; inf on a miss."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    ox = origin[0] - box.center[0]
    oy = origin[1] - box.center[1]
    oz = origin[2] - box.center[2]
    local_o = (c * ox + s * oy, -s * ox + c * oy, oz)
    local_d = (c * direction[0] + s * direction[1], -s * direction[0] + c * direction[1], direction[2])
    tmin, tmax = 0.0, math.inf
    for o, d, h in zip(local_o, local_d, box.half_extents):
        if abs(d) < 1e-12:
            if abs(o) > h:
                return math.inf
            continue
        t1, t2 = (-h - o) / d, (h - o) / d
        if t1 > t2:
            t1, t2 = t2, t1
        tmin, tmax = max(tmin, t1), min(tmax, t2)
        if tmin > tmax:
            return math.inf
    return tmin


def occlusion_oracle(
    scene: SceneState,
    position: tuple[float, float, float],
    yaw: float,
    pitch: float,
    target: str,
    rays_per_axis: int = 100,
) -> float:
    """Occlusion estimate by casting rays_per_axis**2 rays through a
    uniform image-plane grid and ranking box hits by distance."""
    intr = CameraIntrinsics()
    rot = camera_rotation(yaw, pitch)
    us = (np.arange(rays_per_axis) + 0.5) / rays_per_axis * intr.width
    vs = (np.arange(rays_per_axis) + 0.5) / rays_per_axis * intr.height
    boxes = {iid: inst.box for iid, inst in scene.instances.items()}
    alone = 0
    visible = 0
    for v in vs:
        for u in us:
            d_cam = np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])
            d_world = rot.T @ (d_cam / np.linalg.norm(d_cam))
            t_target = ray_box_t(position, d_world, boxes[target])
            if not math.isfinite(t_target):
                continue
            alone += 1
            blocked = any(
                ray_box_t(position, d_world, box) < t_target - 1e-9
                for iid, box in boxes.items()
                if iid != target
            )
            if not blocked:
                visible += 1
    if alone == 0:
        return 1.0
    return 1.0 - visible / alone


def shapely_occupancy(scene: SceneState) -> float:
    """Footprint-union area over room area via shapely."""
    from shapely.geometry import Polygon
    from shapely.ops import unary_union

    room_poly = Polygon(scene.room.floor_polygon)
    prints = [Polygon(inst.box.footprint_corners()) for inst in scene.instances.values()]
    if not prints:
        return 0.0
    return unary_union(prints).intersection(room_poly).area / room_poly.area


@pytest.fixture
def room() -> RoomSpec:
    return make_room()


@pytest.fixture
def scene(room) -> SceneState:
    return SceneState(room)
