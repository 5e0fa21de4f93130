"""Spatial primitives: room polygons, oriented boxes, collision and containment tests.

All lengths are meters, all angles radians. The world frame is x/y on the
floor plane with z up; box yaw rotates about z, counter-clockwise, with
yaw 0 aligned to +x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RoomBenchError

# Touching faces do not collide: boxes must overlap by more than this.
CONTACT_TOLERANCE = 1e-6

# A point within this distance of a polygon edge counts as on the boundary.
BOUNDARY_EPS = 1e-7


def normalize_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a < 0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class OrientedBox:
    """Closed box with center, half extents, and yaw about the vertical axis."""

    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        if min(self.half_extents) <= 0:
            raise ValueError(f"half_extents must be positive, got {self.half_extents}")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def bottom(self) -> float:
        return self.center[2] - self.half_extents[2]

    @property
    def top(self) -> float:
        return self.center[2] + self.half_extents[2]

    def footprint_corners(self) -> np.ndarray:
        """The four xy corners, shape (4, 2), counter-clockwise."""
        cx, cy, _ = self.center
        hx, hy, _ = self.half_extents
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local = np.array([(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)])
        rot = np.array([(c, -s), (s, c)])
        return local @ rot.T + (cx, cy)

    def corners(self) -> np.ndarray:
        """All eight corners, shape (8, 3)."""
        foot = self.footprint_corners()
        lo = np.column_stack([foot, np.full(4, self.bottom)])
        hi = np.column_stack([foot, np.full(4, self.top)])
        return np.vstack([lo, hi])

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Map world xy points (N, 2) into the box's footprint frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        d = np.asarray(points, dtype=float) - (self.center[0], self.center[1])
        return np.column_stack([d[:, 0] * c + d[:, 1] * s, -d[:, 0] * s + d[:, 1] * c])

    def covers_xy(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of xy points inside the closed footprint."""
        local = self.to_local(points)
        hx, hy, _ = self.half_extents
        return (np.abs(local[:, 0]) <= hx) & (np.abs(local[:, 1]) <= hy)

    def footprint_distance_xy(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from xy points to the footprint (0 inside)."""
        local = self.to_local(points)
        hx, hy, _ = self.half_extents
        dx = np.maximum(np.abs(local[:, 0]) - hx, 0.0)
        dy = np.maximum(np.abs(local[:, 1]) - hy, 0.0)
        return np.hypot(dx, dy)


def _axis_overlap(corners_a: np.ndarray, corners_b: np.ndarray, axis: tuple[float, float]) -> float:
    pa = corners_a @ axis
    pb = corners_b @ axis
    return min(pa.max(), pb.max()) - max(pa.min(), pb.min())


def obb_intersects(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis overlap test for two yaw-only boxes.

    True iff the closed boxes overlap with penetration greater than
    CONTACT_TOLERANCE on every axis, so touching faces do not collide.
    Candidate axes are the two footprint edge normals of each box plus z.
    """
    dz = min(a.top, b.top) - max(a.bottom, b.bottom)
    if dz <= CONTACT_TOLERANCE:
        return False
    ca = a.footprint_corners()
    cb = b.footprint_corners()
    for yaw in (a.yaw, b.yaw):
        c, s = math.cos(yaw), math.sin(yaw)
        for axis in ((c, s), (-s, c)):
            if _axis_overlap(ca, cb, axis) <= CONTACT_TOLERANCE:
                return False
    return True


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise rings."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def point_in_polygon(point: tuple[float, float], vertices: np.ndarray, eps: float = BOUNDARY_EPS) -> bool:
    """Inside-or-on test via ray crossing; boundary counts as inside."""
    v = np.asarray(vertices, dtype=float)
    x, y = point
    n = len(v)
    inside = False
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        # on-edge check
        ex, ey = x2 - x1, y2 - y1
        length2 = ex * ex + ey * ey
        if length2 > 0:
            t = ((x - x1) * ex + (y - y1) * ey) / length2
            t = min(1.0, max(0.0, t))
            px, py = x1 + t * ex, y1 + t * ey
            if (x - px) ** 2 + (y - py) ** 2 <= eps * eps:
                return True
        if (y1 > y) != (y2 > y):
            xt = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xt:
                inside = not inside
    return inside


def point_to_segment_distance(point: tuple[float, float], a: tuple[float, float], b: tuple[float, float]) -> float:
    px, py = point
    ax, ay = a
    bx, by = b
    ex, ey = bx - ax, by - ay
    length2 = ex * ex + ey * ey
    if length2 == 0:
        return math.hypot(px - ax, py - ay)
    t = min(1.0, max(0.0, ((px - ax) * ex + (py - ay) * ey) / length2))
    return math.hypot(px - (ax + t * ex), py - (ay + t * ey))


def triangulate_polygon(vertices: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear-clipping triangulation of a simple CCW polygon (vertex indices)."""
    v = np.asarray(vertices, dtype=float)
    remaining = list(range(len(v)))
    triangles: list[tuple[int, int, int]] = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(remaining) > 3 and guard < 10000:
        guard += 1
        n = len(remaining)
        clipped = False
        for k in range(n):
            i0, i1, i2 = remaining[(k - 1) % n], remaining[k], remaining[(k + 1) % n]
            a, b, c = v[i0], v[i1], v[i2]
            if cross(a, b, c) <= 1e-12:
                continue  # reflex or degenerate corner
            ear = True
            for j in remaining:
                if j in (i0, i1, i2):
                    continue
                p = v[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    ear = False
                    break
            if ear:
                triangles.append((i0, i1, i2))
                remaining.pop(k)
                clipped = True
                break
        if not clipped:
            break
    if len(remaining) == 3:
        triangles.append(tuple(remaining))
    return triangles


@dataclass(frozen=True)
class RoomSpec:
    """Simple CCW floor polygon with wall height and a door point on the boundary."""

    floor_polygon: tuple[tuple[float, float], ...]
    wall_height: float
    door_position: tuple[float, float]

    def __post_init__(self):
        poly = np.asarray(self.floor_polygon, dtype=float)
        if len(poly) < 3:
            raise ValueError("floor polygon needs at least 3 vertices")
        if polygon_area(poly) <= 0:
            raise ValueError("floor polygon must be counter-clockwise with positive area")
        n = len(poly)
        for i in range(n):
            for j in range(i + 1, n):
                if abs(i - j) in (0, 1, n - 1):
                    continue
                if _segments_properly_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                    raise ValueError("floor polygon is self-intersecting")
        if self.wall_height <= 0:
            raise ValueError("wall height must be positive")
        if self.door_edge_distance() > 1e-6:
            raise ValueError("door position must lie on the polygon boundary")

    def door_edge_distance(self) -> float:
        poly = self.polygon_array()
        n = len(poly)
        return min(
            point_to_segment_distance(self.door_position, tuple(poly[i]), tuple(poly[(i + 1) % n]))
            for i in range(n)
        )

    def polygon_array(self) -> np.ndarray:
        return np.asarray(self.floor_polygon, dtype=float)

    def area(self) -> float:
        return polygon_area(self.polygon_array())

    def bounds(self) -> tuple[float, float, float, float]:
        poly = self.polygon_array()
        return (
            float(poly[:, 0].min()),
            float(poly[:, 1].min()),
            float(poly[:, 0].max()),
            float(poly[:, 1].max()),
        )

    def centroid(self) -> tuple[float, float]:
        poly = self.polygon_array()
        x, y = poly[:, 0], poly[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        cx = float(((x + xn) * cross).sum() / (6.0 * a))
        cy = float(((y + yn) * cross).sum() / (6.0 * a))
        return cx, cy

    def edges(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        poly = self.polygon_array()
        n = len(poly)
        return [(tuple(poly[i]), tuple(poly[(i + 1) % n])) for i in range(n)]

    def contains_point(self, x: float, y: float) -> bool:
        return point_in_polygon((x, y), self.polygon_array())

    def wall_distance(self, x: float, y: float) -> float:
        """Distance from a point to the nearest wall edge."""
        return min(point_to_segment_distance((x, y), a, b) for a, b in self.edges())

    def scaled(self, factor: float) -> "RoomSpec":
        """Room scaled about its centroid; the door scales with its edge."""
        cx, cy = self.centroid()
        poly = [(cx + (x - cx) * factor, cy + (y - cy) * factor) for x, y in self.floor_polygon]
        door = (cx + (self.door_position[0] - cx) * factor, cy + (self.door_position[1] - cy) * factor)
        return RoomSpec(tuple(poly), self.wall_height, door)


def contained_in_room(box: OrientedBox, room: RoomSpec) -> bool:
    """True iff all four footprint corners are inside-or-on the floor polygon
    and the box top does not exceed the wall height."""
    if box.top > room.wall_height + BOUNDARY_EPS:
        return False
    poly = room.polygon_array()
    return all(point_in_polygon((float(px), float(py)), poly) for px, py in box.footprint_corners())


@dataclass
class BoolGrid:
    """Boolean floor grid with world-coordinate helpers."""

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray  # shape (ny, nx), dtype bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin[0]) / self.resolution))
        iy = int(math.floor((y - self.origin[1]) / self.resolution))
        return ix, iy

    def center_of(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin[0] + (ix + 0.5) * self.resolution,
            self.origin[1] + (iy + 0.5) * self.resolution,
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        ny, nx = self.cells.shape
        return 0 <= ix < nx and 0 <= iy < ny

    def is_free(self, ix: int, iy: int) -> bool:
        return self.in_bounds(ix, iy) and bool(self.cells[iy, ix])


def make_grid_spec(room: RoomSpec, resolution: float) -> tuple[tuple[float, float], int, int]:
    """Origin and cell counts of a grid covering the room's bounding rectangle."""
    if resolution <= 0:
        raise RoomBenchError("grid resolution must be positive")
    x0, y0, x1, y1 = room.bounds()
    nx = max(1, int(math.ceil((x1 - x0) / resolution - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / resolution - 1e-9)))
    return (x0, y0), nx, ny


def cell_centers(origin: tuple[float, float], nx: int, ny: int, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    xs = origin[0] + (np.arange(nx) + 0.5) * resolution
    ys = origin[1] + (np.arange(ny) + 0.5) * resolution
    return np.meshgrid(xs, ys)


def room_interior_mask(room: RoomSpec, origin: tuple[float, float], nx: int, ny: int, resolution: float) -> np.ndarray:
    """Boolean (ny, nx) mask of cells whose centers fall inside the floor polygon."""
    xg, yg = cell_centers(origin, nx, ny, resolution)
    poly = room.polygon_array()
    n = len(poly)
    inside = np.zeros((ny, nx), dtype=bool)
    px, py = xg, yg
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xt = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < xt)
    return inside


def accessible_grid(
    room: RoomSpec,
    boxes: list[OrientedBox],
    resolution: float = 0.1,
    clearance: float = 0.25,
) -> BoolGrid:
    """Grid of floor cells a camera can occupy.

    A cell is accessible when its center lies inside the floor polygon and
    at least ``clearance`` from every object footprint (in particular not
    inside one). Growing the clearance can only shrink the accessible set.
    """
    origin, nx, ny = make_grid_spec(room, resolution)
    inside = room_interior_mask(room, origin, nx, ny, resolution)
    xg, yg = cell_centers(origin, nx, ny, resolution)
    pts = np.column_stack([xg.ravel(), yg.ravel()])

    free = inside.ravel().copy()
    for box in boxes:
        if not free.any():
            break
        free &= box.footprint_distance_xy(pts) >= max(clearance, 0.0)
    return BoolGrid(resolution=resolution, origin=origin, cells=free.reshape(ny, nx))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera model with symmetric horizontal/vertical fields of view."""

    width: int = 320
    height: int = 240
    fov_x: float = math.radians(90.0)
    fov_y: float = math.radians(73.74)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        for fov in (self.fov_x, self.fov_y):
            if not 0.0 < fov < math.pi:
                raise ValueError("field of view must lie in (0, pi)")

    @property
    def fx(self) -> float:
        return self.width / (2.0 * math.tan(self.fov_x / 2.0))

    @property
    def fy(self) -> float:
        return self.height / (2.0 * math.tan(self.fov_y / 2.0))

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0


def camera_rotation(yaw: float, pitch: float) -> np.ndarray:
    """World-to-camera rotation for a yaw-then-pitch camera with zero roll.

    Camera convention: +z forward (optical axis), +x right, +y down.
    Yaw 0 looks along +x world; positive pitch looks downward.
    """
    cy_, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([cy_ * cp, sy * cp, -sp])
    right = np.array([-sy, cy_, 0.0])
    down = np.cross(forward, right)
    return np.vstack([right, down, forward])


def project_points(
    points: np.ndarray,
    position: np.ndarray,
    yaw: float,
    pitch: float,
    intrinsics: CameraIntrinsics,
) -> tuple[np.ndarray, np.ndarray]:
    """Project world points (N, 3) to pixel coordinates.

    Returns (pixels (N, 2), cam_z (N,)); points behind the camera have
    non-positive cam_z and undefined pixel coordinates.
    """
    r = camera_rotation(yaw, pitch)
    cam = (np.asarray(points, dtype=float) - np.asarray(position, dtype=float)) @ r.T
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
        v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    return np.column_stack([u, v]), z


def box_sample_points(box: OrientedBox) -> np.ndarray:
    """32 deterministic probe points on a box: 8 corners plus 2 interior
    samples (at one third and two thirds) on each of the 12 edges."""
    corners = box.corners()
    edges = [
        (0, 1), (1, 2), (2, 3), (3, 0),
        (4, 5), (5, 6), (6, 7), (7, 4),
        (0, 4), (1, 5), (2, 6), (3, 7),
    ]
    pts = [corners]
    for i, j in edges:
        a, b = corners[i], corners[j]
        pts.append(np.array([a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0]))
    return np.vstack(pts)


def fov_containment(
    box: OrientedBox,
    position: np.ndarray,
    yaw: float,
    pitch: float,
    intrinsics: CameraIntrinsics,
    near: float = 0.05,
) -> float:
    """Fraction of a box's 32 probe points inside the camera frustum.

    A point counts when it is beyond the near plane and projects within
    the image rectangle. 1.0 means the box is fully framed.
    """
    pts = box_sample_points(box)
    pix, z = project_points(pts, position, yaw, pitch, intrinsics)
    ok = (
        (z > near)
        & (pix[:, 0] >= 0.0)
        & (pix[:, 0] <= intrinsics.width)
        & (pix[:, 1] >= 0.0)
        & (pix[:, 1] <= intrinsics.height)
    )
    return float(ok.sum()) / len(pts)
