"""Software rasterization: BEV label grids, a z-buffered flat renderer
producing per-pixel instance labels and depths, occlusion rates, and
PPM/PGM export.

The renderer draws every box face (no backface culling) with
perspective-correct depth interpolation. Room surfaces (floor, walls,
ceiling) carry a small depth bias so object faces resting exactly on them
win their pixels deterministically.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass

import numpy as np

from .errors import RenderError
from .geometry import (
    CameraIntrinsics,
    OrientedBox,
    camera_rotation,
    make_grid_spec,
    triangulate_polygon,
)
from .scene import SceneState

ROOM_LABEL = "room"
NEAR_PLANE = 0.01
ROOM_DEPTH_BIAS = 1e-6

BEV_RESOLUTION = 0.05  # meters per cell, the occupancy/BEV default


@dataclass
class LabelGrid:
    """Top-down grid labeling each cell with the topmost covering instance."""

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray  # int32 (ny, nx); -1 = empty, else index into labels
    labels: list[str]

    def id_at(self, ix: int, iy: int) -> str | None:
        idx = int(self.cells[iy, ix])
        return None if idx < 0 else self.labels[idx]

    def covered_cell_count(self) -> int:
        return int((self.cells >= 0).sum())


@dataclass
class SegDepthImage:
    width: int
    height: int
    label: np.ndarray  # int32 (h, w); -1 = empty, else index into labels
    depth: np.ndarray  # float64 (h, w); +inf where empty
    labels: list[str]

    def pixels_of(self, instance_id: str) -> int:
        if instance_id not in self.labels:
            return 0
        return int((self.label == self.labels.index(instance_id)).sum())


def footprint_cell_indices(
    box: OrientedBox,
    origin: tuple[float, float],
    resolution: float,
    nx: int,
    ny: int,
) -> np.ndarray:
    """Flat indices (iy * nx + ix) of grid cells whose centers the
    footprint covers. Restricted to the footprint's bounding subrectangle
    for speed."""
    corners = box.footprint_corners()
    ix0 = max(0, int(math.floor((corners[:, 0].min() - origin[0]) / resolution - 0.5)))
    ix1 = min(nx - 1, int(math.ceil((corners[:, 0].max() - origin[0]) / resolution)))
    iy0 = max(0, int(math.floor((corners[:, 1].min() - origin[1]) / resolution - 0.5)))
    iy1 = min(ny - 1, int(math.ceil((corners[:, 1].max() - origin[1]) / resolution)))
    if ix1 < ix0 or iy1 < iy0:
        return np.empty(0, dtype=np.int64)
    ixs = np.arange(ix0, ix1 + 1)
    iys = np.arange(iy0, iy1 + 1)
    xg, yg = np.meshgrid(origin[0] + (ixs + 0.5) * resolution, origin[1] + (iys + 0.5) * resolution)
    pts = np.column_stack([xg.ravel(), yg.ravel()])
    mask = box.covers_xy(pts)
    if not mask.any():
        return np.empty(0, dtype=np.int64)
    flat_iy, flat_ix = np.meshgrid(iys, ixs, indexing="ij")
    return (flat_iy.ravel()[mask] * nx + flat_ix.ravel()[mask]).astype(np.int64)


def rasterize_bev(scene: SceneState, resolution: float = BEV_RESOLUTION) -> LabelGrid:
    """Bird's-eye label grid over the room's bounding rectangle; per cell
    the topmost instance whose footprint covers the cell center wins."""
    origin, nx, ny = make_grid_spec(scene.room, resolution)
    if nx < 2 or ny < 2:
        raise RenderError(f"resolution {resolution} m yields a degenerate {nx}x{ny} BEV grid")
    cells = np.full(nx * ny, -1, dtype=np.int32)
    tops = np.full(nx * ny, -np.inf)
    labels = [inst.id for inst in scene.instances.values()]
    for idx, inst in enumerate(scene.instances.values()):
        flat = footprint_cell_indices(inst.box, origin, resolution, nx, ny)
        if flat.size == 0:
            continue
        better = inst.top > tops[flat]
        chosen = flat[better]
        cells[chosen] = idx
        tops[chosen] = inst.top
    return LabelGrid(resolution, origin, cells.reshape(ny, nx), labels)


# ---------------------------------------------------------------------------
# Depth/label renderer


def _box_triangles(box: OrientedBox) -> np.ndarray:
    """(12, 3, 3) world-space triangles covering all six faces."""
    c = box.corners()  # 0-3 bottom CCW, 4-7 top
    quads = (
        (0, 1, 2, 3),  # bottom
        (4, 5, 6, 7),  # top
        (0, 1, 5, 4),
        (1, 2, 6, 5),
        (2, 3, 7, 6),
        (3, 0, 4, 7),
    )
    tris = []
    for a, b, d, e in quads:
        tris.append((c[a], c[b], c[d]))
        tris.append((c[a], c[d], c[e]))
    return np.asarray(tris)


def room_triangles(scene: SceneState) -> np.ndarray:
    """Floor, ceiling, and wall triangles for the room shell."""
    poly = scene.room.polygon_array()
    h = scene.room.wall_height
    tris = []
    for i0, i1, i2 in triangulate_polygon(poly):
        a, b, c = poly[i0], poly[i1], poly[i2]
        tris.append(((a[0], a[1], 0.0), (b[0], b[1], 0.0), (c[0], c[1], 0.0)))
        tris.append(((a[0], a[1], h), (b[0], b[1], h), (c[0], c[1], h)))
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        lo_a, lo_b = (a[0], a[1], 0.0), (b[0], b[1], 0.0)
        hi_a, hi_b = (a[0], a[1], h), (b[0], b[1], h)
        tris.append((lo_a, lo_b, hi_b))
        tris.append((lo_a, hi_b, hi_a))
    return np.asarray(tris)


def _clip_near(tri_cam: np.ndarray, near: float) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against z >= near.

    Returns 0-2 triangles (fan of the clipped polygon).
    """
    verts = list(tri_cam)
    out = []
    n = len(verts)
    for i in range(n):
        cur = verts[i]
        nxt = verts[(i + 1) % n]
        cur_in = cur[2] >= near
        nxt_in = nxt[2] >= near
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            t = (near - cur[2]) / (nxt[2] - cur[2])
            out.append(cur + t * (nxt - cur))
    if len(out) < 3:
        return []
    return [np.asarray((out[0], out[i], out[i + 1])) for i in range(1, len(out) - 1)]


class _Raster:
    def __init__(self, intrinsics: CameraIntrinsics):
        self.intr = intrinsics
        w, h = intrinsics.width, intrinsics.height
        self.zbuf = np.full((h, w), np.inf)
        self.label = np.full((h, w), -1, dtype=np.int32)
        # pixel-center grids, reused per triangle slice
        self._us = np.arange(w) + 0.5
        self._vs = np.arange(h) + 0.5

    def draw(self, tri_cam: np.ndarray, label_idx: int, depth_bias: float = 0.0):
        intr = self.intr
        z = tri_cam[:, 2]
        u = intr.fx * tri_cam[:, 0] / z + intr.cx
        v = intr.fy * tri_cam[:, 1] / z + intr.cy
        x0 = max(0, int(math.floor(u.min() - 0.5)))
        x1 = min(intr.width - 1, int(math.ceil(u.max() - 0.5)))
        y0 = max(0, int(math.floor(v.min() - 0.5)))
        y1 = min(intr.height - 1, int(math.ceil(v.max() - 0.5)))
        if x1 < x0 or y1 < y0:
            return
        area = (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0])
        if abs(area) < 1e-12:
            return
        px = self._us[x0 : x1 + 1][None, :]
        py = self._vs[y0 : y1 + 1][:, None]
        w0 = (u[2] - u[1]) * (py - v[1]) - (v[2] - v[1]) * (px - u[1])
        w1 = (u[0] - u[2]) * (py - v[2]) - (v[0] - v[2]) * (px - u[2])
        w2 = (u[1] - u[0]) * (py - v[0]) - (v[1] - v[0]) * (px - u[0])
        w0 /= area
        w1 /= area
        w2 /= area
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            return
        inv_z = w0 / z[0] + w1 / z[1] + w2 / z[2]
        with np.errstate(divide="ignore"):
            zi = 1.0 / inv_z
        zi = zi + depth_bias
        sub_z = self.zbuf[y0 : y1 + 1, x0 : x1 + 1]
        sub_l = self.label[y0 : y1 + 1, x0 : x1 + 1]
        better = inside & (zi < sub_z)
        sub_z[better] = zi[better]
        sub_l[better] = label_idx


def render_depth_labels(
    scene: SceneState,
    position: tuple[float, float, float],
    yaw: float,
    pitch: float,
    intrinsics: CameraIntrinsics | None = None,
    include_room: bool = True,
    only_instances: list[str] | None = None,
) -> SegDepthImage:
    """Render the scene's box composites into a label/depth image.

    Labels hold instance ids with the reserved ``room`` label on the
    floor/walls/ceiling. Depth is the euclidean distance from the camera
    center in meters, +inf on empty pixels.
    """
    intr = intrinsics if intrinsics is not None else CameraIntrinsics()
    raster = _Raster(intr)
    rot = camera_rotation(yaw, pitch)
    pos = np.asarray(position, dtype=float)

    labels: list[str] = []
    batches: list[tuple[np.ndarray, int, float]] = []
    if include_room:
        labels.append(ROOM_LABEL)
        batches.append((room_triangles(scene), 0, ROOM_DEPTH_BIAS))
    instances = scene.instances.values()
    if only_instances is not None:
        wanted = set(only_instances)
        instances = [inst for inst in instances if inst.id in wanted]
    for inst in instances:
        label_idx = len(labels)
        labels.append(inst.id)
        tris = [_box_triangles(b) for b in inst.part_boxes(scene.catalog)]
        batches.append((np.concatenate(tris), label_idx, 0.0))

    for tris, label_idx, bias in batches:
        flat = tris.reshape(-1, 3)
        cam = (flat - pos) @ rot.T
        cam_tris = cam.reshape(-1, 3, 3)
        # quick reject: all vertices behind the near plane
        keep = (cam_tris[:, :, 2] >= NEAR_PLANE).any(axis=1)
        for tri in cam_tris[keep]:
            if (tri[:, 2] >= NEAR_PLANE).all():
                raster.draw(tri, label_idx, bias)
            else:
                for piece in _clip_near(tri, NEAR_PLANE):
                    raster.draw(piece, label_idx, bias)

    # convert camera-z to euclidean ray distance
    us = (np.arange(intr.width) + 0.5 - intr.cx) / intr.fx
    vs = (np.arange(intr.height) + 0.5 - intr.cy) / intr.fy
    ray_norm = np.sqrt(us[None, :] ** 2 + vs[:, None] ** 2 + 1.0)
    depth = raster.zbuf * ray_norm
    depth[raster.label < 0] = np.inf
    return SegDepthImage(intr.width, intr.height, raster.label, depth, labels)


def occlusion_rate(
    scene: SceneState,
    position: tuple[float, float, float],
    yaw: float,
    pitch: float,
    target: str,
    intrinsics: CameraIntrinsics | None = None,
) -> float:
    """1 - (target pixels with all geometry) / (target pixels alone).

    The target-alone render excludes the room shell, so self-standing
    geometry never counts as its own occluder. Returns 1.0 when the
    target projects to zero pixels on its own.
    """
    scene.get(target)  # raises on unknown ids
    alone = render_depth_labels(scene, position, yaw, pitch, intrinsics, include_room=False, only_instances=[target])
    alone_pixels = alone.pixels_of(target)
    if alone_pixels == 0:
        return 1.0
    full = render_depth_labels(scene, position, yaw, pitch, intrinsics, include_room=True)
    visible = full.pixels_of(target)
    return float(min(1.0, max(0.0, 1.0 - visible / alone_pixels)))


# ---------------------------------------------------------------------------
# Image export


def label_color(index: int) -> tuple[int, int, int]:
    """Deterministic, well-separated palette via golden-ratio hue stepping."""
    hue = (index * 0.61803398875) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
    return (int(r * 255), int(g * 255), int(b * 255))


def _write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.astype(np.uint8).tobytes())


def export_bev_ppm(grid: LabelGrid, path, legend_path=None) -> dict:
    """Write the BEV as P6 PPM plus a JSON legend (id -> color)."""
    ny, nx = grid.cells.shape
    rgb = np.zeros((ny, nx, 3), dtype=np.uint8)
    rgb[grid.cells < 0] = (20, 20, 20)
    legend = {}
    for idx, inst_id in enumerate(grid.labels):
        color = label_color(idx)
        legend[inst_id] = {"color": list(color)}
        rgb[grid.cells == idx] = color
    # image rows top-down, world y up
    _write_ppm(path, rgb[::-1])
    if legend_path is not None:
        from .ioutil import write_canonical_json

        write_canonical_json(legend_path, legend)
    return legend


def export_labels_ppm(image: SegDepthImage, path) -> None:
    rgb = np.zeros((image.height, image.width, 3), dtype=np.uint8)
    for idx, inst_id in enumerate(image.labels):
        color = (90, 90, 90) if inst_id == ROOM_LABEL else label_color(idx)
        rgb[image.label == idx] = color
    _write_ppm(path, rgb)


def export_depth_pgm(image: SegDepthImage, path) -> None:
    """16-bit PGM, millimeter-quantized; 0 marks empty pixels."""
    mm = np.where(np.isfinite(image.depth), np.clip(image.depth * 1000.0, 1, 65535), 0.0)
    data = mm.astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())
