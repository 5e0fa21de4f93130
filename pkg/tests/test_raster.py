"""BEV rasterization, occupancy, the depth/label renderer, and occlusion."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from roombench.diagnostics import occupancy_ratio
from roombench.errors import SceneFormatError
from roombench.raster import (
    ROOM_LABEL,
    CameraIntrinsics,
    export_bev_ppm,
    export_depth_pgm,
    export_labels_ppm,
    occlusion_rate,
    rasterize_bev,
    render_depth_labels,
)
from roombench.scene import SceneState

from conftest import make_room, occlusion_oracle, place, shapely_occupancy


def cell_of(grid, x, y):
    ix = int((x - grid.origin[0]) / grid.resolution)
    iy = int((y - grid.origin[1]) / grid.resolution)
    return ix, iy


class TestBevGrid:
    def test_cell_labels_match_footprints(self, scene):
        desk = place(scene, "desk", 3, 2, (1.4, 0.7, 0.75))
        grid = rasterize_bev(scene)
        ix, iy = cell_of(grid, 3, 2)
        assert grid.id_at(ix, iy) == desk.id
        ox, oy = cell_of(grid, 0.2, 0.2)
        assert grid.id_at(ox, oy) is None

    def test_topmost_instance_wins(self, scene):
        desk = place(scene, "desk", 3, 2, (1.4, 0.7, 0.75))
        monitor = place(scene, "monitor", 3, 2, (0.16, 0.55, 0.45), z=0.75)
        grid = rasterize_bev(scene)
        ix, iy = cell_of(grid, 3, 2)
        assert grid.id_at(ix, iy) == monitor.id
        edge_ix, edge_iy = cell_of(grid, 3 - 0.6, 2)  # desk-only territory
        assert grid.id_at(edge_ix, edge_iy) == desk.id

    def test_covered_count_tracks_area(self, scene):
        place(scene, "bed", 3, 2.5, (2.0, 1.5, 0.01))
        grid = rasterize_bev(scene)
        covered = grid.covered_cell_count() * grid.resolution**2
        assert covered == pytest.approx(3.0, abs=0.1)

    def test_rotated_footprint_cells(self, scene):
        inst = place(scene, "desk", 3, 2.5, (1.4, 0.7, 0.75), yaw=math.pi / 4)
        grid = rasterize_bev(scene)
        ix, iy = cell_of(grid, 3, 2.5)
        assert grid.id_at(ix, iy) == inst.id
        # the axis-aligned corner of the bounding rectangle is not covered
        cx = 3 + (0.7 + 0.35) / math.sqrt(2) * 0.9
        ix, iy = cell_of(grid, cx, 2.5 + 0.9)
        assert grid.id_at(ix, iy) is None


class TestOccupancy:
    def test_empty_scene_is_zero(self, scene):
        assert occupancy_ratio(scene) == 0.0

    def test_single_box_analytic(self, scene):
        place(scene, "bed", 3, 2.5, (2.0, 1.5, 0.01))
        expected = (2.0 * 1.5) / (6.0 * 5.0)
        assert occupancy_ratio(scene) == pytest.approx(expected, abs=0.005)

    def test_overlap_not_double_counted(self, scene):
        place(scene, "bed", 3, 2.5, (2.0, 1.5, 0.01))
        place(scene, "bed", 3, 2.5, (2.0, 1.5, 0.02))
        expected = (2.0 * 1.5) / 30.0
        assert occupancy_ratio(scene) == pytest.approx(expected, abs=0.005)

    @pytest.mark.parametrize("layout", range(5))
    def test_matches_polygon_union(self, layout):
        rng = np.random.default_rng(layout)
        scene = SceneState(make_room(8.0, 6.0))
        for _ in range(6 + layout * 3):
            dims = (rng.uniform(0.4, 1.6), rng.uniform(0.4, 1.6), 0.5)
            x = rng.uniform(1.0, 7.0)
            y = rng.uniform(1.0, 5.0)
            place(scene, "cabinet", x, y, dims, yaw=rng.uniform(0, math.pi))
        assert occupancy_ratio(scene) == pytest.approx(shapely_occupancy(scene), abs=0.01)


class TestRenderer:
    def test_box_seen_at_image_center(self, scene):
        box = place(scene, "wardrobe", 4, 2.5, (0.6, 1.2, 2.0))
        image = render_depth_labels(scene, (1.0, 2.5, 1.0), 0.0, 0.0)
        intr = CameraIntrinsics()
        center = image.label[intr.height // 2, intr.width // 2]
        assert image.labels[center] == box.id
        # depth at the center pixel is the distance to the front face
        assert image.depth[intr.height // 2, intr.width // 2] == pytest.approx(2.7, abs=0.01)

    def test_room_fills_background(self, scene):
        image = render_depth_labels(scene, (3.0, 2.5, 1.5), 0.0, 0.0)
        assert set(np.unique(image.label)) == {image.labels.index(ROOM_LABEL)}
        assert np.isfinite(image.depth).all()

    def test_object_in_front_of_wall_wins(self, scene):
        box = place(scene, "wardrobe", 5.5, 2.5, (0.6, 1.2, 2.0))
        image = render_depth_labels(scene, (3.0, 2.5, 1.0), 0.0, 0.0)
        assert image.pixels_of(box.id) > 0

    def test_only_instances_filter(self, scene):
        a = place(scene, "wardrobe", 4, 2.5, (0.6, 1.2, 2.0))
        b = place(scene, "chair", 2.5, 2.5, (0.5, 0.5, 0.9))
        image = render_depth_labels(
            scene, (1.0, 2.5, 1.0), 0.0, 0.0, include_room=False, only_instances=[a.id]
        )
        assert image.pixels_of(a.id) > 0
        assert image.pixels_of(b.id) == 0
        assert image.pixels_of(ROOM_LABEL) == 0


def half_cover_scene():
    """Camera at z=1 looking +x; the blocker's top edge projects exactly
    onto the horizontal image midline, hiding the lower half of a target
    that is vertically centered on the camera axis."""
    scene = SceneState(make_room(10.0, 6.0))
    target = place(scene, "wardrobe", 4.5, 3.0, (0.1, 1.5, 2.0))
    place(scene, "cabinet", 2.45, 3.0, (0.1, 1.2, 1.0))
    return scene, target.id, (0.5, 3.0, 1.0)


class TestOcclusion:
    def test_unobstructed_is_zero(self, scene):
        t = place(scene, "wardrobe", 4, 2.5, (0.6, 1.2, 2.0))
        assert occlusion_rate(scene, (1.0, 2.5, 1.0), 0.0, 0.0, t.id) == 0.0

    def test_fully_blocked_is_one(self, scene):
        t = place(scene, "chair", 4.5, 2.5, (0.5, 0.5, 0.9))
        place(scene, "wardrobe", 2.5, 2.5, (0.6, 2.4, 2.6))
        assert occlusion_rate(scene, (0.8, 2.5, 1.0), 0.0, 0.0, t.id) == pytest.approx(1.0, abs=0.01)

    def test_half_cover_analytic(self):
        scene, target, cam = half_cover_scene()
        rate = occlusion_rate(scene, cam, 0.0, 0.0, target)
        assert rate == pytest.approx(0.5, abs=0.02)

    def test_half_cover_matches_ray_oracle(self):
        scene, target, cam = half_cover_scene()
        rate = occlusion_rate(scene, cam, 0.0, 0.0, target)
        oracle = occlusion_oracle(scene, cam, 0.0, 0.0, target, rays_per_axis=60)
        assert rate == pytest.approx(oracle, abs=0.05)

    def test_offset_occluder_matches_ray_oracle(self, scene):
        t = place(scene, "wardrobe", 4.5, 2.5, (0.4, 1.6, 2.0))
        place(scene, "cabinet", 3.0, 2.0, (0.5, 0.9, 1.4), yaw=0.4)
        rate = occlusion_rate(scene, (1.0, 2.5, 1.2), 0.0, 0.05, t.id)
        oracle = occlusion_oracle(scene, (1.0, 2.5, 1.2), 0.0, 0.05, t.id, rays_per_axis=60)
        assert 0.0 < rate < 1.0
        assert rate == pytest.approx(oracle, abs=0.05)

    def test_target_behind_camera_counts_as_occluded(self, scene):
        t = place(scene, "chair", 1.0, 2.5, (0.5, 0.5, 0.9))
        assert occlusion_rate(scene, (4.0, 2.5, 1.0), 0.0, 0.0, t.id) == 1.0

    def test_unknown_target_raises(self, scene):
        with pytest.raises(SceneFormatError):
            occlusion_rate(scene, (1.0, 2.5, 1.0), 0.0, 0.0, "ghost_0000")


class TestImageExport:
    def test_ppm_header_and_size(self, scene, tmp_path):
        place(scene, "desk", 3, 2, (1.4, 0.7, 0.75))
        grid = rasterize_bev(scene)
        out = tmp_path / "bev.ppm"
        legend_path = tmp_path / "legend.json"
        legend = export_bev_ppm(grid, out, legend_path)
        data = out.read_bytes()
        ny, nx = grid.cells.shape
        header = f"P6\n{nx} {ny}\n255\n".encode("ascii")
        assert data.startswith(header)
        assert len(data) == len(header) + nx * ny * 3
        assert json.loads(legend_path.read_text()) == legend
        assert set(legend) == {"desk_0000"}

    def test_export_deterministic(self, scene, tmp_path):
        place(scene, "desk", 3, 2, (1.4, 0.7, 0.75))
        grid = rasterize_bev(scene)
        a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
        export_bev_ppm(grid, a)
        export_bev_ppm(grid, b)
        assert a.read_bytes() == b.read_bytes()

    def test_label_and_depth_images(self, scene, tmp_path):
        place(scene, "wardrobe", 4, 2.5, (0.6, 1.2, 2.0))
        image = render_depth_labels(scene, (1.0, 2.5, 1.0), 0.0, 0.0)
        labels = tmp_path / "labels.ppm"
        depth = tmp_path / "depth.pgm"
        export_labels_ppm(image, labels)
        export_depth_pgm(image, depth)
        assert labels.read_bytes().startswith(f"P6\n{image.width} {image.height}\n255\n".encode())
        assert depth.read_bytes().startswith(f"P5\n{image.width} {image.height}\n65535\n".encode())
