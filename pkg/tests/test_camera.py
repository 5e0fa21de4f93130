"""Viewpoint sampling, acceptance checks, grid pathfinding, trajectories."""

from __future__ import annotations

import heapq
import math

import numpy as np
import pytest

from roombench.camera import (
    MIN_VIEW_DISTANCE,
    SQRT2,
    BoolGrid,
    TrajectoryParams,
    accessible_grid,
    dijkstra_path,
    evaluate_viewpoint,
    interpolate_path,
    path_cost,
    plan_trajectory,
    sample_viewpoint,
    trajectory_from_json,
    trajectory_to_json,
)
from roombench.errors import InaccessibleCellError, PathNotFoundError
from roombench.scene import SceneState

from conftest import make_room, place


def ucs_cost(free: np.ndarray, start, goal) -> float:
    """Uniform-cost search over the same 8-connected motion model,
    implemented independently of the production router."""
    ny, nx = free.shape
    dist = {start: 0.0}
    heap = [(0.0, start)]
    seen = set()
    while heap:
        d, cell = heapq.heappop(heap)
        if cell in seen:
            continue
        seen.add(cell)
        if cell == goal:
            return d
        cx, cy = cell
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nxt = (cx + dx, cy + dy)
                if not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny):
                    continue
                if not free[nxt[1], nxt[0]]:
                    continue
                step = SQRT2 if dx and dy else 1.0
                nd = d + step
                if nd < dist.get(nxt, math.inf):
                    dist[nxt] = nd
                    heapq.heappush(heap, (nd, nxt))
    return math.inf


def random_grid(rng, nx=20, ny=20, p_block=0.25) -> BoolGrid:
    free = rng.random((ny, nx)) > p_block
    return BoolGrid(resolution=1.0, origin=(0.0, 0.0), cells=free)


class TestDijkstra:
    def test_costs_match_uniform_cost_search(self):
        rng = np.random.default_rng(0)
        compared = 0
        for _ in range(50):
            grid = random_grid(rng)
            frees = np.argwhere(grid.cells)
            if len(frees) < 2:
                continue
            pick = rng.choice(len(frees), size=2, replace=False)
            start = (int(frees[pick[0]][1]), int(frees[pick[0]][0]))
            goal = (int(frees[pick[1]][1]), int(frees[pick[1]][0]))
            expected = ucs_cost(grid.cells, start, goal)
            try:
                path = dijkstra_path(grid, start, goal)
            except PathNotFoundError:
                assert expected == math.inf
                continue
            assert path_cost(path) == pytest.approx(expected, abs=1e-9)
            compared += 1
        assert compared >= 30

    def test_trivial_and_straight_paths(self):
        grid = BoolGrid(resolution=1.0, origin=(0.0, 0.0), cells=np.ones((5, 5), bool))
        assert dijkstra_path(grid, (2, 2), (2, 2)) == [(2, 2)]
        assert path_cost(dijkstra_path(grid, (0, 2), (4, 2))) == pytest.approx(4.0)
        assert path_cost(dijkstra_path(grid, (0, 0), (4, 4))) == pytest.approx(4 * SQRT2)

    def test_walls_force_detour(self):
        free = np.ones((5, 5), bool)
        free[0:4, 2] = False  # vertical wall with a gap at the top row
        grid = BoolGrid(resolution=1.0, origin=(0.0, 0.0), cells=free)
        path = dijkstra_path(grid, (0, 0), (4, 0))
        assert all(grid.cells[cy, cx] for cx, cy in path)
        assert path_cost(path) > 4.0

    def test_blocked_raises(self):
        free = np.ones((5, 5), bool)
        free[:, 2] = False
        grid = BoolGrid(resolution=1.0, origin=(0.0, 0.0), cells=free)
        with pytest.raises(PathNotFoundError):
            dijkstra_path(grid, (0, 0), (4, 0))

    def test_path_cells_are_adjacent(self):
        rng = np.random.default_rng(3)
        grid = random_grid(rng, p_block=0.3)
        frees = np.argwhere(grid.cells)
        start = (int(frees[0][1]), int(frees[0][0]))
        goal = (int(frees[-1][1]), int(frees[-1][0]))
        try:
            path = dijkstra_path(grid, start, goal)
        except PathNotFoundError:
            pytest.skip("disconnected sample")
        for (ax, ay), (bx, by) in zip(path, path[1:]):
            assert max(abs(ax - bx), abs(ay - by)) == 1


class TestAccessibleGridUse:
    def test_clearance_blocks_near_boxes(self, scene):
        inst = place(scene, "wardrobe", 3, 2.5, (1.0, 0.6, 2.0))
        grid = accessible_grid(scene.room, [inst.box], resolution=0.1, clearance=0.25)
        assert not grid.is_free(*grid.cell_of(3.0, 2.5))
        assert not grid.is_free(*grid.cell_of(3.0, 2.5 + 0.3 + 0.1))
        assert grid.is_free(*grid.cell_of(1.0, 1.0))

    def test_inaccessible_start_raises(self, scene):
        inst = place(scene, "wardrobe", 3, 0.4, (6.0, 0.8, 2.0))  # wall of storage over the door
        with pytest.raises(InaccessibleCellError):
            plan_trajectory(scene, [inst.id])


class TestViewpointSampling:
    def test_annulus_radii_and_area_uniformity(self, scene):
        target = place(scene, "chair", 3, 2.5, (0.5, 0.5, 0.9))
        params = TrajectoryParams(max_distance=3.0)
        rng = np.random.default_rng(0)
        radii = []
        for _ in range(4000):
            pose = sample_viewpoint(rng, target, params)
            r = math.hypot(pose.x - 3, pose.y - 2.5)
            radii.append(r)
            assert MIN_VIEW_DISTANCE - 1e-9 <= r <= 3.0 + 1e-9
            assert pose.z == params.camera_height
        # area-uniform sampling means r^2 is uniform on [r0^2, r1^2]
        u = (np.array(radii) ** 2 - MIN_VIEW_DISTANCE**2) / (9.0 - MIN_VIEW_DISTANCE**2)
        hist, _ = np.histogram(u, bins=10, range=(0, 1))
        assert hist.min() > 0.5 * 400 and hist.max() < 1.5 * 400

    def test_pose_aims_at_target_center(self, scene):
        target = place(scene, "chair", 3, 2.5, (0.5, 0.5, 0.9))
        params = TrajectoryParams(camera_height=1.6)
        rng = np.random.default_rng(1)
        pose = sample_viewpoint(rng, target, params)
        expect_yaw = math.atan2(2.5 - pose.y, 3 - pose.x)
        assert pose.yaw == pytest.approx(expect_yaw, abs=1e-9)
        dist = math.hypot(pose.x - 3, pose.y - 2.5)
        expect_pitch = math.atan2(1.6 - 0.45, dist)
        assert pose.pitch == pytest.approx(expect_pitch, abs=1e-9)


class TestViewpointAcceptance:
    def test_clear_view_accepted(self, scene):
        target = place(scene, "chair", 3, 2.5, (0.5, 0.5, 0.9))
        params = TrajectoryParams()
        grid = accessible_grid(scene.room, [target.box])
        from roombench.camera import CameraPose

        pose = CameraPose(3.0, 0.8, 1.0, math.pi / 2, math.atan2(1.0 - 0.45, 1.7))
        ev = evaluate_viewpoint(pose, target, params, scene, grid)
        assert ev.accessible and ev.accepted
        assert ev.fov_percent > 0.95
        assert ev.occlusion <= 0.1

    def test_occluded_view_rejected(self, scene):
        target = place(scene, "chair", 4.5, 2.5, (0.5, 0.5, 0.9))
        blocker = place(scene, "wardrobe", 3.0, 2.5, (0.6, 2.0, 2.2))
        params = TrajectoryParams()
        grid = accessible_grid(scene.room, [target.box, blocker.box])
        from roombench.camera import CameraPose

        pose = CameraPose(1.0, 2.5, 1.0, 0.0, 0.15)
        ev = evaluate_viewpoint(pose, target, params, scene, grid)
        assert not ev.accepted
        assert ev.occlusion > 0.1

    def test_partial_fov_rejected(self, scene):
        target = place(scene, "wardrobe", 3, 2.5, (0.8, 1.6, 2.4))
        params = TrajectoryParams()
        grid = accessible_grid(scene.room, [target.box])
        from roombench.camera import CameraPose

        pose = CameraPose(3.0, 1.2, 1.0, math.pi / 2, 0.0)  # too close to contain 2.4 m of height
        ev = evaluate_viewpoint(pose, target, params, scene, grid)
        assert ev.fov_percent < 0.95
        assert not ev.accepted


class TestPlanning:
    def build_open_scene(self):
        scene = SceneState(make_room(8.0, 6.0, door=(4.0, 0.0)))
        a = place(scene, "chair", 2.0, 4.0, (0.5, 0.5, 0.9))
        b = place(scene, "desk", 6.0, 4.0, (1.4, 0.7, 0.75))
        c = place(scene, "plant", 6.5, 1.5, (0.4, 0.4, 1.2))
        return scene, [a.id, b.id, c.id]

    def test_every_target_covered_or_reported(self):
        scene, targets = self.build_open_scene()
        traj = plan_trajectory(scene, targets, rng_seed=0)
        legged = [leg.target_id for leg in traj.legs]
        missed = [u.target_id for u in traj.unreachable]
        assert sorted(legged + missed) == sorted(targets)
        assert not missed

    def test_legs_revalidate(self):
        scene, targets = self.build_open_scene()
        params = TrajectoryParams()
        traj = plan_trajectory(scene, targets, params, rng_seed=0)
        for leg in traj.legs:
            target = scene.get(leg.target_id)
            ev = evaluate_viewpoint(leg.viewpoint.pose, target, params, scene, traj.grid)
            assert ev.accepted

    def test_paths_start_from_door_and_chain(self):
        scene, targets = self.build_open_scene()
        traj = plan_trajectory(scene, targets, rng_seed=0)
        assert traj.legs[0].cells[0] == traj.grid.cell_of(traj.start.x, traj.start.y)
        for prev, nxt in zip(traj.legs, traj.legs[1:]):
            assert prev.cells[-1] == nxt.cells[0]

    def test_path_cells_free_and_adjacent(self):
        scene, targets = self.build_open_scene()
        traj = plan_trajectory(scene, targets, rng_seed=0)
        for leg in traj.legs:
            for cell in leg.cells:
                assert traj.grid.is_free(*cell)
            for (ax, ay), (bx, by) in zip(leg.cells, leg.cells[1:]):
                assert max(abs(ax - bx), abs(ay - by)) == 1

    def test_nearest_first_visit_order(self):
        scene, targets = self.build_open_scene()
        traj = plan_trajectory(scene, targets, rng_seed=0)
        assert [leg.target_id for leg in traj.legs][0] == "plant_0000"  # nearest to the door

    def test_unreachable_has_reason(self, scene):
        boxed = place(scene, "chair", 3.0, 2.5, (0.5, 0.5, 0.9))
        place(scene, "wardrobe", 3.0, 1.2, (3.4, 0.6, 2.2))
        place(scene, "wardrobe", 3.0, 3.8, (3.4, 0.6, 2.2))
        place(scene, "wardrobe", 1.2, 2.5, (0.6, 2.2, 2.2), yaw=0.0)
        place(scene, "wardrobe", 4.8, 2.5, (0.6, 2.2, 2.2), yaw=0.0)
        traj = plan_trajectory(scene, [boxed.id], rng_seed=0)
        assert not traj.legs
        assert traj.unreachable[0].target_id == boxed.id
        assert traj.unreachable[0].reason

    def test_determinism(self):
        scene, targets = self.build_open_scene()
        a = plan_trajectory(scene, targets, rng_seed=5)
        b = plan_trajectory(scene, targets, rng_seed=5)
        assert trajectory_to_json(a, TrajectoryParams()) == trajectory_to_json(b, TrajectoryParams())


class TestHeightVariants:
    def test_same_visit_order_different_pitch(self):
        scene = SceneState(make_room(8.0, 6.0, door=(4.0, 0.0)))
        ids = [
            place(scene, "chair", 2.0, 4.0, (0.5, 0.5, 0.9)).id,
            place(scene, "plant", 6.5, 1.5, (0.4, 0.4, 1.2)).id,
        ]
        low = plan_trajectory(scene, ids, TrajectoryParams(camera_height=1.0), rng_seed=0)
        high = plan_trajectory(scene, ids, TrajectoryParams(camera_height=2.5), rng_seed=0)
        assert [l.target_id for l in low.legs] == [l.target_id for l in high.legs]
        for ll, hl in zip(low.legs, high.legs):
            assert ll.viewpoint.pose.z == 1.0 and hl.viewpoint.pose.z == 2.5
            assert hl.viewpoint.pose.pitch > ll.viewpoint.pose.pitch


class TestTrajectorySerialization:
    def test_round_trip(self):
        scene = SceneState(make_room(8.0, 6.0, door=(4.0, 0.0)))
        ids = [place(scene, "chair", 2.0, 4.0, (0.5, 0.5, 0.9)).id]
        params = TrajectoryParams(camera_height=1.4)
        traj = plan_trajectory(scene, ids, params, rng_seed=0)
        doc = trajectory_to_json(traj, params)
        assert doc["schema"] == "trajectory/1"
        assert doc["camera_height"] == 1.4
        again = trajectory_from_json(doc, grid=traj.grid)
        assert trajectory_to_json(again, params) == doc

    def test_interpolate_spacing(self):
        pts = interpolate_path([(0.0, 0.0), (2.0, 0.0)], step=0.25)
        assert pts[0] == (0.0, 0.0) and pts[-1] == (2.0, 0.0)
        for (ax, ay), (bx, by) in zip(pts, pts[1:]):
            assert math.hypot(bx - ax, by - ay) <= 0.25 + 1e-9
