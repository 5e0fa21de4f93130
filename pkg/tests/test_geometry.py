"""Geometry primitives against independent shapely and analytic oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point as ShapelyPoint
from shapely.geometry import Polygon as ShapelyPolygon

from roombench.geometry import (
    CameraIntrinsics,
    OrientedBox,
    RoomSpec,
    accessible_grid,
    box_sample_points,
    camera_rotation,
    contained_in_room,
    fov_containment,
    make_grid_spec,
    obb_intersects,
    point_in_polygon,
    point_to_segment_distance,
    project_points,
)

from conftest import make_room


def shapely_footprint(box: OrientedBox) -> ShapelyPolygon:
    return ShapelyPolygon(box.footprint_corners())


def random_box(rng: np.random.Generator) -> OrientedBox:
    return OrientedBox(
        center=(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 1)),
        half_extents=(rng.uniform(0.1, 1.5), rng.uniform(0.1, 1.5), rng.uniform(0.1, 1.0)),
        yaw=rng.uniform(-math.pi, math.pi),
    )


class TestObbIntersection:
    def test_matches_shapely_on_random_pairs(self):
        """Footprint overlap decided by SAT must match a polygon library.

        Boxes share the z range by construction so the planar answer is
        the whole answer.
        """
        rng = np.random.default_rng(42)
        disagreements = 0
        for _ in range(500):
            a = random_box(rng)
            b = OrientedBox(
                center=(rng.uniform(-3, 3), rng.uniform(-3, 3), a.center[2]),
                half_extents=(rng.uniform(0.1, 1.5), rng.uniform(0.1, 1.5), a.half_extents[2]),
                yaw=rng.uniform(-math.pi, math.pi),
            )
            expected = shapely_footprint(a).intersection(shapely_footprint(b)).area > 1e-9
            got = obb_intersects(a, b)
            # touching boundaries are a measure-zero judgment call; skip them
            boundary = (
                shapely_footprint(a).intersects(shapely_footprint(b))
                and shapely_footprint(a).intersection(shapely_footprint(b)).area <= 1e-9
            )
            if boundary:
                continue
            if got != expected:
                disagreements += 1
        assert disagreements == 0

    def test_separated_in_z_do_not_intersect(self):
        a = OrientedBox((0, 0, 0.5), (1, 1, 0.5), 0.0)
        b = OrientedBox((0, 0, 2.0), (1, 1, 0.5), 0.0)
        assert not obb_intersects(a, b)

    def test_rotated_diamond_overlaps_square(self):
        a = OrientedBox((0, 0, 0.5), (1, 1, 0.5), 0.0)
        b = OrientedBox((1.9, 0, 0.5), (1, 1, 0.5), math.pi / 4)
        # diamond vertex reaches x = 1.9 - sqrt(2) < 1.0, inside the square
        assert obb_intersects(a, b)

    @given(
        x=st.floats(-3, 3),
        y=st.floats(-3, 3),
        yaw=st.floats(-math.pi, math.pi),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetry(self, x, y, yaw):
        a = OrientedBox((0, 0, 0.5), (1, 0.6, 0.5), 0.3)
        b = OrientedBox((x, y, 0.5), (0.8, 0.5, 0.5), yaw)
        assert obb_intersects(a, b) == obb_intersects(b, a)

    @given(yaw=st.floats(-math.pi, math.pi))
    @settings(max_examples=40, deadline=None)
    def test_full_turn_invariance(self, yaw):
        a = OrientedBox((0.4, 0.1, 0.5), (1, 0.6, 0.5), yaw)
        b = OrientedBox((1.2, 0.3, 0.5), (0.7, 0.7, 0.5), 0.0)
        a2 = OrientedBox(a.center, a.half_extents, yaw + 2 * math.pi)
        assert obb_intersects(a, b) == obb_intersects(a2, b)


class TestPointInPolygon:
    CONCAVE = np.array([(0, 0), (4, 0), (4, 3), (2, 3), (2, 1), (0, 1)], dtype=float)

    def test_interior_and_exterior(self):
        assert point_in_polygon((1.0, 0.5), self.CONCAVE)
        assert point_in_polygon((3.0, 2.0), self.CONCAVE)
        assert not point_in_polygon((1.0, 2.0), self.CONCAVE)  # inside the notch
        assert not point_in_polygon((5.0, 0.5), self.CONCAVE)

    def test_vertices_and_edges_count_as_inside(self):
        assert point_in_polygon((0.0, 0.0), self.CONCAVE)
        assert point_in_polygon((2.0, 0.0), self.CONCAVE)
        assert point_in_polygon((4.0, 1.5), self.CONCAVE)

    def test_matches_shapely_on_random_points(self):
        rng = np.random.default_rng(7)
        poly = ShapelyPolygon(self.CONCAVE)
        for _ in range(400):
            p = (rng.uniform(-1, 5), rng.uniform(-1, 4))
            if poly.exterior.distance(ShapelyPoint(p)) < 1e-6:
                continue  # skip near-boundary points where eps policies differ
            assert point_in_polygon(p, self.CONCAVE) == poly.contains(ShapelyPoint(p))


class TestSegmentDistance:
    def test_endpoint_projection(self):
        assert point_to_segment_distance((0, 0), (1, 0), (2, 0)) == pytest.approx(1.0)
        assert point_to_segment_distance((1.5, 2), (1, 0), (2, 0)) == pytest.approx(2.0)
        assert point_to_segment_distance((3, 4), (0, 0), (0, 0)) == pytest.approx(5.0)


class TestRoomContainment:
    def test_matches_shapely(self):
        room = make_room(6, 5)
        poly = ShapelyPolygon(room.floor_polygon)
        rng = np.random.default_rng(3)
        for _ in range(300):
            box = OrientedBox(
                (rng.uniform(-1, 7), rng.uniform(-1, 6), 0.5),
                (rng.uniform(0.1, 1.2), rng.uniform(0.1, 1.2), 0.5),
                rng.uniform(-math.pi, math.pi),
            )
            fp = shapely_footprint(box)
            expected = poly.buffer(1e-9).contains(fp)
            if fp.exterior.distance(poly.exterior) < 1e-6:
                continue  # boundary-contact tolerance differs; skip knife edges
            assert contained_in_room(box, room) == expected

    def test_wall_height_limits_containment(self):
        room = make_room(6, 5, height=2.0)
        tall = OrientedBox((3, 2.5, 1.5), (0.5, 0.5, 1.5), 0.0)  # top at 3.0 > 2.0
        assert not contained_in_room(tall, room)


class TestRoomSpec:
    def test_door_must_sit_on_an_edge(self):
        with pytest.raises(Exception):
            RoomSpec(
                floor_polygon=((0, 0), (4, 0), (4, 3), (0, 3)),
                wall_height=3.0,
                door_position=(2.0, 1.0),
            )

    def test_scaled_area_and_door(self):
        room = make_room(6, 5, door=(3.0, 0.0))
        grown = room.scaled(1.2)
        area = ShapelyPolygon(room.floor_polygon).area
        grown_area = ShapelyPolygon(grown.floor_polygon).area
        assert grown_area == pytest.approx(area * 1.2 * 1.2, rel=1e-9)
        # the door stays on the (scaled) boundary
        edges = grown.edges()
        d = min(point_to_segment_distance(grown.door_position, a, b) for a, b in edges)
        assert d < 1e-6


class TestAccessibleGrid:
    def test_obstacles_and_clearance_block_cells(self):
        room = make_room(6, 5)
        box = OrientedBox((3, 2.5, 0.5), (0.5, 0.5, 0.5), 0.0)
        grid = accessible_grid(room, [box], 0.1, 0.25)
        assert not grid.is_free(*grid.cell_of(3.0, 2.5))  # inside the box
        assert not grid.is_free(*grid.cell_of(3.6, 2.5))  # within clearance
        assert grid.is_free(*grid.cell_of(1.0, 1.0))  # far away
        assert not grid.is_free(*grid.cell_of(-0.5, -0.5))  # out of bounds

    def test_grid_spec_covers_room(self):
        room = make_room(6.05, 5.0)
        origin, nx, ny = make_grid_spec(room, 0.1)
        assert origin == (0.0, 0.0)
        assert nx == 61 and ny == 50


class TestProjection:
    def test_forward_point_hits_image_center(self):
        intr = CameraIntrinsics()
        pos = np.array([0.0, 0.0, 1.0])
        pts = np.array([[2.0, 0.0, 1.0]])  # straight ahead at yaw 0
        pix, z = project_points(pts, pos, 0.0, 0.0, intr)
        assert z[0] == pytest.approx(2.0)
        assert pix[0, 0] == pytest.approx(intr.width / 2.0)
        assert pix[0, 1] == pytest.approx(intr.height / 2.0)

    def test_positive_pitch_looks_down(self):
        intr = CameraIntrinsics()
        pos = np.array([0.0, 0.0, 2.0])
        floor_pt = np.array([[1.0, 0.0, 0.0]])
        _, z_level = project_points(floor_pt, pos, 0.0, 0.0, intr)
        _, z_down = project_points(floor_pt, pos, 0.0, 0.8, intr)
        assert z_down[0] > z_level[0]  # pitching down turns the camera toward it

    def test_rotation_is_orthonormal(self):
        r = camera_rotation(0.7, -0.3)
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)


class TestFovContainment:
    def test_box_ahead_fully_contained(self):
        intr = CameraIntrinsics()
        box = OrientedBox((3.0, 0.0, 0.5), (0.3, 0.3, 0.3), 0.0)
        pos = np.array([0.0, 0.0, 0.5])
        assert fov_containment(box, pos, 0.0, 0.0, intr) == 1.0

    def test_box_behind_scores_zero(self):
        intr = CameraIntrinsics()
        box = OrientedBox((-3.0, 0.0, 0.5), (0.3, 0.3, 0.3), 0.0)
        pos = np.array([0.0, 0.0, 0.5])
        assert fov_containment(box, pos, 0.0, 0.0, intr) == 0.0

    def test_half_frame_is_partial(self):
        intr = CameraIntrinsics()
        # wide box straddling the right image border at 90 degree fov
        box = OrientedBox((2.0, -2.0, 0.5), (0.2, 1.2, 0.4), 0.0)
        pos = np.array([0.0, 0.0, 0.5])
        v = fov_containment(box, pos, 0.0, 0.0, intr)
        assert 0.0 < v < 1.0

    def test_probe_points_shape_and_surface(self):
        box = OrientedBox((1.0, 2.0, 0.7), (0.5, 0.4, 0.7), 0.3)
        pts = box_sample_points(box)
        assert pts.shape == (32, 3)
        # every probe lies on the box surface: in the local frame at least
        # one coordinate sits on its face plane
        c, s = math.cos(-box.yaw), math.sin(-box.yaw)
        rel = pts - np.array(box.center)
        local = np.stack(
            [c * rel[:, 0] - s * rel[:, 1], s * rel[:, 0] + c * rel[:, 1], rel[:, 2]], axis=1
        )
        he = np.array(box.half_extents)
        on_face = (np.abs(np.abs(local) - he) < 1e-9).any(axis=1)
        inside = (np.abs(local) <= he + 1e-9).all(axis=1)
        assert on_face.all() and inside.all()
