"""Constraint DSL parsing, serialization, and evaluation semantics."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roombench.constraints import (
    ConstraintProgram,
    CountConstraint,
    ScoreTerm,
    SemanticSelector,
    count_constraint_status,
    evaluate_constraints,
    evaluate_score,
    observed_counts,
    parse_program,
    program_from_json,
    program_to_json,
    relation_constraint_violations,
    serialize_program,
    violation_penalty,
)
from roombench.errors import ProgramParseError
from roombench.scene import SceneState

from conftest import make_room, place

BEDROOM = """\
room polygon (0,0) (6,0) (6,5) (0,5) height 3 door (3,0) resizable
count(bed) in [1,1]
count(nightstand) in [1,2]
count(any[Storage]) in [1,3]
relation(against_wall, bed, wall)
relation(on_top_of, lamp, nightstand)
score(maximize_distance, bed, wardrobe, weight=2)
score(wall_angle_alignment, any, weight=0.5)
occupancy in [0.05,0.4]
asset bed dims x [1.9,2.0] y [1.5,1.6] z [0.9,1.0]
hint delete_bias 0.2
"""

SCOPED = """\
room polygon (0,0) (8,0) (8,6) (0,6) height 3
count(dining_table) in [1,1]
count(chair where front_against dining_table) in [4,6]
relation(front_against, chair, dining_table)
"""


class TestParsing:
    def test_round_trip_is_a_fixpoint(self):
        for text in (BEDROOM, SCOPED):
            p1 = parse_program(text)
            s1 = serialize_program(p1)
            p2 = parse_program(s1)
            assert serialize_program(p2) == s1

    def test_parsed_fields(self):
        p = parse_program(BEDROOM)
        assert p.room is not None and p.resizable
        assert p.room.door_position == (3.0, 0.0)
        assert [(c.low, c.high) for c in p.counts] == [(1, 1), (1, 2), (1, 3)]
        assert p.counts[2].selector.category == "any"
        assert p.counts[2].selector.tags == frozenset({"Storage"})
        assert [r.kind for r in p.relations] == ["against_wall", "on_top_of"]
        assert p.relations[0].parent is None  # wall
        assert p.scores[0].objective == "maximize_distance"
        assert p.scores[0].weight == 2.0
        assert p.target_occupancy == (0.05, 0.4)
        assert p.asset_overrides["bed"][0] == (1.9, 2.0)
        assert p.hints["delete_bias"] == 0.2

    def test_scoped_count(self):
        p = parse_program(SCOPED)
        c = p.counts[1]
        assert c.scope is not None
        assert c.scope.category == "dining_table"
        assert c.selector.related_to[0] == "front_against"

    def test_json_round_trip(self):
        p = parse_program(BEDROOM)
        again = program_from_json(program_to_json(p))
        assert serialize_program(again) == serialize_program(p)

    @pytest.mark.parametrize(
        "text",
        [
            "room polygon (0,0) (6,0 height 3",
            "count(bed) in [2,1]",
            "count(unknown_thing) in [1,1]",
            "relation(hovers_over, lamp, desk)",
            "score(maximize_distance, bed, weight=-1)",
            "occupancy in [0.5,0.2]",
            "count(bed) in [1,1] trailing",
            "hint delete_bias notanumber",
        ],
    )
    def test_malformed_lines_raise(self, text):
        with pytest.raises(ProgramParseError):
            parse_program(text)

    def test_errors_carry_line_and_column(self):
        try:
            parse_program("count(bed) in [1,1]\nrelation(bogus, bed, wall)\n")
        except ProgramParseError as exc:
            assert exc.line == 2
            assert exc.column >= 1
        else:
            pytest.fail("expected a parse error")

    def test_default_room_when_absent(self):
        p = parse_program("count(bed) in [1,1]")
        assert p.room is None
        room = p.room_or_default()
        assert room.door_position == (3.0, 0.0)


class TestSelectors:
    def test_category_tag_and_relation_filters(self):
        scene = SceneState(make_room())
        table = place(scene, "dining_table", 3, 2.5, (1.8, 1.0, 0.75))
        place(scene, "chair", 3, 1.7, (0.5, 0.5, 0.9), yaw=math.pi / 2, kind="front_against", parent=table.id)
        place(scene, "chair", 1, 1, (0.5, 0.5, 0.9))
        place(scene, "wardrobe", 5.4, 2.5, (1.0, 0.6, 2.0))

        assert len(SemanticSelector("chair").select(scene)) == 2
        assert len(SemanticSelector("any").select(scene)) == 4
        assert len(SemanticSelector("any", frozenset({"Seating"})).select(scene)) == 2
        assert len(SemanticSelector("any", frozenset({"Storage"})).select(scene)) == 1
        related = SemanticSelector("chair", related_to=("front_against", SemanticSelector("dining_table")))
        assert [i.id for i in related.select(scene)] == ["chair_0000"]

    def test_relation_filter_requires_geometric_validity(self):
        scene = SceneState(make_room())
        table = place(scene, "dining_table", 3, 2.5, (1.8, 1.0, 0.75))
        # recorded as front_against but parked far away and facing away
        place(scene, "chair", 0.6, 0.6, (0.5, 0.5, 0.9), yaw=math.pi, kind="front_against", parent=table.id)
        related = SemanticSelector("chair", related_to=("front_against", None))
        assert related.select(scene) == []


class TestCountSemantics:
    def test_global_count_status(self):
        scene = SceneState(make_room())
        place(scene, "chair", 1, 1, (0.5, 0.5, 0.9))
        place(scene, "chair", 2, 1, (0.5, 0.5, 0.9))
        c = CountConstraint(SemanticSelector("chair"), 1, 2)
        ok, observed = count_constraint_status(c, scene)
        assert ok and observed == 2
        ok, observed = count_constraint_status(CountConstraint(SemanticSelector("chair"), 3, 5), scene)
        assert not ok and observed == 2

    def test_scoped_count_checks_every_parent(self):
        p = parse_program(SCOPED)
        scoped = p.counts[1]
        scene = SceneState(make_room(8, 6))
        t1 = place(scene, "dining_table", 2, 3, (1.6, 1.0, 0.75))
        t2 = place(scene, "dining_table", 6, 3, (1.6, 1.0, 0.75))
        for k in range(4):
            place(
                scene,
                "chair",
                2 + (k - 1.5) * 0.5,
                2.2,
                (0.45, 0.45, 0.9),
                yaw=math.pi / 2,
                kind="front_against",
                parent=t1.id,
            )
        pairs = dict(observed_counts(scoped, scene))
        assert pairs[t1.id] == 4
        assert pairs[t2.id] == 0
        ok, observed = count_constraint_status(scoped, scene)
        assert not ok
        assert observed == 0  # the most-violating parent is reported

    def test_scoped_count_vacuous_without_parents(self):
        p = parse_program(SCOPED)
        scene = SceneState(make_room(8, 6))
        ok, _ = count_constraint_status(p.counts[1], scene)
        assert ok  # no tables means no per-table requirement

    def test_count_monotone_under_matching_adds(self):
        scene = SceneState(make_room())
        c = CountConstraint(SemanticSelector("chair"), 2, 4)
        rng = np.random.default_rng(0)
        prev = observed_counts(c, scene)[0][1]
        for _ in range(6):
            place(scene, "chair", rng.uniform(1, 5), rng.uniform(1, 4), (0.5, 0.5, 0.9))
            now = observed_counts(c, scene)[0][1]
            assert now == prev + 1
            prev = now


class TestRelationViolations:
    def test_counts_children_breaking_geometry(self):
        p = parse_program(SCOPED)
        rel = p.relations[0]
        scene = SceneState(make_room(8, 6))
        table = place(scene, "dining_table", 4, 3, (1.6, 1.0, 0.75))
        place(scene, "chair", 4, 2.2, (0.45, 0.45, 0.9), yaw=math.pi / 2, kind="front_against", parent=table.id)
        assert relation_constraint_violations(rel, scene) == 0
        place(scene, "chair", 7, 5, (0.45, 0.45, 0.9), kind="front_against", parent=table.id)
        assert relation_constraint_violations(rel, scene) == 1

    def test_children_without_recorded_relation_violate(self):
        p = parse_program("relation(against_wall, wardrobe, wall)")
        scene = SceneState(make_room())
        place(scene, "wardrobe", 3, 2.5, (1.2, 0.6, 2.0))  # mid-room, no record
        assert relation_constraint_violations(p.relations[0], scene) == 1


class TestScores:
    def test_maximize_distance_mean_of_nearest(self):
        scene = SceneState(make_room(8, 6))
        place(scene, "bed", 1, 1, (2.0, 1.6, 1.0))
        place(scene, "wardrobe", 5, 1, (1.2, 0.6, 2.0))
        place(scene, "wardrobe", 1, 5, (1.2, 0.6, 2.0))
        term = ScoreTerm("maximize_distance", (SemanticSelector("bed"), SemanticSelector("wardrobe")), 2.0)
        program = ConstraintProgram(room=make_room(8, 6), scores=[term])
        bed = scene.get("bed_0000")
        expected = min(
            math.dist(bed.centroid, scene.get("wardrobe_0000").centroid),
            math.dist(bed.centroid, scene.get("wardrobe_0001").centroid),
        )
        assert evaluate_score(program, scene) == pytest.approx(2.0 * expected)

    def test_minimize_distance_is_negated(self):
        scene = SceneState(make_room())
        place(scene, "desk", 2, 1, (1.4, 0.7, 0.75))
        place(scene, "chair", 2, 2, (0.5, 0.5, 0.9))
        prog_max = ConstraintProgram(
            room=make_room(),
            scores=[ScoreTerm("maximize_distance", (SemanticSelector("desk"), SemanticSelector("chair")), 1.0)],
        )
        prog_min = ConstraintProgram(
            room=make_room(),
            scores=[ScoreTerm("minimize_distance", (SemanticSelector("desk"), SemanticSelector("chair")), 1.0)],
        )
        assert evaluate_score(prog_min, scene) == pytest.approx(-evaluate_score(prog_max, scene))

    def test_wall_angle_alignment_extremes(self):
        scene = SceneState(make_room())
        place(scene, "desk", 3, 0.5, (1.4, 0.7, 0.75), yaw=0.0)  # parallel to bottom wall
        prog = ConstraintProgram(
            room=make_room(),
            scores=[ScoreTerm("wall_angle_alignment", (SemanticSelector("desk"),), 1.0)],
        )
        assert evaluate_score(prog, scene) == pytest.approx(1.0)
        scene2 = SceneState(make_room())
        place(scene2, "desk", 3, 0.5, (1.4, 0.7, 0.75), yaw=math.pi / 4)  # 45 degrees off
        assert evaluate_score(prog, scene2) == pytest.approx(0.0, abs=1e-9)

    def test_maximize_count(self):
        scene = SceneState(make_room())
        for k in range(3):
            place(scene, "plant", 1 + k, 4, (0.4, 0.4, 1.0))
        prog = ConstraintProgram(
            room=make_room(),
            scores=[ScoreTerm("maximize_count", (SemanticSelector("plant"),), 0.5)],
        )
        assert evaluate_score(prog, scene) == pytest.approx(1.5)


class TestPenaltyAndReport:
    def test_penalty_zero_iff_all_satisfied(self):
        p = parse_program(SCOPED)
        scene = SceneState(make_room(8, 6))
        table = place(scene, "dining_table", 4, 3, (1.6, 1.0, 0.75))
        for k in range(4):
            place(
                scene,
                "chair",
                4 + (k - 1.5) * 0.5,
                2.2,
                (0.45, 0.45, 0.9),
                yaw=math.pi / 2,
                kind="front_against",
                parent=table.id,
            )
        report = evaluate_constraints(p, scene)
        assert report.all_satisfied
        assert violation_penalty(p, scene) == 0.0
        scene.remove("chair_0003")
        report = evaluate_constraints(p, scene)
        assert not report.all_satisfied
        assert violation_penalty(p, scene) == pytest.approx(1.0)  # one chair short

    def test_violated_sentences_name_constraint_and_bounds(self):
        p = parse_program("count(bed) in [2,2]")
        scene = SceneState(make_room())
        report = evaluate_constraints(p, scene)
        entry = report.violated[0]
        assert entry.constraint_id == "count_0"
        assert entry.observed == 0.0
        assert entry.required == (2.0, 2.0)
        assert "required [2,2]" in entry.sentence

    @given(low=st.integers(0, 3), extra=st.integers(0, 3))
    @settings(max_examples=30, deadline=None)
    def test_count_penalty_is_distance_to_range(self, low, extra):
        high = low + 1
        scene = SceneState(make_room(30, 30))
        n = low + extra  # may overshoot the upper bound
        for k in range(n):
            place(scene, "chair", 1 + (k % 9) * 3, 1 + (k // 9) * 3, (0.5, 0.5, 0.9))
        prog = ConstraintProgram(room=make_room(30, 30), counts=[CountConstraint(SemanticSelector("chair"), low, high)])
        expected = max(0, low - n) + max(0, n - high)
        assert violation_penalty(prog, scene) == pytest.approx(float(expected))
