"""Sweep grid construction, per-cell artifacts, resume, and parallel runs."""

from __future__ import annotations

import json

import pytest

from roombench.constraints import parse_program
from roombench.layout import OptimizerSchedule
from roombench.sweep import (
    SUMMARY_HEADER,
    SweepAxes,
    cell_hash,
    cell_name,
    run_sweep,
    summary_csv,
    sweep_program,
)


def small_axes():
    return SweepAxes(object_counts=[3], occupancy_bands=[(0.01, 0.4)], camera_heights=[1.0])


def fast_schedule():
    return OptimizerSchedule(max_steps=800)


class TestAxes:
    def test_cartesian_product(self):
        axes = SweepAxes(
            object_counts=[5, 20],
            occupancy_bands=[(0.0, 0.1), (0.1, 0.5)],
            camera_heights=[1.0, 2.5],
        )
        cells = axes.cells()
        assert len(cells) == 8
        assert len({cell_name(c) for c in cells}) == 8

    def test_empty_axes_mean_unconstrained(self):
        axes = SweepAxes(object_counts=[], occupancy_bands=[], camera_heights=[])
        cells = axes.cells()
        assert len(cells) == 1
        assert cells[0]["n_objects"] is None
        assert cells[0]["band"] is None
        assert cells[0]["height"] == 1.0


class TestProgramSynthesis:
    def test_pinned_count_and_band(self):
        program = parse_program(sweep_program(5, (0.1, 0.5)))
        assert program.counts[0].low == 5 and program.counts[0].high == 5
        assert program.target_occupancy == (0.1, 0.5)

    def test_open_count(self):
        program = parse_program(sweep_program(None, None))
        assert (program.counts[0].low, program.counts[0].high) == (1, 400)
        assert program.target_occupancy is None


class TestHashing:
    def test_hash_tracks_inputs(self):
        cell = {"n_objects": 5, "band": (0.1, 0.5), "height": 1.0}
        base = cell_hash(cell, seed=3, max_steps=800)
        assert base != cell_hash(cell, seed=4, max_steps=800)
        assert base != cell_hash(cell, seed=3, max_steps=900)
        assert base != cell_hash({**cell, "height": 2.5}, seed=3, max_steps=800)
        assert base == cell_hash(dict(cell), seed=3, max_steps=800)
        assert len(base) == 16


class TestRunSweep:
    def test_rows_and_artifacts(self, tmp_path):
        rows = run_sweep(small_axes(), str(tmp_path), base_seed=0, schedule=fast_schedule())
        assert len(rows) == 1
        row = rows[0]
        assert row["error"] == ""
        assert row["feasible"] is True
        assert int(row["objects"]) == 3
        cell_dir = tmp_path / "cells" / row["cell"]
        for name in ("scene.json", "report.json", "trajectory.json", "tasks.jsonl", "cell.json"):
            assert (cell_dir / name).exists(), name
        csv = summary_csv(rows)
        lines = csv.strip().splitlines()
        assert lines[0] == SUMMARY_HEADER
        assert len(lines) == 2

    def test_resume_skips_completed_cells(self, tmp_path):
        first = run_sweep(small_axes(), str(tmp_path), base_seed=0, schedule=fast_schedule())
        marker = json.loads((tmp_path / "cells" / first[0]["cell"] / "cell.json").read_text())
        second = run_sweep(small_axes(), str(tmp_path), base_seed=0, schedule=fast_schedule())
        assert second == first
        again = json.loads((tmp_path / "cells" / first[0]["cell"] / "cell.json").read_text())
        assert again == marker  # not rewritten

    def test_hash_mismatch_triggers_regeneration(self, tmp_path):
        first = run_sweep(small_axes(), str(tmp_path), base_seed=0, schedule=fast_schedule())
        cell_dir = tmp_path / "cells" / first[0]["cell"]
        scene_before = (cell_dir / "scene.json").read_bytes()
        # different seed invalidates the recorded hash for the same cell dir
        second = run_sweep(small_axes(), str(tmp_path), base_seed=7, schedule=fast_schedule())
        assert second[0]["seed"] == 7
        assert (cell_dir / "scene.json").read_bytes() != scene_before

    def test_infeasible_cell_records_row(self, tmp_path):
        # two objects can never reach 90% occupancy of the sweep room
        axes = SweepAxes(object_counts=[2], occupancy_bands=[(0.9, 0.95)], camera_heights=[1.0])
        rows = run_sweep(axes, str(tmp_path), base_seed=0, schedule=OptimizerSchedule(max_steps=300))
        assert len(rows) == 1
        row = rows[0]
        assert row["feasible"] is False
        assert float(row["fidelity"]) < 1.0
        assert len(summary_csv(rows).strip().splitlines()) == 2

    def test_erroring_cell_records_failure_and_continues(self, tmp_path):
        axes = SweepAxes(
            object_counts=[2],
            occupancy_bands=[(0.5, 0.1), (0.01, 0.4)],  # first band is inverted: unparseable
            camera_heights=[1.0],
        )
        rows = run_sweep(axes, str(tmp_path), base_seed=0, schedule=fast_schedule())
        assert len(rows) == 2
        failed = [r for r in rows if r["error"]]
        clean = [r for r in rows if not r["error"]]
        assert len(failed) == 1 and len(clean) == 1
        assert "," not in failed[0]["error"]  # commas sanitized so the csv stays regular
        assert clean[0]["feasible"] is True
        assert len(summary_csv(rows).strip().splitlines()) == 3

    def test_parallel_matches_serial(self, tmp_path):
        axes = SweepAxes(
            object_counts=[2, 4],
            occupancy_bands=[(0.01, 0.4)],
            camera_heights=[1.0],
        )
        serial = run_sweep(axes, str(tmp_path / "serial"), base_seed=0, schedule=fast_schedule())
        parallel = run_sweep(axes, str(tmp_path / "par"), base_seed=0, schedule=fast_schedule(), workers=2)

        def strip_runtime(rows):
            return [{k: v for k, v in r.items() if k != "runtime_s"} for r in rows]

        assert strip_runtime(serial) == strip_runtime(parallel)
        for row in serial:
            a = (tmp_path / "serial" / "cells" / row["cell"] / "scene.json").read_bytes()
            b = (tmp_path / "par" / "cells" / row["cell"] / "scene.json").read_bytes()
            assert a == b
