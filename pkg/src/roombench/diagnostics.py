"""Scene quality metrics (fidelity, occupancy, out-of-boundary and
collision counts) and the structured error report consumed by refiners.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import (
    ConstraintProgram,
    SatisfactionReport,
    count_constraint_status,
    evaluate_constraints,
    report_to_json,
)
from .geometry import contained_in_room, make_grid_spec
from .raster import BEV_RESOLUTION, LabelGrid, footprint_cell_indices, rasterize_bev
from .scene import SceneState, colliding_pairs


@dataclass
class SceneMetrics:
    fidelity: float
    occupancy_ratio: float
    out_of_boundary_count: int
    collision_pair_count: int
    object_count: int

    def to_json(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "occupancy_ratio": self.occupancy_ratio,
            "out_of_boundary_count": self.out_of_boundary_count,
            "collision_pair_count": self.collision_pair_count,
            "object_count": self.object_count,
        }

    def csv_row(self) -> str:
        return (
            f"{self.fidelity:.4f},{self.occupancy_ratio:.4f},"
            f"{self.out_of_boundary_count},{self.collision_pair_count},{self.object_count}"
        )


METRICS_CSV_HEADER = "fidelity,occupancy,ob,cn,objects"


@dataclass
class ErrorReport:
    textual_summary: list[str]
    bev: LabelGrid
    collision_pairs: list[tuple[str, str]]
    oob_ids: list[str]
    metrics: SceneMetrics
    satisfaction: SatisfactionReport


def occupancy_ratio(scene: SceneState, resolution: float = BEV_RESOLUTION) -> float:
    """Union area of object footprints on the BEV grid over the floor area."""
    if not scene.instances:
        return 0.0
    origin, nx, ny = make_grid_spec(scene.room, resolution)
    covered = np.zeros(nx * ny, dtype=bool)
    for inst in scene.instances.values():
        flat = footprint_cell_indices(inst.box, origin, resolution, nx, ny)
        covered[flat] = True
    area = float(covered.sum()) * resolution * resolution
    return min(1.0, max(0.0, area / scene.room.area()))


def count_violations(scene: SceneState) -> tuple[int, int, list[tuple[str, str]], list[str]]:
    """(#OB, #CN, colliding pairs, out-of-boundary ids), all by direct scan."""
    oob = [inst.id for inst in scene.instances.values() if not contained_in_room(inst.box, scene.room)]
    pairs = colliding_pairs(scene)
    return len(oob), len(pairs), pairs, oob


def compute_fidelity(program: ConstraintProgram, scene: SceneState) -> float:
    """Fraction of quantitative requirements met: each count constraint is
    one binary requirement, the occupancy target another. 1.0 when the
    program states no quantitative requirement."""
    total = 0
    met = 0
    for c in program.counts:
        total += 1
        ok, _ = count_constraint_status(c, scene)
        if ok:
            met += 1
    if program.target_occupancy is not None:
        total += 1
        lo, hi = program.target_occupancy
        if lo <= occupancy_ratio(scene) <= hi:
            met += 1
    if total == 0:
        return 1.0
    return met / total


def scene_metrics(program: ConstraintProgram, scene: SceneState) -> SceneMetrics:
    ob, cn, _, _ = count_violations(scene)
    return SceneMetrics(
        fidelity=compute_fidelity(program, scene),
        occupancy_ratio=occupancy_ratio(scene),
        out_of_boundary_count=ob,
        collision_pair_count=cn,
        object_count=len(scene),
    )


def build_error_report(program: ConstraintProgram, scene: SceneState) -> ErrorReport:
    """Assemble the refiner-facing report: unmet-constraint sentences, the
    BEV grid, artifact listings, and metrics."""
    satisfaction = evaluate_constraints(program, scene)
    ob, cn, pairs, oob = count_violations(scene)
    metrics = SceneMetrics(
        fidelity=compute_fidelity(program, scene),
        occupancy_ratio=occupancy_ratio(scene),
        out_of_boundary_count=ob,
        collision_pair_count=cn,
        object_count=len(scene),
    )
    return ErrorReport(
        textual_summary=[v.sentence for v in satisfaction.violated],
        bev=rasterize_bev(scene),
        collision_pairs=pairs,
        oob_ids=oob,
        metrics=metrics,
        satisfaction=satisfaction,
    )


def report_to_json_dict(report: ErrorReport) -> dict:
    """Schema report/1. The BEV grid itself ships as a PPM sidecar; the
    JSON carries its geometry so consumers can line the two up."""
    ny, nx = report.bev.cells.shape
    data = {
        "schema": "report/1",
        "metrics": report.metrics.to_json(),
        "textual_summary": list(report.textual_summary),
        "collision_pairs": [list(p) for p in report.collision_pairs],
        "oob_ids": list(report.oob_ids),
        "bev": {
            "resolution": report.bev.resolution,
            "origin": list(report.bev.origin),
            "shape": [ny, nx],
            "covered_cells": report.bev.covered_cell_count(),
        },
    }
    data.update(report_to_json(report.satisfaction))
    return data
