"""Complexity sweeps: Cartesian grids over object count, occupancy band,
and camera height.

Each cell synthesizes its own constraint program, runs the full pipeline
(layout, trajectory, QA tasks), and drops its artifacts in a per-cell
directory keyed by a content hash, so an interrupted sweep resumes by
skipping cells whose outputs already exist and validate.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import TrajectoryParams, plan_trajectory, trajectory_to_json
from .constraints import parse_program
from .diagnostics import build_error_report, report_to_json_dict
from .ioutil import canonical_dumps, ensure_dir, load_json, write_canonical_json
from .layout import OptimizerSchedule, optimize_layout
from .scene import scene_from_json, scene_to_json
from .taskgen import gen_counting, gen_measurement, gen_order, tasks_to_jsonl

SUMMARY_HEADER = (
    "cell,n_objects,occ_low,occ_high,height,seed,fidelity,ob,cn,occupancy,objects,feasible,runtime_s,error"
)

SWEEP_ROOM = "room polygon (0,0) (10,0) (10,8) (0,8) height 3 door (5,0)"
OPEN_COUNT_BOUNDS = (1, 400)  # used when no object-count axis constrains the cell


@dataclass
class SweepAxes:
    object_counts: list[int] = field(default_factory=list)
    occupancy_bands: list[tuple[float, float]] = field(default_factory=list)
    camera_heights: list[float] = field(default_factory=list)

    def cells(self) -> list[dict]:
        counts = self.object_counts or [None]
        bands = self.occupancy_bands or [None]
        heights = self.camera_heights or [1.0]
        out = []
        index = 0
        for n in counts:
            for band in bands:
                for h in heights:
                    out.append({"index": index, "n_objects": n, "band": band, "height": h})
                    index += 1
        return out


def sweep_program(n_objects: int | None, band: tuple[float, float] | None) -> str:
    """Per-cell constraint program text."""
    lines = [SWEEP_ROOM]
    if n_objects is not None:
        lines.append(f"count(any) in [{n_objects},{n_objects}]")
    else:
        lines.append(f"count(any) in [{OPEN_COUNT_BOUNDS[0]},{OPEN_COUNT_BOUNDS[1]}]")
    if band is not None:
        lines.append(f"occupancy in [{band[0]},{band[1]}]")
    return "\n".join(lines) + "\n"


def cell_name(cell: dict) -> str:
    parts = []
    if cell["n_objects"] is not None:
        parts.append(f"obj{cell['n_objects']}")
    if cell["band"] is not None:
        lo, hi = cell["band"]
        parts.append(f"occ{lo:g}-{hi:g}")
    parts.append(f"h{cell['height']:g}")
    return "_".join(parts)


def cell_hash(cell: dict, seed: int, max_steps: int) -> str:
    payload = canonical_dumps(
        {
            "n_objects": cell["n_objects"],
            "band": list(cell["band"]) if cell["band"] else None,
            "height": cell["height"],
            "seed": seed,
            "max_steps": max_steps,
        }
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def run_cell(cell: dict, cell_dir: str, seed: int, schedule: OptimizerSchedule) -> dict:
    """Full pipeline for one cell; returns its summary row."""
    started = time.monotonic()
    ensure_dir(cell_dir)
    program = parse_program(sweep_program(cell["n_objects"], cell["band"]))
    result = optimize_layout(program, schedule=replace(schedule, rng_seed=seed))
    scene = result.scene
    report = build_error_report(program, scene)
    write_canonical_json(f"{cell_dir}/scene.json", scene_to_json(scene))
    write_canonical_json(f"{cell_dir}/report.json", report_to_json_dict(report))

    params = TrajectoryParams(camera_height=cell["height"])
    traj = plan_trajectory(scene, sorted(scene.instances), params, rng_seed=seed)
    write_canonical_json(f"{cell_dir}/trajectory.json", trajectory_to_json(traj, params))

    rng = np.random.default_rng(seed)
    tasks = gen_measurement(scene, 8, rng) + gen_counting(scene, traj, rng, params) + gen_order(traj, scene, rng, n=4)
    with open(f"{cell_dir}/tasks.jsonl", "w", encoding="utf-8") as fh:
        fh.write(tasks_to_jsonl(tasks))

    m = report.metrics
    band = cell["band"]
    return {
        "cell": cell_name(cell),
        "n_objects": "" if cell["n_objects"] is None else cell["n_objects"],
        "occ_low": "" if band is None else band[0],
        "occ_high": "" if band is None else band[1],
        "height": cell["height"],
        "seed": seed,
        "fidelity": m.fidelity,
        "ob": m.out_of_boundary_count,
        "cn": m.collision_pair_count,
        "occupancy": m.occupancy_ratio,
        "objects": m.object_count,
        "feasible": result.feasible,
        "runtime_s": round(time.monotonic() - started, 1),
        "error": "",
    }


def _execute_cell(args: tuple) -> tuple[int, dict]:
    cell, cell_dir, seed, schedule, digest = args
    try:
        row = run_cell(cell, cell_dir, seed, schedule)
    except Exception as exc:  # record the failure, keep the sweep going
        band = cell["band"]
        row = {
            "cell": cell_name(cell),
            "n_objects": "" if cell["n_objects"] is None else cell["n_objects"],
            "occ_low": "" if band is None else band[0],
            "occ_high": "" if band is None else band[1],
            "height": cell["height"],
            "seed": seed,
            "fidelity": "",
            "ob": "",
            "cn": "",
            "occupancy": "",
            "objects": "",
            "feasible": False,
            "runtime_s": "",
            "error": str(exc).replace(",", ";"),
        }
    else:
        write_canonical_json(f"{cell_dir}/cell.json", {"hash": digest, "row": row})
    return cell["index"], row


def _cell_is_done(cell_dir: str, digest: str) -> dict | None:
    """The recorded row when the cell's outputs exist and validate."""
    try:
        meta = load_json(f"{cell_dir}/cell.json")
        if meta.get("hash") != digest:
            return None
        scene_from_json(load_json(f"{cell_dir}/scene.json"))
        load_json(f"{cell_dir}/trajectory.json")
        with open(f"{cell_dir}/tasks.jsonl", encoding="utf-8"):
            pass
        return meta["row"]
    except (OSError, ValueError, KeyError):
        return None


def summary_csv(rows: list[dict]) -> str:
    lines = [SUMMARY_HEADER]
    for row in rows:
        lines.append(
            ",".join(
                str(row[k])
                for k in (
                    "cell",
                    "n_objects",
                    "occ_low",
                    "occ_high",
                    "height",
                    "seed",
                    "fidelity",
                    "ob",
                    "cn",
                    "occupancy",
                    "objects",
                    "feasible",
                    "runtime_s",
                    "error",
                )
            )
        )
    return "\n".join(lines) + "\n"


def run_sweep(
    axes: SweepAxes,
    out_dir: str,
    base_seed: int = 0,
    schedule: OptimizerSchedule | None = None,
    workers: int = 1,
) -> list[dict]:
    """Run (or resume) every cell and write summary.csv under out_dir."""
    schedule = schedule if schedule is not None else OptimizerSchedule()
    ensure_dir(f"{out_dir}/cells")
    pending = []
    rows: dict[int, dict] = {}
    for cell in axes.cells():
        seed = base_seed + cell["index"]
        digest = cell_hash(cell, seed, schedule.max_steps)
        cell_dir = f"{out_dir}/cells/{cell_name(cell)}"
        done = _cell_is_done(cell_dir, digest)
        if done is not None:
            rows[cell["index"]] = done
        else:
            pending.append((cell, cell_dir, seed, schedule, digest))

    if pending:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for index, row in pool.map(_execute_cell, pending):
                    rows[index] = row
        else:
            for args in pending:
                index, row = _execute_cell(args)
                rows[index] = row

    ordered = [rows[i] for i in sorted(rows)]
    with open(f"{out_dir}/summary.csv", "w", encoding="utf-8") as fh:
        fh.write(summary_csv(ordered))
    return ordered
