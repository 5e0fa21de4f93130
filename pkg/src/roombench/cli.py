"""Command-line entry point exposing the pipeline as subcommands.

Exit codes form a closed set:
0 success, 1 result did not satisfy its goal (infeasible layout, refinement
not converged, failed sweep cells), 2 program or config parse error,
3 I/O or file-format error, 4 inaccessible door, 5 prediction id mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .camera import TrajectoryParams, plan_trajectory, trajectory_from_json, trajectory_to_json
from .constraints import parse_program
from .diagnostics import (
    METRICS_CSV_HEADER,
    build_error_report,
    count_violations,
    occupancy_ratio,
    report_to_json_dict,
    scene_metrics,
)
from .errors import (
    ConfigError,
    InaccessibleCellError,
    ProgramParseError,
    RefinerError,
    RoomBenchError,
    SceneFormatError,
)
from .figures import (
    bev_figure,
    history_figure,
    scene_figure,
    scores_figure,
    sweep_figure,
    trajectory_figure,
)
from .ioutil import ensure_dir, load_json, write_canonical_json
from .layout import OptimizerSchedule, optimize_layout, optimize_layout_hierarchical
from .raster import export_bev_ppm, rasterize_bev
from .refine import ExternalRefiner, RuleBasedRefiner, run_refinement
from .scene import scene_from_json, scene_to_json
from .sweep import SweepAxes, run_sweep
from .taskgen import (
    TASK_FAMILIES,
    gen_counting,
    gen_measurement,
    gen_order,
    score_answer,
    tasks_from_jsonl,
    tasks_to_jsonl,
)

EXIT_OK = 0
EXIT_UNSATISFIED = 1
EXIT_PARSE = 2
EXIT_IO = 3
EXIT_DOOR = 4
EXIT_IDS = 5


@dataclass
class RunConfig:
    """Flat run settings; a config file provides defaults, flags win."""

    seed: int = 0
    out: str = "out"
    max_steps: int = 20000
    initial_temperature: float = 5.0
    cooling_factor: float = 0.9995
    budget: int = 5
    refiner: str = "rule_based"
    baseline_hierarchical: bool = False
    height: float = 1.0
    fov_threshold: float = 0.95
    occlusion_low: float = 0.0
    occlusion_high: float = 0.1
    max_distance: float = 4.0
    max_sampling_times: int = 64
    grid_resolution: float = 0.1
    clearance: float = 0.25
    targets: list[str] = field(default_factory=list)
    measurement: int = 10
    order: int = 4
    objects: list[int] = field(default_factory=list)
    bands: list[tuple[float, float]] = field(default_factory=list)
    heights: list[float] = field(default_factory=list)
    workers: int = 1

    def schedule(self) -> OptimizerSchedule:
        return OptimizerSchedule(
            max_steps=self.max_steps,
            initial_temperature=self.initial_temperature,
            cooling_factor=self.cooling_factor,
            rng_seed=self.seed,
        )

    def trajectory_params(self) -> TrajectoryParams:
        return TrajectoryParams(
            max_sampling_times=self.max_sampling_times,
            max_distance=self.max_distance,
            fov_threshold=self.fov_threshold,
            occlusion_required_range=(self.occlusion_low, self.occlusion_high),
            camera_height=self.height,
            grid_resolution=self.grid_resolution,
            clearance=self.clearance,
        )


def _parse_band_list(text: str) -> list[tuple[float, float]]:
    bands = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(":")
        if len(pieces) != 2:
            raise ConfigError(f"band {part!r} must look like lo:hi")
        bands.append((float(pieces[0]), float(pieces[1])))
    return bands


_CONVERTERS = {
    "seed": int,
    "out": str,
    "max_steps": int,
    "initial_temperature": float,
    "cooling_factor": float,
    "budget": int,
    "refiner": str,
    "baseline_hierarchical": lambda v: v if isinstance(v, bool) else v.lower() == "true",
    "height": float,
    "fov_threshold": float,
    "occlusion_low": float,
    "occlusion_high": float,
    "max_distance": float,
    "max_sampling_times": int,
    "grid_resolution": float,
    "clearance": float,
    "targets": lambda v: [s.strip() for s in v.split(",") if s.strip()],
    "measurement": int,
    "order": int,
    "objects": lambda v: [int(s) for s in v.split(",") if s.strip()],
    "bands": _parse_band_list,
    "heights": lambda v: [float(s) for s in v.split(",") if s.strip()],
    "workers": int,
}


def parse_config_file(path: str) -> dict:
    """Flat key = value settings; # comments and blank lines allowed."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _CONVERTERS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _CONVERTERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then any flags that were given."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in parse_config_file(args.config).items():
            setattr(cfg, key, value)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            converter = _CONVERTERS[f.name]
            setattr(cfg, f.name, converter(flag) if isinstance(flag, str) else flag)
    return cfg


def _build_refiner(spec: str):
    if spec == "rule_based":
        return RuleBasedRefiner()
    if spec.startswith("external:"):
        return ExternalRefiner(spec[len("external:"):])
    raise ConfigError(f"unknown refiner {spec!r}; use rule_based or external:<endpoint>")


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# Subcommands


def cmd_generate(args: argparse.Namespace, cfg: RunConfig) -> int:
    program = parse_program(_read_text(args.program))
    optimize = optimize_layout_hierarchical if cfg.baseline_hierarchical else optimize_layout
    result = optimize(program, schedule=cfg.schedule())
    report = build_error_report(program, result.scene)

    out = ensure_dir(cfg.out)
    write_canonical_json(out / "scene.json", scene_to_json(result.scene))
    write_canonical_json(out / "report.json", report_to_json_dict(report))
    export_bev_ppm(report.bev, out / "bev.ppm", out / "bev_legend.json")
    scene_figure(result.scene, str(out / "scene.png"))

    m = report.metrics
    print(METRICS_CSV_HEADER)
    print(m.csv_row())
    ok = m.fidelity >= 1.0 and m.out_of_boundary_count == 0 and m.collision_pair_count == 0
    return EXIT_OK if ok else EXIT_UNSATISFIED


def cmd_refine(args: argparse.Namespace, cfg: RunConfig) -> int:
    program = parse_program(_read_text(args.program))
    refiner = _build_refiner(cfg.refiner)
    try:
        scene, history, result = run_refinement(
            program,
            refiner=refiner,
            budget=cfg.budget,
            schedule=cfg.schedule(),
            hierarchical=cfg.baseline_hierarchical,
        )
    finally:
        if isinstance(refiner, ExternalRefiner):
            refiner.close()

    final_program = parse_program(history.iterations[-1].program_text)
    report = build_error_report(final_program, scene)
    out = ensure_dir(cfg.out)
    write_canonical_json(out / "history.json", history.to_json())
    write_canonical_json(out / "scene.json", scene_to_json(scene))
    write_canonical_json(out / "report.json", report_to_json_dict(report))
    history_figure(history, str(out / "refinement.png"))

    print(METRICS_CSV_HEADER)
    print(report.metrics.csv_row())
    print(f"converged={history.converged} iterations={history.iterations_used}")
    return EXIT_OK if history.converged else EXIT_UNSATISFIED


def cmd_plan(args: argparse.Namespace, cfg: RunConfig) -> int:
    scene = scene_from_json(load_json(args.scene))
    targets = cfg.targets or sorted(scene.instances)
    params = cfg.trajectory_params()
    traj = plan_trajectory(scene, targets, params, rng_seed=cfg.seed)

    out = ensure_dir(cfg.out)
    write_canonical_json(out / "trajectory.json", trajectory_to_json(traj, params))
    trajectory_figure(scene, traj, str(out / "trajectory.png"))
    print(f"legs={len(traj.legs)} unreachable={len(traj.unreachable)}")
    return EXIT_OK


def cmd_bev(args: argparse.Namespace, cfg: RunConfig) -> int:
    scene = scene_from_json(load_json(args.scene))
    out = ensure_dir(cfg.out)
    export_bev_ppm(rasterize_bev(scene), out / "bev.ppm", out / "bev_legend.json")
    bev_figure(scene, str(out / "bev.png"))
    print(f"wrote {out / 'bev.ppm'}")
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace, cfg: RunConfig) -> int:
    scene = scene_from_json(load_json(args.scene))
    print(METRICS_CSV_HEADER)
    if args.program:
        program = parse_program(_read_text(args.program))
        print(scene_metrics(program, scene).csv_row())
    else:
        ob, cn, _, _ = count_violations(scene)
        print(f"-,{occupancy_ratio(scene):.4f},{ob},{cn},{len(scene)}")
    return EXIT_OK


def cmd_taskgen(args: argparse.Namespace, cfg: RunConfig) -> int:
    scene = scene_from_json(load_json(args.scene))
    traj_doc = load_json(args.trajectory)
    traj = trajectory_from_json(traj_doc)
    params = replace(cfg.trajectory_params(), camera_height=traj_doc["camera_height"])

    rng = np.random.default_rng(cfg.seed)
    tasks = gen_measurement(scene, cfg.measurement, rng)
    tasks += gen_counting(scene, traj, rng, params)
    tasks += gen_order(traj, scene, rng, n=cfg.order)

    out = ensure_dir(cfg.out)
    with open(out / "tasks.jsonl", "w", encoding="utf-8") as fh:
        fh.write(tasks_to_jsonl(tasks))
    print(f"tasks={len(tasks)}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace, cfg: RunConfig) -> int:
    tasks = {t.id: t for t in tasks_from_jsonl(_read_text(args.tasks))}
    scores: dict[str, list[float]] = {family: [] for family in TASK_FAMILIES}
    seen = set()
    for lineno, line in enumerate(_read_text(args.predictions).splitlines(), start=1):
        if not line.strip():
            continue
        pred = json.loads(line)
        pid = pred.get("id")
        if pid not in tasks:
            print(f"predictions:{lineno}: unknown task id {pid!r}", file=sys.stderr)
            return EXIT_IDS
        if pid in seen:
            print(f"predictions:{lineno}: duplicate task id {pid!r}", file=sys.stderr)
            return EXIT_IDS
        seen.add(pid)
        task = tasks[pid]
        try:
            value = score_answer(task, pred.get("answer"))
        except RoomBenchError:
            value = 0.0  # an unparseable answer scores zero rather than aborting
        scores[task.family].append(value)

    rows = []
    lines = ["family,n,mean_score"]
    for family in TASK_FAMILIES:
        values = scores[family]
        mean = sum(values) / len(values) if values else None
        rows.append((family, len(values), mean))
        lines.append(f"{family},{len(values)},{'-' if mean is None else f'{mean:.4f}'}")
    csv_text = "\n".join(lines) + "\n"

    out = ensure_dir(cfg.out)
    with open(out / "scores.csv", "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    scores_figure(rows, str(out / "scores.png"))
    print(csv_text, end="")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, cfg: RunConfig) -> int:
    axes = SweepAxes(
        object_counts=cfg.objects,
        occupancy_bands=cfg.bands,
        camera_heights=cfg.heights,
    )
    rows = run_sweep(
        axes,
        cfg.out,
        base_seed=cfg.seed,
        schedule=cfg.schedule(),
        workers=cfg.workers,
    )
    clean = [r for r in rows if not r["error"]]
    if clean:
        sweep_figure(clean, str(ensure_dir(cfg.out) / "sweep.png"))
    failed = len(rows) - len(clean)
    print(f"cells={len(rows)} failed={failed} summary={cfg.out}/summary.csv")
    return EXIT_OK if failed == 0 else EXIT_UNSATISFIED


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roombench",
        description="Constraint-driven room layouts, camera trajectories, and spatial QA benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--seed", type=int, default=None, help="rng seed")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("generate", help="optimize a layout from a constraint program")
    p.add_argument("program", help="program file (.scn-dsl)")
    common(p)
    p.add_argument("--baseline-hierarchical", action="store_true", default=None, dest="baseline_hierarchical")
    p.add_argument("--max-steps", type=int, default=None, dest="max_steps")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("refine", help="iterative optimize-diagnose-refine loop")
    p.add_argument("program")
    common(p)
    p.add_argument("--budget", type=int, default=None, help="max refinement iterations")
    p.add_argument("--refiner", default=None, help="rule_based or external:<endpoint>")
    p.add_argument("--baseline-hierarchical", action="store_true", default=None, dest="baseline_hierarchical")
    p.add_argument("--max-steps", type=int, default=None, dest="max_steps")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("plan", help="plan an object-covering camera trajectory")
    p.add_argument("scene", help="scene JSON file")
    common(p)
    p.add_argument("--targets", default=None, help="comma-separated instance ids (default: all)")
    p.add_argument("--height", type=float, default=None, help="camera height in meters")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bev", help="export the bird's-eye label map")
    p.add_argument("scene")
    common(p)
    p.set_defaults(func=cmd_bev)

    p = sub.add_parser("metrics", help="print the metrics CSV row for a scene")
    p.add_argument("scene")
    p.add_argument("--program", default=None, help="program file for fidelity")
    common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("taskgen", help="emit QA tasks for a scene + trajectory")
    p.add_argument("scene")
    p.add_argument("trajectory")
    common(p)
    p.add_argument("--measurement", type=int, default=None, help="number of measurement tasks")
    p.add_argument("--order", type=int, default=None, help="number of visit-order tasks")
    p.set_defaults(func=cmd_taskgen)

    p = sub.add_parser("score", help="score predictions against task ground truth")
    p.add_argument("tasks", help="tasks JSONL file")
    p.add_argument("predictions", help="predictions JSONL file ({id, answer} per line)")
    common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="run a complexity sweep grid")
    common(p)
    p.add_argument("--objects", default=None, help="comma-separated object counts")
    p.add_argument("--bands", default=None, help="comma-separated occupancy bands lo:hi")
    p.add_argument("--heights", default=None, help="comma-separated camera heights")
    p.add_argument("--workers", type=int, default=None, help="parallel cell workers")
    p.add_argument("--max-steps", type=int, default=None, dest="max_steps")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (ProgramParseError, ConfigError, RefinerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InaccessibleCellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOOR
    except (SceneFormatError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
