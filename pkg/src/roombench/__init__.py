"""Constraint-driven 3D room layouts, object-covering camera trajectories,
and machine-checkable spatial-reasoning QA benchmarks.

The pipeline: parse a constraint program, optimize a physically plausible
layout by simulated annealing over movable clusters, plan a camera
trajectory that covers every object, diagnose unmet constraints, refine the
program, and emit QA tasks whose ground truth derives from the scene alone.
"""

from .camera import (
    CameraPose,
    Trajectory,
    TrajectoryParams,
    evaluate_viewpoint,
    plan_trajectory,
    trajectory_from_json,
    trajectory_to_json,
)
from .catalog import AssetCatalog, default_catalog
from .constraints import (
    ConstraintProgram,
    evaluate_constraints,
    parse_program,
    serialize_program,
)
from .diagnostics import (
    ErrorReport,
    SceneMetrics,
    build_error_report,
    occupancy_ratio,
    scene_metrics,
)
from .errors import (
    ConfigError,
    InaccessibleCellError,
    PathNotFoundError,
    ProgramParseError,
    RefinerError,
    RoomBenchError,
    SceneFormatError,
)
from .geometry import CameraIntrinsics, OrientedBox, RoomSpec
from .layout import (
    LayoutResult,
    OptimizerSchedule,
    optimize_layout,
    optimize_layout_hierarchical,
)
from .refine import (
    ExternalRefiner,
    RefinementHistory,
    RuleBasedRefiner,
    rule_based_refine,
    run_refinement,
)
from .scene import ObjectInstance, SceneState, scene_from_json, scene_to_json
from .sweep import SweepAxes, run_sweep
from .taskgen import (
    QATask,
    derive_ground_truth,
    gen_counting,
    gen_measurement,
    gen_order,
    score_answer,
    tasks_from_jsonl,
    tasks_to_jsonl,
)

__version__ = "0.1.0"

__all__ = [
    "AssetCatalog",
    "CameraIntrinsics",
    "CameraPose",
    "ConfigError",
    "ConstraintProgram",
    "ErrorReport",
    "ExternalRefiner",
    "InaccessibleCellError",
    "LayoutResult",
    "ObjectInstance",
    "OptimizerSchedule",
    "OrientedBox",
    "PathNotFoundError",
    "ProgramParseError",
    "QATask",
    "RefinementHistory",
    "RefinerError",
    "RoomBenchError",
    "RoomSpec",
    "RuleBasedRefiner",
    "SceneFormatError",
    "SceneMetrics",
    "SceneState",
    "SweepAxes",
    "Trajectory",
    "TrajectoryParams",
    "build_error_report",
    "default_catalog",
    "derive_ground_truth",
    "evaluate_constraints",
    "evaluate_viewpoint",
    "gen_counting",
    "gen_measurement",
    "gen_order",
    "occupancy_ratio",
    "optimize_layout",
    "optimize_layout_hierarchical",
    "parse_program",
    "plan_trajectory",
    "rule_based_refine",
    "run_refinement",
    "scene_from_json",
    "scene_metrics",
    "scene_to_json",
    "score_answer",
    "serialize_program",
    "tasks_from_jsonl",
    "tasks_to_jsonl",
    "trajectory_from_json",
    "trajectory_to_json",
]
