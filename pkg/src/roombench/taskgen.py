"""Spatial-reasoning QA generation from a scene and its camera trajectory.

Three task families with machine-derived ground truth: object
measurements (heights, pairwise distances), perspective counting over the
camera's accepted views, and spatiotemporal visit-order questions.
Referring expressions are guaranteed unambiguous: an expression is only
used when its selector matches exactly one instance in the scene.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import Trajectory, TrajectoryParams
from .constraints import SemanticSelector
from .errors import ScoringError, SceneFormatError
from .geometry import fov_containment
from .scene import RELATION_KINDS, ObjectInstance, SceneState

TASK_FAMILIES = ("measurement", "perspective_counting", "spatiotemporal_order")
ANSWER_TYPES = ("numeric_meters", "numeric_count", "ordered_choice")

RELATIVE_ERROR_EPS = 1e-6
ORDER_CHOICES = 4


@dataclass
class QATask:
    id: str
    family: str
    question: str
    answer_type: str
    ground_truth: float | str
    choices: list[str] | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in TASK_FAMILIES:
            raise ValueError(f"unknown task family {self.family!r}")
        if self.answer_type not in ANSWER_TYPES:
            raise ValueError(f"unknown answer type {self.answer_type!r}")

    def to_json(self) -> dict:
        return {
            "schema": "task/1",
            "id": self.id,
            "family": self.family,
            "question": self.question,
            "answer_type": self.answer_type,
            "ground_truth": self.ground_truth,
            "choices": self.choices,
            "provenance": self.provenance,
        }

    @staticmethod
    def from_json(data: dict) -> "QATask":
        if data.get("schema") != "task/1":
            raise SceneFormatError("not a task/1 record")
        return QATask(
            id=data["id"],
            family=data["family"],
            question=data["question"],
            answer_type=data["answer_type"],
            ground_truth=data["ground_truth"],
            choices=data.get("choices"),
            provenance=data.get("provenance", {}),
        )


@dataclass
class ComplexityControls:
    """Axes along which benchmark difficulty is scaled."""

    n_objects: int = 10
    n_irrelevant: int = 0
    camera_height: float = 1.0
    occlusion_band: tuple[float, float] = (0.0, 0.1)

    def __post_init__(self):
        if self.n_objects < 1:
            raise ValueError("n_objects must be positive")
        if not 0 <= self.n_irrelevant <= self.n_objects:
            raise ValueError("n_irrelevant must lie in [0, n_objects]")
        lo, hi = self.occlusion_band
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("occlusion_band must be a well-ordered interval in [0, 1]")


# ---------------------------------------------------------------------------
# Referring expressions


def _relation_phrase(kind: str) -> str:
    return kind.replace("_", " ")


def referring_expression(scene: SceneState, inst: ObjectInstance) -> tuple[str, dict] | None:
    """A phrase uniquely identifying the instance, or None.

    Tries the bare category first, then category plus the recorded
    relation ("the chair front against the dining_table"). Returns the
    phrase and a selector description for replay.
    """
    bare = SemanticSelector(category=inst.category)
    if len(bare.select(scene)) == 1:
        return f"the {inst.category}", {"category": inst.category}
    kind = inst.relation_kind
    if kind is None or kind not in RELATION_KINDS:
        return None
    if inst.relation_parent is None:
        parent_sel = None
        parent_phrase = "the wall"
        parent_desc = "wall"
    else:
        if inst.relation_parent not in scene.instances:
            return None
        parent_cat = scene.get(inst.relation_parent).category
        parent_sel = SemanticSelector(category=parent_cat)
        parent_phrase = f"the {parent_cat}"
        parent_desc = parent_cat
    related = SemanticSelector(category=inst.category, related_to=(kind, parent_sel))
    if len(related.select(scene)) != 1:
        return None
    phrase = f"the {inst.category} {_relation_phrase(kind)} {parent_phrase}"
    return phrase, {"category": inst.category, "relation": kind, "parent": parent_desc}


def resolve_expression(scene: SceneState, desc: dict) -> ObjectInstance | None:
    """Replay a referring-expression description back to its instance."""
    if "relation" in desc:
        parent = desc.get("parent")
        parent_sel = None if parent == "wall" else SemanticSelector(category=parent)
        sel = SemanticSelector(category=desc["category"], related_to=(desc["relation"], parent_sel))
    else:
        sel = SemanticSelector(category=desc["category"])
    matches = sel.select(scene)
    return matches[0] if len(matches) == 1 else None


def _referable_instances(scene: SceneState) -> list[tuple[ObjectInstance, str, dict]]:
    out = []
    for iid in sorted(scene.instances):
        inst = scene.get(iid)
        ref = referring_expression(scene, inst)
        if ref is not None:
            out.append((inst, ref[0], ref[1]))
    return out


# ---------------------------------------------------------------------------
# Task families


def gen_measurement(scene: SceneState, n: int, rng: np.random.Generator) -> list[QATask]:
    """Height and pairwise centroid-distance questions with unique referents."""
    referable = _referable_instances(scene)
    candidates = []
    for inst, phrase, desc in referable:
        candidates.append(("height", (inst, phrase, desc)))
    for i, (a, pa, da) in enumerate(referable):
        for b, pb, db in referable[i + 1:]:
            candidates.append(("distance", (a, pa, da, b, pb, db)))
    if not candidates:
        return []
    order = rng.permutation(len(candidates))
    tasks = []
    for idx in order[: max(0, n)]:
        kind, payload = candidates[int(idx)]
        serial = len(tasks)
        if kind == "height":
            inst, phrase, desc = payload
            tasks.append(
                QATask(
                    id=f"measurement_{serial:04d}",
                    family="measurement",
                    question=f"What is the height in meters of {phrase}?",
                    answer_type="numeric_meters",
                    ground_truth=float(inst.dims[2]),
                    provenance={"kind": "height", "instances": [inst.id], "referents": [desc]},
                )
            )
        else:
            a, pa, da, b, pb, db = payload
            truth = math.dist(a.centroid, b.centroid)
            tasks.append(
                QATask(
                    id=f"measurement_{serial:04d}",
                    family="measurement",
                    question=f"What is the distance in meters between {pa} and {pb}?",
                    answer_type="numeric_meters",
                    ground_truth=float(truth),
                    provenance={"kind": "distance", "instances": [a.id, b.id], "referents": [da, db]},
                )
            )
    return tasks


def visible_instances(scene: SceneState, traj: Trajectory, params: TrajectoryParams) -> set[str]:
    """Instance ids entering the frustum of at least one accepted leg view."""
    seen: set[str] = set()
    for leg in traj.legs:
        pose = leg.viewpoint.pose
        position = np.array(pose.position)
        for iid in scene.instances:
            if iid in seen:
                continue
            if fov_containment(scene.get(iid).box, position, pose.yaw, pose.pitch, params.intrinsics) > 0.0:
                seen.add(iid)
    return seen


def gen_counting(
    scene: SceneState,
    traj: Trajectory,
    rng: np.random.Generator,
    params: TrajectoryParams | None = None,
) -> list[QATask]:
    """One how-many question per category visible from the accepted views."""
    params = params if params is not None else TrajectoryParams()
    seen = visible_instances(scene, traj, params)
    per_category: dict[str, list[str]] = {}
    for iid in sorted(seen):
        per_category.setdefault(scene.get(iid).category, []).append(iid)
    tasks = []
    for serial, category in enumerate(sorted(per_category)):
        ids = per_category[category]
        tasks.append(
            QATask(
                id=f"perspective_counting_{serial:04d}",
                family="perspective_counting",
                question=f"How many {category} objects can be seen over the camera trajectory?",
                answer_type="numeric_count",
                ground_truth=float(len(ids)),
                provenance={"category": category, "instances": ids, "legs": [l.target_id for l in traj.legs]},
            )
        )
    return tasks


def gen_order(
    traj: Trajectory,
    scene: SceneState,
    rng: np.random.Generator,
    n: int = 4,
) -> list[QATask]:
    """Visit-order multiple-choice questions over three distinct legs."""
    refs = {}
    for leg in traj.legs:
        got = referring_expression(scene, scene.get(leg.target_id))
        if got is not None:
            refs[leg.target_id] = got
    usable = [leg for leg in traj.legs if leg.target_id in refs]
    if len(usable) < 3:
        return []
    tasks = []
    for serial in range(max(0, n)):
        picked = sorted(rng.choice(len(usable), size=3, replace=False).tolist())
        legs = [usable[i] for i in picked]
        phrases = [refs[leg.target_id][0] for leg in legs]
        truth = ", then ".join(phrases)
        perms = _distinct_permutations(phrases, rng)
        choices = [truth] + perms[: ORDER_CHOICES - 1]
        order = rng.permutation(len(choices))
        choices = [choices[int(i)] for i in order]
        # mention the referents in a shuffled order so the phrasing does not
        # give the visit order away
        mention = [phrases[int(i)] for i in rng.permutation(len(phrases))]
        tasks.append(
            QATask(
                id=f"spatiotemporal_order_{serial:04d}",
                family="spatiotemporal_order",
                question=(
                    "In what order does the camera first visit "
                    + ", ".join(mention[:-1])
                    + f", and {mention[-1]}?"
                ),
                answer_type="ordered_choice",
                ground_truth=truth,
                choices=choices,
                provenance={
                    "instances": [leg.target_id for leg in legs],
                    "referents": [refs[leg.target_id][1] for leg in legs],
                    "leg_indices": picked,
                },
            )
        )
    return tasks


def _distinct_permutations(phrases: list[str], rng: np.random.Generator) -> list[str]:
    """Wrong-order choices: distinct permutations excluding the true one."""
    truth = tuple(phrases)
    seen = {truth}
    out = []
    guard = 0
    while len(out) < ORDER_CHOICES - 1 and guard < 64:
        guard += 1
        perm = tuple(phrases[int(i)] for i in rng.permutation(len(phrases)))
        if perm in seen:
            continue
        seen.add(perm)
        out.append(", then ".join(perm))
    return out


# ---------------------------------------------------------------------------
# Scoring and replay


def score_answer(task: QATask, answer) -> float:
    """Relative accuracy for numeric families, exact match for choices."""
    if task.answer_type in ("numeric_meters", "numeric_count"):
        try:
            value = float(answer)
        except (TypeError, ValueError):
            raise ScoringError(f"task {task.id} expects a numeric answer, got {answer!r}") from None
        truth = float(task.ground_truth)
        return max(0.0, 1.0 - abs(value - truth) / max(truth, RELATIVE_ERROR_EPS))
    if not isinstance(answer, str):
        raise ScoringError(f"task {task.id} expects an answer choice string, got {answer!r}")
    return 1.0 if answer.strip() == task.ground_truth else 0.0


def derive_ground_truth(
    task: QATask,
    scene: SceneState,
    traj: Trajectory | None = None,
    params: TrajectoryParams | None = None,
):
    """Recompute a task's ground truth from its provenance.

    Independent replay path used to audit emitted tasks; raises when the
    provenance no longer resolves.
    """
    if task.family == "measurement":
        ids = task.provenance["instances"]
        if task.provenance["kind"] == "height":
            return float(scene.get(ids[0]).dims[2])
        a, b = (scene.get(i) for i in ids)
        return float(math.dist(a.centroid, b.centroid))
    if task.family == "perspective_counting":
        if traj is None:
            raise SceneFormatError("counting replay needs the trajectory")
        params = params if params is not None else TrajectoryParams()
        seen = visible_instances(scene, traj, params)
        category = task.provenance["category"]
        return float(sum(1 for iid in seen if scene.get(iid).category == category))
    if traj is None:
        raise SceneFormatError("order replay needs the trajectory")
    visit_rank = {leg.target_id: i for i, leg in enumerate(traj.legs)}
    ids = task.provenance["instances"]
    ordered = sorted(ids, key=lambda i: visit_rank[i])
    phrases = []
    for iid in ordered:
        got = referring_expression(scene, scene.get(iid))
        if got is None:
            raise SceneFormatError(f"referent for {iid} is no longer unique")
        phrases.append(got[0])
    return ", then ".join(phrases)


# ---------------------------------------------------------------------------
# JSONL plumbing


def tasks_to_jsonl(tasks: list[QATask]) -> str:
    return "".join(json.dumps(t.to_json(), sort_keys=True) + "\n" for t in tasks)


def tasks_from_jsonl(text: str) -> list[QATask]:
    tasks = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            tasks.append(QATask.from_json(json.loads(line)))
    return tasks
