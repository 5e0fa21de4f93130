"""Iterative refinement: optimize, diagnose, revise the program, repeat.

A Refiner receives the serialized program plus the error report and may
return a revised program. The bundled rule-based refiner fixes the three
recurring failure patterns (parent surface too small, room too crowded,
over-count) deterministically; external refiners speak a newline-delimited
JSON contract over a subprocess pipe or a TCP socket and silently degrade
to no-change on timeout or malformed output.
"""

from __future__ import annotations

import json
import select
import shlex
import socket
import subprocess
from dataclasses import dataclass, field, replace

from .catalog import default_catalog
from .constraints import (
    ConstraintProgram,
    CountConstraint,
    parse_program,
    serialize_program,
)
from .diagnostics import ErrorReport, SceneMetrics, build_error_report, report_to_json_dict
from .errors import ProgramParseError, RefinerError
from .layout import LayoutResult, OptimizerSchedule, optimize_layout, optimize_layout_hierarchical
from .scene import STACKING_KINDS, SceneState

SURFACE_WIDEN_FACTOR = 1.25
SURFACE_WIDEN_CAP = 3.0
ROOM_GROW_FACTOR = 1.15
ROOM_GROW_CAP = 2.0
DELETE_BIAS_STEP = 0.15
DELETE_BIAS_CAP = 0.6
EXCHANGE_TIMEOUT = 60.0


@dataclass
class RefinerRequest:
    program_text: str
    report: dict
    iteration: int

    def to_json(self) -> dict:
        return {
            "type": "refine_request",
            "iteration": self.iteration,
            "program": self.program_text,
            "report": self.report,
        }


@dataclass
class RefinerResponse:
    program_text: str | None = None  # None means no-change
    fault: str = ""
    note: str = ""

    @staticmethod
    def from_json(data: dict) -> "RefinerResponse":
        if data.get("type") != "refine_response":
            return RefinerResponse(fault="response record missing type refine_response")
        if data.get("no_change"):
            return RefinerResponse()
        program = data.get("program")
        if not isinstance(program, str):
            return RefinerResponse(fault="response carries neither program nor no_change")
        return RefinerResponse(program_text=program)


@dataclass
class IterationRecord:
    index: int
    program_text: str
    metrics: SceneMetrics
    violated: list[str]
    actions: list[str]

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "program": self.program_text,
            "metrics": self.metrics.to_json(),
            "violated": list(self.violated),
            "actions": list(self.actions),
        }


@dataclass
class RefinementHistory:
    iterations: list[IterationRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations_used(self) -> int:
        return len(self.iterations)

    def to_json(self) -> dict:
        return {
            "schema": "history/1",
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "iterations": [it.to_json() for it in self.iterations],
        }


# ---------------------------------------------------------------------------
# Rule-based refiner


def _violated_counts(program: ConstraintProgram, report: ErrorReport) -> list[tuple[CountConstraint, float]]:
    out = []
    by_id = {f"count_{i}": c for i, c in enumerate(program.counts)}
    for entry in report.satisfaction.violated:
        c = by_id.get(entry.constraint_id)
        if c is not None:
            out.append((c, entry.observed))
    return out


def _stacking_parent_category(constraint: CountConstraint) -> str | None:
    """Category whose surface the counted objects must sit on, if any."""
    related = constraint.selector.related_to
    if related is None or related[0] not in STACKING_KINDS:
        return None
    parent = constraint.scope if constraint.scope is not None else related[1]
    if parent is None or parent.category == "any":
        return None
    return parent.category


def _widen_surface(program: ConstraintProgram, category: str) -> tuple[ConstraintProgram, str] | None:
    catalog = default_catalog()
    if category not in catalog.entries:
        return None
    base = catalog.get(category).dimension_ranges
    current = program.asset_overrides.get(category, base)
    widened = []
    moved = False
    for axis in range(3):
        lo, hi = current[axis]
        if axis == 2:
            widened.append((lo, hi))  # height does not add surface area
            continue
        cap_lo = base[axis][0] * SURFACE_WIDEN_CAP
        cap_hi = base[axis][1] * SURFACE_WIDEN_CAP
        new = (min(lo * SURFACE_WIDEN_FACTOR, cap_lo), min(hi * SURFACE_WIDEN_FACTOR, cap_hi))
        if new != (lo, hi):
            moved = True
        widened.append(new)
    if not moved:
        return None
    overrides = dict(program.asset_overrides)
    overrides[category] = tuple(widened)
    revised = replace(program, asset_overrides=overrides)
    return revised, f"widened {category} footprint range by x{SURFACE_WIDEN_FACTOR}"


def _grow_room(program: ConstraintProgram) -> tuple[ConstraintProgram, str] | None:
    if program.resizable and program.room is not None:
        base_area = program.room.area()
        grown = program.room.scaled(ROOM_GROW_FACTOR)
        # the cap is tracked through a hint so repeated growth stays bounded
        growth = program.hints.get("room_growth", 1.0) * ROOM_GROW_FACTOR
        if growth > ROOM_GROW_CAP + 1e-9:
            return None
        hints = dict(program.hints)
        hints["room_growth"] = growth
        revised = replace(program, room=grown, hints=hints)
        return revised, f"scaled room area {base_area:.2f} -> {grown.area():.2f} m^2"
    if program.scores:
        heaviest = max(range(len(program.scores)), key=lambda i: program.scores[i].weight)
        if program.scores[heaviest].weight <= 0:
            return None
        scores = list(program.scores)
        scores[heaviest] = replace(scores[heaviest], weight=scores[heaviest].weight / 2.0)
        revised = replace(program, scores=scores)
        return revised, f"halved weight of score term {heaviest}"
    return None


def _raise_delete_bias(program: ConstraintProgram) -> tuple[ConstraintProgram, str] | None:
    current = program.hints.get("delete_bias", 0.0)
    if current >= DELETE_BIAS_CAP - 1e-9:
        return None
    hints = dict(program.hints)
    hints["delete_bias"] = min(current + DELETE_BIAS_STEP, DELETE_BIAS_CAP)
    revised = replace(program, hints=hints)
    return revised, f"raised delete bias to {hints['delete_bias']:.2f}"


def _apply_rules(program: ConstraintProgram, report: ErrorReport) -> tuple[ConstraintProgram, str]:
    """First matching rule wins; returns (possibly identical program, note)."""
    violated = _violated_counts(program, report)

    # rule 1: stacked children under-counted -> the parent surface is too
    # small, widen its footprint dimension ranges
    for constraint, observed in violated:
        if observed >= constraint.low:
            continue
        parent_cat = _stacking_parent_category(constraint)
        if parent_cat is None:
            continue
        result = _widen_surface(program, parent_cat)
        if result is not None:
            return result

    # rule 2: free-standing objects under-counted while the floor is already
    # past its occupancy target -> grow the room or relax the heaviest score
    occupancy_high = (
        program.target_occupancy is not None
        and report.metrics.occupancy_ratio > program.target_occupancy[1] - 1e-9
    )
    if occupancy_high:
        for constraint, observed in violated:
            if observed < constraint.low and constraint.selector.related_to is None:
                result = _grow_room(program)
                if result is not None:
                    return result
                break

    # rule 3: over-count -> bias the optimizer toward deletions (bounds are
    # requirements and stay untouched)
    for constraint, observed in violated:
        if observed > constraint.high:
            result = _raise_delete_bias(program)
            if result is not None:
                return result
            break

    return program, "no-change"


def rule_based_refine(program: ConstraintProgram, report: ErrorReport) -> ConstraintProgram:
    """Deterministic single-rule revision; returns the program unchanged
    when no rule applies."""
    revised, _ = _apply_rules(program, report)
    return revised


class RuleBasedRefiner:
    """Refiner wrapper around rule_based_refine for the orchestrator."""

    name = "rule_based"

    def __call__(self, request: RefinerRequest, program: ConstraintProgram, report: ErrorReport) -> RefinerResponse:
        revised, note = _apply_rules(program, report)
        if note == "no-change":
            return RefinerResponse()
        return RefinerResponse(program_text=serialize_program(revised), note=note)


class ExternalRefiner:
    """Speaks the refine_request/refine_response wire contract.

    One JSON record per line. `cmd:<shell command>` runs a persistent
    subprocess exchanging records over stdin/stdout; `tcp:<host>:<port>`
    holds a single connection. A timeout (60 s), EOF, or an unparseable
    record degrades to no-change with the fault recorded in history.
    """

    name = "external"

    def __init__(self, endpoint: str, timeout: float = EXCHANGE_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._sock_file = None
        if endpoint.startswith("cmd:"):
            self._mode = "cmd"
            self._command = shlex.split(endpoint[len("cmd:"):])
        elif endpoint.startswith("tcp:"):
            self._mode = "tcp"
            host, _, port = endpoint[len("tcp:"):].rpartition(":")
            if not host or not port.isdigit():
                raise RefinerError(f"malformed tcp endpoint {endpoint!r}")
            self._address = (host, int(port))
        else:
            raise RefinerError(f"unknown refiner endpoint {endpoint!r} (want cmd:... or tcp:host:port)")

    def _ensure_proc(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def _exchange_cmd(self, line: str) -> str:
        proc = self._ensure_proc()
        proc.stdin.write(line)
        proc.stdin.flush()
        ready, _, _ = select.select([proc.stdout], [], [], self.timeout)
        if not ready:
            raise TimeoutError(f"refiner did not answer within {self.timeout:.0f}s")
        reply = proc.stdout.readline()
        if not reply:
            raise RefinerError("refiner closed its output stream")
        return reply

    def _exchange_tcp(self, line: str) -> str:
        if self._sock_file is None:
            conn = socket.create_connection(self._address, timeout=self.timeout)
            conn.settimeout(self.timeout)
            self._sock_file = conn.makefile("rw", encoding="utf-8", newline="\n")
        self._sock_file.write(line)
        self._sock_file.flush()
        reply = self._sock_file.readline()
        if not reply:
            raise RefinerError("refiner closed the connection")
        return reply

    def __call__(self, request: RefinerRequest, program: ConstraintProgram, report: ErrorReport) -> RefinerResponse:
        line = json.dumps(request.to_json(), sort_keys=True) + "\n"
        try:
            if self._mode == "cmd":
                reply = self._exchange_cmd(line)
            else:
                reply = self._exchange_tcp(line)
        except (OSError, TimeoutError, RefinerError, socket.timeout) as exc:
            return RefinerResponse(fault=f"transport: {exc}")
        try:
            data = json.loads(reply)
        except json.JSONDecodeError as exc:
            return RefinerResponse(fault=f"malformed response: {exc}")
        return RefinerResponse.from_json(data)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5)
        if self._sock_file is not None:
            self._sock_file.close()
            self._sock_file = None


# ---------------------------------------------------------------------------
# Orchestrator


def run_refinement(
    program: ConstraintProgram,
    refiner=None,
    budget: int = 5,
    schedule: OptimizerSchedule | None = None,
    hierarchical: bool = False,
) -> tuple[SceneState, RefinementHistory, LayoutResult]:
    """Optimize-diagnose-refine loop, at most `budget` iterations.

    Convergence means fidelity 1.0 with zero out-of-boundary and collision
    counts. Iteration i optimizes with rng seed (schedule seed + i), so a
    fixed setup replays byte-identically.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    refiner = refiner if refiner is not None else RuleBasedRefiner()
    schedule = schedule if schedule is not None else OptimizerSchedule()
    optimize = optimize_layout_hierarchical if hierarchical else optimize_layout

    history = RefinementHistory()
    current = program
    result = None
    for i in range(budget):
        sched = replace(schedule, rng_seed=schedule.rng_seed + i)
        result = optimize(current, schedule=sched)
        report = build_error_report(current, result.scene)
        m = report.metrics
        record = IterationRecord(
            index=i,
            program_text=serialize_program(current),
            metrics=m,
            violated=[v.sentence for v in report.satisfaction.violated],
            actions=[],
        )
        if m.fidelity >= 1.0 and m.out_of_boundary_count == 0 and m.collision_pair_count == 0:
            record.actions.append("converged")
            history.iterations.append(record)
            history.converged = True
            break
        if i == budget - 1:
            record.actions.append("budget exhausted")
            history.iterations.append(record)
            break
        request = RefinerRequest(
            program_text=serialize_program(current),
            report=report_to_json_dict(report),
            iteration=i,
        )
        try:
            response = refiner(request, current, report)
        except Exception as exc:  # a refiner crash must not kill the loop
            response = RefinerResponse(fault=f"refiner raised: {exc}")
        if response.fault:
            record.actions.append(f"fault: {response.fault}")
        if response.program_text is None:
            record.actions.append("no-change")
        else:
            try:
                current = parse_program(response.program_text)
                record.actions.append(response.note if response.note else "program revised")
            except ProgramParseError as exc:
                record.actions.append(f"fault: revised program does not parse ({exc})")
        history.iterations.append(record)
    return result.scene, history, result
