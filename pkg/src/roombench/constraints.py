"""Scene-constraint language: structured program types, the line-oriented
text grammar, canonical serialization, and constraint/score evaluation.

Grammar (one statement per line, `#` comments):

    room polygon (x,y) (x,y) ... height H [door (x,y)] [resizable]
    count(SELECTOR) in [LOW,HIGH]
    relation(KIND, SELECTOR, PARENT)
    score(OBJECTIVE, SELECTOR[, SELECTOR|wall], weight=W)
    occupancy in [LOW,HIGH]
    asset CATEGORY dims [x [LO,HI]] [y [LO,HI]] [z [LO,HI]]
    hint NAME VALUE

SELECTOR = CATEGORY | any, optionally followed by a tag filter
`[Tag,...]` and/or `where KIND PARENT`. PARENT is another selector, or
`wall` for the wall-anchored relation kinds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .catalog import AssetCatalog, default_catalog
from .errors import ProgramParseError
from .geometry import RoomSpec, point_to_segment_distance
from .scene import RELATION_KINDS, SceneState, relation_holds

SCORE_OBJECTIVES = ("maximize_distance", "minimize_distance", "maximize_count", "wall_angle_alignment")
_WALL_NAMES = ("wall", "room-wall")

# Default room used when a program omits its room statement: 6 x 5 m.
DEFAULT_ROOM = RoomSpec(((0.0, 0.0), (6.0, 0.0), (6.0, 5.0), (0.0, 5.0)), 3.0, (3.0, 0.0))

# Occupancy misses are scaled onto the same penalty axis as count misses,
# so a 0.1 occupancy error weighs like one missing object.
OCCUPANCY_PENALTY_SCALE = 10.0


@dataclass(frozen=True)
class SemanticSelector:
    """Pure instance predicate: category (or `any`), required tags, and an
    optional recorded-relation filter."""

    category: str
    tags: frozenset[str] = frozenset()
    related_to: tuple[str, "SemanticSelector"] | None = None

    def matches(self, inst, scene: SceneState) -> bool:
        if self.category != "any" and inst.category != self.category:
            return False
        if self.tags:
            spec = scene.catalog.get(inst.category)
            if not self.tags <= spec.tags:
                return False
        if self.related_to is not None:
            kind, parent_sel = self.related_to
            if inst.relation_kind != kind:
                return False
            if not relation_holds(scene, inst):
                return False
            if parent_sel is not None:
                if inst.relation_parent is None or inst.relation_parent not in scene.instances:
                    return False
                if not parent_sel.matches(scene.get(inst.relation_parent), scene):
                    return False
        return True

    def select(self, scene: SceneState) -> list:
        return [inst for inst in scene.instances.values() if self.matches(inst, scene)]

    def text(self) -> str:
        out = self.category
        if self.tags:
            out += "[" + ",".join(sorted(self.tags)) + "]"
        if self.related_to is not None:
            kind, parent = self.related_to
            out += f" where {kind} " + ("wall" if parent is None else parent.text())
        return out


@dataclass(frozen=True)
class CountConstraint:
    selector: SemanticSelector
    low: int
    high: int
    scope: SemanticSelector | None = None  # when set, the bound applies per parent

    def __post_init__(self):
        if not (0 <= self.low <= self.high):
            raise ValueError(f"count range [{self.low},{self.high}] is not well ordered")


@dataclass(frozen=True)
class RelationConstraint:
    kind: str
    child: SemanticSelector
    parent: SemanticSelector | None  # None means the room wall

    def __post_init__(self):
        if self.kind not in RELATION_KINDS:
            raise ValueError(f"unknown relation kind {self.kind!r}")


@dataclass(frozen=True)
class ScoreTerm:
    objective: str
    operands: tuple  # SemanticSelector or None (None = room wall)
    weight: float

    def __post_init__(self):
        if self.objective not in SCORE_OBJECTIVES:
            raise ValueError(f"unknown score objective {self.objective!r}")
        if self.weight < 0:
            raise ValueError("score weight must be non-negative")


@dataclass
class ConstraintProgram:
    room: RoomSpec | None = None
    resizable: bool = False
    counts: list[CountConstraint] = field(default_factory=list)
    relations: list[RelationConstraint] = field(default_factory=list)
    scores: list[ScoreTerm] = field(default_factory=list)
    asset_overrides: dict[str, tuple[tuple[float, float], ...]] = field(default_factory=dict)
    target_occupancy: tuple[float, float] | None = None
    hints: dict[str, float] = field(default_factory=dict)

    def room_or_default(self) -> RoomSpec:
        return self.room if self.room is not None else DEFAULT_ROOM

    def constraint_ids(self) -> list[str]:
        ids = [f"count_{i}" for i in range(len(self.counts))]
        ids += [f"relation_{i}" for i in range(len(self.relations))]
        if self.target_occupancy is not None:
            ids.append("occupancy")
        return ids


@dataclass(frozen=True)
class ViolatedEntry:
    constraint_id: str
    observed: float
    required: tuple[float, float]
    sentence: str


@dataclass
class SatisfactionReport:
    satisfied: list[str]
    violated: list[ViolatedEntry]
    score: float

    @property
    def all_satisfied(self) -> bool:
        return not self.violated


# ---------------------------------------------------------------------------
# Tokenizer


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t]+)"
    r"|(?P<num>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_\-]*)"
    r"|(?P<punct>[()\[\],=])"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num | name | punct | end
    text: str
    column: int  # 1-based


class _LineParser:
    def __init__(self, line: str, line_no: int):
        self.line_no = line_no
        self.tokens: list[_Token] = []
        pos = 0
        while pos < len(line):
            if line[pos] == "#":
                break
            m = _TOKEN_RE.match(line, pos)
            if m is None:
                raise ProgramParseError(f"unexpected character {line[pos]!r}", line_no, pos + 1, line[pos])
            if m.lastgroup != "ws":
                self.tokens.append(_Token(m.lastgroup, m.group(), pos + 1))
            pos = m.end()
        self.tokens.append(_Token("end", "", len(line) + 1))
        self.idx = 0

    def peek(self) -> _Token:
        return self.tokens[self.idx]

    def next(self) -> _Token:
        tok = self.tokens[self.idx]
        if tok.kind != "end":
            self.idx += 1
        return tok

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        raise ProgramParseError(message, self.line_no, tok.column, tok.text)

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            self.error(f"expected {want!r}", tok)
        return self.next()

    def expect_number(self) -> float:
        tok = self.expect("num")
        return float(tok.text)

    def expect_int(self) -> int:
        tok = self.expect("num")
        try:
            value = int(tok.text)
        except ValueError:
            self.error("expected an integer", tok)
        return value

    def at_end(self) -> bool:
        return self.peek().kind == "end"


# ---------------------------------------------------------------------------
# Parsing


def _parse_point(p: _LineParser) -> tuple[float, float]:
    p.expect("punct", "(")
    x = p.expect_number()
    p.expect("punct", ",")
    y = p.expect_number()
    p.expect("punct", ")")
    return (x, y)


def _parse_selector(p: _LineParser, catalog: AssetCatalog, allow_wall: bool = False):
    """Returns a SemanticSelector, or None for the wall pseudo-target."""
    tok = p.expect("name")
    if tok.text in _WALL_NAMES:
        if not allow_wall:
            p.error("the wall is not a valid selector here", tok)
        return None
    category = tok.text
    if category != "any" and category not in catalog.categories:
        p.error(f"unknown category {category!r}", tok)
    tags: set[str] = set()
    if p.peek().kind == "punct" and p.peek().text == "[":
        p.next()
        while True:
            tag_tok = p.expect("name")
            if tag_tok.text not in catalog.tags:
                p.error(f"unknown tag {tag_tok.text!r}", tag_tok)
            tags.add(tag_tok.text)
            if p.peek().text == ",":
                p.next()
                continue
            break
        p.expect("punct", "]")
    related = None
    if p.peek().kind == "name" and p.peek().text == "where":
        p.next()
        kind_tok = p.expect("name")
        if kind_tok.text not in RELATION_KINDS:
            p.error(f"unknown relation kind {kind_tok.text!r}", kind_tok)
        parent = _parse_selector(p, catalog, allow_wall=True)
        related = (kind_tok.text, parent)
    return SemanticSelector(category, frozenset(tags), related)


def _parse_range(p: _LineParser, integer: bool) -> tuple[float, float] | tuple[int, int]:
    open_tok = p.expect("punct", "[")
    lo = p.expect_int() if integer else p.expect_number()
    p.expect("punct", ",")
    hi = p.expect_int() if integer else p.expect_number()
    p.expect("punct", "]")
    if lo > hi:
        p.error(f"range [{lo},{hi}] has low > high", open_tok)
    if lo < 0:
        p.error("range bounds must be non-negative", open_tok)
    return (lo, hi)


def _parse_room(p: _LineParser) -> tuple[RoomSpec, bool]:
    p.expect("name", "polygon")
    points = []
    while p.peek().text == "(":
        points.append(_parse_point(p))
    if len(points) < 3:
        p.error("room polygon needs at least 3 vertices")
    p.expect("name", "height")
    height = p.expect_number()
    door = None
    resizable = False
    while not p.at_end():
        tok = p.expect("name")
        if tok.text == "door":
            door = _parse_point(p)
        elif tok.text == "resizable":
            resizable = True
        else:
            p.error(f"unexpected token {tok.text!r} in room statement", tok)
    if door is None:
        a, b = points[0], points[1]
        door = ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
    try:
        room = RoomSpec(tuple(points), height, door)
    except ValueError as exc:
        p.error(str(exc))
    return room, resizable


def parse_program(text: str, catalog: AssetCatalog | None = None) -> ConstraintProgram:
    """Parse DSL source into a structured program.

    Raises ProgramParseError with 1-based line/column on the first problem;
    never returns a partial program.
    """
    catalog = catalog if catalog is not None else default_catalog()
    program = ConstraintProgram()
    seen_room = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        p = _LineParser(raw, line_no)
        head = p.expect("name")
        if head.text == "room":
            if seen_room:
                p.error("duplicate room statement", head)
            program.room, program.resizable = _parse_room(p)
            seen_room = True
        elif head.text == "count":
            p.expect("punct", "(")
            selector = _parse_selector(p, catalog)
            p.expect("punct", ")")
            p.expect("name", "in")
            lo, hi = _parse_range(p, integer=True)
            scope = None
            if selector.related_to is not None:
                kind, parent = selector.related_to
                if parent is not None:
                    # per-parent counting: the bound applies within each parent
                    scope = parent
                    selector = SemanticSelector(selector.category, selector.tags, (kind, parent))
            program.counts.append(CountConstraint(selector, lo, hi, scope))
        elif head.text == "relation":
            p.expect("punct", "(")
            kind_tok = p.expect("name")
            if kind_tok.text not in RELATION_KINDS:
                p.error(f"unknown relation kind {kind_tok.text!r}", kind_tok)
            p.expect("punct", ",")
            child = _parse_selector(p, catalog)
            p.expect("punct", ",")
            parent = _parse_selector(p, catalog, allow_wall=True)
            p.expect("punct", ")")
            wall_kind = kind_tok.text in ("against_wall", "flush_wall")
            if wall_kind and parent is not None:
                p.error(f"{kind_tok.text} takes the wall as its target", kind_tok)
            if not wall_kind and parent is None:
                p.error(f"{kind_tok.text} needs an object parent, not the wall", kind_tok)
            program.relations.append(RelationConstraint(kind_tok.text, child, parent))
        elif head.text == "score":
            p.expect("punct", "(")
            obj_tok = p.expect("name")
            if obj_tok.text not in SCORE_OBJECTIVES:
                p.error(f"unknown score objective {obj_tok.text!r}", obj_tok)
            operands = []
            while True:
                p.expect("punct", ",")
                if p.peek().kind == "name" and p.peek().text == "weight":
                    p.next()
                    p.expect("punct", "=")
                    weight = p.expect_number()
                    p.expect("punct", ")")
                    break
                operands.append(_parse_selector(p, catalog, allow_wall=True))
            _finish_score(p, program, obj_tok, operands, weight)
        elif head.text == "occupancy":
            p.expect("name", "in")
            lo, hi = _parse_range(p, integer=False)
            if hi > 1.0:
                p.error("occupancy bounds must lie in [0,1]")
            program.target_occupancy = (float(lo), float(hi))
        elif head.text == "asset":
            cat_tok = p.expect("name")
            if cat_tok.text not in catalog.categories:
                p.error(f"unknown category {cat_tok.text!r}", cat_tok)
            p.expect("name", "dims")
            base = list(catalog.get(cat_tok.text).dimension_ranges)
            axes_seen = set()
            while not p.at_end():
                axis_tok = p.expect("name")
                if axis_tok.text not in ("x", "y", "z"):
                    p.error(f"expected an axis name, got {axis_tok.text!r}", axis_tok)
                if axis_tok.text in axes_seen:
                    p.error(f"duplicate axis {axis_tok.text!r}", axis_tok)
                axes_seen.add(axis_tok.text)
                lo, hi = _parse_range(p, integer=False)
                if lo <= 0:
                    p.error("dimension bounds must be positive")
                base["xyz".index(axis_tok.text)] = (float(lo), float(hi))
            if not axes_seen:
                p.error("asset statement overrides no axis")
            program.asset_overrides[cat_tok.text] = tuple(base)
        elif head.text == "hint":
            name_tok = p.expect("name")
            value = p.expect_number()
            program.hints[name_tok.text] = float(value)
        else:
            p.error(f"unknown statement {head.text!r}", head)
        if not p.at_end():
            p.error("trailing tokens after statement")
    return program


def _finish_score(p: _LineParser, program: ConstraintProgram, obj_tok, operands, weight: float):
    if weight < 0:
        p.error("score weight must be non-negative")
    needs_two = obj_tok.text in ("maximize_distance", "minimize_distance")
    if needs_two and len(operands) != 2:
        p.error(f"{obj_tok.text} takes two operands", obj_tok)
    if not needs_two and len(operands) != 1:
        p.error(f"{obj_tok.text} takes one operand", obj_tok)
    if operands[0] is None:
        p.error("the first score operand cannot be the wall", obj_tok)
    program.scores.append(ScoreTerm(obj_tok.text, tuple(operands), float(weight)))


# ---------------------------------------------------------------------------
# Canonical serialization


def _fmt(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def serialize_program(program: ConstraintProgram) -> str:
    """Canonical DSL text; parsing it back reproduces the structure."""
    lines = []
    if program.room is not None:
        pts = " ".join(f"({_fmt(x)},{_fmt(y)})" for x, y in program.room.floor_polygon)
        door = program.room.door_position
        line = f"room polygon {pts} height {_fmt(program.room.wall_height)} door ({_fmt(door[0])},{_fmt(door[1])})"
        if program.resizable:
            line += " resizable"
        lines.append(line)
    for cat in sorted(program.asset_overrides):
        ranges = program.asset_overrides[cat]
        axes = " ".join(
            f"{axis} [{_fmt(lo)},{_fmt(hi)}]" for axis, (lo, hi) in zip("xyz", ranges)
        )
        lines.append(f"asset {cat} dims {axes}")
    for c in program.counts:
        lines.append(f"count({c.selector.text()}) in [{c.low},{c.high}]")
    for r in program.relations:
        parent = "wall" if r.parent is None else r.parent.text()
        lines.append(f"relation({r.kind}, {r.child.text()}, {parent})")
    for s in program.scores:
        ops = ", ".join("wall" if op is None else op.text() for op in s.operands)
        lines.append(f"score({s.objective}, {ops}, weight={_fmt(s.weight)})")
    if program.target_occupancy is not None:
        lo, hi = program.target_occupancy
        lines.append(f"occupancy in [{_fmt(lo)},{_fmt(hi)}]")
    for name in sorted(program.hints):
        lines.append(f"hint {name} {_fmt(program.hints[name])}")
    return "\n".join(lines) + ("\n" if lines else "")


def _selector_to_json(sel: SemanticSelector | None):
    if sel is None:
        return "room-wall"
    out = {"category": sel.category, "tags": sorted(sel.tags)}
    if sel.related_to is not None:
        kind, parent = sel.related_to
        out["related_to"] = {"kind": kind, "selector": _selector_to_json(parent)}
    else:
        out["related_to"] = None
    return out


def _selector_from_json(data) -> SemanticSelector | None:
    if data == "room-wall" or data is None:
        return None
    related = None
    if data.get("related_to"):
        rel = data["related_to"]
        related = (rel["kind"], _selector_from_json(rel["selector"]))
    return SemanticSelector(data["category"], frozenset(data.get("tags", ())), related)


def program_to_json(program: ConstraintProgram) -> dict:
    from .scene import room_to_json

    return {
        "schema": "program/1",
        "room": room_to_json(program.room) if program.room is not None else None,
        "resizable": program.resizable,
        "counts": [
            {
                "selector": _selector_to_json(c.selector),
                "low": c.low,
                "high": c.high,
                "scope": _selector_to_json(c.scope) if c.scope is not None else None,
            }
            for c in program.counts
        ],
        "relations": [
            {"kind": r.kind, "child": _selector_to_json(r.child), "parent": _selector_to_json(r.parent)}
            for r in program.relations
        ],
        "scores": [
            {
                "objective": s.objective,
                "operands": [_selector_to_json(op) for op in s.operands],
                "weight": s.weight,
            }
            for s in program.scores
        ],
        "asset_overrides": {
            cat: [[lo, hi] for lo, hi in ranges] for cat, ranges in sorted(program.asset_overrides.items())
        },
        "occupancy": list(program.target_occupancy) if program.target_occupancy is not None else None,
        "hints": dict(sorted(program.hints.items())),
    }


def program_from_json(data: dict) -> ConstraintProgram:
    from .scene import room_from_json

    program = ConstraintProgram()
    if data.get("room") is not None:
        program.room = room_from_json(data["room"])
    program.resizable = bool(data.get("resizable", False))
    for c in data.get("counts", ()):
        scope = _selector_from_json(c["scope"]) if c.get("scope") else None
        program.counts.append(
            CountConstraint(_selector_from_json(c["selector"]), int(c["low"]), int(c["high"]), scope)
        )
    for r in data.get("relations", ()):
        program.relations.append(
            RelationConstraint(r["kind"], _selector_from_json(r["child"]), _selector_from_json(r["parent"]))
        )
    for s in data.get("scores", ()):
        ops = tuple(_selector_from_json(op) for op in s["operands"])
        program.scores.append(ScoreTerm(s["objective"], ops, float(s["weight"])))
    for cat, ranges in data.get("asset_overrides", {}).items():
        program.asset_overrides[cat] = tuple((float(lo), float(hi)) for lo, hi in ranges)
    if data.get("occupancy") is not None:
        lo, hi = data["occupancy"]
        program.target_occupancy = (float(lo), float(hi))
    program.hints = {k: float(v) for k, v in data.get("hints", {}).items()}
    return program


# ---------------------------------------------------------------------------
# Evaluation


def _count_for_parent(scene: SceneState, selector: SemanticSelector, kind: str, parent_id: str) -> int:
    n = 0
    for inst in scene.instances.values():
        if inst.relation_kind != kind or inst.relation_parent != parent_id:
            continue
        if selector.category != "any" and inst.category != selector.category:
            continue
        if selector.tags and not selector.tags <= scene.catalog.get(inst.category).tags:
            continue
        if relation_holds(scene, inst):
            n += 1
    return n


def observed_counts(constraint: CountConstraint, scene: SceneState) -> list[tuple[str | None, int]]:
    """(parent-id, count) pairs; a single (None, count) without scope."""
    if constraint.scope is None:
        return [(None, len(constraint.selector.select(scene)))]
    kind = constraint.selector.related_to[0]
    parents = constraint.scope.select(scene)
    return [(p.id, _count_for_parent(scene, constraint.selector, kind, p.id)) for p in parents]


def _range_distance(value: float, lo: float, hi: float) -> float:
    if value < lo:
        return lo - value
    if value > hi:
        return value - hi
    return 0.0


def count_constraint_status(constraint: CountConstraint, scene: SceneState) -> tuple[bool, int]:
    """(satisfied, representative observed count). With a scope, the
    representative is the most-violating parent's count (first in id order
    on ties); satisfied only when every parent is in range."""
    pairs = observed_counts(constraint, scene)
    if not pairs:
        return True, 0
    worst = None
    worst_dist = -1.0
    ok = True
    for parent_id, n in sorted(pairs, key=lambda t: (t[0] is not None, t[0])):
        d = _range_distance(n, constraint.low, constraint.high)
        if d > 0:
            ok = False
        if d > worst_dist:
            worst_dist = d
            worst = n
    return ok, int(worst)


def relation_constraint_violations(constraint: RelationConstraint, scene: SceneState) -> int:
    """Number of child-matching instances not holding the required relation."""
    bad = 0
    for inst in constraint.child.select(scene):
        if inst.relation_kind != constraint.kind:
            bad += 1
            continue
        if constraint.parent is not None:
            if inst.relation_parent is None or inst.relation_parent not in scene.instances:
                bad += 1
                continue
            if not constraint.parent.matches(scene.get(inst.relation_parent), scene):
                bad += 1
                continue
        if not relation_holds(scene, inst):
            bad += 1
    return bad


def _wall_distance_xy(scene: SceneState, inst) -> float:
    return scene.room.wall_distance(inst.x, inst.y)


def _pairwise_value(scene: SceneState, a_sel: SemanticSelector, b_sel: SemanticSelector | None) -> float:
    """Mean over a-instances of the distance to the nearest b (or wall)."""
    a_insts = a_sel.select(scene)
    if not a_insts:
        return 0.0
    if b_sel is None:
        return float(np.mean([_wall_distance_xy(scene, a) for a in a_insts]))
    b_insts = b_sel.select(scene)
    values = []
    for a in a_insts:
        ds = [
            math.dist(a.centroid, b.centroid)
            for b in b_insts
            if b.id != a.id
        ]
        if ds:
            values.append(min(ds))
    if not values:
        return 0.0
    return float(np.mean(values))


def _alignment_value(scene: SceneState, sel: SemanticSelector) -> float:
    """1 when yaw is parallel/perpendicular to the nearest wall, 0 at 45 deg."""
    insts = sel.select(scene)
    if not insts:
        return 0.0
    poly = scene.room.polygon_array()
    n = len(poly)
    values = []
    for inst in insts:
        best_d = math.inf
        best_angle = 0.0
        for i in range(n):
            a, b = poly[i], poly[(i + 1) % n]
            d = point_to_segment_distance((inst.x, inst.y), tuple(a), tuple(b))
            if d < best_d:
                best_d = d
                best_angle = math.atan2(b[1] - a[1], b[0] - a[0])
        dev = abs(inst.yaw - best_angle) % (math.pi / 2.0)
        dev = min(dev, math.pi / 2.0 - dev)
        values.append(1.0 - dev / (math.pi / 4.0))
    return float(np.mean(values))


def evaluate_score(program: ConstraintProgram, scene: SceneState) -> float:
    """Weighted sum of score terms; maximize terms add, minimize subtract."""
    total = 0.0
    for term in program.scores:
        if term.objective == "maximize_distance":
            value = _pairwise_value(scene, term.operands[0], term.operands[1])
        elif term.objective == "minimize_distance":
            value = -_pairwise_value(scene, term.operands[0], term.operands[1])
        elif term.objective == "maximize_count":
            value = float(len(term.operands[0].select(scene)))
        else:  # wall_angle_alignment
            value = _alignment_value(scene, term.operands[0])
        total += term.weight * value
    return total


def evaluate_constraints(program: ConstraintProgram, scene: SceneState) -> SatisfactionReport:
    """Deterministic satisfaction report covering every constraint exactly once."""
    satisfied: list[str] = []
    violated: list[ViolatedEntry] = []
    for i, c in enumerate(program.counts):
        cid = f"count_{i}"
        ok, observed = count_constraint_status(c, scene)
        if ok:
            satisfied.append(cid)
        else:
            sentence = (
                f"constraint {cid}: observed {observed} {c.selector.text()}, "
                f"required [{c.low},{c.high}]"
            )
            violated.append(ViolatedEntry(cid, float(observed), (float(c.low), float(c.high)), sentence))
    for i, r in enumerate(program.relations):
        cid = f"relation_{i}"
        bad = relation_constraint_violations(r, scene)
        if bad == 0:
            satisfied.append(cid)
        else:
            parent = "wall" if r.parent is None else r.parent.text()
            sentence = (
                f"constraint {cid}: observed {bad} {r.child.text()} violating "
                f"{r.kind}({parent}), required [0,0]"
            )
            violated.append(ViolatedEntry(cid, float(bad), (0.0, 0.0), sentence))
    if program.target_occupancy is not None:
        from .diagnostics import occupancy_ratio

        lo, hi = program.target_occupancy
        occ = occupancy_ratio(scene)
        if lo <= occ <= hi:
            satisfied.append("occupancy")
        else:
            sentence = (
                f"constraint occupancy: observed {occ:.3f} occupancy, "
                f"required [{_fmt(lo)},{_fmt(hi)}]"
            )
            violated.append(ViolatedEntry("occupancy", occ, (lo, hi), sentence))
    return SatisfactionReport(satisfied, violated, evaluate_score(program, scene))


def violation_penalty(program: ConstraintProgram, scene: SceneState, occupancy: float | None = None) -> float:
    """Continuous miss distance used by the optimizer's acceptance rule.

    Counts contribute their distance to range (summed over scoped parents),
    relation constraints one unit per violating child, occupancy its scaled
    distance to the target interval. Zero iff every constraint is satisfied.
    """
    penalty = 0.0
    for c in program.counts:
        for _, n in observed_counts(c, scene):
            penalty += _range_distance(n, c.low, c.high)
    for r in program.relations:
        penalty += relation_constraint_violations(r, scene)
    if program.target_occupancy is not None:
        if occupancy is None:
            from .diagnostics import occupancy_ratio

            occupancy = occupancy_ratio(scene)
        lo, hi = program.target_occupancy
        penalty += OCCUPANCY_PENALTY_SCALE * _range_distance(occupancy, lo, hi)
    return penalty


def report_to_json(report: SatisfactionReport) -> dict:
    return {
        "satisfied": list(report.satisfied),
        "violated": [
            {
                "constraint": v.constraint_id,
                "observed": v.observed,
                "required": list(v.required),
                "sentence": v.sentence,
            }
            for v in report.violated
        ],
        "score": report.score,
    }
