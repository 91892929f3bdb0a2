"""Scene, layout and scene-graph value types with canonical JSON I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

WALLS = ("N", "S", "E", "W")
ROLES = ("key", "anchor", "inference", "filler")
FLAGS = ("pickupable", "heat_source", "cold_source")
CONSTRAINT_KINDS = (
    "edge",
    "center",
    "against_wall",
    "near",
    "far_from",
    "facing",
    "in_front_of",
    "side_of",
    "aligned_with",
)
GLOBAL_KINDS = frozenset({"edge", "center", "against_wall"})
# params each kind must carry (and no others are required)
REQUIRED_PARAMS = {
    "near": ("d_max",),
    "far_from": ("d_min",),
    "side_of": ("side",),
}
RELATION_LABELS = CONSTRAINT_KINDS + ("on", "in")

TWO_PI = 2.0 * math.pi


class SceneError(ValueError):
    """Base class for scene loading problems."""


class SceneParseError(SceneError):
    """The document is not well-formed JSON."""


class SceneSchemaError(SceneError):
    """The document does not match the scene schema."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class SceneReferenceError(SceneError):
    """A constraint refers to an object id that does not exist."""

    def __init__(self, object_id: str, path: str = ""):
        super().__init__(f"{path}: unknown object id {object_id!r}")
        self.object_id = object_id
        self.path = path


def normalize_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0:
        t += TWO_PI
    if t >= TWO_PI:
        t = 0.0
    return t


@dataclass(frozen=True)
class Door:
    wall: str
    offset: float
    width: float


@dataclass(frozen=True)
class RoomSpec:
    width: float
    depth: float
    doors: tuple[Door, ...] = ()
    agent_start: Optional[tuple[float, float]] = None

    def wall_length(self, wall: str) -> float:
        return self.width if wall in ("N", "S") else self.depth

    def door_center(self, door: Door) -> tuple[float, float]:
        mid = door.offset + door.width / 2.0
        if door.wall == "S":
            return (mid, 0.0)
        if door.wall == "N":
            return (mid, self.depth)
        if door.wall == "W":
            return (0.0, mid)
        return (self.width, mid)

    @property
    def start(self) -> tuple[float, float]:
        """Robot start point: explicit, else first door centre, else room centre."""
        if self.agent_start is not None:
            return self.agent_start
        if self.doors:
            return self.door_center(self.doors[0])
        return (self.width / 2.0, self.depth / 2.0)

    @property
    def area(self) -> float:
        return self.width * self.depth


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    name: str
    dims: tuple[float, float, float]
    role: str = "filler"
    functional: bool = False
    flags: frozenset[str] = frozenset()
    mass: Optional[float] = None

    @property
    def footprint_area(self) -> float:
        return self.dims[0] * self.dims[1]


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str
    subject: str
    target: Optional[str] = None
    params: tuple[tuple[str, Any], ...] = ()

    def param(self, key: str, default: Any = None) -> Any:
        for k, v in self.params:
            if k == key:
                return v
        return default

    @property
    def is_global(self) -> bool:
        return self.kind in GLOBAL_KINDS


@dataclass(frozen=True)
class Placement:
    object_id: str
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class SceneSpec:
    room: RoomSpec
    objects: tuple[ObjectSpec, ...]
    constraints: tuple[ConstraintSpec, ...] = ()
    instruction: Optional[str] = None
    room_type: Optional[str] = None

    def object(self, object_id: str) -> ObjectSpec:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    @property
    def object_map(self) -> dict[str, ObjectSpec]:
        return {o.id: o for o in self.objects}


@dataclass(frozen=True)
class Layout:
    placements: tuple[Placement, ...] = ()
    skipped: tuple[str, ...] = ()
    pto_seconds: float = 0.0

    def placement(self, object_id: str) -> Optional[Placement]:
        for p in self.placements:
            if p.object_id == object_id:
                return p
        return None

    @property
    def placed_ids(self) -> tuple[str, ...]:
        return tuple(p.object_id for p in self.placements)


@dataclass(frozen=True)
class GraphNode:
    name: str
    description: str = ""
    size: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class GraphEdge:
    subject: int
    relation: str
    object: int


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[GraphNode, ...] = ()
    edges: tuple[GraphEdge, ...] = field(default=())

    def __post_init__(self):
        n = len(self.nodes)
        for e in self.edges:
            if not (0 <= e.subject < n and 0 <= e.object < n):
                raise ValueError(f"edge index out of range: {e}")
            if e.relation not in RELATION_LABELS:
                raise ValueError(f"unknown relation label {e.relation!r}")

    def triplets(self) -> list[tuple[str, str, str]]:
        return [
            (self.nodes[e.subject].name, e.relation, self.nodes[e.object].name)
            for e in self.edges
        ]


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    value: Any

    def __str__(self):
        return f"{self.field}: {self.rule} ({self.value!r})"


def validate_scene(scene: SceneSpec) -> list[Violation]:
    """Return every broken type invariant of ``scene``; empty when valid.

    The result is sorted so it does not depend on object or constraint order.
    """
    out: list[Violation] = []
    room = scene.room
    if not room.width > 0:
        out.append(Violation("room.width", "non-positive dimension", room.width))
    if not room.depth > 0:
        out.append(Violation("room.depth", "non-positive dimension", room.depth))
    for door in room.doors:
        tag = f"room.doors[{door.wall}@{door.offset}]"
        if door.wall not in WALLS:
            out.append(Violation(tag + ".wall", "unknown wall", door.wall))
            continue
        if door.offset < 0 or door.width <= 0:
            out.append(Violation(tag, "invalid door extent", (door.offset, door.width)))
        elif door.offset + door.width > room.wall_length(door.wall) + 1e-9:
            out.append(
                Violation(tag, "door exceeds wall", door.offset + door.width)
            )
    if room.agent_start is not None:
        x, y = room.agent_start
        if not (0 <= x <= room.width and 0 <= y <= room.depth):
            out.append(Violation("room.agent_start", "outside room", room.agent_start))

    if not scene.objects:
        out.append(Violation("objects", "at least one object required", 0))
    seen: set[str] = set()
    for obj in scene.objects:
        if obj.id in seen:
            out.append(Violation(f"objects[{obj.id}].id", "duplicate id", obj.id))
        seen.add(obj.id)
        if any(not d > 0 for d in obj.dims):
            out.append(
                Violation(f"objects[{obj.id}].dims", "non-positive dimension", obj.dims)
            )
        if obj.role not in ROLES:
            out.append(Violation(f"objects[{obj.id}].role", "unknown role", obj.role))
        bad = sorted(set(obj.flags) - set(FLAGS))
        if bad:
            out.append(Violation(f"objects[{obj.id}].flags", "unknown flag", bad))

    for c in scene.constraints:
        tag = f"constraints[{c.kind}:{c.subject}->{c.target}]"
        if c.kind not in CONSTRAINT_KINDS:
            out.append(Violation(tag + ".kind", "unknown constraint kind", c.kind))
            continue
        if c.subject not in seen:
            out.append(Violation(tag + ".subject", "unknown object id", c.subject))
        if c.is_global:
            if c.target is not None:
                out.append(Violation(tag + ".target", "global kind takes no target", c.target))
        else:
            if c.target is None:
                out.append(Violation(tag + ".target", "pairwise kind needs target", None))
            elif c.target not in seen:
                out.append(Violation(tag + ".target", "unknown object id", c.target))
            elif c.target == c.subject:
                out.append(Violation(tag + ".target", "target equals subject", c.target))
        keys = {k for k, _ in c.params}
        for need in REQUIRED_PARAMS.get(c.kind, ()):
            if need not in keys:
                out.append(Violation(tag + ".params", "missing parameter", need))
        if c.kind == "side_of" and "side" in keys and c.param("side") not in ("left", "right"):
            out.append(Violation(tag + ".params.side", "side must be left or right", c.param("side")))
    return sorted(out, key=lambda v: (v.field, v.rule, repr(v.value)))


# --------------------------------------------------------------------------
# JSON


def _require(d: dict, key: str, path: str, types) -> Any:
    if not isinstance(d, dict):
        raise SceneSchemaError(path, "expected an object")
    if key not in d:
        raise SceneSchemaError(f"{path}.{key}", "missing field")
    v = d[key]
    if not isinstance(v, types):
        raise SceneSchemaError(f"{path}.{key}", f"wrong type {type(v).__name__}")
    return v


_NUM = (int, float)


def _number(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, _NUM):
        raise SceneSchemaError(path, "expected a number")
    return float(v)


def _point(v: Any, path: str) -> tuple[float, float]:
    if not isinstance(v, list) or len(v) != 2:
        raise SceneSchemaError(path, "expected [x, y]")
    return (_number(v[0], path + "[0]"), _number(v[1], path + "[1]"))


def scene_from_dict(doc: dict) -> SceneSpec:
    room_d = _require(doc, "room", "$", dict)
    doors = []
    for i, dd in enumerate(room_d.get("doors", []) or []):
        p = f"$.room.doors[{i}]"
        wall = _require(dd, "wall", p, str)
        if wall not in WALLS:
            raise SceneSchemaError(p + ".wall", f"expected one of {WALLS}")
        doors.append(
            Door(wall, _number(_require(dd, "offset", p, _NUM), p + ".offset"),
                 _number(_require(dd, "width", p, _NUM), p + ".width"))
        )
    start = room_d.get("agent_start")
    room = RoomSpec(
        width=_number(_require(room_d, "width", "$.room", _NUM), "$.room.width"),
        depth=_number(_require(room_d, "depth", "$.room", _NUM), "$.room.depth"),
        doors=tuple(doors),
        agent_start=None if start is None else _point(start, "$.room.agent_start"),
    )

    objects = []
    for i, od in enumerate(_require(doc, "objects", "$", list)):
        p = f"$.objects[{i}]"
        dims = _require(od, "dims", p, list)
        if len(dims) != 3:
            raise SceneSchemaError(p + ".dims", "expected [w, d, h]")
        role = od.get("role", "filler")
        if role not in ROLES:
            raise SceneSchemaError(p + ".role", f"expected one of {ROLES}")
        flags = od.get("flags", []) or []
        if not isinstance(flags, list) or not all(isinstance(f, str) for f in flags):
            raise SceneSchemaError(p + ".flags", "expected a list of strings")
        mass = od.get("mass")
        objects.append(
            ObjectSpec(
                id=_require(od, "id", p, str),
                name=_require(od, "name", p, str),
                dims=tuple(_number(x, f"{p}.dims[{k}]") for k, x in enumerate(dims)),
                role=role,
                functional=bool(od.get("functional", False)),
                flags=frozenset(flags),
                mass=None if mass is None else _number(mass, p + ".mass"),
            )
        )

    ids = {o.id for o in objects}
    constraints = []
    for i, cd in enumerate(doc.get("constraints", []) or []):
        p = f"$.constraints[{i}]"
        kind = _require(cd, "kind", p, str)
        if kind not in CONSTRAINT_KINDS:
            raise SceneSchemaError(p + ".kind", f"unknown constraint kind {kind!r}")
        subject = _require(cd, "subject", p, str)
        target = cd.get("target")
        if subject not in ids:
            raise SceneReferenceError(subject, p + ".subject")
        if target is not None and target not in ids:
            raise SceneReferenceError(target, p + ".target")
        params = cd.get("params") or {}
        if not isinstance(params, dict):
            raise SceneSchemaError(p + ".params", "expected an object")
        for k in REQUIRED_PARAMS.get(kind, ()):
            if k not in params:
                raise SceneSchemaError(f"{p}.params.{k}", "missing field")
        constraints.append(
            ConstraintSpec(kind, subject, target, tuple(sorted(params.items())))
        )

    return SceneSpec(
        room=room,
        objects=tuple(objects),
        constraints=tuple(constraints),
        instruction=doc.get("instruction"),
        room_type=doc.get("room_type"),
    )


def load_scene(document: str) -> SceneSpec:
    """Parse and validate a scene JSON document.

    Raises:
        SceneParseError: malformed JSON.
        SceneSchemaError: structural mismatch; ``path`` names the offending field.
        SceneReferenceError: a constraint names an unknown object.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"malformed JSON: {exc}") from exc
    scene = scene_from_dict(doc)
    problems = validate_scene(scene)
    if problems:
        v = problems[0]
        raise SceneSchemaError(v.field, f"{v.rule} ({v.value!r})")
    return scene


def scene_to_dict(scene: SceneSpec) -> dict:
    room: dict[str, Any] = {
        "width": scene.room.width,
        "depth": scene.room.depth,
        "doors": [
            {"wall": d.wall, "offset": d.offset, "width": d.width}
            for d in scene.room.doors
        ],
    }
    if scene.room.agent_start is not None:
        room["agent_start"] = list(scene.room.agent_start)
    objects = []
    for o in scene.objects:
        od: dict[str, Any] = {
            "id": o.id,
            "name": o.name,
            "dims": list(o.dims),
            "role": o.role,
            "functional": o.functional,
            "flags": sorted(o.flags),
        }
        if o.mass is not None:
            od["mass"] = o.mass
        objects.append(od)
    constraints = []
    for c in scene.constraints:
        cd: dict[str, Any] = {"kind": c.kind, "subject": c.subject}
        if c.target is not None:
            cd["target"] = c.target
        if c.params:
            cd["params"] = dict(c.params)
        constraints.append(cd)
    doc: dict[str, Any] = {"room": room, "objects": objects, "constraints": constraints}
    if scene.instruction is not None:
        doc["instruction"] = scene.instruction
    if scene.room_type is not None:
        doc["room_type"] = scene.room_type
    return doc


def dump_scene(scene: SceneSpec) -> str:
    return json.dumps(scene_to_dict(scene), indent=2)


def layout_to_dict(layout: Layout) -> dict:
    return {
        "placements": [
            {"id": p.object_id, "x": p.x, "y": p.y, "theta": p.theta}
            for p in layout.placements
        ],
        "skipped": list(layout.skipped),
        "pto_seconds": layout.pto_seconds,
    }


def export_layout(layout: Layout) -> str:
    # json uses repr() for floats, the shortest string that round-trips exactly
    return json.dumps(layout_to_dict(layout), indent=2)


def layout_from_dict(doc: dict) -> Layout:
    placements = []
    for i, pd in enumerate(_require(doc, "placements", "$", list)):
        p = f"$.placements[{i}]"
        placements.append(
            Placement(
                _require(pd, "id", p, str),
                _number(_require(pd, "x", p, _NUM), p + ".x"),
                _number(_require(pd, "y", p, _NUM), p + ".y"),
                _number(pd.get("theta", 0.0), p + ".theta"),
            )
        )
    skipped = doc.get("skipped", []) or []
    ids = [p.object_id for p in placements] + list(skipped)
    if len(ids) != len(set(ids)):
        raise SceneSchemaError("$.placements", "object id appears twice")
    return Layout(
        tuple(placements),
        tuple(skipped),
        _number(doc.get("pto_seconds", 0.0), "$.pto_seconds"),
    )


def load_layout(document: str, scene: Optional[SceneSpec] = None) -> Layout:
    """Parse a layout document; with ``scene`` given, ids are checked against it."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"malformed JSON: {exc}") from exc
    layout = layout_from_dict(doc)
    if scene is not None:
        known = {o.id for o in scene.objects}
        for i, oid in enumerate(layout.placed_ids + layout.skipped):
            if oid not in known:
                raise SceneReferenceError(oid, f"$.placements[{i}]")
    return layout


def graph_from_dict(doc: dict) -> SceneGraph:
    nodes = []
    for i, nd in enumerate(_require(doc, "nodes", "$", list)):
        p = f"$.nodes[{i}]"
        size = nd.get("size", [0.0, 0.0, 0.0])
        nodes.append(
            GraphNode(
                _require(nd, "name", p, str),
                nd.get("description", ""),
                tuple(float(s) for s in size),
            )
        )
    edges = []
    for i, ed in enumerate(doc.get("edges", []) or []):
        p = f"$.edges[{i}]"
        edges.append(
            GraphEdge(
                int(_require(ed, "subject", p, int)),
                _require(ed, "relation", p, str),
                int(_require(ed, "object", p, int)),
            )
        )
    try:
        return SceneGraph(tuple(nodes), tuple(edges))
    except ValueError as exc:
        raise SceneSchemaError("$.edges", str(exc)) from exc


def graph_to_dict(graph: SceneGraph) -> dict:
    return {
        "nodes": [
            {"name": n.name, "description": n.description, "size": list(n.size)}
            for n in graph.nodes
        ],
        "edges": [
            {"subject": e.subject, "relation": e.relation, "object": e.object}
            for e in graph.edges
        ],
    }


def load_graph(document: str) -> SceneGraph:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"malformed JSON: {exc}") from exc
    return graph_from_dict(doc)


def scene_graph(scene: SceneSpec) -> SceneGraph:
    """Derive the scene graph implied by a scene's pairwise constraints."""
    index = {o.id: i for i, o in enumerate(scene.objects)}
    nodes = tuple(GraphNode(o.name, "", o.dims) for o in scene.objects)
    edges = tuple(
        GraphEdge(index[c.subject], c.kind, index[c.target])
        for c in scene.constraints
        if c.target is not None
    )
    return SceneGraph(nodes, edges)
