"""Layout energy terms and their weighted total.

Every term is non-negative and zero on a configuration that fully satisfies
it.  The agent's reward is the negated total.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from . import navgrid
from .geometry import (
    CLEARANCE_DEPTH,
    CLEARANCE_MARGIN,
    OccupancyGrid,
    Polygon,
    clearance_region,
    footprint_polygon,
    grid_shape,
    intersection_area,
    polygon_mask,
    rasterize,
    room_polygon,
)
from .scene import ConstraintSpec, Layout, ObjectSpec, Placement, RoomSpec, SceneSpec

EPS_OOB = 1e-8
EDGE_DISTANCE = 0.3
WALL_MARGIN = 0.05
PRIOR_RADIUS = 3.0
AFF_OVERLAP_TOL = 1e-6


@dataclass(frozen=True)
class EnergyWeights:
    rel: float = 4.0
    collision: float = 1.5
    oob: float = 0.35
    nav: float = 1.5
    aff: float = 1.5
    prior: float = 1.0
    aff_outside: float = 1.0
    aff_blocked: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"energy weight {f.name} must be >= 0")

    @property
    def terms(self) -> tuple[float, float, float, float, float]:
        return (self.rel, self.collision, self.oob, self.nav, self.aff)


DEFAULT_WEIGHTS = EnergyWeights()


@dataclass(frozen=True)
class EnergyBreakdown:
    e_rel: float = 0.0
    e_collision: float = 0.0
    e_oob: float = 0.0
    e_nav: float = 0.0
    e_aff: float = 0.0
    total: float = 0.0

    @classmethod
    def compose(cls, e_rel, e_collision, e_oob, e_nav, e_aff,
                weights: EnergyWeights = DEFAULT_WEIGHTS) -> "EnergyBreakdown":
        terms = (e_rel, e_collision, e_oob, e_nav, e_aff)
        total = sum(w * t for w, t in zip(weights.terms, terms))
        return cls(*terms, total=total)

    @property
    def terms(self) -> tuple[float, float, float, float, float]:
        return (self.e_rel, self.e_collision, self.e_oob, self.e_nav, self.e_aff)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# --------------------------------------------------------------------------
# prior table


@dataclass(frozen=True)
class PriorTable:
    """Mean centre distances of category pairs seen in reference layouts.

    Keys are ``(category_a, category_b, kind)`` with the two categories in
    sorted order; ``kind`` is the linking constraint kind or ``"cooccur"``.
    """

    entries: dict = field(default_factory=dict)
    e_max: float = 5.0

    def __len__(self):
        return len(self.entries)

    def lookup(self, cat_a: str, cat_b: str, kind: str):
        a, b = sorted((cat_a.lower(), cat_b.lower()))
        hit = self.entries.get((a, b, kind))
        if hit is None:
            hit = self.entries.get((a, b, "cooccur"))
        return hit

    def deviation(self, cat_a: str, cat_b: str, kind: str, distance: float) -> float:
        """Normalised prior energy clip(|d - mean| / e_max, 0, 1); 0 for unseen pairs."""
        hit = self.lookup(cat_a, cat_b, kind)
        if hit is None:
            return 0.0
        mean, _count = hit
        return float(np.clip(abs(distance - mean) / self.e_max, 0.0, 1.0))

    def to_json(self) -> str:
        rows = [
            {"a": a, "b": b, "kind": k, "mean_distance": m, "count": n}
            for (a, b, k), (m, n) in sorted(self.entries.items())
        ]
        return json.dumps({"e_max": self.e_max, "entries": rows}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PriorTable":
        doc = json.loads(text)
        entries = {
            (r["a"], r["b"], r["kind"]): (float(r["mean_distance"]), int(r["count"]))
            for r in doc["entries"]
        }
        return cls(entries, float(doc["e_max"]))


EMPTY_PRIOR = PriorTable()


def build_prior_table(corpus, e_max: float = 5.0) -> PriorTable:
    """Collect pairwise distance statistics from ``(scene, layout)`` pairs.

    Pairs within ``PRIOR_RADIUS`` metres are recorded under ``"cooccur"``;
    constraint-linked pairs are additionally recorded under their kind
    regardless of distance.
    """
    sums: dict = defaultdict(lambda: [0.0, 0])
    for scene, layout in corpus:
        objs = scene.object_map
        pos = {p.object_id: p for p in layout.placements}
        ids = [oid for oid in layout.placed_ids if oid in objs]
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                d = _dist(pos[a], pos[b])
                if d <= PRIOR_RADIUS:
                    _accumulate(sums, objs[a].name, objs[b].name, "cooccur", d)
        for c in scene.constraints:
            if c.target is None or c.subject not in pos or c.target not in pos:
                continue
            d = _dist(pos[c.subject], pos[c.target])
            _accumulate(sums, objs[c.subject].name, objs[c.target].name, c.kind, d)
    entries = {k: (s / n, n) for k, (s, n) in sums.items()}
    return PriorTable(entries, e_max)


def _accumulate(sums, name_a, name_b, kind, d):
    a, b = sorted((name_a.lower(), name_b.lower()))
    acc = sums[(a, b, kind)]
    acc[0] += d
    acc[1] += 1


def _dist(p: Placement, q: Placement) -> float:
    return math.hypot(p.x - q.x, p.y - q.y)


# --------------------------------------------------------------------------
# geometric helpers


def front_vector(theta: float) -> tuple[float, float]:
    """Unit vector of the local +y face after rotation by theta."""
    return (-math.sin(theta), math.cos(theta))


def right_vector(theta: float) -> tuple[float, float]:
    return (math.cos(theta), math.sin(theta))


def wall_distance(poly: Polygon, room: RoomSpec) -> float:
    v = poly.array
    d = np.minimum.reduce([v[:, 0], room.width - v[:, 0], v[:, 1], room.depth - v[:, 1]])
    return max(0.0, float(d.min()))


def geometric_energy(c: ConstraintSpec, room: RoomSpec,
                     subj: ObjectSpec, sp: Placement,
                     tgt: Optional[ObjectSpec] = None,
                     tp: Optional[Placement] = None) -> float:
    """Per-kind violation penalty; each is >= 0 and 0 when satisfied."""
    kind = c.kind
    if kind == "edge":
        wd = wall_distance(footprint_polygon(subj, sp), room)
        return max(0.0, wd - EDGE_DISTANCE) ** 2
    if kind == "against_wall":
        wd = wall_distance(footprint_polygon(subj, sp), room)
        return max(0.0, wd - WALL_MARGIN) ** 2
    if kind == "center":
        hx, hy = room.width / 2.0, room.depth / 2.0
        return ((sp.x - hx) / hx) ** 2 + ((sp.y - hy) / hy) ** 2

    dx, dy = tp.x - sp.x, tp.y - sp.y
    d = math.hypot(dx, dy)
    if kind == "near":
        return max(0.0, d - float(c.param("d_max"))) ** 2
    if kind == "far_from":
        return max(0.0, float(c.param("d_min")) - d) ** 2
    if kind == "facing":
        if d < 1e-12:
            return 1.0
        fx, fy = front_vector(sp.theta)
        return 1.0 - (fx * dx + fy * dy) / d
    if kind == "in_front_of":
        # subject centre must lie beyond the target's front face
        fx, fy = front_vector(tp.theta)
        ahead = (-dx) * fx + (-dy) * fy - tgt.dims[1] / 2.0
        return max(0.0, -ahead) ** 2
    if kind == "side_of":
        rx, ry = right_vector(tp.theta)
        lateral = (-dx) * rx + (-dy) * ry
        sign = 1.0 if c.param("side") == "right" else -1.0
        return max(0.0, -sign * lateral) ** 2
    if kind == "aligned_with":
        delta = (sp.theta - tp.theta) % (math.pi / 2.0)
        return min(delta, math.pi / 2.0 - delta) ** 2
    raise ValueError(f"unknown constraint kind {kind!r}")


# --------------------------------------------------------------------------
# the five terms


def relational_energy(scene: SceneSpec, layout: Layout,
                      prior: PriorTable = EMPTY_PRIOR,
                      weights: EnergyWeights = DEFAULT_WEIGHTS) -> float:
    """log(1 + mean over evaluable constraints of E_geom * (1 + w_prior * prior)).

    Constraints whose participants are not all placed are skipped and do not
    count towards the mean.
    """
    objs = scene.object_map
    pos = {p.object_id: p for p in layout.placements}
    acc, n = 0.0, 0
    for c in scene.constraints:
        sp = pos.get(c.subject)
        if sp is None:
            continue
        if c.target is None:
            acc += geometric_energy(c, scene.room, objs[c.subject], sp)
            n += 1
            continue
        tp = pos.get(c.target)
        if tp is None:
            continue
        geo = geometric_energy(c, scene.room, objs[c.subject], sp, objs[c.target], tp)
        pri = prior.deviation(objs[c.subject].name, objs[c.target].name, c.kind,
                              _dist(sp, tp))
        acc += geo * (1.0 + weights.prior * pri)
        n += 1
    if n == 0:
        return 0.0
    return math.log1p(acc / n)


def collision_energy(footprints: Sequence[Polygon]) -> float:
    """log(1 + sum over pairs of squared overlap area)."""
    s = 0.0
    for i in range(len(footprints)):
        for j in range(i + 1, len(footprints)):
            a = intersection_area(footprints[i], footprints[j])
            s += a * a
    return math.log1p(s)


def containment(poly: Polygon, room: RoomSpec) -> float:
    """Fraction of the polygon's area inside the room."""
    return intersection_area(poly, room_polygon(room)) / (poly.area + EPS_OOB)


def oob_energy(footprints: Sequence[Polygon], room: RoomSpec) -> float:
    """log(1 + sum of squared outside-fractions)."""
    s = 0.0
    for poly in footprints:
        s += (1.0 - containment(poly, room)) ** 2
    return math.log1p(s)


def layout_footprints(scene: SceneSpec, layout: Layout) -> list[Polygon]:
    objs = scene.object_map
    return [footprint_polygon(objs[p.object_id], p) for p in layout.placements]


def nav_targets(scene: SceneSpec, layout: Layout) -> list[str]:
    """Placed anchor/inference objects, or every placed object when there are none."""
    objs = scene.object_map
    ids = [p.object_id for p in layout.placements
           if objs[p.object_id].role in ("anchor", "inference")]
    return ids or list(layout.placed_ids)


@dataclass(frozen=True, eq=False)
class NavScene:
    """Rasterized layout for navigation queries."""

    grid: OccupancyGrid        # dilated blockers, used for pathfinding
    raw: OccupancyGrid         # undilated occupancy mask
    start: tuple[int, int]
    object_cells: dict         # id -> dilated footprint mask

    def reach(self) -> np.ndarray:
        return navgrid.reachable_mask(self.grid, self.start)

    def ratio(self, ids) -> float:
        reach = self.reach()
        ids = list(ids)
        hit = sum(navgrid.target_reached(reach, self.object_cells[i]) for i in ids)
        return hit / len(ids)


def nav_scene(scene: SceneSpec, layout: Layout, resolution: float = 0.1,
              dilation: int = 1) -> NavScene:
    room = scene.room
    objs = scene.object_map
    cols, rows = grid_shape(room.width, room.depth, resolution)
    polys = {p.object_id: footprint_polygon(objs[p.object_id], p)
             for p in layout.placements}
    raw = rasterize(room, list(polys.values()), resolution)
    outside = rasterize(room, [], resolution).cells
    obj_cells = raw.cells & ~outside
    grid = OccupancyGrid(resolution, navgrid.dilate(obj_cells, dilation) | outside)
    cells = {}
    for oid, poly in polys.items():
        m = polygon_mask(poly, cols, rows, resolution)
        if not m.any():
            p = layout.placement(oid)
            c, r = raw.cell_of(p.x, p.y)
            m[r, c] = True
        cells[oid] = navgrid.dilate(m, dilation)
    start = raw.cell_of(*room.start)
    return NavScene(grid, raw, start, cells)


def navigation_energy(scene: SceneSpec, layout: Layout, resolution: float = 0.1,
                      dilation: int = 1) -> float:
    """(1 - reachable fraction of target objects)^2; 0 for an empty layout."""
    if not layout.placements:
        return 0.0
    ns = nav_scene(scene, layout, resolution, dilation)
    rho = ns.ratio(nav_targets(scene, layout))
    return (1.0 - rho) ** 2


def affordance_energy(scene: SceneSpec, layout: Layout,
                      weights: EnergyWeights = DEFAULT_WEIGHTS,
                      depth: float = CLEARANCE_DEPTH,
                      margin: float = CLEARANCE_MARGIN) -> float:
    """Penalise functional objects whose clearance leaves the room or is obstructed."""
    objs = scene.object_map
    room_poly = room_polygon(scene.room)
    polys = {p.object_id: footprint_polygon(objs[p.object_id], p)
             for p in layout.placements}
    total = 0.0
    for p in layout.placements:
        obj = objs[p.object_id]
        if not obj.functional:
            continue
        clr = clearance_region(obj, p, depth, margin)
        if intersection_area(clr, room_poly) < clr.area - 1e-9:
            total += weights.aff_outside
        blocked = sum(
            1 for oid, poly in polys.items()
            if oid != p.object_id and intersection_area(clr, poly) > AFF_OVERLAP_TOL
        )
        total += weights.aff_blocked * blocked
    return total


def total_energy(scene: SceneSpec, layout: Layout,
                 prior: PriorTable = EMPTY_PRIOR,
                 weights: EnergyWeights = DEFAULT_WEIGHTS,
                 resolution: float = 0.1) -> EnergyBreakdown:
    foot = layout_footprints(scene, layout)
    return EnergyBreakdown.compose(
        relational_energy(scene, layout, prior, weights),
        collision_energy(foot),
        oob_energy(foot, scene.room),
        navigation_energy(scene, layout, resolution),
        affordance_energy(scene, layout, weights),
        weights,
    )
