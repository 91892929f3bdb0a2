"""Sampling a standing position for the VR user next to the anchor object."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Polygon, footprint_polygon
from .scene import Layout, SceneSpec

FAILURE_REASONS = ("no_interaction", "wall_collision", "object_collision", "out_of_room")


class ViewpointError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    standoff: float = 1.0
    trials: int = 64
    interaction_reach: float = 1.2
    body_radius: float = 0.3
    eye_height: float = 1.6
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.standoff > self.interaction_reach:
            raise ValueError("standoff must not exceed interaction_reach")
        if self.standoff <= 0 or self.body_radius < 0:
            raise ValueError("standoff must be positive and body_radius non-negative")


@dataclass(frozen=True)
class ViewpointCandidate:
    x: float
    y: float
    z: float
    direction: tuple[float, float]
    angle: float
    dist_to_center: float
    failure_reasons: frozenset = field(default=frozenset())

    @property
    def valid(self) -> bool:
        return not self.failure_reasons

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z, "dir": list(self.direction),
                "dist_to_center": self.dist_to_center}


# -- small planar helpers ----------------------------------------------------


def point_segment_distance(p, a, b) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def point_polygon_distance(p, poly: Polygon) -> float:
    """0 inside the polygon, else distance to its boundary."""
    if poly.contains(np.array([p]))[0]:
        return 0.0
    v = poly.vertices
    return min(point_segment_distance(p, v[i], v[(i + 1) % len(v)]) for i in range(len(v)))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(p1, p2, q1, q2) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and \
            ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True

    def on(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    return ((d1 == 0 and on(q1, q2, p1)) or (d2 == 0 and on(q1, q2, p2))
            or (d3 == 0 and on(p1, p2, q1)) or (d4 == 0 and on(p1, p2, q2)))


def segment_hits_polygon(a, b, poly: Polygon) -> bool:
    if poly.contains(np.array([a, b])).any():
        return True
    v = poly.vertices
    return any(segments_intersect(a, b, v[i], v[(i + 1) % len(v)]) for i in range(len(v)))


# -- sampler --------------------------------------------------------------------


def _footprints(scene: SceneSpec, layout: Layout) -> dict:
    objs = scene.object_map
    return {p.object_id: footprint_polygon(objs[p.object_id], p) for p in layout.placements}


def validate_candidate(point, anchor_id: str, scene: SceneSpec, layout: Layout,
                       config: SamplerConfig = SamplerConfig(),
                       footprints: Optional[dict] = None) -> tuple[bool, frozenset]:
    """Check reach/line of sight to the anchor and body clearance; collect every failure."""
    polys = footprints if footprints is not None else _footprints(scene, layout)
    if anchor_id not in polys:
        raise ViewpointError(f"anchor {anchor_id!r} is not placed")
    anchor = polys[anchor_id]
    center = tuple(anchor.array.mean(axis=0))
    x, y = point
    r = config.body_radius
    W, D = scene.room.width, scene.room.depth
    reasons = set()

    if point_polygon_distance(point, anchor) > config.interaction_reach or any(
            segment_hits_polygon(point, center, q) for oid, q in polys.items() if oid != anchor_id):
        reasons.add("no_interaction")
    if not (0.0 <= x <= W and 0.0 <= y <= D):
        reasons.add("out_of_room")
    elif x - r < 0.0 or x + r > W or y - r < 0.0 or y + r > D:
        reasons.add("wall_collision")
    if any(point_polygon_distance(point, q) < r or q.contains(np.array([point]))[0]
           for q in polys.values()):
        reasons.add("object_collision")
    return not reasons, frozenset(reasons)


def sample_viewpoints(scene: SceneSpec, layout: Layout, anchor_id: str,
                      config: SamplerConfig = SamplerConfig(),
                      keep_invalid: bool = False) -> list[ViewpointCandidate]:
    """Candidates on a circle of radius ``standoff`` around the anchor centre.

    Valid candidates come back sorted by distance to the room centre, then by
    sampling angle.  With ``keep_invalid`` the rejected ones follow in
    sampling order.
    """
    polys = _footprints(scene, layout)
    if anchor_id not in polys:
        raise ViewpointError(f"anchor {anchor_id!r} is not placed")
    cx, cy = polys[anchor_id].array.mean(axis=0)
    rng = np.random.default_rng(config.seed)
    angles = rng.uniform(0.0, 2.0 * math.pi, size=config.trials)
    room_c = (scene.room.width / 2.0, scene.room.depth / 2.0)
    good, bad = [], []
    for a in angles:
        ux, uy = math.cos(a), math.sin(a)
        px, py = float(cx + config.standoff * ux), float(cy + config.standoff * uy)
        ok, reasons = validate_candidate((px, py), anchor_id, scene, layout, config, polys)
        cand = ViewpointCandidate(px, py, config.eye_height, (-ux, -uy), float(a),
                                  math.hypot(px - room_c[0], py - room_c[1]), reasons)
        (good if ok else bad).append(cand)
    good.sort(key=lambda c: (c.dist_to_center, c.angle))
    return good + bad if keep_invalid else good
