"""Sequential object-placement MDP.

Objects are placed one at a time, largest footprint first.  An action picks a
grid cell centre and one of four orientations; the action space is a fixed
``canvas_cols x canvas_rows x 4`` canvas so a single policy head serves rooms of
different sizes (cells beyond the room are masked out).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .energy import (
    DEFAULT_WEIGHTS,
    EMPTY_PRIOR,
    EnergyBreakdown,
    EnergyWeights,
    PriorTable,
    containment,
    total_energy,
)
from .geometry import footprint_polygon, grid_shape, intersection_area
from .scene import CONSTRAINT_KINDS, Layout, ObjectSpec, Placement, SceneSpec

ORIENTATIONS = (0.0, math.pi / 2.0, math.pi, 3.0 * math.pi / 2.0)
N_ORIENT = len(ORIENTATIONS)
NODE_GEOM_DIM = 6
LINK_DISTANCE = 2.0


class EnvError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    resolution: float = 0.25
    canvas_cols: int = 40
    canvas_rows: int = 40
    tau_reject: float = 0.05
    tau_contain: float = 0.98
    n_retry: int = 8
    nav_resolution: float = 0.1
    delta_reward: bool = False
    weights: EnergyWeights = DEFAULT_WEIGHTS

    @property
    def n_actions(self) -> int:
        return self.canvas_cols * self.canvas_rows * N_ORIENT


@dataclass(frozen=True)
class StepOutcome:
    reward_g: float
    breakdown: EnergyBreakdown
    placed: bool
    done: bool


@dataclass(frozen=True, eq=False)
class LocalGraph:
    X: np.ndarray               # M x (embed_dim + 6)
    A: np.ndarray               # M x M, symmetric, zero diagonal
    edges: tuple                # (i, j) with i < j
    edge_features: np.ndarray   # E x (3 + n_kinds)


def placement_order(scene: SceneSpec) -> list[ObjectSpec]:
    """Largest footprint first; ties broken by id."""
    return sorted(scene.objects, key=lambda o: (-o.footprint_area, o.id))


class PlacementEnv:
    """Single-owner mutable environment over one scene."""

    def __init__(self, scene: SceneSpec, config: EnvConfig = EnvConfig(),
                 prior: PriorTable = EMPTY_PRIOR, score_steps: bool = True):
        self.scene = scene
        self.config = config
        self.prior = prior
        self.score_steps = score_steps
        room = scene.room
        self.resolution = max(config.resolution,
                              room.width / config.canvas_cols,
                              room.depth / config.canvas_rows)
        self.cols, self.rows = grid_shape(room.width, room.depth, self.resolution)
        self.reset()

    # -- state ---------------------------------------------------------

    def reset(self) -> "PlacementEnv":
        self.order = placement_order(self.scene)
        self.cursor = 0
        self.placements: list[Placement] = []
        self.skipped: list[str] = []
        self.auto_skipped: list[str] = []
        self.retries = 0
        self.excluded: set[int] = set()
        self.steps = 0
        self.breakdown = EnergyBreakdown()
        self._mask_cache: Optional[np.ndarray] = None
        self._skip_unplaceable()
        return self

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.order)

    @property
    def pending(self) -> ObjectSpec:
        if self.done:
            raise EnvError("episode is done")
        return self.order[self.cursor]

    @property
    def layout(self) -> Layout:
        return Layout(tuple(self.placements), tuple(self.skipped))

    # -- actions -------------------------------------------------------

    def decode(self, action: int) -> Placement:
        k = action % N_ORIENT
        cell = action // N_ORIENT
        row, col = divmod(cell, self.config.canvas_cols)
        r = self.resolution
        return Placement(self.pending.id, (col + 0.5) * r, (row + 0.5) * r, ORIENTATIONS[k])

    def encode(self, col: int, row: int, k: int) -> int:
        return (row * self.config.canvas_cols + col) * N_ORIENT + k

    def base_mask(self, obj: ObjectSpec) -> np.ndarray:
        """Actions whose centre is inside the room and whose footprint is contained."""
        cfg = self.config
        room = self.scene.room
        r = self.resolution
        mask = np.zeros((cfg.canvas_rows, cfg.canvas_cols, N_ORIENT), dtype=bool)
        cx = (np.arange(self.cols) + 0.5) * r
        cy = (np.arange(self.rows) + 0.5) * r
        w, d = obj.dims[0], obj.dims[1]
        for k in range(N_ORIENT):
            hx, hy = (w / 2.0, d / 2.0) if k % 2 == 0 else (d / 2.0, w / 2.0)
            ox = np.clip(np.minimum(cx + hx, room.width) - np.maximum(cx - hx, 0.0), 0.0, None)
            oy = np.clip(np.minimum(cy + hy, room.depth) - np.maximum(cy - hy, 0.0), 0.0, None)
            frac = np.outer(oy, ox) / (w * d)
            inside = np.outer(cy < room.depth, cx < room.width)
            mask[:self.rows, :self.cols, k] = inside & (frac >= cfg.tau_contain)
        return mask.reshape(-1)

    def action_mask(self) -> np.ndarray:
        if self.done:
            raise EnvError("episode is done")
        if self._mask_cache is None:
            self._mask_cache = self.base_mask(self.pending)
        mask = self._mask_cache.copy()
        if self.excluded:
            mask[list(self.excluded)] = False
        return mask

    def _skip_unplaceable(self):
        while not self.done:
            self._mask_cache = None
            if self.action_mask().any():
                return
            oid = self.pending.id
            self.skipped.append(oid)
            self.auto_skipped.append(oid)
            self._advance()

    def _advance(self):
        self.cursor += 1
        self.retries = 0
        self.excluded = set()
        self._mask_cache = None

    def check_placement(self, obj: ObjectSpec, place: Placement) -> bool:
        """Hard acceptance rules shared with every baseline solver."""
        poly = footprint_polygon(obj, place)
        if containment(poly, self.scene.room) < self.config.tau_contain:
            return False
        objs = self.scene.object_map
        for p in self.placements:
            if intersection_area(poly, footprint_polygon(objs[p.object_id], p)) > self.config.tau_reject:
                return False
        return True

    def step(self, action: int) -> StepOutcome:
        if self.done:
            raise EnvError("cannot step a finished episode")
        action = int(action)
        if not (0 <= action < self.config.n_actions) or not self.action_mask()[action]:
            raise EnvError(f"action {action} is masked")
        obj = self.pending
        place = self.decode(action)
        self.steps += 1
        before = self.breakdown
        if self.check_placement(obj, place):
            self.placements.append(place)
            self._advance()
            placed = True
            if self.score_steps:
                self.breakdown = total_energy(self.scene, self.layout, self.prior,
                                              self.config.weights, self.config.nav_resolution)
        else:
            placed = False
            self.retries += 1
            self.excluded.add(action)
            if self.retries >= self.config.n_retry:
                self.skipped.append(obj.id)
                self._advance()
        self._skip_unplaceable()
        if self.config.delta_reward:
            reward = -(self.breakdown.total - before.total)
        else:
            reward = -self.breakdown.total
        return StepOutcome(reward, self.breakdown, placed, self.done)

    # -- observations ----------------------------------------------------

    def encode_global_state(self) -> np.ndarray:
        """[global-constraint share, w/W, d/D, area/room area, remaining/total]."""
        obj = self.pending
        room = self.scene.room
        involved = [c for c in self.scene.constraints
                    if c.subject == obj.id or c.target == obj.id]
        n_global = sum(1 for c in involved if c.is_global and c.subject == obj.id)
        frac = n_global / len(involved) if involved else 0.0
        total = len(self.order)
        remaining = total - self.cursor
        s = np.array([
            frac,
            obj.dims[0] / room.width,
            obj.dims[1] / room.depth,
            obj.footprint_area / room.area,
            remaining / total,
        ])
        return np.clip(s, 0.0, 1.0)

    def encode_local_graph(self, embedder) -> LocalGraph:
        """Placed objects plus the pending one as a relational graph."""
        room = self.scene.room
        objs = self.scene.object_map
        nodes = [(objs[p.object_id], p) for p in self.placements] + [(self.pending, None)]
        m = len(nodes)
        feats = []
        for obj, p in nodes:
            geom = np.zeros(NODE_GEOM_DIM)
            geom[0] = obj.dims[0] / room.width
            geom[1] = obj.dims[1] / room.depth
            if p is not None:
                geom[2:] = (p.x / room.width, p.y / room.depth,
                            math.sin(p.theta), math.cos(p.theta))
            feats.append(np.concatenate([embedder.embed(obj.name), geom]))
        X = np.stack(feats)

        links: dict[tuple[int, int], set] = {}
        index = {obj.id: i for i, (obj, _) in enumerate(nodes)}
        for c in self.scene.constraints:
            if c.target is None or c.subject not in index or c.target not in index:
                continue
            i, j = sorted((index[c.subject], index[c.target]))
            links.setdefault((i, j), set()).add(c.kind)

        A = np.zeros((m, m))
        edges, efeats = [], []
        for i in range(m):
            for j in range(i + 1, m):
                pi, pj = nodes[i][1], nodes[j][1]
                linked = (i, j) in links
                dist = angle = 0.0
                if pi is not None and pj is not None:
                    dist = math.hypot(pi.x - pj.x, pi.y - pj.y)
                    angle = math.remainder(pi.theta - pj.theta, 2 * math.pi)
                    near = dist < LINK_DISTANCE
                else:
                    near = False
                if not (near or linked):
                    continue
                A[i, j] = A[j, i] = 1.0
                onehot = np.array([k in links.get((i, j), ()) for k in CONSTRAINT_KINDS], float)
                align = 0.5 * (1.0 + math.cos(4.0 * angle))
                edges.append((i, j))
                efeats.append(np.concatenate([[dist, angle, align], onehot]))
        ef = np.array(efeats) if efeats else np.zeros((0, 3 + len(CONSTRAINT_KINDS)))
        return LocalGraph(X, A, tuple(edges), ef)
