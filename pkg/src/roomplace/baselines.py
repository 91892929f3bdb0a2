"""Non-learned placement solvers: backtracking DFS, simulated annealing, random."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .energy import EMPTY_PRIOR, PriorTable, geometric_energy, total_energy
from .env import N_ORIENT, ORIENTATIONS, EnvConfig, PlacementEnv, placement_order
from .geometry import footprint_polygon, intersection_area
from .energy import containment
from .scene import Layout, ObjectSpec, Placement, SceneSpec
from .validation import check_scenes

FULL_CONTAINMENT = 1.0 - 1e-6
TOUCH_AREA = 1e-9


@dataclass(frozen=True)
class SolverBudget:
    max_attempts_per_object: int = 64
    backtrack_depth: int = 3
    backtrack_nodes: int = 2000
    iters: int = 2000
    t0: float = 1.0
    cooling: float = 0.998
    step_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("max_attempts_per_object", "iters", "backtrack_nodes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.backtrack_depth < 0:
            raise ValueError("backtrack_depth must be >= 0")
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling must lie in (0, 1)")


def _candidates(env: PlacementEnv, obj: ObjectSpec) -> list[Placement]:
    idx = np.flatnonzero(env.base_mask(obj))
    out = []
    r = env.resolution
    for a in idx:
        k = a % N_ORIENT
        row, col = divmod(a // N_ORIENT, env.config.canvas_cols)
        out.append(Placement(obj.id, float((col + 0.5) * r), float((row + 0.5) * r),
                             float(ORIENTATIONS[k])))
    return out


def object_energy(scene: SceneSpec, obj: ObjectSpec, place: Placement,
                  placed: dict) -> float:
    """Summed geometric energy of the constraints ``obj`` can already be judged on."""
    objs = scene.object_map
    e = 0.0
    for c in scene.constraints:
        if c.target is None:
            if c.subject == obj.id:
                e += geometric_energy(c, scene.room, obj, place)
            continue
        if c.subject == obj.id and c.target in placed:
            e += geometric_energy(c, scene.room, obj, place, objs[c.target], placed[c.target])
        elif c.target == obj.id and c.subject in placed:
            e += geometric_energy(c, scene.room, objs[c.subject], placed[c.subject], obj, place)
    return e


class _DFS:
    def __init__(self, scene: SceneSpec, budget: SolverBudget, env_config: EnvConfig):
        self.scene = scene
        self.budget = budget
        self.env = PlacementEnv(scene, env_config, score_steps=False)
        self.objs = scene.object_map
        self.placed: dict[str, Placement] = {}
        self.polys: dict = {}
        self._cands = {o.id: _candidates(self.env, o) for o in scene.objects}

    def feasible(self, obj, place) -> bool:
        poly = footprint_polygon(obj, place)
        if containment(poly, self.scene.room) < FULL_CONTAINMENT:
            return False
        return all(intersection_area(poly, q) <= TOUCH_AREA for q in self.polys.values())

    def ranked(self, obj) -> list[Placement]:
        cands = self._cands[obj.id]
        energies = [object_energy(self.scene, obj, p, self.placed) for p in cands]
        order = sorted(range(len(cands)), key=lambda i: (energies[i], i))
        out = []
        for i in order:
            if self.feasible(obj, cands[i]):
                out.append(cands[i])
                if len(out) >= self.budget.max_attempts_per_object:
                    break
        return out

    def put(self, obj, place):
        self.placed[obj.id] = place
        self.polys[obj.id] = footprint_polygon(obj, place)

    def drop(self, obj):
        del self.placed[obj.id]
        del self.polys[obj.id]

    def joint(self, objs: list, nodes: list) -> bool:
        if not objs:
            return True
        head = objs[0]
        for cand in self.ranked(head):
            nodes[0] += 1
            if nodes[0] > self.budget.backtrack_nodes:
                return False
            self.put(head, cand)
            if self.joint(objs[1:], nodes):
                return True
            self.drop(head)
        return False

    def solve(self) -> Layout:
        order = placement_order(self.scene)
        done: list[ObjectSpec] = []
        skipped: list[str] = []
        for obj in order:
            ranked = self.ranked(obj)
            if ranked:
                self.put(obj, ranked[0])
                done.append(obj)
                continue
            if not self._backtrack(obj, done):
                skipped.append(obj.id)
        placements = tuple(self.placed[o.id] for o in order if o.id in self.placed)
        return Layout(placements, tuple(skipped))

    def _backtrack(self, obj, done) -> bool:
        for k in range(1, min(self.budget.backtrack_depth, len(done)) + 1):
            tail = done[-k:]
            saved = {o.id: self.placed[o.id] for o in tail}
            for o in tail:
                self.drop(o)
            if self.joint(tail + [obj], [0]):
                done.append(obj)
                return True
            for o in tail:
                if o.id in self.placed:
                    self.drop(o)
                self.put(o, saved[o.id])
        return False


def dfs_solve(scene: SceneSpec, budget: SolverBudget = SolverBudget(),
              env_config: Optional[EnvConfig] = None) -> Layout:
    """Largest-first depth-first placement with bounded backtracking."""
    t0 = time.perf_counter()
    layout = _DFS(scene, budget, env_config or EnvConfig()).solve()
    n = max(len(scene.objects), 1)
    return Layout(layout.placements, layout.skipped, (time.perf_counter() - t0) / n)


def _hard_ok(scene, obj, place, polys, tau_contain, tau_reject) -> bool:
    poly = footprint_polygon(obj, place)
    if containment(poly, scene.room) < tau_contain:
        return False
    return all(intersection_area(poly, q) <= tau_reject
               for oid, q in polys.items() if oid != obj.id)


def anneal_solve(scene: SceneSpec, budget: SolverBudget = SolverBudget(),
                 initial: Optional[Layout] = None, prior: PriorTable = EMPTY_PRIOR,
                 env_config: Optional[EnvConfig] = None) -> Layout:
    """Metropolis search over single-object moves, returning the best layout seen.

    Starts from ``initial`` when given, else from the DFS layout, else from a
    random layout.  Skipped objects may be inserted by a move.
    """
    cfg = env_config or EnvConfig()
    t_start = time.perf_counter()
    if initial is None:
        initial = dfs_solve(scene, budget, cfg)
        if not initial.placements and scene.objects:
            initial = random_solve(scene, budget.seed, cfg)
    rng = np.random.default_rng(budget.seed)
    objs = scene.object_map
    room = scene.room
    current = {p.object_id: p for p in initial.placements}
    polys = {oid: footprint_polygon(objs[oid], p) for oid, p in current.items()}
    order = [o.id for o in scene.objects]

    def layout_of(state) -> Layout:
        pl = tuple(state[oid] for oid in order if oid in state)
        return Layout(pl, tuple(oid for oid in order if oid not in state))

    def energy(state) -> float:
        return total_energy(scene, layout_of(state), prior, cfg.weights, cfg.nav_resolution).total

    e_cur = energy(current)
    best, e_best = dict(current), e_cur
    temp = budget.t0
    for _ in range(budget.iters):
        temp *= budget.cooling
        oid = order[int(rng.integers(len(order)))]
        obj = objs[oid]
        old = current.get(oid)
        move = rng.random()
        if old is None or move < 0.1:
            x = rng.uniform(0.0, room.width)
            y = rng.uniform(0.0, room.depth)
            theta = ORIENTATIONS[int(rng.integers(N_ORIENT))]
        elif move < 0.4:
            x, y = old.x, old.y
            theta = old.theta + ORIENTATIONS[int(rng.integers(1, N_ORIENT))]
        else:
            step = rng.normal(0.0, budget.step_sigma, size=2)
            x, y, theta = old.x + step[0], old.y + step[1], old.theta
        cand = Placement(oid, float(x), float(y), float(theta))
        if not _hard_ok(scene, obj, cand, polys, cfg.tau_contain, cfg.tau_reject):
            continue
        current[oid] = cand
        e_new = energy(current)
        if e_new <= e_cur or rng.random() < math.exp(-(e_new - e_cur) / temp):
            e_cur = e_new
            polys[oid] = footprint_polygon(obj, cand)
            if e_cur < e_best:
                best, e_best = dict(current), e_cur
        elif old is None:
            del current[oid]
        else:
            current[oid] = old
    out = layout_of(best)
    n = max(len(scene.objects), 1)
    return Layout(out.placements, out.skipped, (time.perf_counter() - t_start) / n)


def random_solve(scene: SceneSpec, seed: int = 0,
                 env_config: Optional[EnvConfig] = None) -> Layout:
    """Uniform masked actions through the placement environment."""
    rng = np.random.default_rng(seed)
    env = PlacementEnv(scene, env_config or EnvConfig(), score_steps=False)
    t0 = time.perf_counter()
    while not env.done:
        valid = np.flatnonzero(env.action_mask())
        env.step(int(valid[rng.integers(len(valid))]))
    n = max(len(scene.objects), 1)
    return Layout(tuple(env.placements), tuple(env.skipped), (time.perf_counter() - t0) / n)


class _SolverEstimator(BaseEstimator):
    """Stateless solvers exposed with the estimator interface."""

    def fit(self, scenes=None, y=None):
        if scenes is not None:
            self.n_scenes_ = len(check_scenes(scenes))
        return self

    def _env_config(self) -> EnvConfig:
        return EnvConfig(resolution=self.resolution, canvas_cols=self.max_cells,
                         canvas_rows=self.max_cells)

    def predict(self, scenes) -> list[Layout]:
        return [self.solve(s) for s in check_scenes(scenes)]

    def score(self, scenes, y=None) -> float:
        """Negated mean total energy (higher is better)."""
        energies = [total_energy(s, self.solve(s)).total for s in check_scenes(scenes)]
        return -float(np.mean(energies))


class DFSPlacer(_SolverEstimator):
    def __init__(self, max_attempts_per_object=64, backtrack_depth=3,
                 resolution=0.25, max_cells=40):
        self.max_attempts_per_object = max_attempts_per_object
        self.backtrack_depth = backtrack_depth
        self.resolution = resolution
        self.max_cells = max_cells

    def solve(self, scene: SceneSpec) -> Layout:
        budget = SolverBudget(max_attempts_per_object=self.max_attempts_per_object,
                              backtrack_depth=self.backtrack_depth)
        return dfs_solve(scene, budget, self._env_config())


class AnnealingPlacer(_SolverEstimator):
    def __init__(self, iters=2000, t0=1.0, cooling=0.998, step_sigma=0.5,
                 resolution=0.25, max_cells=40, random_state=0):
        self.iters = iters
        self.t0 = t0
        self.cooling = cooling
        self.step_sigma = step_sigma
        self.resolution = resolution
        self.max_cells = max_cells
        self.random_state = random_state

    def solve(self, scene: SceneSpec, initial: Optional[Layout] = None) -> Layout:
        budget = SolverBudget(iters=self.iters, t0=self.t0, cooling=self.cooling,
                              step_sigma=self.step_sigma, seed=self.random_state)
        return anneal_solve(scene, budget, initial, env_config=self._env_config())


class RandomPlacer(_SolverEstimator):
    def __init__(self, resolution=0.25, max_cells=40, random_state=0):
        self.resolution = resolution
        self.max_cells = max_cells
        self.random_state = random_state

    def solve(self, scene: SceneSpec) -> Layout:
        return random_solve(scene, self.random_state, self._env_config())
