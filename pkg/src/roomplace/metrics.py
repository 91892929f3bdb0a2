"""Layout fidelity/plausibility metrics and scene-graph comparison."""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import logging
import multiprocessing as mp
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import navgrid
from .energy import DEFAULT_WEIGHTS, EnergyWeights, containment, nav_scene, total_energy
from .geometry import footprint_polygon
from .scene import Layout, SceneError, SceneGraph, SceneSpec, load_graph, load_scene

log = logging.getLogger(__name__)

KEY_ROLES = ("anchor", "inference")
OOB_TOL = 1e-6
EXACT_GED_MAX_NODES = 12


class GraphCapacityError(ValueError):
    pass


@dataclass(frozen=True)
class LayoutReport:
    cnt_pct: float
    sr: bool
    nav_pct: float
    key_nav_pct: float
    oob_pct: float
    pto_seconds: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GraphEvalReport:
    ged: int
    irecall: float
    f1: float


# --------------------------------------------------------------------------
# layouts


def fidelity(scene: SceneSpec, layout: Layout) -> tuple[float, bool]:
    """Placed-object percentage and whether every anchor/inference object landed."""
    if not scene.objects:
        return 100.0, True
    placed = set(layout.placed_ids)
    cnt = 100.0 * sum(o.id in placed for o in scene.objects) / len(scene.objects)
    wanted = Counter(o.role for o in scene.objects if o.role in KEY_ROLES)
    got = Counter(o.role for o in scene.objects if o.role in KEY_ROLES and o.id in placed)
    return cnt, wanted == got


def plausibility(scene: SceneSpec, layout: Layout,
                 resolution: float = 0.1) -> tuple[float, float, float]:
    """(NAV, Key_NAV, OOB) percentages."""
    if not layout.placements:
        return 100.0, 100.0, 0.0
    ns = nav_scene(scene, layout, resolution)
    nav = 100.0 * navgrid.largest_free_component_ratio(ns.raw)
    objs = scene.object_map
    keys = [p.object_id for p in layout.placements if objs[p.object_id].role in KEY_ROLES]
    key_nav = 100.0 * ns.ratio(keys) if keys else 100.0
    outside = sum(
        containment(footprint_polygon(objs[p.object_id], p), scene.room) < 1.0 - OOB_TOL
        for p in layout.placements)
    oob = 100.0 * outside / len(layout.placements)
    return nav, key_nav, oob


def layout_report(scene: SceneSpec, layout: Layout, resolution: float = 0.1) -> LayoutReport:
    cnt, sr = fidelity(scene, layout)
    nav, key_nav, oob = plausibility(scene, layout, resolution)
    return LayoutReport(cnt, sr, nav, key_nav, oob, layout.pto_seconds)


# --------------------------------------------------------------------------
# graph edit distance


def _edge_labels(g: SceneGraph) -> dict:
    out: dict[tuple[int, int], Counter] = {}
    for e in g.edges:
        out.setdefault((e.subject, e.object), Counter())[e.relation] += 1
    return out


def _label_cost(a: Optional[Counter], b: Optional[Counter]) -> int:
    a = a or Counter()
    b = b or Counter()
    common = sum((a & b).values())
    return max(sum(a.values()), sum(b.values())) - common


class _GEDProblem:
    def __init__(self, g1: SceneGraph, g2: SceneGraph):
        self.n1, self.n2 = len(g1.nodes), len(g2.nodes)
        self.names1 = [n.name.lower() for n in g1.nodes]
        self.names2 = [n.name.lower() for n in g2.nodes]
        self.e1, self.e2 = _edge_labels(g1), _edge_labels(g2)

    def step_cost(self, mapping: tuple, j: Optional[int]) -> int:
        """Cost of mapping g1 node ``len(mapping)`` to ``j`` (None = delete)."""
        i = len(mapping)
        cost = 1 if j is None else int(self.names1[i] != self.names2[j])
        pairs = [(i, i, j, j)]
        for k, mk in enumerate(mapping):
            pairs.append((i, k, j, mk))
            pairs.append((k, i, mk, j))
        for a, b, x, y in pairs:
            la = self.e1.get((a, b))
            lb = self.e2.get((x, y)) if x is not None and y is not None else None
            cost += _label_cost(la, lb)
        return cost

    def completion_cost(self, mapping: tuple) -> int:
        """Insert every unused g2 node plus the g2 edges not yet covered."""
        used = {j for j in mapping if j is not None}
        free = [j for j in range(self.n2) if j not in used]
        cost = len(free)
        for (x, y), lab in self.e2.items():
            if x not in used or y not in used:
                cost += sum(lab.values())
        return cost

    def heuristic(self, mapping: tuple) -> int:
        used = {j for j in mapping if j is not None}
        rest1 = Counter(self.names1[len(mapping):])
        rest2 = Counter(self.names2[j] for j in range(self.n2) if j not in used)
        n1, n2 = sum(rest1.values()), sum(rest2.values())
        return max(n1, n2) - sum((rest1 & rest2).values())


def graph_edit_distance(g1: SceneGraph, g2: SceneGraph,
                        max_nodes: int = EXACT_GED_MAX_NODES) -> int:
    """Exact unit-cost edit distance by best-first search over node mappings."""
    if max(len(g1.nodes), len(g2.nodes)) > max_nodes:
        raise GraphCapacityError(
            f"exact GED limited to {max_nodes} nodes; use approximate_graph_edit_distance")
    prob = _GEDProblem(g1, g2)
    counter = itertools.count()
    heap = [(prob.heuristic(()), 0, next(counter), ())]
    while heap:
        f, g, _, mapping = heapq.heappop(heap)
        if len(mapping) == prob.n1:
            if f == g:
                return g
            total = g + prob.completion_cost(mapping)
            heapq.heappush(heap, (total, total, next(counter), mapping))
            continue
        used = {j for j in mapping if j is not None}
        for j in [*range(prob.n2), None]:
            if j is not None and j in used:
                continue
            g2 = g + prob.step_cost(mapping, j)
            child = mapping + (j,)
            if len(child) == prob.n1:
                h = prob.completion_cost(child)
            else:
                h = prob.heuristic(child)
            heapq.heappush(heap, (g2 + h, g2, next(counter), child))
    return 0


def approximate_graph_edit_distance(g1: SceneGraph, g2: SceneGraph) -> int:
    """Greedy upper bound on the edit distance; any graph size."""
    prob = _GEDProblem(g1, g2)
    mapping: tuple = ()
    cost = 0
    for _ in range(prob.n1):
        used = {j for j in mapping if j is not None}
        options = [j for j in range(prob.n2) if j not in used] + [None]
        best = min(options, key=lambda j: (prob.step_cost(mapping, j), j is None, j))
        cost += prob.step_cost(mapping, best)
        mapping = mapping + (best,)
    return cost + prob.completion_cost(mapping)


# --------------------------------------------------------------------------
# instruction recall and object F1


def _fold(triplet) -> tuple:
    s, r, o = triplet
    return s.lower(), r.lower(), o.lower()


def instruction_recall(pred: SceneGraph, required: Sequence) -> float:
    if not required:
        raise ValueError("required triplets must be non-empty")
    have = {_fold(t) for t in pred.triplets()}
    return sum(_fold(t) in have for t in required) / len(required)


def object_f1(pred: Iterable[str], gt: Iterable[str]) -> float:
    p = Counter(s.lower() for s in pred)
    g = Counter(s.lower() for s in gt)
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    hit = sum((p & g).values())
    if hit == 0:
        return 0.0
    precision = hit / sum(p.values())
    recall = hit / sum(g.values())
    return 2 * precision * recall / (precision + recall)


def graph_report(pred: SceneGraph, gt: SceneGraph) -> GraphEvalReport:
    if len(pred.nodes) <= EXACT_GED_MAX_NODES and len(gt.nodes) <= EXACT_GED_MAX_NODES:
        ged = graph_edit_distance(pred, gt)
    else:
        ged = approximate_graph_edit_distance(pred, gt)
    required = gt.triplets()
    irecall = instruction_recall(pred, required) if required else 1.0
    f1 = object_f1([n.name for n in pred.nodes], [n.name for n in gt.nodes])
    return GraphEvalReport(ged, irecall, f1)


# --------------------------------------------------------------------------
# corpus aggregation

LAYOUT_METRICS = ("cnt_pct", "sr", "nav_pct", "key_nav_pct", "oob_pct", "pto_seconds", "e_total")
CSV_COLUMNS = ("method", "metric", "mean", "std", "n_runs")


@dataclass(frozen=True)
class MetricRow:
    method: str
    metric: str
    mean: float
    std: float
    n_runs: int


def load_corpus(directory) -> tuple[list[tuple[str, SceneSpec]], list[tuple[str, str]]]:
    """Scene files in name order plus a list of (file, error) for unreadable ones."""
    scenes, errors = [], []
    for path in sorted(Path(directory).glob("*.json")):
        if path.name.endswith(".graph.json"):
            continue
        try:
            scenes.append((path.name, load_scene(path.read_text(encoding="utf-8"))))
        except (OSError, SceneError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            errors.append((path.name, str(exc)))
    return scenes, errors


def ground_truth_graph(scene_path) -> Optional[SceneGraph]:
    p = Path(scene_path)
    gpath = p.with_name(p.name[:-len(".json")] + ".graph.json")
    if not gpath.exists():
        return None
    return load_graph(gpath.read_text(encoding="utf-8"))


_JOB = None


def _run_job(index: int) -> dict:
    scene, solve, seed, resolution, weights = _JOB[index]
    layout = solve(scene, seed)
    values = layout_report(scene, layout, resolution).as_dict()
    values["sr"] = 100.0 * float(values["sr"])
    values["e_total"] = total_energy(scene, layout, weights=weights, resolution=resolution).total
    return values


def evaluate_corpus(scenes: Sequence[SceneSpec],
                    solvers: dict[str, Callable[[SceneSpec, int], Layout]],
                    runs: int = 5, seed: int = 0, resolution: float = 0.1,
                    energy_weights: EnergyWeights = DEFAULT_WEIGHTS,
                    jobs: int = 1) -> list[MetricRow]:
    """Run each solver ``runs`` times per scene and aggregate per-run corpus means.

    ``solvers`` maps a method name to ``solve(scene, seed) -> Layout``.  With
    ``jobs > 1`` scenes are solved in forked worker processes; results do not
    depend on the worker count.
    """
    global _JOB
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    rows = []
    for method, solve in solvers.items():
        per_run = {m: [] for m in LAYOUT_METRICS}
        for r in range(runs):
            _JOB = [(s, solve, seed + r, resolution, energy_weights) for s in scenes]
            try:
                if jobs > 1 and len(scenes) > 1:
                    with mp.get_context("fork").Pool(min(jobs, len(scenes))) as pool:
                        reports = pool.map(_run_job, range(len(scenes)))
                else:
                    reports = [_run_job(i) for i in range(len(scenes))]
            finally:
                _JOB = None
            for m in LAYOUT_METRICS:
                vals = [float(rep[m]) for rep in reports]
                per_run[m].append(float(np.mean(vals)) if vals else 0.0)
        for m in LAYOUT_METRICS:
            v = np.asarray(per_run[m])
            rows.append(MetricRow(method, m, float(v.mean()), float(v.std()), runs))
    return rows


def rows_to_csv(rows: Sequence[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.method, r.metric, repr(r.mean), repr(r.std), r.n_runs])
    return buf.getvalue()


def rows_to_table(rows: Sequence[MetricRow]) -> str:
    methods = list(dict.fromkeys(r.method for r in rows))
    metrics = list(dict.fromkeys(r.metric for r in rows))
    cell = {(r.method, r.metric): f"{r.mean:.2f} ± {r.std:.2f}" for r in rows}
    widths = [max(len("method"), *(len(m) for m in methods))]
    widths += [max(len(m), *(len(cell.get((me, m), "")) for me in methods)) for m in metrics]
    lines = ["  ".join(h.ljust(w) for h, w in zip(["method", *metrics], widths))]
    for me in methods:
        vals = [me] + [cell.get((me, m), "") for m in metrics]
        lines.append("  ".join(v.ljust(w) for v, w in zip(vals, widths)))
    return "\n".join(lines)
