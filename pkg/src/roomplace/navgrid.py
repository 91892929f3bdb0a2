"""Grid pathfinding and free-space connectivity on occupancy grids.

Cells are addressed as ``(col, row)``; movement is 4-connected.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

from .geometry import OccupancyGrid

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)
_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class NavError(ValueError):
    pass


@dataclass(frozen=True)
class GridPath:
    cells: tuple[tuple[int, int], ...]

    @property
    def cost(self) -> int:
        return len(self.cells) - 1


def _check_cell(grid: OccupancyGrid, cell, what: str):
    c, r = cell
    if not (0 <= c < grid.cols and 0 <= r < grid.rows):
        raise NavError(f"{what} {cell} outside {grid.cols}x{grid.rows} grid")


def astar_path(grid: OccupancyGrid, start, goal) -> Optional[GridPath]:
    """Shortest 4-connected path from ``start`` to ``goal``, or None.

    Manhattan heuristic; the open set is keyed on (f, col, row) so equal-f
    ties resolve lexicographically and results are deterministic.
    """
    _check_cell(grid, start, "start")
    _check_cell(grid, goal, "goal")
    start, goal = tuple(start), tuple(goal)
    blocked = grid.cells
    if blocked[start[1], start[0]] or blocked[goal[1], goal[0]]:
        return None
    gx, gy = goal

    def h(c, r):
        return abs(c - gx) + abs(r - gy)

    g_cost = {start: 0}
    parent = {start: None}
    heap = [(h(*start), start[0], start[1])]
    closed = set()
    while heap:
        _, c, r = heapq.heappop(heap)
        cur = (c, r)
        if cur in closed:
            continue
        if cur == goal:
            cells = []
            while cur is not None:
                cells.append(cur)
                cur = parent[cur]
            return GridPath(tuple(reversed(cells)))
        closed.add(cur)
        g = g_cost[cur]
        for dc, dr in _STEPS:
            nc, nr = c + dc, r + dr
            if not (0 <= nc < grid.cols and 0 <= nr < grid.rows) or blocked[nr, nc]:
                continue
            nxt = (nc, nr)
            if nxt in closed:
                continue
            if g + 1 < g_cost.get(nxt, 1 << 60):
                g_cost[nxt] = g + 1
                parent[nxt] = cur
                heapq.heappush(heap, (g + 1 + h(nc, nr), nc, nr))
    return None


def dilate(cells: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Grow blocked cells by ``iterations`` cells (8-neighbourhood)."""
    if iterations <= 0:
        return cells.copy()
    return ndimage.binary_dilation(
        cells, structure=np.ones((3, 3), dtype=bool), iterations=iterations
    )


def reachable_mask(grid: OccupancyGrid, start) -> np.ndarray:
    """Free cells 4-connected to ``start`` (empty when start is blocked)."""
    _check_cell(grid, start, "start")
    c, r = start
    free = ~grid.cells
    if not free[r, c]:
        return np.zeros_like(free)
    labels, _ = ndimage.label(free, structure=FOUR_CONNECTED)
    return labels == labels[r, c]


def _neighbour_ring(target: np.ndarray) -> np.ndarray:
    """Cells 4-adjacent to ``target`` (excluding the target cells)."""
    ring = ndimage.binary_dilation(target, structure=FOUR_CONNECTED)
    return ring & ~target


def target_reached(reach: np.ndarray, target: np.ndarray) -> bool:
    return bool(np.any(reach & _neighbour_ring(target)))


def cells_to_mask(grid: OccupancyGrid, cells: Iterable) -> np.ndarray:
    m = np.zeros((grid.rows, grid.cols), dtype=bool)
    for c, r in cells:
        m[r, c] = True
    return m


def reachability_ratio(grid: OccupancyGrid, start, targets) -> float:
    """Fraction of targets reachable from ``start``.

    Each target is a set of cells (or a rows x cols boolean mask); it counts as
    reached when a free cell 4-adjacent to it lies in start's component.
    """
    targets = list(targets)
    if not targets:
        raise NavError("reachability_ratio needs at least one target")
    reach = reachable_mask(grid, start)
    hit = 0
    for t in targets:
        mask = t if isinstance(t, np.ndarray) else cells_to_mask(grid, t)
        hit += target_reached(reach, mask)
    return hit / len(targets)


def largest_free_component_ratio(grid: OccupancyGrid) -> float:
    """|largest 4-connected free component| / |free cells|; 1.0 when nothing is free."""
    free = ~grid.cells
    total = int(free.sum())
    if total == 0:
        return 1.0
    labels, n = ndimage.label(free, structure=FOUR_CONNECTED)
    sizes = np.bincount(labels.ravel())[1:]
    return float(sizes.max()) / total
