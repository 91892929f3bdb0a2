"""2D footprints, convex clipping and occupancy rasterization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import ObjectSpec, Placement, RoomSpec

CLEARANCE_DEPTH = 0.8
CLEARANCE_MARGIN = 0.1


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Polygon:
    """Convex polygon with counter-clockwise vertices."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise GeometryError("polygon needs at least 3 vertices")

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "Polygon":
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    @property
    def area(self) -> float:
        return shoelace(self.vertices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def is_convex_ccw(self, tol: float = 1e-9) -> bool:
        v = self.array
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        return bool(np.all(cross >= -tol)) and self.area > 0

    def bounds(self) -> tuple[float, float, float, float]:
        v = self.array
        return (v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Vectorised point-in-convex-polygon test; boundary counts as inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.array
        inside = np.ones(len(pts), dtype=bool)
        for i in range(len(v)):
            ax, ay = v[i]
            bx, by = v[(i + 1) % len(v)]
            cross = (bx - ax) * (pts[:, 1] - ay) - (by - ay) * (pts[:, 0] - ax)
            inside &= cross >= -tol
        return inside


def shoelace(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _rotated_rect(cx: float, cy: float, w: float, d: float, theta: float,
                  local_offset: tuple[float, float] = (0.0, 0.0)) -> Polygon:
    c, s = math.cos(theta), math.sin(theta)
    ox, oy = local_offset
    hw, hd = w / 2.0, d / 2.0
    verts = []
    for lx, ly in ((-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd)):
        lx += ox
        ly += oy
        verts.append((cx + c * lx - s * ly, cy + s * lx + c * ly))
    return Polygon(tuple(verts))


def footprint_polygon(obj: ObjectSpec, place: Placement) -> Polygon:
    """The object's w x d rectangle at ``place``, rotated by its theta."""
    return _rotated_rect(place.x, place.y, obj.dims[0], obj.dims[1], place.theta)


def clearance_region(obj: ObjectSpec, place: Placement,
                     depth: float = CLEARANCE_DEPTH,
                     margin: float = CLEARANCE_MARGIN) -> Polygon:
    """Free rectangle required in front of a functional object.

    The front is the object's local +y face; the region is ``w + 2*margin``
    wide, ``depth`` deep and rotates with the object.
    """
    if not obj.functional:
        raise GeometryError(f"{obj.id} is not functional; it has no clearance region")
    if not depth > 0:
        raise GeometryError("clearance depth must be > 0")
    if margin < 0:
        raise GeometryError("clearance margin must be >= 0")
    w, d = obj.dims[0], obj.dims[1]
    return _rotated_rect(place.x, place.y, w + 2 * margin, depth, place.theta,
                         local_offset=(0.0, d / 2.0 + depth / 2.0))


def room_polygon(room: RoomSpec) -> Polygon:
    return Polygon.rectangle(0.0, 0.0, room.width, room.depth)


def clip_convex(subject, clip) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clipping of ``subject`` against convex CCW ``clip``."""
    out = [tuple(p) for p in subject]
    cv = list(clip)
    n = len(cv)
    for i in range(n):
        if not out:
            break
        ax, ay = cv[i]
        bx, by = cv[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        inp = out
        out = []
        prev = inp[-1]
        sp = side(prev)
        for cur in inp:
            sc = side(cur)
            if sc >= 0:
                if sp < 0:
                    out.append(_intersect(prev, cur, sp, sc))
                out.append(cur)
            elif sp >= 0:
                out.append(_intersect(prev, cur, sp, sc))
            prev, sp = cur, sc
    return out


def _intersect(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def intersection_area(a: Polygon, b: Polygon) -> float:
    """Area of the intersection of two convex CCW polygons."""
    ax0, ay0, ax1, ay1 = a.bounds()
    bx0, by0, bx1, by1 = b.bounds()
    if ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0:
        return 0.0
    pts = clip_convex(a.vertices, b.vertices)
    if len(pts) < 3:
        return 0.0
    return max(0.0, shoelace(pts))


def contains_polygon(outer: Polygon, inner: Polygon, tol: float = 1e-9) -> bool:
    return bool(np.all(outer.contains(inner.array, tol=tol)))


# --------------------------------------------------------------------------
# occupancy grids


def grid_shape(width: float, depth: float, resolution: float) -> tuple[int, int]:
    # guard against 4.0/0.1 == 40.000000000000004
    cols = int(math.ceil(width / resolution - 1e-9))
    rows = int(math.ceil(depth / resolution - 1e-9))
    return cols, rows


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Boolean floor raster; ``cells[row, col]`` is True where blocked."""

    resolution: float
    cells: np.ndarray

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    def __eq__(self, other):
        return (isinstance(other, OccupancyGrid)
                and self.resolution == other.resolution
                and np.array_equal(self.cells, other.cells))

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(col, row) of the cell containing a point, clamped into the grid."""
        c = min(max(int(math.floor(x / self.resolution)), 0), self.cols - 1)
        r = min(max(int(math.floor(y / self.resolution)), 0), self.rows - 1)
        return c, r

    def centers(self) -> np.ndarray:
        return _cell_centers(self.cols, self.rows, self.resolution)


def _cell_centers(cols: int, rows: int, resolution: float) -> np.ndarray:
    xs = (np.arange(cols) + 0.5) * resolution
    ys = (np.arange(rows) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def polygon_mask(poly: Polygon, cols: int, rows: int, resolution: float) -> np.ndarray:
    """rows x cols mask of cells whose centre lies inside ``poly``."""
    mask = np.zeros((rows, cols), dtype=bool)
    x0, y0, x1, y1 = poly.bounds()
    c0 = max(int(math.floor(x0 / resolution - 0.5)), 0)
    c1 = min(int(math.ceil(x1 / resolution + 0.5)), cols)
    r0 = max(int(math.floor(y0 / resolution - 0.5)), 0)
    r1 = min(int(math.ceil(y1 / resolution + 0.5)), rows)
    if c0 >= c1 or r0 >= r1:
        return mask
    xs = (np.arange(c0, c1) + 0.5) * resolution
    ys = (np.arange(r0, r1) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    mask[r0:r1, c0:c1] = poly.contains(pts).reshape(r1 - r0, c1 - c0)
    return mask


def rasterize(room: RoomSpec, blockers, resolution: float = 0.1) -> OccupancyGrid:
    """Rasterize ``blockers`` over the room.

    A cell is blocked iff its centre is inside some blocker or outside the
    room rectangle.
    """
    if not resolution > 0:
        raise GeometryError("resolution must be > 0")
    if resolution > min(room.width, room.depth):
        raise GeometryError(
            f"resolution {resolution} exceeds the smaller room side "
            f"{min(room.width, room.depth)}"
        )
    cols, rows = grid_shape(room.width, room.depth, resolution)
    centers = _cell_centers(cols, rows, resolution)
    outside = (centers[:, 0] > room.width) | (centers[:, 1] > room.depth)
    cells = outside.reshape(rows, cols).copy()
    for poly in blockers:
        cells |= polygon_mask(poly, cols, rows, resolution)
    return OccupancyGrid(resolution, cells)
