import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roomplace.geometry import (GeometryError, Polygon, clearance_region, contains_polygon,
                                footprint_polygon, intersection_area, rasterize, shoelace)
from roomplace.scene import Placement

from conftest import obj, room
from oracles import mc_intersection_area


def _verts(poly):
    return sorted((round(x, 12) + 0.0, round(y, 12) + 0.0) for x, y in poly.vertices)


def test_footprint_axis_aligned():
    p = footprint_polygon(obj("a", 2, 1), Placement("a", 0, 0, 0))
    assert _verts(p) == sorted([(-1, -0.5), (1, -0.5), (1, 0.5), (-1, 0.5)])
    assert p.is_convex_ccw()


def test_footprint_quarter_turn_swaps_extent():
    p = footprint_polygon(obj("a", 2, 1), Placement("a", 0, 0, math.pi / 2))
    assert _verts(p) == sorted([(-0.5, -1), (0.5, -1), (0.5, 1), (-0.5, 1)])


def test_footprint_diagonal():
    p = footprint_polygon(obj("a", 1, 1), Placement("a", 3, 3, math.pi / 4))
    h = math.sqrt(2) / 2
    assert _verts(p) == _verts(Polygon(((3, 3 - h), (3 + h, 3), (3, 3 + h), (3 - h, 3))))
    assert p.area == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0, 2 * math.pi))
def test_footprint_area_invariant_under_rotation(w, d, t):
    p = footprint_polygon(obj("a", w, d), Placement("a", 1.0, -2.0, t))
    assert abs(shoelace(p.vertices) - w * d) < 1e-9
    assert p.is_convex_ccw()


def unit(x, y):
    return Polygon.rectangle(x, y, x + 1, y + 1)


def test_intersection_basic_cases():
    assert intersection_area(unit(0, 0), unit(3, 0)) == 0.0
    assert intersection_area(unit(0, 0), unit(0, 0)) == pytest.approx(1.0)
    assert intersection_area(unit(0, 0), unit(0.5, 0)) == pytest.approx(0.5)
    assert mc_intersection_area(unit(0, 0).vertices, unit(0.5, 0).vertices) == pytest.approx(0.5, abs=1e-3)


rects = st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 2), st.floats(0.1, 2),
                  st.floats(0, 2 * math.pi))


def _rect(r):
    x, y, w, d, t = r
    return footprint_polygon(obj("o", w, d), Placement("o", x, y, t))


@settings(max_examples=150)
@given(rects, rects)
def test_intersection_properties(ra, rb):
    a, b = _rect(ra), _rect(rb)
    ab, ba = intersection_area(a, b), intersection_area(b, a)
    assert ab >= 0
    assert ab == pytest.approx(ba, abs=1e-9)
    assert ab <= min(a.area, b.area) + 1e-9
    assert intersection_area(a, a) == pytest.approx(a.area, abs=1e-9)


def test_intersection_matches_monte_carlo():
    gen = np.random.default_rng(7)
    for k in range(20):
        a = _rect((*gen.uniform(-0.5, 0.5, 2), *gen.uniform(0.3, 1.5, 2), gen.uniform(0, 6.28)))
        b = _rect((*gen.uniform(-0.5, 0.5, 2), *gen.uniform(0.3, 1.5, 2), gen.uniform(0, 6.28)))
        assert intersection_area(a, b) == pytest.approx(
            mc_intersection_area(a.vertices, b.vertices, 200_000, seed=k), abs=5e-3)


def test_clearance_in_front():
    fridge = obj("fridge", 1.0, 0.8, functional=True)
    c = clearance_region(fridge, Placement("fridge", 2, 2, 0), 0.8, 0.1)
    assert np.allclose(c.array.mean(0), (2.0, 2.8))
    x0, y0, x1, y1 = c.bounds()
    assert (x1 - x0, y1 - y0) == pytest.approx((1.2, 0.8))
    back = clearance_region(fridge, Placement("fridge", 2, 2, math.pi), 0.8, 0.1)
    assert np.allclose(back.array.mean(0), (2.0, 1.2))


def test_clearance_contract():
    with pytest.raises(GeometryError):
        clearance_region(obj("a"), Placement("a", 0, 0))
    with pytest.raises(GeometryError):
        clearance_region(obj("a", functional=True), Placement("a", 0, 0), depth=0, margin=0)


def test_clearance_touches_front_edge():
    o = obj("a", 1.0, 0.6, functional=True)
    p = Placement("a", 1, 1, 0.7)
    clr, foot = clearance_region(o, p), footprint_polygon(o, p)
    assert intersection_area(clr, foot) == pytest.approx(0.0, abs=1e-9)
    assert contains_polygon(Polygon.rectangle(-9, -9, 9, 9), clr)


def _cell_oracle(rm, blockers, res):
    cols, rows = math.ceil(rm.width / res - 1e-9), math.ceil(rm.depth / res - 1e-9)
    out = np.zeros((rows, cols), dtype=bool)
    for r in range(rows):
        for c in range(cols):
            x, y = (c + 0.5) * res, (r + 0.5) * res
            out[r, c] = x > rm.width or y > rm.depth or any(
                b.contains(np.array([[x, y]]))[0] for b in blockers)
    return out


def test_rasterize_examples():
    rm = room(4, 4)
    g = rasterize(rm, [], 1.0)
    assert g.cells.shape == (4, 4) and not g.cells.any()
    g = rasterize(rm, [Polygon.rectangle(1, 1, 3, 3)], 0.5)
    assert g.cells.size == 64 and g.cells.sum() == 16
    assert rasterize(rm, [Polygon.rectangle(-1, -1, 5, 5)], 0.5).cells.all()


def test_rasterize_matches_cell_oracle():
    gen = np.random.default_rng(3)
    rm = room(3.3, 2.7)
    blockers = [_rect((*gen.uniform(0, 3, 2), *gen.uniform(0.2, 1, 2), gen.uniform(0, 6.28)))
                for _ in range(4)]
    assert np.array_equal(rasterize(rm, blockers, 0.2).cells, _cell_oracle(rm, blockers, 0.2))


def test_rasterize_rejects_coarse_resolution():
    with pytest.raises(GeometryError):
        rasterize(room(1, 1), [], 2.0)
    with pytest.raises(GeometryError):
        rasterize(room(1, 1), [], 0.0)


@settings(max_examples=40)
@given(st.lists(rects, max_size=3), rects)
def test_rasterize_monotone(blockers, extra):
    rm = room(3, 3)
    polys = [_rect((x + 1.5, y + 1.5, w, d, t)) for x, y, w, d, t in blockers]
    before = rasterize(rm, polys, 0.25).cells
    after = rasterize(rm, polys + [_rect(extra)], 0.25).cells
    assert np.all(after[before])
