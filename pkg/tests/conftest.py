import json
import sys

import numpy as np
import pytest

from roomplace.scene import (ConstraintSpec, Door, Layout, ObjectSpec, Placement, RoomSpec,
                             SceneSpec)


def obj(oid, w=1.0, d=1.0, h=1.0, role="filler", functional=False, name=None, flags=()):
    return ObjectSpec(oid, name or oid, (w, d, h), role, functional, frozenset(flags))


def room(w=4.0, d=4.0, doors=(), start=None):
    return RoomSpec(w, d, tuple(doors), start)


def scene(objects, constraints=(), w=4.0, d=4.0, doors=(), start=None, **kw):
    return SceneSpec(room(w, d, doors, start), tuple(objects), tuple(constraints), **kw)


def layout(*placements, skipped=()):
    return Layout(tuple(Placement(*p) for p in placements), tuple(skipped))


MINIMAL_DOC = {
    "room": {"width": 4.0, "depth": 4.0, "doors": [{"wall": "S", "offset": 0.5, "width": 0.9}]},
    "objects": [{"id": "bed", "name": "bed", "dims": [2.0, 1.6, 0.5], "role": "anchor"}],
    "constraints": [],
}


@pytest.fixture
def minimal_doc():
    return json.loads(json.dumps(MINIMAL_DOC))


@pytest.fixture
def kitchen():
    objs = [
        obj("fridge", 0.8, 0.7, 1.8, role="anchor", functional=True),
        obj("counter", 1.6, 0.6, 0.9, role="inference", functional=True),
        obj("table", 1.2, 0.8, 0.75),
        obj("chair", 0.45, 0.45, 0.9),
    ]
    cons = [
        ConstraintSpec("against_wall", "fridge"),
        ConstraintSpec("near", "chair", "table", (("d_max", 0.6),)),
        ConstraintSpec("far_from", "table", "fridge", (("d_min", 1.0),)),
    ]
    return scene(objs, cons, 5.0, 4.0, doors=[Door("S", 2.0, 0.9)], room_type="kitchen")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
