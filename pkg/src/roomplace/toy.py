"""Small seeded scene corpora for smoke tests, training demos and evaluation."""

from __future__ import annotations

import numpy as np

from .scene import ConstraintSpec, Door, ObjectSpec, RoomSpec, SceneSpec

# name, (w, d, h), role, functional, flags
_CATALOG = {
    "bedroom": [
        ("bed", (2.0, 1.6, 0.5), "anchor", False, ()),
        ("wardrobe", (1.2, 0.6, 2.0), "inference", True, ()),
        ("nightstand", (0.5, 0.4, 0.5), "key", False, ()),
        ("desk", (1.2, 0.6, 0.75), "filler", True, ()),
        ("lamp", (0.3, 0.3, 1.5), "filler", False, ("pickupable",)),
    ],
    "kitchen": [
        ("counter", (2.0, 0.6, 0.9), "anchor", True, ()),
        ("refrigerator", (0.8, 0.7, 1.8), "inference", True, ("cold_source",)),
        ("stove", (0.8, 0.6, 0.9), "inference", True, ("heat_source",)),
        ("table", (1.2, 0.8, 0.75), "filler", False, ()),
        ("stool", (0.4, 0.4, 0.6), "key", False, ("pickupable",)),
    ],
    "living room": [
        ("sofa", (2.0, 0.9, 0.8), "anchor", False, ()),
        ("tv stand", (1.6, 0.45, 0.5), "inference", True, ()),
        ("coffee table", (1.0, 0.6, 0.45), "key", False, ()),
        ("bookshelf", (1.0, 0.35, 1.8), "filler", True, ()),
        ("armchair", (0.8, 0.8, 0.9), "filler", False, ()),
    ],
    "office": [
        ("desk", (1.4, 0.7, 0.75), "anchor", True, ()),
        ("office chair", (0.6, 0.6, 1.0), "key", False, ()),
        ("cabinet", (0.8, 0.5, 1.2), "inference", True, ()),
        ("bookshelf", (1.0, 0.35, 1.8), "filler", True, ()),
        ("plant", (0.4, 0.4, 1.0), "filler", False, ("pickupable",)),
    ],
}

_WALL_HUGGERS = {"bed", "wardrobe", "desk", "counter", "refrigerator", "stove",
                 "tv stand", "bookshelf", "cabinet", "sofa"}

_PAIRS = [
    ("near", "nightstand", "bed", {"d_max": 1.6}),
    ("near", "lamp", "desk", {"d_max": 1.2}),
    ("near", "stove", "counter", {"d_max": 2.0}),
    ("near", "stool", "table", {"d_max": 1.2}),
    ("near", "coffee table", "sofa", {"d_max": 1.6}),
    ("facing", "sofa", "tv stand", {}),
    ("near", "office chair", "desk", {"d_max": 1.2}),
    ("far_from", "refrigerator", "stove", {"d_min": 1.0}),
]

_INSTRUCTIONS = {
    "bedroom": "put the book on the nightstand",
    "kitchen": "warm the bread on the stove",
    "living room": "bring the remote to the coffee table",
    "office": "leave the letter on the desk",
}


def toy_scene(seed: int, max_objects: int = 5, room_range=(4.0, 5.0)) -> SceneSpec:
    """One random single-room scene with 3 to ``max_objects`` objects."""
    rng = np.random.default_rng(seed)
    room_type = sorted(_CATALOG)[int(rng.integers(len(_CATALOG)))]
    lo, hi = room_range
    width = float(np.round(rng.uniform(lo, hi), 2))
    depth = float(np.round(rng.uniform(lo, hi), 2))
    # the door always sits on the south wall: the policy observes no door features
    door_w = 0.9
    offset = float(np.round(rng.uniform(0.2, width - door_w - 0.2), 2))
    room = RoomSpec(width, depth, (Door("S", offset, door_w),))

    catalog = _CATALOG[room_type]
    n = int(rng.integers(3, max_objects + 1))
    # the first two entries always take part so every scene has an anchor and a target
    picks = [0, 1] + sorted(rng.choice(np.arange(2, len(catalog)), size=n - 2, replace=False).tolist())
    objects = []
    for i in picks:
        name, dims, role, functional, flags = catalog[i]
        objects.append(ObjectSpec(name.replace(" ", "_"), name, dims, role, functional,
                                  frozenset(flags)))

    ids = {o.name: o.id for o in objects}
    constraints = []
    for o in objects:
        if o.name in _WALL_HUGGERS:
            constraints.append(ConstraintSpec("against_wall", o.id))
    for kind, a, b, params in _PAIRS:
        if a in ids and b in ids:
            constraints.append(ConstraintSpec(kind, ids[a], ids[b], tuple(sorted(params.items()))))
    return SceneSpec(room, tuple(objects), tuple(constraints),
                     _INSTRUCTIONS[room_type], room_type)


def toy_corpus(n: int = 20, seed: int = 0, max_objects: int = 5) -> list[SceneSpec]:
    return [toy_scene(seed * 1000 + i, max_objects) for i in range(n)]


def trivial_scene() -> SceneSpec:
    """A 4 x 4 m room holding a single unconstrained box."""
    room = RoomSpec(4.0, 4.0, (Door("S", 1.5, 1.0),))
    return SceneSpec(room, (ObjectSpec("box", "box", (1.0, 1.0, 1.0), "anchor"),))
