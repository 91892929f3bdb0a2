"""Top-down SVG drawings of layouts.

World coordinates have y pointing north; geometry is drawn inside a group
that flips the SVG y axis, so rotations in the output match placement angles.
Numbers are printed with fixed precision and the output is byte-stable.
"""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

from .geometry import clearance_region
from .scene import Layout, SceneSpec

PX_PER_M = 100.0
MARGIN_PX = 20.0


def _f(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _door_path(room, door) -> str:
    s = PX_PER_M
    w = door.width * s
    if door.wall == "S":
        hx, hy, ex, ey, ox, oy = door.offset * s, 0.0, (door.offset + door.width) * s, 0.0, door.offset * s, w
    elif door.wall == "N":
        y = room.depth * s
        hx, hy, ex, ey, ox, oy = door.offset * s, y, (door.offset + door.width) * s, y, door.offset * s, y - w
    elif door.wall == "W":
        hx, hy, ex, ey, ox, oy = 0.0, door.offset * s, 0.0, (door.offset + door.width) * s, w, door.offset * s
    else:
        x = room.width * s
        hx, hy, ex, ey, ox, oy = x, door.offset * s, x, (door.offset + door.width) * s, x - w, door.offset * s
    return (f'<path d="M {_f(ex)} {_f(ey)} A {_f(w)} {_f(w)} 0 0 {1 if door.wall in "SE" else 0} '
            f'{_f(ox)} {_f(oy)} L {_f(hx)} {_f(hy)}" class="door"/>')


def render_svg(scene: SceneSpec, layout: Layout, viewpoints: Sequence = (),
               show_clearance: bool = True) -> str:
    room = scene.room
    objs = scene.object_map
    s = PX_PER_M
    W, H = room.width * s, room.depth * s
    total_w, total_h = W + 2 * MARGIN_PX, H + 2 * MARGIN_PX
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(total_w)}" height="{_f(total_h)}" '
        f'viewBox="0 0 {_f(total_w)} {_f(total_h)}">',
        "<style>.room{fill:#fafafa;stroke:#222;stroke-width:3}"
        ".door{fill:none;stroke:#c33;stroke-width:2}"
        ".obj{fill:#9ec5e8;stroke:#234;stroke-width:1.5}"
        ".clear{fill:none;stroke:#2a7;stroke-width:1;stroke-dasharray:4 3}"
        ".start{fill:#c33}.vr{fill:none;stroke:#a3c;stroke-width:1.5}"
        "text{font-family:sans-serif;font-size:11px;text-anchor:middle}</style>",
        f'<g transform="translate({_f(MARGIN_PX)} {_f(MARGIN_PX + H)}) scale(1 -1)">',
        f'<rect x="0" y="0" width="{_f(W)}" height="{_f(H)}" class="room"/>',
    ]
    for door in room.doors:
        out.append(_door_path(room, door))
    for p in layout.placements:
        obj = objs[p.object_id]
        w, d = obj.dims[0] * s, obj.dims[1] * s
        cx, cy = p.x * s, p.y * s
        deg = math.degrees(p.theta)
        out.append(
            f'<rect id="{escape(obj.id)}" x="{_f(cx - w / 2)}" y="{_f(cy - d / 2)}" '
            f'width="{_f(w)}" height="{_f(d)}" transform="rotate({_f(deg)} {_f(cx)} {_f(cy)})" '
            f'class="obj"/>')
        if show_clearance and obj.functional:
            pts = " ".join(f"{_f(x * s)},{_f(y * s)}" for x, y in clearance_region(obj, p).vertices)
            out.append(f'<polygon points="{pts}" class="clear"/>')
    sx, sy = room.start
    out.append(f'<circle cx="{_f(sx * s)}" cy="{_f(sy * s)}" r="6" class="start"/>')
    for v in viewpoints:
        out.append(f'<circle cx="{_f(v.x * s)}" cy="{_f(v.y * s)}" r="8" class="vr"/>')
    out.append("</g>")
    for p in layout.placements:
        obj = objs[p.object_id]
        tx, ty = MARGIN_PX + p.x * s, MARGIN_PX + H - p.y * s
        out.append(f'<text x="{_f(tx)}" y="{_f(ty)}">{escape(obj.name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
