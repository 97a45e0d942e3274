"""Regenerate the packaged scene files in src/lidarodom/scenes/.

    python scripts/make_scenes.py
"""

import math
from pathlib import Path

import yaml

from lidarodom.synth import Box, Plane, Rect, World, world_to_dict
from lidarodom.transform import RigidTransform

OUT = Path(__file__).resolve().parents[1] / "src" / "lidarodom" / "scenes"

FLOOR = Plane(1, "ground", (0.0, 0.0, 0.0), (0.0, 0.0, 1.0))


def wall_x(sid, x, y0, y1, height, tag="wall"):
    """Vertical wall in the plane x = const."""
    return Rect(sid, tag, (x, (y0 + y1) / 2, height / 2), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), ((y1 - y0) / 2, height / 2))


def wall_y(sid, y, x0, x1, height, tag="wall"):
    return Rect(sid, tag, ((x0 + x1) / 2, y, height / 2), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0), ((x1 - x0) / 2, height / 2))


def ceiling(sid, x0, x1, y0, y1, z):
    return Rect(sid, "ceiling", ((x0 + x1) / 2, (y0 + y1) / 2, z), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), ((x1 - x0) / 2, (y1 - y0) / 2))


def pillars_along_x(first_id, y_wall, inward, xs, height, width=0.3, depth=0.2):
    """Boxes attached to a wall at y = y_wall, protruding ``depth`` toward ``inward`` (+1/-1)."""
    out = []
    for k, x in enumerate(xs):
        y0, y1 = sorted((y_wall, y_wall + inward * depth))
        out.append(Box(first_id + k, "object", (x - width / 2, y0 - 0.05 * (inward > 0), 0.0), (x + width / 2, y1 + 0.05 * (inward < 0), height)))
    return out


def pillars_along_y(first_id, x_wall, inward, ys, height, width=0.3, depth=0.2):
    out = []
    for k, y in enumerate(ys):
        x0, x1 = sorted((x_wall, x_wall + inward * depth))
        out.append(Box(first_id + k, "object", (x0 - 0.05 * (inward > 0), y - width / 2, 0.0), (x1 + 0.05 * (inward < 0), y + width / 2, height)))
    return out


def flat_ground():
    return World(
        [FLOOR],
        "flat_ground",
        RigidTransform.from_euler((0, 0, 0.5)),
        {"type": "line", "start": [0.0, 0.0], "end": [9.0, 0.0], "n": 10},
    )


def two_slopes():
    a, b = math.radians(4.0), math.radians(8.0)
    x0, x1, x2 = 4.0, 16.0, 60.0
    z1 = (x1 - x0) * math.tan(a)
    flat = Rect(1, "ground", ((-60 + x0) / 2, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), ((x0 + 60) / 2, 60.0))
    la = (x1 - x0) / math.cos(a)
    slope_a = Rect(
        2, "slope", ((x0 + x1) / 2, 0.0, z1 / 2), (math.cos(a), 0.0, math.sin(a)), (0.0, 1.0, 0.0), (la / 2, 60.0)
    )
    lb = (x2 - x1) / math.cos(b)
    zb = (x2 - x1) * math.tan(b)
    slope_b = Rect(
        3, "slope", ((x1 + x2) / 2, 0.0, z1 + zb / 2), (math.cos(b), 0.0, math.sin(b)), (0.0, 1.0, 0.0), (lb / 2, 60.0)
    )
    return World(
        [flat, slope_a, slope_b],
        "two_slopes",
        RigidTransform.from_euler((0, 0, 0.5)),
        {"type": "line", "start": [-6.0, 0.0], "end": [6.0, 0.0], "n": 13},
    )


def corridor(name, half_width, height, length, mount, pillar_xs, traj, back_wall=True, tables=()):
    x0, x1 = -length / 2, length / 2
    prims = [
        FLOOR,
        wall_y(2, -half_width, x0, x1, height),
        wall_y(3, half_width, x0, x1, height),
        ceiling(4, x0 - 1, x1 + 1, -half_width - 1, half_width + 1, height),
        wall_x(5, x1, -half_width, half_width, height),
    ]
    if back_wall:
        prims.append(wall_x(6, x0, -half_width, half_width, height))
    prims += pillars_along_x(100, -half_width, +1, pillar_xs, height)
    prims += pillars_along_x(200, half_width, -1, [x + 1.3 for x in pillar_xs], height)
    for k, (lo, hi) in enumerate(tables):
        prims.append(Box(300 + k, "object", lo, hi))
    return World(prims, name, mount, traj)


PILLARS = [-27.0, -24.1, -20.6, -17.9, -14.2, -11.5, -8.3, -5.6, -2.2, 0.7, 3.9, 6.4, 9.8, 12.9, 15.3, 18.8, 21.6, 24.9]


def corridor_with_ceiling():
    return corridor(
        "corridor_with_ceiling",
        1.5,
        2.6,
        60.0,
        RigidTransform.from_euler((0, 0, 0.5)),
        PILLARS,
        {"type": "line", "start": [-5.0, 0.0], "end": [5.0, 0.0], "n": 50},
    )


def tilted_mount_corridor():
    # wide and low: the pitched sensor sees the floor flat only toward its sides,
    # and the lower rings looking back-left/back-right reach the ceiling
    return corridor(
        "tilted_mount_corridor",
        12.0,
        2.0,
        40.0,
        RigidTransform.from_euler((0, 0, 0.6), (0.0, math.radians(15.0), 0.0)),
        PILLARS,
        {"type": "line", "start": [-5.0, 0.0], "end": [5.0, 0.0], "n": 20},
        tables=[((6.0, -4.0, 0.0), (7.2, -3.2, 0.75)), ((-2.0, 5.0, 0.0), (-0.8, 5.8, 0.75))],
    )


def lobby():
    lx, ly, h = 20.0, 16.0, 4.0
    prims = [
        FLOOR,
        wall_y(2, 0.0, 0.0, lx, h),
        wall_y(3, ly, 0.0, lx, h),
        wall_x(4, 0.0, 0.0, ly, h),
        wall_x(5, lx, 0.0, ly, h),
        ceiling(6, -1, lx + 1, -1, ly + 1, h),
        Box(10, "object", (4.0, 4.0, 0.0), (4.6, 4.6, h)),
        Box(11, "object", (15.4, 4.0, 0.0), (16.0, 4.6, h)),
        Box(12, "object", (4.0, 11.4, 0.0), (4.6, 12.0, h)),
        Box(13, "object", (15.4, 11.4, 0.0), (16.0, 12.0, h)),
        Box(14, "object", (8.5, 9.5, 0.0), (10.5, 10.3, 0.75)),
        Box(15, "object", (12.0, 5.0, 0.0), (12.8, 5.8, 1.2)),
    ]
    return World(
        prims,
        "lobby",
        RigidTransform.from_euler((0, 0, 0.5)),
        {"type": "line", "start": [3.0, 8.0], "end": [17.0, 8.0], "n": 30},
    )


# racetrack corridor: centerline path length is exactly 50 m with 1 m corner fillets
LOOP_R = 1.0
LOOP_LX = 15.0 + (8 - 2 * math.pi) * LOOP_R / 4
LOOP_LY = 10.0 + (8 - 2 * math.pi) * LOOP_R / 4


def corridor_loop():
    hw, h = 1.3, 2.5
    lx, ly = LOOP_LX, LOOP_LY
    prims = [
        FLOOR,
        wall_y(2, -hw, -hw, lx + hw, h),
        wall_y(3, ly + hw, -hw, lx + hw, h),
        wall_x(4, -hw, -hw, ly + hw, h),
        wall_x(5, lx + hw, -hw, ly + hw, h),
        ceiling(6, -hw - 1, lx + hw + 1, -hw - 1, ly + hw + 1, h),
        Box(7, "wall", (hw, hw, 0.0), (lx - hw, ly - hw, h)),
    ]
    # irregular spacing avoids along-corridor aliasing
    bottom = [1.1, 3.4, 5.2, 8.0, 9.6, 12.3, 14.1]
    top = [0.9, 2.7, 5.6, 7.1, 10.2, 11.8, 14.4]
    left = [1.8, 3.9, 6.6, 8.4]
    right = [1.5, 4.4, 5.9, 8.8]
    prims += pillars_along_x(100, -hw, +1, bottom, h)
    prims += pillars_along_x(120, ly + hw, -1, top, h)
    prims += pillars_along_y(140, -hw, +1, left, h)
    prims += pillars_along_y(160, lx + hw, -1, right, h)
    prims += pillars_along_x(180, hw, -1, [2.6, 6.3, 10.9], h)
    prims += pillars_along_x(190, ly - hw, +1, [3.8, 8.7, 12.6], h)
    prims += pillars_along_y(200, hw, -1, [3.1, 7.0], h)
    prims += pillars_along_y(210, lx - hw, +1, [2.4, 6.2], h)
    return World(
        prims,
        "corridor_loop",
        RigidTransform.from_euler((0, 0, 0.5)),
        {"type": "racetrack", "lx": lx, "ly": ly, "corner_radius": LOOP_R, "n": 200, "corner_speed_ratio": 0.35},
    )


BUILDERS = [flat_ground, two_slopes, corridor_with_ceiling, lobby, tilted_mount_corridor, corridor_loop]


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return round(obj, 10) + 0.0
    return obj


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for build in BUILDERS:
        world = build()
        text = yaml.safe_dump(_clean(world_to_dict(world)), sort_keys=False, default_flow_style=None, width=120)
        (OUT / f"{world.name}.yaml").write_text(f"# generated by scripts/make_scenes.py\n{text}")
        print(f"wrote {world.name}.yaml ({len(world.primitives)} primitives)")


if __name__ == "__main__":
    main()
