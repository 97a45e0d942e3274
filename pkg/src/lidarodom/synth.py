"""Deterministic ray-cast LiDAR simulator with exact per-point ground truth.

Worlds are lists of planes, finite rectangles and axis-aligned boxes.  Every
beam of a :class:`~lidarodom.lidar_model.SensorModel` is cast from the sensor
origin and the nearest hit inside the range gate becomes a point.  Noise is
additive Gaussian along the beam only, so a noisy point keeps the exact
(row, col) of the beam that produced it.

Seed handling: scan ``k`` of a dataset draws its noise from
``np.random.default_rng([seed, k])``; a single :func:`simulate_scan` call uses
``default_rng([seed])``.  One normal variate is drawn per beam in row-major
order whether or not the beam returns, so noise never depends on the scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from lidarodom.errors import ParseError
from lidarodom.lidar_model import VLP16, PointCloud, SensorModel
from lidarodom.transform import RigidTransform

TAGS = ("ground", "wall", "ceiling", "slope", "object")
GROUND_TAGS = ("ground", "slope")
_EPS = 1e-9


@dataclass(frozen=True)
class Plane:
    """Infinite plane through ``point`` with normal ``normal``."""

    surface_id: int
    tag: str
    point: tuple
    normal: tuple

    def intersect(self, origin, dirs):
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        denom = dirs @ n
        num = float(n @ (np.asarray(self.point, dtype=float) - origin))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / denom
        t = np.where((np.abs(denom) > _EPS) & (t > _EPS), t, np.inf)
        return t, np.zeros(len(dirs), dtype=np.int64)

    def signed_distance(self, pts, face=None):
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        return (pts - np.asarray(self.point, dtype=float)) @ n


@dataclass(frozen=True)
class Rect:
    """Finite plane patch: ``center + a*u + b*v`` with ``|a| <= half_extents[0]``, ``|b| <= half_extents[1]``."""

    surface_id: int
    tag: str
    center: tuple
    u: tuple
    v: tuple
    half_extents: tuple

    def _frame(self):
        u = np.asarray(self.u, dtype=float)
        u = u / np.linalg.norm(u)
        v = np.asarray(self.v, dtype=float)
        v = v - (v @ u) * u
        v = v / np.linalg.norm(v)
        return np.asarray(self.center, dtype=float), u, v, np.cross(u, v)

    def intersect(self, origin, dirs):
        c, u, v, n = self._frame()
        denom = dirs @ n
        num = float(n @ (c - origin))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / denom
        ok = (np.abs(denom) > _EPS) & (t > _EPS)
        t = np.where(ok, t, np.inf)
        hit = origin + dirs * np.where(ok, t, 0.0)[:, None] - c
        a, b = self.half_extents
        inside = (np.abs(hit @ u) <= a + 1e-12) & (np.abs(hit @ v) <= b + 1e-12)
        return np.where(inside, t, np.inf), np.zeros(len(dirs), dtype=np.int64)

    def signed_distance(self, pts, face=None):
        c, _, _, n = self._frame()
        return (pts - c) @ n


@dataclass(frozen=True)
class Box:
    """Solid axis-aligned box. Face ids: 0/1 = -x/+x, 2/3 = -y/+y, 4/5 = -z/+z."""

    surface_id: int
    tag: str
    min: tuple
    max: tuple

    def intersect(self, origin, dirs):
        lo = np.asarray(self.min, dtype=float)
        hi = np.asarray(self.max, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (lo - origin) * inv
            t2 = (hi - origin) * inv
        # a zero direction component inside the slab gives nan; outside gives +-inf
        par = dirs == 0.0
        inside_slab = (origin >= lo) & (origin <= hi)
        t1 = np.where(par, np.where(inside_slab, -np.inf, np.inf), t1)
        t2 = np.where(par, np.where(inside_slab, np.inf, np.inf), t2)
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        tnear = tmin.max(axis=1)
        tfar = tmax.min(axis=1)
        axis = tmin.argmax(axis=1)
        side = (dirs[np.arange(len(dirs)), axis] < 0).astype(np.int64)
        hit = (tnear <= tfar) & (tnear > _EPS)
        return np.where(hit, tnear, np.inf), 2 * axis + side

    def signed_distance(self, pts, face):
        lo = np.asarray(self.min, dtype=float)
        hi = np.asarray(self.max, dtype=float)
        face = np.asarray(face)
        axis = face // 2
        bound = np.where(face % 2 == 1, hi[axis], lo[axis])
        return pts[np.arange(len(pts)), axis] - bound

    @property
    def extents(self):
        return np.asarray(self.max, dtype=float) - np.asarray(self.min, dtype=float)


Primitive = Plane | Rect | Box


@dataclass
class World:
    primitives: list
    name: str = "world"
    mount: RigidTransform = field(default_factory=RigidTransform.identity)
    trajectory: dict | None = None

    def __post_init__(self):
        for p in self.primitives:
            if p.tag not in TAGS:
                raise ValueError(f"unknown tag {p.tag!r}")
            if isinstance(p, Rect) and min(p.half_extents) <= 0:
                raise ValueError(f"rect {p.surface_id} needs positive extents")
            if isinstance(p, Box) and np.any(p.extents <= 0):
                raise ValueError(f"box {p.surface_id} needs positive extents")

    def primitive(self, surface_id: int):
        for p in self.primitives:
            if p.surface_id == surface_id:
                return p
        raise KeyError(surface_id)


@dataclass
class ScanTruth:
    """One simulated sweep. All per-point arrays align with ``cloud.points`` (sensor frame)."""

    cloud: PointCloud
    surface_id: np.ndarray
    face: np.ndarray
    tag: np.ndarray
    range_true: np.ndarray
    row: np.ndarray
    col: np.ndarray
    sensor_pose: RigidTransform
    vehicle_pose: RigidTransform
    mount: RigidTransform

    @property
    def is_ground(self) -> np.ndarray:
        return np.isin(self.tag, GROUND_TAGS)

    def world_points(self) -> np.ndarray:
        return self.sensor_pose.apply(self.cloud.points)


def _azimuth_candidates(box: Box, origin: np.ndarray, az: np.ndarray, steep: np.ndarray):
    """Indices of rays whose world azimuth can meet ``box`` (all rays when the origin is above/below it)."""
    lo, hi = np.asarray(box.min, dtype=float), np.asarray(box.max, dtype=float)
    if lo[0] <= origin[0] <= hi[0] and lo[1] <= origin[1] <= hi[1]:
        return None
    corners = np.array([[x, y] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])]) - origin[:2]
    center = math.atan2(*(corners.mean(axis=0)[::-1]))
    rel = np.angle(np.exp(1j * (np.arctan2(corners[:, 1], corners[:, 0]) - center)))
    margin = 1e-6
    d = np.angle(np.exp(1j * (az - center)))
    return np.flatnonzero(((d >= rel.min() - margin) & (d <= rel.max() + margin)) | steep)


def cast_rays(world: World, origin: np.ndarray, dirs: np.ndarray):
    """Nearest hit per ray: ``(t, primitive_index, face)``; misses have ``t = inf`` and index -1."""
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_p = np.full(n, -1, dtype=np.int64)
    best_f = np.zeros(n, dtype=np.int64)
    az = np.arctan2(dirs[:, 1], dirs[:, 0])
    steep = np.hypot(dirs[:, 0], dirs[:, 1]) < 1e-9
    for k, prim in enumerate(world.primitives):
        idx = _azimuth_candidates(prim, origin, az, steep) if isinstance(prim, Box) else None
        if idx is None:
            t, face = prim.intersect(origin, dirs)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            best_p = np.where(closer, k, best_p)
            best_f = np.where(closer, face, best_f)
        elif len(idx):
            t, face = prim.intersect(origin, dirs[idx])
            closer = t < best_t[idx]
            sel = idx[closer]
            best_t[sel] = t[closer]
            best_p[sel] = k
            best_f[sel] = face[closer]
    return best_t, best_p, best_f


def simulate_scan(
    world: World,
    vehicle_pose: RigidTransform,
    mount: RigidTransform | None = None,
    sensor: SensorModel = VLP16,
    noise_sigma_m: float = 0.0,
    seed: int | np.random.Generator = 0,
) -> ScanTruth:
    """Cast every beam of ``sensor`` from ``vehicle_pose @ mount`` into ``world``."""
    mount = world.mount if mount is None else mount
    pose = vehicle_pose @ mount
    dirs_s = sensor.beam_directions().reshape(-1, 3)
    dirs_w = dirs_s @ pose.rotation.T
    t, prim, face = cast_rays(world, pose.translation, dirs_w)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng([int(seed)])
    noise = rng.standard_normal(len(dirs_s)) * noise_sigma_m
    hit = np.isfinite(t) & (t >= sensor.min_range_m) & (t <= sensor.max_range_m)
    r_noisy = t + noise
    hit &= r_noisy > 0
    idx = np.flatnonzero(hit)
    pts = dirs_s[idx] * r_noisy[idx, None]
    rows, cols = np.divmod(idx, sensor.n_cols)
    prims = world.primitives
    sid = np.array([prims[k].surface_id for k in prim[idx]], dtype=np.int64)
    tags = np.array([prims[k].tag for k in prim[idx]], dtype=object)
    return ScanTruth(
        cloud=PointCloud(pts, ring=rows),
        surface_id=sid,
        face=face[idx],
        tag=tags,
        range_true=t[idx],
        row=rows,
        col=cols,
        sensor_pose=pose,
        vehicle_pose=vehicle_pose,
        mount=mount,
    )


def generate_trajectory_dataset(
    world: World,
    waypoints: list[RigidTransform],
    sensor: SensorModel = VLP16,
    mount: RigidTransform | None = None,
    noise_sigma_m: float = 0.0,
    seed: int = 0,
) -> list[ScanTruth]:
    if len(waypoints) < 2:
        raise ValueError("need at least 2 waypoints")
    return [
        simulate_scan(world, wp, mount, sensor, noise_sigma_m, np.random.default_rng([int(seed), k]))
        for k, wp in enumerate(waypoints)
    ]


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def line_waypoints(start, end, n: int, z: float = 0.0) -> list[RigidTransform]:
    """``n`` evenly spaced poses from ``start`` to ``end`` (xy), heading along the line."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    yaw = math.atan2(end[1] - start[1], end[0] - start[0])
    return [
        RigidTransform.from_euler((*(start + (end - start) * s), z), (0.0, 0.0, yaw))
        for s in np.linspace(0.0, 1.0, n)
    ]


def _racetrack_path(lx: float, ly: float, r: float):
    """Centerline of an lx-by-ly rectangle with filleted corners, starting mid-bottom heading +x.

    Returns a list of segments ``(kind, length, data)``; kind is ``"line"`` or ``"arc"``.
    """
    segs = []
    corners = [(lx, 0.0), (lx, ly), (0.0, ly), (0.0, 0.0)]
    headings = [0.0, math.pi / 2, math.pi, -math.pi / 2]
    pos = np.array([lx / 2, 0.0])
    for k, (cx, cy) in enumerate(corners):
        h = headings[k]
        d = np.array([math.cos(h), math.sin(h)])
        end = np.array([cx, cy]) - d * r
        length = float(np.linalg.norm(end - pos))
        segs.append(("line", length, (pos.copy(), h)))
        left = np.array([-d[1], d[0]])
        segs.append(("arc", r * math.pi / 2, (end + left * r, r, h)))
        h2 = headings[(k + 1) % 4]
        pos = np.array([cx, cy]) + np.array([math.cos(h2), math.sin(h2)]) * r
    end = np.array([lx / 2, 0.0])
    segs.append(("line", float(np.linalg.norm(end - pos)), (pos.copy(), 0.0)))
    return segs


def _eval_path(segs, s: float):
    for kind, length, data in segs:
        if s <= length + 1e-12:
            if kind == "line":
                p0, h = data
                return p0 + s * np.array([math.cos(h), math.sin(h)]), h, False
            center, r, h0 = data
            a = h0 + s / r
            p = center + r * np.array([math.sin(a), -math.cos(a)])
            return p, a, True
        s -= length
    kind, length, data = segs[-1]
    return _eval_path([segs[-1]], length)


def racetrack_waypoints(
    lx: float, ly: float, corner_radius: float, n: int, corner_speed_ratio: float = 0.35, z: float = 0.0
) -> list[RigidTransform]:
    """Closed loop of ``n`` poses (first == last) around a filleted rectangle.

    Poses are equally spaced in time; speed on corner arcs is ``corner_speed_ratio``
    times the straight-line speed.  Total path length is
    ``2 (lx + ly) - (8 - 2 pi) corner_radius``.
    """
    segs = _racetrack_path(lx, ly, corner_radius)
    total = sum(s[1] for s in segs)
    grid = np.linspace(0.0, total, 20001)
    slow = np.array([_eval_path(segs, s)[2] for s in grid])
    dt = np.where(slow, 1.0 / corner_speed_ratio, 1.0)
    tcum = np.concatenate([[0.0], np.cumsum(0.5 * (dt[1:] + dt[:-1]) * np.diff(grid))])
    s_samples = np.interp(np.linspace(0.0, tcum[-1], n), tcum, grid)
    out = []
    for k, s in enumerate(s_samples):
        p, h, _ = _eval_path(segs, s)
        if k in (0, n - 1):
            p, h = np.array([lx / 2, 0.0]), 0.0
        out.append(RigidTransform.from_euler((p[0], p[1], z), (0.0, 0.0, h)))
    return out


def path_length_xy(poses: list[RigidTransform]) -> float:
    pts = np.array([p.translation for p in poses])
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


# ---------------------------------------------------------------------------
# scene files
# ---------------------------------------------------------------------------


def _vec(d: dict, key: str, n: int, source):
    if key not in d:
        raise ParseError(f"primitive missing key {key!r}", path=source)
    v = d[key]
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ParseError(f"key {key!r} must be a list of {n} numbers", path=source)
    try:
        return tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ParseError(f"key {key!r} must be a list of {n} numbers", path=source) from None


def _pose_from_dict(d: dict | None, source, key: str) -> RigidTransform:
    if d is None:
        return RigidTransform.identity()
    if not isinstance(d, dict):
        raise ParseError(f"key {key!r} must be a mapping", path=source)
    unknown = set(d) - {"t", "rpy_deg"}
    if unknown:
        raise ParseError(f"unknown key {sorted(unknown)[0]!r} in {key!r}", path=source)
    t = _vec(d, "t", 3, source) if "t" in d else (0.0, 0.0, 0.0)
    rpy = _vec(d, "rpy_deg", 3, source) if "rpy_deg" in d else (0.0, 0.0, 0.0)
    return RigidTransform.from_euler(t, np.radians(rpy))


_PRIM_KEYS = {
    "plane": {"type", "id", "tag", "point", "normal"},
    "rect": {"type", "id", "tag", "center", "u", "v", "half_extents"},
    "box": {"type", "id", "tag", "min", "max"},
}


def world_from_dict(data: dict, source=None) -> World:
    """Parse the scene schema.

    Schema::

        name: str
        mount: {t: [x, y, z], rpy_deg: [roll, pitch, yaw]}   # sensor w.r.t. vehicle
        trajectory: {...}                                     # optional, see trajectory_from_dict
        primitives:
          - {type: plane, id: int, tag: str, point: [3], normal: [3]}
          - {type: rect,  id: int, tag: str, center: [3], u: [3], v: [3], half_extents: [2]}
          - {type: box,   id: int, tag: str, min: [3], max: [3]}
    """
    if not isinstance(data, dict):
        raise ParseError("world file must be a mapping", path=source)
    unknown = set(data) - {"name", "mount", "trajectory", "primitives"}
    if unknown:
        raise ParseError(f"unknown key {sorted(unknown)[0]!r}", path=source)
    if "primitives" not in data or not isinstance(data["primitives"], list):
        raise ParseError("missing key 'primitives'", path=source)
    prims = []
    seen = set()
    for item in data["primitives"]:
        if not isinstance(item, dict):
            raise ParseError("each primitive must be a mapping", path=source)
        kind = item.get("type")
        if kind not in _PRIM_KEYS:
            raise ParseError(f"key 'type' must be one of {sorted(_PRIM_KEYS)}, got {kind!r}", path=source)
        extra = set(item) - _PRIM_KEYS[kind]
        if extra:
            raise ParseError(f"unknown key {sorted(extra)[0]!r} for {kind}", path=source)
        for key in ("id", "tag"):
            if key not in item:
                raise ParseError(f"primitive missing key {key!r}", path=source)
        if item["tag"] not in TAGS:
            raise ParseError(f"key 'tag' must be one of {TAGS}, got {item['tag']!r}", path=source)
        sid = int(item["id"])
        if sid in seen:
            raise ParseError(f"key 'id' duplicated: {sid}", path=source)
        seen.add(sid)
        tag = item["tag"]
        if kind == "plane":
            prims.append(Plane(sid, tag, _vec(item, "point", 3, source), _vec(item, "normal", 3, source)))
        elif kind == "rect":
            he = _vec(item, "half_extents", 2, source)
            if min(he) <= 0:
                raise ParseError("key 'half_extents' must be positive", path=source)
            prims.append(
                Rect(sid, tag, _vec(item, "center", 3, source), _vec(item, "u", 3, source), _vec(item, "v", 3, source), he)
            )
        else:
            lo, hi = _vec(item, "min", 3, source), _vec(item, "max", 3, source)
            if any(h <= lo_ for lo_, h in zip(lo, hi)):
                raise ParseError("key 'max' must exceed 'min' on every axis", path=source)
            prims.append(Box(sid, tag, lo, hi))
    traj = data.get("trajectory")
    if traj is not None:
        trajectory_from_dict(traj, source)
    return World(prims, str(data.get("name", "world")), _pose_from_dict(data.get("mount"), source, "mount"), traj)


def trajectory_from_dict(d: dict, source=None) -> list[RigidTransform]:
    """``{type: line, start: [x, y], end: [x, y], n: int, z: float}`` or
    ``{type: racetrack, lx, ly, corner_radius, n, corner_speed_ratio, z}``."""
    if not isinstance(d, dict) or d.get("type") not in ("line", "racetrack"):
        raise ParseError("key 'trajectory.type' must be 'line' or 'racetrack'", path=source)
    try:
        if d["type"] == "line":
            return line_waypoints(d["start"], d["end"], int(d["n"]), float(d.get("z", 0.0)))
        return racetrack_waypoints(
            float(d["lx"]),
            float(d["ly"]),
            float(d["corner_radius"]),
            int(d["n"]),
            float(d.get("corner_speed_ratio", 0.35)),
            float(d.get("z", 0.0)),
        )
    except KeyError as exc:
        raise ParseError(f"trajectory missing key {exc.args[0]!r}", path=source) from None


def world_to_dict(world: World) -> dict:
    prims = []
    for p in world.primitives:
        if isinstance(p, Plane):
            prims.append({"type": "plane", "id": p.surface_id, "tag": p.tag, "point": list(p.point), "normal": list(p.normal)})
        elif isinstance(p, Rect):
            prims.append(
                {
                    "type": "rect",
                    "id": p.surface_id,
                    "tag": p.tag,
                    "center": list(p.center),
                    "u": list(p.u),
                    "v": list(p.v),
                    "half_extents": list(p.half_extents),
                }
            )
        else:
            prims.append({"type": "box", "id": p.surface_id, "tag": p.tag, "min": list(p.min), "max": list(p.max)})
    out = {
        "name": world.name,
        "mount": {"t": [float(v) for v in world.mount.translation], "rpy_deg": [float(math.degrees(v)) for v in world.mount.rpy]},
        "primitives": prims,
    }
    if world.trajectory is not None:
        out["trajectory"] = world.trajectory
    return out


SCENES = ("flat_ground", "two_slopes", "corridor_with_ceiling", "lobby", "tilted_mount_corridor", "corridor_loop")


def load_world(spec: str | Path) -> World:
    """Load a packaged scene by name or a scene YAML file by path."""
    if str(spec) in SCENES:
        text = resources.files("lidarodom").joinpath("scenes", f"{spec}.yaml").read_text()
        source = f"<scene {spec}>"
    else:
        path = Path(spec)
        text = path.read_text()
        source = path
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}", path=source) from None
    return world_from_dict(data, source)


def world_trajectory(world: World) -> list[RigidTransform]:
    if world.trajectory is None:
        raise ValueError(f"world {world.name!r} has no trajectory section")
    return trajectory_from_dict(world.trajectory)


def truth_ground_mask(image, truth: ScanTruth) -> np.ndarray:
    """Ground truth aligned to a range image projected from ``truth.cloud``."""
    mask = np.zeros(image.shape, dtype=bool)
    v = image.valid
    mask[v] = truth.is_ground[image.index[v]]
    return mask
