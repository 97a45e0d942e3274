"""Sensor geometry and projection of point clouds into organized range images.

Conventions: row 0 is the lowest ring; azimuth 0 lies on the sensor +x axis and
grows counter-clockwise seen from above, so column ``j`` covers azimuths
``[j, j+1) * 360 / n_cols`` degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from lidarodom.errors import InvalidInputError, ParseError

UNASSIGNED = -1


@dataclass(frozen=True)
class SensorModel:
    n_rows: int
    n_cols: int
    vertical_fov_min_deg: float
    vertical_fov_max_deg: float
    min_range_m: float
    max_range_m: float
    ground_scan_rows: int

    def __post_init__(self):
        if self.n_rows < 2:
            raise InvalidInputError(f"n_rows must be >= 2, got {self.n_rows}")
        if self.n_cols < 4:
            raise InvalidInputError(f"n_cols must be >= 4, got {self.n_cols}")
        if not self.vertical_fov_min_deg < self.vertical_fov_max_deg:
            raise InvalidInputError("vertical_fov_min_deg must be < vertical_fov_max_deg")
        if not 1 <= self.ground_scan_rows <= self.n_rows:
            raise InvalidInputError(f"ground_scan_rows must be in [1, {self.n_rows}]")
        if not 0 <= self.min_range_m < self.max_range_m:
            raise InvalidInputError("need 0 <= min_range_m < max_range_m")

    @property
    def row_resolution_deg(self) -> float:
        return (self.vertical_fov_max_deg - self.vertical_fov_min_deg) / (self.n_rows - 1)

    @property
    def col_resolution_deg(self) -> float:
        return 360.0 / self.n_cols

    def row_elevations_deg(self) -> np.ndarray:
        return self.vertical_fov_min_deg + self.row_resolution_deg * np.arange(self.n_rows)

    def col_azimuths_deg(self) -> np.ndarray:
        """Bin-center azimuth of each column."""
        return (np.arange(self.n_cols) + 0.5) * self.col_resolution_deg

    def beam_directions(self) -> np.ndarray:
        """Unit beam directions, shape ``(n_rows, n_cols, 3)``."""
        el = np.radians(self.row_elevations_deg())[:, None]
        az = np.radians(self.col_azimuths_deg())[None, :]
        return np.stack(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.broadcast_to(np.sin(el), (self.n_rows, self.n_cols))],
            axis=-1,
        )

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "fov_min_deg": self.vertical_fov_min_deg,
            "fov_max_deg": self.vertical_fov_max_deg,
            "min_range_m": self.min_range_m,
            "max_range_m": self.max_range_m,
            "ground_scan_rows": self.ground_scan_rows,
        }


# Velodyne VLP-16: 16 rings over +-15 deg, 0.2 deg azimuth steps at 10 Hz.
VLP16 = SensorModel(16, 1800, -15.0, 15.0, 0.4, 100.0, 4)
# HDL-64E: 26.9 deg vertical FOV; rings approximated as uniformly spaced.
HDL64E = SensorModel(64, 1800, -24.9, 2.0, 0.9, 120.0, 16)

PRESETS = {"vlp16": VLP16, "hdl64e": HDL64E}

_CONFIG_KEYS = {
    "n_rows": ("n_rows", int),
    "n_cols": ("n_cols", int),
    "fov_min_deg": ("vertical_fov_min_deg", float),
    "fov_max_deg": ("vertical_fov_max_deg", float),
    "min_range_m": ("min_range_m", float),
    "max_range_m": ("max_range_m", float),
    "ground_scan_rows": ("ground_scan_rows", int),
}


def sensor_from_dict(d: dict, source=None) -> SensorModel:
    """Build a sensor from config keys; ``preset`` supplies defaults for missing keys."""
    d = dict(d)
    base = d.pop("preset", None)
    kwargs = {}
    if base is not None:
        if base not in PRESETS:
            raise ParseError(f"unknown sensor preset {base!r}", path=source)
        kwargs = {f.name: getattr(PRESETS[base], f.name) for f in fields(SensorModel)}
    for key, value in d.items():
        if key not in _CONFIG_KEYS:
            raise ParseError(f"unknown sensor key {key!r}", path=source)
        name, cast = _CONFIG_KEYS[key]
        try:
            kwargs[name] = cast(value)
        except (TypeError, ValueError):
            raise ParseError(f"bad value for key {key!r}: {value!r}", path=source) from None
    missing = [k for k, (name, _) in _CONFIG_KEYS.items() if name not in kwargs]
    if missing:
        raise ParseError(f"missing sensor key {missing[0]!r}", path=source)
    try:
        return SensorModel(**kwargs)
    except InvalidInputError as exc:
        raise ParseError(str(exc), path=source) from None


def load_sensor(spec: str | Path) -> SensorModel:
    """Load a sensor from a preset name (``vlp16``, ``hdl64e``) or a key-value YAML file."""
    if str(spec).lower() in PRESETS:
        return PRESETS[str(spec).lower()]
    path = Path(spec)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}", path=path) from None
    if not isinstance(data, dict):
        raise ParseError("sensor config must be a mapping", path=path)
    return sensor_from_dict(data, source=path)


@dataclass
class PointCloud:
    """Points in the sensor frame with optional ring index and intensity."""

    points: np.ndarray
    ring: np.ndarray | None = None
    intensity: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise InvalidInputError("point coordinates must be finite")
        n = len(self.points)
        if self.ring is not None:
            self.ring = np.asarray(self.ring, dtype=np.int64).reshape(-1)
            if len(self.ring) != n:
                raise InvalidInputError("ring length does not match points")
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=float).reshape(-1)
            if len(self.intensity) != n:
                raise InvalidInputError("intensity length does not match points")

    def __len__(self):
        return len(self.points)


@dataclass
class RangeImage:
    """Organized sweep. Invalid cells hold range 0, point (0,0,0) and index -1.

    ``index`` maps each valid cell back to its row in the source cloud.
    """

    sensor: SensorModel
    range: np.ndarray
    points: np.ndarray
    valid: np.ndarray
    index: np.ndarray
    ground: np.ndarray = field(default=None)
    label: np.ndarray = field(default=None)

    def __post_init__(self):
        shape = (self.sensor.n_rows, self.sensor.n_cols)
        if self.ground is None:
            self.ground = np.zeros(shape, dtype=bool)
        if self.label is None:
            self.label = np.full(shape, UNASSIGNED, dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    @classmethod
    def empty(cls, sensor: SensorModel) -> RangeImage:
        shape = (sensor.n_rows, sensor.n_cols)
        return cls(
            sensor,
            np.zeros(shape),
            np.zeros(shape + (3,)),
            np.zeros(shape, dtype=bool),
            np.full(shape, -1, dtype=np.int64),
        )

    def with_masks(self, ground=None, label=None) -> RangeImage:
        return replace(
            self,
            ground=self.ground if ground is None else np.asarray(ground, dtype=bool) & self.valid,
            label=self.label if label is None else np.asarray(label),
        )


def _check_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("point must be finite")
    return p


def vertical_angle(point) -> float:
    """Elevation of ``point`` above the sensor horizontal plane, degrees."""
    x, y, z = _check_point(point)
    if x == 0.0 and y == 0.0 and z == 0.0:
        raise InvalidInputError("vertical angle of the zero vector is undefined")
    return math.degrees(math.atan2(z, math.hypot(x, y)))


def neighbor_vertical_angle(a, b) -> float:
    """Inclination of segment ``ab`` against the horizontal plane, degrees in [0, 90]."""
    a, b = _check_point(a), _check_point(b)
    d = b - a
    if not np.any(d):
        raise InvalidInputError("coincident points have no vertical angle")
    return math.degrees(math.atan2(abs(d[2]), math.hypot(d[0], d[1])))


def pair_vertical_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized :func:`neighbor_vertical_angle` over ``(..., 3)`` arrays; coincident pairs give 0."""
    d = b - a
    return np.degrees(np.arctan2(np.abs(d[..., 2]), np.hypot(d[..., 0], d[..., 1])))


def cell_indices(points: np.ndarray, sensor: SensorModel, ring: np.ndarray | None = None):
    """Row and column of each point (no range gating)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if ring is not None:
        rows = np.asarray(ring, dtype=np.int64)
    else:
        elev = np.degrees(np.arctan2(pts[:, 2], np.hypot(pts[:, 0], pts[:, 1])))
        rows = np.rint((elev - sensor.vertical_fov_min_deg) / sensor.row_resolution_deg).astype(np.int64)
        rows = np.clip(rows, 0, sensor.n_rows - 1)
    az = np.degrees(np.arctan2(pts[:, 1], pts[:, 0])) % 360.0
    cols = np.floor(az / 360.0 * sensor.n_cols).astype(np.int64)
    cols[cols >= sensor.n_cols] = 0
    return rows, cols


def project(cloud: PointCloud, sensor: SensorModel) -> RangeImage:
    """Bin a cloud into a range image; the nearer point wins each cell.

    Points outside ``[min_range_m, max_range_m]`` are dropped, as are points whose
    ring index lies outside ``[0, n_rows)``.
    """
    if len(cloud) == 0:
        raise InvalidInputError("cannot project an empty cloud")
    img = RangeImage.empty(sensor)
    pts = cloud.points
    r = np.linalg.norm(pts, axis=1)
    keep = (r >= sensor.min_range_m) & (r <= sensor.max_range_m)
    rows, cols = cell_indices(pts, sensor, cloud.ring)
    keep &= (rows >= 0) & (rows < sensor.n_rows)
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        return img
    flat = rows[idx] * sensor.n_cols + cols[idx]
    order = np.lexsort((idx, r[idx], flat))
    flat_sorted = flat[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    winners = idx[order[first]]
    cells = flat_sorted[first]
    img.range.reshape(-1)[cells] = r[winners]
    img.points.reshape(-1, 3)[cells] = pts[winners]
    img.valid.reshape(-1)[cells] = True
    img.index.reshape(-1)[cells] = winners
    return img


def grid_components(up: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Connected-component labels of a rows x cols grid graph.

    ``up[i, j]`` joins ``(i, j)`` and ``(i+1, j)``; ``right[i, j]`` joins ``(i, j)``
    and ``(i, (j+1) % cols)``.  Isolated cells get their own label.
    """
    rows, cols = right.shape
    n = rows * cols
    ids = np.arange(n).reshape(rows, cols)
    a = np.concatenate([ids[:-1][up], ids[right]])
    b = np.concatenate([ids[1:][up], np.roll(ids, -1, axis=1)[right]])
    graph = coo_matrix((np.ones(len(a), dtype=np.int8), (a, b)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels.reshape(rows, cols)
