"""Keyframe feature map and scan-to-map pose refinement."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from lidarodom.errors import InsufficientConstraintsError
from lidarodom.feature import FeaturePoints, FeatureSet, voxel_downsample
from lidarodom.register import MatchParams, estimate_motion
from lidarodom.transform import RigidTransform


@dataclass(frozen=True)
class MapParams:
    voxel_size_m: float = 0.2
    keyframe_translation_m: float = 0.3
    keyframe_rotation_deg: float = 5.0
    search_radius_m: float = 30.0


@dataclass
class MapLayer:
    """World-frame points of one feature kind with their source keyframe ids."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    keyframe: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    ground: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.points)

    def take(self, idx) -> MapLayer:
        return MapLayer(self.points[idx], self.keyframe[idx], self.ground[idx], self.rows[idx])

    def extended(self, pts: FeaturePoints, world: np.ndarray, kf: int, voxel: float, pin=None) -> MapLayer:
        """Append ``world`` and re-thin; new points flagged in ``pin`` survive this thinning."""
        merged = MapLayer(
            np.concatenate([self.points, world]),
            np.concatenate([self.keyframe, np.full(len(world), kf, dtype=np.int64)]),
            np.concatenate([self.ground, pts.ground]),
            np.concatenate([self.rows, pts.rows]),
        )
        keep = np.zeros(len(merged), dtype=bool)
        keep[voxel_downsample(merged.points, voxel)] = True
        if pin is not None:
            keep[len(self) :] |= pin
        return merged.take(np.flatnonzero(keep))

    def as_feature_points(self, idx) -> FeaturePoints:
        n = len(idx)
        return FeaturePoints(self.points[idx], self.rows[idx], np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64), self.ground[idx])


@dataclass
class FeatureMap:
    """Voxel-thinned world-frame edge and planar points.

    At most one point per voxel and kind, plus the selected features of the
    newest keyframe.
    """

    voxel_size_m: float = 0.2
    edges: MapLayer = field(default_factory=MapLayer)
    planars: MapLayer = field(default_factory=MapLayer)
    n_keyframes: int = 0

    def __len__(self):
        return len(self.edges) + len(self.planars)

    def neighborhood(self, center, radius_m: float) -> FeatureSet:
        """Map points within ``radius_m`` of ``center`` as a target feature set."""
        c = np.asarray(center, dtype=float)
        ie = np.flatnonzero(np.linalg.norm(self.edges.points - c, axis=1) <= radius_m)
        ip = np.flatnonzero(np.linalg.norm(self.planars.points - c, axis=1) <= radius_m)
        return FeatureSet(self.edges.as_feature_points(ie), self.planars.as_feature_points(ip))

    def to_pcd(self, path) -> None:
        """ASCII PCD with fields x y z kind (0 edge, 1 planar) keyframe."""
        pts = np.concatenate([self.edges.points, self.planars.points])
        kind = np.concatenate([np.zeros(len(self.edges), dtype=int), np.ones(len(self.planars), dtype=int)])
        kf = np.concatenate([self.edges.keyframe, self.planars.keyframe])
        with open(path, "w") as f:
            f.write("# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z kind keyframe\n")
            f.write(f"SIZE 4 4 4 4 4\nTYPE F F F I I\nCOUNT 1 1 1 1 1\nWIDTH {len(pts)}\nHEIGHT 1\n")
            f.write(f"VIEWPOINT 0 0 0 1 0 0 0\nPOINTS {len(pts)}\nDATA ascii\n")
            for p, k, i in zip(pts, kind, kf):
                f.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {k} {i}\n")


def insert_keyframe(fmap: FeatureMap, pose: RigidTransform, features: FeatureSet) -> FeatureMap:
    """New map with ``features`` (their target pools) added in the world frame and re-thinned.

    The newest keyframe's selected features are kept through its own
    thinning pass, so a scan refined against the map it just entered sits
    at a fixed point.  The next insertion thins them like any other point,
    which keeps the map bounded.
    """
    kf = fmap.n_keyframes
    e, p = features.map_edge_targets(), features.planar_targets()
    return FeatureMap(
        fmap.voxel_size_m,
        fmap.edges.extended(e, pose.apply(e.points), kf, fmap.voxel_size_m, _selected(e, features.edges)),
        fmap.planars.extended(p, pose.apply(p.points), kf, fmap.voxel_size_m, _selected(p, features.planars)),
        kf + 1,
    )


def _selected(pool: FeaturePoints, sel: FeaturePoints) -> np.ndarray:
    cells = set(zip(sel.rows.tolist(), sel.cols.tolist()))
    return np.array([rc in cells for rc in zip(pool.rows.tolist(), pool.cols.tolist())], dtype=bool)


def is_keyframe(last: RigidTransform | None, pose: RigidTransform, params: MapParams = MapParams()) -> bool:
    if last is None:
        return True
    d = last.inverse() @ pose
    return d.translation_norm() > params.keyframe_translation_m or np.degrees(d.rotation_angle()) > params.keyframe_rotation_deg


@dataclass
class RefineResult:
    pose: RigidTransform
    warning: bool
    converged: bool = False
    residual_rms: float = float("nan")
    message: str = ""


def refine_against_map(
    pose: RigidTransform,
    features: FeatureSet,
    fmap: FeatureMap,
    params: MatchParams = MatchParams(),
    search_radius_m: float = MapParams.search_radius_m,
) -> RefineResult:
    """Re-run the two-step estimate against the map around ``pose``.

    Cluster labels do not carry across scans, so map matching pairs
    features by kind only.  When a step lacks constraints the input pose is
    returned with ``warning`` set.
    """
    local = fmap.neighborhood(pose.translation, search_radius_m)
    if len(local.edges) == 0 and len(local.planars) == 0:
        return RefineResult(pose, True, message="empty map neighborhood")
    try:
        res = estimate_motion(features, local, pose, replace(params, match_labels=False))
    except InsufficientConstraintsError as exc:
        return RefineResult(pose, True, message=str(exc))
    return RefineResult(res.transform, False, res.converged, res.residual_rms)
