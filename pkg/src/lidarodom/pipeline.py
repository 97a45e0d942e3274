"""Sequential odometry: projection, ground, segmentation, features, registration, mapping."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from lidarodom.errors import InsufficientConstraintsError, InvalidInputError
from lidarodom.feature import FeatureParams, FeatureSet, select_features
from lidarodom.ground import (
    GpfParams,
    GroundParams,
    extract_ground_clustered,
    extract_ground_gpf_image,
    extract_ground_lego,
)
from lidarodom.lidar_model import VLP16, PointCloud, SensorModel, project
from lidarodom.mapping import FeatureMap, MapParams, insert_keyframe, is_keyframe, refine_against_map
from lidarodom.register import MatchParams, estimate_motion
from lidarodom.segment import segment_points
from lidarodom.transform import RigidTransform

GROUND_METHODS = ("clustered", "lego", "gpf")
STAGES = ("project", "ground", "segment", "feature", "register", "mapping")


@dataclass(frozen=True)
class SegmentParams:
    min_cluster_size: int = 30
    angle_threshold_deg: float = 60.0


@dataclass(frozen=True)
class PipelineConfig:
    sensor: SensorModel = VLP16
    ground_method: str = "clustered"
    ground: GroundParams = GroundParams()
    lego_angle_threshold_deg: float = 10.0
    gpf: GpfParams = GpfParams()
    segment: SegmentParams = SegmentParams()
    feature: FeatureParams = FeatureParams()
    match: MatchParams = MatchParams()
    mapping: MapParams = MapParams()
    use_map: bool = True

    def __post_init__(self):
        if self.ground_method not in GROUND_METHODS:
            raise InvalidInputError(f"ground method must be one of {GROUND_METHODS}, got {self.ground_method!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sensor"] = self.sensor.to_dict()
        return d


def config_from_dict(d: dict, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    """Overlay a nested mapping (as produced by :meth:`PipelineConfig.to_dict`) on ``base``."""
    from lidarodom.lidar_model import sensor_from_dict

    kwargs = {}
    for key, value in d.items():
        if not hasattr(base, key):
            raise InvalidInputError(f"unknown config key {key!r}")
        current = getattr(base, key)
        if key == "sensor":
            kwargs[key] = value if isinstance(value, SensorModel) else sensor_from_dict({**current.to_dict(), **value})
        elif dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise InvalidInputError(f"config key {key!r} expects a mapping")
            names = {f.name for f in dataclasses.fields(current)}
            bad = sorted(set(value) - names)
            if bad:
                raise InvalidInputError(f"unknown config key {key}.{bad[0]}")
            kwargs[key] = dataclasses.replace(current, **value)
        else:
            kwargs[key] = value
    return dataclasses.replace(base, **kwargs)


@dataclass
class FrameResult:
    pose: RigidTransform
    timings: dict[str, float]
    n_edges: int
    n_planars: int
    odometry_fallback: bool
    map_warning: bool
    keyframe: bool


@dataclass
class Odometry:
    """Stateful scan-by-scan pipeline.

    The world frame is the sensor frame of the first scan.  Each new scan is
    registered to the previous one starting from the last inter-frame motion;
    the resulting pose is then refined against the keyframe map, and the
    refinement replaces the pose when it succeeds.
    """

    config: PipelineConfig = field(default_factory=PipelineConfig)
    poses: list[RigidTransform] = field(default_factory=list)
    frames: list[FrameResult] = field(default_factory=list)
    fmap: FeatureMap = None
    prev_features: FeatureSet | None = None
    last_delta: RigidTransform = field(default_factory=RigidTransform.identity)
    last_keyframe: RigidTransform | None = None
    n_odometry_fallbacks: int = 0
    n_map_warnings: int = 0

    def __post_init__(self):
        if self.fmap is None:
            self.fmap = FeatureMap(self.config.mapping.voxel_size_m)

    def ground_mask(self, image) -> np.ndarray:
        cfg = self.config
        if cfg.ground_method == "clustered":
            return extract_ground_clustered(image, cfg.ground)
        if cfg.ground_method == "lego":
            return extract_ground_lego(image, cfg.lego_angle_threshold_deg)
        return extract_ground_gpf_image(image, cfg.gpf)

    def features(self, cloud: PointCloud, timings: dict) -> FeatureSet:
        cfg = self.config
        t0 = time.perf_counter()
        image = project(cloud, cfg.sensor)
        t1 = time.perf_counter()
        ground = self.ground_mask(image)
        t2 = time.perf_counter()
        seg = segment_points(image, ground, cfg.segment.min_cluster_size, cfg.segment.angle_threshold_deg)
        t3 = time.perf_counter()
        feats = select_features(image, seg, ground, cfg.feature)
        t4 = time.perf_counter()
        timings.update(project=t1 - t0, ground=t2 - t1, segment=t3 - t2, feature=t4 - t3)
        return feats

    def process(self, cloud: PointCloud) -> RigidTransform:
        cfg = self.config
        timings: dict[str, float] = {}
        feats = self.features(cloud, timings)
        fallback = map_warning = False
        empty = len(feats.edges) + len(feats.planars) == 0
        t0 = time.perf_counter()
        if self.prev_features is None:
            pose = RigidTransform.identity()
        else:
            delta = None
            if not empty:
                try:
                    delta = estimate_motion(feats, self.prev_features, self.last_delta, cfg.match).transform
                except InsufficientConstraintsError:
                    pass
            if delta is None:
                delta = self.last_delta
                fallback = True
                self.n_odometry_fallbacks += 1
            pose = self.poses[-1] @ delta
        t1 = time.perf_counter()
        if cfg.use_map and empty and self.prev_features is not None:
            map_warning = True
            self.n_map_warnings += 1
        elif cfg.use_map and len(self.fmap) and self.prev_features is not None:
            refined = refine_against_map(pose, feats, self.fmap, cfg.match, cfg.mapping.search_radius_m)
            map_warning = refined.warning
            self.n_map_warnings += int(map_warning)
            pose = refined.pose
        keyframe = cfg.use_map and is_keyframe(self.last_keyframe, pose, cfg.mapping)
        if keyframe:
            self.fmap = insert_keyframe(self.fmap, pose, feats)
            self.last_keyframe = pose
        t2 = time.perf_counter()
        timings.update(register=t1 - t0, mapping=t2 - t1)
        if self.poses:
            self.last_delta = self.poses[-1].inverse() @ pose
        self.poses.append(pose)
        self.prev_features = feats
        self.frames.append(
            FrameResult(pose, timings, len(feats.edges), len(feats.planars), fallback, map_warning, keyframe)
        )
        return pose
