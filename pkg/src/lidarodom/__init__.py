"""LiDAR odometry with cluster-based ground extraction.

The processing chain for one sweep is::

    project -> extract_ground_clustered -> segment_points -> select_features
            -> estimate_motion -> refine_against_map

Every stage is a pure function over numpy-backed dataclasses, so stages can be
exercised in isolation against the synthetic scan generator in :mod:`lidarodom.synth`.
"""

from lidarodom.errors import (
    DegeneratePlaneError,
    InsufficientConstraintsError,
    InvalidInputError,
    LidarOdomError,
    ParseError,
)
from lidarodom.lidar_model import HDL64E, VLP16, PointCloud, RangeImage, SensorModel, project
from lidarodom.transform import RigidTransform

__all__ = [
    "DegeneratePlaneError",
    "HDL64E",
    "InsufficientConstraintsError",
    "InvalidInputError",
    "LidarOdomError",
    "ParseError",
    "PointCloud",
    "RangeImage",
    "RigidTransform",
    "SensorModel",
    "VLP16",
    "project",
]

__version__ = "0.1.0"
