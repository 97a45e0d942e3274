"""Range-image segmentation of non-ground cells into object clusters.

Two 4-neighbors (azimuth wraps) connect when the angle between the farther
return and the segment joining both returns is large::

    beta = atan2(d2 * sin(alpha), d1 - d2 * cos(alpha)) > angle_threshold_deg

with ``d1 >= d2`` the two ranges and ``alpha`` the angular step between the
cells (column step for same-ring neighbors, ring step for same-column ones).
Components smaller than ``min_cluster_size`` are discarded.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from lidarodom.lidar_model import RangeImage, grid_components

LABEL_INVALID = -3
LABEL_DISCARDED = -2
LABEL_GROUND = -1


@dataclass
class SegmentationResult:
    """``labels``: cluster id >= 1, or one of ``LABEL_GROUND``, ``LABEL_DISCARDED``, ``LABEL_INVALID``."""

    labels: np.ndarray
    cluster_sizes: dict[int, int]

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    @property
    def clustered(self) -> np.ndarray:
        return self.labels >= 1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["row", "col", "label"])
            for (i, j), lab in np.ndenumerate(self.labels):
                w.writerow([i, j, int(lab)])


def beta_angles(d_a: np.ndarray, d_b: np.ndarray, alpha_rad: float) -> np.ndarray:
    """Connection angle in degrees for ranges ``d_a``, ``d_b`` separated by ``alpha_rad``."""
    d1 = np.maximum(d_a, d_b)
    d2 = np.minimum(d_a, d_b)
    return np.degrees(np.arctan2(d2 * math.sin(alpha_rad), d1 - d2 * math.cos(alpha_rad)))


def segment_links(image: RangeImage, eligible: np.ndarray, angle_threshold_deg: float):
    """``(up, right)`` link predicates, same layout as :func:`lidarodom.ground.neighbor_links`."""
    r = image.range
    a_row = math.radians(image.sensor.row_resolution_deg)
    a_col = math.radians(image.sensor.col_resolution_deg)
    with np.errstate(invalid="ignore"):
        up = eligible[:-1] & eligible[1:] & (beta_angles(r[:-1], r[1:], a_row) > angle_threshold_deg)
        r_next = np.roll(r, -1, axis=1)
        right = eligible & np.roll(eligible, -1, axis=1) & (beta_angles(r, r_next, a_col) > angle_threshold_deg)
    return up, right


def segment_points(
    image: RangeImage,
    ground: np.ndarray,
    min_cluster_size: int = 30,
    angle_threshold_deg: float = 60.0,
) -> SegmentationResult:
    """Label connected non-ground cells; ids are dense ``1..K`` in row-major order of each
    cluster's first cell."""
    ground = np.asarray(ground, dtype=bool)
    if ground.shape != image.shape:
        raise ValueError(f"ground mask shape {ground.shape} != image shape {image.shape}")
    rows, cols = image.shape
    eligible = image.valid & ~ground
    labels = np.full((rows, cols), LABEL_INVALID, dtype=np.int64)
    labels[image.valid & ground] = LABEL_GROUND
    labels[eligible] = LABEL_DISCARDED
    if not eligible.any():
        return SegmentationResult(labels, {})
    up, right = segment_links(image, eligible, angle_threshold_deg)
    comp = grid_components(up, right).reshape(-1)
    flat_elig = eligible.reshape(-1)
    sizes = np.bincount(comp[flat_elig], minlength=rows * cols)
    cells = np.flatnonzero(flat_elig)
    big = sizes[comp[cells]] >= min_cluster_size
    cells = cells[big]
    # first occurrence in row-major order fixes the id order
    uniq, first = np.unique(comp[cells], return_index=True)
    order = np.argsort(cells[first], kind="stable")
    new_id = np.zeros(rows * cols, dtype=np.int64)
    new_id[uniq[order]] = np.arange(1, len(uniq) + 1)
    out = labels.reshape(-1)
    out[cells] = new_id[comp[cells]]
    cluster_sizes = {int(new_id[c]): int(sizes[c]) for c in uniq}
    return SegmentationResult(out.reshape(rows, cols), dict(sorted(cluster_sizes.items())))
