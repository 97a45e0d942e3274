"""Ground extraction on range images.

Three extractors share the :class:`GroundMask` output (a boolean rows x cols grid):

* :func:`extract_ground_clustered` -- breadth-first clustering grown from the
  lowest rings; clusters reaching ``size_threshold`` cells are ground.
* :func:`extract_ground_lego` -- per-column test of adjacent ring pairs in the
  lower half of the image.
* :func:`extract_ground_gpf` -- iterative plane fit seeded by the lowest points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lidarodom.errors import DegeneratePlaneError, InvalidInputError
from lidarodom.lidar_model import PointCloud, RangeImage, grid_components, pair_vertical_angles

GroundMask = np.ndarray


@dataclass(frozen=True)
class GroundParams:
    """Thresholds for :func:`extract_ground_clustered`.

    ``seed_rows=None`` takes the sensor's ``ground_scan_rows``.

    ``vertical_consistency`` restricts cluster growth to locally flat cells:
    cells with at least one valid same-column neighbor, all of whose valid
    same-column neighbors pass the angle test.  Without it, clusters run along
    the near-horizontal rings that low beams trace on walls, and the low wall
    band next to the floor joins the ground.
    """

    angle_threshold_deg: float = 10.0
    size_threshold: int = 100
    seed_rows: int | None = None
    vertical_consistency: bool = True

    def __post_init__(self):
        if not 0.0 < self.angle_threshold_deg < 90.0:
            raise InvalidInputError("angle_threshold_deg must be in (0, 90)")
        if self.size_threshold < 1:
            raise InvalidInputError("size_threshold must be >= 1")
        if self.seed_rows is not None and self.seed_rows < 1:
            raise InvalidInputError("seed_rows must be >= 1")


@dataclass(frozen=True)
class GpfParams:
    n_lpr: int = 20
    n_iterations: int = 3
    seed_height_threshold_m: float = 0.4
    distance_threshold_m: float = 0.2

    def __post_init__(self):
        if min(self.n_lpr, self.n_iterations) < 1 or min(self.seed_height_threshold_m, self.distance_threshold_m) <= 0:
            raise InvalidInputError("GPF parameters must be positive")


def neighbor_links(image: RangeImage, angle_threshold_deg: float):
    """Flat-link predicates between 4-neighbors.

    Returns ``(up, right)``: ``up[i, j]`` links ``(i, j)``-``(i+1, j)`` (shape
    ``(rows-1, cols)``) and ``right[i, j]`` links ``(i, j)``-``(i, (j+1) % cols)``.
    A link needs both cells valid and a vertical angle below the threshold.
    """
    pts, valid = image.points, image.valid
    up = valid[:-1] & valid[1:] & (pair_vertical_angles(pts[:-1], pts[1:]) < angle_threshold_deg)
    nxt = np.roll(pts, -1, axis=1)
    right = valid & np.roll(valid, -1, axis=1) & (pair_vertical_angles(pts, nxt) < angle_threshold_deg)
    return up, right


def locally_flat(image: RangeImage, up: np.ndarray) -> np.ndarray:
    """Cells with >= 1 valid same-column neighbor whose every valid same-column link is flat."""
    valid = image.valid
    both = valid[:-1] & valid[1:]
    steep = both & ~up
    has_flat = np.zeros(valid.shape, dtype=bool)
    has_flat[:-1] |= up
    has_flat[1:] |= up
    has_steep = np.zeros(valid.shape, dtype=bool)
    has_steep[:-1] |= steep
    has_steep[1:] |= steep
    return has_flat & ~has_steep


def extract_ground_clustered(image: RangeImage, params: GroundParams = GroundParams()) -> GroundMask:
    """Cluster-based ground extraction.

    Every valid cell of the lowest ``seed_rows`` rings seeds a breadth-first
    cluster that grows across 4-neighbors (azimuth wraps around) whose pairwise
    vertical angle is below ``angle_threshold_deg``.  Clusters are disjoint and
    a cluster with at least ``size_threshold`` cells, seed included, is ground.

    Because the link predicate is symmetric, the breadth-first cluster of a
    seed is exactly the connected component containing it, so components are
    labeled in one pass and the seed rows select which of them to keep.
    """
    rows, cols = image.shape
    seed_rows = params.seed_rows if params.seed_rows is not None else image.sensor.ground_scan_rows
    if seed_rows > rows:
        raise InvalidInputError(f"seed_rows={seed_rows} exceeds image rows={rows}")
    mask = np.zeros((rows, cols), dtype=bool)
    if not image.valid.any():
        return mask
    up, right = neighbor_links(image, params.angle_threshold_deg)
    if params.vertical_consistency:
        flat = locally_flat(image, up)
        up = up & flat[:-1] & flat[1:]
        right = right & flat & np.roll(flat, -1, axis=1)
    labels = grid_components(up, right)
    seeds = labels[:seed_rows][image.valid[:seed_rows]]
    if len(seeds) == 0:
        return mask
    sizes = np.bincount(labels[image.valid], minlength=rows * cols)
    keep = np.zeros(rows * cols, dtype=bool)
    seed_labels = np.unique(seeds)
    keep[seed_labels[sizes[seed_labels] >= params.size_threshold]] = True
    return keep[labels] & image.valid


def lego_pair_rows(n_rows: int) -> int:
    """Number of lower ring pairs tested by the row-wise baseline (7 for a 16-ring sensor)."""
    return max(1, n_rows // 2 - 1)


def extract_ground_lego(image: RangeImage, angle_threshold_deg: float = 10.0) -> GroundMask:
    """Mark both cells of each same-column ring pair ``(i, i+1)``, ``i < n_rows // 2 - 1``,
    whose vertical angle is below the threshold."""
    rows, cols = image.shape
    k = min(lego_pair_rows(rows), rows - 1)
    pts, valid = image.points, image.valid
    flat = valid[:k] & valid[1 : k + 1] & (pair_vertical_angles(pts[:k], pts[1 : k + 1]) < angle_threshold_deg)
    mask = np.zeros((rows, cols), dtype=bool)
    mask[:k] |= flat
    mask[1 : k + 1] |= flat
    return mask


def fit_plane(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares plane ``n . p = d`` with unit normal from the smallest covariance eigenvector."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise DegeneratePlaneError(f"need >= 3 points for a plane, got {len(pts)}")
    centroid = pts.mean(axis=0)
    cov = np.cov((pts - centroid).T, bias=True)
    evals, evecs = np.linalg.eigh(cov)
    scale = max(evals[2], 1e-300)
    if evals[1] <= 1e-12 * scale or evals[2] <= 0.0:
        raise DegeneratePlaneError("seed points are collinear (covariance rank < 2)")
    normal = evecs[:, 0]
    return normal, float(normal @ centroid)


def extract_ground_gpf(cloud: PointCloud | np.ndarray, params: GpfParams = GpfParams()) -> np.ndarray:
    """Ground plane fitting seeded with the lowest point representative.

    Seeds are points below ``LPR height + seed_height_threshold_m``, where the
    LPR height is the mean z of the ``n_lpr`` lowest points.  Each iteration
    refits the plane to the current ground set and relabels every point closer
    than ``distance_threshold_m``.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(pts) < params.n_lpr:
        raise InvalidInputError(f"cloud has {len(pts)} points, fewer than n_lpr={params.n_lpr}")
    z = pts[:, 2]
    lpr = np.sort(z)[: params.n_lpr].mean()
    ground = z < lpr + params.seed_height_threshold_m
    for _ in range(params.n_iterations):
        normal, d = fit_plane(pts[ground])
        ground = np.abs(pts @ normal - d) < params.distance_threshold_m
    return ground


def extract_ground_gpf_image(image: RangeImage, params: GpfParams = GpfParams()) -> GroundMask:
    """:func:`extract_ground_gpf` over the valid cells of a range image."""
    mask = np.zeros(image.shape, dtype=bool)
    mask[image.valid] = extract_ground_gpf(image.points[image.valid], params)
    return mask


def mask_metrics(predicted: GroundMask, truth: GroundMask) -> dict[str, float]:
    """Precision, recall and IoU of ``predicted`` against ``truth``.

    Ratios with an empty denominator are 1.0 (nothing to get wrong).
    """
    p = np.asarray(predicted, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape:
        raise InvalidInputError(f"mask shapes differ: {p.shape} vs {t.shape}")
    tp = int(np.count_nonzero(p & t))
    n_p, n_t = int(p.sum()), int(t.sum())
    union = int(np.count_nonzero(p | t))
    return {
        "precision": tp / n_p if n_p else 1.0,
        "recall": tp / n_t if n_t else 1.0,
        "iou": tp / union if union else 1.0,
    }
