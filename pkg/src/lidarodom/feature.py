"""Roughness scores and edge/planar feature selection.

Roughness of cell ``i`` in a ring with same-ring neighbor set ``S``::

    c = |sum_{j in S} (r_j - r_i)| / (|S| * r_i)

The image is split into ``n_sub_images`` equal azimuth sectors; per sector
and ring the highest-roughness cells above ``c_threshold`` become edges and
the lowest below it become planars.  Besides those sparse selections every
:class:`FeatureSet` carries *pools*: all eligible cells on each side of the
threshold, used as the target side when the set is matched against.  The
planar pool is voxel-thinned so target triangles span more than the range
noise.  Map insertion uses a sparser edge pool holding only same-ring
roughness peaks, since stacked keyframes would otherwise smear each crease.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from lidarodom.errors import InvalidInputError
from lidarodom.lidar_model import RangeImage
from lidarodom.segment import SegmentationResult

GROUND_TAG = -1


@dataclass(frozen=True)
class FeatureParams:
    neighbor_half_width: int = 5
    c_threshold: float = 0.1
    n_sub_images: int = 6
    edges_per_row_per_sub: int = 2
    planars_per_row_per_sub: int = 4
    # cells on the far side of a range jump larger than this are not eligible
    occlusion_gap_m: float | None = 0.3
    # voxel size for thinning the planar target pool; None keeps every cell
    pool_voxel_m: float | None = 0.2
    # let discarded (unclustered) cells serve as match targets, never as features
    pool_includes_discarded: bool = True
    # edges inserted into a map keep only cells whose roughness is the maximum
    # within this many same-ring columns; None inserts the whole edge pool
    map_edge_nms: int | None = 2

    def __post_init__(self):
        if min(self.neighbor_half_width, self.n_sub_images, self.edges_per_row_per_sub, self.planars_per_row_per_sub) < 1:
            raise InvalidInputError("feature counts must be positive")
        if self.c_threshold <= 0:
            raise InvalidInputError("c_threshold must be positive")


@dataclass
class FeaturePoints:
    """Parallel arrays: sensor-frame points, their cells, cluster ids and ground flags."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    ground: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __len__(self):
        return len(self.points)

    def subset(self, mask) -> FeaturePoints:
        return FeaturePoints(self.points[mask], self.rows[mask], self.cols[mask], self.labels[mask], self.ground[mask])

    @classmethod
    def from_cells(cls, image: RangeImage, labels: np.ndarray, ground: np.ndarray, rows, cols) -> FeaturePoints:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        g = ground[rows, cols]
        lab = np.where(g, GROUND_TAG, labels[rows, cols])
        return cls(image.points[rows, cols].copy(), rows, cols, lab.astype(np.int64), g.copy())


@dataclass
class FeatureSet:
    edges: FeaturePoints
    planars: FeaturePoints
    edge_pool: FeaturePoints | None = None
    planar_pool: FeaturePoints | None = None
    # thinner edge pool for map insertion; the wide pool blurs map lines
    map_edges: FeaturePoints | None = None

    def edge_targets(self) -> FeaturePoints:
        return self.edges if self.edge_pool is None else self.edge_pool

    def planar_targets(self) -> FeaturePoints:
        return self.planars if self.planar_pool is None else self.planar_pool

    def map_edge_targets(self) -> FeaturePoints:
        return self.edge_targets() if self.map_edges is None else self.map_edges

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["kind", "row", "col", "label", "x", "y", "z"])
            for kind, fp in (("edge", self.edges), ("planar", self.planars)):
                for k in range(len(fp)):
                    w.writerow([kind, int(fp.rows[k]), int(fp.cols[k]), int(fp.labels[k]), *map(float, fp.points[k])])


def roughness(ranges, i: int, neighbors=None, half_width: int = 5) -> float:
    """Roughness of ``ranges[i]``.

    ``neighbors`` lists indices of the comparison set; by default the
    ``half_width`` cells on each side, wrapping around the ring.
    """
    r = np.asarray(ranges, dtype=float)
    n = len(r)
    if neighbors is None:
        neighbors = [(i + k) % n for k in range(-half_width, half_width + 1) if k != 0]
    neighbors = [j for j in neighbors if j != i]
    if r[i] <= 0 or not neighbors:
        raise InvalidInputError("roughness needs a positive center range and a nonempty neighbor set")
    total = sum(r[j] - r[i] for j in neighbors)
    return abs(total) / (len(neighbors) * abs(r[i]))


def roughness_image(rng: np.ndarray, valid: np.ndarray, half_width: int) -> tuple[np.ndarray, np.ndarray]:
    """Roughness for every cell plus an eligibility mask (whole window valid, azimuth wraps)."""
    acc = np.zeros_like(rng, dtype=float)
    ok = valid.copy()
    # same term order as roughness(): left to right across the window
    for k in [*range(-half_width, 0), *range(1, half_width + 1)]:
        acc += np.roll(rng, -k, axis=1) - rng
        ok &= np.roll(valid, -k, axis=1)
    c = np.zeros_like(acc)
    np.divide(np.abs(acc), 2 * half_width * rng, out=c, where=ok)
    return c, ok


def occluded_cells(rng: np.ndarray, valid: np.ndarray, gap_m: float, half_width: int) -> np.ndarray:
    """Cells on the far side of a same-ring range jump, ``half_width + 1`` deep."""
    nxt = np.roll(rng, -1, axis=1)
    both = valid & np.roll(valid, -1, axis=1)
    jump_up = both & (nxt - rng > gap_m)  # right neighbor is farther
    jump_down = both & (rng - nxt > gap_m)  # this cell is farther
    out = np.zeros_like(valid)
    for k in range(half_width + 1):
        out |= np.roll(jump_up, 1 + k, axis=1)
        out |= np.roll(jump_down, -k, axis=1)
    return out


def voxel_downsample(points: np.ndarray, voxel_m: float) -> np.ndarray:
    """Sorted indices of one point per occupied voxel: the one nearest the voxel's centroid."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    keys = np.floor(pts / voxel_m).astype(np.int64)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    n_vox = inv.max() + 1
    counts = np.bincount(inv, minlength=n_vox)
    centroid = np.stack([np.bincount(inv, pts[:, k], n_vox) for k in range(3)], axis=1) / counts[:, None]
    d = np.linalg.norm(pts - centroid[inv], axis=1)
    # lexsort: by voxel, then distance, then original index
    order = np.lexsort((np.arange(len(pts)), d, inv))
    first = np.ones(len(order), dtype=bool)
    first[1:] = inv[order[1:]] != inv[order[:-1]]
    return np.sort(order[first])


def _ring_local_max(score: np.ndarray, eligible: np.ndarray, half_width: int) -> np.ndarray:
    """Eligible cells not exceeded by any eligible cell within ``half_width`` columns (azimuth wraps)."""
    s = np.where(eligible, score, -np.inf)
    keep = eligible.copy()
    for k in range(1, half_width + 1):
        keep &= (s >= np.roll(s, k, axis=1)) & (s >= np.roll(s, -k, axis=1))
    return keep


def _select(score: np.ndarray, eligible: np.ndarray, n_sub: int, k: int):
    """Per ring and sector, the ``k`` eligible cells with the smallest score (ties: lower column)."""
    rows, cols = score.shape
    w = cols // n_sub
    s = np.where(eligible, score, np.inf).reshape(rows, n_sub, w)
    order = np.argsort(s, axis=2, kind="stable")[:, :, :k]
    picked = np.take_along_axis(s, order, axis=2)
    r_idx, sub_idx, _ = np.nonzero(np.isfinite(picked))
    c_idx = sub_idx * w + order[np.isfinite(picked)]
    chosen = np.zeros((rows, cols), dtype=bool)
    chosen[r_idx, c_idx] = True
    return chosen


def select_features(
    image: RangeImage,
    seg: SegmentationResult,
    ground: np.ndarray,
    params: FeatureParams = FeatureParams(),
) -> FeatureSet:
    """Edge and planar features of one sweep.

    Edges come from clustered non-ground cells only; planars from clustered
    or ground cells.  Discarded, invalid and occluded cells never qualify.
    """
    rows, cols = image.shape
    if cols % params.n_sub_images:
        raise InvalidInputError(f"n_sub_images={params.n_sub_images} does not divide n_cols={cols}")
    ground = np.asarray(ground, dtype=bool) & image.valid
    c, ok = roughness_image(image.range, image.valid, params.neighbor_half_width)
    if params.occlusion_gap_m is not None:
        ok &= ~occluded_cells(image.range, image.valid, params.occlusion_gap_m, params.neighbor_half_width)
    clustered = seg.labels >= 1
    edge_ok = ok & clustered & ~ground & (c > params.c_threshold)
    planar_ok = ok & (clustered | ground) & (c < params.c_threshold)
    edge_sel = _select(-c, edge_ok, params.n_sub_images, params.edges_per_row_per_sub)
    planar_sel = _select(c, planar_ok, params.n_sub_images, params.planars_per_row_per_sub)
    if params.pool_includes_discarded:
        edge_ok = ok & ~ground & (c > params.c_threshold)
        planar_ok = ok & (c < params.c_threshold)

    def pack(mask):
        r, cc = np.nonzero(mask)
        return FeaturePoints.from_cells(image, seg.labels, ground, r, cc)

    map_edges = None
    if params.map_edge_nms is not None:
        # selected edges always stay, as with planars below
        map_edges = pack(_ring_local_max(c, edge_ok, params.map_edge_nms) | edge_sel)
    planar_pool = pack(planar_ok)
    if params.pool_voxel_m is not None:
        keep = np.zeros(len(planar_pool), dtype=bool)
        keep[voxel_downsample(planar_pool.points, params.pool_voxel_m)] = True
        # selected planars always stay so a set matched against itself has zero residual
        keep |= planar_sel[planar_pool.rows, planar_pool.cols]
        planar_pool = planar_pool.subset(keep)
    return FeatureSet(pack(edge_sel), pack(planar_sel), pack(edge_ok), planar_pool, map_edges)
