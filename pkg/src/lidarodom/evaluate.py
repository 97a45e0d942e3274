"""Trajectory files and drift metrics.

Trajectories use the TUM text format, one pose per line::

    timestamp tx ty tz qx qy qz qw

with ``#`` comments.  Quaternions follow the same rotation convention as
:class:`lidarodom.transform.RigidTransform` (scalar last).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from lidarodom.errors import InvalidInputError, ParseError
from lidarodom.transform import RigidTransform

QUAT_NORM_TOL = 1e-6
PAIR_TOL_S = 0.05


@dataclass
class Trajectory:
    timestamps: np.ndarray
    poses: list[RigidTransform]

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        if len(self.timestamps) != len(self.poses):
            raise InvalidInputError("timestamps and poses differ in length")
        if np.any(np.diff(self.timestamps) <= 0):
            raise InvalidInputError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.poses)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)

    def transformed(self, T: RigidTransform) -> Trajectory:
        """Left-multiply every pose by ``T``."""
        return Trajectory(self.timestamps.copy(), [T @ p for p in self.poses])


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    ts, poses = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 8:
                raise ParseError(f"expected 8 fields, got {len(parts)}", line=lineno, path=path)
            try:
                v = [float(x) for x in parts]
            except ValueError:
                raise ParseError("non-numeric field", line=lineno, path=path) from None
            if not all(math.isfinite(x) for x in v):
                raise ParseError("non-finite field", line=lineno, path=path)
            q = np.array(v[4:])
            if abs(np.linalg.norm(q) - 1.0) > QUAT_NORM_TOL:
                raise ParseError(f"quaternion norm {np.linalg.norm(q):.9f} is not 1", line=lineno, path=path)
            ts.append(v[0])
            poses.append(RigidTransform.from_quaternion(v[1:4], q / np.linalg.norm(q)))
    if ts and np.any(np.diff(ts) <= 0):
        bad = int(np.flatnonzero(np.diff(ts) <= 0)[0]) + 2
        raise ParseError("timestamps must be strictly increasing", line=bad, path=path)
    return Trajectory(np.array(ts), poses)


def format_pose_line(t: float, pose: RigidTransform) -> str:
    x = [*pose.translation, *pose.quaternion()]
    return f"{t:.6f} " + " ".join(f"{v:.12f}" for v in x)


def write_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w") as f:
        f.write("# timestamp tx ty tz qx qy qz qw\n")
        for t, p in zip(traj.timestamps, traj.poses):
            f.write(format_pose_line(float(t), p) + "\n")


def path_length(traj: Trajectory) -> float:
    """Sum of distances between consecutive positions."""
    if len(traj) < 2:
        raise InvalidInputError("path length needs at least 2 poses")
    return float(np.linalg.norm(np.diff(traj.positions, axis=0), axis=1).sum())


def align_start(estimate: Trajectory, truth: Trajectory) -> Trajectory:
    """Express ``estimate`` so its first pose coincides with ``truth``'s first pose."""
    return estimate.transformed(truth.poses[0] @ estimate.poses[0].inverse())


def pair_by_timestamp(estimate: Trajectory, truth: Trajectory, tol_s: float = PAIR_TOL_S):
    """Indices ``(i_est, i_truth)`` of nearest-timestamp pairs within ``tol_s``, plus the unpaired count."""
    if len(truth) == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int), len(estimate)
    j = np.searchsorted(truth.timestamps, estimate.timestamps)
    lo = np.clip(j - 1, 0, len(truth) - 1)
    hi = np.clip(j, 0, len(truth) - 1)
    pick = np.where(
        np.abs(truth.timestamps[lo] - estimate.timestamps) <= np.abs(truth.timestamps[hi] - estimate.timestamps), lo, hi
    )
    keep = np.abs(truth.timestamps[pick] - estimate.timestamps) <= tol_s
    i_est = np.flatnonzero(keep)
    return i_est, pick[keep], int((~keep).sum())


@dataclass
class DriftResult:
    distance_m: float
    drift_m: float
    percentage: float
    drift_horizontal_m: float
    percentage_horizontal: float
    n_pairs: int
    n_unpaired: int

    def __getitem__(self, key):
        return getattr(self, key)


def final_drift(estimate: Trajectory, truth: Trajectory, align: bool = True) -> DriftResult:
    """Final position error of ``estimate`` and its share of the true path length.

    Poses are paired by nearest timestamp (within 50 ms); the last paired
    poses give the drift.  With ``align`` the estimate is first moved so its
    first pose matches the truth's.
    """
    if len(estimate) == 0 or len(truth) == 0:
        raise InvalidInputError("drift needs nonempty trajectories")
    i_est, i_tru, unpaired = pair_by_timestamp(estimate, truth)
    if len(i_est) == 0:
        raise InvalidInputError("no timestamp pairs within tolerance")
    est0, tru0 = estimate.poses[i_est[0]], truth.poses[i_tru[0]]
    # identical starts skip the composition, which would leave ~1e-16 rounding
    same = np.array_equal(est0.rotation, tru0.rotation) and np.array_equal(est0.translation, tru0.translation)
    if align and not same:
        estimate = estimate.transformed(tru0 @ est0.inverse())
    length = path_length(truth)
    d = estimate.poses[i_est[-1]].translation - truth.poses[i_tru[-1]].translation
    drift = float(np.linalg.norm(d))
    drift_h = float(np.linalg.norm(d[:2]))
    return DriftResult(length, drift, 100.0 * drift / length, drift_h, 100.0 * drift_h / length, len(i_est), unpaired)


METRIC_FIELDS = ["run_id", "method", "distance_m", "drift_m", "percentage"]


def write_metrics_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, METRIC_FIELDS, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
