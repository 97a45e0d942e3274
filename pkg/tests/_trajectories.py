"""Trajectory fixtures with prescribed path length and final drift."""

import numpy as np

from lidarodom.evaluate import Trajectory
from lidarodom.transform import RigidTransform

LONG_RUN_LENGTH_M = 669.930
LONG_RUN_DRIFTS_M = {18.354: 2.739, 6.367: 0.950}


def wavy_truth(length_m=LONG_RUN_LENGTH_M, n=400, seed=0):
    """A wandering 3D path with headings along the direction of travel, scaled to ``length_m``."""
    rng = np.random.default_rng(seed)
    heading = np.cumsum(rng.normal(0, 0.05, n - 1))
    climb = rng.normal(0, 0.02, n - 1)
    steps = np.column_stack([np.cos(heading), np.sin(heading), climb])
    steps *= length_m / np.linalg.norm(steps, axis=1).sum()
    pos = np.vstack([np.zeros(3), np.cumsum(steps, axis=0)])
    yaw = np.concatenate([[heading[0]], heading])
    poses = [RigidTransform.from_euler(p, (0, 0, y)) for p, y in zip(pos, yaw)]
    return Trajectory(np.arange(n) / 10.0, poses)


def drifted(truth: Trajectory, drift_m: float, seed=1, start=None) -> Trajectory:
    """Estimate whose error grows linearly to ``drift_m`` at the last pose.

    ``start`` optionally re-expresses the whole estimate in another frame, as
    an odometry run that starts at its own origin would.
    """
    rng = np.random.default_rng(seed)
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    n = len(truth)
    poses = [RigidTransform(p.rotation, p.translation + drift_m * k / (n - 1) * u) for k, p in enumerate(truth.poses)]
    est = Trajectory(truth.timestamps.copy(), poses)
    return est if start is None else est.transformed(start @ truth.poses[0].inverse())
