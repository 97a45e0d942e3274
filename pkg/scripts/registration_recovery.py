"""Known-transform recovery rates for frame-to-frame registration.

For each scene, scans are rendered at base poses along the scene trajectory
and again after a known vehicle motion; the script counts how often
``estimate_motion`` lands within the tolerance of the true sensor motion.

    python scripts/registration_recovery.py --scenes corridor_loop lobby
"""

import argparse
import math
import time
from dataclasses import dataclass, field

import numpy as np

from lidarodom.errors import LidarOdomError
from lidarodom.feature import FeatureParams, select_features
from lidarodom.ground import extract_ground_clustered
from lidarodom.lidar_model import VLP16, project
from lidarodom.register import MatchParams, estimate_motion
from lidarodom.segment import segment_points
from lidarodom.synth import load_world, simulate_scan, world_trajectory
from lidarodom.transform import RigidTransform

DELTAS = {
    "tz_roll_pitch": RigidTransform.from_euler((0, 0, 0.05), (math.radians(1), math.radians(-1), 0)),
    "tx_yaw": RigidTransform.from_euler((0.2, 0, 0), (0, 0, math.radians(2))),
}


@dataclass
class Config:
    scenes: list[str] = field(default_factory=lambda: ["corridor_with_ceiling", "corridor_loop", "lobby"])
    n_bases: int = 10
    c_threshold: float = 0.03
    max_dist: float = MatchParams.max_correspondence_dist_m
    trim_factor: float = MatchParams.trim_factor
    tol_m: float = 0.02
    tol_deg: float = 0.2


def features(world, vehicle_pose, params):
    st = simulate_scan(world, vehicle_pose)
    img = project(st.cloud, VLP16)
    ground = extract_ground_clustered(img)
    return select_features(img, segment_points(img, ground), ground, params)


def run(cfg: Config):
    fp = FeatureParams(c_threshold=cfg.c_threshold)
    mp = MatchParams(max_correspondence_dist_m=cfg.max_dist, trim_factor=cfg.trim_factor)
    for scene in cfg.scenes:
        world = load_world(scene)
        traj = world_trajectory(world)
        bases = traj[:: max(1, len(traj) // cfg.n_bases)][: cfg.n_bases]
        ok = total = 0
        t_err, ms = [], []
        for base in bases:
            f0 = features(world, base, fp)
            for d in DELTAS.values():
                f1 = features(world, base @ d, fp)
                truth = world.mount.inverse() @ d @ world.mount
                t0 = time.perf_counter()
                try:
                    est = estimate_motion(f1, f0, params=mp).transform
                except LidarOdomError:
                    est = None
                ms.append(1000 * (time.perf_counter() - t0))
                total += 1
                if est is None:
                    t_err.append(math.inf)
                    continue
                e = truth.inverse() @ est
                t_err.append(e.translation_norm())
                ok += e.translation_norm() <= cfg.tol_m and math.degrees(e.rotation_angle()) <= cfg.tol_deg
        print(
            f"{scene:24s} {ok:3d}/{total:<3d} within {cfg.tol_m} m / {cfg.tol_deg} deg  "
            f"median err {100 * np.median(t_err):.2f} cm  worst {100 * max(t_err):.1f} cm  max {max(ms):.0f} ms"
        )


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenes", nargs="+")
    p.add_argument("--n-bases", type=int, default=Config.n_bases)
    p.add_argument("--c-threshold", type=float, default=Config.c_threshold)
    p.add_argument("--max-dist", type=float, default=Config.max_dist)
    p.add_argument("--trim-factor", type=float, default=Config.trim_factor)
    a = p.parse_args()
    cfg = Config(n_bases=a.n_bases, c_threshold=a.c_threshold, max_dist=a.max_dist, trim_factor=a.trim_factor)
    if a.scenes:
        cfg.scenes = a.scenes
    run(cfg)


if __name__ == "__main__":
    main()
