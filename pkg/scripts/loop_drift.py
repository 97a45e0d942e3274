"""End-to-end drift on a synthetic scene for each ground extraction method.

Renders the scene trajectory once, runs the odometry pipeline with every
ground method, and reports distance / drift / percentage in the same layout
as ``lidarodom eval``.

    python scripts/loop_drift.py --scene corridor_loop --n 200 --noise 0.02
"""

import argparse
import time
from dataclasses import dataclass

from lidarodom.evaluate import Trajectory, final_drift
from lidarodom.feature import FeatureParams
from lidarodom.pipeline import GROUND_METHODS, Odometry, PipelineConfig
from lidarodom.synth import generate_trajectory_dataset, load_world, trajectory_from_dict

SCAN_RATE_HZ = 10.0


@dataclass
class Config:
    scene: str = "corridor_loop"
    n: int = 200
    noise: float = 0.02
    seed: int = 7
    c_threshold: float = 0.03
    use_map: bool = True


def run(cfg: Config):
    world = load_world(cfg.scene)
    spec = dict(world.trajectory)
    spec["n"] = cfg.n
    scans = generate_trajectory_dataset(world, trajectory_from_dict(spec), noise_sigma_m=cfg.noise, seed=cfg.seed)
    stamps = [k / SCAN_RATE_HZ for k in range(len(scans))]
    truth = Trajectory(stamps, [st.sensor_pose for st in scans])
    print(f"{cfg.scene}: {len(scans)} scans, noise {cfg.noise} m")
    for method in GROUND_METHODS:
        odo = Odometry(PipelineConfig(ground_method=method, feature=FeatureParams(c_threshold=cfg.c_threshold), use_map=cfg.use_map))
        t0 = time.perf_counter()
        for st in scans:
            odo.process(st.cloud)
        elapsed = time.perf_counter() - t0
        r = final_drift(Trajectory(stamps, odo.poses), truth)
        print(
            f"  {method:10s} DISTANCE {r.distance_m:8.3f} m  DRIFT {r.drift_m:7.3f} m  "
            f"PERCENTAGE {r.percentage:7.4f}%  fallbacks {odo.n_odometry_fallbacks:3d}  {elapsed:5.1f} s"
        )


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scene", default=Config.scene)
    p.add_argument("--n", type=int, default=Config.n)
    p.add_argument("--noise", type=float, default=Config.noise)
    p.add_argument("--seed", type=int, default=Config.seed)
    p.add_argument("--c-threshold", type=float, default=Config.c_threshold)
    p.add_argument("--no-map", action="store_true")
    a = p.parse_args()
    run(Config(a.scene, a.n, a.noise, a.seed, a.c_threshold, not a.no_map))


if __name__ == "__main__":
    main()
