"""Ground extraction comparison on noisy synthetic scans.

Runs the clustered extractor and both baselines over the first scans of
each scene and prints precision / recall / IoU against generator truth.

    python scripts/compare_ground.py --n-scans 20 --noise 0.02 --out ground.csv
"""

import argparse
import csv
import time
from dataclasses import dataclass, field

import numpy as np

from lidarodom.ground import extract_ground_clustered, extract_ground_gpf_image, extract_ground_lego, mask_metrics
from lidarodom.lidar_model import VLP16, project
from lidarodom.synth import generate_trajectory_dataset, load_world, truth_ground_mask, world_trajectory

METHODS = {
    "clustered": extract_ground_clustered,
    "lego": extract_ground_lego,
    "gpf": extract_ground_gpf_image,
}


@dataclass
class Config:
    scenes: list[str] = field(default_factory=lambda: ["flat_ground", "two_slopes", "tilted_mount_corridor", "corridor_with_ceiling", "lobby"])
    n_scans: int = 20
    noise: float = 0.02
    seed: int = 0
    out: str | None = None


def run(cfg: Config) -> list[dict]:
    rows = []
    for scene in cfg.scenes:
        world = load_world(scene)
        scans = generate_trajectory_dataset(world, world_trajectory(world)[: cfg.n_scans], noise_sigma_m=cfg.noise, seed=cfg.seed)
        images = [project(st.cloud, VLP16) for st in scans]
        truths = [truth_ground_mask(img, st) for img, st in zip(images, scans)]
        for name, fn in METHODS.items():
            tp = fp = fn_ = 0
            prec, ms = [], []
            for img, truth in zip(images, truths):
                t0 = time.perf_counter()
                mask = fn(img)
                ms.append(1000 * (time.perf_counter() - t0))
                tp += int((mask & truth).sum())
                fp += int((mask & ~truth).sum())
                fn_ += int((~mask & truth).sum())
                prec.append(mask_metrics(mask, truth)["precision"])
            rows.append(
                dict(
                    scene=scene,
                    method=name,
                    precision=tp / max(tp + fp, 1),
                    recall=tp / max(tp + fn_, 1),
                    iou=tp / max(tp + fp + fn_, 1),
                    min_scan_precision=min(prec),
                    median_ms=float(np.median(ms)),
                )
            )
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenes", nargs="+")
    p.add_argument("--n-scans", type=int, default=Config.n_scans)
    p.add_argument("--noise", type=float, default=Config.noise)
    p.add_argument("--seed", type=int, default=Config.seed)
    p.add_argument("--out")
    a = p.parse_args()
    cfg = Config(n_scans=a.n_scans, noise=a.noise, seed=a.seed, out=a.out)
    if a.scenes:
        cfg.scenes = a.scenes
    rows = run(cfg)
    print(f"{'scene':24s} {'method':10s} {'prec':>7s} {'recall':>7s} {'iou':>7s} {'minP':>7s} {'ms':>6s}")
    for r in rows:
        print(
            f"{r['scene']:24s} {r['method']:10s} {r['precision']:7.4f} {r['recall']:7.4f} "
            f"{r['iou']:7.4f} {r['min_scan_precision']:7.4f} {r['median_ms']:6.2f}"
        )
    if cfg.out:
        with open(cfg.out, "w", newline="") as f:
            w = csv.DictWriter(f, list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
