"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
written straight to the terminal even when output capture is on.
"""

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from _scenes import STEP1_DELTA, STEP2_DELTA, pose_error, random_transform, recovery_pairs, scan_features
from _trajectories import LONG_RUN_DRIFTS_M, drifted, wavy_truth
from test_feature import direct_roughness
from test_ground import truth_reachable
from test_register import line_distance, plane_distance, random_batch
from test_segment import random_case, union_find_oracle
from lidarodom.cli import main
from lidarodom.evaluate import final_drift, read_trajectory, write_trajectory
from lidarodom.feature import roughness, roughness_image
from lidarodom.ground import extract_ground_clustered, extract_ground_lego, mask_metrics
from lidarodom.lidar_model import VLP16, project
from lidarodom.register import estimate_motion, jacobian, point_to_edge_distance, point_to_plane_distance, residuals
from lidarodom.segment import segment_points
from lidarodom.synth import generate_trajectory_dataset, load_world, simulate_scan, truth_ground_mask, world_trajectory
from lidarodom.transform import RigidTransform

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "corridor_loop.yaml"


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return report


def test_criterion_1_drift_metric_fixture(tmp_path, capsys, verdict):
    truth = wavy_truth()
    write_trajectory(truth, tmp_path / "truth.txt")
    rng = np.random.default_rng(1)
    shown, ok = [], True
    for drift, pct in sorted(LONG_RUN_DRIFTS_M.items()):
        est = tmp_path / f"est_{drift}.txt"
        write_trajectory(drifted(truth, drift, start=random_transform(rng)), est)
        code = main(["eval", "--estimate", str(est), "--truth", str(tmp_path / "truth.txt")])
        lines = capsys.readouterr().out.splitlines()
        printed = float(lines[2].split()[1].rstrip("%"))
        ok &= code == 0 and lines[0] == "DISTANCE (m)  669.930" and abs(printed - pct) <= 0.001
        shown.append(f"{drift} m -> {printed:.4f}% (want {pct:.3f})")
    verdict(1, ok, "eval on 669.930 m fixtures: " + ", ".join(shown))


def test_criterion_2_clean_ground_oracle(verdict):
    parts, ok = [], True
    for name in ("flat_ground", "two_slopes"):
        world = load_world(name)
        st = simulate_scan(world, world_trajectory(world)[0])
        img = project(st.cloud, VLP16)
        mask = extract_ground_clustered(img)
        m = mask_metrics(mask, truth_reachable(img, truth_ground_mask(img, st), VLP16.ground_scan_rows))
        times = []
        for _ in range(20):
            t0 = time.perf_counter()
            extract_ground_clustered(img)
            times.append(time.perf_counter() - t0)
        ms = 1000 * float(np.median(times))
        ok &= m["precision"] == 1.0 and m["recall"] == 1.0 and ms < 10
        parts.append(f"{name} P={m['precision']:.4f} R={m['recall']:.4f} {ms:.2f} ms")
    verdict(2, ok, "; ".join(parts))


def test_criterion_3_tilted_mount_precision(verdict):
    world = load_world("tilted_mount_corridor")
    scans = generate_trajectory_dataset(world, world_trajectory(world)[:20], noise_sigma_m=0.02, seed=0)
    prec = {"clustered": [], "lego": []}
    for st in scans:
        img = project(st.cloud, VLP16)
        truth = truth_ground_mask(img, st)
        prec["clustered"].append(mask_metrics(extract_ground_clustered(img), truth)["precision"])
        prec["lego"].append(mask_metrics(extract_ground_lego(img), truth)["precision"])
    lo, hi = min(prec["clustered"]), max(prec["lego"])
    verdict(3, len(scans) == 20 and lo >= 0.99 and hi < 0.95, f"20 scans, clustered min P={lo:.4f}, lego max P={hi:.4f}")


def test_criterion_4_segmentation_union_find(verdict):
    mismatches = 0
    for seed in range(1000):
        img, ground, min_size, th = random_case(seed)
        got = segment_points(img, ground, min_size, th).labels
        mismatches += not np.array_equal(got, union_find_oracle(img, ground, min_size, th))
    verdict(4, mismatches == 0, f"{1000 - mismatches}/1000 random images match the union-find oracle exactly")


def test_criterion_5_roughness(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(11, 200))
        r = rng.uniform(0.5, 80, n)
        c, _ = roughness_image(r[None, :], np.ones((1, n), dtype=bool), 5)
        for i in range(n):
            ref = direct_roughness(r, i, 5)
            if ref > 0:
                worst = max(worst, abs(c[0, i] - ref) / ref, abs(roughness(r, i) - ref) / ref)
    exact = [Fraction(3), Fraction(5), Fraction(7, 2), Fraction(11), Fraction(2)]
    base = direct_roughness(exact, 2, 2)
    scaled = all(direct_roughness([k * x for x in exact], 2, 2) == base for k in (Fraction(1, 3), 2, Fraction(17, 5)))
    floats = [3.0, 5.0, 3.5, 11.0, 2.0]
    scaled &= all(roughness([k * x for x in floats], 2, half_width=2) == float(base) for k in (0.25, 1.0, 4.0, 1024.0))
    verdict(5, worst <= 1e-12 and scaled, f"max relative error {worst:.2e}; exact scale invariance {'holds' if scaled else 'broken'}")


def test_criterion_6_residual_geometry(verdict):
    rng = np.random.default_rng(6)
    worst_closed, worst_rigid = 0.0, 0.0
    for _ in range(1000):
        p, a, b, c = rng.normal(size=(4, 3)) * rng.uniform(0.1, 20)
        de, dp = point_to_edge_distance(p, a, b), point_to_plane_distance(p, a, b, c)
        worst_closed = max(worst_closed, abs(de - line_distance(p, a, b)), abs(dp - plane_distance(p, a, b, c)))
        q, qa, qb, qc = random_transform(rng).apply(np.stack([p, a, b, c]))
        worst_rigid = max(worst_rigid, abs(point_to_edge_distance(q, qa, qb) - de), abs(point_to_plane_distance(q, qa, qb, qc) - dp))
    ok = worst_closed <= 1e-9 and worst_rigid <= 1e-9
    verdict(6, ok, f"1000 configs: closed-form max err {worst_closed:.1e} m, rigid-invariance max err {worst_rigid:.1e} m")


def test_criterion_7_optimizer_sanity(verdict):
    rng = np.random.default_rng(7)
    worst_jac = 0.0
    h = 1e-6
    for kind in ("planar", "edge"):
        for _ in range(100):
            b = random_batch(rng, kind)
            x = np.concatenate([rng.normal(size=3) * 2, rng.uniform(-math.pi, math.pi, 3) * [1, 0.45, 1]])
            J = jacobian(b, x)
            fd = np.empty_like(J)
            for k in range(6):
                e = np.zeros(6)
                e[k] = h
                fd[..., k] = (residuals(b, x + e) - residuals(b, x - e)) / (2 * h)
            worst_jac = max(worst_jac, np.linalg.norm(J - fd) / np.linalg.norm(fd))
    worst_self = 0.0
    worst_t, worst_r, slowest, n_pairs, n_bad = 0.0, 0.0, 0.0, 0, 0
    for scene in ("corridor_with_ceiling", "corridor_loop"):
        w = load_world(scene)
        f, _, _ = scan_features(w, world_trajectory(w)[5])
        ident = estimate_motion(f, f, RigidTransform.identity()).transform
        worst_self = max(worst_self, ident.translation_norm(), ident.rotation_angle())
        for f1, f0, truth in recovery_pairs(w, [STEP1_DELTA, STEP2_DELTA]):
            t0 = time.perf_counter()
            res = estimate_motion(f1, f0)
            slowest = max(slowest, time.perf_counter() - t0)
            te, re = pose_error(res.transform, truth)
            worst_t, worst_r = max(worst_t, te), max(worst_r, re)
            n_pairs += 1
            n_bad += te > 0.02 or re > 0.2
    ok = worst_jac < 1e-5 and worst_self < 1e-6 and n_bad == 0 and slowest < 0.1
    verdict(
        7,
        ok,
        f"jacobian rel err {worst_jac:.1e}; self-match {worst_self:.1e}; "
        f"{n_pairs - n_bad}/{n_pairs} pairs within 0.02 m/0.2 deg "
        f"(worst {100 * worst_t:.2f} cm, {worst_r:.3f} deg), slowest {1000 * slowest:.0f} ms",
    )


@pytest.fixture(scope="module")
def loop_runs(tmp_path_factory):
    """Synthetic corridor loop and two identical odometry runs over it."""
    root = tmp_path_factory.mktemp("loop")
    main(["synth", "--world", "corridor_loop", "--out", str(root), "--n", "200", "--noise", "0.02", "--seed", "7", "--no-point-truth"])
    runs = []
    for name in ("run1", "run2"):
        t0 = time.perf_counter()
        code = main(["odometry", "--scans", str(root / "scans"), "--out", str(root / name), "--config", str(CONFIG), "--seed", "7"])
        runs.append((code, time.perf_counter() - t0, root / name / "trajectory.txt"))
    return root, runs


def test_criterion_8_loop_drift(loop_runs, verdict):
    root, runs = loop_runs
    code, elapsed, traj = runs[0]
    truth = read_trajectory(root / "truth.txt")
    res = final_drift(read_trajectory(traj), truth)
    ok = code == 0 and len(truth) == 200 and res.percentage <= 1.0 and elapsed < 60
    verdict(8, ok, f"200 scans over {res.distance_m:.2f} m: drift {res.drift_m:.3f} m = {res.percentage:.4f}%, odometry {elapsed:.1f} s")


def test_criterion_9_determinism(loop_runs, verdict):
    _, runs = loop_runs
    a, b = runs[0][2].read_bytes(), runs[1][2].read_bytes()
    verdict(9, runs[0][0] == runs[1][0] == 0 and a == b, f"two seeded runs: trajectories {'byte-identical' if a == b else 'differ'} ({len(a)} bytes)")
