import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _scenes import random_transform
from _trajectories import LONG_RUN_DRIFTS_M, LONG_RUN_LENGTH_M, drifted, wavy_truth
from lidarodom.errors import InvalidInputError, ParseError
from lidarodom.evaluate import (
    Trajectory,
    final_drift,
    pair_by_timestamp,
    path_length,
    read_trajectory,
    write_metrics_csv,
    write_trajectory,
)
from lidarodom.transform import RigidTransform


def test_identity_line(tmp_path):
    (tmp_path / "t.txt").write_text("0.0 0 0 0 0 0 0 1\n")
    traj = read_trajectory(tmp_path / "t.txt")
    assert len(traj) == 1 and traj.timestamps[0] == 0.0
    assert traj.poses[0].is_close(RigidTransform.identity(), 0.0, 0.0)


def test_round_trip_100_random_poses(tmp_path, rng):
    poses = [random_transform(rng) for _ in range(100)]
    traj = Trajectory(np.cumsum(rng.uniform(0.05, 0.2, 100)), poses)
    write_trajectory(traj, tmp_path / "t.txt")
    back = read_trajectory(tmp_path / "t.txt")
    np.testing.assert_allclose(back.timestamps, traj.timestamps, atol=1e-6)
    err = max(
        max(np.abs(a.translation - b.translation).max(), np.abs(a.rotation - b.rotation).max())
        for a, b in zip(back.poses, poses)
    )
    assert err < 1e-9


@pytest.mark.parametrize(
    "text, line",
    [
        ("0.0 0 0 0 0 0 1\n", 1),
        ("# header\n0.0 0 0 0 0 0 0 1\n0.1 0 0 0 0 0 0 2\n", 3),
        ("0.0 0 0 0 0 0 0 1\n0.1 a 0 0 0 0 0 1\n", 2),
        ("0.0 0 0 0 0 0 0 1\n0.0 0 0 0 0 0 0 1\n", 2),
        ("0.0 0 nan 0 0 0 0 1\n", 1),
    ],
)
def test_malformed_names_line(tmp_path, text, line):
    (tmp_path / "bad.txt").write_text(text)
    with pytest.raises(ParseError, match=f"line {line}"):
        read_trajectory(tmp_path / "bad.txt")


def test_quaternion_normalized_within_tolerance(tmp_path):
    s = 1 + 5e-7
    (tmp_path / "t.txt").write_text(f"0.0 1 2 3 0 0 {s * math.sin(0.5)} {s * math.cos(0.5)}\n")
    p = read_trajectory(tmp_path / "t.txt").poses[0]
    assert p.is_close(RigidTransform.from_euler((1, 2, 3), (0, 0, 1.0)), 1e-12, 1e-12)


def test_quaternion_matches_euler_convention(tmp_path):
    # 90 deg yaw maps +x to +y; the TUM line stores (qx qy qz qw) = (0 0 sin45 cos45)
    h = math.sqrt(0.5)
    (tmp_path / "t.txt").write_text(f"0.0 0 0 0 0 0 {h} {h}\n")
    p = read_trajectory(tmp_path / "t.txt").poses[0]
    assert p.is_close(RigidTransform.from_euler(rpy=(0, 0, math.pi / 2)), 1e-12, 1e-12)
    np.testing.assert_allclose(p.apply(np.array([[1.0, 0, 0]])), [[0, 1, 0]], atol=1e-12)
    # roll then pitch then yaw, applied in that order to the body frame
    T = RigidTransform.from_euler(rpy=(0.3, -0.2, 1.1))
    q = T.quaternion()
    np.testing.assert_allclose(q[3] ** 2 + q[:3] @ q[:3], 1.0)
    np.testing.assert_allclose(RigidTransform.from_quaternion((0, 0, 0), q).rotation, T.rotation, atol=1e-12)


def test_path_length_examples():
    two = Trajectory([0, 1], [RigidTransform.identity(), RigidTransform.from_euler((1, 0, 0))])
    assert path_length(two) == 1.0
    corners = [(0, 0, 0), (5, 0, 0), (5, 5, 0), (0, 5, 0), (0, 0, 0)]
    square = Trajectory(np.arange(5), [RigidTransform.from_euler(c) for c in corners])
    assert path_length(square) == 20.0
    with pytest.raises(InvalidInputError):
        path_length(Trajectory([0], [RigidTransform.identity()]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_path_length_rigid_invariant(seed):
    rng = np.random.default_rng(seed)
    traj = wavy_truth(length_m=50.0, n=30, seed=seed)
    T = random_transform(rng)
    assert path_length(traj.transformed(T)) == pytest.approx(path_length(traj), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_drift_of_self_is_zero(seed):
    traj = wavy_truth(length_m=80.0, n=25, seed=seed)
    res = final_drift(traj, traj)
    assert res.drift_m == 0.0 and res.percentage == 0.0


def test_long_run_length_fixture():
    assert path_length(wavy_truth()) == pytest.approx(LONG_RUN_LENGTH_M, abs=1e-9)


@pytest.mark.parametrize("drift, pct", sorted(LONG_RUN_DRIFTS_M.items()))
def test_long_run_drift_fixture(drift, pct, rng):
    truth = wavy_truth()
    est = drifted(truth, drift, start=random_transform(rng))
    res = final_drift(est, truth)
    assert res.distance_m == pytest.approx(LONG_RUN_LENGTH_M, abs=1e-9)
    assert res.drift_m == pytest.approx(drift, abs=1e-9)
    assert abs(res.percentage - pct) <= 0.001
    assert res.percentage == 100.0 * res.drift_m / res.distance_m


def test_no_align_keeps_start_offset():
    truth = wavy_truth(length_m=10.0, n=11)
    shifted = truth.transformed(RigidTransform.from_euler((0, 3, 0)))
    assert final_drift(shifted, truth).drift_m == pytest.approx(0.0, abs=1e-12)
    assert final_drift(shifted, truth, align=False).drift_m == pytest.approx(3.0)


def test_horizontal_component():
    truth = wavy_truth(length_m=10.0, n=11)
    last = truth.poses[-1]
    poses = truth.poses[:-1] + [RigidTransform(last.rotation, last.translation + [3.0, 0, 4.0])]
    res = final_drift(Trajectory(truth.timestamps, poses), truth)
    assert res.drift_m == pytest.approx(5.0) and res.drift_horizontal_m == pytest.approx(3.0)


def test_pairing_skips_far_timestamps():
    truth = Trajectory([0.0, 0.1, 0.2, 0.3], [RigidTransform.from_euler((k, 0, 0)) for k in range(4)])
    est = Trajectory([0.0, 0.12, 0.26, 0.5], [RigidTransform.from_euler((k, 0, 0)) for k in range(4)])
    i_est, i_tru, unpaired = pair_by_timestamp(est, truth)
    assert list(i_est) == [0, 1, 2] and list(i_tru) == [0, 1, 3] and unpaired == 1
    assert final_drift(est, truth).n_unpaired == 1


def test_empty_trajectory_errors():
    empty = Trajectory([], [])
    with pytest.raises(InvalidInputError):
        final_drift(empty, wavy_truth(n=5))


def test_metrics_csv_columns(tmp_path):
    write_metrics_csv(tmp_path / "m.csv", [dict(run_id="a", method="clustered", distance_m=1.0, drift_m=0.1, percentage=10.0, extra=1)])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "run_id,method,distance_m,drift_m,percentage"
    assert lines[1] == "a,clustered,1.0,0.1,10.0"
