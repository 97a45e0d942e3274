import itertools
import math
import time

import numpy as np
import pytest

from _scenes import STEP1_DELTA, STEP2_DELTA, pose_error, random_transform, recovery_pairs, scan_features
from lidarodom.errors import DegeneratePlaneError, InsufficientConstraintsError, InvalidInputError
from lidarodom.feature import FeaturePoints, FeatureSet
from lidarodom.register import (
    STEP1_FREE,
    STEP2_FREE,
    CorrespondenceBatch,
    MatchParams,
    TargetIndex,
    estimate_motion,
    find_correspondences,
    jacobian,
    point_to_edge_distance,
    point_to_plane_distance,
    residuals,
)
from lidarodom.synth import load_world, world_trajectory
from lidarodom.transform import RigidTransform


def line_distance(p, a, b):
    u = (b - a) / np.linalg.norm(b - a)
    v = p - a
    return np.linalg.norm(v - (v @ u) * u)


def plane_distance(p, a, b, c):
    n = np.cross(b - a, c - a)
    return abs((p - a) @ n) / np.linalg.norm(n)


def test_edge_distance_examples():
    assert point_to_edge_distance((0, 1, 0), (0, 0, 0), (1, 0, 0)) == pytest.approx(1.0)
    assert point_to_edge_distance((2, 3, 4), (0, 0, 0), (0, 0, 1)) == pytest.approx(math.sqrt(13))
    assert point_to_edge_distance((5, 5, 5), (0, 0, 0), (1, 1, 1)) == pytest.approx(0.0, abs=1e-12)


def test_plane_distance_examples():
    pts = [np.array(v, dtype=float) for v in ((0, 0, 0), (1, 0, 0), (0, 1, 0))]
    assert point_to_plane_distance((0.3, 0.7, 0), *pts) == 0.0
    assert point_to_plane_distance((0, 0, 5), *pts) == pytest.approx(5.0)
    vals = {point_to_plane_distance((0.2, -3, 5), *perm) for perm in itertools.permutations(pts)}
    assert max(vals) - min(vals) < 1e-15


def test_degenerate_inputs():
    with pytest.raises(DegeneratePlaneError):
        point_to_plane_distance((0, 0, 1), (0, 0, 0), (1, 0, 0), (2, 0, 0))
    with pytest.raises(InvalidInputError):
        point_to_edge_distance((0, 0, 1), (1, 1, 1), (1, 1, 1))


def test_distances_closed_form_and_rigid_invariance(rng):
    for _ in range(1000):
        p, a, b, c = rng.normal(size=(4, 3)) * rng.uniform(0.1, 20)
        de = point_to_edge_distance(p, a, b)
        dp = point_to_plane_distance(p, a, b, c)
        assert de >= 0 and dp >= 0
        assert abs(de - line_distance(p, a, b)) <= 1e-9
        assert abs(dp - plane_distance(p, a, b, c)) <= 1e-9
        T = random_transform(rng)
        q, qa, qb, qc = T.apply(np.stack([p, a, b, c]))
        assert abs(point_to_edge_distance(q, qa, qb) - de) <= 1e-9
        assert abs(point_to_plane_distance(q, qa, qb, qc) - dp) <= 1e-9


def random_batch(rng, kind, n=30):
    p = rng.normal(size=(n, 3)) * 5
    a = rng.normal(size=(n, 3)) * 5
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return CorrespondenceBatch(kind, p, a, u, a, a + u, a if kind == "planar" else None, np.zeros(n, dtype=bool))


def test_residuals_match_distance_functions(rng):
    b = random_batch(rng, "edge", 50)
    x = np.zeros(6)
    d = np.linalg.norm(residuals(b, x), axis=1)
    ref = [point_to_edge_distance(p, pj, pl) for p, pj, pl in zip(b.p, b.p_j, b.p_l)]
    np.testing.assert_allclose(d, ref, atol=1e-12)


@pytest.mark.parametrize("kind", ["planar", "edge"])
def test_jacobian_matches_central_differences(rng, kind):
    h = 1e-6
    for _ in range(100):
        b = random_batch(rng, kind)
        x = np.concatenate([rng.normal(size=3) * 2, rng.uniform(-math.pi, math.pi, 3) * [1, 0.45, 1]])
        J = jacobian(b, x)
        fd = np.empty_like(J)
        for k in range(6):
            e = np.zeros(6)
            e[k] = h
            fd[..., k] = (residuals(b, x + e) - residuals(b, x - e)) / (2 * h)
        err = np.linalg.norm(J - fd) / np.linalg.norm(fd)
        assert err < 1e-5
        np.testing.assert_array_equal(jacobian(b, x, STEP1_FREE), J[..., list(STEP1_FREE)])
        np.testing.assert_array_equal(jacobian(b, x, STEP2_FREE), J[..., list(STEP2_FREE)])


@pytest.fixture(scope="module")
def corridor():
    w = load_world("corridor_with_ceiling")
    base = world_trajectory(w)[5]
    return w, base, scan_features(w, base)


@pytest.mark.parametrize("scene", ["corridor_with_ceiling", "corridor_loop", "lobby"])
def test_self_match_is_identity(scene):
    w = load_world(scene)
    f, _, _ = scan_features(w, world_trajectory(w)[5])
    res = estimate_motion(f, f, RigidTransform.identity())
    assert res.transform.translation_norm() < 1e-6
    assert res.transform.rotation_angle() < 1e-6
    assert res.converged and res.residual_rms < 1e-9


def test_self_correspondences_zero_distance(corridor):
    _, _, (f, _, _) = corridor
    corr = find_correspondences(f, f, RigidTransform.identity())
    edges = [c for c in corr if c.kind == "edge"]
    planars = [c for c in corr if c.kind == "planar"]
    assert len(edges) == len(f.edges)
    # planars whose target neighborhood is not flat (e.g. at corners) get no plane
    assert len(planars) >= 0.9 * len(f.planars)
    for c in edges:
        assert point_to_edge_distance(c.p, c.p_j, c.p_l) < 1e-12
    for c in planars:
        assert point_to_plane_distance(c.p, c.p_j, c.p_l, c.p_m) < 1e-9


def test_guess_beyond_max_distance_empty(corridor):
    _, _, (f, _, _) = corridor
    assert find_correspondences(f, f, RigidTransform.from_euler((0, 0, 50.0))) == []


def test_planar_matches_land_on_true_surface(corridor):
    w, base, (f0, st0, img0) = corridor
    shift = RigidTransform.from_euler((0.1, 0, 0))
    f1, st1, img1 = scan_features(w, base @ shift)

    def surface_lookup(st, img, fp):
        return {tuple(p): st.surface_id[img.index[r, c]] for p, r, c in zip(fp.points, fp.rows, fp.cols)}

    prev_sid = surface_lookup(st0, img0, f0.planar_targets())
    cur_sid = surface_lookup(st1, img1, f1.planars)
    corr = [c for c in find_correspondences(f1, f0, RigidTransform.identity()) if c.kind == "planar"]
    good = sum(prev_sid[tuple(c.p_j)] == cur_sid[tuple(c.p)] for c in corr)
    assert good >= 0.8 * len(f1.planars)


def test_label_compatibility(corridor):
    _, _, (f, _, _) = corridor
    idx = TargetIndex(f)
    b = idx.planars_for(f.planars, f.planars.points, MatchParams())
    tgt_ground = {tuple(p): g for p, g in zip(f.planar_targets().points, f.planar_targets().ground)}
    assert all(tgt_ground[tuple(pj)] == g for pj, g in zip(b.p_j, b.ground))


@pytest.mark.parametrize("scene", ["corridor_with_ceiling", "corridor_loop"])
def test_step1_recovers_tz_roll_pitch(scene):
    w = load_world(scene)
    for f1, f0, truth in recovery_pairs(w, [STEP1_DELTA], n_bases=5):
        x = estimate_motion(f1, f0).transform.params
        assert abs(x[2] - truth.params[2]) <= 0.01
        assert np.degrees(np.abs(x[3:5] - truth.params[3:5])).max() <= 0.1


@pytest.mark.parametrize("scene", ["corridor_with_ceiling", "corridor_loop"])
def test_known_transform_recovery(scene):
    w = load_world(scene)
    for f1, f0, truth in recovery_pairs(w, [STEP1_DELTA, STEP2_DELTA]):
        t0 = time.perf_counter()
        res = estimate_motion(f1, f0)
        elapsed = time.perf_counter() - t0
        te, re = pose_error(res.transform, truth)
        assert te <= 0.02 and re <= 0.2
        assert elapsed < 0.1


def test_insufficient_constraints_names_step(corridor):
    _, _, (f, _, _) = corridor
    few = FeatureSet(f.edges, f.planars.subset(slice(0, 5)), f.edge_pool, f.planar_pool.subset(slice(0, 5)))
    with pytest.raises(InsufficientConstraintsError) as ei:
        estimate_motion(few, few)
    assert ei.value.step == "step1" and ei.value.required == 10
    no_edges = FeatureSet(FeaturePoints(), f.planars, FeaturePoints(), f.planar_pool)
    with pytest.raises(InsufficientConstraintsError) as ei:
        estimate_motion(no_edges, no_edges)
    assert ei.value.step == "step2" and ei.value.required == 5


def test_empty_current_rejected():
    with pytest.raises(InvalidInputError):
        estimate_motion(FeatureSet(FeaturePoints(), FeaturePoints()), FeatureSet(FeaturePoints(), FeaturePoints()))


def test_diagnostics_csv(tmp_path, corridor):
    w, base, (f0, _, _) = corridor
    f1, _, _ = scan_features(w, base @ STEP2_DELTA)
    res = estimate_motion(f1, f0)
    res.diagnostics_to_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "iteration,step,residual_rms,n_corr"
    assert len(lines) == 1 + sum(res.iterations)
    assert res["converged"] is res.converged


def test_params_validated():
    with pytest.raises(InvalidInputError):
        MatchParams(max_correspondence_dist_m=0)
    with pytest.raises(InvalidInputError):
        MatchParams(n_neighbors=2)

