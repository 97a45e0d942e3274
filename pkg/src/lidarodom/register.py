"""Frame-to-frame motion estimation from edge and planar features.

The estimated transform ``T`` maps points of the current sweep into the
previous sweep's frame.  Its six parameters ``[tx, ty, tz, roll, pitch, yaw]``
are solved in two Levenberg-Marquardt stages:

1. ``(tz, roll, pitch)`` from point-to-plane residuals of planar features;
2. ``(tx, ty, yaw)`` from point-to-line residuals of edge features, with the
   stage-1 values frozen.

Correspondences are searched again at every outer iteration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from lidarodom.errors import DegeneratePlaneError, InsufficientConstraintsError, InvalidInputError
from lidarodom.feature import FeaturePoints, FeatureSet
from lidarodom.transform import RigidTransform, euler_derivatives, euler_to_matrix

STEP1_FREE = (2, 3, 4)  # tz, roll, pitch
STEP2_FREE = (0, 1, 5)  # tx, ty, yaw
MIN_PLANAR = 10
MIN_EDGE = 5


@dataclass(frozen=True)
class MatchParams:
    """Correspondence and optimizer settings.

    Planar targets are planes through the nearest admissible target point
    with the normal of the ``n_neighbors`` nearest ones; a neighborhood whose
    smallest covariance eigenvalue exceeds ``planarity_ratio`` times the middle
    one is not planar and yields no correspondence.

    ``step1_ground_only`` restricts the first stage to ground-tagged planar
    features when at least ``MIN_PLANAR`` of them find correspondences, and
    falls back to all planars otherwise.  ``trim_factor`` zeroes the weight of
    residuals above that multiple of the median.
    """

    max_correspondence_dist_m: float = 1.0
    max_iterations_step1: int = 25
    max_iterations_step2: int = 25
    translation_tol_m: float = 1e-4
    rotation_tol_rad: float = 1e-4
    lm_initial_damping: float = 1e-4
    trim_factor: float = 3.0
    n_neighbors: int = 20
    step1_ground_only: bool = True
    match_labels: bool = True
    planarity_ratio: float = 0.1
    edge_row_span: int = 2

    def __post_init__(self):
        positive = (
            self.max_correspondence_dist_m,
            self.max_iterations_step1,
            self.max_iterations_step2,
            self.translation_tol_m,
            self.rotation_tol_rad,
            self.lm_initial_damping,
            self.trim_factor,
        )
        if min(positive) <= 0:
            raise InvalidInputError("match parameters must be positive")
        if self.n_neighbors < 3:
            raise InvalidInputError("n_neighbors must be >= 3")


@dataclass
class Correspondence:
    """``p`` is the current-frame point; ``p_m`` is ``None`` for edges."""

    p: np.ndarray
    p_j: np.ndarray
    p_l: np.ndarray
    p_m: np.ndarray | None = None
    weight: float = 1.0

    @property
    def kind(self) -> str:
        return "edge" if self.p_m is None else "planar"


@dataclass
class CorrespondenceBatch:
    """Vectorized correspondences of one kind.

    Edges store the line point ``a`` and unit direction ``u``; planes store
    ``a`` and the unit normal ``n``.  ``ground`` flags the current features.
    """

    kind: str
    p: np.ndarray
    a: np.ndarray
    u: np.ndarray
    p_j: np.ndarray
    p_l: np.ndarray
    p_m: np.ndarray | None
    ground: np.ndarray

    def __len__(self):
        return len(self.p)

    def subset(self, mask) -> CorrespondenceBatch:
        return CorrespondenceBatch(
            self.kind,
            self.p[mask],
            self.a[mask],
            self.u[mask],
            self.p_j[mask],
            self.p_l[mask],
            None if self.p_m is None else self.p_m[mask],
            self.ground[mask],
        )

    def to_list(self, weights=None) -> list[Correspondence]:
        w = np.ones(len(self)) if weights is None else weights
        return [
            Correspondence(self.p[k], self.p_j[k], self.p_l[k], None if self.p_m is None else self.p_m[k], float(w[k]))
            for k in range(len(self))
        ]


@dataclass
class MotionResult:
    transform: RigidTransform
    converged: bool
    residual_rms: float
    iterations: tuple[int, int] = (0, 0)
    n_correspondences: tuple[int, int] = (0, 0)
    diagnostics: list[dict] = field(default_factory=list)

    def __getitem__(self, key):
        return getattr(self, key)

    def diagnostics_to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, ["iteration", "step", "residual_rms", "n_corr"])
            w.writeheader()
            w.writerows(self.diagnostics)


def point_to_edge_distance(p, p_j, p_l) -> float:
    """Distance from ``p`` to the line through ``p_j`` and ``p_l``."""
    p, p_j, p_l = (np.asarray(v, dtype=float) for v in (p, p_j, p_l))
    d = p_j - p_l
    nd = np.linalg.norm(d)
    if nd == 0.0:
        raise InvalidInputError("edge line points coincide")
    return float(np.linalg.norm(np.cross(p - p_j, p - p_l)) / nd)


def point_to_plane_distance(p, p_j, p_l, p_m) -> float:
    """Distance from ``p`` to the plane through ``p_j``, ``p_l``, ``p_m``."""
    p, p_j, p_l, p_m = (np.asarray(v, dtype=float) for v in (p, p_j, p_l, p_m))
    n = np.cross(p_j - p_l, p_j - p_m)
    nn = np.linalg.norm(n)
    scale = max(np.linalg.norm(p_j - p_l) * np.linalg.norm(p_j - p_m), 1e-300)
    if nn <= 1e-12 * scale:
        raise DegeneratePlaneError("plane points are collinear")
    return float(abs((p - p_j) @ n) / nn)


def _compatible(cur_ground: np.ndarray, tgt_ground: np.ndarray) -> np.ndarray:
    return cur_ground[:, None] == tgt_ground


class TargetIndex:
    """k-d trees over one previous feature set (or map neighborhood), built once per frame."""

    def __init__(self, previous: FeatureSet):
        self.edges = previous.edge_targets()
        self.planars = previous.planar_targets()
        self.edge_tree = cKDTree(self.edges.points) if len(self.edges) else None
        self.planar_tree = cKDTree(self.planars.points) if len(self.planars) else None

    def _query(self, tree, q, k, max_dist):
        n = tree.n
        k = min(k, n)
        d, idx = tree.query(q, k=k, distance_upper_bound=max_dist)
        d = np.asarray(d).reshape(len(q), k)
        idx = np.asarray(idx).reshape(len(q), k)
        ok = np.isfinite(d)
        idx = np.where(ok, idx, 0)
        return d, idx, ok

    def edges_for(self, cur: FeaturePoints, q: np.ndarray, params: MatchParams) -> CorrespondenceBatch:
        empty = _empty_batch("edge")
        if self.edge_tree is None or len(cur) == 0:
            return empty
        tg = self.edges
        d, idx, ok = self._query(self.edge_tree, q, params.n_neighbors, params.max_correspondence_dist_m)
        if params.match_labels:
            ok &= _compatible(cur.ground, tg.ground[idx])
        # j: nearest admissible; l: nearest admissible on a nearby other ring
        has_j = ok.any(axis=1)
        jcol = np.argmax(ok, axis=1)
        rows = np.arange(len(q))
        j = idx[rows, jcol]
        dr = np.abs(tg.rows[idx] - tg.rows[j][:, None])
        other = ok & (dr >= 1) & (dr <= params.edge_row_span)
        other &= np.any(tg.points[idx] != tg.points[j][:, None, :], axis=2)
        has_l = other.any(axis=1)
        l = idx[rows, np.argmax(other, axis=1)]
        sel = has_j & has_l
        if not sel.any():
            return empty
        pj, pl = tg.points[j[sel]], tg.points[l[sel]]
        u = pj - pl
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return CorrespondenceBatch("edge", cur.points[sel], pj, u, pj, pl, None, cur.ground[sel])

    def planars_for(self, cur: FeaturePoints, q: np.ndarray, params: MatchParams) -> CorrespondenceBatch:
        empty = _empty_batch("planar")
        if self.planar_tree is None or len(cur) == 0:
            return empty
        tg = self.planars
        d, idx, ok = self._query(self.planar_tree, q, params.n_neighbors, params.max_correspondence_dist_m)
        if params.match_labels:
            ok &= _compatible(cur.ground, tg.ground[idx])
        rows = np.arange(len(q))
        j = idx[rows, np.argmax(ok, axis=1)]
        pj = tg.points[j]
        evals, evecs = _masked_pca(tg.points[idx], ok)
        # enough spread in two directions and little out of plane
        sel = (ok.sum(axis=1) >= 3) & (evals[:, 1] > 1e-8) & (evals[:, 0] < params.planarity_ratio * evals[:, 1])
        if not sel.any():
            return empty
        pj, n, e1, e2 = pj[sel], evecs[sel, :, 0], evecs[sel, :, 2], evecs[sel, :, 1]
        spread = np.sqrt(evals[sel, 2])[:, None]
        return CorrespondenceBatch("planar", cur.points[sel], pj, n, pj, pj + spread * e1, pj + spread * e2, cur.ground[sel])


def _masked_pca(cand: np.ndarray, ok: np.ndarray):
    """Eigen-decomposition (ascending) of the covariance of each row's admissible candidates."""
    w = ok.astype(float)
    cnt = np.maximum(w.sum(axis=1), 1.0)
    mean = np.einsum("nk,nkd->nd", w, cand) / cnt[:, None]
    dev = (cand - mean[:, None, :]) * w[:, :, None]
    cov = np.einsum("nki,nkj->nij", dev, dev) / cnt[:, None, None]
    return np.linalg.eigh(cov)


def _empty_batch(kind: str) -> CorrespondenceBatch:
    z3 = np.zeros((0, 3))
    return CorrespondenceBatch(kind, z3, z3, z3, z3, z3, z3 if kind == "planar" else None, np.zeros(0, dtype=bool))


def find_correspondences(
    features: FeatureSet, previous: FeatureSet, guess: RigidTransform, params: MatchParams = MatchParams()
) -> list[Correspondence]:
    """Edge pairs and planar triples for every current feature that has admissible neighbors.

    Targets are the previous set's pools when present.  Only features with
    the same ground flag are compatible; edge partners lie on different rings
    and planar triples are non-collinear.
    """
    index = TargetIndex(previous)
    e = index.edges_for(features.edges, guess.apply(features.edges.points), params)
    p = index.planars_for(features.planars, guess.apply(features.planars.points), params)
    return e.to_list() + p.to_list()


def residuals(batch: CorrespondenceBatch, x: np.ndarray) -> np.ndarray:
    """Planar: signed distances, shape (N,).  Edge: perpendicular offset vectors, shape (N, 3)."""
    R = euler_to_matrix(x[3], x[4], x[5])
    q = batch.p @ R.T + x[:3]
    diff = q - batch.a
    if batch.kind == "planar":
        return np.einsum("ij,ij->i", diff, batch.u)
    return diff - np.einsum("ij,ij->i", diff, batch.u)[:, None] * batch.u


def jacobian(batch: CorrespondenceBatch, x: np.ndarray, free=(0, 1, 2, 3, 4, 5)) -> np.ndarray:
    """Analytic Jacobian of :func:`residuals` w.r.t. ``x[free]``.

    Planar: shape (N, len(free)); edge: shape (N, 3, len(free)).
    """
    dR = euler_derivatives(x[3], x[4], x[5])
    n = len(batch)
    dq = np.empty((n, 3, 6))
    dq[:, :, :3] = np.eye(3)
    for k in range(3):
        dq[:, :, 3 + k] = batch.p @ dR[k].T
    dq = dq[:, :, list(free)]
    if batch.kind == "planar":
        return np.einsum("ij,ijk->ik", batch.u, dq)
    proj = np.einsum("ij,ijk->ik", batch.u, dq)
    return dq - batch.u[:, :, None] * proj[:, None, :]


def _norms(r: np.ndarray) -> np.ndarray:
    return np.abs(r) if r.ndim == 1 else np.linalg.norm(r, axis=1)


def _trim_weights(r: np.ndarray, factor: float) -> np.ndarray:
    a = _norms(r)
    if len(a) == 0:
        return a
    med = np.median(a)
    return (a <= factor * med).astype(float) if med > 0 else np.ones_like(a)


def _cost(r, w) -> float:
    a = _norms(r)
    return float(np.sum(w * a * a))


class _Stage:
    def __init__(self, name, free, min_corr, max_iter, search):
        self.name, self.free, self.min_corr, self.max_iter, self.search = name, free, min_corr, max_iter, search


def _run_stage(stage: _Stage, x: np.ndarray, params: MatchParams, diag: list) -> tuple[np.ndarray, bool, float, int, int]:
    lam = params.lm_initial_damping
    free = list(stage.free)
    converged = False
    rms = 0.0
    n_corr = 0
    it = 0
    for it in range(1, stage.max_iter + 1):
        batch = stage.search(x)
        n_corr = len(batch)
        if n_corr < stage.min_corr:
            raise InsufficientConstraintsError(stage.name, n_corr, stage.min_corr)
        r = residuals(batch, x)
        w = _trim_weights(r, params.trim_factor)
        cost = _cost(r, w)
        rms = math.sqrt(cost / max(w.sum(), 1.0))
        diag.append({"iteration": it, "step": stage.name, "residual_rms": rms, "n_corr": n_corr})
        J = jacobian(batch, x, free)
        if J.ndim == 3:
            Jf = J.reshape(-1, len(free))
            rf = r.reshape(-1)
            wf = np.repeat(w, 3)
        else:
            Jf, rf, wf = J, r, w
        H = Jf.T @ (wf[:, None] * Jf)
        g = Jf.T @ (wf * rf)
        step = np.zeros(len(free))
        for _ in range(12):
            A = H + lam * np.diag(np.diag(H) + 1e-12)
            step = -np.linalg.lstsq(A, g, rcond=None)[0]
            x_new = x.copy()
            x_new[free] += step
            new_cost = _cost(residuals(batch, x_new), w)
            if new_cost <= cost:
                x = x_new
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            step = np.zeros(len(free))
        dt = [abs(s) for k, s in zip(free, step) if k < 3]
        dr = [abs(s) for k, s in zip(free, step) if k >= 3]
        if max(dt, default=0.0) < params.translation_tol_m and max(dr, default=0.0) < params.rotation_tol_rad:
            converged = True
            break
    return x, converged, rms, it, n_corr


def estimate_motion(
    current: FeatureSet,
    previous: FeatureSet,
    init: RigidTransform = RigidTransform.identity(),
    params: MatchParams = MatchParams(),
    index: TargetIndex | None = None,
) -> MotionResult:
    """Two-stage estimate of the transform taking ``current`` points into ``previous``'s frame.

    Raises:
        InsufficientConstraintsError: a stage found fewer than 10 planar or
            5 edge correspondences.
    """
    if len(current.edges) + len(current.planars) == 0:
        raise InvalidInputError("current feature set is empty")
    index = index or TargetIndex(previous)
    planars = current.planars
    if params.step1_ground_only and planars.ground.sum() > 0:
        ground_only = planars.subset(planars.ground)
        probe = index.planars_for(ground_only, init.apply(ground_only.points), params)
        if len(probe) >= MIN_PLANAR:
            planars = ground_only

    def planar_search(x):
        return index.planars_for(planars, RigidTransform.from_params(x).apply(planars.points), params)

    def edge_search(x):
        return index.edges_for(current.edges, RigidTransform.from_params(x).apply(current.edges.points), params)

    diag: list[dict] = []
    x = init.params.copy()
    x, c1, rms1, it1, n1 = _run_stage(_Stage("step1", STEP1_FREE, MIN_PLANAR, params.max_iterations_step1, planar_search), x, params, diag)
    x, c2, rms2, it2, n2 = _run_stage(_Stage("step2", STEP2_FREE, MIN_EDGE, params.max_iterations_step2, edge_search), x, params, diag)
    # combined RMS over both stages at the final estimate
    rb_p, rb_e = planar_search(x), edge_search(x)
    parts = [_norms(residuals(b, x)) for b in (rb_p, rb_e) if len(b)]
    allr = np.concatenate(parts) if parts else np.zeros(0)
    rms = float(np.sqrt(np.mean(allr**2))) if len(allr) else 0.0
    return MotionResult(RigidTransform.from_params(x), c1 and c2, rms, (it1, it2), (n1, n2), diag)
