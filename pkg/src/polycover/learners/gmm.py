"""Spherical Gaussian mixtures: rough clustering, density and parameter estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from ..errors import EstimationError, PreconditionError
from ..estimators import SampleSet, gmm_moment_tensor
from ..models import GMMParams, min_separation
from ..momentcover import dimension_reduce
from .common import (
    chain_clusters,
    cover_from_tensor,
    greedy_separated,
    orthonormal_columns,
    radius_from_eigen,
    tensor_error,
)
from .mixture import GaussianCandidates, MixtureHypothesis, fit_mixture_weights

UNASSIGNED = -1


@dataclass(frozen=True)
class GMMConfig:
    """Constants of the GMM pipelines.

    Defaults are the proof constants.  ``practical()`` rescales the ones
    that are far from tight at small sizes.
    """

    eta: float = 0.01
    rough_link_const: float = 10.0        # linkage 10 (sqrt m + log 1/eta)
    rough_assign_const: float = 4.0       # assignment radius 4 (sqrt m + log 1/eta)
    rough_points: int = 2000              # samples used to form the rough clusters
    d: int = 2
    cover_eps: float = 0.5
    moment_z: float = 3.0                 # tensor error bound = z * standard error
    separation_const: float = 60.0        # separation >= const sqrt(log 1/p_min)
    lp_margin_const: float = 2.0          # halfspace margin 2 sqrt(log 1/p_min)
    lp_samples: int = 1000
    subset_const: float = 4.0             # good subset separation 4 sqrt(log 1/p_min)
    link_const: float = 30.0              # same-cluster linkage 30 sqrt(log 1/p_min)
    center_rule: str = "first"            # rough-cluster center: first member or member mean
    lloyd_rounds: int = 10
    weight_floor_eps: float | None = None

    @classmethod
    def practical(cls, **overrides) -> "GMMConfig":
        base = cls(separation_const=20.0, link_const=10.0, rough_link_const=1.0)
        return replace(base, **overrides)


@dataclass(frozen=True)
class ClusterAssignment:
    centers: np.ndarray            # (c, m)
    assign: np.ndarray             # per-sample center index or UNASSIGNED
    event_rate: float
    points: np.ndarray | None = None
    point_labels: np.ndarray | None = None
    assign_radius: float = math.inf

    def classify(self, X: np.ndarray) -> np.ndarray:
        """Center index of the cluster holding the nearest clustered point within the radius."""
        X = np.atleast_2d(X)
        dist, idx = cKDTree(self.points).query(X)
        out = self.point_labels[idx].copy()
        out[dist > self.assign_radius] = UNASSIGNED
        return out


def gmm_rough_cluster(samples, eta: float, link_const: float = 10.0, assign_const: float = 4.0,
                      n_points: int | None = 2000, center_rule: str = "first") -> ClusterAssignment:
    """Single-linkage clusters at 10 (sqrt m + log 1/eta), one center per cluster.

    The first ``n_points`` samples define the clusters.  With the default
    ``center_rule="first"`` each center is the first sample of its cluster;
    cluster means (``"mean"``) would make the recentred component means sum
    to zero, a linear dependence that degenerates low-degree covers.  Every
    sample is then assigned through ``classify``.
    """
    X = samples.xs if isinstance(samples, SampleSet) else np.atleast_2d(np.asarray(samples, dtype=float))
    n, m = X.shape
    scale = math.sqrt(m) + math.log(1.0 / eta)
    P = X[: n if n_points is None else min(n, n_points)]
    labels = chain_clusters(P, link_const * scale)
    if center_rule == "first":
        centers = np.array([P[np.flatnonzero(labels == c)[0]] for c in range(labels.max() + 1)])
    elif center_rule == "mean":
        centers = np.array([P[labels == c].mean(axis=0) for c in range(labels.max() + 1)])
    else:
        raise PreconditionError(f"unknown center rule {center_rule!r}")
    ca = ClusterAssignment(centers, np.zeros(0, dtype=np.int64), 1.0, P, labels, assign_const * scale)
    assign = ca.classify(X)
    return replace(ca, assign=assign, event_rate=float(np.mean(assign != UNASSIGNED)))


def recentre(X: np.ndarray, ca: ClusterAssignment) -> np.ndarray:
    keep = ca.assign != UNASSIGNED
    return X[keep] - ca.centers[ca.assign[keep]]


@dataclass(frozen=True)
class GMMCover:
    candidates: np.ndarray     # (s, m) candidate means in the ambient space
    n_rough_clusters: int
    cover_size: int


def _cluster_candidates(Xj: np.ndarray, k: int, w_floor: float, eps: float, cfg: GMMConfig) -> np.ndarray:
    """Candidate offsets (ambient coordinates) for the recentred samples of one rough cluster."""
    T2, se2 = gmm_moment_tensor(Xj, 1, return_stderr=True)
    U = dimension_reduce(T2, w_floor, tensor_error(se2, cfg.moment_z), k)
    if U.shape[1] == 0:
        return np.zeros((1, Xj.shape[1]))
    Y = Xj @ U
    rc2 = gmm_rough_cluster(Y, cfg.eta, cfg.rough_link_const, cfg.rough_assign_const, cfg.rough_points,
                            cfg.center_rule)
    out = []
    for c2 in range(len(rc2.centers)):
        sel = rc2.assign == c2
        Y1 = Y[sel] - rc2.centers[c2]
        w2 = min(1.0, w_floor * Y.shape[0] / max(sel.sum(), 1))
        T2h = gmm_moment_tensor(Y1, 1)
        R = radius_from_eigen(T2h, w2, eps)
        T, se = gmm_moment_tensor(Y1, cfg.d, return_stderr=True)
        cov = cover_from_tensor(T, k, R, eps, tensor_error(se, cfg.moment_z), w2)
        out.append((rc2.centers[c2] + cov.points) @ U.T)
        out.append(rc2.centers[c2][None, :] @ U.T)
    return np.vstack(out)


def gmm_candidate_cover(samples, k: int, w_floor: float, eps: float, cfg: GMMConfig) -> GMMCover:
    """Candidate means: rough clusters, then per cluster recentre, reduce, recluster and cover.

    ``w_floor`` is the smallest mixing weight that must be covered; inside a
    rough cluster it is rescaled by the cluster's sample share.
    """
    X = samples.xs if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    rc = gmm_rough_cluster(X, cfg.eta, cfg.rough_link_const, cfg.rough_assign_const, cfg.rough_points,
                           cfg.center_rule)
    cands, size = [], 0
    for j, C in enumerate(rc.centers):
        sel = rc.assign == j
        if sel.sum() < 2:
            continue
        share = sel.mean()
        if share < w_floor / 2:
            continue
        off = _cluster_candidates(X[sel] - C, k, min(1.0, w_floor / share), eps, cfg)
        cands.append(C + off)
        size += len(off)
    if not cands:
        raise EstimationError("every rough cluster was too small to cover")
    return GMMCover(np.vstack(cands), len(rc.centers), size)


def gmm_density_estimate(samples, k: int, d: int = 2, eps: float = 0.1, cfg: GMMConfig | None = None,
                         w_floor: float | None = None) -> MixtureHypothesis:
    """Hypothesis mixture of N(c, I) over cover candidates c, weights by maximum likelihood."""
    cfg = replace(cfg or GMMConfig(), d=d)
    w_floor = w_floor if w_floor is not None else eps / k
    gc = gmm_candidate_cover(samples, k, w_floor, eps, cfg)
    floor_eps = cfg.weight_floor_eps if cfg.weight_floor_eps is not None else eps
    X = samples.xs if isinstance(samples, SampleSet) else samples
    return fit_mixture_weights(GaussianCandidates(gc.candidates), X, floor_eps)


def good_center_lp(c: np.ndarray, others: np.ndarray, T: np.ndarray, p_min: float,
                   margin_const: float = 2.0) -> float:
    """Largest sum_x u_x / |T| over weight functions u satisfying the halfspace constraints.

    For every other candidate c', the u-mass of samples beyond the
    margin in the direction of c' - c is at most p_min^2 |T| / 10.
    """
    n = T.shape[0]
    margin = margin_const * math.sqrt(math.log(1.0 / p_min))
    diff = others - c
    norms = np.linalg.norm(diff, axis=1)
    diff = diff[norms > 0] / norms[norms > 0, None]
    beyond = ((T - c) @ diff.T) > margin      # (n, #others)
    rows = beyond.T
    rows = rows[rows.any(axis=1)]
    cap = p_min ** 2 * n / 10
    if rows.shape[0] == 0:
        return 1.0
    # drop duplicate constraints to keep the LP small
    rows = np.unique(rows, axis=0)
    res = linprog(-np.ones(n), A_ub=rows.astype(float), b_ub=np.full(rows.shape[0], cap),
                  bounds=(0.0, 1.0), method="highs")
    if res.status != 0:
        raise EstimationError(f"good-center LP failed: {res.message}")
    return float(-res.fun / n)


def _lloyd(X: np.ndarray, means: np.ndarray, rounds: int) -> tuple[np.ndarray, np.ndarray]:
    for _ in range(rounds):
        lab = cKDTree(means).query(X)[1]
        means = np.array([X[lab == j].mean(axis=0) if np.any(lab == j) else means[j] for j in range(len(means))])
    lab = cKDTree(means).query(X)[1]
    return means, lab


def gmm_parameter_estimate(samples, k: int, p_min: float, eps: float = 0.1,
                           cfg: GMMConfig | None = None) -> GMMParams:
    """Means and weights of a separated spherical mixture."""
    cfg = cfg or GMMConfig()
    if not 0 < p_min <= 1.0 / k + 1e-12:
        raise PreconditionError(f"p_min must lie in (0, 1/k], got {p_min}")
    X = samples.xs if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    if k == 1:
        mu = X.mean(axis=0, keepdims=True)
        return GMMParams(np.ones(1), mu)
    L = math.sqrt(math.log(1.0 / p_min))
    gc = gmm_candidate_cover(X, k, p_min, cfg.cover_eps, cfg)
    T = X[-min(cfg.lp_samples, X.shape[0]):]
    cands = gc.candidates
    scores = np.array([good_center_lp(c, np.delete(cands, i, axis=0), T, p_min, cfg.lp_margin_const)
                       for i, c in enumerate(cands)])
    good = np.flatnonzero(scores >= p_min / 2)
    if good.size == 0:
        raise EstimationError("no candidate mean passed the good-center test")
    order = good[np.lexsort((good, -scores[good]))]
    sub = greedy_separated(cands, order, cfg.subset_const * L)
    Cp = cands[sub]
    lab = chain_clusters(Cp, cfg.link_const * L)
    n_clusters = int(lab.max()) + 1
    near = cKDTree(Cp).query(X)[1]
    sample_lab = lab[near]
    if n_clusters < k:
        raise EstimationError(f"found {n_clusters} clusters of candidate means, fewer than k = {k}")
    sizes = np.bincount(sample_lab, minlength=n_clusters)
    keep = np.sort(np.argsort(-sizes, kind="stable")[:k])
    means = np.array([X[sample_lab == j].mean(axis=0) for j in keep])
    means, final = _lloyd(X, means, cfg.lloyd_rounds)
    w = np.bincount(final, minlength=k) / X.shape[0]
    return GMMParams(w, means)


def check_separation(params: GMMParams, p_min: float, const: float) -> bool:
    return min_separation(params) >= const * math.sqrt(math.log(1.0 / p_min))
