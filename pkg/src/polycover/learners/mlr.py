"""Mixtures of linear regressions: cover iteration, sorting by component, and density fits.

A (s, r)-cover is a set of at most s points with every regressor within r
of one of them.  Each round recentres the responses by a cover point,
conditions on a slab event that makes the recentring reliable, covers the
recentred regressors with the moment tensor, and keeps the candidates that
explain a fair share of the samples.  The declared radius halves per round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import EstimationError, PreconditionError
from ..estimators import SampleSet, SlabEvent, mlr_moment_tensor
from ..models import MLRParams
from ..momentcover import dimension_reduce
from .common import chain_clusters, cover_from_tensor, radius_from_eigen, tensor_error
from .gmm import UNASSIGNED, ClusterAssignment
from .mixture import MixtureHypothesis, RegressionCandidates, fit_mixture_weights


@dataclass(frozen=True)
class MLRConfig:
    """Constants of the MLR pipelines.

    Defaults are the proof constants; ``practical()`` rescales the ones whose
    proof values merge every cluster at desk scale.
    """

    eta: float = 0.01
    cluster_link_const: float | None = None   # close pairs: <= const (r + sigma); None -> 10 k^2 log(1/eta)
    event_const: float | None = None          # event margin const (r + sigma); None -> 2 log(1/eta)
    refine_margin_const: float = 2.0          # good hypothesis: |y - c.x| <= 2 (r + sigma)
    refine_link_const: float | None = None    # None -> 20/p_min (chain clustering of good hypotheses)
    refine_rule: str = "chain"                # "chain" or "support" (greedy by support)
    floor_const: float = 40.0                 # iteration floor const * k sigma / p_min
    target_const: float | None = None         # final radius const * Delta; None -> 1/(k^3 log(mk/p_min))
    snr_const: float = 10.0                   # noisy gate: Delta/sigma >= const * k log(m)
    d: int = 2
    moment_z: float = 3.0
    reduce_w_floor: float = 1.0               # keep eigenvalues above delta / reduce_w_floor (capped at k)
    cover_eps_factor: float = 1.0 / 16.0      # candidate cover radius = factor * r
    ls_rounds: int = 50                       # hard-assignment least-squares rounds
    exact_tol: float = 1e-9                   # residual tolerance for the noiseless exact solve
    max_rounds: int = 60
    refine_samples: int | None = 20_000       # samples scoring hypothesis support (None -> all)

    @classmethod
    def practical(cls, **overrides) -> "MLRConfig":
        # candidates within r/8 and a removal link of 3 (r/8 + sigma) keep the output radius near r/2
        base = cls(cluster_link_const=30.0, event_const=6.0, refine_link_const=3.0, refine_rule="support",
                   floor_const=1.0, target_const=1.0 / 8.0, cover_eps_factor=1.0 / 8.0)
        return replace(base, **overrides)

    def link(self, k: int) -> float:
        if self.cluster_link_const is not None:
            return self.cluster_link_const
        return 10 * k * k * math.log(1 / self.eta)

    def margin(self) -> float:
        return self.event_const if self.event_const is not None else 2 * math.log(1 / self.eta)


@dataclass(frozen=True)
class SRCover:
    """At most ``s`` points with every regressor (claimed) within ``r`` of one."""

    points: np.ndarray
    s: int
    r: float
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        if P.shape[0] > self.s:
            raise ValueError(f"{P.shape[0]} points exceed the size bound {self.s}")
        object.__setattr__(self, "points", P)

    def radius_to(self, betas: np.ndarray) -> float:
        """Measured radius: max over regressors of the distance to the nearest point."""
        D = np.linalg.norm(np.atleast_2d(betas)[:, None, :] - self.points[None, :, :], axis=2)
        return float(D.min(axis=1).max())


def _xy(samples) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(samples, SampleSet) or samples.ys is None:
        raise PreconditionError("MLR pipelines need a SampleSet with responses")
    return samples.xs, samples.ys


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MLRClustering:
    """Event E, classifier f and representatives g from a cover."""

    points: np.ndarray            # cover points
    labels: np.ndarray            # cluster of each cover point
    representatives: np.ndarray   # one per cluster (its first point)
    event: SlabEvent

    def f(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Cluster index of the cover point minimising |y - c . x|."""
        res = np.abs(y[:, None] - X @ self.points.T)
        return self.labels[np.argmin(res, axis=1)]

    def recentre(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        """y - f(x, y) . x with f mapped to its representative."""
        lab = self.f(X, y)
        return y - np.einsum("ij,ij->i", X, self.representatives[lab])

    def assign(self, samples) -> ClusterAssignment:
        X, y = _xy(samples)
        ok = self.event(X)
        lab = np.where(ok, self.f(X, y), UNASSIGNED)
        return ClusterAssignment(self.representatives, lab, float(ok.mean()))

    @property
    def radius(self) -> float:
        """Largest distance from a cover point to its representative."""
        return float(np.max(np.linalg.norm(self.points - self.representatives[self.labels], axis=1)))


def mlr_cluster(cover: SRCover, sigma: float, k: int, cfg: MLRConfig | None = None) -> MLRClustering:
    """Cluster cover points by chains of close pairs; E separates every non-close pair of points."""
    cfg = cfg or MLRConfig()
    P = cover.points
    scale = cover.r + sigma
    labels = chain_clusters(P, cfg.link(k) * scale)
    reps = np.array([P[np.flatnonzero(labels == c)[0]] for c in range(int(labels.max()) + 1)])
    dirs, thr = [], []
    margin = cfg.margin() * scale
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            if labels[i] == labels[j]:
                continue
            diff = P[i] - P[j]
            nrm = float(np.linalg.norm(diff))
            if nrm <= cfg.link(k) * scale:
                continue
            dirs.append(diff / nrm)
            thr.append(margin / nrm)
    event = SlabEvent(np.array(dirs).reshape(-1, P.shape[1]), np.array(thr))
    return MLRClustering(P, labels, reps, event)


# ---------------------------------------------------------------------------
# refinement and iteration
# ---------------------------------------------------------------------------

def hypothesis_support(C: np.ndarray, X: np.ndarray, y: np.ndarray, margin: float) -> np.ndarray:
    """Fraction of samples with |y - c . x| <= margin, for every row c of C."""
    out = np.empty(C.shape[0])
    step = max(1, 2_000_000 // max(X.shape[0], 1))
    for s in range(0, C.shape[0], step):
        out[s:s + step] = (np.abs(y[:, None] - X @ C[s:s + step].T) <= margin).mean(axis=0)
    return out


def mlr_refine_cover(cover: SRCover, samples, p_min: float, k: int, sigma: float,
                     cfg: MLRConfig | None = None) -> SRCover:
    """Keep hypotheses explaining >= p_min/4 of the samples, one per cluster, padded to k."""
    cfg = cfg or MLRConfig()
    X, y = _xy(samples)
    if cfg.refine_samples is not None:
        X, y = X[:cfg.refine_samples], y[:cfg.refine_samples]
    C = cover.points
    scale = cover.r + sigma
    support = hypothesis_support(C, X, y, cfg.refine_margin_const * scale)
    good = np.flatnonzero(support >= p_min / 4)
    if good.size == 0:
        raise EstimationError(f"no hypothesis among {len(C)} explains a p_min/4 = {p_min / 4:.3g} "
                              f"fraction of the samples")
    link = (cfg.refine_link_const if cfg.refine_link_const is not None else 20.0 / p_min) * scale
    order = good[np.lexsort((good, -support[good]))]
    if cfg.refine_rule == "chain":
        lab = chain_clusters(C[good], link)
        chosen = [int(good[np.flatnonzero(lab == c)[0]]) for c in range(int(lab.max()) + 1)]
        chosen.sort(key=lambda i: (-support[i], i))
    elif cfg.refine_rule == "support":
        # greedy: the best-supported remaining hypothesis removes its link-ball
        chosen, alive = [], order
        while alive.size:
            i = alive[0]
            chosen.append(int(i))
            rest = alive[1:]
            alive = rest[np.linalg.norm(C[rest] - C[i], axis=1) > link]
    else:
        raise PreconditionError(f"unknown refine rule {cfg.refine_rule!r}")
    chosen = chosen[:k]
    for i in order:
        if len(chosen) >= k:
            break
        if int(i) not in chosen:
            chosen.append(int(i))
    return SRCover(C[chosen], k, cover.r, {"support": support[chosen], "n_good": int(good.size)})


def _candidate_offsets(X: np.ndarray, y_rec: np.ndarray, event: SlabEvent, k: int, p_min: float,
                       R: float, eps: float, cfg: MLRConfig) -> np.ndarray:
    """Cover (ambient coordinates) of the recentred regressors from conditional moments."""
    s = SampleSet(X, y_rec)
    T2, se2 = mlr_moment_tensor(s, 1, event=event, return_stderr=True)
    # a lower threshold only adds directions: a heavy regressor's distance to U is
    # sqrt(2 delta / w) whichever eigenvalues above delta are kept
    U = dimension_reduce(T2, cfg.reduce_w_floor, tensor_error(se2, cfg.moment_z), k)
    if U.shape[1] == 0:
        return np.zeros((1, X.shape[1]))
    R = min(R, radius_from_eigen(T2, p_min, eps))
    T, se = mlr_moment_tensor(s, cfg.d, event=event, target=U, return_stderr=True)
    cov = cover_from_tensor(T, k, R, eps, tensor_error(se, cfg.moment_z), p_min)
    return np.vstack([cov.points @ U.T, np.zeros((1, X.shape[1]))])


def mlr_candidates(cover: SRCover, samples, k: int, p_min: float, sigma: float, eps: float,
                   cfg: MLRConfig) -> tuple[np.ndarray, MLRClustering]:
    """The points a + b for a in the cover and b in a cover of the recentred regressors."""
    X, y = _xy(samples)
    cl = mlr_cluster(cover, sigma, k, cfg)
    y_rec = cl.recentre(X, y)
    R = cl.radius + cover.r
    B = _candidate_offsets(X, y_rec, cl.event, k, p_min, max(R, eps), eps, cfg)
    # offsets are relative to the representatives; try them around every cover point
    A = np.vstack([cl.representatives, cover.points])
    cands = (A[:, None, :] + B[None, :, :]).reshape(-1, X.shape[1])
    return np.unique(cands, axis=0), cl


def iteration_floor(k: int, sigma: float, p_min: float, cfg: MLRConfig) -> float:
    return cfg.floor_const * k * sigma / p_min


def mlr_iterate_cover(cover: SRCover, samples, k: int, p_min: float, sigma: float,
                      cfg: MLRConfig | None = None) -> SRCover:
    """One round: from a (k, r)-cover to a (k, r/2)-cover."""
    cfg = cfg or MLRConfig()
    floor = iteration_floor(k, sigma, p_min, cfg)
    if cover.r < floor:
        raise PreconditionError(f"cover radius {cover.r:.4g} is below the iteration floor {floor:.4g}")
    eps = cfg.cover_eps_factor * cover.r
    cands, cl = mlr_candidates(cover, samples, k, p_min, sigma, eps, cfg)
    refined = mlr_refine_cover(SRCover(cands, len(cands), eps), samples, p_min, k, sigma, cfg)
    info = dict(refined.info, n_candidates=len(cands), n_clusters=len(cl.representatives),
                event_rate=float(cl.event(samples.xs).mean()))
    return SRCover(refined.points, k, cover.r / 2, info)


def initial_radius(samples, p_min: float) -> float:
    """|beta_i|^2 <= E[y^2]/p_min."""
    _, y = _xy(samples)
    return math.sqrt(float(np.mean(y * y)) / p_min)


def shrink_cover(samples, k: int, p_min: float, sigma: float, target: float,
                 cfg: MLRConfig, R: float | None = None) -> list[SRCover]:
    """Halving rounds from the cover {0} of radius R until the radius is <= target or hits the floor."""
    R = initial_radius(samples, p_min) if R is None else R
    m = samples.m
    covers = [SRCover(np.zeros((1, m)), k, R)]
    floor = iteration_floor(k, sigma, p_min, cfg)
    for _ in range(cfg.max_rounds):
        cur = covers[-1]
        if cur.r <= target or cur.r < floor:
            break
        covers.append(mlr_iterate_cover(cur, samples, k, p_min, sigma, cfg))
    return covers


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _solve_components(X, y, lab, k):
    betas = np.zeros((k, X.shape[1]))
    for j in range(k):
        sel = lab == j
        if sel.sum() < X.shape[1]:
            raise EstimationError(f"component {j} has {int(sel.sum())} samples, fewer than m = {X.shape[1]}")
        betas[j] = np.linalg.lstsq(X[sel], y[sel], rcond=None)[0]
    return betas


def sort_by_component(cover: SRCover, samples, k: int, Delta: float) -> np.ndarray:
    """Component label per sample: nearest cover hypothesis, then hypotheses grouped within 2 Delta/3."""
    X, y = _xy(samples)
    groups = chain_clusters(cover.points, 2 * Delta / 3)
    if groups.max() + 1 != k:
        raise EstimationError(f"the final cover splits into {groups.max() + 1} groups, expected k = {k}")
    res = np.abs(y[:, None] - X @ cover.points.T)
    return groups[np.argmin(res, axis=1)]


def mlr_parameter_estimate(samples, k: int, p_min: float, sigma: float, Delta: float, eps: float = 0.05,
                           noiseless: bool = False, cfg: MLRConfig | None = None,
                           return_trace: bool = False):
    """Regressors and weights of a separated MLR (exact when noiseless)."""
    cfg = cfg or MLRConfig()
    X, y = _xy(samples)
    m = X.shape[1]
    if noiseless != (sigma == 0):
        raise PreconditionError("the noiseless flag must be set exactly when sigma = 0")
    if not noiseless and Delta / sigma < cfg.snr_const * k * math.log(max(m, 2)):
        raise PreconditionError(f"separation gate: Delta/sigma = {Delta / sigma:.3g} is below "
                                f"{cfg.snr_const:g} k log m = {cfg.snr_const * k * math.log(max(m, 2)):.3g}")
    if k == 1:
        covers = [SRCover(np.zeros((1, m)), 1, initial_radius(samples, p_min))]
        lab = np.zeros(X.shape[0], dtype=np.int64)
    else:
        tc = cfg.target_const if cfg.target_const is not None else 1.0 / (k ** 3 * math.log(m * k / p_min))
        covers = shrink_cover(samples, k, p_min, sigma, tc * Delta, cfg)
        lab = sort_by_component(covers[-1], samples, k, Delta)
    betas = _solve_components(X, y, lab, k)
    for _ in range(cfg.ls_rounds):
        new = np.argmin(np.abs(y[:, None] - X @ betas.T), axis=1)
        if np.array_equal(new, lab):
            break
        lab = new
        betas = _solve_components(X, y, lab, k)
    if noiseless:
        # every correctly sorted sample fits its regressor exactly; solve on those alone
        tol = cfg.exact_tol * max(1.0, float(np.sqrt(np.mean(y * y))))
        res = np.abs(y - np.einsum("ij,ij->i", X, betas[lab]))
        lab = np.where(res <= tol, lab, -1)
        betas = _solve_components(X, y, lab, k)
    w = np.bincount(lab[lab >= 0], minlength=k).astype(float)
    params = MLRParams(w / w.sum(), betas, sigma)
    return (params, covers) if return_trace else params


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------

def mlr_density_estimate(samples, k: int, p_min: float, sigma: float, eps: float = 0.1,
                         cfg: MLRConfig | None = None) -> MixtureHypothesis:
    """Cover to radius ~ k sigma / p_min, one finer candidate pass at eps sigma, then fit weights."""
    cfg = cfg or MLRConfig()
    if sigma <= 0:
        raise PreconditionError("MLR density estimation needs sigma > 0")
    X, y = _xy(samples)
    floor = iteration_floor(k, sigma, p_min, cfg)
    covers = shrink_cover(samples, k, p_min, sigma, floor, cfg)
    cands, _ = mlr_candidates(covers[-1], samples, k, p_min, sigma, eps * sigma, cfg)
    return fit_mixture_weights(RegressionCandidates(cands, sigma), np.hstack([X, y[:, None]]), eps)
