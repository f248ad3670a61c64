"""Mixtures of hyperplanes: normals from moment covers, exact recovery by null vectors.

Samples of N(0, I - v v^T) lie exactly in v^perp, so once a cluster of
samples is (mostly) pure its smallest right singular vector is v.  The
moment tensor only has to localise each normal well enough to sort the
samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import EstimationError, PreconditionError
from ..estimators import hyperplane_moment_tensor
from ..models import HyperplaneParams, min_separation
from ..momentcover import dimension_reduce
from .common import cover_from_tensor, orthonormal_columns, tensor_error


@dataclass(frozen=True)
class HyperplaneConfig:
    """Constants of the hyperplane pipeline.

    Defaults are the proof constants; ``practical()`` rescales the ones that
    accept every direction at desk scale.
    """

    moment_z: float = 3.0
    reduce_w_floor: float = 1.0
    coarse_eps: float = 0.2
    filter_const: float = 10.0        # good: |c . x| <= const * eps^power ...
    filter_power: float = 0.5
    filter_freq: float | None = None  # ... for a fraction >= 1/(2k) of the samples (None -> 1/(2k))
    link_factor: float = 0.5          # sign-invariant clusters of good directions at link_factor * Delta
    target_const: float | None = None # stop halving at eps <= Delta/(const k^4 log(km)); None -> 1
    target_eps: float | None = None   # explicit stopping radius (overrides target_const)
    margin_const: float = 1.0         # assignment margin const * sqrt(k log(km) eps)
    trim_keep: float = 0.9            # fraction kept per trimming round of the null-vector fit
    trim_rounds: int = 50
    exact_tol: float = 1e-10

    @classmethod
    def practical(cls, **overrides) -> "HyperplaneConfig":
        base = cls(filter_const=1.0, filter_power=1.0, target_eps=0.02)
        return replace(base, **overrides)


def sign_invariant_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def direction_support(C: np.ndarray, Y: np.ndarray, margin: float) -> np.ndarray:
    """Fraction of samples with |c . x| <= margin for each row c."""
    out = np.empty(C.shape[0])
    step = max(1, 2_000_000 // max(Y.shape[0], 1))
    for s in range(0, C.shape[0], step):
        out[s:s + step] = (np.abs(Y @ C[s:s + step].T) <= margin).mean(axis=0)
    return out


def _filter_margin(eps: float, cfg: HyperplaneConfig) -> float:
    return cfg.filter_const * eps ** cfg.filter_power


def _unit_candidates(points: np.ndarray, eps: float, slack: float = 0.0) -> np.ndarray:
    """Cover points that can be eps-close to a unit vector, normalised."""
    norms = np.linalg.norm(points, axis=1)
    keep = (np.abs(norms - 1.0) <= eps + slack) & (norms > 0)
    return points[keep] / norms[keep, None]


def _greedy_sign_clusters(C: np.ndarray, support: np.ndarray, link: float, k: int) -> list[int]:
    """Best-supported directions first; each removes the directions within ``link`` of +-itself."""
    order = list(np.lexsort((np.arange(len(C)), -support)))
    chosen: list[int] = []
    while order and len(chosen) < k:
        i = order[0]
        chosen.append(int(i))
        order = [j for j in order[1:] if sign_invariant_distance(C[j], C[i]) > link]
    return chosen


def _slice_candidates(c: np.ndarray, T, eps_prev: float, k: int, delta: float, w_floor: float) -> np.ndarray:
    """Re-cover the normals near +-c on the slice c^perp (inside the reduced space)."""
    r = c.size
    P = orthonormal_columns(np.eye(r) - np.outer(c, c))
    if P.shape[1] == 0:
        return c[None, :]
    TP = T.apply_linear(P.T)
    R = 2 * eps_prev
    cov = cover_from_tensor(TP, k, R, eps_prev / 2, delta, w_floor)
    U = cov.points[np.linalg.norm(cov.points, axis=1) <= R + eps_prev / 2]
    U = U[np.sum(U * U, axis=1) < 1.0]
    cands = np.sqrt(1.0 - np.sum(U * U, axis=1))[:, None] * c[None, :] + U @ P.T
    return np.vstack([c[None, :], cands])


def robust_null_vector(X: np.ndarray, keep: float = 0.9, rounds: int = 50, tol: float = 1e-10) -> np.ndarray:
    """Unit v with X v = 0 on the samples that lie exactly in one hyperplane.

    Repeatedly fits the smallest right singular vector and keeps the
    ``keep`` fraction of rows with the smallest residual |x . v|/|x|, then
    solves once more on the rows whose residual is at the rounding level.
    """
    m = X.shape[1]
    if X.shape[0] < m - 1:
        raise EstimationError(f"{X.shape[0]} samples cannot determine a normal in dimension {m}")
    nrm = np.linalg.norm(X, axis=1)
    Xn = X[nrm > 0] / nrm[nrm > 0, None]
    rows = Xn
    v = np.linalg.svd(rows, full_matrices=False)[2][-1]
    for _ in range(rounds):
        res = np.abs(Xn @ v)
        exact = res <= tol
        if exact.sum() >= m - 1 and exact.mean() >= 0.5:
            rows = Xn[exact]
            break
        n_keep = max(m, int(math.ceil(keep * rows.shape[0])))
        rows = Xn[np.argsort(res, kind="stable")[:n_keep]]
        v = np.linalg.svd(rows, full_matrices=False)[2][-1]
    v = np.linalg.svd(rows, full_matrices=False)[2][-1]
    lead = np.argmax(np.abs(v))
    return v * np.sign(v[lead])


def check_hyperplane_separation(params: HyperplaneParams, Delta: float) -> bool:
    return min_separation(params, up_to_sign=True) >= Delta


def hyperplane_learn(samples, k: int, Delta: float, d: int = 2,
                     cfg: HyperplaneConfig | None = None) -> HyperplaneParams:
    """Normals (up to sign) of a uniform mixture of hyperplanes separated by Delta."""
    cfg = cfg or HyperplaneConfig()
    X = samples.xs if hasattr(samples, "xs") else np.atleast_2d(np.asarray(samples, dtype=float))
    n, m = X.shape
    if not Delta > 0:
        raise PreconditionError(f"separation gate: sign-invariant separation Delta must be > 0, got {Delta}")
    # 1: span of the normals
    T2, se2 = hyperplane_moment_tensor(X, 1, return_stderr=True)
    H = dimension_reduce(T2, cfg.reduce_w_floor, tensor_error(se2, cfg.moment_z), k)
    if H.shape[1] == 0:
        raise EstimationError("the order-2 moment shows no normal direction")
    Y = X @ H
    # 2: coarse cover of the normals from the stored degree-2d tensor
    T, se = hyperplane_moment_tensor(Y, d, return_stderr=True)
    delta = tensor_error(se, cfg.moment_z)
    w_floor = 1.0 / (2 * k)
    eps = cfg.coarse_eps
    cov = cover_from_tensor(T, k, 1.0 + eps, eps, delta, w_floor)
    C = _unit_candidates(cov.points, eps)
    if C.shape[0] == 0:
        raise EstimationError("the coarse cover has no point near the unit sphere")
    freq = cfg.filter_freq if cfg.filter_freq is not None else 1.0 / (2 * k)
    support = direction_support(C, Y, _filter_margin(eps, cfg))
    good = np.flatnonzero(support >= freq)
    if good.size == 0:
        raise EstimationError("no coarse direction passed the good-hypothesis filter")
    chosen = _greedy_sign_clusters(C[good], support[good], cfg.link_factor * Delta, k)
    reps = C[good][chosen]
    if reps.shape[0] < k:
        raise EstimationError(f"found {reps.shape[0]} direction clusters, fewer than k = {k}")
    # 3: halving on the slices around each representative
    if cfg.target_eps is not None:
        target = cfg.target_eps
    else:
        tc = cfg.target_const if cfg.target_const is not None else 1.0
        target = Delta / (tc * k ** 4 * math.log(k * m))
    refined = []
    for c in reps:
        e = eps
        while e > target:
            cands = _slice_candidates(c, T, e, k, delta, w_floor)
            e = e / 2
            sup = direction_support(cands, Y, _filter_margin(e, cfg))
            c = cands[int(np.argmax(sup))]
            c = c / np.linalg.norm(c)
        refined.append(c)
    Camb = np.array(refined) @ H.T
    Camb /= np.linalg.norm(Camb, axis=1, keepdims=True)
    # 4: sort samples by the margin rule and fit each normal exactly
    margin = cfg.margin_const * math.sqrt(k * math.log(k * m) * max(target, 1e-12))
    res = np.abs(X @ Camb.T)
    lab = np.argmin(res, axis=1)
    ok = res[np.arange(n), lab] <= margin
    normals, counts = [], []
    for j in range(k):
        sel = ok & (lab == j)
        if sel.sum() < m:
            raise EstimationError(f"cluster {j} received {int(sel.sum())} samples, fewer than m = {m}")
        normals.append(robust_null_vector(X[sel], cfg.trim_keep, cfg.trim_rounds, cfg.exact_tol))
        counts.append(int(sel.sum()))
    w = np.array(counts, dtype=float)
    return HyperplaneParams(w / w.sum(), np.array(normals))
