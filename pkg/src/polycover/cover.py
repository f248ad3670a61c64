"""Epsilon-covers of near-zero sets of polynomial subspaces.

For a subspace V of degree-d homogeneous polynomials the near-zero set is

    S(V, R, delta) = {x : |x| <= R and |p(x)| <= delta |p| for every p in V}.

``compute_cover`` returns a finite point set such that every point of S is
within ``eps`` of one of them.  It recurses on the degree (good points of
the split) and on the ambient dimension (bad points), with a lattice cover
of the ball as the base case.  Every returned point is tagged with the
branch that produced it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import CoverResourceError, PreconditionError
from .polyspace import (
    PolySubspace,
    bilinear_slice,
    monomial_array,
    monomial_index,
    restrict_subspace_to_coords,
    rotate_subspace,
    space_dim,
    tensor_of,
    HomogeneousPoly,
)

TAGS = ("base-lattice", "linear-base", "good-branch", "bad-branch", "ambient-reduced")


@dataclass(frozen=True)
class CoverParams:
    """Parameters of the cover recursion.

    ``split_dim``, ``k_prime``, ``eps_prime`` and ``eta`` override the
    recursion's default parameter choices (useful to exercise the recursion
    on small instances; every choice keeps the output sound).
    """

    R: float
    eps: float
    delta: float = 0.0
    C: float = 1.0
    eta_denominator_power: float = 4.0
    gamma_mult: float = 10.0
    base_dim_factor: float = 1.0
    prune: bool = True
    prune_depth: int = 2
    ambient_reduce: bool = False
    max_points: int = 2_000_000
    split_dim: int | None = None
    k_prime: int | None = None
    eps_prime: float | None = None
    eta: float | None = None
    threads: int = 1

    def __post_init__(self):
        if not self.R > 0:
            raise PreconditionError(f"cover.R must be positive, got {self.R}")
        if not 0 < self.eps <= self.R:
            raise PreconditionError(f"cover.eps must satisfy 0 < eps <= R, got eps={self.eps}, R={self.R}")
        if not self.delta >= 0:
            raise PreconditionError(f"cover.delta must be non-negative, got {self.delta}")
        if self.prune_depth < 0:
            raise PreconditionError("cover.prune_depth must be >= 0")


@dataclass(frozen=True)
class Cover:
    points: np.ndarray
    eps: float
    R: float
    delta: float
    trace: tuple[str, ...] = field(default=())

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if pts.size else pts.reshape(0, 0)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(self.trace) != len(pts):
            raise ValueError("one trace entry per point is required")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def tags(self) -> tuple[str, ...]:
        """Top-level branch tag of every point."""
        return tuple(t.split("/", 1)[0] for t in self.trace)

    def distances(self, X: np.ndarray) -> np.ndarray:
        """Distance from each row of X to the nearest cover point (inf if empty)."""
        from scipy.spatial import cKDTree

        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.points) == 0:
            return np.full(X.shape[0], np.inf)
        dist, _ = cKDTree(self.points).query(X)
        return dist


# ---------------------------------------------------------------------------
# lattice covers
# ---------------------------------------------------------------------------

def lattice_spacing(m: int, eps: float) -> float:
    # the covering radius of h*Z^m is h*sqrt(m)/2; shave a hair so rounding never exceeds eps
    return 2.0 * eps / math.sqrt(m) * (1.0 - 1e-12)


def _box_excluded(centers, half, R, V, delta, prune, slack_tol):
    """Boolean mask of boxes certified disjoint from S(V, R, delta)."""
    gap = np.maximum(np.abs(centers) - half, 0.0)
    out = np.linalg.norm(gap, axis=1) > R
    if prune and V is not None and V.dim > 0:
        live = ~out
        if np.any(live):
            c = centers[live]
            rho = np.linalg.norm(half[live], axis=1)
            nrm = np.linalg.norm(c, axis=1)
            top = np.maximum(nrm, np.minimum(R, nrm + rho))
            lip = V.d * top ** (V.d - 1) * rho
            ratio = V.max_ratio(c)
            out[live] = ratio > delta + lip + slack_tol
    return out


def _lattice_cover_points(m: int, R: float, eps: float, V: PolySubspace | None = None,
                          delta: float = 0.0, prune: bool = False, prune_depth: int = 0,
                          max_points: int = 2_000_000) -> np.ndarray:
    """Points of the lattice h*Z^m whose Voronoi cells may meet S(V, R, delta).

    Cells are found by branch and bound over boxes of lattice indices; a box
    is discarded only when it provably misses the ball or (with pruning)
    when the Lipschitz bound certifies that no point of S lies in it.
    Surviving single cells are subdivided ``prune_depth`` more times and are
    kept if any sub-box survives.
    """
    h = lattice_spacing(m, eps)
    n = int(math.floor((R + 0.5 * h) / h))
    slack_tol = 1e-9 * max(1.0, R ** (V.d if V is not None else 1))
    lo = np.full((1, m), -n, dtype=np.int64)
    hi = np.full((1, m), n, dtype=np.int64)
    bits = (np.arange(1 << m)[:, None] >> np.arange(m)[None, :]) & 1  # (2^m, m)
    while np.any(hi > lo):
        mid = (lo + hi) // 2
        # split every box along every axis; children with lo > hi are empty
        c_lo = np.where(bits[None], mid[:, None] + 1, lo[:, None])
        c_hi = np.where(bits[None], hi[:, None], mid[:, None])
        flat = (hi == lo)[:, None, :] & (bits[None] == 1)
        c_lo = np.where(flat, lo[:, None], c_lo)
        valid = np.all(c_lo <= c_hi, axis=2) & ~np.any(flat, axis=2)
        lo, hi = c_lo[valid], c_hi[valid]
        centers = 0.5 * (lo + hi) * h
        half = (0.5 * (hi - lo) + 0.5) * h
        keep = ~_box_excluded(centers, half, R, V, delta, prune, slack_tol)
        lo, hi = lo[keep], hi[keep]
        if len(lo) > max_points:
            raise CoverResourceError(f"lattice cover exceeds max_points={max_points}")
        if len(lo) == 0:
            return np.zeros((0, m))
    cells = lo.astype(float) * h
    if prune and V is not None and V.dim > 0 and prune_depth > 0 and len(cells):
        owner = np.arange(len(cells))
        centers = cells.copy()
        half = np.full(m, 0.5 * h)
        offsets = np.array(np.meshgrid(*[[-0.5, 0.5]] * m, indexing="ij")).reshape(m, -1).T
        for _ in range(prune_depth):
            half = half / 2
            centers = (centers[:, None, :] + 2 * offsets[None, :, :] * half).reshape(-1, m)
            owner = np.repeat(owner, len(offsets))
            keep = ~_box_excluded(centers, np.broadcast_to(half, centers.shape), R, V, delta, True, slack_tol)
            centers, owner = centers[keep], owner[keep]
            if len(centers) > max_points * (1 << m):
                raise CoverResourceError("prune refinement exceeds the point budget")
        cells = cells[np.unique(owner)]
    return cells


def ball_cover(m: int, R: float, eps: float) -> Cover:
    """Deterministic lattice cover of the closed ball of radius R."""
    if m < 1:
        raise ValueError("m must be >= 1")
    pts = _lattice_cover_points(m, R, eps)
    return Cover(pts, eps, R, 0.0, ("base-lattice",) * len(pts))


# ---------------------------------------------------------------------------
# building blocks of the recursion
# ---------------------------------------------------------------------------

def linear_zero_subspace(V: PolySubspace) -> np.ndarray:
    """Orthonormal columns spanning the common zero set of the linear forms in V."""
    if V.d != 1:
        raise ValueError("linear_zero_subspace needs d = 1")
    if V.dim == 0:
        return np.eye(V.m)
    _, s, Vt = np.linalg.svd(V.rows, full_matrices=True)
    rank = int(np.sum(s > 1e-12))
    return Vt[rank:].T.copy()


def slice_maps(W: PolySubspace, mp: int) -> np.ndarray:
    """Coefficient tensor M with A_x0 = sum_i x0[i] * M[i] (shape m' x dim_y x dim W)."""
    m, d = W.m, W.d
    my = m - mp
    mons = monomial_array(m, d)
    yidx = monomial_index(my, d - 1)
    M = np.zeros((mp, len(yidx), W.dim))
    root_d = math.sqrt(d)
    for a in W.ambient_indices:
        alpha = mons[a]
        i = int(np.flatnonzero(alpha[:mp])[0])
        beta = tuple(int(v) for v in alpha[mp:])
        M[i, yidx[beta], :] = root_d * W.rows[:, a]
    return M


def evaluation_map(W: PolySubspace, x0, maps: np.ndarray | None = None) -> np.ndarray:
    """Matrix of p -> p(x0, .) from W (orthonormal coords) to degree-(d-1) polys in y."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if maps is None:
        maps = slice_maps(W, x0.size)
    return np.tensordot(x0, maps, axes=(0, 0))


@dataclass(frozen=True)
class Classification:
    good: bool
    n_small: int
    V_c: np.ndarray | None  # orthonormal rows spanning V_c (orthonormal coordinates)


def classify_point(A: np.ndarray, k_prime: int, eta: float) -> Classification:
    """Good iff at most k' left singular values of A are below eta."""
    if k_prime < 0 or not eta > 0:
        raise ValueError("need k' >= 0 and eta > 0")
    rows = A.shape[0]
    if A.size == 0:
        return Classification(rows <= k_prime, rows, np.zeros((0, rows)) if rows <= k_prime else None)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    big = s >= eta
    n_small = rows - int(big.sum())
    if n_small > k_prime:
        return Classification(False, n_small, None)
    return Classification(True, n_small, U[:, big].T.copy())


def bad_point_hyperplane(bad_points: Sequence, gamma: float, dim: int | None = None) -> np.ndarray:
    """Greedy subspace H (orthonormal columns) with every bad point within gamma of it."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    pts = np.asarray(bad_points, dtype=float)
    if pts.size == 0:
        return np.zeros((dim or 0, 0))
    pts = pts.reshape(len(pts), -1)
    basis: list[np.ndarray] = []
    for p in pts:
        r = p.copy()
        for _ in range(2):
            for b in basis:
                r -= (b @ r) * b
        nr = float(np.linalg.norm(r))
        if nr > gamma:
            basis.append(r / nr)
    if not basis:
        return np.zeros((pts.shape[1], 0))
    return np.array(basis).T


@dataclass(frozen=True)
class AmbientReduction:
    H: np.ndarray           # orthonormal columns (m x h)
    V_H: PolySubspace | None  # polynomials of V in the H coordinates (None when h = 0)
    distance_bound: float   # every x in S with |x| >= eps lies this close to span(H)
    threshold: float


def reduce_ambient(V: PolySubspace, params: CoverParams) -> AmbientReduction:
    """Subspace H such that S(V,R,delta) lies near H outside the eps-ball at the origin."""
    m, d, k = V.m, V.d, V.codim
    R, eps, delta = params.R, params.eps, params.delta
    if not delta < eps ** d / 2:
        raise PreconditionError(f"ambient reduction needs delta < eps^d/2, got delta={delta}, eps={eps}, d={d}")
    if k == 0:
        return AmbientReduction(np.zeros((m, 0)), None, delta / eps ** (d - 1), math.inf)
    thr = eps / (4.0 * math.sqrt(k) * R)
    mats = []
    cols = []
    for u in V.complement_rows:
        A = tensor_of(HomogeneousPoly.from_ortho(m, d, u)).to_dense().reshape(m, -1)
        mats.append(A)
        Uf, s, _ = np.linalg.svd(A, full_matrices=False)
        cols.append(Uf[:, s >= thr])
    stacked = np.hstack(cols)
    if stacked.shape[1]:
        Uh, sh, _ = np.linalg.svd(stacked, full_matrices=False)
        H = Uh[:, sh > 1e-10]
    else:
        H = np.zeros((m, 0))
    big = np.hstack(mats)
    resid = big - H @ (H.T @ big)
    s_out = float(np.linalg.norm(resid, 2)) if resid.size else 0.0
    dist = R * s_out + delta / eps ** (d - 1)
    h = H.shape[1]
    if h == 0:
        return AmbientReduction(H, None, dist, thr)
    Q = np.hstack([H, _complete_basis(H)])
    V_H = restrict_subspace_to_coords(rotate_subspace(V, Q), list(range(h)))
    return AmbientReduction(H, V_H, dist, thr)


def _complete_basis(H: np.ndarray) -> np.ndarray:
    m, h = H.shape
    if h == m:
        return np.zeros((m, 0))
    if h == 0:
        return np.eye(m)
    U, _, _ = np.linalg.svd(H, full_matrices=True)
    return U[:, h:]


# ---------------------------------------------------------------------------
# the recursion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecursionPlan:
    k: int
    k_prime: int
    split_dim: int
    eps_prime: float
    eta: float
    gamma: float
    base_reason: str | None


def recursion_plan(V: PolySubspace, p: CoverParams) -> RecursionPlan:
    """Parameters of one level of the recursion, and the reason to stop if any."""
    m, d, k = V.m, V.d, V.codim
    kp = p.k_prime if p.k_prime is not None else (int(math.floor(k ** (1 - 1 / d) + 1e-12)) if k > 0 else 0)
    mp = p.split_dim if p.split_dim is not None else (int(math.ceil(3 * k / kp)) if kp >= 1 else m)
    eps_p = p.eps_prime if p.eps_prime is not None else p.delta / ((2 * p.R) ** (d - 1) * d)
    if p.eta is not None:
        eta = p.eta
    else:
        eta = p.eps * (p.eps / p.R) ** 4 / (d * max(k, 1) * m * max(p.C, 1.0)) ** p.eta_denominator_power
    gamma = p.gamma_mult * eta ** 0.25 * math.sqrt(max(k, 1)) * p.R ** 0.75 * d ** (-0.125)
    threshold = max(2.0, p.base_dim_factor * d * d * k ** (1 / d)) if k > 0 else 2.0
    reason = None
    if m <= threshold:
        reason = "small ambient dimension"
    elif k <= 1:
        reason = "codimension at most one"
    elif kp < 1 or kp >= k:
        reason = "k' >= k"
    elif mp >= m or mp < 1:
        reason = "m' >= m"
    elif not 0 < eps_p < p.eps:
        reason = "eps' outside (0, eps)"
    elif eps_p > p.R:
        reason = "eps' > R"
    elif eps_p + gamma >= p.eps:
        reason = "eps - eps' too small for gamma"
    return RecursionPlan(k, kp, mp, eps_p, eta, gamma, reason)


def _finish(points: np.ndarray, paths: list[str], V: PolySubspace, p: CoverParams):
    """Drop useless points, canonicalise order, remove duplicates."""
    if len(points) == 0:
        return points.reshape(0, V.m), []
    keep = np.linalg.norm(points, axis=1) <= p.R + p.eps
    if p.prune and V.dim > 0:
        # a point of S within eps of c has norm <= min(R, |c| + eps)
        nrm = np.linalg.norm(points, axis=1)
        lip = V.d * np.maximum(nrm, np.minimum(p.R, nrm + p.eps)) ** (V.d - 1) * p.eps
        keep &= V.max_ratio(points) <= p.delta + lip + 1e-9 * max(1.0, p.R ** V.d)
    points = points[keep]
    paths = [t for t, k in zip(paths, keep) if k]
    if len(points) == 0:
        return points, []
    order = np.lexsort(points.T[::-1])
    points = points[order]
    paths = [paths[i] for i in order]
    uniq = np.ones(len(points), dtype=bool)
    uniq[1:] = np.any(points[1:] != points[:-1], axis=1)
    return points[uniq], [t for t, u in zip(paths, uniq) if u]


def _base_lattice(V: PolySubspace, p: CoverParams):
    pts = _lattice_cover_points(V.m, p.R, p.eps, V, p.delta, p.prune, p.prune_depth, p.max_points)
    return pts, ["base-lattice"] * len(pts)


def _linear_base(V: PolySubspace, p: CoverParams):
    if p.delta >= p.eps:
        return _base_lattice(V, p)
    U = linear_zero_subspace(V)
    r = U.shape[1]
    if r == 0:
        return np.zeros((1, V.m)), ["linear-base"]
    rho = math.sqrt(p.eps ** 2 - p.delta ** 2)
    local = _lattice_cover_points(r, p.R, rho, max_points=p.max_points)
    pts = local @ U.T
    return pts, ["linear-base"] * len(pts)


def _cover(V: PolySubspace, p: CoverParams, allow_reduce: bool = True):
    m, d = V.m, V.d
    if V.dim == 0 or p.delta >= p.R ** d:
        pts = _lattice_cover_points(m, p.R, p.eps, None, 0.0, False, 0, p.max_points)
        return _finish(pts, ["base-lattice"] * len(pts), V, p)
    if d == 1:
        return _finish(*_linear_base(V, p), V, p)
    if p.ambient_reduce and allow_reduce and p.delta < p.eps ** d / 2:
        red = reduce_ambient(V, p)
        h = red.H.shape[1]
        if h < m and red.distance_bound < p.eps:
            return _finish(*_reduced_cover(red, p, m), V, p)
    plan = recursion_plan(V, p)
    if plan.base_reason is not None:
        return _finish(*_base_lattice(V, p), V, p)
    return _finish(*_split_cover(V, p, plan), V, p)


def _reduced_cover(red: AmbientReduction, p: CoverParams, m: int):
    pts = [np.zeros((1, m))]
    paths = ["ambient-reduced/origin"]
    h = red.H.shape[1]
    if h > 0:
        rho = math.sqrt(p.eps ** 2 - red.distance_bound ** 2)
        sub_p = replace(p, eps=min(rho, p.R))
        sub_pts, sub_paths = _cover(red.V_H, sub_p, allow_reduce=False)
        pts.append(sub_pts @ red.H.T)
        paths += ["ambient-reduced/" + t for t in sub_paths]
    return np.vstack(pts), paths


def _split_cover(V: PolySubspace, p: CoverParams, plan: RecursionPlan):
    m, d = V.m, V.d
    mp, eps_p, eta, gamma = plan.split_dim, plan.eps_prime, plan.eta, plan.gamma
    sub_overrides = dict(split_dim=None, k_prime=None, eps_prime=None, eta=None)

    V_x = restrict_subspace_to_coords(V, list(range(mp)))
    x_points, _ = _cover(V_x, replace(p, eps=eps_p, **sub_overrides))

    W = bilinear_slice(V, mp)
    maps = slice_maps(W, mp)
    slack = p.delta + d * (2 * p.R) ** (d - 1) * eps_p
    rho_y = math.sqrt(p.eps ** 2 - eps_p ** 2)
    my = m - mp

    good, bad = [], []
    for c in x_points:
        cl = classify_point(evaluation_map(W, c, maps), plan.k_prime, eta)
        (good if cl.good else bad).append((c, cl))

    def good_branch(item):
        c, cl = item
        V_c = PolySubspace(my, d - 1, cl.V_c)
        delta_c = slack / eta
        sub = replace(p, eps=min(rho_y, p.R), delta=delta_c, **sub_overrides)
        ypts, ypaths = _cover(V_c, sub)
        full = np.hstack([np.broadcast_to(c, (len(ypts), mp)), ypts])
        return full, ["good-branch/" + t for t in ypaths]

    if p.threads > 1 and len(good) > 1:
        with ThreadPoolExecutor(max_workers=p.threads) as ex:
            results = list(ex.map(good_branch, good))
    else:
        results = [good_branch(g) for g in good]

    pts = [r[0] for r in results]
    paths = [t for r in results for t in r[1]]

    if bad:
        H = bad_point_hyperplane([c for c, _ in bad], gamma, dim=mp)
        h = H.shape[1]
        if h >= mp:
            bpts, _ = _base_lattice(V, p)
            pts.append(bpts)
            paths += ["bad-branch/base-lattice"] * len(bpts)
        else:
            B = np.zeros((m, h + my))
            B[:mp, :h] = H
            B[mp:, h:] = np.eye(my)
            Q = np.hstack([B, _complete_basis(B)])
            V_H = restrict_subspace_to_coords(rotate_subspace(V, Q), list(range(h + my)))
            rho_b = math.sqrt(p.eps ** 2 - (eps_p + gamma) ** 2)
            sub = replace(p, eps=min(rho_b, p.R), **sub_overrides)
            bpts, bpaths = _cover(V_H, sub)
            pts.append(bpts @ B.T)
            paths += ["bad-branch/" + t for t in bpaths]
    if not pts:
        return np.zeros((0, m)), []
    return np.vstack(pts), paths


def compute_cover(V: PolySubspace, params: CoverParams) -> Cover:
    """A sound eps-cover of S(V, params.R, params.delta)."""
    pts, paths = _cover(V, params)
    pts = np.asarray(pts, dtype=float).reshape(-1, V.m)
    return Cover(pts, params.eps, params.R, params.delta, tuple(paths))


@dataclass(frozen=True)
class GridCheck:
    """Outcome of checking a cover against every grid point of the near-zero set."""

    sound: bool
    n_grid_in_set: int
    max_distance: float     # largest distance from an in-set grid point to the cover (0 if none)
    step: float


def grid_soundness(V: PolySubspace, cover: Cover, step: float = 0.05, chunk: int = 200_000) -> GridCheck:
    """Compare ``cover`` with the step-``step`` grid points of S(V, cover.R, cover.delta).

    The grid is step * Z^m intersected with the ball of radius R.  Membership
    evaluates the orthonormal basis polynomials of V directly from their
    monomial coefficients: sup over p in V of |p(x)|/|p| is the Euclidean
    norm of those values.  The cover is sound on the grid when each member
    lies within cover.eps (plus 1e-9 relative slack) of a cover point.
    """
    m, R = V.m, cover.R
    n1 = int(math.floor(R / step + 1e-9))
    axis = step * np.arange(-n1, n1 + 1)
    total = axis.size ** m
    mons = monomial_array(V.m, V.d)
    basis = np.array([p.coeffs for p in V.basis]).reshape(-1, mons.shape[0])
    n_in, worst = 0, 0.0
    for s in range(0, total, chunk):
        flat = np.arange(s, min(total, s + chunk))
        G = axis[np.stack(np.unravel_index(flat, (axis.size,) * m), axis=1)]
        inside = np.sum(G * G, axis=1) <= R * R * (1 + 1e-12)
        if basis.shape[0]:
            vals = np.prod(G[:, None, :] ** mons[None, :, :], axis=2) @ basis.T
            inside &= np.linalg.norm(vals, axis=1) <= cover.delta + 1e-12
        G = G[inside]
        if G.shape[0] == 0:
            continue
        n_in += G.shape[0]
        worst = max(worst, float(cover.distances(G).max()))
    return GridCheck(bool(worst <= cover.eps * (1 + 1e-9)), n_in, worst, step)
