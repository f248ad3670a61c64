"""From approximate moment tensors to parameter covers and subspaces.

Given T close to sum_i w_i v_i^{(tensor) 2d}, the form Q(p) = <A_p, T> is
approximately sum_i w_i p(v_i)^2.  Polynomials on which Q is small nearly
vanish at every heavy v_i, so the v_i lie in the near-zero set of the
span of the bottom eigenvectors of Q, and covering that set covers them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cover import Cover, CoverParams, compute_cover
from .errors import PreconditionError
from .polyspace import (
    HomogeneousPoly,
    PolySubspace,
    SymTensor,
    space_dim,
    sqrt_weights,
    sum_table,
)


@dataclass(frozen=True)
class QuadraticForm:
    m: int
    d: int
    matrix: np.ndarray  # in orthonormal polynomial coordinates

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def value(self, p: HomogeneousPoly) -> float:
        u = p.ortho
        return float(u @ self.matrix @ u)


def quadratic_form(T: SymTensor) -> QuadraticForm:
    """Matrix of p -> <square_tensor(p), T> in orthonormal coordinates."""
    if T.order % 2:
        raise PreconditionError(f"quadratic_form needs an even-order tensor, got order {T.order}")
    d = T.order // 2
    table = sum_table(T.m, d)
    s = sqrt_weights(T.m, d)
    M = T.values[table] / np.outer(s, s)
    M = 0.5 * (M + M.T)
    return QuadraticForm(T.m, d, M)


def _ordered_eigh(M: np.ndarray):
    """Eigenpairs sorted by decreasing eigenvalue; ties go to the lower basis index.

    Eigenvectors are sign-normalised (largest-magnitude entry positive) so the
    output is a deterministic function of M.
    """
    vals, vecs = np.linalg.eigh(M)
    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[lead, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    rounded = np.round(vals / (scale * 1e-12))
    order = np.lexsort((lead, -rounded))
    return vals[order], vecs[:, order]


@dataclass(frozen=True)
class NearVanishing:
    V: PolySubspace
    eigenvalues: np.ndarray  # all eigenvalues of Q, decreasing
    k: int

    @property
    def top_excluded(self) -> float:
        """Largest eigenvalue of Q restricted to V (the (k+1)-st overall)."""
        return float(self.eigenvalues[self.k]) if self.k < len(self.eigenvalues) else -math.inf

    @property
    def is_zero(self) -> bool:
        return self.V.dim == 0


def near_vanishing_subspace(Q: QuadraticForm, k: int) -> NearVanishing:
    """Span of all eigenvectors of Q except the k largest."""
    if k < 0:
        raise PreconditionError("k must be non-negative")
    vals, vecs = _ordered_eigh(Q.matrix)
    rows = vecs[:, k:].T if k < Q.dim else np.zeros((0, Q.dim))
    return NearVanishing(PolySubspace(Q.m, Q.d, rows), vals, k)


def cover_weight_floor(eps: float, R: float, k: int, m: int, d: int, C: float = 1.0) -> float:
    """The weight floor ((eps/R)/(2kmd))^{Cd} (reported, not enforced)."""
    return ((eps / R) / (2 * max(k, 1) * m * d)) ** (C * d)


def vanishing_slack(nv: NearVanishing, delta: float, w_floor: float) -> float:
    """Bound on |p(v)|/|p| over p in V for every v of weight >= w_floor.

    From w |p(v)|^2 <= Q(p) + delta |p|^2 <= (lambda_{k+1} + delta) |p|^2.
    """
    lam = max(nv.top_excluded, 0.0)
    return math.sqrt((lam + delta) / w_floor)


def effective_k(Q: QuadraticForm, k: int, delta: float) -> int:
    """Number of eigenvalues of Q above delta, capped at k.

    Eigenvectors with eigenvalue <= delta can join the near-vanishing
    subspace at no cost: the slack bound only grows from lambda_{k+1} + delta
    to at most 2 delta, while the subspace (and hence the pruning) grows.
    """
    vals = np.linalg.eigvalsh(Q.matrix)
    return int(min(k, np.sum(vals > delta)))


def parameter_cover(T: SymTensor, R: float, eps: float, delta: float, k: int,
                    w_floor: float | None = None, adaptive_k: bool = False, **cover_options) -> Cover:
    """Cover of every heavy v_i with |v_i| <= R from T ~ sum w_i v_i^{(tensor) 2d}.

    ``delta`` bounds |T - sum w_i v_i^{(tensor) 2d}|.  Targets of weight at
    least ``w_floor`` are guaranteed to be within eps of a returned point.
    With ``adaptive_k`` only eigenvalues above ``delta`` are removed.
    """
    if not 0 < eps <= R:
        raise PreconditionError(f"parameter_cover needs 0 < eps <= R, got eps={eps}, R={R}")
    d = T.order // 2
    if w_floor is None:
        w_floor = cover_weight_floor(eps, R, k, T.m, d, cover_options.get("C", 1.0))
    Q = quadratic_form(T)
    if adaptive_k:
        k = effective_k(Q, k, delta)
    nv = near_vanishing_subspace(Q, k)
    slack = vanishing_slack(nv, delta, w_floor)
    params = CoverParams(R=R, eps=eps, delta=slack, **cover_options)
    return compute_cover(nv.V, params)


def dimension_reduce(T2: SymTensor, w_floor: float, delta: float, k: int | None = None) -> np.ndarray:
    """Orthonormal columns spanning the eigenvectors of T2 with eigenvalue > delta/w_floor."""
    if T2.order != 2:
        raise PreconditionError("dimension_reduce needs an order-2 tensor")
    M = T2.to_dense()
    M = 0.5 * (M + M.T)
    vals, vecs = _ordered_eigh(M)
    keep = vals > delta / w_floor
    if k is not None:
        keep &= np.arange(len(vals)) < k
    return vecs[:, keep].copy()


