"""Shared helpers for the learning pipelines."""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..cover import Cover
from ..estimators import frobenius_error_scale
from ..momentcover import parameter_cover
from ..polyspace import SymTensor


def chain_clusters(points: np.ndarray, radius: float, up_to_sign: bool = False) -> np.ndarray:
    """Single-linkage labels: points joined by a chain of steps of length <= radius.

    Labels are numbered in order of first appearance, so they are a
    deterministic function of the input order.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    n = P.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    src = P if not up_to_sign else np.vstack([P, -P])
    tree = cKDTree(src)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if up_to_sign and pairs.size:
        pairs = pairs % n
    rows = np.concatenate([pairs[:, 0], np.arange(n)]) if pairs.size else np.arange(n)
    cols = np.concatenate([pairs[:, 1], np.arange(n)]) if pairs.size else np.arange(n)
    A = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    _, raw = connected_components(A, directed=False)
    relabel: dict[int, int] = {}
    return np.array([relabel.setdefault(int(r), len(relabel)) for r in raw], dtype=np.int64)


def greedy_separated(points: np.ndarray, order: np.ndarray, radius: float) -> np.ndarray:
    """Indices of a maximal subset with pairwise distance > radius, scanned in ``order``."""
    chosen: list[int] = []
    for i in order:
        if all(np.linalg.norm(points[i] - points[j]) > radius for j in chosen):
            chosen.append(int(i))
    return np.array(chosen, dtype=np.int64)


def radius_from_eigen(T2: SymTensor, w_floor: float, eps: float) -> float:
    """|v_i|^2 <= lambda_max(sum_j w_j v_j v_j^T)/w_i; padded by 5% and eps."""
    M = T2.to_dense()
    lam = float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1]) if M.size else 0.0
    return math.sqrt(max(lam, 0.0) / w_floor) * 1.05 + eps


def tensor_error(stderr, z: float) -> float:
    """z times the typical Frobenius norm of the estimation error."""
    if isinstance(stderr, SymTensor):
        return z * frobenius_error_scale(stderr)
    return z * float(stderr)


def cover_from_tensor(T: SymTensor, k: int, R: float, eps: float, delta: float, w_floor: float,
                      **cover_options) -> Cover:
    """parameter_cover with R clamped to at least eps and adaptive k."""
    return parameter_cover(T, max(R, eps), eps, delta, k, w_floor, adaptive_k=True, **cover_options)


def orthonormal_columns(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return M.reshape(M.shape[0], 0)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return U[:, :0]
    return U[:, s > tol * s[0]]
