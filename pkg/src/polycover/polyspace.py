"""Homogeneous polynomials, symmetric tensors and subspaces of them.

A degree-d homogeneous polynomial in m variables is stored as a dense
coefficient vector over the monomials ``x^alpha`` with ``|alpha| = d``,
listed in graded lexicographic order.  The inner product used throughout
is the Frobenius inner product of the associated symmetric tensors,

    <p, q> = sum_alpha p_alpha q_alpha alpha! / d!,

so that the rescaled coordinates ``p_alpha * sqrt(alpha!/d!)`` are
orthonormal.  Most linear algebra below happens in those rescaled
("orthonormal") coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

RANK_TOL = 1e-10


# ---------------------------------------------------------------------------
# monomial bookkeeping
# ---------------------------------------------------------------------------

def _compositions(m: int, d: int):
    if m == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in _compositions(m - 1, d - first):
            yield (first,) + rest


def enumerate_monomials(m: int, d: int) -> list[tuple[int, ...]]:
    """All exponent vectors of length m and total degree d, graded-lex order.

    >>> enumerate_monomials(2, 2)
    [(2, 0), (1, 1), (0, 2)]
    """
    if m < 1 or d < 0:
        raise ValueError(f"need m >= 1 and d >= 0, got m={m}, d={d}")
    return list(_compositions(m, d))


@lru_cache(maxsize=None)
def monomial_array(m: int, d: int) -> np.ndarray:
    arr = np.array(enumerate_monomials(m, d), dtype=np.int64).reshape(-1, m)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def monomial_index(m: int, d: int) -> dict[tuple[int, ...], int]:
    return {tuple(int(e) for e in a): i for i, a in enumerate(monomial_array(m, d))}


def space_dim(m: int, d: int) -> int:
    return math.comb(m + d - 1, d)


@lru_cache(maxsize=None)
def _log_factorial_table(n: int) -> np.ndarray:
    return np.array([math.lgamma(i + 1) for i in range(n + 1)])


@lru_cache(maxsize=None)
def log_weights(m: int, d: int) -> np.ndarray:
    """log(alpha!/d!) for every monomial of degree d (computed without overflow)."""
    lf = _log_factorial_table(d)
    w = lf[monomial_array(m, d)].sum(axis=1) - lf[d]
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def weights(m: int, d: int) -> np.ndarray:
    """alpha!/d! for every monomial; exact integer ratios when d is small."""
    if d <= 20:
        f = [math.factorial(i) for i in range(d + 1)]
        w = np.array([math.prod(f[a] for a in alpha) / f[d] for alpha in monomial_array(m, d)])
    else:
        w = np.exp(log_weights(m, d))
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def sqrt_weights(m: int, d: int) -> np.ndarray:
    s = np.sqrt(weights(m, d))
    s.setflags(write=False)
    return s


@lru_cache(maxsize=None)
def multiplicities(m: int, d: int) -> np.ndarray:
    """Orbit sizes d!/alpha! of the sorted index tuples of an order-d tensor."""
    c = 1.0 / weights(m, d)
    c = np.rint(c) if d <= 20 else c
    c.setflags(write=False)
    return c


@lru_cache(maxsize=None)
def sum_table(m: int, d: int) -> np.ndarray:
    """Index of alpha + beta among degree-2d monomials, for all pairs of degree-d alphas."""
    mons = monomial_array(m, d)
    idx2 = monomial_index(m, 2 * d)
    D = len(mons)
    table = np.empty((D, D), dtype=np.int64)
    for i in range(D):
        for j in range(i, D):
            k = idx2[tuple(int(v) for v in mons[i] + mons[j])]
            table[i, j] = table[j, i] = k
    table.setflags(write=False)
    return table


def _index_tuple(alpha: Sequence[int]) -> tuple[int, ...]:
    out: list[int] = []
    for i, a in enumerate(alpha):
        out.extend([i] * int(a))
    return tuple(out)


def _alpha_of_tuple(idx: Sequence[int], m: int) -> tuple[int, ...]:
    alpha = [0] * m
    for i in idx:
        alpha[int(i)] += 1
    return tuple(alpha)


def monomial_values(X: np.ndarray, d: int) -> np.ndarray:
    """Matrix of x^alpha for each row x of X (shape n x dim)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[1]
    mons = monomial_array(m, d)
    out = np.ones((X.shape[0], len(mons)))
    # build powers once per coordinate
    for j in range(m):
        pw = X[:, j][:, None] ** np.arange(d + 1)[None, :]
        out *= pw[:, mons[:, j]]
    return out


def veronese(X: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal coordinates of x^{(tensor) d} for each row x of X.

    For every polynomial p with orthonormal coordinates u, ``p(x) = u . z(x)``
    and ``|z(x)| = |x|^d``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return monomial_values(X, d) / sqrt_weights(X.shape[1], d)


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HomogeneousPoly:
    m: int
    d: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size != space_dim(self.m, self.d):
            raise ValueError(
                f"expected {space_dim(self.m, self.d)} coefficients for m={self.m}, d={self.d}, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_dict(cls, m: int, d: int, terms: dict) -> "HomogeneousPoly":
        idx = monomial_index(m, d)
        c = np.zeros(space_dim(m, d))
        for alpha, v in terms.items():
            c[idx[tuple(alpha)]] += v
        return cls(m, d, c)

    @classmethod
    def from_ortho(cls, m: int, d: int, u: np.ndarray) -> "HomogeneousPoly":
        return cls(m, d, np.asarray(u, dtype=float) / sqrt_weights(m, d))

    @classmethod
    def zero(cls, m: int, d: int) -> "HomogeneousPoly":
        return cls(m, d, np.zeros(space_dim(m, d)))

    @property
    def ortho(self) -> np.ndarray:
        return self.coeffs * sqrt_weights(self.m, self.d)

    def norm(self) -> float:
        return float(np.linalg.norm(self.ortho))

    def __call__(self, x) -> float | np.ndarray:
        return evaluate(self, x)

    def __add__(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        _check_same(self, other)
        return HomogeneousPoly(self.m, self.d, self.coeffs + other.coeffs)

    def __sub__(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        _check_same(self, other)
        return HomogeneousPoly(self.m, self.d, self.coeffs - other.coeffs)

    def __mul__(self, s: float) -> "HomogeneousPoly":
        return HomogeneousPoly(self.m, self.d, self.coeffs * float(s))

    __rmul__ = __mul__


def _check_same(p: HomogeneousPoly, q: HomogeneousPoly) -> None:
    if (p.m, p.d) != (q.m, q.d):
        raise ValueError(f"polynomial spaces differ: (m,d)={(p.m, p.d)} vs {(q.m, q.d)}")


def inner_product(p: HomogeneousPoly, q: HomogeneousPoly) -> float:
    _check_same(p, q)
    return float(np.sum(p.coeffs * q.coeffs * weights(p.m, p.d)))


def evaluate(p: HomogeneousPoly, x) -> float | np.ndarray:
    """p(x) for a point, or a vector of values for a 2-D array of points."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.m:
        raise ValueError(f"point has length {x.shape[-1]}, polynomial has m={p.m}")
    vals = monomial_values(x.reshape(-1, p.m), p.d) @ p.coeffs
    return float(vals[0]) if x.ndim == 1 else vals


def restrict(p: HomogeneousPoly, x0) -> list[HomogeneousPoly]:
    """Substitute the first m' coordinates by x0.

    Returns the homogeneous parts ``[q_0, ..., q_d]`` (q_t of degree t in the
    remaining m - m' variables) of ``y -> p(x0, y)``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    mp = x0.size
    if not 0 < mp < p.m:
        raise ValueError(f"split point must satisfy 0 < m' < m, got m'={mp}, m={p.m}")
    my = p.m - mp
    mons = monomial_array(p.m, p.d)
    parts = [np.zeros(space_dim(my, t)) for t in range(p.d + 1)]
    idx = [monomial_index(my, t) for t in range(p.d + 1)]
    xpow = np.prod(x0[None, :] ** mons[:, :mp], axis=1)
    for a, c, xp in zip(mons, p.coeffs, xpow):
        if c == 0.0:
            continue
        beta = tuple(int(v) for v in a[mp:])
        t = sum(beta)
        parts[t][idx[t][beta]] += c * xp
    return [HomogeneousPoly(my, t, parts[t]) for t in range(p.d + 1)]


def _poly_product_coeffs(p: HomogeneousPoly, q: HomogeneousPoly) -> np.ndarray:
    """Coefficients of p*q (degree p.d+q.d); only used for squares and tensor products."""
    if p.m != q.m:
        raise ValueError("variable counts differ")
    m = p.m
    mp, mq = monomial_array(m, p.d), monomial_array(m, q.d)
    idx = monomial_index(m, p.d + q.d)
    out = np.zeros(space_dim(m, p.d + q.d))
    nzp = np.flatnonzero(p.coeffs)
    nzq = np.flatnonzero(q.coeffs)
    for i in nzp:
        for j in nzq:
            out[idx[tuple(int(v) for v in mp[i] + mq[j])]] += p.coeffs[i] * q.coeffs[j]
    return out


def poly_product(p: HomogeneousPoly, q: HomogeneousPoly) -> HomogeneousPoly:
    return HomogeneousPoly(p.m, p.d + q.d, _poly_product_coeffs(p, q))


# ---------------------------------------------------------------------------
# symmetric tensors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymTensor:
    """Symmetric tensor of a given order over R^m.

    ``values[i]`` is the common value of every entry whose sorted index
    tuple corresponds to the i-th degree-``order`` monomial (so the exponent
    vector counts how often each coordinate appears).
    """

    m: int
    order: int
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != space_dim(self.m, self.order):
            raise ValueError("wrong number of orbit values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, m: int, order: int) -> "SymTensor":
        return cls(m, order, np.zeros(space_dim(m, order)))

    @classmethod
    def from_entries(cls, m: int, order: int, entries: dict) -> "SymTensor":
        idx = monomial_index(m, order)
        v = np.zeros(space_dim(m, order))
        for key, val in entries.items():
            v[idx[_alpha_of_tuple(sorted(key), m)]] = val
        return cls(m, order, v)

    @classmethod
    def power_sum(cls, weights, vectors, order: int) -> "SymTensor":
        """sum_i w_i v_i^{(tensor) order}."""
        V = np.atleast_2d(np.asarray(vectors, dtype=float))
        w = np.asarray(weights, dtype=float).reshape(-1)
        vals = w @ monomial_values(V, order)
        return cls(V.shape[1], order, vals)

    @property
    def multiplicities(self) -> np.ndarray:
        return multiplicities(self.m, self.order)

    @property
    def entries(self) -> dict[tuple[int, ...], float]:
        return {_index_tuple(a): float(v) for a, v in zip(monomial_array(self.m, self.order), self.values)}

    def entry(self, index: Sequence[int]) -> float:
        if len(index) != self.order:
            raise ValueError("index length must equal the order")
        alpha = _alpha_of_tuple(index, self.m)
        return float(self.values[monomial_index(self.m, self.order)[alpha]])

    def inner(self, other: "SymTensor") -> float:
        if (self.m, self.order) != (other.m, other.order):
            raise ValueError("tensor shapes differ")
        return float(np.sum(self.multiplicities * self.values * other.values))

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def contract(self, v) -> float:
        """<T, v^{(tensor) order}>."""
        v = np.asarray(v, dtype=float).reshape(1, -1)
        return float(monomial_values(v, self.order)[0] @ (self.multiplicities * self.values))

    def __add__(self, other: "SymTensor") -> "SymTensor":
        return SymTensor(self.m, self.order, self.values + other.values)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        return SymTensor(self.m, self.order, self.values - other.values)

    def __mul__(self, s: float) -> "SymTensor":
        return SymTensor(self.m, self.order, self.values * float(s))

    __rmul__ = __mul__

    def to_dense(self) -> np.ndarray:
        shape = (self.m,) * self.order
        out = np.empty(shape)
        idx = monomial_index(self.m, self.order)
        for multi in np.ndindex(*shape):
            out[multi] = self.values[idx[_alpha_of_tuple(multi, self.m)]]
        return out

    @classmethod
    def from_dense(cls, arr: np.ndarray) -> "SymTensor":
        """Orbit average of an arbitrary (not necessarily symmetric) tensor."""
        arr = np.asarray(arr, dtype=float)
        order = arr.ndim
        m = arr.shape[0] if order else 1
        idx = monomial_index(m, order)
        sums = np.zeros(space_dim(m, order))
        for multi in np.ndindex(*arr.shape):
            sums[idx[_alpha_of_tuple(multi, m)]] += arr[multi]
        return cls(m, order, sums / multiplicities(m, order))

    def apply_linear(self, A: np.ndarray) -> "SymTensor":
        """Push the tensor forward through the linear map A (shape r x m).

        For T = sum_i w_i v_i^{(tensor) k} the result is sum_i w_i (A v_i)^{(tensor) k}.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[1] != self.m:
            raise ValueError("map has the wrong input dimension")
        if self.order == 0:
            return SymTensor(A.shape[0], 0, self.values)
        dense = self.to_dense()
        for _ in range(self.order):
            # contract the leading axis and append the new one at the end
            dense = np.tensordot(dense, A, axes=([0], [1]))
        return SymTensor.from_dense(dense)


def tensor_of(p: HomogeneousPoly) -> SymTensor:
    """The symmetric tensor A_p with p(x) = <A_p, x^{(tensor) d}>."""
    return SymTensor(p.m, p.d, p.coeffs / multiplicities(p.m, p.d))


def poly_of(A: SymTensor) -> HomogeneousPoly:
    return HomogeneousPoly(A.m, A.order, A.values * A.multiplicities)


def square_tensor(p: HomogeneousPoly) -> SymTensor:
    """Symmetrisation of B_p (tensor) B_p, i.e. the tensor of p^2."""
    table = sum_table(p.m, p.d)
    out = np.zeros(space_dim(p.m, 2 * p.d))
    np.add.at(out, table.reshape(-1), np.outer(p.coeffs, p.coeffs).reshape(-1))
    return tensor_of(HomogeneousPoly(p.m, 2 * p.d, out))


def compose_linear(p: HomogeneousPoly, Q: np.ndarray) -> HomogeneousPoly:
    """The polynomial y -> p(Q y) for a square or rectangular matrix Q (m x r)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    return poly_of(tensor_of(p).apply_linear(Q.T))


# ---------------------------------------------------------------------------
# subspaces
# ---------------------------------------------------------------------------

def _null_space_rows(M: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal rows spanning {u : M u = 0} (singular values <= tol count as zero)."""
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > tol))
    return Vt[rank:].copy()


@dataclass(frozen=True)
class PolySubspace:
    """Subspace of degree-d homogeneous polynomials, stored by orthonormal rows.

    ``rows`` has shape (dim, binomial(m+d-1, d)) and holds orthonormal
    coordinates.  ``support`` optionally restricts the ambient space to a
    subset of monomials (used for the bidegree slice); codimension is
    measured inside that ambient space.
    """

    m: int
    d: int
    rows: np.ndarray
    support: np.ndarray | None = field(default=None)

    def __post_init__(self):
        D = space_dim(self.m, self.d)
        r = np.array(self.rows, dtype=float).reshape(-1, D)
        r.setflags(write=False)
        object.__setattr__(self, "rows", r)
        if self.support is not None:
            s = np.array(sorted(set(int(i) for i in self.support)), dtype=np.int64)
            s.setflags(write=False)
            object.__setattr__(self, "support", s)

    @classmethod
    def full(cls, m: int, d: int) -> "PolySubspace":
        return cls(m, d, np.eye(space_dim(m, d)))

    @classmethod
    def zero(cls, m: int, d: int) -> "PolySubspace":
        return cls(m, d, np.zeros((0, space_dim(m, d))))

    @property
    def ambient_indices(self) -> np.ndarray:
        if self.support is None:
            return np.arange(space_dim(self.m, self.d))
        return self.support

    @property
    def dim(self) -> int:
        return self.rows.shape[0]

    @property
    def ambient_dim(self) -> int:
        return len(self.ambient_indices)

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.dim

    @property
    def basis(self) -> list[HomogeneousPoly]:
        return [HomogeneousPoly.from_ortho(self.m, self.d, r) for r in self.rows]

    @cached_property
    def complement_rows(self) -> np.ndarray:
        """Orthonormal rows spanning the orthogonal complement inside the ambient space."""
        amb = self.ambient_indices
        D = space_dim(self.m, self.d)
        local = _null_space_rows(self.rows[:, amb], RANK_TOL)
        out = np.zeros((local.shape[0], D))
        out[:, amb] = local
        return out

    def max_ratio(self, X: np.ndarray) -> np.ndarray:
        """sup over nonzero p in V of |p(x)|/|p|, for each row x of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.dim == 0:
            return np.zeros(X.shape[0])
        return np.linalg.norm(veronese(X, self.d) @ self.rows.T, axis=1)

    def contains_near_zero(self, X: np.ndarray, R: float, delta: float) -> np.ndarray:
        """Membership in S(V, R, delta) for each row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (np.linalg.norm(X, axis=1) <= R) & (self.max_ratio(X) <= delta)


def orthonormalize(polys: Iterable[HomogeneousPoly], rank_tol: float = RANK_TOL,
                   m: int | None = None, d: int | None = None) -> PolySubspace:
    """Orthonormal basis of the span, by modified Gram-Schmidt with one re-pass."""
    polys = list(polys)
    if not polys:
        if m is None or d is None:
            raise ValueError("empty input needs explicit m and d")
        return PolySubspace.zero(m, d)
    m0, d0 = polys[0].m, polys[0].d
    for p in polys:
        if (p.m, p.d) != (m0, d0):
            raise ValueError("all polynomials must share (m, d)")
    vecs = [p.ortho for p in polys]
    scale = max(float(np.linalg.norm(v)) for v in vecs)
    basis: list[np.ndarray] = []
    for v in vecs:
        r = v.copy()
        for _ in range(2):
            for b in basis:
                r -= (b @ r) * b
        nr = float(np.linalg.norm(r))
        if scale == 0.0 or nr <= rank_tol * scale:
            continue
        basis.append(r / nr)
    D = space_dim(m0, d0)
    return PolySubspace(m0, d0, np.array(basis).reshape(-1, D))


def subspace_from_rows(m: int, d: int, rows: np.ndarray, rank_tol: float = RANK_TOL) -> PolySubspace:
    """Orthonormalise raw orthonormal-coordinate rows (SVD based)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float)).reshape(-1, space_dim(m, d))
    if rows.shape[0] == 0:
        return PolySubspace.zero(m, d)
    _, s, Vt = np.linalg.svd(rows, full_matrices=False)
    keep = s > rank_tol * max(s.max(), 1e-300)
    return PolySubspace(m, d, Vt[keep])


def _intersect_with_monomial_set(V: PolySubspace, allowed: np.ndarray) -> np.ndarray:
    """Orthonormal rows (full coordinates) spanning V intersected with span{e_alpha : alpha in allowed}."""
    amb = V.ambient_indices
    allowed = np.intersect1d(allowed, amb)
    D = space_dim(V.m, V.d)
    C = V.complement_rows
    local = _null_space_rows(C[:, allowed], RANK_TOL)
    out = np.zeros((local.shape[0], D))
    out[:, allowed] = local
    return out


def restrict_subspace_to_coords(V: PolySubspace, coords: Sequence[int]) -> PolySubspace:
    """Polynomials of V that only involve the (0-based) coordinates ``coords``.

    The result is expressed over ``len(coords)`` variables, in the order given.
    """
    coords = [int(c) for c in coords]
    if not coords or len(set(coords)) != len(coords) or min(coords) < 0 or max(coords) >= V.m:
        raise ValueError(f"coords must be distinct indices in [0, {V.m}), got {coords}")
    mons = monomial_array(V.m, V.d)
    others = np.setdiff1d(np.arange(V.m), coords)
    allowed = np.flatnonzero(mons[:, others].sum(axis=1) == 0) if others.size else np.arange(len(mons))
    rows = _intersect_with_monomial_set(V, allowed)
    mnew = len(coords)
    idx_new = monomial_index(mnew, V.d)
    out = np.zeros((rows.shape[0], space_dim(mnew, V.d)))
    for i in allowed:
        out[:, idx_new[tuple(int(mons[i, c]) for c in coords)]] = rows[:, i]
    return PolySubspace(mnew, V.d, out)


def bidegree_indices(m: int, d: int, mp: int) -> np.ndarray:
    """Monomials of degree exactly 1 in the first mp coordinates."""
    mons = monomial_array(m, d)
    return np.flatnonzero(mons[:, :mp].sum(axis=1) == 1)


def bilinear_slice(V: PolySubspace, mp: int) -> PolySubspace:
    """V intersected with the polynomials of bidegree (1, d-1) for the split at mp."""
    if not 0 < mp < V.m:
        raise ValueError(f"need 0 < m' < m, got m'={mp}, m={V.m}")
    if V.d < 2:
        raise ValueError("the bidegree slice needs d >= 2")
    allowed = bidegree_indices(V.m, V.d, mp)
    rows = _intersect_with_monomial_set(V, allowed)
    return PolySubspace(V.m, V.d, rows, support=allowed)


def rotate_subspace(V: PolySubspace, Q: np.ndarray) -> PolySubspace:
    """{p o Q : p in V} for an orthogonal matrix Q (the result stays orthonormal)."""
    polys = [compose_linear(p, Q) for p in V.basis]
    if not polys:
        return PolySubspace.zero(V.m, V.d)
    rows = np.array([p.ortho for p in polys])
    return PolySubspace(V.m, V.d, rows)
