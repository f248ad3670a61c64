"""Randomized subspaces V whose near-zero sets contain many grid points.

Three families, all with codimension k <= 6:

* ``lines``: V is orthogonal to z(u) = u^{(x) d} for a few directions u with
  entries in {-1, 0, 1}, plus random extra complement vectors; every p in V
  vanishes on the lines R u, which pass through grid points.
* ``hyperplanes``: V = l * P_{d-1} or l1 l2 * P_{d-2} for integer linear forms
  l, so S contains whole hyperplane sections of the ball.
* ``generic``: a random V of codimension k; S shrinks around the origin.
"""

from __future__ import annotations

from dataclasses import dataclass
import itertools

import numpy as np

from polycover.polyspace import (
    HomogeneousPoly,
    PolySubspace,
    enumerate_monomials,
    orthonormalize,
    poly_product,
    space_dim,
    veronese,
)


@dataclass
class Instance:
    V: PolySubspace
    family: str
    eps: float
    delta: float
    planted: np.ndarray     # points known to lie in S (rows)

    @property
    def m(self) -> int:
        return self.V.m

    @property
    def d(self) -> int:
        return self.V.d

    @property
    def k(self) -> int:
        return self.V.codim


def _integer_direction(rng, m):
    while True:
        a = rng.integers(-1, 2, m).astype(float)
        if np.any(a):
            return a


def _linear(m, a):
    return HomogeneousPoly(m, 1, np.asarray(a, dtype=float))


def _lines(rng, m, d, k):
    D = space_dim(m, d)
    j = int(rng.integers(1, min(k, 3) + 1))
    U = np.array([_integer_direction(rng, m) for _ in range(j)])
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    W = np.vstack([veronese(U, d), rng.standard_normal((k - j, D))])
    _, s, Vt = np.linalg.svd(W, full_matrices=True)
    rank = int(np.sum(s > 1e-10))
    V = PolySubspace(m, d, Vt[rank:])
    t = np.linspace(-1, 1, 21)[:, None, None]
    return V, (t * U[None]).reshape(-1, m)


def _hyperplanes(rng, m, d, k_max):
    forms = [_linear(m, _integer_direction(rng, m)) for _ in range(2)]
    options = []
    for r in (1, 2):
        if d >= r and space_dim(m, d) - space_dim(m, d - r) <= k_max:
            options.append(r)
    if not options:
        return None
    r = int(rng.choice(options))
    lead = forms[0] if r == 1 else poly_product(forms[0], forms[1])
    polys = []
    for a in enumerate_monomials(m, d - r):
        mono = HomogeneousPoly.from_dict(m, d - r, {a: 1.0})
        polys.append(poly_product(lead, mono))
    V = orthonormalize(polys)
    # planted points: random points of the ball on the zero set of the first form
    a = forms[0].coeffs / np.linalg.norm(forms[0].coeffs)
    X = rng.standard_normal((50, m))
    X -= np.outer(X @ a, a)
    X *= rng.uniform(0, 1, (50, 1)) / np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-12)
    return V, X


def _generic(rng, m, d, k):
    D = space_dim(m, d)
    _, _, Vt = np.linalg.svd(rng.standard_normal((k, D)), full_matrices=True)
    return PolySubspace(m, d, Vt[k:]), np.zeros((1, m))


def make_instance(i: int, seed: int = 2024) -> Instance:
    """Instance number i: m <= 4, d <= 3, codimension <= 6, eps in {0.2, 0.3}, delta in {0, 1e-3}."""
    rng = np.random.default_rng([seed, i])
    family = ("lines", "hyperplanes", "generic")[i % 3]
    while True:
        m = int(rng.integers(2, 5))
        d = int(rng.integers(1, 4))
        D = space_dim(m, d)
        k = int(rng.integers(1, min(6, D - 1) + 1)) if D > 1 else 1
        if D < 2:
            continue
        if family == "lines":
            V, P = _lines(rng, m, d, k)
        elif family == "hyperplanes":
            out = _hyperplanes(rng, m, d, 6)
            if out is None:
                continue
            V, P = out
        else:
            V, P = _generic(rng, m, d, k)
        if 1 <= V.codim <= 6:
            break
    eps = float(rng.choice([0.2, 0.3]))
    delta = float(rng.choice([0.0, 1e-3]))
    return Instance(V, family, eps, delta, P)
