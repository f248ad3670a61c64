"""Hermite polynomials and unbiased moment-tensor estimators.

Every estimator returns a symmetric tensor approximating a weighted power
sum ``sum_i w_i v_i^{(tensor) 2d}`` over the hidden parameters of a model:

* spherical Gaussian mixtures: mean of prod_j He_{a_j}(X_j);
* positive ReLU / GLM combinations: scaled mean of y * h_alpha(x);
* mixtures of linear regressions: conditional mean of y^{2d} times a
  dual-basis polynomial;
* hyperplane mixtures: an alternating combination of empirical even
  moments and powers of the identity.

Entries are computed one orbit (sorted multi-index) at a time.  Pass
``return_stderr=True`` to also obtain per-orbit standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate

from .errors import EstimationError, PreconditionError
from .polyspace import (
    SymTensor,
    monomial_array,
    monomial_index,
    multiplicities,
    space_dim,
)

CHUNK = 20000


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleSet:
    xs: np.ndarray
    ys: np.ndarray | None = None
    seed: int | None = None
    condition_mask: np.ndarray | None = None

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        if xs.shape[0] == 0:
            raise PreconditionError("a sample set needs at least one point")
        object.__setattr__(self, "xs", xs)
        if self.ys is not None:
            ys = np.asarray(self.ys, dtype=float).reshape(-1)
            if ys.size != xs.shape[0]:
                raise PreconditionError("xs and ys have different lengths")
            object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def m(self) -> int:
        return self.xs.shape[1]

    def subset(self, mask_or_idx) -> "SampleSet":
        ys = None if self.ys is None else self.ys[mask_or_idx]
        return SampleSet(self.xs[mask_or_idx], ys, self.seed)


# ---------------------------------------------------------------------------
# Hermite polynomials
# ---------------------------------------------------------------------------

def hermite_table(max_degree: int, t) -> np.ndarray:
    """He_0(t), ..., He_n(t) stacked along a new leading axis (three-term recurrence)."""
    t = np.asarray(t, dtype=float)
    out = np.empty((max_degree + 1,) + t.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = t
    for n in range(1, max_degree):
        out[n + 1] = t * out[n] - n * out[n - 1]
    return out


@dataclass(frozen=True)
class HermiteTable:
    max_degree: int

    def He(self, n: int, t):
        if not 0 <= n <= self.max_degree:
            raise ValueError(f"degree {n} outside the table (max {self.max_degree})")
        return hermite_table(n, t)[n]

    def h(self, n: int, t):
        return self.He(n, t) / math.sqrt(math.factorial(n))


def hermite_eval(n: int, t, normalized: bool = False):
    """He_n(t), or h_n(t) = He_n(t)/sqrt(n!) when ``normalized``."""
    val = hermite_table(n, t)[n]
    return val / math.sqrt(math.factorial(n)) if normalized else val


@lru_cache(maxsize=None)
def gauss_hermite(n_nodes: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with sum_i w_i f(t_i) ~ E[f(G)], G standard normal."""
    t, w = hermegauss(n_nodes)
    return t, w / math.sqrt(2 * math.pi)


def gaussian_expectation(f: Callable[[np.ndarray], np.ndarray], breakpoints: Sequence[float] = (0.0,)) -> float:
    """E[f(G)] by adaptive quadrature on the pieces between ``breakpoints``.

    Activations such as ReLU or |t| have a kink at 0, where a fixed
    Gauss-Hermite rule loses about three digits; splitting there avoids it.
    """
    phi = lambda t: f(np.asarray(t)) * math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
    cuts = [-math.inf] + sorted(float(b) for b in breakpoints) + [math.inf]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(lambda t: float(phi(t)), a, b, limit=200, epsabs=1e-14, epsrel=1e-12)
        total += val
    return total


ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "relu": lambda t: np.maximum(t, 0.0),
    "abs": np.abs,
    "identity": lambda t: np.asarray(t, dtype=float),
    "tanh": np.tanh,
    "square": lambda t: np.asarray(t, dtype=float) ** 2,
}


def activation_fn(activation) -> Callable[[np.ndarray], np.ndarray]:
    if callable(activation):
        return activation
    try:
        return ACTIVATIONS[activation]
    except KeyError:
        raise PreconditionError(f"unknown activation {activation!r}; known: {sorted(ACTIVATIONS)}") from None


@lru_cache(maxsize=None)
def _named_coeff(name: str, n: int) -> float:
    f = ACTIVATIONS[name]
    return gaussian_expectation(lambda t: f(t) * hermite_eval(n, t, normalized=True))


def activation_hermite_coeff(activation, n: int) -> float:
    """c_n = E[sigma(G) h_n(G)]."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if isinstance(activation, str):
        activation_fn(activation)
        return _named_coeff(activation, n)
    f = activation_fn(activation)
    return gaussian_expectation(lambda t: f(t) * hermite_eval(n, t, normalized=True))


def relu_hermite_coeff(n: int) -> float:
    return activation_hermite_coeff("relu", n)


def relu_hermite_coeff_closed_form(n: int) -> float:
    """phi(0) He_{n-2}(0)/sqrt(n!) for n >= 2 (Gaussian integration by parts twice)."""
    if n == 0:
        return 1 / math.sqrt(2 * math.pi)
    if n == 1:
        return 0.5
    if n % 2:
        return 0.0
    j = (n - 2) // 2
    he0 = (-1) ** j * math.prod(range(1, 2 * j, 2))
    return he0 / math.sqrt(2 * math.pi) / math.sqrt(math.factorial(n))


# ---------------------------------------------------------------------------
# generic orbit-mean machinery
# ---------------------------------------------------------------------------

def _hermite_products(U: np.ndarray, mons: np.ndarray, normalized: bool) -> np.ndarray:
    """prod_j He_{a_j}(U[:, j]) (or the normalised version) for each monomial a."""
    deg = int(mons.max()) if mons.size else 0
    out = np.ones((U.shape[0], len(mons)))
    for j in range(U.shape[1]):
        tab = hermite_table(deg, U[:, j]).T  # (n, deg+1)
        if normalized:
            tab = tab / np.sqrt([math.factorial(i) for i in range(deg + 1)])
        out *= tab[:, mons[:, j]]
    return out


def _chunked_mean(feature_fn: Callable[[slice], np.ndarray], n: int, width: int):
    """Mean and standard error of per-sample feature rows, with a fixed summation order."""
    s1 = np.zeros(width)
    s2 = np.zeros(width)
    for start in range(0, n, CHUNK):
        F = feature_fn(slice(start, min(n, start + CHUNK)))
        s1 += F.sum(axis=0)
        s2 += (F * F).sum(axis=0)
    mean = s1 / n
    var = np.maximum(s2 / n - mean ** 2, 0.0) * (n / max(n - 1, 1))
    return mean, np.sqrt(var / n)


def _finish(m: int, order: int, mean: np.ndarray, se: np.ndarray, return_stderr: bool):
    T = SymTensor(m, order, mean)
    if return_stderr:
        return T, SymTensor(m, order, se)
    return T


def frobenius_error_scale(stderr: SymTensor) -> float:
    """Typical Frobenius norm of the estimation error, sqrt(sum mult * se^2)."""
    return math.sqrt(float(np.sum(stderr.multiplicities * stderr.values ** 2)))


# ---------------------------------------------------------------------------
# model-specific estimators
# ---------------------------------------------------------------------------

def gmm_moment_tensor(samples, d: int, return_stderr: bool = False):
    """Estimate sum_i w_i mu_i^{(tensor) 2d} from identity-covariance mixture samples."""
    X = _xs(samples)
    m = X.shape[1]
    mons = monomial_array(m, 2 * d)
    mean, se = _chunked_mean(lambda s: _hermite_products(X[s], mons, False), X.shape[0], len(mons))
    return _finish(m, 2 * d, mean, se, return_stderr)


def glm_scaling(m: int, d: int, c2d: float) -> np.ndarray:
    """C_alpha = sqrt(alpha!/(2d)!)/c_{2d} for each orbit."""
    mult = multiplicities(m, 2 * d)
    return np.sqrt(1.0 / mult) / c2d


def glm_moment_tensor(samples, d: int, c_2d: float | None = None, activation="relu",
                      return_stderr: bool = False):
    """Estimate sum_i a_i w_i^{(tensor) 2d} from y = sum_i a_i sigma(w_i . x) + noise."""
    if c_2d is None:
        c_2d = activation_hermite_coeff(activation, 2 * d)
    if abs(c_2d) < 1e-9:
        name = activation if isinstance(activation, str) else getattr(activation, "__name__", "activation")
        raise PreconditionError(
            f"Hermite coefficient gate failed: c_{2 * d} = E[h_{2 * d}(G) sigma(G)] = {c_2d:.3g} for "
            f"activation {name!r}; an odd activation has vanishing even coefficients, so its "
            f"order-{2 * d} moments carry no information")
    X, y = _xs(samples), _ys(samples)
    m = X.shape[1]
    mons = monomial_array(m, 2 * d)
    scale = glm_scaling(m, d, c_2d)
    mean, se = _chunked_mean(lambda s: y[s, None] * _hermite_products(X[s], mons, True) * scale,
                             X.shape[0], len(mons))
    return _finish(m, 2 * d, mean, se * 1.0, return_stderr)


def relu_moment_tensor(samples, d: int, return_stderr: bool = False):
    c = relu_hermite_coeff(2 * d)
    if abs(c) < 1e-9:
        raise PreconditionError(f"ReLU coefficient c_{2 * d} vanished unexpectedly")
    return glm_moment_tensor(samples, d, c, "relu", return_stderr)


def _identity_power_matrix(m: int, t: int, d: int) -> np.ndarray:
    """Linear map from the orbit values of an order-2t tensor A to those of Sym(A (x) I^{(x)(d-t)})."""
    s = d - t
    src = monomial_array(m, 2 * t)
    mult_src = multiplicities(m, 2 * t)
    dst_idx = monomial_index(m, 2 * d)
    mult_dst = multiplicities(m, 2 * d)
    gam = monomial_array(m, s)
    gcoef = np.array([math.factorial(s) / math.prod(math.factorial(int(g)) for g in row) for row in gam])
    L = np.zeros((len(src), space_dim(m, 2 * d)))
    for i, b in enumerate(src):
        for g, c in zip(gam, gcoef):
            j = dst_idx[tuple(int(v) for v in b + 2 * g)]
            L[i, j] += mult_src[i] * c
    return L / mult_dst[None, :]


def _double_factorial_odd(t: int) -> int:
    return math.prod(range(1, 2 * t, 2)) if t > 0 else 1


@lru_cache(maxsize=None)
def hyperplane_maps(m: int, d: int) -> tuple[np.ndarray, ...]:
    maps = []
    for t in range(d + 1):
        coef = (-1) ** t * math.comb(d, t) / _double_factorial_odd(t)
        maps.append(coef * _identity_power_matrix(m, t, d))
    return tuple(maps)


def hyperplane_moment_tensor(samples, d: int, return_stderr: bool = False):
    """Estimate sum_i w_i v_i^{(tensor) 2d} from samples of sum_i w_i N(0, I - v_i v_i^T).

    Uses v v^T = I - Sigma, so (v v^T)^{(x) d} expands into signed terms
    Sym(Sigma^{(x) t} (x) I^{(x)(d-t)}), and Sym(Sigma^{(x) t}) = E[X^{(x) 2t}]/(2t-1)!!.
    """
    X = _xs(samples)
    m = X.shape[1]
    maps = hyperplane_maps(m, d)
    mons = [monomial_array(m, 2 * t) for t in range(d + 1)]

    def feats(s):
        Xs = X[s]
        out = np.zeros((Xs.shape[0], space_dim(m, 2 * d)))
        for t in range(d + 1):
            vals = np.ones((Xs.shape[0], len(mons[t])))
            for j in range(m):
                pw = Xs[:, j][:, None] ** np.arange(2 * t + 1)[None, :]
                vals *= pw[:, mons[t][:, j]]
            out += vals @ maps[t]
        return out

    mean, se = _chunked_mean(feats, X.shape[0], space_dim(m, 2 * d))
    return _finish(m, 2 * d, mean, se, return_stderr)


def sym(tensor) -> SymTensor:
    """Orbit average (symmetrisation) of a dense tensor or a SymTensor."""
    if isinstance(tensor, SymTensor):
        return tensor
    return SymTensor.from_dense(np.asarray(tensor, dtype=float))


# ---------------------------------------------------------------------------
# mixtures of linear regressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlabEvent:
    """E(x): |a_j . x| > tau_j for every row a_j of ``directions``."""

    directions: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "directions", np.atleast_2d(np.asarray(self.directions, dtype=float)))
        object.__setattr__(self, "thresholds", np.asarray(self.thresholds, dtype=float).reshape(-1))

    @property
    def m(self) -> int:
        return self.directions.shape[1]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.directions.shape[0] == 0:
            return np.ones(X.shape[0], dtype=bool)
        return np.all(np.abs(X @ self.directions.T) > self.thresholds[None, :], axis=1)

    def frame(self) -> np.ndarray:
        """Orthonormal columns spanning the directions the event depends on."""
        if self.directions.shape[0] == 0:
            return np.zeros((self.m, 0))
        U, s, _ = np.linalg.svd(self.directions.T, full_matrices=False)
        return U[:, s > 1e-10 * max(s.max(), 1e-300)]


@dataclass(frozen=True)
class HalfspaceEvent:
    """E(x): a . x > tau."""

    direction: np.ndarray
    threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float).reshape(-1))

    @property
    def m(self) -> int:
        return self.direction.size

    @property
    def directions(self) -> np.ndarray:
        return self.direction[None, :]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.direction > self.threshold

    def frame(self) -> np.ndarray:
        return (self.direction / np.linalg.norm(self.direction))[:, None]


def _event_gate(rate: float, n: int, z: float = 3.0) -> None:
    """Reject events whose empirical rate is significantly below 1/2."""
    if rate < 0.5 - z * 0.5 / np.sqrt(n):
        raise PreconditionError(f"conditioning event has empirical probability {rate:.4f} < 1/2 "
                                f"(beyond {z:g} standard errors over {n} draws)")


@dataclass(frozen=True)
class DualBasis:
    """Conditional dual polynomials on the event coordinates.

    ``coeffs[beta]`` is the Hermite-basis vector b with
    E[sum_g b_g h_g(u) q(u) | E] = coefficient of u^beta in q, for every q of
    degree <= |beta| in the event coordinates u.
    """

    ell: int
    max_degree: int
    basis: np.ndarray                 # exponent vectors, all degrees <= max_degree
    coeffs: dict = field(default_factory=dict)
    gram: np.ndarray | None = None
    event_rate: float = 1.0

    def evaluate(self, beta: tuple[int, ...], U: np.ndarray) -> np.ndarray:
        if self.ell == 0:
            return np.ones(U.shape[0])
        b = self.coeffs[beta]
        sel = np.flatnonzero(b)
        return _hermite_products(U, self.basis[sel], True) @ b[sel]


def _all_exponents(ell: int, max_degree: int) -> np.ndarray:
    rows = []
    for t in range(max_degree + 1):
        rows.extend(monomial_array(ell, t))
    return np.array(rows, dtype=np.int64).reshape(-1, ell)


def mlr_dual_basis(event: SlabEvent | None, max_degree: int, frame_E: np.ndarray | None = None,
                   gram_samples: np.ndarray | None = None, n_gram: int = 200_000, seed: int = 0,
                   ridge: float = 1e-8) -> DualBasis:
    """Dual polynomials for the x^beta coefficients (|beta| <= max_degree) under x | E.

    ``gram_samples`` are draws of x ~ N(0, I) (before conditioning); when
    omitted, ``n_gram`` draws are generated from ``seed``.
    """
    if event is None or event.directions.shape[0] == 0:
        return DualBasis(0, max_degree, np.zeros((1, 0), dtype=np.int64))
    Q = event.frame() if frame_E is None else frame_E
    ell = Q.shape[1]
    if gram_samples is None:
        gram_samples = np.random.default_rng(np.random.SeedSequence([seed, 7919])).standard_normal((n_gram, event.m))
    mask = event(gram_samples)
    rate = float(mask.mean())
    _event_gate(rate, mask.size)
    U = gram_samples[mask] @ Q
    basis = _all_exponents(ell, max_degree)
    H = _hermite_products(U, basis, True)
    A = H.T @ H / U.shape[0]
    A = 0.5 * (A + A.T)
    A += ridge * np.trace(A) / A.shape[0] * np.eye(A.shape[0])
    evals = np.linalg.eigvalsh(A)
    if evals.min() <= 1e-12 * evals.max():
        raise EstimationError(f"dual-basis Gram matrix is numerically singular (min eigenvalue {evals.min():.3g})")
    degs = basis.sum(axis=1)
    coeffs = {}
    for t in range(max_degree + 1):
        sub = np.flatnonzero(degs <= t)
        A_t = A[np.ix_(sub, sub)]
        for beta in monomial_array(ell, t):
            e = np.zeros(len(sub))
            pos = int(np.flatnonzero(np.all(basis[sub] == beta, axis=1))[0])
            e[pos] = 1.0 / math.sqrt(math.prod(math.factorial(int(v)) for v in beta))
            b = np.zeros(len(basis))
            b[sub] = np.linalg.solve(A_t, e)
            coeffs[tuple(int(v) for v in beta)] = b
    return DualBasis(ell, max_degree, basis, coeffs, A, rate)


def mlr_frame(event: SlabEvent | None, target: np.ndarray) -> tuple[np.ndarray, int]:
    """Orthonormal frame [event directions, rest of span(target)] and the event dimension."""
    target = np.atleast_2d(np.asarray(target, dtype=float))
    QE = event.frame() if event is not None else np.zeros((target.shape[0], 0))
    rest = target - QE @ (QE.T @ target)
    if rest.size:
        U, s, _ = np.linalg.svd(rest, full_matrices=False)
        rest = U[:, s > 1e-10]
    return np.hstack([QE, rest]), QE.shape[1]


def mlr_moment_tensor(samples, d: int, event: SlabEvent | None = None, target: np.ndarray | None = None,
                      dual: DualBasis | None = None, return_stderr: bool = False, seed: int = 0):
    """Estimate sum_i w_i (B^T beta_i)^{(tensor) 2d} from regression samples, conditioned on E.

    ``target`` (orthonormal columns B, default the identity) selects the
    coordinates of the output tensor.  The estimator is the conditional mean
    of y^{2d} p_alpha(x) alpha!/(2d)! with p_alpha the dual polynomial of x^alpha.
    """
    X, y = _xs(samples), _ys(samples)
    m = X.shape[1]
    B = np.eye(m) if target is None else np.asarray(target, dtype=float)
    mask = event(X) if event is not None else np.ones(X.shape[0], dtype=bool)
    _event_gate(float(mask.mean()), mask.size)
    Z, ell = mlr_frame(event, B)
    if dual is None:
        dual = mlr_dual_basis(event, 2 * d, Z[:, :ell] if ell else None, seed=seed)
    Xe, ye = X[mask], y[mask]
    r = Z.shape[1]
    mons = monomial_array(r, 2 * d)
    fact = np.array([math.factorial(i) for i in range(2 * d + 1)], dtype=float)
    alpha_fact = np.prod(fact[mons], axis=1)
    scale = alpha_fact / math.factorial(2 * d)
    # split every alpha into its event part and its free part
    e_parts = [tuple(int(v) for v in a[:ell]) for a in mons]
    r_mons = mons[:, ell:]
    r_fact = np.prod(fact[r_mons], axis=1)

    def feats(s):
        U = Xe[s] @ Z
        free = _hermite_products(U[:, ell:], r_mons, False) / r_fact if r > ell else np.ones((U.shape[0], len(mons)))
        cache: dict = {}
        ev = np.empty((U.shape[0], len(mons)))
        for i, beta in enumerate(e_parts):
            if beta not in cache:
                cache[beta] = dual.evaluate(beta, U[:, :ell])
            ev[:, i] = cache[beta]
        return (ye[s] ** (2 * d))[:, None] * ev * free * scale

    mean, se = _chunked_mean(feats, Xe.shape[0], len(mons))
    T_Z = SymTensor(r, 2 * d, mean)
    SE_Z = SymTensor(r, 2 * d, se)
    M = B.T @ Z
    T = T_Z.apply_linear(M)
    if return_stderr:
        # the orthogonal change of frame preserves Frobenius norms; carry the scale over
        scale_se = frobenius_error_scale(SE_Z)
        return T, scale_se
    return T


# ---------------------------------------------------------------------------
# boosting
# ---------------------------------------------------------------------------

def boosted_tensor_estimate(estimator: Callable[[int], SymTensor], repeats: int, delta: float) -> SymTensor:
    """Median-style selection: a repeat within 2 delta/3 of at least half of the others."""
    if repeats < 3 or repeats % 2 == 0:
        raise PreconditionError("repeats must be an odd number >= 3")
    Ts = [estimator(i) for i in range(repeats)]
    D = np.array([[(a - b).norm() for b in Ts] for a in Ts])
    close = (D <= 2 * delta / 3).sum(axis=1) - 1
    need = (repeats - 1) / 2
    ok = np.flatnonzero(close >= need)
    if ok.size == 0:
        raise EstimationError(f"no repeat is within 2*delta/3 = {2 * delta / 3:.3g} of a majority of the others")
    best = ok[np.argmax(close[ok])]
    return Ts[int(best)]


def planned_sample_size(R: float, m: int, d: int, delta: float) -> int:
    """(R m d)^d / delta^2 with unit constants (callers may override)."""
    return int(math.ceil(max(R * m * d, 1.0) ** d / delta ** 2))


# ---------------------------------------------------------------------------

def _xs(samples) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.xs
    return np.atleast_2d(np.asarray(samples, dtype=float))


def _ys(samples) -> np.ndarray:
    if isinstance(samples, SampleSet):
        if samples.ys is None:
            raise PreconditionError("this estimator needs responses y")
        return samples.ys
    raise PreconditionError("pass a SampleSet with responses")
