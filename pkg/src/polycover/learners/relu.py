"""Non-negative combinations of ReLUs and other activations (improper learning).

The pipeline scales the responses, finds the span of the hidden directions
from the order-2 moment, covers the directions with a degree-d cover in that
span, and fits non-negative coefficients over the candidate directions by
least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import PreconditionError
from ..estimators import SampleSet, activation_fn, activation_hermite_coeff, glm_moment_tensor
from ..models import GLMParams
from ..momentcover import dimension_reduce
from ..synth import stream
from .common import cover_from_tensor, tensor_error


@dataclass(frozen=True)
class GLMConfig:
    """Constants of the ReLU/GLM pipelines."""

    moment_z: float = 3.0            # tensor error bound = z * standard error
    reduce_w_floor: float = 0.5      # weight (after scaling) a direction needs to survive reduction
    cover_eps_factor: float = 0.25   # cover radius eps/(4L)
    cover_w_floor: float | None = None   # default eps/k
    n_gram: int = 200_000            # Monte-Carlo draws for GLM Gram matrices
    min_candidate_norm: float = 0.5  # cover points this close to 0 cannot be near a unit direction
    gram_seed: int = 0
    max_iter: int = 20_000
    tol: float = 1e-12


@dataclass(frozen=True)
class GLMFit:
    """The fitted hypothesis with bookkeeping from the pipeline."""

    params: GLMParams          # non-zero coefficients with their unit directions
    n_candidates: int
    reduced_dim: int
    scale: float               # sqrt of the empirical second moment of y

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict(self.params, X)


def predict(params: GLMParams, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    if params.k == 0:
        return np.zeros(X.shape[0])
    return activation_fn(params.activation)(X @ params.W.T) @ params.a


def relu_kernel(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """E[ReLU(u . x) ReLU(v . x)] = |u||v| (sin t + (pi - t) cos t)/(2 pi), t the angle."""
    U, V = np.atleast_2d(U), np.atleast_2d(V)
    nu, nv = np.linalg.norm(U, axis=1), np.linalg.norm(V, axis=1)
    denom = np.outer(nu, nv)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, (U @ V.T) / denom, 1.0)
    cos = np.clip(cos, -1.0, 1.0)
    t = np.arccos(cos)
    return denom * (np.sqrt(1.0 - cos ** 2) + (math.pi - t) * cos) / (2 * math.pi)


def abs_kernel(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """E[|u . x||v . x|] via |t| = 2 ReLU(t) - t."""
    return 4 * relu_kernel(U, V) - np.atleast_2d(U) @ np.atleast_2d(V).T


CLOSED_FORM_KERNELS = {"relu": relu_kernel, "abs": abs_kernel}


def monte_carlo_kernel(activation, U: np.ndarray, V: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Monte-Carlo E[sigma(u . x) sigma(v . x)] from ``n`` seeded Gaussian draws."""
    U, V = np.atleast_2d(U), np.atleast_2d(V)
    f = activation_fn(activation)
    X = stream(seed, 11).standard_normal((n, U.shape[1]))
    return f(X @ U.T).T @ f(X @ V.T) / n


def l2_distance_sq(h: GLMParams, F: GLMParams, kernel=None, n_mc: int = 1_000_000, seed: int = 0) -> float:
    """E[(H(x) - F(x))^2] over x ~ N(0, I) (noise excluded).

    Uses the closed-form kernel when the two share an activation that has
    one, otherwise Monte-Carlo with ``n_mc`` draws.
    """
    if kernel is None and h.activation == F.activation and h.activation in CLOSED_FORM_KERNELS:
        kernel = CLOSED_FORM_KERNELS[h.activation]
    if kernel is not None:
        def K(A, B, a, b):
            return 0.0 if A.size == 0 or B.size == 0 else float(a @ kernel(A, B) @ b)
        return K(h.W, h.W, h.a, h.a) - 2 * K(h.W, F.W, h.a, F.a) + K(F.W, F.W, F.a, F.a)
    X = stream(seed, 12).standard_normal((n_mc, F.m))
    return float(np.mean((predict(h, X) - predict(F, X)) ** 2))


def _project_capped_simplex(a: np.ndarray, cap: float | None) -> np.ndarray:
    """Euclidean projection onto {a >= 0} or {a >= 0, sum a <= cap}."""
    p = np.maximum(a, 0.0)
    if cap is None or p.sum() <= cap:
        return p
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - cap
    idx = np.arange(1, a.size + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    return np.maximum(a - css[rho] / (rho + 1), 0.0)


def nonnegative_least_squares(G: np.ndarray, b: np.ndarray, cap: float | None = None,
                              max_iter: int = 20_000, tol: float = 1e-12) -> np.ndarray:
    """Minimise a^T G a - 2 b^T a over a >= 0 (and sum a <= cap) by accelerated projected gradient."""
    n = b.size
    if n == 0:
        return np.zeros(0)
    L = 2 * max(float(np.linalg.eigvalsh(0.5 * (G + G.T))[-1]), 1e-300)
    a = np.zeros(n)
    z, t = a.copy(), 1.0
    for _ in range(max_iter):
        grad = 2 * (G @ z - b)
        a_new = _project_capped_simplex(z - grad / L, cap)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = a_new + ((t - 1) / t_new) * (a_new - a)
        step = float(np.linalg.norm(a_new - a))
        a, t = a_new, t_new
        if step <= tol * max(1.0, float(np.linalg.norm(a))):
            break
    return a


def _candidate_directions(X: np.ndarray, y: np.ndarray, k: int, d: int, eps: float, lipschitz: float,
                          activation, cfg: GLMConfig) -> tuple[np.ndarray, int]:
    """Unit candidate directions (rows, ambient coordinates) and the reduced dimension."""
    m = X.shape[1]
    s = SampleSet(X, y)
    if abs(activation_hermite_coeff(activation, 2)) > 1e-9:
        T2, se2 = glm_moment_tensor(s, 1, activation=activation, return_stderr=True)
        U = dimension_reduce(T2, cfg.reduce_w_floor, tensor_error(se2, cfg.moment_z), k)
    else:
        # no order-2 information: keep all coordinates
        U = np.eye(m)
    r = U.shape[1]
    if r == 0:
        return np.zeros((0, m)), 0
    eps_c = cfg.cover_eps_factor * eps / lipschitz
    T, se = glm_moment_tensor(SampleSet(X @ U, y), d, activation=activation, return_stderr=True)
    w_floor = cfg.cover_w_floor if cfg.cover_w_floor is not None else eps / k
    cov = cover_from_tensor(T, k, 1.0, eps_c, tensor_error(se, cfg.moment_z), w_floor)
    P = cov.points
    norms = np.linalg.norm(P, axis=1)
    keep = norms >= cfg.min_candidate_norm
    C = (P[keep] / norms[keep, None]) @ U.T
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    return C, r


def _fit(samples: SampleSet, k: int, d: int, eps: float, activation, L: float, cfg: GLMConfig,
         simplex_cap: float | None, closed_form_gram: bool) -> GLMFit:
    if k < 1:
        raise PreconditionError("k must be positive")
    c_2d = activation_hermite_coeff(activation, 2 * d)
    if abs(c_2d) < 1e-9:
        # raises the documented parity diagnostic
        glm_moment_tensor(samples, d, c_2d=c_2d, activation=activation)
    X, y = samples.xs, samples.ys
    if y is None:
        raise PreconditionError("fitting a GLM needs responses")
    scale = math.sqrt(float(np.mean(y * y)))
    name = activation if isinstance(activation, str) else "custom"
    empty = GLMFit(GLMParams(np.zeros(0), np.zeros((0, X.shape[1])), 0.0, name), 0, 0, scale)
    if scale == 0.0:
        return empty
    C, r = _candidate_directions(X, y / scale, k, d, eps, L, activation, cfg)
    if C.shape[0] == 0:
        return replace(empty, reduced_dim=r)
    f = activation_fn(activation)
    b = (f(X @ C.T).T @ y) / X.shape[0]
    if closed_form_gram:
        G = CLOSED_FORM_KERNELS[activation](C, C)
    else:
        G = monte_carlo_kernel(activation, C, C, cfg.n_gram, cfg.gram_seed)
    a = nonnegative_least_squares(G, b, simplex_cap, cfg.max_iter, cfg.tol)
    nz = a > 0
    return GLMFit(GLMParams(a[nz], C[nz], 0.0, name), C.shape[0], r, scale)


def glm_learn(samples: SampleSet, k: int, d: int = 2, eps: float = 0.15, activation="relu",
              L: float = 1.0, cfg: GLMConfig | None = None) -> GLMFit:
    """Fit H = sum_j a_j sigma(c_j . x) with a_j >= 0 and sum_j a_j <= 1 over cover directions c_j.

    Gram entries E[sigma(c_i . x) sigma(c_j . x)] are Monte-Carlo estimates.
    """
    return _fit(samples, k, d, eps, activation, L, cfg or GLMConfig(), 1.0, False)


def relu_pac_learn(samples: SampleSet, k: int, d: int = 2, eps: float = 0.15,
                   cfg: GLMConfig | None = None) -> GLMFit:
    """ReLU case: Lipschitz constant 1, closed-form Gram, no cap on the coefficient sum."""
    return _fit(samples, k, d, eps, "relu", 1.0, cfg or GLMConfig(), None, True)
