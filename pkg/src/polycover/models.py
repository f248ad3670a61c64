"""Model parameters and explicit densities for the four mixture families."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import PreconditionError

LOG_2PI = math.log(2 * math.pi)


def _simplex(w, name="weights") -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise PreconditionError(f"{name} must lie on the probability simplex, got {w}")
    return w


def _unit_rows(V, name) -> np.ndarray:
    V = np.atleast_2d(np.asarray(V, dtype=float))
    norms = np.linalg.norm(V, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise PreconditionError(f"{name} must be unit vectors, got norms {norms}")
    return V


@dataclass(frozen=True)
class GMMParams:
    """sum_j w_j N(mu_j, I)."""

    weights: np.ndarray
    means: np.ndarray
    kind = "gmm"

    def __post_init__(self):
        object.__setattr__(self, "weights", _simplex(self.weights))
        object.__setattr__(self, "means", np.atleast_2d(np.asarray(self.means, dtype=float)))
        if self.means.shape[0] != self.weights.size:
            raise PreconditionError("one mean per weight required")

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def m(self) -> int:
        return self.means.shape[1]

    def parameters(self) -> np.ndarray:
        return self.means


@dataclass(frozen=True)
class GLMParams:
    """F(x) = sum_i a_i sigma(w_i . x), observed with N(0, sigma^2) noise."""

    a: np.ndarray
    W: np.ndarray
    sigma: float = 0.0
    activation: str = "relu"
    kind = "glm"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if np.any(a < 0):
            raise PreconditionError("coefficients a_i must be non-negative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "W", _unit_rows(self.W, "directions w_i"))
        if self.W.shape[0] != a.size:
            raise PreconditionError("one direction per coefficient required")
        if self.sigma < 0:
            raise PreconditionError("sigma must be non-negative")

    @property
    def k(self) -> int:
        return self.a.size

    @property
    def m(self) -> int:
        return self.W.shape[1]

    def parameters(self) -> np.ndarray:
        return self.W

    @property
    def weights(self) -> np.ndarray:
        return self.a


def ReluParams(a, W, sigma: float = 0.0) -> GLMParams:
    return GLMParams(a, W, sigma, "relu")


@dataclass(frozen=True)
class MLRParams:
    """y = beta_i . x + N(0, sigma^2) with probability w_i, x ~ N(0, I)."""

    weights: np.ndarray
    betas: np.ndarray
    sigma: float = 0.0
    kind = "mlr"

    def __post_init__(self):
        object.__setattr__(self, "weights", _simplex(self.weights))
        object.__setattr__(self, "betas", np.atleast_2d(np.asarray(self.betas, dtype=float)))
        if self.betas.shape[0] != self.weights.size:
            raise PreconditionError("one regressor per weight required")
        if self.sigma < 0:
            raise PreconditionError("sigma must be non-negative")

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def m(self) -> int:
        return self.betas.shape[1]

    def parameters(self) -> np.ndarray:
        return self.betas


@dataclass(frozen=True)
class HyperplaneParams:
    """sum_j w_j N(0, I - v_j v_j^T) with unit normals v_j."""

    weights: np.ndarray
    normals: np.ndarray
    kind = "hyperplane"

    def __post_init__(self):
        object.__setattr__(self, "weights", _simplex(self.weights))
        object.__setattr__(self, "normals", _unit_rows(self.normals, "normals v_j"))
        if self.normals.shape[0] != self.weights.size:
            raise PreconditionError("one normal per weight required")

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def m(self) -> int:
        return self.normals.shape[1]

    def parameters(self) -> np.ndarray:
        return self.normals


ModelParams = GMMParams | GLMParams | MLRParams | HyperplaneParams


# ---------------------------------------------------------------------------
# explicit densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianMixtureDensity:
    """Density of sum_j w_j N(mu_j, I) on R^m."""

    weights: np.ndarray
    means: np.ndarray

    @classmethod
    def from_params(cls, p: GMMParams) -> "GaussianMixtureDensity":
        return cls(p.weights, p.means)

    def component_logpdf(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        m = X.shape[1]
        sq = (X * X).sum(1)[:, None] - 2 * X @ self.means.T + (self.means ** 2).sum(1)[None, :]
        return -0.5 * np.maximum(sq, 0.0) - 0.5 * m * LOG_2PI

    def logpdf(self, X: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            lw = np.log(self.weights)
        return logsumexp(self.component_logpdf(X) + lw[None, :], axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.means[z] + rng.standard_normal((n, self.means.shape[1]))


@dataclass(frozen=True)
class RegressionMixtureDensity:
    """Joint density of (x, y): x ~ N(0, I), y | x ~ sum_i w_i N(beta_i . x, sigma^2).

    Points are rows [x_1, ..., x_m, y].
    """

    weights: np.ndarray
    betas: np.ndarray
    sigma: float

    @classmethod
    def from_params(cls, p: MLRParams) -> "RegressionMixtureDensity":
        return cls(p.weights, p.betas, p.sigma)

    def component_logpdf(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        X, y = Z[:, :-1], Z[:, -1]
        m = X.shape[1]
        lx = -0.5 * (X * X).sum(1) - 0.5 * m * LOG_2PI
        r = y[:, None] - X @ self.betas.T
        ly = -0.5 * (r / self.sigma) ** 2 - math.log(self.sigma) - 0.5 * LOG_2PI
        return lx[:, None] + ly

    def logpdf(self, Z: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            lw = np.log(self.weights)
        return logsumexp(self.component_logpdf(Z) + lw[None, :], axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        m = self.betas.shape[1]
        X = rng.standard_normal((n, m))
        z = rng.choice(len(self.weights), size=n, p=self.weights)
        y = (X * self.betas[z]).sum(1) + self.sigma * rng.standard_normal(n)
        return np.hstack([X, y[:, None]])


@dataclass(frozen=True)
class DiscreteDensity:
    """Probability mass function on finitely many points (for exact TV checks)."""

    points: np.ndarray
    probs: np.ndarray

    def _index(self, X):
        X = np.atleast_2d(X)
        P = np.atleast_2d(self.points)
        eq = np.all(np.isclose(X[:, None, :], P[None, :, :], rtol=0, atol=1e-12), axis=2)
        return eq

    def logpdf(self, X):
        eq = self._index(X)
        mass = eq.astype(float) @ np.asarray(self.probs, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(mass)

    def sample(self, n, rng):
        idx = rng.choice(len(self.probs), size=n, p=self.probs)
        return np.atleast_2d(self.points)[idx]


def min_separation(params: ModelParams, up_to_sign: bool = False) -> float:
    """Smallest pairwise distance between component parameters."""
    P = params.parameters()
    if P.shape[0] < 2:
        return math.inf
    D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    if up_to_sign:
        D = np.minimum(D, np.linalg.norm(P[:, None, :] + P[None, :, :], axis=2))
    iu = np.triu_indices(P.shape[0], 1)
    return float(D[iu].min())
