"""Maximum-likelihood mixture weights over a fixed list of candidate densities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..errors import EstimationError, PreconditionError


@dataclass(frozen=True)
class MixtureHypothesis:
    """sum_j weights_j p_j for explicit candidate densities p_j.

    ``components`` exposes ``component_logpdf(X) -> (n, n_candidates)``.
    """

    components: object
    weights: np.ndarray
    floor: float
    objective_history: tuple[float, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {w.sum()}")
        if np.any(w < self.floor * (1 - 1e-9)):
            raise ValueError("a weight lies below the floor")
        object.__setattr__(self, "weights", w)

    def logpdf(self, X: np.ndarray) -> np.ndarray:
        return logsumexp(self.components.component_logpdf(X) + np.log(self.weights)[None, :], axis=1)

    def sample(self, n: int, rng: np.random.Generator):
        """Draw from the hypothesis (components must expose ``sample_components``)."""
        z = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.components.sample_components(z, rng)


def mixture_objective(logp: np.ndarray, w: np.ndarray) -> float:
    """Empirical mean log-density of the mixture with weights ``w``."""
    with np.errstate(divide="ignore"):
        return float(np.mean(logsumexp(logp + np.log(w)[None, :], axis=1)))


def fit_mixture_weights(components, samples, eps: float, max_iter: int = 10_000,
                        rel_tol: float = 1e-8, relax: float = 2.0) -> MixtureHypothesis:
    """Maximise the empirical log-likelihood over the simplex with every weight >= eps/n.

    Weights are written w = floor + (1 - n floor) u with u on the simplex and
    updated multiplicatively, u_j <- u_j r_j / sum_l u_l r_l with
    r_j = mean_x p_j(x)/q(x).  This exponentiated-gradient step is the
    minorise-maximise update for the concave objective, so the objective
    never decreases.  Each iteration first tries the over-relaxed step
    u_j r_j^relax and keeps it only if the objective does not drop.
    """
    X = samples.xs if hasattr(samples, "xs") else np.asarray(samples)
    logp = np.asarray(components.component_logpdf(X), dtype=float)
    n_s, n = logp.shape
    if n == 0:
        raise PreconditionError("fit_mixture_weights needs at least one candidate")
    if not 0 < eps < 1:
        raise PreconditionError("eps must lie in (0, 1)")
    floor = eps / n
    if n == 1:
        return MixtureHypothesis(components, np.ones(1), floor, (mixture_objective(logp, np.ones(1)),))
    # shift each row for stability; the shift does not change the maximiser
    shift = logp.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(shift)):
        raise EstimationError("every candidate density vanishes at some sample")
    P = np.exp(logp - shift)
    base = float(shift.mean())
    free = 1.0 - n * floor

    def objective(w):
        q = P @ w
        if np.any(q <= 0):
            raise EstimationError("mixture density vanished at a sample")
        return float(np.mean(np.log(q))) + base, q

    u = np.full(n, 1.0 / n)
    w = floor + free * u
    obj, q = objective(w)
    hist = [obj]
    for _ in range(max_iter):
        r = (1.0 / q) @ P / n_s
        # over-relaxed step first; fall back to the monotone step if it loses ground
        for power in (relax, 1.0):
            u_new = u * r ** power
            u_new /= u_new.sum()
            w_new = floor + free * u_new
            obj_new, q_new = objective(w_new)
            if obj_new >= obj - 1e-12 or power == 1.0:
                break
        u, w, q = u_new, w_new, q_new
        hist.append(obj_new)
        converged = abs(obj_new - obj) <= rel_tol * max(1.0, abs(obj))
        obj = obj_new
        if converged:
            break
    w = w / w.sum()
    return MixtureHypothesis(components, w, floor, tuple(hist))


@dataclass(frozen=True)
class GaussianCandidates:
    """Candidate densities N(c, I) for the rows c of ``centers``."""

    centers: np.ndarray

    def component_logpdf(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        m = X.shape[1]
        sq = (X * X).sum(1)[:, None] - 2 * X @ self.centers.T + (self.centers ** 2).sum(1)[None, :]
        return -0.5 * np.maximum(sq, 0.0) - 0.5 * m * math.log(2 * math.pi)

    def sample_components(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.centers[z] + rng.standard_normal((z.size, self.centers.shape[1]))


@dataclass(frozen=True)
class RegressionCandidates:
    """Candidate joint densities x ~ N(0, I), y | x ~ N(c . x, sigma^2) on rows [x, y]."""

    betas: np.ndarray
    sigma: float

    def component_logpdf(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        X, y = Z[:, :-1], Z[:, -1]
        m = X.shape[1]
        lx = -0.5 * (X * X).sum(1) - 0.5 * m * math.log(2 * math.pi)
        r = y[:, None] - X @ self.betas.T
        return lx[:, None] - 0.5 * (r / self.sigma) ** 2 - math.log(self.sigma) - 0.5 * math.log(2 * math.pi)

    def sample_components(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        X = rng.standard_normal((z.size, self.betas.shape[1]))
        y = (X * self.betas[z]).sum(1) + self.sigma * rng.standard_normal(z.size)
        return np.hstack([X, y[:, None]])
