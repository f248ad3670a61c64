"""Seeded synthetic data, matched parameter errors, and a Monte-Carlo TV oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import PreconditionError
from .estimators import SampleSet, activation_fn
from .models import GLMParams, GMMParams, HyperplaneParams, MLRParams, ModelParams

KINDS = ("gmm", "glm", "mlr", "hyperplane")
TV_CHUNK = 50_000


@dataclass(frozen=True)
class GenSpec:
    params: ModelParams
    n: int
    seed: int

    def __post_init__(self):
        if self.n < 1:
            raise PreconditionError("n must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise PreconditionError("seed must be a 64-bit unsigned integer")

    @property
    def kind(self) -> str:
        return self.params.kind


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream labelled ``key`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


def _labels(spec: GenSpec, weights: np.ndarray) -> np.ndarray:
    return stream(spec.seed, 0).choice(len(weights), size=spec.n, p=weights)


def sample(spec: GenSpec) -> SampleSet:
    """Draw ``spec.n`` i.i.d. samples; component j uses its own stream j + 1."""
    p = spec.params
    n = spec.n
    if isinstance(p, GMMParams):
        z = _labels(spec, p.weights)
        X = np.empty((n, p.m))
        for j in range(p.k):
            idx = np.flatnonzero(z == j)
            X[idx] = p.means[j] + stream(spec.seed, j + 1).standard_normal((idx.size, p.m))
        return SampleSet(X, None, spec.seed)
    if isinstance(p, HyperplaneParams):
        z = _labels(spec, p.weights)
        X = np.empty((n, p.m))
        for j in range(p.k):
            idx = np.flatnonzero(z == j)
            G = stream(spec.seed, j + 1).standard_normal((idx.size, p.m))
            v = p.normals[j]
            X[idx] = G - np.outer(G @ v, v)
        return SampleSet(X, None, spec.seed)
    if isinstance(p, MLRParams):
        z = _labels(spec, p.weights)
        X = np.empty((n, p.m))
        y = np.empty(n)
        for j in range(p.k):
            idx = np.flatnonzero(z == j)
            g = stream(spec.seed, j + 1)
            X[idx] = g.standard_normal((idx.size, p.m))
            y[idx] = X[idx] @ p.betas[j]
            if p.sigma > 0:
                y[idx] += p.sigma * g.standard_normal(idx.size)
        return SampleSet(X, y, spec.seed)
    if isinstance(p, GLMParams):
        X = stream(spec.seed, 1).standard_normal((n, p.m))
        f = activation_fn(p.activation)
        y = f(X @ p.W.T) @ p.a
        if p.sigma > 0:
            y = y + p.sigma * stream(spec.seed, 2).standard_normal(n)
        return SampleSet(X, y, spec.seed)
    raise PreconditionError(f"unsupported model parameters {type(p).__name__}")


def labels(spec: GenSpec) -> np.ndarray | None:
    """Hidden component labels of ``sample(spec)`` (None for GLMs)."""
    p = spec.params
    if isinstance(p, GLMParams):
        return None
    return _labels(spec, p.weights)


def match_error(estimate: ModelParams, truth: ModelParams, up_to_sign: bool = False) -> tuple[float, float]:
    """(max matched parameter error, max matched weight error) under the best assignment."""
    A, B = estimate.parameters(), truth.parameters()
    if A.shape != B.shape:
        raise PreconditionError(f"component counts differ: {A.shape[0]} estimated vs {B.shape[0]} true")
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    if up_to_sign:
        D = np.minimum(D, np.linalg.norm(A[:, None, :] + B[None, :, :], axis=2))
    rows, cols = linear_sum_assignment(D)
    werr = float(np.max(np.abs(estimate.weights[rows] - truth.weights[cols])))
    return float(D[rows, cols].max()), werr


def tv_estimate(p, q, n: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo total variation distance with its jackknife standard error.

    Averages 1 - min(1, p(x)/q(x)) over x ~ q.  Pointwise this equals
    1/2 |p/q - 1| + 1/2 (1 - p/q), and E_q[p/q] is the p-mass of the support
    of q, so the mean is 1/2 E_q |p/q - 1| whenever p is absolutely
    continuous with respect to q and stays exact when the supports differ.
    ``p`` and ``q`` provide ``logpdf``; ``q`` also provides ``sample(n, rng)``.
    """
    X = q.sample(n, stream(seed, 99))
    # chunked so mixtures with many candidates never materialise an n x candidates array
    log_ratio = np.concatenate([p.logpdf(X[i:i + TV_CHUNK]) - q.logpdf(X[i:i + TV_CHUNK])
                                for i in range(0, n, TV_CHUNK)])
    with np.errstate(over="ignore"):
        ratio = np.exp(log_ratio)
    f = 1.0 - np.minimum(1.0, ratio)
    est = float(f.mean())
    loo = (f.sum() - f) / (n - 1)
    se = float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    return est, se
