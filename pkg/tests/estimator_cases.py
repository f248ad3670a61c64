"""Planted instances with analytic target tensors for the five moment estimators.

Each case pairs a sampler with an estimator and the weighted power sum the
estimator is unbiased for.  The targets are built directly from the planted
parameters, independently of the estimator code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from polycover.estimators import (
    HalfspaceEvent,
    SampleSet,
    glm_moment_tensor,
    gmm_moment_tensor,
    hyperplane_moment_tensor,
    mlr_dual_basis,
    mlr_moment_tensor,
    relu_moment_tensor,
)
from polycover.polyspace import SymTensor

ESTIMATORS = ("gmm", "relu", "glm-abs", "mlr", "hyperplane")


@dataclass
class Case:
    name: str
    m: int
    d: int
    draw: Callable[[int, np.random.Generator], SampleSet]
    estimate: Callable[[SampleSet], SymTensor]
    target: SymTensor


def _unit_rows(rng, k, m):
    V = rng.standard_normal((k, m))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def _labels(rng, w, n):
    return rng.choice(len(w), size=n, p=w)


def make_case(name: str, m: int, d: int, rng: np.random.Generator, conditioned: bool = False) -> Case:
    k = 2
    w = rng.dirichlet(np.full(k, 3.0))
    if name == "gmm":
        mu = rng.uniform(-1, 1, (k, m))

        def draw(n, g):
            z = _labels(g, w, n)
            return SampleSet(mu[z] + g.standard_normal((n, m)))

        return Case(name, m, d, draw, lambda s: gmm_moment_tensor(s, d), SymTensor.power_sum(w, mu, 2 * d))
    if name in ("relu", "glm-abs"):
        act = (lambda t: np.maximum(t, 0.0)) if name == "relu" else np.abs
        W = _unit_rows(rng, k, m)
        a = rng.uniform(0.5, 1.5, k)

        def draw(n, g):
            X = g.standard_normal((n, m))
            return SampleSet(X, act(X @ W.T) @ a + 0.1 * g.standard_normal(n))

        est = (lambda s: relu_moment_tensor(s, d)) if name == "relu" else (lambda s: glm_moment_tensor(s, d, activation="abs"))
        return Case(name, m, d, draw, est, SymTensor.power_sum(a, W, 2 * d))
    if name == "mlr":
        B = rng.uniform(-1, 1, (k, m))
        event = HalfspaceEvent(np.eye(m)[0], -0.3) if conditioned else None
        dual = mlr_dual_basis(event, 2 * d, n_gram=2_000_000, seed=11) if conditioned else None

        def draw(n, g):
            z = _labels(g, w, n)
            X = g.standard_normal((n, m))
            return SampleSet(X, np.einsum("ij,ij->i", X, B[z]) + 0.05 * g.standard_normal(n))

        return Case(name, m, d, draw, lambda s: mlr_moment_tensor(s, d, event=event, dual=dual),
                    SymTensor.power_sum(w, B, 2 * d))
    if name == "hyperplane":
        V = _unit_rows(rng, k, m)

        def draw(n, g):
            z = _labels(g, w, n)
            G = g.standard_normal((n, m))
            return SampleSet(G - np.einsum("ij,ij->i", G, V[z])[:, None] * V[z])

        return Case(name, m, d, draw, lambda s: hyperplane_moment_tensor(s, d), SymTensor.power_sum(w, V, 2 * d))
    raise ValueError(name)


def unbiasedness(case: Case, n: int, reps: int, seed: int) -> float:
    """Largest |mean - target| / (std/sqrt(reps)) over orbit entries."""
    g = np.random.default_rng(seed)
    E = np.array([case.estimate(case.draw(n, g)).values for _ in range(reps)])
    mean, sd = E.mean(axis=0), E.std(axis=0, ddof=1)
    z = np.abs(mean - case.target.values) / np.maximum(sd / np.sqrt(reps), 1e-300)
    z[(sd == 0) & np.isclose(mean, case.target.values, atol=1e-12)] = 0.0
    return float(z.max())


def variance_ratio(case: Case, n: int, trials: int, seed: int) -> float:
    """Mean squared entry error at 2n divided by that at n."""
    g = np.random.default_rng(seed)
    mult = case.target.multiplicities

    def mse(nn):
        errs = [np.sum(mult * (case.estimate(case.draw(nn, g)).values - case.target.values) ** 2)
                for _ in range(trials)]
        return float(np.mean(errs))

    return mse(2 * n) / mse(n)
