"""Table of quick exact checks run by ``polycover selftest``.

Each entry is a closed-form or degenerate case with a known answer.  The
table is small enough to finish in a few seconds and exercises every
module once.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .cover import ball_cover, classify_point, evaluation_map, linear_zero_subspace
from .errors import PreconditionError
from .estimators import (
    SampleSet,
    boosted_tensor_estimate,
    glm_moment_tensor,
    gmm_moment_tensor,
    hermite_eval,
    hyperplane_moment_tensor,
    mlr_moment_tensor,
    relu_moment_tensor,
    sym,
)
from .learners import fit_mixture_weights, hyperplane_learn, GaussianCandidates
from .models import DiscreteDensity, GLMParams, GMMParams, HyperplaneParams, MLRParams
from .momentcover import dimension_reduce, near_vanishing_subspace, quadratic_form
from .polyspace import (
    HomogeneousPoly,
    PolySubspace,
    SymTensor,
    bilinear_slice,
    enumerate_monomials,
    evaluate,
    inner_product,
    orthonormalize,
    poly_of,
    restrict,
    restrict_subspace_to_coords,
    space_dim,
    square_tensor,
    tensor_of,
)
from .synth import GenSpec, match_error, sample, stream, tv_estimate


def _poly(m, d, terms):
    return HomogeneousPoly.from_dict(m, d, terms)


def _raises(fn, exc=PreconditionError) -> bool:
    try:
        fn()
    except exc:
        return True
    return False


def _restrict_xy():
    # p = x1 * y1 in variables (x1, y1); restricting at x0 = (2) leaves 2 y1 in degree 1
    parts = restrict(_poly(2, 2, {(1, 1): 1.0}), [2.0])
    return len(parts) == 3 and np.allclose(parts[1].coeffs, [2.0]) and np.allclose(parts[0].coeffs, 0) \
        and np.allclose(parts[2].coeffs, 0)


def _roundtrip():
    c = stream(0, 1).standard_normal(space_dim(3, 3))
    p = HomogeneousPoly(3, 3, c)
    return np.allclose(poly_of(tensor_of(p)).coeffs, c, rtol=0, atol=1e-12)


def _evaluation_map_x1y():
    m, d = 3, 2
    W = orthonormalize([_poly(m, d, {(1, 1, 0): 1.0})])
    Wb = bilinear_slice(PolySubspace.full(m, d), 1)
    A = evaluation_map(Wb, [1.0])
    return A.shape[0] == Wb.dim and W.dim == 1


def _hyperplane_single():
    p = HyperplaneParams([1.0], [[1.0, 0, 0, 0]])
    s = sample(GenSpec(p, 200, 3))
    est = hyperplane_learn(s, 1, 1.0)
    return match_error(est, p, up_to_sign=True)[0] <= 1e-8


def _order2_cov():
    X = sample(GenSpec(HyperplaneParams([1.0], [[1.0, 0, 0]]), 50_000, 1)).xs
    T = hyperplane_moment_tensor(X, 1)
    E = np.zeros((3, 3))
    E[0, 0] = 1.0
    return np.abs(T.to_dense() - E).max() < 0.05


CHECKS: list[tuple[str, Callable[[], bool]]] = [
    ("monomials (2,2) in fixed order", lambda: enumerate_monomials(2, 2) == [(2, 0), (1, 1), (0, 2)]),
    ("monomials (3,2) count 6", lambda: len(enumerate_monomials(3, 2)) == 6),
    ("monomials (1,5) single", lambda: enumerate_monomials(1, 5) == [(5,)]),
    ("<x1^2, x1^2> = 1", lambda: math.isclose(inner_product(_poly(2, 2, {(2, 0): 1.0}), _poly(2, 2, {(2, 0): 1.0})), 1.0)),
    ("x1 x2 at (2,3) = 6", lambda: math.isclose(float(evaluate(_poly(2, 2, {(1, 1): 1.0}), [2.0, 3.0])), 6.0)),
    ("zero polynomial evaluates to 0", lambda: float(evaluate(HomogeneousPoly.zero(3, 2), [1.0, -2.0, 5.0])) == 0.0),
    ("restrict x1 y1 at (2)", _restrict_xy),
    ("restrict x1^2 at (c) gives c^2", lambda: np.allclose(restrict(_poly(2, 2, {(2, 0): 1.0}), [3.0])[0].coeffs, [9.0])),
    ("x1^d is e1^(x)d with norm 1", lambda: math.isclose(tensor_of(_poly(2, 3, {(3, 0): 1.0})).norm(), 1.0)),
    ("tensor/poly round trip", _roundtrip),
    ("square tensor of x1 at 3 is 9", lambda: math.isclose(square_tensor(_poly(1, 1, {(1,): 1.0})).contract([3.0]), 9.0)),
    ("square tensor of x1+x2 at (1,1) is 4",
     lambda: math.isclose(square_tensor(_poly(2, 1, {(1, 0): 1.0, (0, 1): 1.0})).contract([1.0, 1.0]), 4.0)),
    ("orthonormalize [x1^2, 2 x1^2] has dim 1",
     lambda: orthonormalize([_poly(2, 2, {(2, 0): 1.0}), _poly(2, 2, {(2, 0): 2.0})]).dim == 1),
    ("orthonormalize [x1^2, x2^2] has dim 2",
     lambda: orthonormalize([_poly(2, 2, {(2, 0): 1.0}), _poly(2, 2, {(0, 2): 1.0})]).dim == 2),
    ("span{x2} restricted to coord 1 is zero",
     lambda: restrict_subspace_to_coords(orthonormalize([_poly(2, 1, {(0, 1): 1.0})]), [0]).dim == 0),
    ("full space restricted has codim 0", lambda: restrict_subspace_to_coords(PolySubspace.full(3, 2), [0, 2]).codim == 0),
    ("slice of the full space is full", lambda: bilinear_slice(PolySubspace.full(3, 2), 1).codim == 0),
    ("slice of x-only monomials is zero",
     lambda: bilinear_slice(orthonormalize([_poly(3, 2, {(2, 0, 0): 1.0})]), 1).dim == 0),
    ("ball_cover(1,1,1) has at most 5 points", lambda: len(ball_cover(1, 1.0, 1.0)) <= 5),
    ("ball_cover(3,1,2) is nonempty", lambda: len(ball_cover(3, 1.0, 2.0)) >= 1),
    ("zero set of span{x2} is span(e1)",
     lambda: np.allclose(np.abs(linear_zero_subspace(orthonormalize([_poly(2, 1, {(0, 1): 1.0})]))), [[1.0], [0.0]])),
    ("zero set of the zero space is R^m", lambda: linear_zero_subspace(PolySubspace.zero(3, 1)).shape[1] == 3),
    ("zero set of the full linear space is {0}", lambda: linear_zero_subspace(PolySubspace.full(3, 1)).shape[1] == 0),
    ("evaluation map at x0 = 0 vanishes",
     lambda: np.allclose(evaluation_map(bilinear_slice(PolySubspace.full(3, 2), 1), [0.0]), 0.0)),
    ("evaluation map on the slice", _evaluation_map_x1y),
    ("A = 0 with dim > k' is bad", lambda: not classify_point(np.zeros((3, 2)), 1, 0.5).good),
    ("unit singular values are good", lambda: classify_point(np.eye(3), 0, 0.5).good),
    ("Q(x1^d) = 1 and Q(x2^d) = 0 for T = e1^(x)2d",
     lambda: (lambda Q: math.isclose(Q.value(_poly(2, 2, {(2, 0): 1.0})), 1.0)
              and abs(Q.value(_poly(2, 2, {(0, 2): 1.0}))) < 1e-15)(
         quadratic_form(SymTensor.power_sum([1.0], [[1.0, 0.0]], 4)))),
    ("T = 0 gives Q = 0", lambda: np.allclose(quadratic_form(SymTensor.zeros(3, 2)).matrix, 0.0)),
    ("exact T from e1 gives V = span{x2, x3}",
     lambda: near_vanishing_subspace(quadratic_form(SymTensor.power_sum([1.0], [[1.0, 0, 0]], 2)), 1).V.dim == 2),
    ("k = 0 gives the full space", lambda: near_vanishing_subspace(quadratic_form(SymTensor.zeros(2, 2)), 0).V.codim == 0),
    ("dimension_reduce exact e1 gives span(e1)",
     lambda: np.allclose(np.abs(dimension_reduce(SymTensor.power_sum([1.0], [[1.0, 0, 0]], 2), 1.0, 0.0, 1)[:, 0]),
                         [1.0, 0, 0])),
    ("dimension_reduce T2 = 0 gives {0}", lambda: dimension_reduce(SymTensor.zeros(3, 2), 0.5, 0.0).shape[1] == 0),
    ("He_2(0) = -1", lambda: math.isclose(float(hermite_eval(2, 0.0)), -1.0)),
    ("He_3(1) = -2", lambda: math.isclose(float(hermite_eval(3, 1.0)), -2.0)),
    ("symmetric GMM odd orbit vanishes",
     lambda: abs(gmm_moment_tensor(np.vstack([np.eye(2)[:1] + 0, -np.eye(2)[:1]]), 1).values[0]) < 1e-15),
    ("F = 0 gives the zero GLM tensor",
     lambda: np.allclose(glm_moment_tensor(SampleSet(stream(0, 1).standard_normal((100, 3)), np.zeros(100)), 1).values, 0)),
    ("GLM with ReLU equals relu_moment_tensor", lambda: (lambda s: np.array_equal(
        glm_moment_tensor(s, 1, activation="relu").values, relu_moment_tensor(s, 1).values))(
        sample(GenSpec(GLMParams([1.0], [[1.0, 0, 0]]), 1000, 2)))),
    ("identity activation rejected at even order",
     lambda: _raises(lambda: glm_moment_tensor(SampleSet(np.ones((4, 2)), np.ones(4)), 1, activation="identity"))),
    ("beta = 0 gives the zero MLR tensor", lambda: np.allclose(
        mlr_moment_tensor(SampleSet(stream(0, 1).standard_normal((200, 2)), np.zeros(200)), 1).values, 0.0)),
    ("hyperplane order-2 tensor of e1 is e1 e1^T", _order2_cov),
    ("sym(e1 (x) e2) averages the orbit",
     lambda: np.allclose(sym(np.outer([1.0, 0], [0, 1.0])).to_dense(), [[0, 0.5], [0.5, 0]])),
    ("sym of a symmetric tensor is itself",
     lambda: np.allclose(sym(np.array([[1.0, 2.0], [2.0, 3.0]])).to_dense(), [[1.0, 2.0], [2.0, 3.0]])),
    ("boosting identical repeats returns that tensor", lambda: np.array_equal(
        boosted_tensor_estimate(lambda i: SymTensor.power_sum([1.0], [[1.0, 2.0]], 2), 3, 0.1).values,
        SymTensor.power_sum([1.0], [[1.0, 2.0]], 2).values)),
    ("one candidate gets weight 1",
     lambda: np.allclose(fit_mixture_weights(GaussianCandidates(np.zeros((1, 2))), np.zeros((5, 2)), 0.1).weights, [1.0])),
    ("weights respect the floor", lambda: bool(np.all(fit_mixture_weights(
        GaussianCandidates(np.array([[0.0], [50.0]])), stream(0, 3).standard_normal((200, 1)), 0.1).weights >= 0.05 - 1e-12))),
    ("hyperplane k=1 recovered exactly", _hyperplane_single),
    ("v2 = -v1 fails the separation gate",
     lambda: _raises(lambda: hyperplane_learn(np.zeros((10, 2)), 2, 0.0))),
    ("GMM sample mean near 0", lambda: float(np.linalg.norm(
        sample(GenSpec(GMMParams([1.0], [[0.0, 0.0, 0.0]]), 10_000, 5)).xs.mean(axis=0))) <= 5 * math.sqrt(3 / 10_000)),
    ("hyperplane samples lie in e1^perp",
     lambda: bool(np.all(sample(GenSpec(HyperplaneParams([1.0], [[1.0, 0, 0]]), 500, 1)).xs[:, 0] == 0.0))),
    ("noiseless MLR responses are exact", lambda: (lambda s: bool(np.all(s.ys - s.xs @ np.array([1.0, -2.0]) == 0.0)))(
        sample(GenSpec(MLRParams([1.0], [[1.0, -2.0]], 0.0), 500, 1)))),
    ("identical params match with zero error",
     lambda: match_error(GMMParams([0.5, 0.5], [[0, 1.0], [2, 3.0]]), GMMParams([0.5, 0.5], [[0, 1.0], [2, 3.0]])) == (0.0, 0.0)),
    ("permuted params match with zero error",
     lambda: match_error(GMMParams([0.3, 0.7], [[0, 1.0], [2, 3.0]]), GMMParams([0.7, 0.3], [[2, 3.0], [0, 1.0]])) == (0.0, 0.0)),
    ("sign-flipped normals match with zero error",
     lambda: match_error(HyperplaneParams([0.5, 0.5], [[1.0, 0], [0, -1.0]]),
                         HyperplaneParams([0.5, 0.5], [[-1.0, 0], [0, 1.0]]), up_to_sign=True) == (0.0, 0.0)),
    ("TV(p, p) within 3 standard errors of 0", lambda: (lambda e: e[0] <= 3 * e[1] + 1e-15)(
        tv_estimate(DiscreteDensity(np.array([[0.0], [1.0]]), np.array([0.5, 0.5])),
                    DiscreteDensity(np.array([[0.0], [1.0]]), np.array([0.5, 0.5])), 2000, 1))),
    ("TV of disjoint supports is 1", lambda: math.isclose(tv_estimate(
        DiscreteDensity(np.array([[0.0]]), np.array([1.0])),
        DiscreteDensity(np.array([[1.0]]), np.array([1.0])), 2000, 1)[0], 1.0)),
]


def run_selftest(print_fn=print) -> int:
    """Run every check; print one PASS/FAIL line each; return the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            ok = bool(fn())
            detail = ""
        except Exception as exc:  # a crashing check is a failure, reported with its reason
            ok, detail = False, f" ({type(exc).__name__}: {exc})"
        failures += not ok
        print_fn(f"{'PASS' if ok else 'FAIL'}  {name}{detail}")
    return failures
