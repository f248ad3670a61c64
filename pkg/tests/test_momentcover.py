import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_eval
from polycover.errors import PreconditionError
from polycover.momentcover import (
    dimension_reduce,
    effective_k,
    near_vanishing_subspace,
    parameter_cover,
    cover_weight_floor,
    quadratic_form,
    vanishing_slack,
)
from polycover.polyspace import HomogeneousPoly, SymTensor, space_dim, square_tensor


def power_sum(w, V, order):
    return SymTensor.power_sum(w, V, order)


def rand_poly(rng, m, d):
    return HomogeneousPoly(m, d, rng.standard_normal(space_dim(m, d)))


def rand_sym(rng, m, order, scale=1.0):
    T = SymTensor.zeros(m, order)
    return SymTensor(m, order, scale * rng.standard_normal(T.values.shape))


# ---------------------------------------------------------- quadratic form

def test_quadratic_form_examples():
    for d in (1, 2, 3):
        m = 3
        Q = quadratic_form(power_sum([1.0], [np.eye(m)[0]], 2 * d))
        assert Q.value(HomogeneousPoly.from_dict(m, d, {(d, 0, 0): 1.0})) == pytest.approx(1.0)
        assert Q.value(HomogeneousPoly.from_dict(m, d, {(0, d, 0): 1.0})) == pytest.approx(0.0, abs=1e-15)
    Q0 = quadratic_form(SymTensor.zeros(3, 4))
    assert np.all(Q0.matrix == 0)
    with pytest.raises(PreconditionError):
        quadratic_form(SymTensor.zeros(3, 3))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 4), d=st.integers(1, 3), k=st.integers(1, 4))
def test_quadratic_form_matches_direct_evaluation(seed, m, d, k):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.0, k)
    V = rng.standard_normal((k, m))
    Q = quadratic_form(power_sum(w, V, 2 * d))
    p = rand_poly(rng, m, d)
    direct = float(np.sum(w * brute_eval(p, V) ** 2))
    assert Q.value(p) == pytest.approx(direct, rel=1e-9, abs=1e-12)
    assert np.allclose(Q.matrix, Q.matrix.T, atol=1e-12)
    assert np.linalg.eigvalsh(Q.matrix).min() >= -1e-9 * max(1.0, np.abs(Q.matrix).max())


def test_quadratic_form_is_square_tensor_pairing():
    rng = np.random.default_rng(0)
    for m, d in [(2, 2), (3, 2), (3, 3)]:
        T = rand_sym(rng, m, 2 * d)
        Q = quadratic_form(T)
        for _ in range(10):
            p = rand_poly(rng, m, d)
            assert Q.value(p) == pytest.approx(square_tensor(p).inner(T), rel=1e-10, abs=1e-12)


def test_quadratic_form_perturbation_lower_bound():
    rng = np.random.default_rng(1)
    for m, d in [(3, 1), (3, 2), (2, 3)]:
        exact = power_sum(rng.uniform(0.2, 1, 3), rng.standard_normal((3, m)), 2 * d)
        E = rand_sym(rng, m, 2 * d, 1e-3)
        Q = quadratic_form(SymTensor(m, 2 * d, exact.values + E.values))
        for _ in range(50):
            p = rand_poly(rng, m, d)
            assert Q.value(p) >= -E.norm() * p.norm() ** 2 - 1e-12


# ------------------------------------------------- near vanishing subspace

def test_near_vanishing_examples():
    m = 4
    nv = near_vanishing_subspace(quadratic_form(power_sum([1.0], [np.eye(m)[0]], 2)), 1)
    assert nv.V.dim == m - 1
    # every basis element vanishes at e1: it lies in span{x2..xm}
    assert np.allclose(nv.V.rows[:, 0], 0.0, atol=1e-12)
    Qi = quadratic_form(SymTensor.zeros(m, 2))
    assert near_vanishing_subspace(Qi, 0).V.dim == m
    assert near_vanishing_subspace(Qi, m + 2).is_zero
    with pytest.raises(PreconditionError):
        near_vanishing_subspace(Qi, -1)


@pytest.mark.parametrize("m,d,k", [(3, 1, 2), (3, 2, 3), (4, 2, 4), (3, 3, 5)])
def test_near_vanishing_vanishes_on_support(m, d, k):
    rng = np.random.default_rng(m + d + k)
    Vs = rng.standard_normal((k, m))
    Q = quadratic_form(power_sum(rng.uniform(0.3, 1, k), Vs, 2 * d))
    nv = near_vanishing_subspace(Q, k)
    for b in nv.V.basis:
        assert np.all(np.abs(brute_eval(b, Vs)) <= 1e-6)
    # orthogonal to the top-k eigenvectors
    vals, vecs = np.linalg.eigh(Q.matrix)
    top = vecs[:, np.argsort(vals)[::-1][:k]]
    assert np.abs(nv.V.rows @ top).max() <= 1e-9
    assert nv.top_excluded <= 1e-9
    assert np.all(np.diff(nv.eigenvalues) <= 1e-12)


def test_vanishing_slack_bounds_heavy_points():
    rng = np.random.default_rng(3)
    m, d, k = 3, 2, 3
    w = np.array([0.5, 0.3, 0.2])
    Vs = rng.standard_normal((k, m))
    E = rand_sym(rng, m, 2 * d, 1e-4)
    T = SymTensor(m, 2 * d, power_sum(w, Vs, 2 * d).values + E.values)
    nv = near_vanishing_subspace(quadratic_form(T), k)
    slack = vanishing_slack(nv, E.norm(), w.min())
    vals = np.stack([brute_eval(b, Vs) for b in nv.V.basis], axis=1)
    assert np.all(np.linalg.norm(vals, axis=1) <= slack)


def test_effective_k():
    Q = quadratic_form(power_sum([1.0, 1e-6], np.eye(3)[:2], 2))
    assert effective_k(Q, 3, 1e-3) == 1
    assert effective_k(Q, 0, 1e-3) == 0
    assert effective_k(Q, 3, 0.0) == 2


# ---------------------------------------------------------- parameter cover

def test_parameter_cover_single_point():
    T = power_sum([1.0], [np.eye(3)[0]], 2)
    c = parameter_cover(T, R=1.0, eps=0.2, delta=0.0, k=1, w_floor=0.5)
    assert c.distances(np.eye(3)[:1])[0] <= 0.2


def test_parameter_cover_zero_tensor():
    c = parameter_cover(SymTensor.zeros(3, 2), R=1.0, eps=0.3, delta=1e-3, k=0, w_floor=1.0)
    assert c.distances(np.zeros((1, 3)))[0] <= 0.3


def test_parameter_cover_two_orthogonal():
    V = np.eye(3)[:2]
    for d in (1, 2):
        c = parameter_cover(power_sum([0.5, 0.5], V, 2 * d), R=1.0, eps=0.25, delta=0.0, k=2, w_floor=0.25)
        assert c.distances(V).max() <= 0.25


def test_parameter_cover_perturbed():
    rng = np.random.default_rng(4)
    m, d, k = 3, 2, 2
    Vs = rng.standard_normal((k, m))
    Vs /= np.linalg.norm(Vs, axis=1, keepdims=True)
    E = rand_sym(rng, m, 2 * d, 1e-4)
    T = SymTensor(m, 2 * d, power_sum([0.5, 0.5], Vs, 2 * d).values + E.values)
    c = parameter_cover(T, R=1.0, eps=0.25, delta=E.norm(), k=k, w_floor=0.5)
    assert c.distances(Vs).max() <= 0.25
    with pytest.raises(PreconditionError):
        parameter_cover(T, R=1.0, eps=2.0, delta=0.0, k=k)


def test_cover_weight_floor():
    assert cover_weight_floor(0.1, 1.0, 2, 3, 2) == pytest.approx((0.1 / 24) ** 2)
    assert cover_weight_floor(0.1, 1.0, 2, 3, 2, C=2.0) == pytest.approx((0.1 / 24) ** 4)


# -------------------------------------------------------- dimension reduce

def test_dimension_reduce_examples():
    U = dimension_reduce(power_sum([1.0], [np.eye(4)[0]], 2), 0.5, 1e-6)
    assert U.shape == (4, 1) and np.allclose(np.abs(U[:, 0]), np.eye(4)[0])
    assert dimension_reduce(SymTensor.zeros(4, 2), 0.5, 1e-6).shape == (4, 0)
    with pytest.raises(PreconditionError):
        dimension_reduce(SymTensor.zeros(4, 4), 0.5, 1e-6)


def test_dimension_reduce_exact_and_perturbed():
    rng = np.random.default_rng(5)
    m, k = 6, 3
    Vs = rng.standard_normal((k, m))
    Vs /= np.linalg.norm(Vs, axis=1, keepdims=True)
    w = np.array([0.5, 0.3, 0.2])
    w_floor = 0.2
    T2 = power_sum(w, Vs, 2)
    U = dimension_reduce(T2, w_floor, 1e-9)
    assert U.shape[1] == k
    assert np.linalg.norm(Vs.T - U @ (U.T @ Vs.T), axis=0).max() <= 1e-9
    for delta in (1e-4, 1e-3):
        E = rng.standard_normal((m, m))
        E = (E + E.T) / 2
        E *= delta / np.linalg.norm(E)
        T2p = SymTensor.from_dense(T2.to_dense() + E)
        U = dimension_reduce(T2p, w_floor, delta)
        assert U.shape[1] <= k
        dist = np.linalg.norm(Vs.T - U @ (U.T @ Vs.T), axis=0)
        assert dist.max() <= 2 * np.sqrt(delta / w_floor)
    assert dimension_reduce(T2, w_floor, 1e-9, k=2).shape[1] == 2
