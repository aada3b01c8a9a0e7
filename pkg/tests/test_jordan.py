import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from flagspec.errors import InputError, Singular
from flagspec.jordan import (
    Flow,
    HyperbolicType,
    IllConditionedBasis,
    additive_jordan,
    conjugated_flow,
    hyperbolic_type,
    is_conformal,
    jordan,
    multiplicative_jordan,
    sorted_flow,
)
from generators import random_conformal_generator, random_invertible, random_well_conditioned

E = np.e
ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])
NONCONF = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -2.0]])


def test_flow_validation():
    with pytest.raises(Singular):
        Flow.discrete([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(InputError):
        Flow("sometimes", np.eye(2))
    Flow.continuous([[0.0, 0.0], [0.0, 0.0]])


def test_flow_times():
    g = np.array([[2.0, 1.0], [0.0, 0.5]])
    f = Flow.discrete(g)
    assert_allclose(f.at(3), g @ g @ g)
    assert_allclose(f.at(-2), np.linalg.inv(g @ g))
    assert_allclose(f.at(0), np.eye(2))
    with pytest.raises(InputError):
        f.at(0.5)
    x = np.array([[0.1, 1.0], [-1.0, 0.2]])
    assert_allclose(Flow.continuous(x).at(0.7), scipy.linalg.expm(0.7 * x))
    assert_allclose(Flow.continuous(x).inverse().at(0.7), scipy.linalg.expm(-0.7 * x))


def test_additive_examples():
    s, n = additive_jordan(np.diag([1.0, -1.0]))
    assert_allclose(s, np.diag([1.0, -1.0]))
    assert_allclose(n, 0.0, atol=1e-15)
    e12 = np.array([[0.0, 1.0], [0.0, 0.0]])
    s, n = additive_jordan(e12)
    assert_allclose(s, 0.0, atol=1e-15)
    assert_allclose(n, e12, atol=1e-15)
    s, n = additive_jordan(NONCONF)
    assert_allclose(s, np.diag([1.0, 1.0, -2.0]), atol=1e-14)
    expected = np.zeros((3, 3))
    expected[0, 1] = 1.0
    assert_allclose(n, expected, atol=1e-14)


def test_multiplicative_examples():
    jt = multiplicative_jordan(np.diag([2.0, 0.5]))
    assert_allclose(jt.elliptic, np.eye(2), atol=1e-15)
    assert_allclose(jt.hyperbolic, np.diag([2.0, 0.5]))
    assert_allclose(jt.unipotent, np.eye(2), atol=1e-15)

    g = np.array([[0.0, -2.0], [0.5, 0.0]])
    jt = multiplicative_jordan(g)
    assert_allclose(jt.elliptic, g, atol=1e-14)
    assert_allclose(jt.hyperbolic, np.eye(2), atol=1e-14)
    assert_allclose(jt.unipotent, np.eye(2), atol=1e-14)

    jt = multiplicative_jordan([[2.0, 1.0], [0.0, 2.0]])
    assert_allclose(jt.elliptic, np.eye(2), atol=1e-14)
    assert_allclose(jt.hyperbolic, 2 * np.eye(2), atol=1e-14)
    assert_allclose(jt.unipotent, [[1.0, 0.5], [0.0, 1.0]], atol=1e-14)


def check_discrete_triple(g, jt):
    n = g.shape[0]
    ng = np.linalg.norm(g)
    e, h, u = jt.elliptic, jt.hyperbolic, jt.unipotent
    assert np.linalg.norm(e @ h @ u - g) <= 1e-8 * ng
    for a, b in ((e, h), (e, u), (h, u)):
        assert np.linalg.norm(a @ b - b @ a) <= 1e-8 * ng ** 2
    assert_allclose(np.abs(np.linalg.eigvals(e)), 1.0, atol=1e-8)
    hv = np.linalg.eigvals(h)
    assert np.all(np.abs(hv.imag) <= 1e-8 * ng) and np.all(hv.real > 0)
    assert np.linalg.norm(np.linalg.matrix_power(u - np.eye(n), n)) <= 1e-8


def test_multiplicative_random():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        g = random_invertible(rng, n)
        check_discrete_triple(g, multiplicative_jordan(g))


def test_multiplicative_defective():
    # eigenvalue 2 with a Jordan block, a rotation pair and a negative one
    p = random_well_conditioned(np.random.default_rng(3), 5, 50)
    core = np.zeros((5, 5))
    core[:2, :2] = [[2.0, 1.0], [0.0, 2.0]]
    core[2:4, 2:4] = [[0.6, -0.8], [0.8, 0.6]]
    core[4, 4] = -0.3
    g = p @ core @ np.linalg.inv(p)
    jt = multiplicative_jordan(g)
    check_discrete_triple(g, jt)
    assert not is_conformal(Flow.discrete(g))


def test_continuous_parts():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        x = rng.standard_normal((n, n))
        jt = jordan(Flow.continuous(x))
        e, h, nil = jt.elliptic, jt.hyperbolic, jt.unipotent
        nx = np.linalg.norm(x)
        assert np.linalg.norm(e + h + nil - x) <= 1e-10 * nx
        for a, b in ((e, h), (e, nil), (h, nil)):
            assert np.linalg.norm(a @ b - b @ a) <= 1e-8 * nx ** 2
        assert np.all(np.abs(np.linalg.eigvals(e).real) <= 1e-8 * nx)
        assert np.all(np.abs(np.linalg.eigvals(h).imag) <= 1e-8 * nx)
        assert np.linalg.norm(np.linalg.matrix_power(nil, n)) <= 1e-8


def test_idempotent_on_hyperbolic_factor():
    rng = np.random.default_rng(4)
    g = random_invertible(rng, 4)
    h = multiplicative_jordan(g).hyperbolic
    jt = multiplicative_jordan(h)
    assert_allclose(jt.elliptic, np.eye(4), atol=1e-8)
    assert_allclose(jt.hyperbolic, h, atol=1e-8)
    assert_allclose(jt.unipotent, np.eye(4), atol=1e-8)


def test_hyperbolic_type_examples():
    h = hyperbolic_type(Flow.discrete(np.diag([E, 1 / E])))
    assert_allclose(h.mu, [1.0, -1.0])
    assert h.blocks == ((0,), (1,))
    assert_allclose(h.basis_change, np.eye(2))

    h = hyperbolic_type(Flow.continuous(NONCONF))
    assert_allclose(h.mu, [1.0, 1.0, -2.0], atol=1e-12)
    assert h.blocks == ((0, 1), (2,))

    h = hyperbolic_type(Flow.discrete(ROT90))
    assert_allclose(h.mu, [0.0, 0.0], atol=1e-14)
    assert h.blocks == ((0, 1),)


def test_hyperbolic_type_normalization():
    h = hyperbolic_type(Flow.discrete(np.diag([4.0, 2.0, 1.0])))
    assert_allclose(h.mu, [np.log(2), 0.0, -np.log(2)], atol=1e-14)
    assert abs(h.mu.sum()) <= 1e-10
    assert_allclose(h.offset, np.log(2))


def test_hyperbolic_type_blocks_exactly_equal():
    x = np.diag([1.0, 1.0 + 1e-9, -2.0])
    h = hyperbolic_type(Flow.continuous(x))
    assert h.blocks == ((0, 1), (2,))
    assert h.mu[0] == h.mu[1]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_similarity_invariance(seed, n):
    rng = np.random.default_rng(seed)
    g = random_invertible(rng, n)
    q = random_well_conditioned(rng, n, 100)
    h1 = hyperbolic_type(Flow.discrete(g))
    h2 = hyperbolic_type(Flow.discrete(q @ g @ np.linalg.inv(q)))
    assert_allclose(h1.mu, h2.mu, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_discrete_continuous_consistency(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n))
    x *= 0.8 / max(1.0, np.max(np.abs(np.linalg.eigvals(x).imag)))
    h1 = hyperbolic_type(Flow.continuous(x))
    h2 = hyperbolic_type(Flow.discrete(scipy.linalg.expm(x)))
    assert_allclose(h1.mu, h2.mu, atol=1e-6)


def test_is_conformal_examples():
    assert is_conformal(Flow.discrete(np.diag([2.0, 0.5])))
    assert not is_conformal(Flow.discrete([[2.0, 1.0], [0.0, 2.0]]))
    assert is_conformal(Flow.discrete(ROT90))
    assert not is_conformal(Flow.continuous(NONCONF))


def test_conjugated_flow_examples():
    f = Flow.discrete(np.diag([E, 1 / E]))
    g = conjugated_flow(f, hyperbolic_type(f))
    assert_allclose(g.matrix, f.matrix)

    q = random_well_conditioned(np.random.default_rng(5), 2, 20)
    f = Flow.discrete(q @ np.diag([E, 1 / E]) @ np.linalg.inv(q))
    g = conjugated_flow(f, hyperbolic_type(f))
    assert_allclose(g.matrix, np.diag([E, 1 / E]), atol=1e-12)
    assert_allclose(hyperbolic_type(g).mu, [1.0, -1.0], atol=1e-12)

    x = np.random.default_rng(6).standard_normal((4, 4))
    f = Flow.continuous(x)
    g = conjugated_flow(f, hyperbolic_type(f))
    assert_allclose(np.sort_complex(np.linalg.eigvals(g.matrix)), np.sort_complex(np.linalg.eigvals(x)), atol=1e-10)


def test_conjugated_flow_block_diagonal():
    rng = np.random.default_rng(7)
    for _ in range(10):
        x = random_conformal_generator(rng, 4)
        f = Flow.continuous(x)
        h = hyperbolic_type(f)
        g = conjugated_flow(f, h).matrix
        blk = h.block_of
        off = blk[:, None] != blk[None, :]
        assert np.max(np.abs(g[off])) <= 1e-10
        # elliptic part is skew in the sorted basis
        assert_allclose(g - np.diag(h.mu_full), -(g - np.diag(h.mu_full)).T, atol=1e-10)


def test_ill_conditioned_warning():
    x = np.array([[1.0, 1e8], [0.0, 1.0 - 1e-3]])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        h = hyperbolic_type(Flow.continuous(x), cluster_tol=1e-15)
    assert h.condition > 1e6
    assert any(issubclass(w.category, IllConditionedBasis) for w in caught)


def test_from_values():
    h = HyperbolicType.from_values([-1.0, 2.0, 2.0, -1.0])
    assert_allclose(h.mu, [1.5, 1.5, -1.5, -1.5])
    assert h.blocks == ((0, 1), (2, 3))
    assert_allclose(h.basis_change @ np.diag(h.mu_full) @ h.basis_change.T, np.diag([-1.0, 2.0, 2.0, -1.0]))


@pytest.mark.parametrize("kind", ["discrete", "continuous"])
def test_sorted_flow_factorization(kind):
    rng = np.random.default_rng(8)
    x = random_conformal_generator(rng, 4)
    f = Flow(kind, scipy.linalg.expm(x) if kind == "discrete" else x)
    sf = sorted_flow(f)
    t = 3
    full = sf.flow.at(t)
    split = sf.core_at(t) @ np.diag(np.exp(t * sf.htype.mu_full))
    assert_allclose(split, full, rtol=1e-9, atol=1e-9 * np.max(np.abs(full)))
    y = rng.standard_normal((4, 4))
    assert_allclose(sf.adjoint(y, t), full @ y @ np.linalg.inv(full), rtol=1e-7, atol=1e-7 * np.max(np.abs(full)))


def test_sorted_flow_in_place_nonconformal():
    sf = sorted_flow(Flow.continuous(NONCONF), conjugate=False)
    assert sf.htype.blocks == ((0, 1), (2,))
    expected = np.zeros((3, 3))
    expected[0, 1] = 1.0
    assert_allclose(sf.nilpotent_part(), expected, atol=1e-14)
    with pytest.raises(InputError):
        sorted_flow(Flow.continuous([[1.0, 1.0], [0.0, -1.0]]), conjugate=False)
