import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tgvinterp.diffops import (
    div2,
    div_tensor,
    div_vector,
    grad,
    power_iteration,
    second_order,
    sym_grad,
)
from tgvinterp.grid import inner, tensor_inner

shapes = st.tuples(st.integers(2, 9), st.integers(2, 9))
steps = st.sampled_from([1.0, 0.5, 0.125, 3.0])


def test_grad_constant_is_zero():
    assert np.all(grad(np.full((5, 4), 2.5)) == 0.0)


def test_grad_linear_ramp():
    u = np.arange(4.0)[:, None] * np.ones((1, 4))
    g = grad(u)
    expected = np.ones((4, 4))
    expected[-1] = 0.0
    assert np.array_equal(g[0], expected)
    assert np.all(g[1] == 0.0)


def test_sym_grad_constant_is_zero():
    assert np.all(sym_grad(np.full((2, 5, 5), 1.7)) == 0.0)


def test_sym_grad_shear_field():
    w = np.zeros((2, 5, 5))
    w[0] = np.arange(5.0)[None, :]
    e = sym_grad(w)
    assert np.all(e[0] == 0.0) and np.all(e[2] == 0.0)
    assert np.all(e[1, :-1, :-1] == 0.5)


def test_second_order_annihilates_affine():
    i, j = np.meshgrid(np.arange(7.0), np.arange(6.0), indexing="ij")
    for h in (1.0, 0.25):
        u = 0.3 + 1.7 * i * h - 0.4 * j * h
        assert np.abs(second_order(u, h)).max() < 1e-12


def test_second_order_of_quadratic():
    h = 0.25
    i = np.arange(8.0)[:, None] * np.ones((1, 8))
    e = second_order((i * h) ** 2, h)
    assert np.allclose(e[0, 1:-1, :], 2.0)


def test_divergences_vanish_on_zero_and_constants():
    assert np.all(div_vector(np.zeros((2, 4, 4))) == 0.0)
    assert np.all(div_tensor(np.zeros((3, 4, 4))) == 0.0)
    assert np.all(div2(np.zeros((3, 4, 4))) == 0.0)
    q = np.full((2, 6, 6), 1.3)
    assert np.allclose(div_vector(q)[1:-1, 1:-1], 0.0)
    p = np.full((3, 6, 6), 0.7)
    assert np.allclose(div_tensor(p)[:, 2:-2, 2:-2], 0.0)


@settings(max_examples=60, deadline=None)
@given(shape=shapes, h=steps, seed=st.integers(0, 2**32 - 1))
def test_grad_adjoint(shape, h, seed):
    r = np.random.default_rng(seed)
    u = r.standard_normal(shape)
    q = r.standard_normal((2,) + shape)
    lhs, rhs = inner(grad(u, h), q), -inner(u, div_vector(q, h))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@settings(max_examples=60, deadline=None)
@given(shape=shapes, h=steps, seed=st.integers(0, 2**32 - 1))
def test_sym_grad_adjoint(shape, h, seed):
    r = np.random.default_rng(seed)
    w = r.standard_normal((2,) + shape)
    p = r.standard_normal((3,) + shape)
    lhs, rhs = tensor_inner(sym_grad(w, h), p), -inner(w, div_tensor(p, h))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@settings(max_examples=60, deadline=None)
@given(shape=shapes, h=steps, seed=st.integers(0, 2**32 - 1))
def test_second_order_adjoint(shape, h, seed):
    r = np.random.default_rng(seed)
    u = r.standard_normal(shape)
    p = r.standard_normal((3,) + shape)
    lhs, rhs = tensor_inner(second_order(u, h), p), inner(u, div2(p, h))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_batched_operators_match_loop(rng):
    u = rng.standard_normal((2, 3, 5, 4))
    d = second_order(u)
    for a in range(2):
        for b in range(3):
            assert np.array_equal(d[a, b], second_order(u[a, b]))


def _dense(op, in_shape):
    n = int(np.prod(in_shape))
    cols = [op(e.reshape(in_shape)).ravel() for e in np.eye(n)]
    return np.array(cols).T


def test_power_iteration_matches_dense_norm():
    shape = (2, 9)
    G = _dense(grad, shape)
    exact = np.linalg.norm(G, 2)
    est, ok, _ = power_iteration(grad, lambda q: -div_vector(q), shape, tol=1e-10, max_iter=5000)
    assert ok
    assert est == pytest.approx(exact, rel=1e-4)
    # a 2-row grid has ||D|| below sqrt(6) (row coupling adds 2 to the column bound 4)
    assert est <= np.sqrt(6.0)


def test_power_iteration_zero_operator():
    est, ok, _ = power_iteration(lambda x: 0 * x, lambda y: 0 * y, (3, 3))
    assert est == 0.0 and ok
