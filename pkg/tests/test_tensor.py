import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from latentgeo import tensor as tc
from latentgeo.errors import ContractError, DimensionError, NumericError
from latentgeo.tensor import Tensor, backward, grad, gradient_check


def test_non_finite_leaf_rejected():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])


def test_log_of_non_positive_raises():
    with pytest.raises(NumericError):
        tc.log(Tensor([1.0, 0.0]))


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        tc.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_backward_needs_scalar_root():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        backward(x * 2.0)


def test_unknown_primitive():
    with pytest.raises(ContractError):
        tc.forward_primitive("nope", [Tensor(1.0)])


def test_forward_primitive_dispatch():
    a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
    np.testing.assert_array_equal(tc.forward_primitive("add", [a, b]).data, [4.0, 7.0])
    np.testing.assert_array_equal(tc.forward_primitive("scale", [a], 3.0).data, [3.0, 6.0])


def test_repeated_backward_is_idempotent():
    x = Tensor(np.array([0.3, -1.2]), requires_grad=True)
    y = tc.sum_(tc.square(x) * x)
    g1 = backward(y)[x].copy()
    g2 = backward(y)[x]
    np.testing.assert_array_equal(g1, g2)
    np.testing.assert_allclose(g1, 3 * x.data**2)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    h = tc.tanh(x)
    (g,) = grad(tc.sum_(h * h + h), [x])
    t = np.tanh(2.0)
    np.testing.assert_allclose(g, (2 * t + 1) * (1 - t * t))


def test_unused_leaf_gets_zeros():
    x = Tensor(np.ones(2), requires_grad=True)
    y = Tensor(np.ones(3), requires_grad=True)
    gx, gy = grad(tc.sum_(x), [x, y])
    np.testing.assert_array_equal(gx, [1.0, 1.0])
    np.testing.assert_array_equal(gy, np.zeros(3))


def test_deep_chain_does_not_recurse():
    x = Tensor(np.array([0.5]), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y * 1.0
    (g,) = grad(tc.sum_(y), [x])
    assert g[0] == 1.0


def test_broadcast_add_gradient_sums():
    a = Tensor(np.ones((4, 3)), requires_grad=True)
    b = Tensor(np.ones((1, 3)), requires_grad=True)
    ga, gb = grad(tc.sum_(a + b), [a, b])
    np.testing.assert_array_equal(gb, np.full((1, 3), 4.0))


def test_take_rows_repeated_indices():
    a = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    (g,) = grad(tc.sum_(tc.take_rows(a, np.array([0, 0, 2]))), [a])
    np.testing.assert_array_equal(g, [[2, 2], [0, 0], [1, 1]])


UNARY = {
    "tanh": tc.tanh,
    "sigmoid": tc.sigmoid,
    "softplus": tc.softplus,
    "exp": tc.exp,
    "square": tc.square,
    "sin": tc.sin,
    "cos": tc.cos,
    "log": lambda x: tc.log(tc.exp(x) + 1.0),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name):
    p = np.random.default_rng(1).normal(size=(3, 2))
    assert gradient_check(lambda x: tc.sum_(UNARY[name](x)), p) < 1e-8


def test_network_like_graph_gradient():
    rng = np.random.default_rng(2)
    W = rng.normal(size=(3, 4))
    X = Tensor(rng.normal(size=(5, 3)))

    def f(w):
        h = tc.tanh(tc.matmul(X, w))
        parts = tc.concat_rows([h, tc.take_rows(h, np.array([1, 3]))])
        return tc.sum_(tc.square(tc.reshape(parts, (-1,))))

    assert gradient_check(f, W) < 1e-8


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-3, 3)), arrays(np.float64, (2, 4), elements=st.floats(-3, 3)))
def test_matmul_gradient_property(a, b):
    B = Tensor(b)
    assert gradient_check(lambda x: tc.sum_(tc.sigmoid(tc.matmul(x, B))), a) < 1e-6


def test_gradient_check_rejects_bad_step():
    with pytest.raises(ContractError):
        gradient_check(lambda x: tc.sum_(x), np.ones(2), h=0.0)
