import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from numpy import testing as npt

from metasdf.autodiff import (
    Tensor, check_gradient, enable_grad, grad, graph_scope, is_grad_enabled, no_grad, ops,
)
from metasdf.errors import AutodiffError, ShapeMismatchError
from metasdf.utils import logging_utils

finite = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False)


def test_polynomial_gradient():
    x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    loss = ops.sum(x * x * x)
    (g,) = grad(loss, [x])
    npt.assert_allclose(g.data, 3.0 * x.data ** 2)


def test_second_order_through_create_graph():
    x = Tensor(np.array([0.3, -1.2]), requires_grad=True)
    loss = ops.sum(ops.exp(x))
    (g,) = grad(loss, [x], create_graph=True)
    (h,) = grad(ops.sum(g * g), [x])
    # d/dx sum(exp(x)^2) = 2 exp(2x)
    npt.assert_allclose(h.data, 2.0 * np.exp(2.0 * x.data))


def test_third_order():
    x = Tensor(np.array([0.7]), requires_grad=True)
    y = ops.sum(x * x * x * x)
    (g1,) = grad(y, [x], create_graph=True)
    (g2,) = grad(ops.sum(g1), [x], create_graph=True)
    (g3,) = grad(ops.sum(g2), [x])
    npt.assert_allclose(g3.data, 24.0 * x.data)


def test_matmul_broadcast_gradients():
    rng = np.random.default_rng(0)
    w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    b = Tensor(rng.normal(size=(2,)), requires_grad=True)
    x = rng.normal(size=(5, 3))
    loss = ops.sum(ops.add(ops.matmul(x, w), b))
    gw, gb = grad(loss, [w, b])
    npt.assert_allclose(gw.data, np.tile(x.sum(axis=0)[:, None], (1, 2)))
    npt.assert_allclose(gb.data, np.full(2, 5.0))


def test_unreachable_target_gets_zeros_and_a_problem():
    x = Tensor(np.ones(3), requires_grad=True)
    y = Tensor(np.ones(2), requires_grad=True, name="y")
    (gx, gy) = grad(ops.sum(x), [x, y])
    npt.assert_array_equal(gy.data, np.zeros(2))
    assert any("not reachable" in p for p in logging_utils.problem_cases)


def test_grad_of_non_scalar_raises():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(AutodiffError):
        grad(x * 2.0, [x])


def test_shape_mismatch_names_op_and_shapes():
    with pytest.raises(ShapeMismatchError) as info:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert "matmul" in str(info.value)


def test_no_grad_stops_recording():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        y = x * 3.0
        with enable_grad():
            z = x * 3.0
    assert y.node is None
    assert z.node is not None
    assert is_grad_enabled()


def test_graph_scope_restores_previous_graph():
    with graph_scope() as outer:
        with graph_scope() as inner:
            assert inner is not outer
        x = Tensor(np.ones(1), requires_grad=True) * 2.0
        assert x.node is not None


def test_max_routes_gradient_to_first_maximum():
    x = Tensor(np.array([[1.0, 5.0], [5.0, 2.0]]), requires_grad=True)
    (g,) = grad(ops.sum(ops.max(x, axis=0)), [x])
    npt.assert_array_equal(g.data, [[0.0, 1.0], [1.0, 0.0]])


def test_stack_builds_rows():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    b = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    m = ops.stack([a, b])
    assert m.shape == (2, 2)
    ga, gb = grad(ops.sum(ops.mul(m, Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])))), [a, b])
    npt.assert_array_equal(ga.data, [1.0, 2.0])
    npt.assert_array_equal(gb.data, [3.0, 4.0])


def test_check_gradient_smooth_function():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 3))

    def f(x):
        h = ops.matmul(Tensor(a), ops.reshape(x, (3, 1)))
        return ops.sum(ops.softplus(h) * ops.sigmoid(h))

    result = check_gradient(f, rng.normal(size=3))
    assert result.max_rel_error <= 1e-6
    assert result.checked == 3


def test_check_gradient_keeps_high_curvature_coordinates():
    def f(x):
        return ops.sum(ops.scale(ops.mul(x, x), 5e3))

    result = check_gradient(f, np.array([0.0, 1e-4, -2e-4]), h=1e-5)
    assert result.checked == 3
    assert result.excluded == []
    assert result.max_rel_error < 1e-6


def test_check_gradient_excludes_a_straddled_kink():
    x = np.array([2e-6, 0.5, -0.4])
    result = check_gradient(lambda t: ops.sum(ops.abs(t)), x, h=1e-5)
    assert result.excluded == [0]
    assert result.checked == 2
    assert result.max_rel_error < 1e-8
    assert any("kink" in p for p in logging_utils.problem_cases)


@pytest.mark.parametrize("axis, expected_sum", [(0, [4.0, 6.0]), (1, [3.0, 7.0]), (None, 10.0)])
def test_reductions_over_an_axis(axis, expected_sum):
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
    npt.assert_allclose(ops.sum(x, axis=axis).data, expected_sum)
    npt.assert_allclose(ops.mean(x, axis=axis).data, np.mean(x.data, axis=axis))
    (g,) = grad(ops.sum(ops.mean(x, axis=axis)), [x])
    npt.assert_allclose(g.data, np.full((2, 2), 0.5 if axis is not None else 0.25))


def test_mean_of_a_column_vector_keeps_dims():
    x = Tensor(np.arange(3.0).reshape(3, 1), requires_grad=True)
    m = ops.mean(ops.abs(x - 1.0), axis=0, keepdims=True)
    assert m.shape == (1, 1)
    assert m.data.item() == pytest.approx(2.0 / 3.0)
    (g,) = grad(ops.sum(m), [x])
    npt.assert_allclose(g.data.reshape(-1), [-1.0 / 3.0, 0.0, 1.0 / 3.0])


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, 4, elements=finite), hnp.arrays(np.float64, 4, elements=finite),
       st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=-2.0, max_value=2.0))
def test_gradient_is_linear_in_the_loss(v, w, a, b):
    x = Tensor(np.linspace(-1.0, 1.0, 4), requires_grad=True)

    def loss_of(c):
        return ops.sum(ops.mul(Tensor(c), ops.mul(x, x)))

    (g_combined,) = grad(ops.add(ops.scale(loss_of(v), a), ops.scale(loss_of(w), b)), [x])
    (gv,) = grad(loss_of(v), [x])
    (gw,) = grad(loss_of(w), [x])
    npt.assert_allclose(g_combined.data, a * gv.data + b * gw.data, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (3, 2), elements=finite))
def test_sum_to_inverts_broadcast(values):
    x = Tensor(values[0], requires_grad=True)
    y = ops.broadcast_to(x, (3, 2))
    (g,) = grad(ops.sum(ops.mul(y, Tensor(values))), [x])
    npt.assert_allclose(g.data, values.sum(axis=0))
