"""AdamW update rule, gradient checker, and random-stream behavior."""

import numpy as np
import pytest

from peakcast.numerics import (
    GradCheckError,
    OptimizerError,
    RngStream,
    Tensor,
    adamw_step,
    clip_grad_norm,
    derive_seed,
    finite_difference_check,
    init_optimizer,
    ops,
)


def adamw_reference(theta, g, lr, beta1, beta2, eps, wd, steps=1):
    """Independent scalar implementation of the decoupled update."""
    m = v = 0.0
    for t in range(1, steps + 1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = theta - lr * (m_hat / (v_hat**0.5 + eps) + wd * theta)
    return theta


def one_param(value=1.0):
    p = {"theta": Tensor(np.array([value]), requires_grad=True)}
    return p


def test_first_step_without_weight_decay():
    params = one_param(1.0)
    state = init_optimizer(params, lr=0.1)
    adamw_step(params, {"theta": np.array([1.0])}, state)
    expected = adamw_reference(1.0, 1.0, 0.1, 0.9, 0.999, 1e-8, 0.0)
    assert abs(params["theta"].values.item() - expected) < 1e-15
    assert abs(params["theta"].values.item() - 0.9) < 1e-8
    assert state.step == 1


def test_first_step_with_weight_decay():
    params = one_param(1.0)
    state = init_optimizer(params, lr=0.1, weight_decay=0.01)
    adamw_step(params, {"theta": np.array([1.0])}, state)
    expected = adamw_reference(1.0, 1.0, 0.1, 0.9, 0.999, 1e-8, 0.01)
    assert abs(params["theta"].values.item() - expected) < 1e-15
    assert abs(params["theta"].values.item() - 0.899) < 1e-8


def test_zero_gradient_leaves_parameters_bitwise_unchanged():
    start = np.array([0.1 + 0.2, -0.0, 3.7e-11])
    params = {"p": Tensor(start.copy(), requires_grad=True)}
    state = init_optimizer(params, lr=0.5, weight_decay=0.0)
    for _ in range(3):
        adamw_step(params, {"p": np.zeros(3)}, state)
    assert params["p"].values.tobytes() == start.tobytes()
    assert state.step == 3


def test_moments_start_at_zero():
    params = one_param()
    state = init_optimizer(params)
    assert state.step == 0
    assert np.array_equal(state.m["theta"], np.zeros(1))
    assert np.array_equal(state.v["theta"], np.zeros(1))


def test_non_finite_gradient_names_parameter():
    params = one_param()
    state = init_optimizer(params)
    with pytest.raises(OptimizerError, match="theta"):
        adamw_step(params, {"theta": np.array([np.nan])}, state)


def test_gradient_shape_mismatch_rejected():
    params = one_param()
    state = init_optimizer(params)
    with pytest.raises(OptimizerError, match="shape"):
        adamw_step(params, {"theta": np.zeros(3)}, state)


def test_missing_gradient_treated_as_zero():
    params = one_param(2.5)
    state = init_optimizer(params, lr=0.3)
    adamw_step(params, {}, state)
    assert params["theta"].values.item() == 2.5


def test_multi_step_matches_reference():
    params = one_param(0.7)
    state = init_optimizer(params, lr=0.05, weight_decay=0.02)
    for _ in range(10):
        adamw_step(params, {"theta": np.array([0.3])}, state)
    expected = adamw_reference(0.7, 0.3, 0.05, 0.9, 0.999, 1e-8, 0.02, steps=10)
    np.testing.assert_allclose(params["theta"].values.item(), expected, rtol=1e-12)


def test_clip_grad_norm():
    grads = {"a": np.array([3.0, 4.0]), "b": None}
    clipped = clip_grad_norm(grads, 1.0)
    np.testing.assert_allclose(np.sqrt((clipped["a"] ** 2).sum()), 1.0)
    assert clipped["b"] is None
    untouched = clip_grad_norm({"a": np.array([0.1])}, 1.0)
    assert np.array_equal(untouched["a"], [0.1])


# -- finite-difference checker -----------------------------------------------------


def test_gradcheck_quadratic():
    params = {"theta": Tensor(np.array([3.0]), requires_grad=True)}
    report = finite_difference_check(
        lambda p: ops.sum_all(p["theta"] * p["theta"]), params, eps=1e-5
    )
    assert report.max_rel_error < 1e-8  # analytic gradient is 6
    assert report.n_coordinates == 1
    assert float(report) == report.max_rel_error


def test_gradcheck_constant_function():
    params = {"theta": Tensor(np.array([1.0, -2.0]), requires_grad=True)}
    report = finite_difference_check(lambda p: ops.sum_all(Tensor([5.0])), params)
    assert report.max_rel_error == 0.0


def test_gradcheck_rejects_non_finite():
    params = {"theta": Tensor(np.array([1e200]), requires_grad=True)}

    def f(p):
        prod = p["theta"] * p["theta"]
        return ops.sum_all(prod * prod)

    with np.errstate(over="ignore"), pytest.raises(GradCheckError, match="non-finite"):
        finite_difference_check(f, params)


def test_gradcheck_eps_bounds():
    params = {"theta": Tensor(np.array([1.0]), requires_grad=True)}
    with pytest.raises(ValueError, match="eps"):
        finite_difference_check(lambda p: ops.sum_all(p["theta"]), params, eps=1e-2)


# -- named random streams ------------------------------------------------------------


def test_streams_are_deterministic():
    a = RngStream(42, "x").normal((5,))
    b = RngStream(42, "x").normal((5,))
    assert np.array_equal(a, b)


def test_streams_with_different_names_differ():
    a = RngStream(42, "x").normal((5,))
    b = RngStream(42, "y").normal((5,))
    assert not np.array_equal(a, b)


def test_child_streams_are_namespaced():
    root = RngStream(7, "root")
    a = root.child("a").uniform(shape=(4,))
    b = RngStream(7, "root/a").uniform(shape=(4,))
    assert np.array_equal(a, b)


def test_stream_independent_of_sibling_consumption():
    root1 = RngStream(3, "r")
    _ = root1.child("first").normal((1000,))
    after = root1.child("second").normal((4,))
    fresh = RngStream(3, "r").child("second").normal((4,))
    assert np.array_equal(after, fresh)


def test_derive_seed_stable():
    assert derive_seed(5, "epoch1") == derive_seed(5, "epoch1")
    assert derive_seed(5, "epoch1") != derive_seed(5, "epoch2")
    assert derive_seed(5, "epoch1") != derive_seed(6, "epoch1")
