import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from vfr.autodiff import ParamArray, Tape, finite_difference, grad_check, relative_error
from vfr.errors import NumericError, ShapeError, UsageError


def param(values):
    return ParamArray(np.asarray(values, dtype=np.float64), requires_grad=True)


def test_param_array_rejects_non_finite():
    with pytest.raises(NumericError):
        ParamArray([1.0, np.nan])
    with pytest.raises(NumericError):
        ParamArray([np.inf])


def test_grads_match_shape_and_reset():
    p = param(np.ones((3, 2)))
    assert p.grads.shape == p.values.shape
    p.grads += 5
    p.zero_grad()
    assert not p.grads.any()


def test_matmul_identity():
    b = np.arange(4.0).reshape(2, 2)
    out = Tape(enabled=False).matmul(ParamArray(np.eye(2)), ParamArray(b))
    np.testing.assert_array_equal(out.values, b)


def test_matmul_scalar_product_rule():
    a, b = param([[2.0]]), param([[3.0]])
    tape = Tape()
    c = tape.matmul(a, b)
    assert c.values[0, 0] == 6.0
    tape.backward(np.ones((1, 1)))
    assert a.grads[0, 0] == 3.0 and b.grads[0, 0] == 2.0


def test_matmul_shape_and_finite_errors():
    tape = Tape()
    with pytest.raises(ShapeError):
        tape.matmul(param(np.ones((2, 3))), param(np.ones((2, 3))))
    big = param(np.full((1, 1), 1e308))
    with pytest.raises(NumericError):
        tape.matmul(big, param([[10.0]]))


def test_matmul_random_gradients(rng):
    a = param(rng.standard_normal((4, 4)))
    b = param(rng.standard_normal((4, 4)))
    w = rng.standard_normal((4, 4))

    def f(tape):
        return tape.sum(tape.scale(tape.matmul(a, b), w))

    assert grad_check(f, a) < 1e-6
    assert grad_check(f, b) < 1e-6


def test_gelu_values():
    tape = Tape(enabled=False)
    out = tape.gelu(ParamArray(np.array([0.0, 1.0, -1.0, 3.0])))
    expected = [0.0, norm.cdf(1.0), -norm.cdf(-1.0), 3 * norm.cdf(3.0)]
    np.testing.assert_allclose(out.values, expected, rtol=1e-14, atol=1e-15)
    assert abs(out.values[1] - 0.8413447) < 1e-7


def test_gelu_gradient(rng):
    x = param(rng.standard_normal(100) * 2)
    assert grad_check(lambda t: t.sum(t.gelu(x)), x) < 1e-6


def test_relu_values_and_subgradient():
    x = param([-2.0, 3.0, 0.0])
    tape = Tape()
    y = tape.relu(x)
    np.testing.assert_array_equal(y.values, [0.0, 3.0, 0.0])
    tape.backward(np.ones(3))
    np.testing.assert_array_equal(x.grads, [0.0, 1.0, 0.0])


def test_square_power_rule():
    x = param([3.0])
    tape = Tape()
    tape.mul(x, x)
    tape.backward(np.ones(1))
    assert x.grads[0] == 6.0


def test_constant_function_has_zero_grads():
    x = param([1.0, 2.0])
    tape = Tape()
    out = tape.sum(tape.scale(x, np.zeros(2)))
    tape.backward()
    assert out.values[0] == 0.0
    np.testing.assert_array_equal(x.grads, 0.0)


@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-6), (np.float32, 1e-4)])
def test_sum_gelu_wx_end_to_end(rng, dtype, tol):
    w0 = rng.standard_normal((3, 5))
    x0 = rng.standard_normal((4, 3))
    w = ParamArray(w0.astype(dtype), requires_grad=True)
    tape = Tape()
    tape.sum(tape.gelu(tape.matmul(ParamArray(x0.astype(dtype)), w)))
    tape.backward()
    # the reference differences are always taken in double precision
    w64 = ParamArray(w.values.astype(np.float64), requires_grad=True)
    x64 = ParamArray(x0.astype(dtype).astype(np.float64))
    numeric = finite_difference(lambda t: t.sum(t.gelu(t.matmul(x64, w64))), w64, np.arange(w.size))
    err = relative_error(w.grads.reshape(-1), numeric)
    assert err.max() < tol


def test_backward_twice_is_a_usage_error():
    x = param([1.0])
    tape = Tape()
    tape.sum(tape.mul(x, x))
    tape.backward()
    assert len(tape) == 0
    with pytest.raises(UsageError):
        tape.backward()


def test_seed_shape_mismatch():
    x = param([1.0, 2.0])
    tape = Tape()
    tape.mul(x, x)
    with pytest.raises(ShapeError):
        tape.backward(np.ones(3))


def test_grad_check_linear_is_exact():
    x = param(np.linspace(-1, 1, 7))
    c = np.arange(7.0)
    assert grad_check(lambda t: t.sum(t.scale(x, c)), x) <= 1e-10


def test_grad_check_detects_corrupted_adjoint(rng):
    x = param(rng.standard_normal(10))

    def bad_square(tape):
        xv = x.values
        y = tape.record("bad_square", xv * xv, (x,), lambda g: (g * 3.0 * xv,))
        return tape.sum(y)

    assert grad_check(bad_square, x) > 1e-2


def test_grad_check_rejects_bad_step():
    x = param([1.0])
    with pytest.raises(ValueError):
        grad_check(lambda t: t.sum(x), x, h=0.0)


# one expression per differentiable op, each reduced to a scalar
OPS = [
    lambda t, a, b, s: t.sum(t.matmul(a, t.reshape(b, (3, 2)))),
    lambda t, a, b, s: t.sum(t.gelu(a)),
    lambda t, a, b, s: t.sum(t.sigmoid(a)),
    lambda t, a, b, s: t.sum(t.trunc_exp(a)),
    lambda t, a, b, s: t.sum(t.mul(a, a)),
    lambda t, a, b, s: t.sum(t.add(a, a)),
    lambda t, a, b, s: t.sum(t.mul_rows(a, s)),
    lambda t, a, b, s: t.sum(t.div_rows(a, s)),
    lambda t, a, b, s: t.sum(t.concat([a, t.columns(a, 1, 3)])),
    lambda t, a, b, s: t.mse_loss(a, np.zeros(a.shape)),
]


@pytest.mark.parametrize("which", range(len(OPS)))
def test_every_op_grad_checks_at_100_points(which):
    rng = np.random.default_rng(which)
    worst = 0.0
    for _ in range(100):
        a = param(rng.standard_normal((2, 3)))
        b = param(rng.standard_normal(6))
        s = param(rng.uniform(0.5, 2.0, 2))

        def f(tape):
            return OPS[which](tape, a, b, s)

        for p in (a, b, s):
            worst = max(worst, grad_check(f, p))
    assert worst <= 1e-5


def test_relu_grad_check_away_from_kink(rng):
    x = param(rng.choice([-1, 1], 100) * rng.uniform(0.01, 2.0, 100))
    assert grad_check(lambda t: t.sum(t.relu(x)), x) <= 1e-5


def test_adjoint_linearity(rng):
    """Gradients of f + g equal gradients of f plus gradients of g."""
    x = param(rng.standard_normal((3, 3)))
    w = rng.standard_normal((3, 3))

    def f(tape):
        return tape.sum(tape.gelu(x))

    def g(tape):
        return tape.sum(tape.scale(tape.sigmoid(x), w))

    def grads(fn):
        x.zero_grad()
        tape = Tape()
        fn(tape)
        tape.backward()
        return x.grads.copy()

    gf, gg = grads(f), grads(g)
    both = grads(lambda t: t.add(f(t), g(t)))
    np.testing.assert_allclose(both, gf + gg, rtol=1e-13, atol=1e-15)


def test_identical_tapes_do_not_double_gradients(rng):
    x = param(rng.standard_normal(4))
    for _ in range(2):
        x.zero_grad()
        tape = Tape()
        tape.sum(tape.mul(x, x))
        tape.backward()
    np.testing.assert_allclose(x.grads, 2 * x.values)


def test_mse_loss_cases():
    tape = Tape(enabled=False)
    t = np.full((2, 3), 0.25)
    assert tape.mse_loss(ParamArray(t), t).values[0] == 0.0
    assert tape.mse_loss(ParamArray(np.ones((2, 3))), np.zeros((2, 3))).values[0] == 1.0
    with pytest.raises(ShapeError):
        tape.mse_loss(ParamArray(np.ones(3)), np.ones(4))


def test_mse_gradient_closed_form(rng):
    pred = param(rng.random((5, 3)))
    target = rng.random((5, 3))
    tape = Tape()
    tape.mse_loss(pred, target)
    tape.backward()
    np.testing.assert_allclose(pred.grads, 2 * (pred.values - target) / 15, rtol=1e-12)
    assert grad_check(lambda t: t.mse_loss(pred, target), pred) < 1e-6


def test_trunc_exp_clamps():
    tape = Tape(enabled=False)
    out = tape.trunc_exp(ParamArray(np.array([0.0, -15.0, -40.0, 40.0])))
    np.testing.assert_allclose(out.values, [1.0, math.exp(-15), math.exp(-15), math.exp(15)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20))
def test_sigmoid_stays_in_unit_interval(xs):
    y = Tape(enabled=False).sigmoid(ParamArray(np.array(xs))).values
    assert np.all((y > 0) & (y < 1))
