import math

import numpy as np
import pytest

from scriptpool import autograd as ag
from scriptpool.autograd import Tensor, grad_check
from scriptpool.errors import (
    GraphReuseError,
    NonDeterministicFunctionError,
    NonFiniteValueError,
    ShapeMismatchError,
)

RNG = np.random.default_rng(42)


def rand_t(*shape, requires_grad=True):
    return Tensor(RNG.normal(0.0, 1.0, shape), requires_grad=requires_grad)


def test_gelu_at_zero():
    x = Tensor(np.array([0.0]), requires_grad=True)
    y = ag.gelu(x)
    assert y.values[0] == 0.0
    ag.tsum(y).backward()
    assert x.grad[0] == pytest.approx(0.5)


def test_sigmoid_derivative_at_zero():
    x = Tensor(np.array(0.0), requires_grad=True)
    y = ag.sigmoid(x)
    y.backward()
    assert y.values == pytest.approx(0.5)
    assert x.grad == pytest.approx(0.25)


def test_softmax_uniform_logits():
    for n in (2, 5, 17):
        z = Tensor(np.full((3, n), 1.7))
        out = ag.softmax_masked(z)
        assert np.allclose(out.values, 1.0 / n)


def test_softmax_mask_blocks_positions():
    mask = np.array([[0.0, ag.NEG_INF], [0.0, 0.0]])
    z = Tensor(RNG.normal(0, 1, (2, 2)))
    out = ag.softmax_masked(z, mask)
    assert out.values[0, 1] == 0.0
    assert out.values[0, 0] == 1.0


def test_cross_entropy_uniform_is_log_vocab():
    for v in (2, 259, 260):
        logits = Tensor(np.zeros((4, v)))
        ce = ag.cross_entropy(logits, np.array([0, 1, v - 1, v // 2]))
        assert np.all(ce.values == np.log(float(v)))
        shifted = ag.cross_entropy(Tensor(np.full((4, v), 3.25)), np.array([0, 1, v - 1, v // 2]))
        assert np.allclose(shifted.values, np.log(float(v)), rtol=0, atol=1e-12)


def test_pool_then_duplicate_is_identity_on_segment_constant_input():
    seg = np.array([0, 0, 1, 1, 1, 2])
    base = RNG.normal(0, 1, (3, 4))
    x = Tensor(base[seg], requires_grad=True)
    pooled = ag.segment_mean_pool(x, seg, 3)
    back = ag.take_rows(pooled, seg)
    assert np.allclose(back.values, x.values)


def test_segment_mean_pool_gradient_splits_evenly():
    x = rand_t(4, 2)
    pooled = ag.segment_mean_pool(x, np.array([0, 0, 0, 1]), 2)
    ag.tsum(pooled).backward()
    assert np.allclose(x.grad[:3], 1.0 / 3.0)
    assert np.allclose(x.grad[3], 1.0)


def test_straight_through_forward_hard_backward_identity():
    x = Tensor(np.array([0.1, 0.5, 0.9]), requires_grad=True)
    h = ag.straight_through(x, 0.5)
    assert h.values.tolist() == [0.0, 1.0, 1.0]  # tie at 0.5 goes to 1
    ag.tsum(ag.mul(h, Tensor(np.array([2.0, 3.0, 4.0])))).backward()
    assert x.grad.tolist() == [2.0, 3.0, 4.0]


def test_second_backward_rejected():
    x = rand_t(3)
    out = ag.tsum(ag.mul(x, x))
    out.backward()
    with pytest.raises(GraphReuseError):
        out.backward()


def test_fanout_accumulates_gradients():
    x = Tensor(np.array([2.0]), requires_grad=True)
    out = ag.add(ag.mul(x, 3.0), ag.mul(x, x))  # 3x + x^2
    out.backward()
    assert x.grad[0] == pytest.approx(3.0 + 4.0)


def test_nonfinite_forward_raises():
    x = Tensor(np.array([1e308]))
    with pytest.raises(NonFiniteValueError):
        ag.exp(x)
    with pytest.raises(NonFiniteValueError):
        ag.log(Tensor(np.array([0.0])))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        ag.matmul(rand_t(2, 3), rand_t(2, 3))


def test_grad_check_quadratic_exact():
    x = Tensor(np.array([3.0]), requires_grad=True)
    err = grad_check(lambda ts, rng: ag.tsum(ag.mul(ts[0], ts[0])), [x], eps=1e-4, seed=0)
    assert err < 1e-9


def test_grad_check_eps_range_enforced():
    x = rand_t(2)
    with pytest.raises(ValueError):
        grad_check(lambda ts, rng: ag.tsum(ts[0]), [x], eps=1e-2)


def test_grad_check_detects_nondeterminism():
    x = rand_t(2)
    state = {"n": 0}

    def f(ts, rng):
        state["n"] += 1
        return ag.mul(ag.tsum(ts[0]), float(state["n"]))

    with pytest.raises(NonDeterministicFunctionError):
        grad_check(f, [x], eps=1e-4, seed=0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_linearity_of_gradients(seed):
    # grad of a*f + b*g == a*grad f + b*grad g on a random small graph
    rng = np.random.default_rng(seed)
    a, b = 1.7, -0.6
    base = rng.normal(0, 1, (3, 3))

    def build(x):
        f = ag.tsum(ag.gelu(ag.matmul(x, x)))
        g = ag.tsum(ag.sigmoid(ag.mul(x, 0.5)))
        return f, g

    x1 = Tensor(base.copy(), requires_grad=True)
    f1, g1 = build(x1)
    ag.add(ag.mul(f1, a), ag.mul(g1, b)).backward()
    combined = x1.grad.copy()

    x2 = Tensor(base.copy(), requires_grad=True)
    f2, _ = build(x2)
    f2.backward()
    gf = x2.grad.copy()

    x3 = Tensor(base.copy(), requires_grad=True)
    _, g3 = build(x3)
    g3.backward()
    gg = x3.grad.copy()

    assert np.allclose(combined, a * gf + b * gg, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("name", ["gelu", "sigmoid", "exp", "transpose"])
def test_primitive_gradients_against_fd(name):
    op = ag.primitives()[name]
    x = Tensor(np.random.default_rng(7).normal(0, 1, (3, 4)), requires_grad=True)
    mult = Tensor(np.random.default_rng(8).normal(0, 1, (4, 3) if name == "transpose" else (3, 4)))
    err = grad_check(lambda ts, rng: ag.tsum(ag.mul(op(ts[0]), mult)), [x], eps=1e-4, seed=0)
    assert err < 1e-6


def test_layer_norm_fd_gradient():
    x = rand_t(4, 6)
    g = Tensor(np.ones(6), requires_grad=True)
    b = Tensor(np.zeros(6), requires_grad=True)
    mult = Tensor(np.random.default_rng(9).normal(0, 1, (4, 6)))
    err = grad_check(lambda ts, rng: ag.tsum(ag.mul(ag.layer_norm(ts[0], ts[1], ts[2]), mult)),
                     [x, g, b], eps=1e-4, seed=0)
    assert err < 1e-6


def test_embedding_and_linear_fd_gradients():
    table = rand_t(6, 3)
    w = rand_t(3, 5)
    bias = rand_t(5)
    ids = np.array([0, 5, 2, 2])

    def f(ts, rng):
        h = ag.embedding(ts[0], ids)
        return ag.tsum(ag.gelu(ag.linear(h, ts[1], ts[2])))

    assert grad_check(f, [table, w, bias], eps=1e-4, seed=0) < 1e-6


def test_cross_entropy_fd_gradient():
    logits = rand_t(3, 7)
    err = grad_check(lambda ts, rng: ag.tmean(ag.cross_entropy(ts[0], np.array([1, 0, 6]))),
                     [logits], eps=1e-4, seed=0)
    assert err < 1e-6
