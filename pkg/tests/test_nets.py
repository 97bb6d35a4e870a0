import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmat import nets
from hmat.nets import AdamState, LayerSpec, Net


def num_grad(func, x, delta=1e-5):
    """Central-difference gradient of a scalar function, one entry at a time."""
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + delta
        plus = func()
        x.flat[i] = orig - delta
        minus = func()
        x.flat[i] = orig
        grad.flat[i] = (plus - minus) / (2.0 * delta)
    return grad


def naive_forward(net, x):
    """Scalar-loop forward pass, no shared code with Net.forward."""
    spec = net.spec
    h = []
    for j in range(spec.hidden_dim):
        z = net.b1[j]
        for i in range(spec.in_dim):
            z += net.W1[j, i] * x[i]
        h.append(max(z, 0.0))
    out = []
    for k in range(spec.out_dim):
        z = net.b2[k]
        for j in range(spec.hidden_dim):
            z += net.W2[k, j] * h[j]
        if spec.head == "tanh" or (spec.head == "split" and k < spec.split_tanh):
            z = math.tanh(z)
        out.append(z)
    return np.array(out)


REPO_SHAPES = [
    ("worker actor", LayerSpec(12, 64, 2, "tanh")),
    ("worker critic", LayerSpec(14, 64, 1, "linear")),
    ("manager actor cobp", LayerSpec(10, 64, 2, "tanh")),
    ("manager critic cobp", LayerSpec(24, 64, 1, "linear")),
    ("manager actor ctbp", LayerSpec(14, 64, 2, "tanh")),
    ("manager critic ctbp", LayerSpec(32, 64, 1, "linear")),
    ("teacher actor cobp", LayerSpec(33, 64, 4, "split", split_tanh=2)),
    ("teacher critic cobp", LayerSpec(74, 64, 1, "linear")),
    ("teacher actor ctbp", LayerSpec(41, 64, 4, "split", split_tanh=2)),
    ("teacher critic ctbp", LayerSpec(90, 64, 1, "linear")),
]


def max_rel_error(analytic, numeric):
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


@pytest.mark.parametrize("name,spec", REPO_SHAPES, ids=[n for n, _ in REPO_SHAPES])
def test_gradient_check_all_repo_shapes(name, spec):
    rng = np.random.default_rng(hash(name) % (2 ** 31))
    net = Net.init(spec, rng)
    x = rng.standard_normal(spec.in_dim)
    coeffs = rng.standard_normal(spec.out_dim)

    def loss():
        y, _ = net.forward(x)
        return float(coeffs @ y)

    y, cache = net.forward(x)
    analytic, _ = net.backward(cache, coeffs)
    numeric = num_grad(loss, net.theta)
    assert max_rel_error(analytic, numeric) < 1e-4


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    spec = LayerSpec(6, 16, 3, "split", split_tanh=2)
    net = Net.init(spec, rng)
    x = rng.standard_normal(6)
    coeffs = rng.standard_normal(3)

    def loss():
        y, _ = net.forward(x)
        return float(coeffs @ y)

    _, cache = net.forward(x)
    _, dx = net.backward(cache, coeffs)
    numeric = num_grad(loss, x)
    assert max_rel_error(dx, numeric) < 1e-4


def test_forward_matches_naive_evaluator():
    rng = np.random.default_rng(1)
    for spec in (LayerSpec(5, 7, 3, "tanh"), LayerSpec(4, 6, 1, "linear"),
                 LayerSpec(8, 5, 4, "split", split_tanh=2)):
        net = Net.init(spec, rng)
        for _ in range(5):
            x = rng.standard_normal(spec.in_dim)
            y, _ = net.forward(x)
            np.testing.assert_allclose(y, naive_forward(net, x), atol=1e-12)


def test_batched_forward_equals_row_by_row():
    rng = np.random.default_rng(2)
    net = Net.init(LayerSpec(9, 11, 2, "tanh"), rng)
    xb = rng.standard_normal((10, 9))
    yb, _ = net.forward(xb)
    for i in range(10):
        yi, _ = net.forward(xb[i])
        np.testing.assert_allclose(yb[i], yi, atol=1e-14)


def test_init_bounds_and_zero_biases():
    rng = np.random.default_rng(0)
    spec = LayerSpec(16, 64, 2, "tanh")
    net = Net.init(spec, rng)
    assert np.all(np.abs(net.W1) <= 1.0 / math.sqrt(16))
    assert np.all(np.abs(net.W2) <= 1.0 / math.sqrt(64))
    assert np.all(net.b1 == 0.0) and np.all(net.b2 == 0.0)
    # per-seed deterministic
    net2 = Net.init(spec, np.random.default_rng(0))
    np.testing.assert_array_equal(net.theta, net2.theta)


def test_tanh_head_bounded():
    rng = np.random.default_rng(3)
    net = Net.init(LayerSpec(4, 8, 2, "tanh"), rng)
    net.theta *= 50.0  # blow up weights; tanh may saturate but never exceed 1
    y, _ = net.forward(rng.standard_normal((64, 4)) * 10)
    assert np.all(np.abs(y) <= 1.0)


def test_adam_single_step_hand_computed():
    # One parameter, gradient 0.5: first step moves by ~lr since
    # m_hat/(sqrt(v_hat)+eps) == g/(|g|+eps) for t=1.
    spec = LayerSpec(1, 1, 1, "linear")
    net = Net(spec, np.zeros(4))
    state = AdamState(4)
    grad = np.array([0.5, 0.0, 0.0, 0.0])
    nets.adam_step(net, grad, state, lr=0.01)
    expected = -0.01 * 0.5 / (0.5 + 1e-8)
    assert net.theta[0] == pytest.approx(expected, rel=1e-12)
    assert net.theta[1:] == pytest.approx(0.0)
    assert state.t == 1


def test_adam_trajectory_matches_reference_loop():
    # Independent reference: textbook Adam recurrences in a plain loop.
    rng = np.random.default_rng(8)
    n = 6
    grads = [rng.standard_normal(n) for _ in range(7)]
    lr = 2e-3

    theta_ref = np.zeros(n)
    m = np.zeros(n)
    v = np.zeros(n)
    for t, g in enumerate(grads, start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta_ref = theta_ref - lr * (m / (1 - 0.9 ** t)) / (
            np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)

    net = Net(LayerSpec(1, 1, 2, "linear"), np.zeros(n))  # 6 params
    state = AdamState(n)
    for g in grads:
        nets.adam_step(net, g, state, lr)
    np.testing.assert_allclose(net.theta, theta_ref, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_adam_odd_symmetry(seed):
    """From a fresh state, flipping every gradient sign flips the parameter
    trajectory sign."""
    rng = np.random.default_rng(seed)
    n = 5
    grads = [rng.standard_normal(n) for _ in range(4)]
    a = Net(LayerSpec(2, 1, 1, "linear"), np.zeros(n))
    b = Net(LayerSpec(2, 1, 1, "linear"), np.zeros(n))
    sa, sb = AdamState(n), AdamState(n)
    for g in grads:
        nets.adam_step(a, g, sa, 1e-3)
        nets.adam_step(b, -g, sb, 1e-3)
    np.testing.assert_allclose(a.theta, -b.theta, atol=1e-15)


def test_soft_update_blend():
    rng = np.random.default_rng(4)
    spec = LayerSpec(3, 4, 2, "tanh")
    target = Net.init(spec, rng)
    source = Net.init(spec, rng)
    t0 = target.theta.copy()
    nets.soft_update(target, source, tau=0.005)
    np.testing.assert_allclose(target.theta,
                               0.995 * t0 + 0.005 * source.theta, atol=1e-15)
    # tau=1 copies the source outright
    nets.soft_update(target, source, tau=1.0)
    np.testing.assert_allclose(target.theta, source.theta, atol=1e-15)


def test_gumbel_softmax_soft_vs_hard():
    rng = np.random.default_rng(6)
    logits = np.array([0.2, -0.1])
    soft, hard = nets.gumbel_softmax(logits, 1.0, rng)
    assert soft.shape == hard.shape == (2,)
    assert soft.sum() == pytest.approx(1.0)
    assert sorted(hard.tolist()) == [0.0, 1.0]
    assert hard.argmax() == soft.argmax()


def test_gumbel_softmax_frequency_tracks_logit_gap():
    # Gumbel-max: P(argmax = 0) = softmax(logits)[0]. Monte Carlo check.
    rng = np.random.default_rng(123)
    logits = np.array([1.0, 0.0])
    n = 20000
    _, hard = nets.gumbel_softmax(np.tile(logits, (n, 1)), 1.0, rng)
    freq = hard[:, 0].mean()
    expected = float(nets.softmax(logits)[0])
    assert abs(freq - expected) < 0.01


def test_gumbel_softmax_backward_matches_finite_differences():
    rng = np.random.default_rng(9)
    logits = rng.standard_normal(4)
    gumbel = nets.sample_gumbel(4, rng)
    coeffs = rng.standard_normal(4)
    temp = 1.0

    def loss():
        soft, _ = nets.gumbel_softmax(logits, temp, gumbel=gumbel)
        return float(coeffs @ soft)

    soft, _ = nets.gumbel_softmax(logits, temp, gumbel=gumbel)
    analytic = nets.gumbel_softmax_backward(coeffs, soft, temp)
    numeric = num_grad(loss, logits)
    assert max_rel_error(analytic, numeric) < 1e-4


def test_one_hot_argmax():
    np.testing.assert_array_equal(
        nets.one_hot_argmax(np.array([0.3, 1.2])), [0.0, 1.0])
    np.testing.assert_array_equal(
        nets.one_hot_argmax(np.array([[2.0, 1.0], [0.0, 5.0]])),
        [[1.0, 0.0], [0.0, 1.0]])


def test_batch_gradient_accumulates_over_rows():
    # Gradient of a summed batch loss equals the sum of per-row gradients.
    rng = np.random.default_rng(10)
    net = Net.init(LayerSpec(5, 6, 2, "tanh"), rng)
    xb = rng.standard_normal((4, 5))
    dout = rng.standard_normal((4, 2))
    gb, _ = net.backward(net.forward(xb)[1], dout)
    acc = np.zeros_like(gb)
    for i in range(4):
        gi, _ = net.backward(net.forward(xb[i])[1], dout[i])
        acc += gi
    np.testing.assert_allclose(gb, acc, atol=1e-12)
