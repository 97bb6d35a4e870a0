"""Hand-written two-layer networks and their training primitives.

Everything the learners need and nothing more: a ReLU hidden layer, a tanh /
linear / split output head, exact analytic backprop, Adam, soft target blends
and a Gumbel-Softmax sampler. Parameters live in one flat float64 vector per
network (W1, b1, W2, b2 as views into it), which keeps Adam and soft updates
to a single vectorized op each and makes checkpointing trivial. No autodiff,
no GPU.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

HEADS = ("tanh", "linear", "split")


@dataclasses.dataclass(frozen=True)
class LayerSpec:
    """Shape and head of one two-layer network.

    head "split" applies tanh to the first split_tanh outputs and leaves the
    rest linear (used by the teacher actor: 2 tanh sub-goal dims + 2 logits).
    """

    in_dim: int
    hidden_dim: int
    out_dim: int
    head: str = "linear"
    split_tanh: int = 0

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.head == "split" and not 0 < self.split_tanh < self.out_dim:
            raise ValueError("split head needs 0 < split_tanh < out_dim")


class Net:
    """A two-layer MLP with parameters in one flat vector."""

    def __init__(self, spec: LayerSpec, theta: np.ndarray | None = None):
        self.spec = spec
        n_in, n_h, n_out = spec.in_dim, spec.hidden_dim, spec.out_dim
        self._sizes = (n_h * n_in, n_h, n_out * n_h, n_out)
        self.n_params = sum(self._sizes)
        if theta is None:
            theta = np.zeros(self.n_params)
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta must have shape ({self.n_params},)")
        self.theta = theta
        o = np.cumsum((0,) + self._sizes)
        self.W1 = self.theta[o[0]:o[1]].reshape(n_h, n_in)
        self.b1 = self.theta[o[1]:o[2]]
        self.W2 = self.theta[o[2]:o[3]].reshape(n_out, n_h)
        self.b2 = self.theta[o[3]:o[4]]

    @classmethod
    def init(cls, spec: LayerSpec, rng: np.random.Generator) -> "Net":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
        net = cls(spec)
        bound1 = 1.0 / math.sqrt(spec.in_dim)
        bound2 = 1.0 / math.sqrt(spec.hidden_dim)
        net.W1[:] = rng.uniform(-bound1, bound1, size=net.W1.shape)
        net.W2[:] = rng.uniform(-bound2, bound2, size=net.W2.shape)
        return net

    def copy(self) -> "Net":
        return Net(self.spec, self.theta.copy())

    def param_items(self):
        return [("W1", self.W1), ("b1", self.b1), ("W2", self.W2), ("b2", self.b2)]

    def _apply_head(self, z2: np.ndarray) -> np.ndarray:
        head = self.spec.head
        if head == "linear":
            return z2
        if head == "tanh":
            return np.tanh(z2)
        k = self.spec.split_tanh
        out = z2.copy()
        out[:, :k] = np.tanh(z2[:, :k])
        return out

    def forward(self, x: np.ndarray):
        """Returns (output, cache). Accepts (in_dim,) or (batch, in_dim)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.shape[1] != self.spec.in_dim:
            raise ValueError(
                f"expected input dim {self.spec.in_dim}, got {x2.shape[1]}"
            )
        z1 = x2 @ self.W1.T + self.b1
        h = np.maximum(z1, 0.0)
        z2 = h @ self.W2.T + self.b2
        y = self._apply_head(z2)
        cache = (x2, z1, h, z2, y, single)
        return (y[0] if single else y), cache

    @staticmethod
    def head_preactivation(cache):
        """Pre-squash output z2 from a forward cache, batch-shaped."""
        return cache[3]

    def backward(self, cache, dout: np.ndarray, dz2_extra=None):
        """Exact gradients. Returns (flat_grad, dx) matching the input shape.

        dz2_extra, when given, is added to the head-preactivation gradient;
        regularizers on z2 enter through it."""
        x2, z1, h, z2, y, single = cache
        d = np.asarray(dout, dtype=float)
        d2 = d[None, :] if single else d
        head = self.spec.head
        if head == "tanh":
            dz2 = d2 * (1.0 - y * y)
        elif head == "linear":
            dz2 = d2
        else:
            k = self.spec.split_tanh
            dz2 = d2.copy()
            dz2[:, :k] = d2[:, :k] * (1.0 - y[:, :k] * y[:, :k])
        if dz2_extra is not None:
            dz2 = dz2 + dz2_extra
        dW2 = dz2.T @ h
        db2 = dz2.sum(axis=0)
        dh = dz2 @ self.W2
        dz1 = dh * (z1 > 0.0)
        dW1 = dz1.T @ x2
        db1 = dz1.sum(axis=0)
        dx = dz1 @ self.W1
        grad = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
        return grad, (dx[0] if single else dx)


class AdamState:
    """First/second moment accumulators for one flat parameter vector."""

    def __init__(self, n_params: int):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def copy(self) -> "AdamState":
        s = AdamState(len(self.m))
        s.m = self.m.copy()
        s.v = self.v.copy()
        s.t = self.t
        return s


def adam_step(net: Net, grad: np.ndarray, state: AdamState, lr: float) -> None:
    """One in-place Adam update of net.theta."""
    state.t += 1
    state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = state.m / (1.0 - ADAM_BETA1 ** state.t)
    v_hat = state.v / (1.0 - ADAM_BETA2 ** state.t)
    net.theta -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def soft_update(target: Net, source: Net, tau: float) -> None:
    """target <- (1 - tau) * target + tau * source, in place."""
    target.theta *= 1.0 - tau
    target.theta += tau * source.theta


def sample_gumbel(shape, rng: np.random.Generator, eps: float = 1e-20) -> np.ndarray:
    u = rng.uniform(size=shape)
    return -np.log(-np.log(u + eps) + eps)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gumbel_softmax(logits: np.ndarray, temperature: float,
                   rng: np.random.Generator | None = None,
                   gumbel: np.ndarray | None = None):
    """Returns (soft, hard) samples over the last axis.

    soft = softmax((logits + gumbel) / temperature); hard is the one-hot
    argmax of soft. Downstream code follows the straight-through convention:
    execute hard, differentiate through soft. Tests may inject the gumbel
    noise directly instead of passing an rng.
    """
    logits = np.asarray(logits, dtype=float)
    if gumbel is None:
        if rng is None:
            raise ValueError("need either rng or explicit gumbel noise")
        gumbel = sample_gumbel(logits.shape, rng)
    soft = softmax((logits + gumbel) / temperature)
    idx = soft.argmax(axis=-1)
    hard = np.zeros_like(soft)
    np.put_along_axis(
        hard.reshape(-1, soft.shape[-1]),
        np.asarray(idx).reshape(-1, 1),
        1.0,
        axis=-1,
    )
    return soft, hard


def gumbel_softmax_backward(dsoft: np.ndarray, soft: np.ndarray,
                            temperature: float) -> np.ndarray:
    """Gradient of the soft sample wrt the logits (noise held fixed)."""
    inner = dsoft - (dsoft * soft).sum(axis=-1, keepdims=True)
    return soft * inner / temperature


def one_hot_argmax(logits: np.ndarray) -> np.ndarray:
    """Deterministic one-hot of the max logit (greedy when-head)."""
    logits = np.asarray(logits, dtype=float)
    hard = np.zeros_like(logits)
    idx = logits.argmax(axis=-1)
    np.put_along_axis(
        hard.reshape(-1, logits.shape[-1]),
        np.asarray(idx).reshape(-1, 1),
        1.0,
        axis=-1,
    )
    return hard
