"""Layers, the class-weighted focal loss, and Adam, built on :mod:`mixstack.autograd`.

Shapes follow the batch-first convention used throughout: token batches are
``(B, L)`` integer arrays, sequences are ``(B, L, features)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor

PAD = 0


# ---------------------------------------------------------------- init helpers

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def param(values) -> Tensor:
    return Tensor(values, requires_grad=True)


# ---------------------------------------------------------------------- Module

class Module:
    """Base class: owns named parameters, non-trainable buffers and a train/eval mode."""

    training = True

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in getattr(self, "buffers", {}).items():
            yield prefix + name, value
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


# ---------------------------------------------------------------------- layers

class Embedding(Module):
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator,
                 weights: np.ndarray | None = None, freeze_pad: bool = True):
        if weights is None:
            weights = rng.uniform(-0.25, 0.25, size=(vocab_size, dim))
        weights = np.array(weights, dtype=np.float64)
        if weights.shape != (vocab_size, dim):
            raise ValueError(f"embedding weights have shape {weights.shape}, expected {(vocab_size, dim)}")
        weights[PAD] = 0.0
        self.weight = param(weights)
        self.freeze_pad = freeze_pad

    def forward(self, indices: np.ndarray) -> Tensor:
        indices = np.asarray(indices, dtype=np.int64)
        out = ag.gather_rows(self.weight, indices)
        if self.freeze_pad:
            # zeroes PAD outputs and, through the product, their row gradient
            mask = (indices != PAD).astype(np.float64)[..., None]
            out = out * Tensor(np.broadcast_to(mask, out.shape))
        return out


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.W = param(glorot_uniform(rng, n_in, n_out))
        self.b = param(np.zeros(n_out))

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b


class BatchNorm(Module):
    """Per-feature normalization over the batch axis of a ``(B, n)`` input."""

    def __init__(self, n: int, eps: float = 1e-5, momentum: float = 0.9):
        self.gamma = param(np.ones(n))
        self.beta = param(np.zeros(n))
        self.eps = eps
        self.momentum = momentum
        self.buffers = {"running_mean": np.zeros(n), "running_var": np.ones(n)}

    def forward(self, x: Tensor) -> Tensor:
        if self.training:
            if x.shape[0] < 2:
                raise ValueError("batch normalization in train mode needs a batch of at least 2")
            mu = x.mean(axis=0)
            centered = x - mu
            var = (centered * centered).mean(axis=0)
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mu.data
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var.data
            xhat = centered / ag.power(var + self.eps, 0.5)
        else:
            mu = self.buffers["running_mean"]
            sd = np.sqrt(self.buffers["running_var"] + self.eps)
            xhat = (x - Tensor(mu)) / Tensor(sd)
        return xhat * self.gamma + self.beta


class Dropout(Module):
    """Inverted dropout; the identity in eval mode or at rate 0."""

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        keep = self.rng.random(x.shape) >= self.rate
        return x * Tensor(keep / (1.0 - self.rate))


class DenseBlock(Module):
    """Dense -> BatchNorm -> ReLU -> Dropout."""

    def __init__(self, n_in: int, n_out: int, dropout: float, rng: np.random.Generator):
        self.dense = Dense(n_in, n_out, rng)
        self.norm = BatchNorm(n_out)
        self.dropout = Dropout(dropout, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.dropout(ag.relu(self.norm(self.dense(x))))


class Conv1D(Module):
    """Valid temporal convolution with bias and ReLU: ``(B, L, d) -> (B, L-w+1, F)``."""

    def __init__(self, width: int, dim: int, filters: int, rng: np.random.Generator):
        self.width = width
        self.filters = param(glorot_uniform(rng, width * dim, filters, (width, dim, filters)))
        self.bias = param(np.zeros(filters))

    def forward(self, x: Tensor, activation: bool = True) -> Tensor:
        w, d, f = self.filters.shape
        if x.shape[1] < w:
            raise ValueError(f"sequence length {x.shape[1]} is shorter than filter width {w}")
        out = ag.unfold(x, w) @ ag.reshape(self.filters, (w * d, f)) + self.bias
        return ag.relu(out) if activation else out


def maxpool1d(x: Tensor, size: int = 2, stride: int = 2) -> Tensor:
    """Windowed max over axis 1; a trailing partial window is dropped."""
    b, length, f = x.shape
    if length < size:
        raise ValueError(f"sequence length {length} is shorter than pool size {size}")
    n = (length - size) // stride + 1
    if size == stride:
        windows = ag.reshape(x[:, : n * size, :], (b, n, size, f))
    else:
        windows = ag.stack([x[:, i * stride: i * stride + size, :] for i in range(n)], axis=1)
    return windows.max(axis=2)


def global_maxpool(x: Tensor) -> Tensor:
    """``(B, L, H) -> (B, H)``."""
    return x.max(axis=1)


class LSTM(Module):
    """Unidirectional LSTM returning the full hidden sequence (gate order i, f, g, o)."""

    def __init__(self, dim: int, units: int, rng: np.random.Generator):
        h = units
        self.units = units
        self.W = param(np.concatenate([glorot_uniform(rng, dim, h) for _ in range(4)], axis=1))
        self.U = param(np.concatenate([orthogonal(rng, h) for _ in range(4)], axis=1))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0  # forget gate
        self.b = param(b)

    def forward(self, x: Tensor) -> Tensor:
        bsz, length, _ = x.shape
        h = self.units
        xw = x @ self.W + self.b
        state = Tensor(np.zeros((bsz, h)))
        cell = Tensor(np.zeros((bsz, h)))
        outputs = []
        for t in range(length):
            z = xw[:, t, :] + state @ self.U
            i = ag.sigmoid(z[:, :h])
            f = ag.sigmoid(z[:, h:2 * h])
            g = ag.tanh(z[:, 2 * h:3 * h])
            o = ag.sigmoid(z[:, 3 * h:])
            cell = f * cell + i * g
            state = o * ag.tanh(cell)
            outputs.append(state)
        return ag.stack(outputs, axis=1)


class GRU(Module):
    """Unidirectional GRU returning the full hidden sequence.

    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    n = tanh(x Wn + (r * h) Un + bn), h' = z * h + (1 - z) * n.
    """

    def __init__(self, dim: int, units: int, rng: np.random.Generator):
        h = units
        self.units = units
        self.W = param(np.concatenate([glorot_uniform(rng, dim, h) for _ in range(3)], axis=1))
        self.U = param(np.concatenate([orthogonal(rng, h) for _ in range(3)], axis=1))
        self.b = param(np.zeros(3 * h))

    def forward(self, x: Tensor) -> Tensor:
        bsz, length, _ = x.shape
        h = self.units
        xw = x @ self.W + self.b
        u_zr = self.U[:, : 2 * h]
        u_n = self.U[:, 2 * h:]
        state = Tensor(np.zeros((bsz, h)))
        outputs = []
        for t in range(length):
            xt = xw[:, t, :]
            zr = ag.sigmoid(xt[:, : 2 * h] + state @ u_zr)
            z, r = zr[:, :h], zr[:, h:]
            n = ag.tanh(xt[:, 2 * h:] + (r * state) @ u_n)
            state = z * state + (1.0 - z) * n
            outputs.append(state)
        return ag.stack(outputs, axis=1)


class AdditiveAttention(Module):
    """Additive self-attention pooling over a hidden sequence.

    Scores ``v . tanh(W h_i + b)`` are softmaxed over time; the context is the
    weighted sum of the ``h_i``. Returns ``(context (B, H), weights (B, L))``.
    """

    def __init__(self, units: int, rng: np.random.Generator, attention_dim: int | None = None):
        a = attention_dim or units
        self.W = param(glorot_uniform(rng, units, a))
        self.b = param(np.zeros(a))
        self.v = param(glorot_uniform(rng, a, 1))

    def forward(self, h: Tensor) -> tuple[Tensor, Tensor]:
        bsz, length, units = h.shape
        scores = ag.reshape(ag.tanh(h @ self.W + self.b) @ self.v, (bsz, length))
        weights = ag.softmax(scores)
        expanded = ag.broadcast_to(ag.reshape(weights, (bsz, length, 1)), h.shape)
        context = (h * expanded).sum(axis=1)
        return context, weights


# ------------------------------------------------------------------------ loss

@dataclass
class FocalLossConfig:
    gamma: float = 2.0
    class_weights: Sequence[float] | None = None  # None means all ones
    reduction: str = "mean"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.class_weights is not None and any(w <= 0 for w in self.class_weights):
            raise ValueError("class weights must be positive")
        if self.reduction != "mean":
            raise ValueError("only mean reduction is supported")


PROB_CLAMP = 1e-12


def focal_loss(probs: Tensor, target, config: FocalLossConfig) -> Tensor:
    """Mean over the batch of ``-alpha_y (1 - p_y)^gamma log p_y``.

    ``probs`` is ``(B, C)`` softmax output, or ``(B, 1)`` sigmoid output which
    is read as the probability of class 1.
    """
    target = np.asarray(target, dtype=np.int64)
    if probs.shape[1] == 1:
        probs = ag.concat([1.0 - probs, probs], axis=1)
    n, c = probs.shape
    if target.shape != (n,):
        raise ValueError(f"target has shape {target.shape}, expected ({n},)")
    if target.size and (target.min() < 0 or target.max() >= c):
        raise ValueError(f"target index out of range for {c} classes")
    weights = np.ones(c) if config.class_weights is None else np.asarray(config.class_weights, float)
    if weights.shape != (c,):
        raise ValueError(f"{len(weights)} class weights given for {c} classes")
    p = ag.clip(probs[np.arange(n), target], PROB_CLAMP, 1.0 - PROB_CLAMP)
    per_example = Tensor(-weights[target]) * ag.power(1.0 - p, config.gamma) * ag.log(p)
    return per_example.mean()


def cross_entropy(probs: Tensor, target) -> Tensor:
    target = np.asarray(target, dtype=np.int64)
    p = ag.clip(probs[np.arange(len(target)), target], PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -ag.log(p).mean()


def inverse_frequency_weights(labels, num_classes: int) -> list[float]:
    """``N / (C * n_c)``; a class absent from ``labels`` gets weight 1."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes)
    total = counts.sum()
    return [float(total / (num_classes * n)) if n else 1.0 for n in counts]


# ------------------------------------------------------------------------ Adam

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One in-place Adam update; parameters without a gradient are treated as g = 0."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ValueError("Adam state was built for a different parameter list")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, m, v in zip(params, state.m, state.v):
        g = np.zeros_like(p.data) if p.grad is None else p.grad
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def zero_grad(self) -> None:
        ag.zero_grads(self.params)

    def step(self) -> None:
        adam_step(self.params, self.state)
