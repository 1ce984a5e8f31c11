"""Minimal dense-tensor engine with reverse-mode autodiff.

Everything is a 2-D array: parameters, batched activations, and scalars
(shape (1, 1)). A :class:`Graph` is the tape for one forward pass; op
methods record the local backward rule and ``Graph.backward`` replays the
tape in reverse creation order, accumulating gradients additively across
fan-out.

Values are stored in float32 by default (float64 is available for
gradient checking); reductions accumulate in float64 before casting back.
Every op output is checked for NaN/Inf and raises on the first one, so a
diverging training run fails at the op that produced it.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .model import ConfigurationError, NumericError


class GraphUsageError(RuntimeError):
    """Backward called on a tensor that is not part of a recorded graph."""


class Tensor:
    """2-D value plus gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        arr = np.asarray(data, dtype=dtype)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ConfigurationError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def accumulate_grad(self, g: np.ndarray, own: bool = False) -> None:
        """Add ``g`` into the gradient. ``own=True`` promises ``g`` (or the
        buffer it views) is not read again by the caller, so it can be
        stored without copying."""
        if self.grad is None:
            self.grad = g if own else g.copy()
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Graph:
    """Tape of op applications for one forward pass.

    ``recording=False`` skips backward bookkeeping for inference-only
    passes. One graph belongs to one execution context; independent graphs
    may run concurrently.
    """

    def __init__(self, dtype=np.float32, recording: bool = True):
        self.dtype = np.dtype(dtype)
        self.recording = recording
        self.nodes: list[Tensor] = []

    # -- construction helpers ------------------------------------------------

    def tensor(self, data, requires_grad: bool = False) -> Tensor:
        return Tensor(data, requires_grad=requires_grad, dtype=self.dtype)

    def constant(self, data) -> Tensor:
        return self.tensor(data, requires_grad=False)

    def _record(self, out: Tensor, parents: tuple, backward: Callable) -> Tensor:
        # a single fused reduction; any NaN/Inf in the data poisons the sum
        if not math.isfinite(float(np.sum(out.data))):
            raise NumericError("non-finite value produced by a graph op")
        if self.recording and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
            self.nodes.append(out)
        return out

    # -- primitives ----------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise ConfigurationError(
                f"matmul shape mismatch: {a.shape} @ {b.shape}"
            )
        out = Tensor(a.data @ b.data, dtype=self.dtype)

        def backward(g):
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T, own=True)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g, own=True)

        return self._record(out, (a, b), backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ConfigurationError(f"add shape mismatch: {a.shape} vs {b.shape}")
        out = Tensor(a.data + b.data, dtype=self.dtype)

        def backward(g):
            if b.requires_grad:
                b.accumulate_grad(g)            # reads g, so run first
            if a.requires_grad:
                a.accumulate_grad(g, own=True)  # hands over the buffer

        return self._record(out, (a, b), backward)

    def add_bias(self, x: Tensor, bias: Tensor) -> Tensor:
        if bias.shape != (1, x.shape[1]):
            raise ConfigurationError(
                f"bias shape {bias.shape} does not match columns of {x.shape}"
            )
        out = Tensor(x.data + bias.data, dtype=self.dtype)

        def backward(g):
            if bias.requires_grad:
                bias.accumulate_grad(g.sum(axis=0, keepdims=True), own=True)
            if x.requires_grad:
                x.accumulate_grad(g, own=True)

        return self._record(out, (x, bias), backward)

    def relu(self, x: Tensor) -> Tensor:
        out = Tensor(np.maximum(x.data, 0), dtype=self.dtype)

        def backward(g):
            if x.requires_grad:
                x.accumulate_grad(g * (x.data > 0), own=True)

        return self._record(out, (x,), backward)

    def negate(self, x: Tensor) -> Tensor:
        out = Tensor(-x.data, dtype=self.dtype)

        def backward(g):
            if x.requires_grad:
                x.accumulate_grad(-g, own=True)

        return self._record(out, (x,), backward)

    def concat_cols(self, *xs: Tensor) -> Tensor:
        rows = {x.shape[0] for x in xs}
        if len(rows) != 1:
            raise ConfigurationError(f"concat_cols row mismatch: {rows}")
        out = Tensor(np.concatenate([x.data for x in xs], axis=1), dtype=self.dtype)
        widths = [x.shape[1] for x in xs]

        def backward(g):
            offset = 0
            for x, w in zip(xs, widths):
                if x.requires_grad:
                    # disjoint views of the handed-over upstream buffer
                    x.accumulate_grad(g[:, offset:offset + w], own=True)
                offset += w

        return self._record(out, tuple(xs), backward)

    def slice_cols(self, x: Tensor, start: int, stop: int) -> Tensor:
        if not 0 <= start < stop <= x.shape[1]:
            raise ConfigurationError(
                f"slice [{start}:{stop}] out of range for width {x.shape[1]}"
            )
        out = Tensor(x.data[:, start:stop].copy(), dtype=self.dtype)

        def backward(g):
            if x.requires_grad:
                full = np.zeros_like(x.data)
                full[:, start:stop] = g
                x.accumulate_grad(full, own=True)

        return self._record(out, (x,), backward)

    def reduce_mean(self, x: Tensor) -> Tensor:
        n = x.data.size
        out = Tensor([[x.data.mean(dtype=np.float64)]], dtype=self.dtype)

        def backward(g):
            if x.requires_grad:
                x.accumulate_grad(np.full_like(x.data, g[0, 0] / n), own=True)

        return self._record(out, (x,), backward)

    def reduce_var(self, x: Tensor) -> Tensor:
        """Population variance over all elements."""
        n = x.data.size
        mu = x.data.mean(dtype=np.float64)
        centered = x.data.astype(np.float64) - mu
        out = Tensor([[np.mean(centered * centered)]], dtype=self.dtype)

        def backward(g):
            if x.requires_grad:
                x.accumulate_grad(
                    ((2.0 / n) * g[0, 0] * centered).astype(self.dtype), own=True
                )

        return self._record(out, (x,), backward)

    def scale(self, x: Tensor, c: float) -> Tensor:
        out = Tensor(x.data * self.dtype.type(c), dtype=self.dtype)

        def backward(g):
            if x.requires_grad:
                x.accumulate_grad(g * self.dtype.type(c), own=True)

        return self._record(out, (x,), backward)

    def mul_scalar(self, x: Tensor, s: Tensor) -> Tensor:
        """Multiply by a (1, 1) tensor, e.g. a learned per-round weight."""
        if s.shape != (1, 1):
            raise ConfigurationError(f"mul_scalar expects (1, 1), got {s.shape}")
        out = Tensor(x.data * s.data[0, 0], dtype=self.dtype)

        def backward(g):
            if s.requires_grad:
                s.accumulate_grad(
                    np.array(
                        [[np.sum(g.astype(np.float64) * x.data)]], dtype=self.dtype
                    ),
                    own=True,
                )
            if x.requires_grad:
                x.accumulate_grad(g * s.data[0, 0], own=True)

        return self._record(out, (x, s), backward)

    def batch_standardize(self, x: Tensor, eps: float = 1e-12) -> Tensor:
        """Standardize each column to zero mean, unit variance over the batch
        (population statistics); gradients flow through the statistics."""
        n = x.shape[0]
        mu = x.data.mean(axis=0, keepdims=True, dtype=np.float64)
        centered = x.data.astype(np.float64) - mu
        std = np.sqrt(np.mean(centered * centered, axis=0, keepdims=True) + eps)
        z64 = centered / std
        out = Tensor(z64, dtype=self.dtype)

        def backward(g):
            if x.requires_grad:
                g64 = g.astype(np.float64)
                g_mean = g64.mean(axis=0, keepdims=True)
                gz_mean = (g64 * z64).mean(axis=0, keepdims=True)
                dx = (g64 - g_mean - z64 * gz_mean) / std
                x.accumulate_grad(dx.astype(self.dtype), own=True)

        return self._record(out, (x,), backward)

    def softmax_cross_entropy(self, logits: Tensor, classes: np.ndarray) -> Tensor:
        """Mean over the batch of -log softmax(logits)[class]."""
        classes = np.asarray(classes)
        n = logits.shape[0]
        if classes.shape != (n,):
            raise ConfigurationError(
                f"classes shape {classes.shape} does not match batch {n}"
            )
        z = logits.data.astype(np.float64)
        z = z - z.max(axis=1, keepdims=True)
        exp = np.exp(z)
        denom = exp.sum(axis=1, keepdims=True)
        log_probs = z - np.log(denom)
        loss = -log_probs[np.arange(n), classes].mean()
        out = Tensor([[loss]], dtype=self.dtype)

        def backward(g):
            if logits.requires_grad:
                d = exp / denom
                d[np.arange(n), classes] -= 1.0
                logits.accumulate_grad(
                    (d * (g[0, 0] / n)).astype(self.dtype), own=True
                )

        return self._record(out, (logits,), backward)

    # -- reverse pass ----------------------------------------------------------

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad leaf reachable from
        ``loss``."""
        if loss._backward is None or loss not in self.nodes:
            raise GraphUsageError(
                "backward target was not produced by this graph"
            )
        if loss.data.size != 1:
            raise GraphUsageError("backward target must be a scalar tensor")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)
            node.grad = None  # recorded intermediates are not reused


class AdamW:
    """Adam with decoupled weight decay:

        theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        if lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def set_lr(self, lr: float) -> None:
        if lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        self.lr = lr

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= self.lr * (
                m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data
            )

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def clip_grad_value(params: dict[str, Tensor], c: float) -> None:
    """Clamp every gradient element to [-c, c] (value clipping)."""
    if c <= 0:
        raise ConfigurationError(f"clip value must be positive, got {c}")
    for p in params.values():
        if p.grad is not None:
            np.clip(p.grad, -c, c, out=p.grad)


def lr_lambda_schedule(step: int, total_steps: int, lr0: float) -> float:
    """Linear decay from lr0 to a 1% floor over ``total_steps``."""
    if not 0 <= step <= total_steps:
        raise ConfigurationError(
            f"step {step} outside [0, {total_steps}]"
        )
    return lr0 * max(0.01, 1.0 - step / total_steps)
