"""Minimal dense-tensor engine with reverse-mode differentiation.

Shapes follow the (batch, channel, freq, time) convention of the model.
Training runs in float32; gradient checks run the same code in float64
(dtype follows the input everywhere). Each op stores a closure computing
parent gradients from the output gradient; backward() walks the graph in
reverse topological order.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import DivergenceError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the tape entry that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(),
                 backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(
            data, dtype=np.float32)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(
            p.requires_grad for p in self._parents)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        """Backpropagate from this node (scalar unless grad is given)."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without grad needs a scalar")
            grad = np.ones_like(self.data)
        topo = []
        seen = set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for parent in node._parents:
                visit(parent)
            topo.append(node)

        visit(self)
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            for parent, pgrad in zip(node._parents, node._backward(node.grad)):
                if parent.requires_grad and pgrad is not None:
                    parent._accumulate(pgrad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(
            np.asarray(other, dtype=self.dtype))
        out_data = self.data + other.data

        def back(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))

        return Tensor(out_data, parents=(self, other), backward=back)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(
            np.asarray(other, dtype=self.dtype))
        out_data = self.data * other.data
        a, b = self, other

        def back(g):
            return (_unbroadcast(g * b.data, a.shape),
                    _unbroadcast(g * a.data, b.shape))

        return Tensor(out_data, parents=(self, other), backward=back)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return self * np.asarray(-1.0, dtype=self.dtype)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(
            np.asarray(other, dtype=self.dtype))
        return self + (-other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self

        def back(g):
            return (g.reshape(src.shape),)

        return Tensor(self.data.reshape(shape), parents=(self,), backward=back)

    def mean(self, axis, keepdims: bool = True):
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        out_data = self.data.mean(axis=axes, keepdims=keepdims)
        count = int(np.prod([self.shape[a] for a in axes]))
        src = self

        def back(g):
            if not keepdims:
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g / count, src.shape),)

        return Tensor(out_data, parents=(self,), backward=back)

    def sum(self):
        src = self

        def back(g):
            return (np.full(src.shape, g, dtype=src.dtype),)

        return Tensor(np.asarray(self.data.sum(), dtype=self.dtype),
                      parents=(self,), backward=back)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def back(g):
        return (g * mask,)

    return Tensor(x.data * mask, parents=(x,), backward=back)


def swish(x: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    sig = expit(x.data)
    out_data = x.data * sig

    def back(g):
        return (g * (sig * (1.0 + x.data * (1.0 - sig))),)

    return Tensor(out_data, parents=(x,), backward=back)


def dropout(x: Tensor, rate: float, rng: np.random.Generator,
            training: bool) -> Tensor:
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)

    def back(g):
        return (g * keep,)

    return Tensor(x.data * keep, parents=(x,), backward=back)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride=(1, 1), dilation=(1, 1), padding=(0, 0),
           groups: int = 1) -> Tensor:
    """Grouped 2-D convolution (cross-correlation) over (N, C, H, W)."""
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    if cin != cin_g * groups:
        raise ValueError(f"channel mismatch: input {cin}, "
                         f"weight expects {cin_g * groups}")
    sh, sw = stride
    dh, dw = dilation
    ph, pw = padding
    ho = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    wo = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"kernel does not fit input of shape {(h, w)}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) \
        if (ph or pw) else x.data
    cols = np.empty((n, cin, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        hi = i * dh
        for j in range(kw):
            wj = j * dw
            cols[:, :, i, j] = xp[:, :, hi:hi + sh * (ho - 1) + 1:sh,
                                  wj:wj + sw * (wo - 1) + 1:sw]
    k = cin_g * kh * kw
    cols2 = cols.reshape(n, groups, k, ho * wo)
    w2 = weight.data.reshape(groups, cout // groups, k)
    out = np.matmul(w2, cols2).reshape(n, cout, ho, wo)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        go2 = g.reshape(n, groups, cout // groups, ho * wo)
        grad_w = np.matmul(go2, cols2.transpose(0, 1, 3, 2)).sum(axis=0)
        grad_w = grad_w.reshape(weight.shape)
        grad_cols = np.matmul(w2.transpose(0, 2, 1), go2)
        grad_cols = grad_cols.reshape(n, cin, kh, kw, ho, wo)
        gxp = np.zeros((n, cin, h + 2 * ph, w + 2 * pw), dtype=g.dtype)
        for i in range(kh):
            hi = i * dh
            for j in range(kw):
                wj = j * dw
                gxp[:, :, hi:hi + sh * (ho - 1) + 1:sh,
                    wj:wj + sw * (wo - 1) + 1:sw] += grad_cols[:, :, i, j]
        grad_x = gxp[:, :, ph:ph + h, pw:pw + w] if (ph or pw) else gxp
        if bias is None:
            return (grad_x, grad_w)
        return (grad_x, grad_w, g.sum(axis=(0, 2, 3)))

    return Tensor(out, parents=parents, backward=back)


class BatchNormState:
    """Running statistics buffer shared between train and eval forwards."""

    def __init__(self, channels: int, momentum: float = 0.1,
                 eps: float = 1e-5):
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               training: bool) -> Tensor:
    """Per-channel normalization over (batch, freq, time).

    Train mode normalizes by batch statistics (biased variance) and updates
    the running buffers; eval mode is a deterministic affine map using the
    running statistics.
    """
    axes = (0, 2, 3)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError("affine parameter shape mismatch")
    eps = state.eps
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = x.data.size // c
        state.running_mean += state.momentum * (mean.astype(np.float64)
                                                - state.running_mean)
        unbiased = var * (m / max(m - 1, 1))
        state.running_var += state.momentum * (unbiased.astype(np.float64)
                                               - state.running_var)
    else:
        mean = state.running_mean.astype(x.dtype)
        var = state.running_var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat \
        + beta.data[None, :, None, None]

    def back(g):
        grad_gamma = (g * xhat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        scale = (gamma.data * inv_std)[None, :, None, None]
        if training:
            g_mean = g.mean(axis=axes, keepdims=True)
            gx_mean = (g * xhat).mean(axis=axes, keepdims=True)
            grad_x = scale * (g - g_mean - xhat * gx_mean)
        else:
            grad_x = scale * g
        return (grad_x, grad_gamma, grad_beta)

    return Tensor(out.astype(x.dtype, copy=False), parents=(x, gamma, beta),
                  backward=back)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy over the batch via stable log-sum-exp.

    labels: integer array of shape (batch,).
    """
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError("label out of range")
    if not np.all(np.isfinite(logits.data)):
        raise DivergenceError("non-finite logits")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    exp = np.exp(z - zmax)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = (z - zmax) - np.log(denom)
    loss = -log_probs[np.arange(n), labels].mean()
    probs = exp / denom

    def back(g):
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        return (grad * (g / n),)

    return Tensor(np.asarray(loss, dtype=logits.dtype), parents=(logits,),
                  backward=back)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
