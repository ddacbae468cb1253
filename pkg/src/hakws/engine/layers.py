"""Layer modules built on the tensor primitives.

A Module owns Parameters (trained) and buffers (running statistics,
persisted but not counted or trained). Initialization draws from a caller
rng so whole-model construction is reproducible from one seed.
"""

from __future__ import annotations

import numpy as np

from .tensor import (BatchNormState, Tensor, batch_norm, conv2d, dropout,
                     relu, swish)


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)


class Module:
    """Base class with recursive parameter/buffer traversal."""

    def __init__(self):
        self.training = True

    def forward(self, x):  # pragma: no cover - overridden
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for idx, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{idx}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        for _, param in self.named_parameters():
            yield param

    def named_buffers(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, BatchNormState):
                yield f"{prefix}{name}.running_mean", value.running_mean
                yield f"{prefix}{name}.running_var", value.running_var
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def train(self, mode: bool = True):
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def num_params(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def state_dict(self) -> dict:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict) -> None:
        own = self.state_dict()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        for name, current in own.items():
            value = np.asarray(state[name])
            if value.shape != current.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{value.shape} vs {current.shape}")
            current[...] = value.astype(current.dtype)


class Conv2d(Module):
    """Grouped convolution; groups == channels gives the depthwise case."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size,
                 stride=(1, 1), dilation=(1, 1), padding=(0, 0),
                 groups: int = 1, bias: bool = False,
                 rng: np.random.Generator | None = None,
                 dtype=np.float32):
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ValueError("channels must divide groups")
        kh, kw = kernel_size
        self.stride = tuple(stride)
        self.dilation = tuple(dilation)
        self.padding = tuple(padding)
        self.groups = groups
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = (in_channels // groups) * kh * kw
        bound = float(np.sqrt(2.0 / fan_in))
        shape = (out_channels, in_channels // groups, kh, kw)
        self.weight = Parameter(
            (rng.standard_normal(shape) * bound).astype(dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype)) \
            if bias else None

    def named_parameters(self, prefix: str = ""):
        yield prefix + "weight", self.weight
        if self.bias is not None:
            yield prefix + "bias", self.bias

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride,
                      dilation=self.dilation, padding=self.padding,
                      groups=self.groups)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1,
                 eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.state = BatchNormState(channels, momentum=momentum, eps=eps)

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm(x, self.gamma, self.beta, self.state,
                          training=self.training)


class SubSpectralNorm(Module):
    """Batch norm applied independently within frequency sub-bands.

    The frequency axis splits into `sub_bands` equal groups; each
    (channel, sub-band) pair gets its own statistics and affine pair,
    realized by folding the sub-band index into the channel axis.
    """

    def __init__(self, channels: int, sub_bands: int = 5, **bn_kwargs):
        super().__init__()
        self.sub_bands = sub_bands
        self.norm = BatchNorm2d(channels * sub_bands, **bn_kwargs)

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        s = self.sub_bands
        if h % s:
            raise ValueError(f"frequency extent {h} not divisible "
                             f"into {s} sub-bands")
        folded = x.reshape(n, c * s, h // s, w)
        return self.norm(folded).reshape(n, c, h, w)


class ReLU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return relu(x)


class Swish(Module):
    def forward(self, x: Tensor) -> Tensor:
        return swish(x)


class Dropout(Module):
    """Inverted dropout; draws masks from an owned, reseedable rng."""

    def __init__(self, rate: float, seed: int = 0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = np.random.default_rng(seed)

    def set_seed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def forward(self, x: Tensor) -> Tensor:
        return dropout(x, self.rate, self.rng, training=self.training)


class Sequential(Module):
    def __init__(self, *modules: Module):
        super().__init__()
        self.steps = list(modules)

    def forward(self, x: Tensor) -> Tensor:
        for step in self.steps:
            x = step(x)
        return x
