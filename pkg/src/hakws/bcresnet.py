"""Broadcast-residual keyword-spotting model family.

The width multiplier tau scales six base widths (stem 16t; stages 8t, 12t,
16t, 20t; pre-classifier 32t). Input is a stacked log-mel map of shape
(channels, 40, T); output is a 12-way logit vector.

Bias and norm placement around the stem and head are not uniquely
determined by the block structure alone; this build uses: no conv biases
except the final classifier, batch norm + relu after the stem conv and
after the head 1x1 expansion, no norm after the head depthwise conv. That
toggle set reproduces the published parameter counts exactly (see the
count tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine.layers import (BatchNorm2d, Conv2d, Dropout, Module, Parameter,
                            SubSpectralNorm)
from .engine.tensor import Tensor, relu, swish

NUM_CLASSES = 12
SUB_BANDS = 5
BASE_WIDTHS = (16, 8, 12, 16, 20, 32)
SUPPORTED_TAUS = (1, 1.5, 2, 3, 6, 8)
DROPOUT_RATE = 0.1

# (blocks in stage, base width, freq stride of first block, dilation)
STAGE_PLAN = (
    (2, 8, 1, 1),
    (2, 12, 2, 2),
    (4, 16, 2, 4),
    (4, 20, 1, 8),
)


@dataclass(frozen=True)
class ModelConfig:
    tau: float = 1.0
    in_channels: int = 1
    num_classes: int = NUM_CLASSES
    dropout_rate: float = DROPOUT_RATE

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        for base in BASE_WIDTHS:
            if abs(base * self.tau - round(base * self.tau)) > 1e-9:
                raise ValueError(
                    f"non-integer channel width {base}*{self.tau}")
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")

    def width(self, base: int) -> int:
        return int(round(base * self.tau))


class BroadcastResidualBlock(Module):
    """2D frequency path + frequency-averaged 1D temporal path.

    The 2D path is a frequency-depthwise 3x1 conv with sub-spectral norm.
    Its frequency average feeds a dilated temporal depthwise 1x3 conv,
    batch norm, swish, 1x1 conv, dropout; the result broadcasts back over
    frequency. Normal blocks add the identity; transition blocks first
    project channels through a 1x1 conv + norm + relu and drop the
    identity term. ReLU closes the block.
    """

    def __init__(self, in_channels: int, channels: int, freq_stride: int,
                 dilation: int, dropout_rate: float,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.is_transition = in_channels != channels or freq_stride != 1
        if self.is_transition:
            self.proj = Conv2d(in_channels, channels, (1, 1), rng=rng,
                               dtype=dtype)
            self.proj_norm = BatchNorm2d(channels, dtype=dtype)
        self.freq_dw = Conv2d(channels, channels, (3, 1),
                              stride=(freq_stride, 1), padding=(1, 0),
                              groups=channels, rng=rng, dtype=dtype)
        self.freq_norm = SubSpectralNorm(channels, SUB_BANDS, dtype=dtype)
        self.temp_dw = Conv2d(channels, channels, (1, 3),
                              dilation=(1, dilation), padding=(0, dilation),
                              groups=channels, rng=rng, dtype=dtype)
        self.temp_norm = BatchNorm2d(channels, dtype=dtype)
        self.pointwise = Conv2d(channels, channels, (1, 1), rng=rng,
                                dtype=dtype)
        self.drop = Dropout(dropout_rate,
                            seed=int(rng.integers(0, 2 ** 32)))

    def forward(self, x: Tensor) -> Tensor:
        if self.is_transition:
            x = relu(self.proj_norm(self.proj(x)))
        path_2d = self.freq_norm(self.freq_dw(x))
        pooled = path_2d.mean(axis=2, keepdims=True)
        path_1d = self.drop(self.pointwise(
            swish(self.temp_norm(self.temp_dw(pooled)))))
        total = path_2d + path_1d
        if not self.is_transition:
            total = total + x
        return relu(total)


class BcResNet(Module):
    def __init__(self, config: ModelConfig, seed: int = 0,
                 dtype=np.float32):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        stem_w = config.width(BASE_WIDTHS[0])
        self.stem = Conv2d(config.in_channels, stem_w, (5, 5),
                           stride=(2, 1), padding=(2, 2), rng=rng,
                           dtype=dtype)
        self.stem_norm = BatchNorm2d(stem_w, dtype=dtype)
        blocks = []
        in_ch = stem_w
        for count, base, freq_stride, dilation in STAGE_PLAN:
            ch = config.width(base)
            for index in range(count):
                blocks.append(BroadcastResidualBlock(
                    in_ch, ch, freq_stride if index == 0 else 1, dilation,
                    config.dropout_rate, rng, dtype=dtype))
                in_ch = ch
        self.blocks = blocks
        head_w = config.width(BASE_WIDTHS[5])
        self.head_dw = Conv2d(in_ch, in_ch, (5, 5), padding=(0, 2),
                              groups=in_ch, rng=rng, dtype=dtype)
        self.head_pw = Conv2d(in_ch, head_w, (1, 1), rng=rng, dtype=dtype)
        self.head_norm = BatchNorm2d(head_w, dtype=dtype)
        self.classifier = Conv2d(head_w, config.num_classes, (1, 1),
                                 bias=True, rng=rng, dtype=dtype)

    def named_layers(self):
        """Top-level layers in forward order, for the summary report."""
        yield "stem", self.stem
        yield "stem_norm", self.stem_norm
        for i, block in enumerate(self.blocks):
            kind = "transition" if block.is_transition else "normal"
            yield f"block{i:02d}[{kind}]", block
        yield "head_dw", self.head_dw
        yield "head_pw", self.head_pw
        yield "head_norm", self.head_norm
        yield "classifier", self.classifier

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 4:
            raise ValueError("expected (batch, channels, freq, time) input")
        n, c, h, _ = x.shape
        if c != self.config.in_channels:
            raise ValueError(f"expected {self.config.in_channels} input "
                             f"channels, got {c}")
        if h != 40:
            raise ValueError(f"expected 40 frequency bins, got {h}")
        x = relu(self.stem_norm(self.stem(x)))
        for block in self.blocks:
            x = block(x)
        x = self.head_dw(x)
        x = relu(self.head_norm(self.head_pw(x)))
        x = x.mean(axis=(2, 3), keepdims=True)
        logits = self.classifier(x)
        return logits.reshape(n, self.config.num_classes)

    def summary(self, time_extent: int = 98) -> str:
        """Per-layer output shape and parameter audit table."""
        was_training = self.training
        self.eval()
        x = Tensor(np.zeros(
            (1, self.config.in_channels, 40, time_extent),
            dtype=np.float32))
        rows = [("layer", "output shape", "params", "cumulative")]
        total = 0

        def record(name, shape, count):
            nonlocal total
            total += count
            rows.append((name, str(tuple(shape)), str(count), str(total)))

        for name, layer in self.named_layers():
            if name == "stem":
                x = layer(x)
            elif name in ("stem_norm", "head_norm"):
                x = relu(layer(x))
            else:
                x = layer(x)
            record(name, x.shape, layer.num_params())
            if name == "head_norm":
                x = x.mean(axis=(2, 3), keepdims=True)
                record("avg_pool", x.shape, 0)
        self.train(was_training)
        widths = [max(len(row[i]) for row in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(widths[i])
                           for i, cell in enumerate(row)).rstrip()
                 for row in rows]
        lines.append(f"total parameters: {total}")
        return "\n".join(lines)


def build_model(config: ModelConfig, seed: int = 0,
                dtype=np.float32) -> BcResNet:
    return BcResNet(config, seed=seed, dtype=dtype)


def count_params(model: Module) -> int:
    """Learnable scalars only; running statistics excluded."""
    return sum(p.data.size for p in model.parameters()
               if isinstance(p, Parameter))
