"""Frame encoders: the trainable toy CNN and the paper-scale adapter heads."""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .features import FLAT, SPATIAL, EncoderConfig


def uniform_param(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32),
                  requires_grad=True)


class Conv2dLayer:
    def __init__(self, rng, in_ch: int, out_ch: int, kernel: int = 3,
                 stride: int = 1, padding: int = 1):
        fan_in = in_ch * kernel * kernel
        self.weight = uniform_param(rng, (out_ch, in_ch, kernel, kernel), fan_in)
        self.bias = Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        out = dc.conv2d(x, self.weight, stride=self.stride, padding=self.padding)
        return out + dc.reshape(self.bias, (-1, 1, 1))

    def params(self) -> dict[str, Tensor]:
        return {"w": self.weight, "b": self.bias}


class LinearLayer:
    def __init__(self, rng, in_dim: int, out_dim: int):
        self.weight = uniform_param(rng, (in_dim, out_dim), in_dim)
        self.bias = Tensor(np.zeros(out_dim, dtype=np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return dc.matmul(x, self.weight) + self.bias

    def params(self) -> dict[str, Tensor]:
        return {"w": self.weight, "b": self.bias}


def _merge(*named) -> dict[str, Tensor]:
    out = {}
    for prefix, layer in named:
        for key, tensor in layer.params().items():
            out[f"{prefix}.{key}"] = tensor
    return out


class ToyEncoder:
    """Small trainable CNN standing in for a pretrained backbone.

    Three 3x3 conv blocks (strides 2, 2, 1; channels 32, 64, C) with ReLU,
    then either adaptive pooling to Cx6x6 (spatial) or global average
    pooling plus a linear map to D (flat). Expects 3x32x32 frames.
    """

    INPUT_SIDE = 32

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        c = config.spatial_channels
        self.conv1 = Conv2dLayer(rng, 3, 32, stride=2)
        self.conv2 = Conv2dLayer(rng, 32, 64, stride=2)
        self.conv3 = Conv2dLayer(rng, 64, c, stride=1)
        self.project = (LinearLayer(rng, c, config.flat_dim)
                        if config.form == FLAT else None)

    def __call__(self, frames: Tensor) -> Tensor:
        """(B,3,32,32) -> (B,D) flat or (B,C,6,6) spatial (3-d in, 3-d out)."""
        squeeze = frames.ndim == 3
        x = dc.reshape(frames, (1,) + tuple(frames.shape)) if squeeze else frames
        if x.shape[1:] != (3, self.INPUT_SIDE, self.INPUT_SIDE):
            raise dc.ShapeError(
                f"toy encoder expects (B,3,{self.INPUT_SIDE},{self.INPUT_SIDE}), got {x.shape}")
        h = dc.relu(self.conv1(x))
        h = dc.relu(self.conv2(h))
        h = dc.relu(self.conv3(h))
        if self.config.form == SPATIAL:
            out = dc.adaptive_avg_pool2d(h, (6, 6))
        else:
            pooled = dc.adaptive_avg_pool2d(h, (1, 1))
            flat = dc.reshape(pooled, (h.shape[0], h.shape[1]))
            out = self.project(flat)
        if squeeze:
            out = dc.reshape(out, tuple(out.shape[1:]))
        return out

    def params(self) -> dict[str, Tensor]:
        layers = [("conv1", self.conv1), ("conv2", self.conv2), ("conv3", self.conv3)]
        if self.project is not None:
            layers.append(("project", self.project))
        return _merge(*layers)


class SpatialAdapter:
    """Reduce 14x14 backbone maps to Cx6x6: 3x3 stride-2 conv (pad 1) to
    7x7, then a stride-1 2x2 average pool."""

    def __init__(self, rng, in_channels: int = 512, out_channels: int = 256):
        self.conv = Conv2dLayer(rng, in_channels, out_channels, stride=2, padding=1)

    def __call__(self, maps: Tensor) -> Tensor:
        side = maps.shape[-1]
        if maps.shape[-2:] != (14, 14):
            raise dc.ShapeError(f"spatial adapter expects 14x14 maps, got {maps.shape}")
        return dc.avg_pool2d(self.conv(maps), window=2, stride=1)

    def params(self) -> dict[str, Tensor]:
        return _merge(("conv", self.conv))


class FlattenProject:
    """Flatten Cx6x6 maps row-major and project to a flat embedding."""

    def __init__(self, rng, in_channels: int = 256, side: int = 6, out_dim: int = 512):
        self.in_channels = in_channels
        self.side = side
        self.linear = LinearLayer(rng, in_channels * side * side, out_dim)

    def __call__(self, maps: Tensor) -> Tensor:
        expected = (self.in_channels, self.side, self.side)
        squeeze = maps.ndim == 3
        if (tuple(maps.shape) if squeeze else tuple(maps.shape[1:])) != expected:
            raise dc.ShapeError(f"flatten_project expects {expected} maps, got {maps.shape}")
        batch = 1 if squeeze else maps.shape[0]
        flat = dc.reshape(maps, (batch, int(np.prod(expected))))
        out = self.linear(flat)
        return dc.reshape(out, (out.shape[1],)) if squeeze else out

    def params(self) -> dict[str, Tensor]:
        return _merge(("linear", self.linear))
