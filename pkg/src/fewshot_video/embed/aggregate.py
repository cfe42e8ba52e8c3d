"""Temporal aggregation: per-frame features to one fixed-length embedding.

Each aggregator owns its parameters; the two streams get independent
instances. All aggregators end by averaging over time, and a flat/spatial
form mismatch between features and aggregator is an error.
"""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .encoders import Conv2dLayer, uniform_param
from .features import FLAT, SPATIAL, StreamFeatures, VideoEmbedding


class FormError(ValueError):
    """Features arrived in a form the aggregator cannot consume."""


def _require_form(features: StreamFeatures, form: str, who: str):
    if features.form != form:
        raise FormError(f"{who} needs {form} features, got {features.form}")


class MeanAggregator:
    """Arithmetic mean over time; form-preserving and parameter-free."""

    form = None  # accepts either

    def aggregate(self, features: StreamFeatures) -> VideoEmbedding:
        pooled = dc.mean(features.data, axis=0)
        return VideoEmbedding(form=features.form, data=pooled)

    def params(self) -> dict[str, Tensor]:
        return {}


class LstmAggregator:
    """Single-layer LSTM over flat frame features, hidden states averaged.

    Gate order is (input, forget, cell, output). Weights are uniform in
    +/- 1/sqrt(fan_in); the forget-gate bias starts at 1 for stable
    training, other biases at 0.
    """

    form = FLAT

    def __init__(self, rng: np.random.Generator, input_dim: int, hidden_dim: int = 512):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.wx = uniform_param(rng, (input_dim, 4 * hidden_dim), input_dim)
        self.wh = uniform_param(rng, (hidden_dim, 4 * hidden_dim), hidden_dim)
        bias = np.zeros(4 * hidden_dim, dtype=np.float32)
        bias[hidden_dim:2 * hidden_dim] = 1.0
        self.bias = Tensor(bias, requires_grad=True)

    def _step(self, x_t: Tensor, h: Tensor, c: Tensor):
        hd = self.hidden_dim
        gates = dc.matmul(x_t, self.wx) + dc.matmul(h, self.wh) + self.bias
        i = dc.sigmoid(dc.narrow(gates, 1, 0, hd))
        f = dc.sigmoid(dc.narrow(gates, 1, hd, hd))
        g = dc.tanh(dc.narrow(gates, 1, 2 * hd, hd))
        o = dc.sigmoid(dc.narrow(gates, 1, 3 * hd, hd))
        c_new = f * c + i * g
        h_new = o * dc.tanh(c_new)
        return h_new, c_new

    def aggregate(self, features: StreamFeatures) -> VideoEmbedding:
        _require_form(features, FLAT, "LSTM aggregator")
        t_len, dim = features.data.shape
        if dim != self.input_dim:
            raise FormError(f"LSTM configured for dim {self.input_dim}, got {dim}")
        h = Tensor(np.zeros((1, self.hidden_dim), dtype=np.float32))
        c = Tensor(np.zeros((1, self.hidden_dim), dtype=np.float32))
        h_sum = None
        for t in range(t_len):
            x_t = dc.narrow(features.data, 0, t, 1)
            h, c = self._step(x_t, h, c)
            h_sum = h if h_sum is None else h_sum + h
        pooled = dc.reshape(h_sum * (1.0 / t_len), (self.hidden_dim,))
        return VideoEmbedding(form=FLAT, data=pooled)

    def params(self) -> dict[str, Tensor]:
        return {"wx": self.wx, "wh": self.wh, "b": self.bias}


class ConvLstmAggregator:
    """LSTM whose gate maps are 3x3 same-padded convolutions over feature
    maps; hidden channels equal input channels, hidden maps averaged."""

    form = SPATIAL

    def __init__(self, rng: np.random.Generator, channels: int):
        self.channels = channels
        fan_x = channels * 9
        self.wx = uniform_param(rng, (4 * channels, channels, 3, 3), fan_x)
        self.wh = uniform_param(rng, (4 * channels, channels, 3, 3), fan_x)
        bias = np.zeros(4 * channels, dtype=np.float32)
        bias[channels:2 * channels] = 1.0
        self.bias = Tensor(bias, requires_grad=True)

    def _step(self, x_t: Tensor, h: Tensor, c: Tensor):
        ch = self.channels
        gates = (dc.conv2d(x_t, self.wx, padding=1)
                 + dc.conv2d(h, self.wh, padding=1)
                 + dc.reshape(self.bias, (-1, 1, 1)))
        i = dc.sigmoid(dc.narrow(gates, 1, 0, ch))
        f = dc.sigmoid(dc.narrow(gates, 1, ch, ch))
        g = dc.tanh(dc.narrow(gates, 1, 2 * ch, ch))
        o = dc.sigmoid(dc.narrow(gates, 1, 3 * ch, ch))
        c_new = f * c + i * g
        h_new = o * dc.tanh(c_new)
        return h_new, c_new

    def aggregate(self, features: StreamFeatures) -> VideoEmbedding:
        _require_form(features, SPATIAL, "ConvLSTM aggregator")
        t_len, ch, height, width = features.data.shape
        if ch != self.channels:
            raise FormError(f"ConvLSTM configured for {self.channels} channels, got {ch}")
        h = Tensor(np.zeros((1, ch, height, width), dtype=np.float32))
        c = Tensor(np.zeros((1, ch, height, width), dtype=np.float32))
        h_sum = None
        for t in range(t_len):
            x_t = dc.narrow(features.data, 0, t, 1)
            h, c = self._step(x_t, h, c)
            h_sum = h if h_sum is None else h_sum + h
        pooled = dc.reshape(h_sum * (1.0 / t_len), (ch, height, width))
        return VideoEmbedding(form=SPATIAL, data=pooled)

    def params(self) -> dict[str, Tensor]:
        return {"wx": self.wx, "wh": self.wh, "b": self.bias}


class Conv3dAggregator:
    """Two 3x3x3 stride-1 convolutions with ReLU between, averaged over
    time, then adaptively pooled to the target form (D flat or Cx6x6)."""

    form = SPATIAL

    def __init__(self, rng: np.random.Generator, in_channels: int,
                 out_channels: int = 512, target_form: str = FLAT):
        if target_form not in (FLAT, SPATIAL):
            raise ValueError(f"unknown target form {target_form!r}")
        self.target_form = target_form
        self.out_channels = out_channels
        self.w1 = uniform_param(rng, (out_channels, in_channels, 3, 3, 3),
                                in_channels * 27)
        self.b1 = Tensor(np.zeros(out_channels, dtype=np.float32), requires_grad=True)
        self.w2 = uniform_param(rng, (out_channels, out_channels, 3, 3, 3),
                                out_channels * 27)
        self.b2 = Tensor(np.zeros(out_channels, dtype=np.float32), requires_grad=True)

    def aggregate(self, features: StreamFeatures) -> VideoEmbedding:
        _require_form(features, SPATIAL, "3d-conv aggregator")
        vol = dc.transpose(features.data, (1, 0, 2, 3))  # (C, T, H, W)
        h = dc.relu(dc.conv3d(vol, self.w1) + dc.reshape(self.b1, (-1, 1, 1, 1)))
        h = dc.conv3d(h, self.w2) + dc.reshape(self.b2, (-1, 1, 1, 1))
        maps = dc.mean(h, axis=1)  # (C_out, H, W)
        if self.target_form == SPATIAL:
            return VideoEmbedding(form=SPATIAL, data=dc.adaptive_avg_pool2d(maps, (6, 6)))
        pooled = dc.adaptive_avg_pool2d(maps, (1, 1))
        return VideoEmbedding(form=FLAT, data=dc.reshape(pooled, (self.out_channels,)))

    def params(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def concat_streams(rgb: VideoEmbedding, flow: VideoEmbedding) -> VideoEmbedding:
    """Join stream embeddings: vector concat (flat) or channel concat
    (spatial); the rgb block always precedes the flow block."""
    if rgb.form != flow.form:
        raise FormError(f"cannot concat {rgb.form} with {flow.form}")
    return VideoEmbedding(form=rgb.form, data=dc.concat([rgb.data, flow.data], axis=0))


AGGREGATOR_NAMES = ("mean", "lstm", "convlstm", "conv3d")
