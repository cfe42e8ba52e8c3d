"""Per-frame feature sequences and aggregated video embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataio.fsvf import read_fsvf
from ..diffcore import Tensor

FLAT = "flat"
SPATIAL = "spatial"
STREAMS = ("rgb", "flow")


@dataclass
class StreamFeatures:
    """Per-frame features for one stream: (T, D) flat or (T, C, H, W) spatial."""

    form: str
    data: Tensor
    stream: str = "rgb"

    def __post_init__(self):
        if self.form not in (FLAT, SPATIAL):
            raise ValueError(f"unknown form {self.form!r}")
        expected = 2 if self.form == FLAT else 4
        if self.data.ndim != expected:
            raise ValueError(
                f"{self.form} features must have rank {expected}, got {self.data.ndim}")
        if self.data.shape[0] < 1:
            raise ValueError("features need at least one frame")
        if self.stream not in STREAMS:
            raise ValueError(f"unknown stream {self.stream!r}")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


@dataclass
class VideoEmbedding:
    """Fixed-length video representation: (D,) flat or (C, H, W) spatial."""

    form: str
    data: Tensor

    def __post_init__(self):
        expected = 1 if self.form == FLAT else 3
        if self.data.ndim != expected:
            raise ValueError(
                f"{self.form} embedding must have rank {expected}, got {self.data.ndim}")


@dataclass
class EncoderConfig:
    """Encoder selection: precomputed feature files or the trainable toy CNN."""

    mode: str = "toy"
    form: str = FLAT
    flat_dim: int = 512
    spatial_channels: int = 256

    def __post_init__(self):
        if self.mode not in ("toy", "precomputed"):
            raise ValueError(f"unknown encoder mode {self.mode!r}")
        if self.form not in (FLAT, SPATIAL):
            raise ValueError(f"unknown form {self.form!r}")
        if self.flat_dim < 1 or self.spatial_channels < 1:
            raise ValueError("encoder dims must be positive")


def load_precomputed(path, stream: str = "rgb",
                     expected_dim: int | None = None) -> StreamFeatures:
    """Read an FSVF feature file; the header rank selects the form."""
    arr = read_fsvf(path)
    form = FLAT if arr.ndim == 2 else SPATIAL
    if expected_dim is not None:
        got = arr.shape[1]
        if got != expected_dim:
            raise ValueError(
                f"{path}: feature dim {got} does not match configured {expected_dim}")
    return StreamFeatures(form=form, data=Tensor(arr), stream=stream)
