"""Frame sampling, dense optical flow, and two-stream preprocessing."""

from .farneback import FarnebackParams, farneback_flow, poly_expansion
from .preprocess import (
    PreprocConfig,
    TooShortError,
    flow_pairs,
    normalize_flow,
    preprocess_flow,
    preprocess_rgb,
    resize_bilinear,
    sample_frames,
    sample_indices,
    standardize_rgb,
    to_grayscale,
)

__all__ = [
    "FarnebackParams",
    "PreprocConfig",
    "TooShortError",
    "farneback_flow",
    "flow_pairs",
    "normalize_flow",
    "poly_expansion",
    "preprocess_flow",
    "preprocess_rgb",
    "resize_bilinear",
    "sample_frames",
    "sample_indices",
    "standardize_rgb",
    "to_grayscale",
]
