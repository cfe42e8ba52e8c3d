"""Frame sampling and the two-stream preprocessing pipeline.

Frames are float arrays in [0, 1], shaped (H, W) or (H, W, C). All
functions are pure; outputs are plain float32 numpy arrays ready to be
written to feature files or wrapped as tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class TooShortError(ValueError):
    """Video yields fewer sampled frames than the configured minimum."""


@dataclass
class PreprocConfig:
    """Knobs for the frame/flow preprocessing stage.

    `native_fps` is the rate of the ingested frame sequences; manifests
    carry no per-video rate, so it is configured globally.
    """

    target_fps: float = 1.0
    native_fps: float = 1.0
    resize_to: int = 224
    flow_clamp: float = 20.0
    min_frames: int = 5
    rgb_mean: tuple = (0.485, 0.456, 0.406)
    rgb_std: tuple = (0.229, 0.224, 0.225)
    flow_mean: tuple = (0.5, 0.5, 0.5)
    flow_std: tuple = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if self.target_fps <= 0:
            raise ValueError("target_fps must be positive")
        if self.native_fps < self.target_fps:
            raise ValueError("native_fps must be at least target_fps")
        if self.flow_clamp <= 0:
            raise ValueError("flow_clamp must be positive")
        if self.min_frames < 1:
            raise ValueError("min_frames must be at least 1")


def sample_indices(n_frames: int, native_fps: float, target_fps: float) -> list[int]:
    """Indices of the frames kept when downsampling to `target_fps`."""
    if native_fps < target_fps:
        raise ValueError(f"native fps {native_fps} below target {target_fps}")
    duration = n_frames / native_fps
    count = int(np.floor(duration * target_fps))
    step = native_fps / target_fps
    indices = []
    for i in range(count):
        idx = int(round(i * step))
        if idx < n_frames:
            indices.append(idx)
    return indices


def sample_frames(frames, native_fps: float, target_fps: float,
                  min_frames: int = 5) -> list[np.ndarray]:
    """Keep roughly one frame per 1/target_fps seconds.

    Raises TooShortError when fewer than `min_frames` frames survive, so
    callers can discard the video.
    """
    indices = sample_indices(len(frames), native_fps, target_fps)
    if len(indices) < min_frames:
        raise TooShortError(
            f"{len(indices)} frames at {target_fps} fps, need {min_frames}")
    return [frames[i] for i in indices]


def flow_pairs(n_frames: int, native_fps: float, target_fps: float) -> list[tuple[int, int]]:
    """(prev, next) native-frame index pairs, one per downsampled anchor.

    Each anchor pairs with the next consecutive native frame; an anchor on
    the final frame falls back to the preceding one.
    """
    pairs = []
    for anchor in sample_indices(n_frames, native_fps, target_fps):
        if anchor + 1 < n_frames:
            pairs.append((anchor, anchor + 1))
        else:
            pairs.append((anchor - 1, anchor))
    return pairs


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    if frame.ndim == 2:
        return frame.astype(np.float64)
    if frame.ndim == 3 and frame.shape[2] == 3:
        return frame.astype(np.float64) @ LUMA_WEIGHTS
    if frame.ndim == 3 and frame.shape[2] == 1:
        return frame[:, :, 0].astype(np.float64)
    raise ValueError(f"expected (H,W) or (H,W,C) frame, got {frame.shape}")


def resize_bilinear(frame: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize to side x side with half-pixel-centre sampling."""
    h, w = frame.shape[:2]
    if (h, w) == (side, side):
        return frame.astype(np.float32, copy=True)
    out = _resize_axis(frame.astype(np.float64), side, axis=0)
    out = _resize_axis(out, side, axis=1)
    return out.astype(np.float32)


def _resize_axis(arr: np.ndarray, target: int, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    coords = (np.arange(target) + 0.5) * (n / target) - 0.5
    coords = np.clip(coords, 0.0, n - 1.0)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    frac = coords - lo
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, hi, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = target
    frac = frac.reshape(shape)
    return a * (1.0 - frac) + b * frac


def standardize_rgb(frames: np.ndarray, mean, std) -> np.ndarray:
    """Per-channel (x - mean) / std; (T,H,W,3) in, (T,3,H,W) float32 out."""
    frames = np.asarray(frames, dtype=np.float32)
    single = frames.ndim == 3
    if single:
        frames = frames[None]
    mean = np.asarray(mean, dtype=np.float32).reshape(1, 1, 1, 3)
    std = np.asarray(std, dtype=np.float32).reshape(1, 1, 1, 3)
    if np.any(std == 0):
        raise ValueError("standardization std must be non-zero")
    out = ((frames - mean) / std).transpose(0, 3, 1, 2)
    return out[0] if single else out


def normalize_flow(flow: np.ndarray, clamp: float, mean, std) -> np.ndarray:
    """Clamp to [-clamp, clamp], rescale to [0, 1], pad a zero third
    channel, then standardize all three channels; returns (3, H, W)."""
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"expected (H,W,2) flow, got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow field contains non-finite values")
    mean = np.asarray(mean, dtype=np.float32).reshape(3, 1, 1)
    std = np.asarray(std, dtype=np.float32).reshape(3, 1, 1)
    if np.any(std == 0):
        raise ValueError("standardization std must be non-zero")
    clipped = np.clip(flow.astype(np.float32), -clamp, clamp)
    unit = (clipped + clamp) / (2.0 * clamp)
    h, w = flow.shape[:2]
    stacked = np.concatenate(
        [unit.transpose(2, 0, 1), np.zeros((1, h, w), dtype=np.float32)], axis=0)
    return (stacked - mean) / std


def preprocess_rgb(frames, config: PreprocConfig) -> np.ndarray:
    """Full RGB path: sample, resize, standardize; (T,3,S,S) float32."""
    kept = sample_frames(frames, config.native_fps, config.target_fps,
                         config.min_frames)
    resized = np.stack([resize_bilinear(f, config.resize_to) for f in kept])
    return standardize_rgb(resized, config.rgb_mean, config.rgb_std)


def preprocess_flow(frames, config: PreprocConfig, flow_fn) -> np.ndarray:
    """Full flow path: pair, resize, grayscale, flow, normalize.

    `flow_fn(prev_gray, next_gray) -> (H,W,2)` computes dense flow, so the
    estimator stays injectable for tests.
    """
    pairs = flow_pairs(len(frames), config.native_fps, config.target_fps)
    if len(pairs) < config.min_frames:
        raise TooShortError(
            f"{len(pairs)} flow pairs at {config.target_fps} fps, "
            f"need {config.min_frames}")
    out = []
    for prev_idx, next_idx in pairs:
        prev = to_grayscale(resize_bilinear(frames[prev_idx], config.resize_to))
        nxt = to_grayscale(resize_bilinear(frames[next_idx], config.resize_to))
        flow = flow_fn(prev, nxt)
        out.append(normalize_flow(flow, config.flow_clamp,
                                  config.flow_mean, config.flow_std))
    return np.stack(out)
