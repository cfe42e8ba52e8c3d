"""Synthetic motion dataset: moving textured squares over noisy ground.

Twenty classes: eight compass directions x two speeds (16 motion classes,
square texture randomized per sample so appearance carries no class
signal) plus four static classes distinguished only by the square's
procedural texture. Motion classes are therefore separable through the
flow stream, static classes through the RGB stream, which gives the
stream ablations something to measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fsvf import write_fsvf
from .manifest import ManifestRecord, write_manifest

_DIRECTIONS = {
    "n": (0, -1), "ne": (1, -1), "e": (1, 0), "se": (1, 1),
    "s": (0, 1), "sw": (-1, 1), "w": (-1, 0), "nw": (-1, -1),
}

MOTION_CLASSES = [
    (f"move_{d}_s{s}", d, s) for d in _DIRECTIONS for s in (1, 2)
]
STATIC_CLASSES = ["static_checker", "static_hstripes", "static_vstripes", "static_dots"]

# Fixed class-to-split assignment. Each split mixes motion and static
# classes, and the test split's motion classes have pairwise distinct
# directions so held-out episodes are solvable from flow.
SPLIT_CLASSES = {
    "meta_train": [
        "move_n_s1", "move_n_s2", "move_ne_s1", "move_e_s1", "move_e_s2",
        "move_se_s2", "move_s_s1", "move_sw_s1",
        "static_checker", "static_hstripes",
    ],
    "meta_val": [
        "move_ne_s2", "move_se_s1", "move_nw_s1", "move_w_s1",
        "static_vstripes",
    ],
    "meta_test_general": [
        "move_sw_s2", "move_w_s2", "move_nw_s2", "move_s_s2",
        "static_dots",
    ],
    "meta_test_challenge": [],
}


@dataclass
class SyntheticSpec:
    samples_per_class: int = 60
    frame_size: int = 32
    square_size: int = 10
    min_frames: int = 5
    max_frames: int = 10
    noise: float = 0.05

    def __post_init__(self):
        travel = 2 * (self.max_frames - 1)  # fastest class, per axis
        if self.frame_size < self.square_size + travel:
            raise ValueError("frame too small for the fastest trajectory")
        if self.min_frames < 2 or self.max_frames < self.min_frames:
            raise ValueError("bad frame count range")


def _static_texture(name: str, size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    if name == "static_checker":
        pattern = ((xs // 2 + ys // 2) % 2).astype(np.float64)
    elif name == "static_hstripes":
        pattern = ((ys // 2) % 2).astype(np.float64)
    elif name == "static_vstripes":
        pattern = ((xs // 2) % 2).astype(np.float64)
    elif name == "static_dots":
        pattern = (((xs % 4) == 1) & ((ys % 4) == 1)).astype(np.float64)
    else:
        raise ValueError(f"unknown static class {name}")
    return 0.25 + 0.7 * pattern


def _render_video(rng: np.random.Generator, spec: SyntheticSpec,
                  direction: tuple[int, int], speed: int,
                  texture: np.ndarray) -> np.ndarray:
    """Frames (T, 3, S, S) in [0, 1] for one sample."""
    size = spec.frame_size
    sq = spec.square_size
    n_frames = int(rng.integers(spec.min_frames, spec.max_frames + 1))
    background = 0.3 * rng.random((size, size))

    max_pos = size - sq
    dx = direction[0] * speed * (n_frames - 1)
    dy = direction[1] * speed * (n_frames - 1)
    x0 = int(rng.integers(max(0, -dx), max_pos - max(0, dx) + 1))
    y0 = int(rng.integers(max(0, -dy), max_pos - max(0, dy) + 1))

    frames = np.empty((n_frames, 3, size, size), dtype=np.float32)
    for t in range(n_frames):
        px = x0 + direction[0] * speed * t
        py = y0 + direction[1] * speed * t
        canvas = background.copy()
        canvas[py:py + sq, px:px + sq] = texture
        canvas = canvas + rng.normal(0.0, spec.noise, (size, size))
        frames[t] = np.clip(canvas, 0.0, 1.0)[None, :, :]
    return frames


def generate_sample(rng: np.random.Generator, spec: SyntheticSpec,
                    class_name: str) -> np.ndarray:
    if class_name in STATIC_CLASSES:
        texture = _static_texture(class_name, spec.square_size)
        return _render_video(rng, spec, (0, 0), 0, texture)
    for name, d, s in MOTION_CLASSES:
        if name == class_name:
            texture = 0.3 + 0.7 * rng.random((spec.square_size, spec.square_size))
            return _render_video(rng, spec, _DIRECTIONS[d], s, texture)
    raise ValueError(f"unknown class {class_name}")


def synth_generate(spec: SyntheticSpec, seed: int, out_dir) -> Path:
    """Write the dataset and manifest under `out_dir`; returns the
    manifest path. Deterministic given `seed`."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    records = []
    for split, classes in SPLIT_CLASSES.items():
        for class_name in classes:
            for i in range(spec.samples_per_class):
                rel = f"videos/{class_name}/{class_name}_{i:04d}.fsvf"
                frames = generate_sample(rng, spec, class_name)
                write_fsvf(out_dir / rel, frames)
                records.append(ManifestRecord(rel, class_name, split))
    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest_path, records)
    return manifest_path
