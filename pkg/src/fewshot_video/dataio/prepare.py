"""Preprocessing driver: raw videos in, per-video feature files out."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..flow import (
    PreprocConfig,
    TooShortError,
    farneback_flow,
    preprocess_flow,
    preprocess_rgb,
)
from .fsvf import read_fsvf, write_fsvf
from .manifest import DataError, ManifestRecord, read_manifest

PREPARED_HEADER = "video_id,class_name,split_name,frames"


def worker_count() -> int:
    """Available parallelism, capped by the FSE_WORKERS environment variable."""
    available = os.cpu_count() or 1
    cap = os.environ.get("FSE_WORKERS")
    if cap:
        try:
            return max(1, min(available, int(cap)))
        except ValueError as e:
            raise DataError(f"FSE_WORKERS must be an integer, got {cap!r}") from e
    return available


def video_id_for(relative_path: str) -> str:
    stem = relative_path.rsplit(".", 1)[0] if relative_path.endswith(".fsvf") else relative_path
    return stem.replace("/", "__")


def load_video_frames(path: Path) -> list[np.ndarray]:
    """Frames as (H, W, 3) float arrays in [0, 1].

    Accepts either an FSVF raw-frame file (T, 3, H, W) or a directory of
    numbered image files whose lexicographic order is temporal order.
    """
    if path.is_dir():
        from PIL import Image

        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
        if not files:
            raise DataError(f"no image files in {path}")
        frames = []
        for f in files:
            img = np.asarray(Image.open(f).convert("RGB"), dtype=np.float32) / 255.0
            frames.append(img)
        return frames
    if path.suffix == ".fsvf":
        arr = read_fsvf(path)
        if arr.ndim != 4 or arr.shape[1] != 3:
            raise DataError(f"{path}: raw video files must be (T, 3, H, W)")
        return [np.ascontiguousarray(frame.transpose(1, 2, 0)) for frame in arr]
    raise DataError(f"unsupported video source: {path}")


@dataclass
class PrepareResult:
    prepared: list[tuple[str, str, str, int]]  # video_id, class, split, frames
    skipped: list[tuple[str, str]]  # video_id, reason


def prepare(manifest_path, config: PreprocConfig, out_dir,
            flow_fn=farneback_flow, workers: int | None = None) -> PrepareResult:
    """Run the two-stream pipeline over every manifest entry.

    Videos shorter than the frame minimum are recorded in the skip log;
    other per-video failures are logged the same way and do not abort the
    run. Output files are written atomically, so a rerun with identical
    inputs produces identical files.
    """
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    records = read_manifest(manifest_path)
    root = manifest_path.parent
    n_workers = workers if workers is not None else worker_count()

    def process(rec: ManifestRecord):
        vid = video_id_for(rec.relative_path)
        frames = load_video_frames(root / rec.relative_path)
        rgb = preprocess_rgb(frames, config)
        flow = preprocess_flow(frames, config, flow_fn)
        write_fsvf(out_dir / "rgb" / f"{vid}.fsvf", rgb)
        write_fsvf(out_dir / "flow" / f"{vid}.fsvf", flow)
        return vid, rgb.shape[0]

    prepared, skipped = [], []
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [(rec, pool.submit(process, rec)) for rec in records]
        for rec, fut in futures:
            vid = video_id_for(rec.relative_path)
            try:
                vid, n_frames = fut.result()
                prepared.append((vid, rec.class_name, rec.split_name, n_frames))
            except TooShortError as e:
                skipped.append((vid, f"too_short: {e}"))
            except (DataError, OSError, ValueError) as e:
                skipped.append((vid, f"error: {e}"))

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "prepared.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(PREPARED_HEADER + "\n")
        for row in prepared:
            fh.write(",".join(str(v) for v in row) + "\n")
    with open(out_dir / "skipped.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("video_id,reason\n")
        for vid, reason in skipped:
            fh.write(f"{vid},{reason}\n")
    meta = {
        "target_fps": config.target_fps,
        "native_fps": config.native_fps,
        "resize_to": config.resize_to,
        "flow_clamp": config.flow_clamp,
        "min_frames": config.min_frames,
    }
    with open(out_dir / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    return PrepareResult(prepared, skipped)
