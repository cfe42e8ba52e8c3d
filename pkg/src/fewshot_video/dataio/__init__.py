"""File formats, synthetic data generation, and the preprocessing driver."""

from .fsvf import MalformedFileError, read_fsvf, write_fsvf
from .manifest import (
    DataError,
    ManifestRecord,
    SPLIT_NAMES,
    read_manifest,
    write_manifest,
)
from .prepare import (
    PrepareResult,
    load_video_frames,
    prepare,
    video_id_for,
    worker_count,
)
from .synth import (
    MOTION_CLASSES,
    SPLIT_CLASSES,
    STATIC_CLASSES,
    SyntheticSpec,
    generate_sample,
    synth_generate,
)

__all__ = [
    "DataError",
    "MOTION_CLASSES",
    "MalformedFileError",
    "ManifestRecord",
    "PrepareResult",
    "SPLIT_CLASSES",
    "SPLIT_NAMES",
    "STATIC_CLASSES",
    "SyntheticSpec",
    "generate_sample",
    "load_video_frames",
    "prepare",
    "read_fsvf",
    "read_manifest",
    "synth_generate",
    "video_id_for",
    "worker_count",
    "write_fsvf",
    "write_manifest",
]
