"""Dataset manifest: one CSV row per video, assigning class and split."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

SPLIT_NAMES = ("meta_train", "meta_val", "meta_test_general", "meta_test_challenge")
HEADER = ["relative_path", "class_name", "split_name"]


class DataError(ValueError):
    """Manifest or dataset files violate the format contract."""


@dataclass(frozen=True)
class ManifestRecord:
    relative_path: str
    class_name: str
    split_name: str


def write_manifest(path, records: list[ManifestRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for rec in records:
            writer.writerow([rec.relative_path, rec.class_name, rec.split_name])


def read_manifest(path, check_paths: bool = True) -> list[ManifestRecord]:
    """Read and validate a manifest.

    Checks the header row, split names, cross-split class disjointness,
    and (optionally) that every referenced path exists next to the
    manifest file.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != HEADER:
        raise DataError(f"{path}: first row must be {','.join(HEADER)}")
    records = []
    class_split: dict[str, str] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        rel, cls, split = row
        if split not in SPLIT_NAMES:
            raise DataError(f"{path}:{lineno}: unknown split {split!r}")
        seen = class_split.setdefault(cls, split)
        if seen != split:
            raise DataError(
                f"{path}:{lineno}: class {cls!r} appears in both {seen} and {split}")
        if check_paths and not (path.parent / rel).exists():
            raise DataError(f"{path}:{lineno}: missing file {rel}")
        records.append(ManifestRecord(rel, cls, split))
    return records
