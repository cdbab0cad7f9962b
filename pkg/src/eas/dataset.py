"""Manifest + feature-archive loading.

A manifest is JSON-lines; each record names a feature tensor as
"<archive path>#<entry name>" (relative to the manifest's directory),
gives the clip duration in seconds, and the reference transcript.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .archive import load_archive
from .errors import DataError
from .metrics import normalize_text


@dataclass
class TaskExample:
    example_id: str
    features: np.ndarray          # [T_mel, n_mel] float32
    duration_seconds: float
    reference_text: str
    reference_words: list[str]


def load_manifest(manifest_path, limit: int | None = None) -> list[TaskExample]:
    path = Path(manifest_path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    archives: dict[Path, dict[str, np.ndarray]] = {}
    examples: list[TaskExample] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        for field in ("features", "duration_seconds", "reference_text"):
            if field not in rec:
                raise DataError(f"{path}:{lineno}: missing field {field!r}")
        duration = rec["duration_seconds"]
        if not isinstance(duration, (int, float)) or duration <= 0:
            raise DataError(f"{path}:{lineno}: duration_seconds must be > 0")
        ref = str(rec["features"])
        if "#" not in ref:
            raise DataError(f"{path}:{lineno}: features must be 'archive#entry', got {ref!r}")
        archive_rel, entry = ref.split("#", 1)
        archive_path = (path.parent / archive_rel).resolve()
        if archive_path not in archives:
            archives[archive_path] = load_archive(archive_path)
        table = archives[archive_path]
        if entry not in table:
            raise DataError(f"{path}:{lineno}: entry {entry!r} not in {archive_rel}")
        feats = table[entry]
        if feats.ndim != 2:
            raise DataError(f"{path}:{lineno}: features {entry!r} must be rank 2")
        examples.append(TaskExample(
            example_id=entry,
            features=feats,
            duration_seconds=float(duration),
            reference_text=str(rec["reference_text"]),
            reference_words=normalize_text(str(rec["reference_text"])),
        ))
        if limit is not None and len(examples) >= limit:
            break
    if not examples:
        raise DataError(f"{path}: manifest contains no examples")
    return examples
