"""Dataset manifests and frame-sequence ingestion.

Clips are directories of 8-bit frame images (PNG/JPEG/BMP) whose filenames
carry a zero-padded temporal index.  A manifest is a JSON document listing
clip directories with subject/label metadata; it stands in for dataset
loaders, since micro-expression corpora cannot be redistributed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import IngestionError
from .preprocess import to_gray_resize
from .volume import VideoVolume

_INDEX_RE = re.compile(r"(\d+)")


@dataclass
class ManifestEntry:
    clip_path: str
    subject_id: str
    label: str
    dataset_id: str = ""

    def to_dict(self) -> dict:
        return {
            "clip_path": self.clip_path,
            "subject_id": self.subject_id,
            "label": self.label,
            "dataset_id": self.dataset_id,
        }


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    class_names: list[str]
    frame_rate: float = 30.0
    dataset_id: str = ""
    root: Path = field(default_factory=Path)

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "frame_rate": self.frame_rate,
            "dataset_id": self.dataset_id,
            "entries": [e.to_dict() for e in self.entries],
        }


def save_manifest(manifest: DatasetManifest, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return path


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"cannot parse manifest {path}: {exc}") from exc

    entries = []
    class_names = doc.get("class_names", [])
    dataset_id = doc.get("dataset_id", "")
    for row in doc.get("entries", []):
        entry = ManifestEntry(
            clip_path=row["clip_path"],
            subject_id=str(row["subject_id"]),
            label=str(row["label"]),
            dataset_id=row.get("dataset_id", dataset_id),
        )
        if entry.label not in class_names:
            raise IngestionError(
                f"label {entry.label!r} of clip {entry.clip_path!r} not in class_names"
            )
        if not (path.parent / entry.clip_path).exists():
            raise IngestionError(f"clip directory missing: {entry.clip_path}")
        entries.append(entry)
    return DatasetManifest(
        entries=entries,
        class_names=class_names,
        frame_rate=float(doc.get("frame_rate", 30.0)),
        dataset_id=dataset_id,
        root=path.parent,
    )


def _frame_files(clip_dir: Path) -> list[Path]:
    files = sorted(
        f for f in clip_dir.iterdir()
        if f.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")
    )
    if not files:
        raise IngestionError(f"clip {clip_dir} holds no frame images")
    indices = []
    for f in files:
        m = _INDEX_RE.findall(f.stem)
        if not m:
            raise IngestionError(f"frame {f.name} of clip {clip_dir} carries no index")
        indices.append(int(m[-1]))
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise IngestionError(
            f"frame indices of clip {clip_dir} are not strictly increasing "
            "in filename order (check zero padding)"
        )
    return files


def load_clip(clip_dir, resize: tuple[int, int] | None = None, **metadata) -> VideoVolume:
    """Decode one frame directory into a grayscale volume."""
    clip_dir = Path(clip_dir)
    frames = []
    for f in _frame_files(clip_dir):
        img = cv2.imread(str(f), cv2.IMREAD_UNCHANGED)
        if img is None:
            raise IngestionError(f"cannot decode frame {f} of clip {clip_dir}")
        if img.ndim == 3:
            img = img[:, :, :3][:, :, ::-1]  # BGR -> RGB
        frames.append(np.asarray(img))
    return to_gray_resize(frames, size=resize, **metadata)


def ingest(manifest: DatasetManifest, resize: tuple[int, int] | None = None) -> list[VideoVolume]:
    """Load every manifest clip, ordered by clip id (the clip path).

    The ordering makes downstream features independent of manifest row
    order.
    """
    volumes = []
    for entry in sorted(manifest.entries, key=lambda e: e.clip_path):
        volumes.append(load_clip(
            manifest.root / entry.clip_path,
            resize=resize,
            clip_id=entry.clip_path,
            subject_id=entry.subject_id,
            label=entry.label,
            dataset_id=entry.dataset_id,
            frame_rate=manifest.frame_rate,
        ))
    return volumes
