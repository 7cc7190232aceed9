"""Synthetic face-like clips with class-specific subtle motions.

Each subject gets its own smooth base texture on an oval face layout; each
class is defined by one localized, low-amplitude motion: a sub-pixel drift
of a face region or a faint intensity pulse.  Amplitudes are kept small so
motion magnification measurably helps downstream recognition.  Everything
is derived from seeded generators, so a fixed seed reproduces frames
bit-for-bit.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .manifest import DatasetManifest, ManifestEntry, save_manifest

# (region in fractional (y0, y1, x0, x1), motion kind, direction (dy, dx))
_MOTION_TEMPLATES = (
    ((0.18, 0.38, 0.25, 0.75), "drift", (-1.0, 0.0)),   # brow band raise
    ((0.62, 0.86, 0.30, 0.70), "drift", (0.0, 1.0)),    # mouth band pull
    ((0.34, 0.55, 0.18, 0.82), "pulse", (0.0, 0.0)),    # eye band brightening
    ((0.18, 0.38, 0.25, 0.75), "drift", (0.0, -1.0)),   # brow band shift
    ((0.62, 0.86, 0.30, 0.70), "pulse", (0.0, 0.0)),    # mouth band pulse
    ((0.34, 0.55, 0.18, 0.82), "drift", (1.0, 0.0)),    # eye band drop
)

DRIFT_AMPLITUDE = 0.35   # pixels at apex
PULSE_AMPLITUDE = 3.0    # intensity units at apex (8-bit scale)


def class_region(class_id: int, width: int, height: int) -> tuple[slice, slice]:
    """(rows, cols) bounding box of the region a class animates."""
    frac, _, _ = _MOTION_TEMPLATES[class_id % len(_MOTION_TEMPLATES)]
    y0, y1, x0, x1 = frac
    return (
        slice(int(y0 * height), int(np.ceil(y1 * height))),
        slice(int(x0 * width), int(np.ceil(x1 * width))),
    )


def _face_texture(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    noise = ndimage.gaussian_filter(rng.normal(size=(height, width)), sigma=2.5)
    noise = noise / max(noise.std(), 1e-12)
    tex = 120.0 + 30.0 * noise

    yy, xx = np.mgrid[0:height, 0:width]
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    face = ((yy - cy) / (0.46 * height)) ** 2 + ((xx - cx) / (0.38 * width)) ** 2 <= 1.0
    tex = np.where(face, tex + 40.0, tex - 25.0)

    # fixed eye and mouth marks keep the patches face-like
    for ex in (0.34, 0.66):
        eye = ((yy - 0.40 * height) ** 2 + (xx - ex * width) ** 2) <= (0.045 * width * height / 16)
        tex[eye] -= 45.0
    mouth = (np.abs(yy - 0.72 * height) < 0.03 * height) & (np.abs(xx - cx) < 0.16 * width)
    tex[mouth] -= 35.0
    return np.clip(tex, 5.0, 250.0)


def _region_mask(frac: tuple[float, float, float, float], width: int, height: int) -> np.ndarray:
    y0, y1, x0, x1 = frac
    box = np.zeros((height, width))
    box[int(y0 * height):int(y1 * height), int(x0 * width):int(x1 * width)] = 1.0
    mask = ndimage.gaussian_filter(box, sigma=1.5)
    mask *= box  # support stays exactly inside the declared region box
    mask /= mask.max()
    return mask


def render_clip(seed: int, subject: int, clip_index: int, class_id: int,
                width: int, height: int, length: int) -> np.ndarray:
    """Frames (t, h, w) uint8 for one clip; base texture is class-independent."""
    rng_base = np.random.default_rng([seed, 11, subject, clip_index])
    rng_motion = np.random.default_rng([seed, 13, subject, clip_index])
    base = _face_texture(rng_base, width, height)

    frac, kind, (dy, dx) = _MOTION_TEMPLATES[class_id % len(_MOTION_TEMPLATES)]
    mask = _region_mask(frac, width, height)
    jitter = 0.85 + 0.3 * rng_motion.random()
    phase = 0.9 + 0.2 * rng_motion.random()

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    env = np.sin(np.pi * np.arange(length) / (length - 1) * phase) ** 2
    frames = np.empty((length, height, width), dtype=np.uint8)
    for t in range(length):
        a = env[t] * jitter
        if kind == "drift":
            coords = [yy - a * DRIFT_AMPLITUDE * dy * mask,
                      xx - a * DRIFT_AMPLITUDE * dx * mask]
            frame = ndimage.map_coordinates(base, coords, order=1, mode="nearest")
        else:
            frame = base + a * PULSE_AMPLITUDE * mask
        frames[t] = np.clip(np.round(frame), 0, 255).astype(np.uint8)
    return frames


def synth_generate(out_dir, n_classes: int = 3, n_subjects: int = 8,
                   clips_per_subject: int = 4, size: tuple[int, int] = (64, 64),
                   length: int = 12, seed: int = 0, frame_rate: float = 30.0,
                   dataset_id: str = "synth") -> Path:
    """Write a synthetic dataset (frame directories plus manifest).

    Classes cycle over the clips of every subject, so each subject shows
    every class where counts allow.  Returns the manifest path.
    """
    if min(n_classes, n_subjects, clips_per_subject, length, *size) < 1:
        raise ConfigurationError("all synthetic dataset counts must be >= 1")
    width, height = size
    out_dir = Path(out_dir)
    (out_dir / "clips").mkdir(parents=True, exist_ok=True)

    entries = []
    for subject in range(n_subjects):
        for clip_index in range(clips_per_subject):
            class_id = clip_index % n_classes
            clip_name = f"s{subject:02d}_k{class_id}_c{clip_index:03d}"
            clip_dir = out_dir / "clips" / clip_name
            clip_dir.mkdir(parents=True, exist_ok=True)
            frames = render_clip(seed, subject, clip_index, class_id, width, height, length)
            for t in range(length):
                cv2.imwrite(str(clip_dir / f"frame_{t:04d}.png"), frames[t])
            entries.append(ManifestEntry(
                clip_path=f"clips/{clip_name}",
                subject_id=f"s{subject:02d}",
                label=f"class{class_id}",
                dataset_id=dataset_id,
            ))

    manifest = DatasetManifest(
        entries=entries,
        class_names=[f"class{k}" for k in range(n_classes)],
        frame_rate=frame_rate,
        dataset_id=dataset_id,
        root=out_dir,
    )
    return save_manifest(manifest, out_dir / "manifest.json")
