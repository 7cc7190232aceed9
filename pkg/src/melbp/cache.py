"""On-disk feature records: header line plus little-endian float32 payload.

A record file starts with one UTF-8 header line of the form

    dims=<n> layout=<token> config_hash=<hex>\n

followed by ``n`` little-endian 32-bit floats.  The cache directory keeps a
sidecar JSON manifest mapping each clip id to its current config hash, so a
configuration change invalidates stale records instead of serving them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embed import WpcaModel
from .errors import IngestionError

_SIDECAR = "cache_manifest.json"
_HEADER_RE = re.compile(r"^dims=(\d+) layout=(\S+) config_hash=(\S+)$")


def write_record(path, values: np.ndarray, layout: str, config_hash: str) -> None:
    values = np.asarray(values)
    header = f"dims={values.size} layout={layout} config_hash={config_hash}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(values.astype("<f4").tobytes())


def read_record(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("utf-8").rstrip("\n")
        m = _HEADER_RE.match(header)
        if not m:
            raise IngestionError(f"malformed record header in {path}: {header!r}")
        dims = int(m.group(1))
        payload = np.frombuffer(fh.read(), dtype="<f4")
    if payload.size != dims:
        raise IngestionError(
            f"record {path} declares {dims} values but holds {payload.size}"
        )
    meta = {"dims": dims, "layout": m.group(2), "config_hash": m.group(3)}
    return meta, payload


def _safe_name(clip_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", clip_id)


@dataclass
class FeatureCache:
    """Per-(clip, config) feature records under one directory."""

    directory: Path

    def __post_init__(self):
        self.directory = Path(self.directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _sidecar_path(self) -> Path:
        return self.directory / _SIDECAR

    def _load_sidecar(self) -> dict:
        p = self._sidecar_path()
        if p.exists():
            return json.loads(p.read_text())
        return {}

    def _save_sidecar(self, doc: dict) -> None:
        self._sidecar_path().write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def _record_path(self, key: str, config_hash: str) -> Path:
        return self.directory / f"{_safe_name(key)}__{config_hash}.feat"

    def load(self, key: str, config_hash: str) -> np.ndarray | None:
        """Cached values for one (clip, config) record, or None on miss or stale hash."""
        entry = self._load_sidecar().get(key)
        if entry is None or entry.get("config_hash") != config_hash:
            return None
        path = self._record_path(key, config_hash)
        if not path.exists():
            return None
        meta, values = read_record(path)
        if meta["config_hash"] != config_hash:
            return None
        return values

    def store(self, key: str, config_hash: str, values: np.ndarray, layout: str) -> None:
        doc = self._load_sidecar()
        old = doc.get(key)
        if old and old.get("config_hash") != config_hash:
            stale = self._record_path(key, old["config_hash"])
            stale.unlink(missing_ok=True)
        write_record(self._record_path(key, config_hash), values, layout, config_hash)
        doc[key] = {"config_hash": config_hash, "layout": layout, "dims": int(np.size(values))}
        self._save_sidecar(doc)


def save_wpca_model(path, model: WpcaModel) -> None:
    """Serialize a fitted embedding in the record container (for fold resumption)."""
    d, k = model.basis.shape
    flat = np.concatenate([
        model.mean, model.basis.ravel(), model.scales, model.eigenvalues,
    ])
    write_record(path, flat, layout=f"wpca:d={d}:k={k}", config_hash="0")


def load_wpca_model(path) -> WpcaModel:
    meta, flat = read_record(path)
    m = re.match(r"^wpca:d=(\d+):k=(\d+)$", meta["layout"])
    if not m:
        raise IngestionError(f"not a serialized embedding: {meta['layout']!r}")
    d, k = int(m.group(1)), int(m.group(2))
    flat = flat.astype(np.float64)
    mean, rest = flat[:d], flat[d:]
    basis, rest = rest[:d * k].reshape(d, k), rest[d * k:]
    scales, eigenvalues = rest[:k], rest[k:]
    return WpcaModel(mean=mean, basis=basis, scales=scales, eigenvalues=eigenvalues)
