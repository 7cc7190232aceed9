"""Per-clip descriptor histograms over three orthogonal plane families.

A video clip is held as a 3-D intensity volume indexed ``(x, y, t)``.  Each
descriptor scans one or more plane families:

- ``XY``: one spatial slice per frame,
- ``XT``: one horizontal spatiotemporal slice per row ``y``,
- ``YT``: one vertical spatiotemporal slice per column ``x``.

Within every slice, all centers whose full sampling neighborhood fits
inside the slice produce one binary code.  Codes are mapped through the
configured encoding table and pooled into a block grid laid over the whole
volume, so codes from different plane families fall into the same spatial
blocks at the same ``(x, y, t)`` location.  Each per-plane per-block
histogram is normalized to sum one (blocks that received no codes stay
all-zero), and segments are concatenated in (plane, block, bin) order.

The scan is vectorized: for a fixed ring offset, the bilinear weights are
identical at every center, so each neighbor image is a blend of four
shifted views of the volume.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .codes import EncodingScheme, NeighborSpec, build_encoding_table, ring_offsets
from .errors import BorderViolationError, ConfigurationError

DESCRIPTOR_KINDS = ("lbp", "adlbp", "rdlbp")

PLANE_ORDER = ("XY", "XT", "YT")
# (first, second) volume axes spanned by each plane family; the first axis
# takes the cosine offset, the second the negated sine offset.
PLANE_AXES = {"XY": (0, 1), "XT": (0, 2), "YT": (1, 2)}
AXIS_NAMES = ("width", "height", "length")

NAMED_PLANE_SETS = {
    "TOP": ("XY", "XT", "YT"),
    "XYOT": ("XT", "YT"),
    "XOT": ("XT",),
    "YOT": ("YT",),
    "XY": ("XY",),
}


@dataclass(frozen=True)
class PlaneSet:
    """Non-empty subset of the three plane families, in canonical order."""

    planes: tuple[str, ...]

    def __post_init__(self):
        if not self.planes:
            raise ConfigurationError("plane set must not be empty")
        for p in self.planes:
            if p not in PLANE_ORDER:
                raise ConfigurationError(f"unknown plane {p!r}, expected one of {PLANE_ORDER}")
        ordered = tuple(p for p in PLANE_ORDER if p in self.planes)
        if ordered != self.planes:
            object.__setattr__(self, "planes", ordered)

    @classmethod
    def from_spec(cls, spec) -> "PlaneSet":
        """Accept a combo name (``TOP``, ``XYOT``, ...), a plane name, or an iterable."""
        if isinstance(spec, PlaneSet):
            return spec
        if isinstance(spec, str):
            key = spec.upper()
            if key in NAMED_PLANE_SETS:
                return cls(NAMED_PLANE_SETS[key])
            return cls((key,))
        return cls(tuple(spec))

    @property
    def name(self) -> str:
        for name, planes in NAMED_PLANE_SETS.items():
            if planes == self.planes:
                return name
        return "+".join(self.planes)

    def __len__(self) -> int:
        return len(self.planes)

    def __iter__(self):
        return iter(self.planes)


@dataclass(frozen=True)
class BlockGrid:
    """Non-overlapping m x q x l partition of the volume index space.

    When an axis extent does not divide evenly, the remainder pixels go to
    the trailing blocks.
    """

    m: int
    q: int
    l: int

    def __post_init__(self):
        if min(self.m, self.q, self.l) < 1:
            raise ConfigurationError(f"block counts must be >= 1, got {(self.m, self.q, self.l)}")

    @property
    def count(self) -> int:
        return self.m * self.q * self.l

    def axis_ids(self, extent: int, blocks: int) -> np.ndarray:
        """Coordinate -> block index map for one axis."""
        base, rem = divmod(extent, blocks)
        sizes = np.full(blocks, base, dtype=np.int64)
        if rem:
            sizes[blocks - rem:] += 1
        return np.repeat(np.arange(blocks, dtype=np.int64), sizes)


@dataclass
class VideoVolume:
    """3-D grayscale clip ``data[x, y, t]`` plus per-clip metadata."""

    data: np.ndarray
    clip_id: str = ""
    subject_id: str = ""
    label: str = ""
    dataset_id: str = ""
    frame_rate: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ConfigurationError(f"volume data must be 3-D (x, y, t), got {self.data.shape}")

    @property
    def width(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def length(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray, frame_rate: float | None = None) -> "VideoVolume":
        return VideoVolume(
            data=data,
            clip_id=self.clip_id,
            subject_id=self.subject_id,
            label=self.label,
            dataset_id=self.dataset_id,
            frame_rate=self.frame_rate if frame_rate is None else frame_rate,
        )


@dataclass(frozen=True)
class DescriptorConfig:
    """Everything that determines one histogram feature.

    ``kind`` picks the binary code, ``spec`` its sampling geometry,
    ``encoding`` the bin mapping, ``planes`` which plane families are
    scanned, and ``blocks`` the pooling grid.
    """

    kind: str
    spec: NeighborSpec
    encoding: str = "full"
    planes: PlaneSet = field(default_factory=lambda: PlaneSet.from_spec("TOP"))
    blocks: BlockGrid = field(default_factory=lambda: BlockGrid(8, 8, 2))

    def __post_init__(self):
        if self.kind not in DESCRIPTOR_KINDS:
            raise ConfigurationError(
                f"unknown descriptor kind {self.kind!r}, expected one of {DESCRIPTOR_KINDS}"
            )
        object.__setattr__(self, "planes", PlaneSet.from_spec(self.planes))
        # validates encoding kind and p eagerly
        EncodingScheme(self.encoding, self.spec.p)

    @property
    def scheme(self) -> EncodingScheme:
        return EncodingScheme(self.encoding, self.spec.p)

    @property
    def n_bins(self) -> int:
        return self.scheme.n_bins

    @property
    def dim(self) -> int:
        return len(self.planes) * self.blocks.count * self.n_bins

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "r": self.spec.r,
            "p": self.spec.p,
            "delta": self.spec.delta,
            "encoding": self.encoding,
            "planes": self.planes.name,
            "blocks": [self.blocks.m, self.blocks.q, self.blocks.l],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DescriptorConfig":
        return cls(
            kind=d["kind"],
            spec=NeighborSpec(r=d["r"], p=d["p"], delta=d.get("delta", 0.0)),
            encoding=d.get("encoding", "full"),
            planes=PlaneSet.from_spec(d.get("planes", "TOP")),
            blocks=BlockGrid(*d.get("blocks", [8, 8, 2])),
        )

    @property
    def layout(self) -> str:
        b = self.blocks
        return (
            f"{self.kind}:r={self.spec.r}:p={self.spec.p}:d={self.spec.delta}"
            f":{self.encoding}:{self.planes.name}:{b.m}x{b.q}x{b.l}:bins={self.n_bins}"
        )

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class DescriptorHistogram:
    """Flat histogram feature in (plane, block, bin) order."""

    values: np.ndarray
    kind: str
    planes: tuple[str, ...]
    blocks: BlockGrid
    n_bins: int
    layout: str = ""

    def segments(self) -> np.ndarray:
        """View as (n_planes, n_blocks, n_bins)."""
        return self.values.reshape(len(self.planes), self.blocks.count, self.n_bins)

    def plane_segment(self, plane: str) -> np.ndarray:
        """Flat slice belonging to one plane family."""
        i = self.planes.index(plane)
        seg = self.blocks.count * self.n_bins
        return self.values[i * seg:(i + 1) * seg]


def slice_planes(volume: VideoVolume, planes) -> Iterator[tuple[str, int, np.ndarray]]:
    """Yield ``(plane, fixed_index, 2-D slice)`` for every slice in the set.

    XY slices fix ``t``, XT slices fix ``y`` and span ``(x, t)``, YT slices
    fix ``x`` and span ``(y, t)``.
    """
    planes = PlaneSet.from_spec(planes)
    data = volume.data
    for plane in planes:
        if plane == "XY":
            for t in range(volume.length):
                yield plane, t, data[:, :, t]
        elif plane == "XT":
            for y in range(volume.height):
                yield plane, y, data[:, y, :]
        else:
            for x in range(volume.width):
                yield plane, x, data[x, :, :]


def _check_margins(volume: VideoVolume, config: DescriptorConfig) -> None:
    margin = config.spec.margin
    needed = 2 * margin + 1
    axes = set()
    for plane in config.planes:
        axes.update(PLANE_AXES[plane])
    for axis in sorted(axes):
        if volume.data.shape[axis] < needed:
            raise BorderViolationError(
                f"{AXIS_NAMES[axis]}={volume.data.shape[axis]} too small for radius "
                f"{config.spec.r} (needs >= {needed})"
            )


def _shift_sample(data: np.ndarray, axes: tuple[int, int], d1: float, d2: float,
                  margin: int) -> np.ndarray:
    """Neighbor intensities at a constant (d1, d2) offset on two axes.

    Returns values over all centers at least ``margin`` pixels from the
    borders of the two plane axes (full extent on the third axis).  Because
    the offset is constant, the four bilinear corners are plain shifted
    views blended with scalar weights; integer offsets reduce to one exact
    view.
    """
    i1, i2 = math.floor(d1), math.floor(d2)
    w1, w2 = d1 - i1, d2 - i2

    def view(o1: int, o2: int) -> np.ndarray:
        sl = [slice(None)] * 3
        n1, n2 = data.shape[axes[0]], data.shape[axes[1]]
        sl[axes[0]] = slice(margin + o1, n1 - margin + o1)
        sl[axes[1]] = slice(margin + o2, n2 - margin + o2)
        return data[tuple(sl)]

    out = (1 - w1) * (1 - w2) * view(i1, i2)
    if w2 > 0:
        out += (1 - w1) * w2 * view(i1, i2 + 1)
    if w1 > 0:
        out += w1 * (1 - w2) * view(i1 + 1, i2)
        if w2 > 0:
            out += w1 * w2 * view(i1 + 1, i2 + 1)
    return out


def _code_volume(data: np.ndarray, plane: str, config: DescriptorConfig) -> np.ndarray:
    """Integer raw-code array over the plane's valid centers."""
    axes = PLANE_AXES[plane]
    spec = config.spec
    margin = spec.margin
    outer = ring_offsets(spec.r, spec.p)

    if config.kind == "lbp":
        sl = [slice(None)] * 3
        for a in axes:
            sl[a] = slice(margin, data.shape[a] - margin)
        center = data[tuple(sl)]
        code = np.zeros(center.shape, dtype=np.int64)
        for n, (d1, d2) in enumerate(outer):
            nb = _shift_sample(data, axes, d1, d2, margin)
            code += (nb >= center).astype(np.int64) << n
        return code

    if config.kind == "adlbp":
        rings = [_shift_sample(data, axes, d1, d2, margin) for d1, d2 in outer]
        code = np.zeros(rings[0].shape, dtype=np.int64)
        for n in range(spec.p):
            code += (rings[(n + 1) % spec.p] >= rings[n]).astype(np.int64) << n
        return code

    inner = ring_offsets(spec.inner_radius, spec.p)
    code = None
    for n in range(spec.p):
        o = _shift_sample(data, axes, *outer[n], margin)
        i = _shift_sample(data, axes, *inner[n], margin)
        bit = (o >= i).astype(np.int64) << n
        code = bit if code is None else code + bit
    return code


def extract_descriptor(volume: VideoVolume, config: DescriptorConfig) -> DescriptorHistogram:
    """Scan the volume and pool encoded codes into block histograms.

    Raises :class:`BorderViolationError` naming the offending axis when the
    volume is too small for the configured radius.
    """
    _check_margins(volume, config)
    data = volume.data
    table = build_encoding_table(config.scheme)
    n_bins = config.n_bins
    grid = config.blocks
    n_blocks = grid.count
    margin = config.spec.margin

    axis_ids = (
        grid.axis_ids(volume.width, grid.m),
        grid.axis_ids(volume.height, grid.q),
        grid.axis_ids(volume.length, grid.l),
    )

    out = np.zeros((len(config.planes), n_blocks * n_bins))
    for pi, plane in enumerate(config.planes):
        codes = _code_volume(data, plane, config)
        binned = table[codes]

        plane_axes = PLANE_AXES[plane]
        ids = []
        for axis in range(3):
            v = axis_ids[axis]
            if axis in plane_axes:
                v = v[margin:data.shape[axis] - margin]
            shape = [1, 1, 1]
            shape[axis] = len(v)
            ids.append(v.reshape(shape))
        block_linear = (ids[0] * grid.q + ids[1]) * grid.l + ids[2]

        counts = np.bincount(
            (block_linear * n_bins + binned).ravel(), minlength=n_blocks * n_bins
        ).astype(np.float64)
        seg = counts.reshape(n_blocks, n_bins)
        totals = seg.sum(axis=1, keepdims=True)
        np.divide(seg, totals, out=seg, where=totals > 0)
        out[pi] = seg.ravel()

    return DescriptorHistogram(
        values=out.ravel(),
        kind=config.kind,
        planes=config.planes.planes,
        blocks=grid,
        n_bins=n_bins,
        layout=config.layout,
    )


def fuse_concat(parts: Sequence) -> np.ndarray:
    """Concatenate histograms or embedded vectors into one feature vector."""
    if not len(parts):
        raise ConfigurationError("nothing to fuse: empty part list")
    arrays = [p.values if isinstance(p, DescriptorHistogram) else np.asarray(p) for p in parts]
    return np.concatenate(arrays)
