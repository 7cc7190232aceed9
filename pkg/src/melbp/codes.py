"""Binary micro-texture codes on a 2-D slice.

Three complementary codes are computed from circular neighborhoods around a
center pixel:

- ``lbp_code``: thresholds each ring sample against the center value
  (first-order, center-vs-neighbor differences).
- ``adlbp_code``: thresholds consecutive ring samples against each other
  (second-order differences along the angular direction).
- ``rdlbp_code``: thresholds radially aligned samples on two concentric
  rings (second-order differences along the radial direction).

All three share the sign convention ``s(x) = 1 for x >= 0, else 0`` and pack
bit ``n`` (the sample at angle ``2*pi*n/p``) into ``2**n``, so a raw code
lies in ``[0, 2**p)``.  Raw codes can then be mapped through an encoding
table (``full``, ``u2``, ``ri``, ``riu2``) before histogramming.

Sampling geometry: neighbor ``n`` of a ring with radius ``r`` sits at
``(x_c + r*cos(2*pi*n/p), y_c - r*sin(2*pi*n/p))`` where the slice is
indexed ``[x, y]`` and angles increase counterclockwise with the second
axis pointing down.  Fractional positions are read by bilinear
interpolation; positions that land on the integer lattice are read exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import BorderViolationError, ConfigurationError

ENCODING_KINDS = ("full", "u2", "ri", "riu2")

# Offsets this close to an integer are snapped so lattice-aligned samples
# (e.g. r=1, p=4) are exact array reads instead of interpolations.
_SNAP_EPS = 1e-9


@dataclass(frozen=True)
class NeighborSpec:
    """Sampling geometry for one binary code.

    ``r`` is the outer ring radius in pixels, ``p`` the number of equally
    spaced samples on the ring, and ``delta`` the radial gap between the
    outer and inner rings (used by the radial-difference code only; the
    inner ring has radius ``r - delta`` and is sampled at the same angles).
    """

    r: float
    p: int
    delta: float = 0.0

    def __post_init__(self):
        if self.r <= 0:
            raise ConfigurationError(f"ring radius must be positive, got {self.r}")
        if self.p < 2:
            raise ConfigurationError(f"neighbor count must be >= 2, got {self.p}")
        if not 0 <= self.delta <= self.r:
            raise ConfigurationError(
                f"radial gap must satisfy 0 <= delta <= r, got delta={self.delta} r={self.r}"
            )

    @property
    def margin(self) -> int:
        """Pixels a center must keep from every slice border."""
        return int(math.ceil(self.r))

    @property
    def inner_radius(self) -> float:
        return self.r - self.delta


@dataclass(frozen=True)
class EncodingScheme:
    """Mapping of raw codes to histogram bins.

    ``full`` keeps all ``2**p`` codes as separate bins.  ``u2`` gives every
    uniform code (at most two 0/1 transitions around the cyclic bit string)
    its own bin and merges all nonuniform codes into one.  ``ri`` merges
    each cyclic-rotation orbit into one bin (represented by the orbit's
    minimum value).  ``riu2`` keeps the ``p + 1`` uniform rotation orbits
    (indexed by their number of set bits) plus one nonuniform bin.
    """

    kind: str
    p: int

    def __post_init__(self):
        if self.kind not in ENCODING_KINDS:
            raise ConfigurationError(
                f"unknown encoding kind {self.kind!r}, expected one of {ENCODING_KINDS}"
            )
        if not 2 <= self.p <= 16:
            raise ConfigurationError(f"encoding tables support 2 <= p <= 16, got p={self.p}")

    @property
    def n_bins(self) -> int:
        return int(build_encoding_table(self).max()) + 1


def ring_offsets(radius: float, p: int) -> np.ndarray:
    """(p, 2) array of (dx, dy) sample offsets for one ring.

    Near-integer components are snapped so exact lattice positions stay
    exact despite trigonometric rounding.
    """
    angles = 2.0 * np.pi * np.arange(p) / p
    offs = np.stack([radius * np.cos(angles), -radius * np.sin(angles)], axis=1)
    rounded = np.round(offs)
    snap = np.abs(offs - rounded) < _SNAP_EPS
    offs[snap] = rounded[snap]
    return offs


def _bilinear(plane: np.ndarray, fx: float, fy: float) -> float:
    nx, ny = plane.shape
    x0 = int(math.floor(fx))
    y0 = int(math.floor(fy))
    wx = fx - x0
    wy = fy - y0
    x1 = x0 + 1 if wx > 0 else x0
    y1 = y0 + 1 if wy > 0 else y0
    if x0 < 0 or y0 < 0 or x1 > nx - 1 or y1 > ny - 1:
        raise BorderViolationError(f"sample ({fx}, {fy}) outside {plane.shape} slice")
    return float(
        plane[x0, y0] * (1 - wx) * (1 - wy)
        + plane[x0, y1] * (1 - wx) * wy
        + plane[x1, y0] * wx * (1 - wy)
        + plane[x1, y1] * wx * wy
    )


def sample_ring(plane: np.ndarray, center: tuple[float, float], r: float, p: int) -> np.ndarray:
    """Sample ``p`` ring values around ``center`` on a 2-D slice.

    The center must be at least ``r`` pixels inside the slice on every
    side, otherwise a :class:`BorderViolationError` is raised.  Returns the
    interpolated intensities in angular order (index 0 on the positive
    first axis).
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ConfigurationError(f"expected a 2-D slice, got shape {plane.shape}")
    cx, cy = center
    nx, ny = plane.shape
    if cx - r < 0 or cy - r < 0 or cx + r > nx - 1 or cy + r > ny - 1:
        raise BorderViolationError(
            f"center {center} with radius {r} leaves the {nx}x{ny} slice"
        )
    offs = ring_offsets(r, p)
    return np.array([_bilinear(plane, cx + dx, cy + dy) for dx, dy in offs])


def lbp_code(center_value: float, ring: Sequence[float]) -> int:
    """Raw center-difference code: bit ``n`` is ``s(ring[n] - center)``."""
    code = 0
    for n, v in enumerate(ring):
        if v >= center_value:
            code |= 1 << n
    return code


def adlbp_code(ring: Sequence[float]) -> int:
    """Raw angular-difference code: bit ``n`` is ``s(ring[n+1 mod p] - ring[n])``.

    The ring is cyclic, so the last bit compares the first sample against
    the last one.
    """
    p = len(ring)
    code = 0
    for n in range(p):
        if ring[(n + 1) % p] >= ring[n]:
            code |= 1 << n
    return code


def rdlbp_code(outer: Sequence[float], inner: Sequence[float]) -> int:
    """Raw radial-difference code: bit ``n`` is ``s(outer[n] - inner[n])``.

    ``outer`` and ``inner`` must hold samples taken at identical angles on
    the two concentric rings.
    """
    if len(outer) != len(inner):
        raise ConfigurationError(
            f"outer and inner rings differ in length: {len(outer)} vs {len(inner)}"
        )
    code = 0
    for n, (o, i) in enumerate(zip(outer, inner)):
        if o >= i:
            code |= 1 << n
    return code


def _cyclic_transitions(code: int, p: int) -> int:
    t = 0
    for n in range(p):
        if ((code >> n) & 1) != ((code >> ((n + 1) % p)) & 1):
            t += 1
    return t


def _min_rotation(code: int, p: int) -> int:
    mask = (1 << p) - 1
    best = code
    rot = code
    for _ in range(p - 1):
        rot = ((rot >> 1) | ((rot & 1) << (p - 1))) & mask
        if rot < best:
            best = rot
    return best


@lru_cache(maxsize=None)
def _table(kind: str, p: int) -> np.ndarray:
    n_codes = 1 << p
    codes = np.arange(n_codes)
    if kind == "full":
        table = codes.astype(np.int32)
    elif kind == "u2":
        uniform = np.array([_cyclic_transitions(c, p) <= 2 for c in range(n_codes)])
        n_uniform = int(uniform.sum())
        table = np.full(n_codes, n_uniform, dtype=np.int32)
        table[uniform] = np.arange(n_uniform, dtype=np.int32)
    elif kind == "ri":
        reps = np.array([_min_rotation(c, p) for c in range(n_codes)])
        distinct = np.unique(reps)
        table = np.searchsorted(distinct, reps).astype(np.int32)
    else:  # riu2
        bits = (codes[:, None] >> np.arange(p)) & 1
        ones = bits.sum(axis=1)
        uniform = np.array([_cyclic_transitions(c, p) <= 2 for c in range(n_codes)])
        table = np.where(uniform, ones, p + 1).astype(np.int32)
    table.setflags(write=False)
    return table


def build_encoding_table(scheme: EncodingScheme) -> np.ndarray:
    """Bin-index lookup table of length ``2**p`` for one encoding scheme.

    The table is a total map onto ``[0, n_bins)``; it is cached and
    read-only, so it can be shared freely across workers.
    """
    return _table(scheme.kind, scheme.p)
