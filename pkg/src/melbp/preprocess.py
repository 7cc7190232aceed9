"""Video conditioning: grayscale/resize, motion magnification, resampling.

``magnify`` amplifies subtle intensity motion: each frame is decomposed
into a Gaussian-pyramid difference stack, every level's per-pixel time
series is band-pass filtered with the zero-phase (squared-magnitude)
response of a second-order Butterworth filter, scaled by a per-level
amplification factor, and the amplified deltas are collapsed back and
added to the original volume.  Levels whose representative spatial
wavelength falls below the ``lambda_c`` cutoff get a linearly reduced
factor.

``tim_interpolate`` resamples a clip to a fixed frame count by embedding
frames on a smooth curve: the curve coordinates are path-graph Laplacian
eigenvectors (cosine modes in time), a least-squares linear map takes curve
coordinates back to pixel space, and uniformly spaced curve positions are
mapped through it to synthesize output frames.  With ``n`` source frames
the ``n - 1`` modes plus the mean reproduce the sources exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np
from scipy import signal

from .errors import ConfigurationError, IngestionError, PreprocessingError
from .volume import VideoVolume

BT601_WEIGHTS = (0.299, 0.587, 0.114)

FREQ_UNITS = ("hz", "per_frame")


@dataclass(frozen=True)
class EvmParams:
    """Magnification settings.

    ``units`` declares how the band edges are meant: ``"hz"`` reads them in
    hertz against the clip's frame rate, ``"per_frame"`` in cycles per
    frame (sampling rate 1).  The field is mandatory so a band can never be
    silently misread.
    """

    alpha: float
    omega_low: float
    omega_high: float
    units: str
    lambda_c: float = 16.0
    levels: int = 3

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigurationError(f"amplification factor must be >= 0, got {self.alpha}")
        if self.units not in FREQ_UNITS:
            raise ConfigurationError(f"units must be one of {FREQ_UNITS}, got {self.units!r}")
        if not 0 < self.omega_low < self.omega_high:
            raise ConfigurationError(
                f"band edges must satisfy 0 < low < high, got ({self.omega_low}, {self.omega_high})"
            )
        if self.lambda_c <= 0:
            raise ConfigurationError(f"spatial cutoff must be positive, got {self.lambda_c}")
        if self.levels < 1:
            raise ConfigurationError(f"pyramid depth must be >= 1, got {self.levels}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "omega_low": self.omega_low,
            "omega_high": self.omega_high,
            "units": self.units,
            "lambda_c": self.lambda_c,
            "levels": self.levels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvmParams":
        return cls(**d)


@dataclass(frozen=True)
class TimParams:
    """Target frame count for temporal resampling."""

    target_length: int = 10

    def __post_init__(self):
        if self.target_length < 2:
            raise ConfigurationError(f"target length must be >= 2, got {self.target_length}")

    def to_dict(self) -> dict:
        return {"target_length": self.target_length}

    @classmethod
    def from_dict(cls, d: dict) -> "TimParams":
        return cls(**d)


def _resize_bilinear(img: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with endpoint-aligned coordinates.

    Output pixel ``i`` samples the source at ``i * (S - 1) / (D - 1)``, so
    corners map to corners and a same-size resize is the identity.
    """
    src_a, src_b = img.shape
    dst_a, dst_b = out_shape
    if (src_a, src_b) == (dst_a, dst_b):
        return img.copy()

    def coords(dst: int, src: int) -> np.ndarray:
        if dst == 1:
            return np.zeros(1)
        return np.arange(dst) * (src - 1) / (dst - 1)

    fa = coords(dst_a, src_a)
    fb = coords(dst_b, src_b)
    a0 = np.floor(fa).astype(int)
    b0 = np.floor(fb).astype(int)
    wa = fa - a0
    wb = fb - b0
    a1 = np.minimum(a0 + 1, src_a - 1)
    b1 = np.minimum(b0 + 1, src_b - 1)
    wa_c = wa[:, None]
    wb_c = wb[None, :]
    return (
        img[np.ix_(a0, b0)] * (1 - wa_c) * (1 - wb_c)
        + img[np.ix_(a0, b1)] * (1 - wa_c) * wb_c
        + img[np.ix_(a1, b0)] * wa_c * (1 - wb_c)
        + img[np.ix_(a1, b1)] * wa_c * wb_c
    )


def to_gray_resize(frames: Sequence[np.ndarray], size: tuple[int, int] | None = None,
                   **metadata) -> VideoVolume:
    """Convert frames to grayscale, optionally resize, assemble a volume.

    Frames are ``(h, w)`` grayscale or ``(h, w, 3)`` RGB arrays of uniform
    shape; RGB is reduced with the BT.601 luminance weights.  ``size`` is
    ``(width, height)``.  Intensities are widened to float64 and kept on
    their input scale (0..255 for 8-bit sources).
    """
    if not len(frames):
        raise IngestionError("empty frame sequence")
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise IngestionError(f"frames have mixed dimensions: {sorted(shapes)}")

    grays = []
    for f in frames:
        f = np.asarray(f, dtype=np.float64)
        if f.ndim == 3:
            if f.shape[2] != 3:
                raise IngestionError(f"expected 3 channels, got {f.shape[2]}")
            f = f @ np.array(BT601_WEIGHTS)
        elif f.ndim != 2:
            raise IngestionError(f"frame has unsupported shape {f.shape}")
        if size is not None:
            w, h = size
            f = _resize_bilinear(f, (h, w))
        grays.append(f)

    stack = np.stack(grays)  # (t, y, x)
    return VideoVolume(data=np.transpose(stack, (2, 1, 0)), **metadata)


def _band_filter(params: EvmParams, fs: float) -> tuple[np.ndarray, np.ndarray]:
    nyquist = fs / 2.0
    if params.omega_high >= nyquist:
        raise ConfigurationError(
            f"upper band edge {params.omega_high} must be below Nyquist {nyquist}"
        )
    return signal.butter(1, [params.omega_low, params.omega_high], btype="bandpass", fs=fs)


def _temporal_bandpass(stack: np.ndarray, b: np.ndarray, a: np.ndarray, fs: float) -> np.ndarray:
    """Zero-phase band-pass along axis 0 with the filter's squared magnitude.

    Equivalent to running the second-order filter forward and backward, but
    realized in the DFT domain: the narrow band edges give the IIR a settle
    time far longer than a clip, so time-domain edge transients would swamp
    the response on short sequences.
    """
    n = stack.shape[0]
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    _, h = signal.freqz(b, a, worN=freqs, fs=fs)
    gain = (np.abs(h) ** 2).reshape((-1,) + (1,) * (stack.ndim - 1))
    return np.fft.irfft(np.fft.rfft(stack, axis=0) * gain, n=n, axis=0)


def _level_alpha(alpha: float, wavelength: float, lambda_c: float) -> float:
    """Linearly ramp the factor down for wavelengths under the cutoff."""
    if wavelength >= lambda_c:
        return alpha
    return max(0.0, (1.0 + alpha) * wavelength / lambda_c - 1.0)


def _pyr_up(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return cv2.pyrUp(img, dstsize=(shape[1], shape[0]))


def magnify(volume: VideoVolume, params: EvmParams) -> VideoVolume:
    """Amplify band-limited temporal variation, preserving shape.

    With ``alpha = 0`` the input is returned unchanged; a temporally
    constant clip passes through to numerical precision because the
    band-pass response at DC is zero.
    """
    n = volume.length
    if n < 4:
        raise PreprocessingError(f"magnification needs >= 4 frames, got {n}")
    if params.units == "hz":
        if volume.frame_rate is None:
            raise ConfigurationError("band edges in hz require the clip frame rate")
        fs = float(volume.frame_rate)
    else:
        fs = 1.0
    b, a = _band_filter(params, fs)

    # halving below 4 px per side stops adding usable levels
    min_side = min(volume.width, volume.height)
    levels = min(params.levels, max(1, int(np.floor(np.log2(min_side / 4.0)))))

    frames = [volume.data[:, :, t] for t in range(n)]
    pyramids = []
    for f in frames:
        levels_list = [f]
        for _ in range(levels):
            levels_list.append(cv2.pyrDown(levels_list[-1]))
        pyramids.append(levels_list)

    # difference bands plus the low-pass residual, finest first
    band_stacks = []
    for lev in range(levels + 1):
        stack = []
        for t in range(n):
            g = pyramids[t][lev]
            if lev < levels:
                g = g - _pyr_up(pyramids[t][lev + 1], g.shape)
            stack.append(g)
        band_stacks.append(np.stack(stack))  # (t, a, b)

    diag = float(np.hypot(volume.width, volume.height))
    deltas = []
    for lev, stack in enumerate(band_stacks):
        wavelength = diag / (2 ** (levels - lev))
        lev_alpha = _level_alpha(params.alpha, wavelength, params.lambda_c)
        if lev_alpha == 0.0:
            deltas.append(np.zeros_like(stack))
            continue
        deltas.append(lev_alpha * _temporal_bandpass(stack, b, a, fs))

    # collapse the amplified deltas back to full resolution
    acc = deltas[-1]
    for lev in range(levels - 1, -1, -1):
        target = deltas[lev]
        acc = np.stack([_pyr_up(acc[t], target.shape[1:]) for t in range(n)]) + target

    out = volume.data + np.transpose(acc, (1, 2, 0))
    return volume.with_data(out)


def _curve_basis(n_source: int, positions: np.ndarray) -> np.ndarray:
    """Sampled curve coordinates: cosine modes ``k = 1 .. n_source - 1``.

    ``positions`` live on [0, 1]; position ``i / (n_source - 1)`` evaluates
    to the ``i``-th entry of the corresponding path-graph Laplacian
    eigenvector, so the sampled basis is orthogonal on the source grid.
    """
    k = np.arange(1, n_source)
    u = np.asarray(positions)[:, None]
    return np.cos(np.pi * k[None, :] * (u * (n_source - 1) + 0.5) / n_source)


def tim_interpolate(volume: VideoVolume, params: TimParams) -> VideoVolume:
    """Resample a clip to ``target_length`` frames along the embedding curve."""
    n = volume.length
    if n < 2:
        raise PreprocessingError(f"temporal interpolation needs >= 2 frames, got {n}")
    target = params.target_length

    flat = volume.data.reshape(-1, n).T  # (n, pixels)
    mean = flat.mean(axis=0)
    basis = _curve_basis(n, np.linspace(0.0, 1.0, n))
    coef, *_ = np.linalg.lstsq(basis, flat - mean, rcond=None)

    out_basis = _curve_basis(n, np.linspace(0.0, 1.0, target))
    synth = mean + out_basis @ coef  # (target, pixels)
    data = synth.T.reshape(volume.width, volume.height, target)

    rate = volume.frame_rate
    if rate is not None and n > 1:
        rate = rate * (target - 1) / (n - 1)
    return volume.with_data(data, frame_rate=rate)
