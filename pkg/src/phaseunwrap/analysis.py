"""Spectral peaks, quadratic-interpolation frequency refinement, regions of
influence and onset-frame detection."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.ndimage import maximum_filter1d, median_filter, uniform_filter1d

from .stft import StftConfig, window_transform

DEFAULT_FLOOR_DB = -40.0
DEFAULT_SENSITIVITY = 1.5


@dataclass(frozen=True)
class Peak:
    channel: int
    magnitude: float
    freq: float
    refined: bool = True


@dataclass(frozen=True)
class Region:
    """Inclusive bin interval ``[lo, hi]`` unwrapped with ``peak``'s frequency.

    ``peak`` is None for the null region of a frame without peaks.
    """

    peak: Peak | None
    lo: int
    hi: int


@dataclass(frozen=True)
class OnsetSet:
    frames: tuple[int, ...] = ()
    segments: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "_lookup", frozenset(self.frames))

    def __contains__(self, t):
        return t in self._lookup

    def __len__(self):
        return len(self.frames)

    def segment_of(self, t):
        """Inclusive ``(first, last)`` frame range of the segment holding ``t``."""
        for first, last in self.segments:
            if first <= t <= last:
                return first, last
        return None

    @classmethod
    def from_frames(cls, frames):
        frames = sorted(set(int(t) for t in frames))
        segments = []
        for t in frames:
            if segments and t == segments[-1][1] + 1:
                segments[-1][1] = t
            else:
                segments.append([t, t])
        return cls(tuple(frames), tuple((a, b) for a, b in segments))


class QifftEstimate(NamedTuple):
    freq: float
    amplitude: float
    refined: bool


def find_peaks(mag_frame, floor_db: float = DEFAULT_FLOOR_DB) -> list[Peak]:
    """Strict interior local maxima above ``floor_db`` relative to the frame
    maximum, in channel order. Frequencies are left at the bin centre."""
    mag = np.asarray(mag_frame, dtype=float)
    if floor_db >= 0:
        raise ValueError("floor_db must be negative")
    top = mag.max(initial=0.0)
    if top <= 0:
        return []
    fft_len = 2 * (len(mag) - 1)
    inner = mag[1:-1]
    is_peak = (inner > mag[:-2]) & (inner > mag[2:]) & (inner > top * 10 ** (floor_db / 20))
    return [Peak(int(k), float(mag[k]), k / fft_len, refined=False)
            for k in np.flatnonzero(is_peak) + 1]


class BiasTable:
    """Maps the raw log-parabola offset to the true sub-bin offset for a
    given analysis window, tabulated from the window's own transform."""

    def __init__(self, window, fft_len, points=4001):
        d = np.linspace(-0.5, 0.5, points)
        offsets = np.stack([(j - d) / fft_len for j in (-1, 0, 1)])
        logs = np.log(np.abs(window_transform(window, offsets.ravel()))).reshape(3, -1)
        alpha, beta, gamma = logs
        raw = 0.5 * (alpha - gamma) / (alpha - 2 * beta + gamma)
        if np.any(np.diff(raw) <= 0):
            raise ValueError("parabola offset is not monotone for this window")
        self.raw = raw
        self.true = d

    def __call__(self, delta):
        return np.interp(delta, self.raw, self.true)


@lru_cache(maxsize=8)
def bias_table(cfg: StftConfig) -> BiasTable:
    return BiasTable(cfg.window, cfg.fft_len)


def parabolic_offset(a, b, c):
    """Vertex offset of the parabola through ``(-1, a), (0, b), (1, c)``.

    Returns None when the curvature is not strictly negative.
    """
    curvature = a - 2 * b + c
    if not curvature < 0:
        return None
    return min(0.5, max(-0.5, 0.5 * (a - c) / curvature))


def qifft_refine(mag_frame, k_p: int, correction: BiasTable | None = None) -> QifftEstimate:
    """Refine the frequency of the peak at bin ``k_p`` by fitting a parabola
    to the log-magnitudes of bins ``k_p-1, k_p, k_p+1``.

    With a ``correction`` table the parabola offset is mapped through the
    window-specific bias curve. Zero magnitudes or a non-concave triple fall
    back to the bin centre with ``refined=False``.
    """
    mag = np.asarray(mag_frame, dtype=float)
    fft_len = 2 * (len(mag) - 1)
    if not 1 <= k_p <= len(mag) - 2:
        raise ValueError("peak channel must be interior")
    trio = mag[k_p - 1:k_p + 2]
    if np.any(trio <= 0):
        return QifftEstimate(k_p / fft_len, float(mag[k_p]), False)
    a, b, c = np.log(trio)
    delta = parabolic_offset(a, b, c)
    if delta is None:
        return QifftEstimate(k_p / fft_len, float(mag[k_p]), False)
    amplitude = float(np.exp(b - 0.25 * (a - c) * delta))
    if correction is not None:
        delta = float(correction(delta))
    return QifftEstimate((k_p + delta) / fft_len, amplitude, True)


def refine_peaks(mag_frame, peaks, correction=None) -> list[Peak]:
    out = []
    for p in peaks:
        est = qifft_refine(mag_frame, p.channel, correction)
        out.append(Peak(p.channel, est.amplitude, est.freq, est.refined))
    return out


def _half_up(x):
    return int(np.floor(x + 0.5))


def regions_of_influence(peaks, n_bins: int) -> list[Region]:
    """Partition ``[0, n_bins-1]`` among peaks with amplitude-weighted
    boundaries ``(A_p k_{p+1} + A_{p+1} k_p) / (A_p + A_{p+1})``.

    The boundary is rounded half-up and closes the lower region; it is kept
    strictly below the upper peak so every region contains its own peak.
    """
    peaks = list(peaks)
    if not peaks:
        return [Region(None, 0, n_bins - 1)]
    channels = [p.channel for p in peaks]
    if any(b <= a for a, b in zip(channels, channels[1:])):
        raise ValueError("peaks must have strictly increasing channels")
    regions = []
    lo = 0
    for p, q in zip(peaks, peaks[1:]):
        edge = (p.magnitude * q.channel + q.magnitude * p.channel) / (p.magnitude + q.magnitude)
        hi = min(max(_half_up(edge), p.channel), q.channel - 1)
        regions.append(Region(p, lo, hi))
        lo = hi + 1
    regions.append(Region(peaks[-1], lo, n_bins - 1))
    return regions


def analyze_frame(mag_frame, cfg: StftConfig, floor_db=DEFAULT_FLOOR_DB,
                  corrected=True) -> list[Region]:
    """Peaks, refined frequencies and regions for one magnitude frame."""
    correction = bias_table(cfg) if corrected else None
    peaks = refine_peaks(mag_frame, find_peaks(mag_frame, floor_db), correction)
    return regions_of_influence(peaks, len(mag_frame))


def spectral_flux(mag, spread: int = 1):
    """Half-wave rectified magnitude increase over the previous frame.

    The previous frame is first max-filtered over ``+-spread`` bins so a
    partial gliding by less than a bin (vibrato) produces no flux. Frame 0
    is compared against silence.
    """
    mag = np.asarray(mag, dtype=float)
    prev = np.concatenate([np.zeros((mag.shape[0], 1)), mag[:, :-1]], axis=1)
    if spread > 0:
        prev = maximum_filter1d(prev, size=2 * spread + 1, axis=0, mode="nearest")
    return np.maximum(mag - prev, 0.0).sum(axis=0)


def detect_onsets(mag, sensitivity: float = DEFAULT_SENSITIVITY,
                  segment_frames: int = 4, context: int = 8,
                  relative_floor: float = 0.1) -> OnsetSet:
    """Spectral-flux onset detector.

    A frame is an onset when its flux exceeds ``sensitivity`` times the median
    of the smoothed flux over ``+-context`` frames, and ``relative_floor``
    times the largest flux, while the frame energy rises (truncated frames
    at the end of a signal spread energy into side bins without any
    attack). Each detection opens a segment of ``segment_frames`` frames,
    started early by up to ``segment_frames - 1`` frames whose energy was
    already rising.
    """
    if not sensitivity > 0:
        raise ValueError("sensitivity must be positive")
    mag = np.asarray(mag, dtype=float)
    n_frames = mag.shape[1]
    if n_frames < 3:
        return OnsetSet()
    flux = spectral_flux(mag)
    top = flux.max()
    if top <= 0:
        return OnsetSet()
    smooth = uniform_filter1d(flux, size=3, mode="constant")
    local = median_filter(smooth, size=2 * context + 1, mode="constant")
    energy = np.sum(mag ** 2, axis=0)
    rising = energy > np.concatenate([[0.0], energy[:-1]])
    hits = np.flatnonzero((flux > sensitivity * local) & (flux > relative_floor * top) & rising)
    frames = set()
    prev = None
    for t in hits:
        if prev is None or t != prev + 1:
            start = t
            # An attack late in a window barely registers; walk back over the
            # frames that already see it (energy still rising from silence).
            while (start > 0 and t - start < segment_frames - 1
                   and energy[start - 1] > 0 and rising[start - 1]):
                start -= 1
            frames.update(range(start, min(start + segment_frames, n_frames)))
        prev = t
    merged = OnsetSet.from_frames(frames)
    # Adjacent extended runs can touch; cap each merged run to segment_frames.
    frames = []
    for first, last in merged.segments:
        frames.extend(range(first, min(last, first + segment_frames - 1) + 1))
    return OnsetSet.from_frames(frames)
