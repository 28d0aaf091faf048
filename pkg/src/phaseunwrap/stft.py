"""Short-time Fourier transform and its least-squares inverse.

Frame ``t`` covers samples ``[t*hop, t*hop + win_len)`` of the zero-padded
signal ("grid" coordinates). The signal is padded by ``win_len - hop``
samples on both sides (plus whatever is needed to complete the last frame),
so every real sample is seen by ``win_len / hop`` frames. Sample ``n`` of
the original signal sits at grid index ``n + pad_start``.

Bins are the non-negative frequencies ``k = 0 .. fft_len/2``; the forward
transform is unnormalized and ``1/fft_len`` lives in the inverse, so
``X[k, t] = sum_n x[n + t*hop] * w[n] * exp(-2j*pi*k*n/fft_len)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

WINDOW_KINDS = ("hann", "rectangular")


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("signal must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters. Defaults are the 11025 Hz reference setup:
    512-sample Hann window, 75 % overlap, no zero-padding."""

    win_len: int = 512
    hop: int = 128
    fft_len: int = 512
    window_kind: str = "hann"

    def __post_init__(self):
        if self.window_kind not in WINDOW_KINDS:
            raise ValueError(f"unknown window kind {self.window_kind!r}")
        if not 0 < self.hop <= self.win_len <= self.fft_len:
            raise ValueError("need 0 < hop <= win_len <= fft_len")
        if self.win_len < 2:
            raise ValueError("win_len must be at least 2")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    @property
    def pad_start(self) -> int:
        return self.win_len - self.hop

    @property
    def window(self) -> np.ndarray:
        return _cached_window(self.window_kind, self.win_len)

    @property
    def frames_per_window(self) -> int:
        return -(-self.win_len // self.hop)

    def n_frames(self, length: int) -> int:
        """Number of frames produced for a signal of ``length`` samples."""
        return (self.pad_start + length - 1) // self.hop + 1

    def frame_start(self, t) -> int:
        """Signal-coordinate index of the first sample of frame ``t``."""
        return t * self.hop - self.pad_start

    def frames_touching(self, start: int, stop: int, length: int) -> list[int]:
        """Frames whose window overlaps signal samples ``[start, stop)``."""
        g0, g1 = start + self.pad_start, stop - 1 + self.pad_start
        first = max(0, (g0 - self.win_len) // self.hop + 1)
        last = min(self.n_frames(length) - 1, g1 // self.hop)
        return list(range(first, last + 1))


@dataclass(frozen=True)
class Spectrogram:
    """Complex STFT matrix of shape ``(n_bins, n_frames)``."""

    bins: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    length: int = 0
    sample_rate: int = 11025

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=complex)
        if bins.ndim != 2 or bins.shape[0] != self.config.n_bins:
            raise ValueError(
                f"expected {self.config.n_bins} bins, got shape {bins.shape}")
        if bins.shape[1] != self.config.n_frames(self.length):
            raise ValueError("frame count does not match signal length")
        object.__setattr__(self, "bins", bins)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)

    @property
    def phase(self) -> np.ndarray:
        return wrap_phase(np.angle(self.bins))

    @property
    def shape(self):
        return self.bins.shape

    def with_bins(self, bins) -> "Spectrogram":
        return Spectrogram(bins, self.config, self.length, self.sample_rate)

    @classmethod
    def from_polar(cls, magnitude, phase, config, length, sample_rate=11025):
        return cls(np.asarray(magnitude) * np.exp(1j * np.asarray(phase)),
                   config, length, sample_rate)


def make_window(kind: str, n: int) -> np.ndarray:
    """Periodic Hann ``0.5*(1 - cos(2*pi*n/N))`` or a rectangular window."""
    if n < 2:
        raise ValueError("window length must be at least 2")
    if kind == "hann":
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))
    if kind == "rectangular":
        return np.ones(n)
    raise ValueError(f"unknown window kind {kind!r}")


@lru_cache(maxsize=16)
def _cached_window(kind, n):
    w = make_window(kind, n)
    w.setflags(write=False)
    return w


def window_transform(w, f):
    """DTFT of the window, ``W(f) = sum_n w[n] exp(-2j*pi*f*n)``.

    ``f`` may be a scalar or an array of normalized frequencies.
    """
    w = np.asarray(w, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(np.abs(f) > 0.5 + 1e-12):
        raise ValueError("normalized frequency must lie in [-0.5, 0.5]")
    n = np.arange(len(w))
    out = np.exp(-2j * np.pi * np.multiply.outer(f, n)) @ w
    return out[()] if out.ndim == 0 else out


def wrap_phase(theta):
    """Map angles to the half-open interval (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("cannot wrap non-finite phase")
    inside = (theta > -np.pi) & (theta <= np.pi)
    wrapped = np.pi - np.mod(np.pi - theta, 2.0 * np.pi)
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    out = np.where(inside, theta, wrapped)
    return out[()] if out.ndim == 0 else out


def _pad(samples, cfg):
    length = len(samples)
    n_frames = cfg.n_frames(length)
    total = (n_frames - 1) * cfg.hop + cfg.win_len
    padded = np.zeros(total)
    padded[cfg.pad_start:cfg.pad_start + length] = samples
    return padded, n_frames


def stft(x: Signal, cfg: StftConfig = StftConfig()) -> Spectrogram:
    if len(x) == 0:
        raise ValueError("cannot transform an empty signal")
    padded, n_frames = _pad(x.samples, cfg)
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.win_len)
    frames = frames[::cfg.hop][:n_frames] * cfg.window
    bins = np.fft.rfft(frames, n=cfg.fft_len, axis=1).T
    return Spectrogram(bins, cfg, len(x), x.sample_rate)


def _overlap_add(frames, hop, total):
    n_frames, win_len = frames.shape
    out = np.zeros(total)
    if win_len % hop == 0:
        m = win_len // hop
        blocks = frames.reshape(n_frames, m, hop)
        acc = out.reshape(-1, hop)
        for j in range(m):
            acc[j:j + n_frames] += blocks[:, j, :]
    else:
        for t in range(n_frames):
            out[t * hop:t * hop + win_len] += frames[t]
    return out


@lru_cache(maxsize=32)
def _norm_envelope(cfg, n_frames):
    total = (n_frames - 1) * cfg.hop + cfg.win_len
    sq = np.broadcast_to(cfg.window ** 2, (n_frames, cfg.win_len))
    env = _overlap_add(np.ascontiguousarray(sq), cfg.hop, total)
    env.setflags(write=False)
    return env


def istft(X: Spectrogram) -> Signal:
    """Least-squares inverse: weighted overlap-add normalized by the summed
    squared window. Real samples with a zero normalizer come out as 0."""
    cfg = X.config
    n_frames = X.bins.shape[1]
    frames = np.fft.irfft(X.bins.T, n=cfg.fft_len, axis=1)[:, :cfg.win_len]
    total = (n_frames - 1) * cfg.hop + cfg.win_len
    num = _overlap_add(frames * cfg.window, cfg.hop, total)
    env = _norm_envelope(cfg, n_frames)
    seg = slice(cfg.pad_start, cfg.pad_start + X.length)
    num, env = num[seg], env[seg]
    zero = env <= 1e-12 * cfg.win_len
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} samples have no window support; "
                      "emitting zeros there", RuntimeWarning)
    out = np.divide(num, env, out=np.zeros_like(num), where=~zero)
    return Signal(out, X.sample_rate)


def spectral_norm(bins, fft_len=None) -> float:
    """Frobenius norm of the equivalent two-sided spectrum.

    Bins strictly between DC and Nyquist appear twice in the full spectrum.
    Under this norm ``stft(istft(.))`` is an orthogonal projection.
    """
    bins = np.asarray(bins)
    energy = np.abs(bins) ** 2
    weights = np.full(bins.shape[0], 2.0)
    weights[0] = 1.0
    if bins.shape[0] > 1 and (fft_len is None or fft_len % 2 == 0):
        weights[-1] = 1.0
    return float(np.sqrt(np.sum(weights @ energy)))
