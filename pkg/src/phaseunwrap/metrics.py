"""Signal-to-distortion ratio and spectrogram inconsistency."""

from __future__ import annotations

import numpy as np

from .stft import Signal, Spectrogram, istft, spectral_norm, stft

SDR_CAP_DB = 300.0


def _samples(x):
    return np.asarray(x.samples if isinstance(x, Signal) else x, dtype=float)


def sdr(reference, estimate) -> float:
    """Scalar-projection SDR in dB.

    The estimate is projected onto the reference; the projection counts as
    target and the remainder as distortion. Signals are trimmed to the
    shorter length. Exact matches return the 300 dB cap.
    """
    ref, est = _samples(reference), _samples(estimate)
    n = min(len(ref), len(est))
    ref, est = ref[:n], est[:n]
    ref_energy = float(ref @ ref)
    if ref_energy <= 0:
        raise ValueError("reference signal is silent")
    target = (est @ ref) / ref_energy * ref
    noise = est - target
    noise_energy = float(noise @ noise)
    target_energy = float(target @ target)
    if noise_energy < 1e-30 or noise_energy <= target_energy * 10 ** (-SDR_CAP_DB / 10):
        return SDR_CAP_DB
    if target_energy <= 0:
        return -SDR_CAP_DB
    return float(10 * np.log10(target_energy / noise_energy))


def inconsistency(X: Spectrogram) -> float:
    """Relative distance ``|stft(istft(X)) - X| / |X|`` to the set of
    consistent spectrograms, in the two-sided spectrum norm."""
    scale = spectral_norm(X.bins, X.config.fft_len)
    if scale <= 0:
        raise ValueError("inconsistency of a zero spectrogram is undefined")
    Y = stft(istft(X), X.config).bins
    return spectral_norm(Y - X.bins, X.config.fft_len) / scale
