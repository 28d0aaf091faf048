"""Ground-truth test signals: sinusoids, vibratos, impulses, damped
harmonic tones and clicks.

Frequencies are normalized (cycles per sample). Every generator is a pure
function of its arguments; randomness only enters through an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stft import Signal


@dataclass(frozen=True)
class SinusoidParams:
    amplitude: float
    freq: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if not 0.0 <= self.freq <= 0.5:
            raise ValueError(f"frequency {self.freq} outside [0, 0.5]")
        if not -np.pi < self.phase <= np.pi:
            raise ValueError("phase must lie in (-pi, pi]")


@dataclass(frozen=True)
class VibratoParams:
    carrier: float
    rate: float
    depth: float
    amplitude: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("modulation rate must be positive")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if not (0 < self.carrier - self.depth and self.carrier + self.depth < 0.5):
            raise ValueError("instantaneous frequency leaves (0, 0.5)")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if not -np.pi < self.phase <= np.pi:
            raise ValueError("phase must lie in (-pi, pi]")


@dataclass(frozen=True)
class ImpulseParams:
    n0: int
    amplitude: float = 1.0


def _check_length(length):
    if length <= 0:
        raise ValueError("length must be positive")


def gen_sinusoid_mixture(params, length: int, rate: int) -> Signal:
    """Sum of real cosines ``A cos(2 pi f n + phi)``."""
    params = list(params)
    if not params:
        raise ValueError("need at least one sinusoid")
    _check_length(length)
    n = np.arange(length)
    x = np.zeros(length)
    for p in params:
        x += p.amplitude * np.cos(2 * np.pi * (p.freq * n) + p.phase)
    return Signal(x, rate)


def vibrato_frequency(p: VibratoParams, n):
    """Analytic instantaneous frequency ``f_c + depth*cos(2 pi f_m n)``."""
    return p.carrier + p.depth * np.cos(2 * np.pi * p.rate * np.asarray(n, float))


def vibrato_phase(p: VibratoParams, n):
    """Closed-form running phase (the integral of ``vibrato_frequency``)."""
    n = np.asarray(n, dtype=float)
    wobble = p.depth / (2 * np.pi * p.rate) * np.sin(2 * np.pi * p.rate * n)
    return 2 * np.pi * (p.carrier * n + wobble) + p.phase


def gen_vibrato(p: VibratoParams, length: int, rate: int) -> Signal:
    _check_length(length)
    return Signal(p.amplitude * np.cos(vibrato_phase(p, np.arange(length))), rate)


def gen_impulse_mixture(params, length: int, rate: int) -> Signal:
    _check_length(length)
    params = list(params)
    positions = [p.n0 for p in params]
    if len(set(positions)) != len(positions):
        raise ValueError("impulse positions must be distinct")
    x = np.zeros(length)
    for p in params:
        if not 0 <= p.n0 < length:
            raise ValueError(f"impulse at {p.n0} outside signal")
        x[p.n0] = p.amplitude
    return Signal(x, rate)


def random_phases(count, seed):
    """Seeded phases, uniform on (-pi, pi]."""
    rng = np.random.default_rng(seed)
    return np.pi - rng.uniform(0.0, 2 * np.pi, count)


def gen_damped_tone(f0: float, n_partials: int, decay: float, length: int,
                    rate: int, seed=0, onset: int = 0, phases=None) -> Signal:
    """Harmonic tone ``sum_h (1/h) exp(-decay*n) cos(2 pi h f0 n + phi_h)``.

    The tone starts at sample ``onset`` (silence before). Partial phases are
    drawn from ``seed`` unless given explicitly.
    """
    _check_length(length)
    if n_partials < 1:
        raise ValueError("need at least one partial")
    if not f0 > 0 or n_partials * f0 >= 0.5:
        raise ValueError("partials would alias above Nyquist")
    if decay < 0:
        raise ValueError("decay must be non-negative")
    if not 0 <= onset < length:
        raise ValueError("onset outside signal")
    if phases is None:
        phases = random_phases(n_partials, seed)
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (n_partials,):
        raise ValueError("need one phase per partial")
    n = np.arange(length - onset)
    env = np.exp(-decay * n)
    x = np.zeros(length)
    tone = x[onset:]
    for h in range(1, n_partials + 1):
        tone += (1.0 / h) * env * np.cos(2 * np.pi * ((h * f0) * n) + phases[h - 1])
    return Signal(x, rate)


def gen_click(length: int = 10) -> np.ndarray:
    """First difference of a symmetric Hann window, zero-prepended so the
    click keeps the window's length."""
    if length < 3:
        raise ValueError("click length must be at least 3")
    w = np.hanning(length)
    return np.diff(w, prepend=w[0])
