import numpy as np
import pytest

from phaseunwrap.stft import Signal, StftConfig

RATE = 11025


@pytest.fixture
def cfg():
    return StftConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def noise(seed, length, rate=RATE):
    return Signal(np.random.default_rng(seed).uniform(-1, 1, length), rate)


def direct_stft(samples, cfg):
    """Summation oracle: every bin evaluated from the frame definition."""
    pad = cfg.pad_start
    T = cfg.n_frames(len(samples))
    grid = np.zeros((T - 1) * cfg.hop + cfg.win_len)
    grid[pad:pad + len(samples)] = samples
    n = np.arange(cfg.win_len)
    k = np.arange(cfg.n_bins)
    kernel = np.exp(-2j * np.pi * np.outer(k, n) / cfg.fft_len)
    out = np.empty((cfg.n_bins, T), dtype=complex)
    for t in range(T):
        out[:, t] = kernel @ (grid[t * cfg.hop:t * cfg.hop + cfg.win_len] * cfg.window)
    return out


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
