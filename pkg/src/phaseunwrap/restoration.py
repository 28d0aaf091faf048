"""Click corruption and spectrogram-domain restoration.

The pipeline discards every frame that overlaps a click, fills its
log-magnitudes by per-channel linear interpolation, recovers the phases of
those frames (phase unwrapping or Griffin-Lim, with clean-frame phases held
fixed) and splices the result back into the input.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import OnsetSet, detect_onsets
from .errors import DataError
from .reconstruction import OnsetMethod, PhaseMatrix, griffin_lim, reconstruct_phases
from .stft import Signal, Spectrogram, StftConfig, istft, stft, wrap_phase
from .synth import gen_click

MAGNITUDE_FLOOR_DB = -120.0


@dataclass
class CorruptionReport:
    click_len: int = 10
    positions: list[int] = field(default_factory=list)
    corrupted_frames: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(int(data["click_len"]), [int(p) for p in data["positions"]],
                       [int(t) for t in data["corrupted_frames"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed corruption report: {exc}") from exc


@dataclass(frozen=True)
class RestoreMethod:
    """``kind`` is "pu" or "gl"; ``onset`` applies to pu, ``iters`` to gl."""

    kind: str = "pu"
    onset: OnsetMethod = OnsetMethod.QI
    iters: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("pu", "gl"):
            raise ValueError(f"unknown restoration method {self.kind!r}")
        object.__setattr__(self, "onset", OnsetMethod(self.onset))


def _place_clicks(rng, length, n_clicks, click_len, spacing, attempts=1000):
    positions = []
    for _ in range(attempts):
        if len(positions) == n_clicks:
            break
        p = int(rng.integers(0, length - click_len + 1))
        if all(abs(p - q) >= max(spacing, click_len) for q in positions):
            positions.append(p)
    if len(positions) < n_clicks:
        raise DataError(f"could not place {n_clicks} clicks {spacing} samples apart")
    return sorted(positions)


def corrupt_with_clicks(x: Signal, n_clicks: int, click_len: int = 10, amp=None,
                        seed=0, cfg: StftConfig = StftConfig()):
    """Add ``n_clicks`` differentiated-Hann clicks at seeded random positions.

    Clicks are at least one window length apart and their total duration
    must stay under 1 % of the signal. ``amp`` is the click peak; the
    default is ten times the signal RMS.
    """
    if n_clicks < 0:
        raise ValueError("click count must be non-negative")
    if n_clicks * click_len >= 0.01 * len(x):
        raise ValueError("clicks would exceed 1 % of the signal duration")
    report = CorruptionReport(click_len)
    if n_clicks == 0:
        return x, report
    click = gen_click(click_len)
    if amp is None:
        amp = 10 * np.sqrt(np.mean(x.samples ** 2))
    click = amp * click / np.max(np.abs(click))
    rng = np.random.default_rng(seed)
    positions = _place_clicks(rng, len(x), n_clicks, click_len, cfg.win_len)
    y = x.samples.copy()
    frames = set()
    for p in positions:
        y[p:p + click_len] += click
        frames.update(cfg.frames_touching(p, p + click_len, len(x)))
    report.positions = positions
    report.corrupted_frames = sorted(frames)
    return Signal(y, x.sample_rate), report


def corrupt_phases(X: Spectrogram, fraction: float, seed=0):
    """Replace the phases of a random ``fraction`` of bins with uniform
    values. Returns the corrupted spectrogram and the per-bin mask."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    size = X.bins.size
    chosen = rng.choice(size, int(round(fraction * size)), replace=False)
    mask = np.zeros(size, dtype=bool)
    mask[chosen] = True
    mask = mask.reshape(X.shape)
    phase = np.where(mask, np.pi - rng.uniform(0, 2 * np.pi, X.shape), X.phase)
    return X.with_bins(np.where(mask, X.magnitude * np.exp(1j * phase), X.bins)), mask


def _runs(frames):
    frames = sorted(set(frames))
    runs = []
    for t in frames:
        if runs and t == runs[-1][1] + 1:
            runs[-1][1] = t
        else:
            runs.append([t, t])
    return runs


def interpolate_magnitude(mag, corrupted_frames, floor_db: float = MAGNITUDE_FLOOR_DB):
    """Fill corrupted frames by linear interpolation of log-magnitudes
    between the nearest clean frames of each channel; runs touching an edge
    copy the nearest clean frame. Output is floored at ``floor_db`` below the
    spectrogram maximum."""
    mag = np.asarray(mag, dtype=float)
    n_frames = mag.shape[1]
    corrupted = sorted(set(int(t) for t in corrupted_frames))
    if any(not 0 <= t < n_frames for t in corrupted):
        raise DataError("corrupted frame index outside the spectrogram")
    if len(corrupted) >= n_frames:
        raise DataError("every frame is corrupted; nothing to interpolate from")
    floor = mag.max(initial=0.0) * 10 ** (floor_db / 20)
    if floor <= 0:
        floor = 10 ** (floor_db / 20)
    out = np.maximum(mag, floor)
    logs = np.log(out)
    for first, last in _runs(corrupted):
        left, right = first - 1, last + 1
        span = np.arange(first, last + 1)
        if left < 0:
            logs[:, span] = logs[:, [right]]
        elif right >= n_frames:
            logs[:, span] = logs[:, [left]]
        else:
            a = (span - left) / (right - left)
            logs[:, span] = (1 - a) * logs[:, [left]] + a * logs[:, [right]]
        out[:, span] = np.exp(logs[:, span])
    return out


def _support(report_frames, cfg, length):
    """Sample mask covered by the given frames (signal coordinates)."""
    mask = np.zeros(length, dtype=bool)
    for t in report_frames:
        a = max(cfg.frame_start(t), 0)
        b = min(cfg.frame_start(t) + cfg.win_len, length)
        if b > a:
            mask[a:b] = True
    return mask


def _splice(clean, restored, support, fade):
    out = clean.copy()
    idx = np.flatnonzero(support)
    if len(idx) == 0:
        return out
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    stops = np.concatenate([idx[breaks], [idx[-1]]]) + 1
    for a, b in zip(starts, stops):
        gain = np.ones(b - a)
        ramp = min(fade, (b - a) // 2)
        if ramp > 0:
            r = (np.arange(ramp) + 0.5) / ramp
            if a > 0:
                gain[:ramp] = r
            if b < len(clean):
                gain[-ramp:] = np.minimum(gain[-ramp:], r[::-1])
        out[a:b] = (1 - gain) * clean[a:b] + gain * restored[a:b]
    return out


def restore(x_corrupted: Signal, report: CorruptionReport,
            cfg: StftConfig = StftConfig(), method: RestoreMethod = RestoreMethod()) -> Signal:
    """Restore a click-corrupted signal from its corruption report."""
    frames = sorted(set(report.corrupted_frames))
    if not frames:
        return Signal(x_corrupted.samples.copy(), x_corrupted.sample_rate)
    X = stft(x_corrupted, cfg)
    if frames[-1] >= X.shape[1]:
        raise DataError("report frames do not match the signal framing")
    mag = interpolate_magnitude(X.magnitude, frames)
    clean = np.ones(X.shape[1], dtype=bool)
    clean[frames] = False
    mag[:, clean] = X.magnitude[:, clean]
    known = PhaseMatrix.from_spectrogram(X, np.broadcast_to(clean, X.shape))
    if method.kind == "pu":
        hits = detect_onsets(mag, segment_frames=cfg.frames_per_window)
        onsets = OnsetSet.from_frames(t for t in hits.frames if not clean[t])
        phase = reconstruct_phases(mag, known, onsets, cfg, method.onset, method.seed).values
    else:
        phase = griffin_lim(mag, known, cfg, len(x_corrupted), method.iters, method.seed,
                            x_corrupted.sample_rate).phase.values
    bins = np.where(clean[None, :], X.bins, mag * np.exp(1j * wrap_phase(phase)))
    y = istft(X.with_bins(bins)).samples
    support = _support(frames, cfg, len(x_corrupted))
    out = _splice(x_corrupted.samples, y, support, cfg.hop)
    return Signal(out, x_corrupted.sample_rate)
