"""Phase reconstruction by linear unwrapping, plus the Griffin-Lim baseline.

Non-onset frames are unwrapped horizontally: every bin in the region of a
partial advances by ``2*pi*hop*f0`` per frame. Onset frames are unwrapped
vertically: across channels the phase advances by
``-2*pi/F * (n0(k) - t*hop)`` where ``n0(k)`` is the attack time seen by
channel ``k``, estimated from the magnitude envelope over the onset segment.

Attack times are expressed in grid coordinates (frame ``t`` starts at
``t*hop``; see :mod:`phaseunwrap.stft`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .analysis import OnsetSet, Region
from .errors import NoAttackEvidence
from .stft import Spectrogram, StftConfig, istft, spectral_norm, stft, window_transform, wrap_phase

ATTACK_FLOOR_DB = -50.0


class OnsetMethod(str, enum.Enum):
    IMP = "imp"
    QI = "qi"
    RAND = "rand"
    ZERO = "zero"
    ALT = "alt"


@dataclass
class PhaseMatrix:
    """Phase values (radians) with a mask of bins whose phase is observed."""

    values: np.ndarray
    known_mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.known_mask = np.asarray(self.known_mask, dtype=bool)
        if self.values.shape != self.known_mask.shape or self.values.ndim != 2:
            raise ValueError("phase values and mask must be equal-shaped matrices")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("phase values must be finite")

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def unknown(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape, dtype=bool))

    @classmethod
    def from_spectrogram(cls, X: Spectrogram, known_mask=True):
        mask = np.broadcast_to(np.asarray(known_mask, dtype=bool), X.shape).copy()
        values = np.where(mask, X.phase, 0.0)
        return cls(values, mask)


@dataclass(frozen=True)
class AttackEstimate:
    channel: int
    n0: float
    residual: float
    amplitude: float = 0.0
    fallback: bool = False


@dataclass
class GriffinLimResult:
    spectrogram: Spectrogram
    phase: PhaseMatrix
    inconsistency: list[float] = field(default_factory=list)


def _region_map(regions, n_bins):
    """Per-bin region frequency (NaN in null regions); checks the partition."""
    freq = np.full(n_bins, np.nan)
    covered = np.zeros(n_bins, dtype=bool)
    for r in regions:
        if not 0 <= r.lo <= r.hi < n_bins or np.any(covered[r.lo:r.hi + 1]):
            raise ValueError("regions do not partition the bin range")
        covered[r.lo:r.hi + 1] = True
        if r.peak is not None:
            freq[r.lo:r.hi + 1] = r.peak.freq
    if not covered.all():
        raise ValueError("regions do not partition the bin range")
    return freq


class WindowPhase:
    """Zero-phase part of the window transform.

    For a window symmetric about its centroid ``c``,
    ``W(nu) = G(nu) * exp(-2j*pi*nu*c)`` with ``G`` real, so a stationary
    partial puts phase ``psi - 2*pi*k*c/F + angle(G(k/F - f0))`` in bin
    ``k``, where ``psi`` is the partial's phase at the window centre.
    ``angle(G)`` is 0 or pi and is looked up from a table over bin offsets.
    """

    def __init__(self, cfg: StftConfig, resolution: int = 64):
        w = cfg.window
        self.fft_len = cfg.fft_len
        self.centre = float(np.sum(np.arange(len(w)) * w) / np.sum(w))
        nu = np.arange(-cfg.fft_len // 2 * resolution, cfg.fft_len // 2 * resolution + 1)
        nu = nu / resolution
        W = window_transform(w, nu / cfg.fft_len)
        self._grid = nu
        self._real = (W * np.exp(2j * np.pi * nu / cfg.fft_len * self.centre)).real

    def angle(self, offset_bins):
        g = np.interp(offset_bins, self._grid, self._real)
        return np.where(g < 0, np.pi, 0.0)

    def bin_phase(self, centre_phase, k, freq):
        """Phase in bins ``k`` of a partial at ``freq`` whose phase at the
        window centre is ``centre_phase``."""
        k = np.asarray(k, dtype=float)
        return (centre_phase - 2 * np.pi * k * self.centre / self.fft_len
                + self.angle(k - freq * self.fft_len))

    def centre_phase(self, phase, k, freq):
        """Inverse of :meth:`bin_phase` for one bin."""
        return phase + 2 * np.pi * k * self.centre / self.fft_len - self.angle(k - freq * self.fft_len)


_WINDOW_PHASES = {}


def window_phase(cfg: StftConfig) -> WindowPhase:
    if cfg not in _WINDOW_PHASES:
        _WINDOW_PHASES[cfg] = WindowPhase(cfg)
    return _WINDOW_PHASES[cfg]


def _lobe_known(region, known_mask):
    p = region.peak
    return known_mask is not None and any(
        region.lo <= k <= region.hi and known_mask[k]
        for k in (p.channel - 1, p.channel, p.channel + 1))


def _anchor_age(regions, prev_regions, prev_age, known_mask):
    """Frames since each bin's partial was last pinned to a known phase
    (0 on known bins, inf where no chain reaches a known bin)."""
    age = np.full(len(known_mask), np.inf)
    for r in regions:
        if r.peak is None:
            continue
        if _lobe_known(r, known_mask):
            value = 0.0
        else:
            src = _region_at(prev_regions, r.peak.channel)
            k_src = src.peak.channel if src is not None and src.peak is not None else r.peak.channel
            value = prev_age[k_src] + 1
        age[r.lo:r.hi + 1] = value
    age[known_mask] = 0.0
    return age


def _region_at(regions, k):
    for r in regions:
        if r.lo <= k <= r.hi:
            return r
    return None


def unwrap_horizontal_frame(prev_phase, mag_frame, regions, cfg: StftConfig,
                            prev_freq=None, prev_regions=None, locked=True,
                            known_values=None, known_mask=None, direction=1):
    """Advance ``prev_phase`` by one hop using each region's frequency.

    With ``locked=False`` every bin of a region advances by ``2*pi*hop*f0``.
    With ``locked=True`` (default) only the partial's phase at the window
    centre is carried forward, read from the previous frame's peak of the
    same partial (or from a known main-lobe bin of this frame), and the
    region's bins are laid out around it with the window's own phase. While
    the peak stays on one channel the previous bin structure is kept and
    only shifted by the model's change. Both
    agree exactly for stationary partials; the locked form also follows
    partials that glide across bins.

    Where ``prev_freq`` (per-bin frequency of the previous frame) is given,
    the advance uses the mean of the two frame frequencies. Null-region bins
    keep their previous phase. ``direction=-1`` steps backwards in time, with
    ``prev_*`` then describing the following frame.
    """
    prev_phase = np.asarray(prev_phase, dtype=float)
    n_bins = len(prev_phase)
    if len(mag_frame) != n_bins:
        raise ValueError("magnitude frame and phase frame differ in length")
    freq = _region_map(regions, n_bins)
    if prev_freq is not None:
        prev_freq = np.asarray(prev_freq, dtype=float)
        if prev_freq.shape != freq.shape:
            raise ValueError("previous frequency map has the wrong length")
    if direction not in (1, -1):
        raise ValueError("direction must be 1 or -1")
    hop = direction * cfg.hop
    if not locked:
        step_freq = freq if prev_freq is None else np.where(
            np.isnan(prev_freq), freq, 0.5 * (freq + prev_freq))
        step = 2 * np.pi * hop * np.nan_to_num(step_freq)
        return wrap_phase(prev_phase + step)

    wp = window_phase(cfg)
    mag = np.asarray(mag_frame, dtype=float)
    out = prev_phase.copy()
    for r in regions:
        p = r.peak
        if p is None:
            continue
        anchor = None
        if _lobe_known(r, known_mask):
            lobe = [k for k in (p.channel - 1, p.channel, p.channel + 1)
                    if r.lo <= k <= r.hi and known_mask[k]]
            k = max(lobe, key=lambda j: mag[j])
            anchor = wp.centre_phase(known_values[k], k, p.freq)
        if anchor is None:
            src = _region_at(prev_regions, p.channel) if prev_regions is not None else None
            if src is not None and src.peak is not None:
                k_src, f_src = src.peak.channel, src.peak.freq
            else:
                k_src = p.channel
                f_src = p.freq
                if prev_freq is not None and not np.isnan(prev_freq[k_src]):
                    f_src = prev_freq[k_src]
            prev_centre = wp.centre_phase(prev_phase[k_src], k_src, f_src)
            anchor = prev_centre + np.pi * hop * (f_src + p.freq)
            span = np.arange(r.lo, r.hi + 1)
            out[span] = wp.bin_phase(anchor, span, p.freq)
            if src is not None and src.peak is not None and src.peak.channel == p.channel:
                # Same peak channel: keep the previous frame's bin structure
                # (decays and other envelope effects the symmetric window
                # model misses) and only apply the model's change.
                ks = np.arange(max(r.lo, src.lo), min(r.hi, src.hi) + 1)
                out[ks] = (prev_phase[ks] + wp.bin_phase(anchor, ks, p.freq)
                           - wp.bin_phase(prev_centre, ks, f_src))
            continue
        span = np.arange(r.lo, r.hi + 1)
        out[span] = wp.bin_phase(anchor, span, p.freq)
    return wrap_phase(out)


def _window_at(cfg, offsets):
    w = cfg.window
    offsets = np.asarray(offsets)
    inside = (offsets >= 0) & (offsets < cfg.win_len)
    return np.where(inside, w[np.clip(offsets, 0, cfg.win_len - 1)], 0.0)


def _segment_frames(seg_frames):
    frames = np.asarray(list(seg_frames), dtype=int)
    if frames.ndim != 1 or len(frames) == 0:
        raise ValueError("onset segment must hold at least one frame")
    return frames


def _ls_scan(block, frames, cfg):
    """Grid-search least-squares fit of ``A * w(n0 - hop*t)`` to each row of
    ``block``; returns best ``n0``, residual and amplitude per row."""
    hop, N = cfg.hop, cfg.win_len
    cand = np.arange(hop * frames[0] - N, hop * frames[-1] + N + 1)
    wv = _window_at(cfg, cand[:, None] - hop * frames[None, :])
    den = np.sum(wv * wv, axis=1)
    num = block @ wv.T
    amp = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    resid = np.sum((block[:, None, :] - amp[:, :, None] * wv[None]) ** 2, axis=2)
    best = np.argmin(resid, axis=1)
    rows = np.arange(block.shape[0])
    return cand[best], resid[rows, best], amp[rows, best]


def estimate_attack_ls(mag_channel, k: int, seg_frames, cfg: StftConfig) -> AttackEstimate:
    """Least-squares attack time for one channel.

    Searches integer ``n0`` over ``[hop*t_first - N, hop*t_last + N]`` and
    fits ``m_t ~ A * w(n0 - hop*t)`` with the closed-form amplitude. Ties go
    to the smaller ``n0``.
    """
    m = np.asarray(mag_channel, dtype=float)
    frames = _segment_frames(seg_frames)
    if m.shape != frames.shape:
        raise ValueError("one magnitude per segment frame expected")
    if not np.any(m > 0):
        raise NoAttackEvidence(f"channel {k} is silent over the onset segment")
    n0, resid, amp = _ls_scan(m[None, :], frames, cfg)
    return AttackEstimate(k, float(n0[0]), float(resid[0]), float(amp[0]))


def estimate_attack_qifft(mag_channel, k: int, seg_frames, cfg: StftConfig) -> AttackEstimate:
    """Attack time from a parabola through the log-envelope around its peak
    frame. The envelope of an impulse peaks when the impulse sits at the
    window centre, hence the ``N/2`` offset."""
    m = np.asarray(mag_channel, dtype=float)
    frames = _segment_frames(seg_frames)
    if m.shape != frames.shape:
        raise ValueError("one magnitude per segment frame expected")
    if not np.any(m > 0):
        raise NoAttackEvidence(f"channel {k} is silent over the onset segment")
    i = int(np.argmax(m))
    centre = cfg.win_len / 2
    t_p = frames[i]
    if 0 < i < len(m) - 1 and np.all(m[i - 1:i + 2] > 0):
        delta = analysis.parabolic_offset(*np.log(m[i - 1:i + 2]))
        if delta is not None:
            return AttackEstimate(k, cfg.hop * (t_p + delta) + centre, 0.0, float(m[i]))
    return AttackEstimate(k, cfg.hop * t_p + centre, 0.0, float(m[i]), fallback=True)


def estimate_attacks(mag, segment, cfg: StftConfig, method: OnsetMethod,
                     floor_db: float = ATTACK_FLOOR_DB):
    """Per-channel attack times over an onset segment ``(first, last)``.

    Channels whose segment energy is below ``floor_db`` relative to the
    strongest channel get NaN.
    """
    first, last = segment
    frames = np.arange(first, last + 1)
    block = np.asarray(mag)[:, first:last + 1]
    energy = np.sum(block ** 2, axis=1)
    n0 = np.full(block.shape[0], np.nan)
    top = energy.max(initial=0.0)
    if top <= 0:
        return n0
    strong = np.flatnonzero(energy > top * 10 ** (floor_db / 10))
    if method == OnsetMethod.IMP:
        n0[strong] = _ls_scan(block[strong], frames, cfg)[0]
    else:
        for k in strong:
            n0[k] = estimate_attack_qifft(block[k], int(k), frames, cfg).n0
    return n0


def _fill_attacks(n0, regions):
    """Weak channels inherit the attack time of their region's peak, or of
    the nearest estimated channel."""
    n0 = np.array(n0, dtype=float)
    filled = n0.copy()
    for r in regions:
        if r.peak is not None and not np.isnan(n0[r.peak.channel]):
            seg = filled[r.lo:r.hi + 1]
            seg[np.isnan(seg)] = n0[r.peak.channel]
    missing = np.isnan(filled)
    if missing.any():
        valid = np.flatnonzero(~np.isnan(n0))
        if len(valid) == 0:
            return None
        idx = np.flatnonzero(missing)
        nearest = valid[np.abs(idx[:, None] - valid[None, :]).argmin(axis=1)]
        filled[idx] = n0[nearest]
    return filled


def unwrap_vertical_frame(mag_frame, attacks, t: int, cfg: StftConfig,
                          method: OnsetMethod, regions, rng=None,
                          known_values=None, known_mask=None):
    """Phases of one onset frame.

    ``imp``/``qi``: ``phi(0) = 0`` (or its known value) and
    ``phi(k) = phi(k-1) - 2*pi/F * (n0(k) - t*hop)``, measured from the
    nearest known bin. ``rand``/``zero``/``alt`` assign a value per region peak
    (seeded uniform, zero, or ``0, pi, 0, ...``) to every bin of its
    region; null regions get 0.
    """
    method = OnsetMethod(method)
    n_bins = len(mag_frame)
    if known_mask is None:
        known_mask = np.zeros(n_bins, dtype=bool)
        known_values = np.zeros(n_bins)
    known_mask = np.asarray(known_mask, dtype=bool)
    known_values = np.asarray(known_values, dtype=float)
    F, hop = cfg.fft_len, cfg.hop

    if method in (OnsetMethod.IMP, OnsetMethod.QI):
        n0 = None if attacks is None else _fill_attacks(attacks, regions)
        if n0 is None:
            if np.all(known_mask):
                return known_values.copy()
            raise NoAttackEvidence(f"no attack times available in frame {t}")
        step = -2 * np.pi / F * (n0 - t * hop)
        step[0] = 0.0
        csum = np.cumsum(step)
        # Anchor: the nearest known bin (ties go down), else phi(0) = 0.
        ks = np.arange(n_bins)
        below = np.maximum.accumulate(np.where(known_mask, ks, -1))
        above = np.minimum.accumulate(np.where(known_mask, ks, n_bins)[::-1])[::-1]
        use_above = (above < n_bins) & ((below < 0) | (above - ks < ks - below))
        anchor = np.where(use_above, above, below)
        base = np.where(anchor >= 0, known_values[np.maximum(anchor, 0)], 0.0)
        base_sum = np.where(anchor >= 0, csum[np.maximum(anchor, 0)], 0.0)
        phase = base + csum - base_sum
    else:
        peaks = [r for r in regions if r.peak is not None]
        if method == OnsetMethod.RAND:
            rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
            values = np.pi - rng.uniform(0.0, 2 * np.pi, len(peaks))
        elif method == OnsetMethod.ZERO:
            values = np.zeros(len(peaks))
        else:
            values = np.where(np.arange(len(peaks)) % 2 == 0, 0.0, np.pi)
        phase = np.zeros(n_bins)
        for r, v in zip(peaks, values):
            phase[r.lo:r.hi + 1] = v
    phase = wrap_phase(phase)
    return np.where(known_mask, known_values, phase)


def frame_regions(mag, cfg, floor_db, corrected):
    return [analysis.analyze_frame(mag[:, t], cfg, floor_db, corrected)
            for t in range(mag.shape[1])]


def reconstruct_phases(mag, known: PhaseMatrix | None, onsets: OnsetSet | None,
                       cfg: StftConfig = StftConfig(),
                       method: OnsetMethod = OnsetMethod.QI, seed=0,
                       floor_db: float = analysis.DEFAULT_FLOOR_DB,
                       corrected: bool = True, locked: bool = True,
                       regions=None) -> PhaseMatrix:
    """Phase unwrapping over a whole magnitude spectrogram.

    Frames are visited in time order. Onset frames (and frame 0) are filled
    by vertical unwrapping, all others by horizontal unwrapping from the
    previous frame. Known bins are copied verbatim and feed the recursions.

    When some phases are known, a second pass unwraps backwards in time from
    later known bins, and each partial keeps whichever estimate is fewer
    frames away from a known phase (ties go forwards). The backward pass
    never crosses into the frame before an onset segment.
    """
    mag = np.asarray(mag, dtype=float)
    if mag.ndim != 2 or mag.shape[0] != cfg.n_bins:
        raise ValueError(f"magnitude must have {cfg.n_bins} rows")
    if known is None:
        known = PhaseMatrix.unknown(mag.shape)
    if known.shape != mag.shape:
        raise ValueError("known phases and magnitude differ in shape")
    if onsets is None:
        onsets = OnsetSet()
    method = OnsetMethod(method)
    n_bins, n_frames = mag.shape
    mask = known.known_mask
    phase = np.where(mask, known.values, 0.0)
    age = np.where(mask, 0.0, np.inf)
    if regions is None:
        regions = frame_regions(mag, cfg, floor_db, corrected)
    freqs = [_region_map(r, n_bins) for r in regions]
    rng = np.random.default_rng(seed)
    attack_cache = {}

    for t in range(n_frames):
        if mask[:, t].all():
            continue
        if t == 0 or t in onsets:
            attacks = None
            if method in (OnsetMethod.IMP, OnsetMethod.QI):
                segment = onsets.segment_of(t) or (t, min(t + cfg.frames_per_window, n_frames) - 1)
                if segment not in attack_cache:
                    attack_cache[segment] = estimate_attacks(mag, segment, cfg, method)
                attacks = attack_cache[segment]
            if method in (OnsetMethod.IMP, OnsetMethod.QI) and np.all(np.isnan(attacks)):
                # Silent segment: nothing to anchor on.
                new = np.zeros(n_bins)
            else:
                new = unwrap_vertical_frame(mag[:, t], attacks, t, cfg, method, regions[t],
                                            rng, known.values[:, t], mask[:, t])
        else:
            new = unwrap_horizontal_frame(phase[:, t - 1], mag[:, t], regions[t], cfg,
                                          freqs[t - 1], regions[t - 1], locked,
                                          known.values[:, t], mask[:, t])
            age[:, t] = _anchor_age(regions[t], regions[t - 1], age[:, t - 1], mask[:, t])
        phase[:, t] = np.where(mask[:, t], known.values[:, t], new)

    if mask.any() and not mask.all():
        seg_starts = {first for first, _ in onsets.segments}
        back = phase.copy()
        back_age = np.where(mask, 0.0, np.inf)
        for t in range(n_frames - 2, -1, -1):
            if mask[:, t].all() or t + 1 in seg_starts:
                continue
            new = unwrap_horizontal_frame(back[:, t + 1], mag[:, t], regions[t], cfg,
                                          freqs[t + 1], regions[t + 1], locked,
                                          known.values[:, t], mask[:, t], direction=-1)
            back_age[:, t] = _anchor_age(regions[t], regions[t + 1], back_age[:, t + 1],
                                         mask[:, t])
            back[:, t] = np.where(mask[:, t], known.values[:, t], new)
        phase = np.where(back_age < age, back, phase)
    return PhaseMatrix(phase, mask.copy())


def griffin_lim(mag, known: PhaseMatrix | None, cfg: StftConfig, length: int,
                iters: int = 200, seed=0, sample_rate: int = 11025) -> GriffinLimResult:
    """Griffin-Lim with fixed known phases.

    Unknown phases start uniform on (-pi, pi]. Each iteration projects onto
    consistent spectrograms (``stft(istft(.))``), then restores the target
    magnitude and the known phases. ``inconsistency`` holds the relative
    distance to the consistent set before each projection, plus the final
    estimate's.
    """
    if iters < 1:
        raise ValueError("need at least one iteration")
    mag = np.asarray(mag, dtype=float)
    if known is None:
        known = PhaseMatrix.unknown(mag.shape)
    if known.shape != mag.shape:
        raise ValueError("known phases and magnitude differ in shape")
    rng = np.random.default_rng(seed)
    mask = known.known_mask
    phase = np.where(mask, known.values, np.pi - rng.uniform(0, 2 * np.pi, mag.shape))
    template = Spectrogram(mag * np.exp(1j * phase), cfg, length, sample_rate)
    scale = spectral_norm(mag, cfg.fft_len) or 1.0
    X = template.bins
    trace = []
    for _ in range(iters):
        Y = stft(istft(template.with_bins(X)), cfg).bins
        trace.append(spectral_norm(Y - X, cfg.fft_len) / scale)
        phase = np.where(mask, known.values, np.angle(Y))
        X = mag * np.exp(1j * phase)
    Y = stft(istft(template.with_bins(X)), cfg).bins
    trace.append(spectral_norm(Y - X, cfg.fft_len) / scale)
    return GriffinLimResult(template.with_bins(X), PhaseMatrix(wrap_phase(phase), mask.copy()), trace)
