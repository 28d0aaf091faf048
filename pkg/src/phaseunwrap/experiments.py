"""Experiment harness: synthetic corpora, per-run metrics and CSV rows.

Each scenario builds one corpus item per seed, runs the requested methods
and returns one row per run plus mean/std summary rows. Rows only depend on
the spec, so with timings disabled the CSV is bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import detect_onsets
from .metrics import sdr
from .reconstruction import OnsetMethod, PhaseMatrix, griffin_lim, reconstruct_phases
from .restoration import RestoreMethod, corrupt_phases, corrupt_with_clicks, restore
from .stft import Signal, Spectrogram, StftConfig, istft, stft
from .synth import SinusoidParams, gen_damped_tone, gen_sinusoid_mixture, random_phases

SCENARIOS = ("horizontal", "onset", "complete-phase", "restoration")
COLUMNS = ("scenario", "method", "seed", "corruption_pct", "sdr_db", "runtime_ms", "config_hash")
DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
ONSET_METHODS = tuple(m.value for m in OnsetMethod)

_DEFAULT_METHODS = {
    "horizontal": ("pu", "gl"),
    "onset": ONSET_METHODS + ("gl",),
    "complete-phase": ("corrupted", "pu", "gl"),
    "restoration": ("corrupted", "pu", "gl"),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One scenario over a list of corpus seeds.

    ``gl_seeds`` random initializations are run per item for Griffin-Lim.
    ``methods`` defaults to every method the scenario supports.
    """

    scenario: str
    seeds: tuple = (0,)
    methods: tuple | None = None
    duration: float = 3.0
    sample_rate: int = 11025
    config: StftConfig = field(default_factory=StftConfig)
    gl_iters: int = 200
    gl_seeds: int = 30
    fractions: tuple = DEFAULT_FRACTIONS
    n_clicks: int = 3
    timings: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ValueError("need at least one seed")
        object.__setattr__(self, "seeds", seeds)
        methods = _DEFAULT_METHODS[self.scenario] if self.methods is None else tuple(self.methods)
        unknown = set(methods) - set(_DEFAULT_METHODS[self.scenario])
        if unknown:
            raise ValueError(f"methods {sorted(unknown)} not available for {self.scenario}")
        object.__setattr__(self, "methods", methods)
        fractions = tuple(float(f) for f in self.fractions)
        if any(not 0.0 <= f <= 1.0 for f in fractions):
            raise ValueError("corruption fractions must lie in [0, 1]")
        object.__setattr__(self, "fractions", fractions)
        if self.gl_seeds < 1 or self.gl_iters < 1:
            raise ValueError("need at least one Griffin-Lim seed and iteration")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample rate must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def length(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def config_hash(self) -> str:
        """Digest of everything that affects results (not seeds or timings)."""
        snap = asdict(self)
        for key in ("seeds", "timings", "workers"):
            snap.pop(key)
        blob = json.dumps(snap, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def sinusoid_item(seed: int, length: int, rate: int, n_sines: int = 5,
                  fft_len: int = 512) -> Signal:
    """Stationary mixture: bins 10..200 at least 6 bins apart, random sub-bin
    offsets, amplitudes in [0.3, 1] and random phases."""
    rng = np.random.default_rng(seed)
    grid = np.arange(10, 201, 6)
    chans = np.sort(rng.choice(grid, n_sines, replace=False))
    freqs = (chans + rng.uniform(-0.5, 0.5, n_sines)) / fft_len
    amps = rng.uniform(0.3, 1.0, n_sines)
    phases = random_phases(n_sines, seed + 1)
    return gen_sinusoid_mixture(
        [SinusoidParams(a, f, p) for a, f, p in zip(amps, freqs, phases)], length, rate)


def damped_item(seed: int, length: int, rate: int, n_partials: int = 8) -> Signal:
    """Harmonic tone, f0 in 110..440 Hz, T60 (-60 dB) between 1 and 2 s."""
    rng = np.random.default_rng(1000 + seed)
    f0 = rng.uniform(110.0, 440.0) / rate
    decay = np.log(1000.0) / (rng.uniform(1.0, 2.0) * rate)
    return gen_damped_tone(f0, n_partials, decay, length, rate, seed=seed)


def _known_onset_frames(X: Spectrogram) -> PhaseMatrix:
    known = PhaseMatrix.unknown(X.shape)
    n = min(X.config.frames_per_window, X.shape[1])
    known.known_mask[:, :n] = True
    known.values[:, :n] = X.phase[:, :n]
    return known


class _Runs:
    def __init__(self, spec: ExperimentSpec, x: Signal, seed: int):
        self.spec, self.x, self.seed = spec, x, seed
        self.rows = []
        self.tag = spec.config_hash()

    def add(self, method, seed, pct, value, elapsed):
        self.rows.append({
            "scenario": self.spec.scenario, "method": method, "seed": str(seed),
            "corruption_pct": pct, "sdr_db": float(value),
            "runtime_ms": 1000.0 * elapsed if self.spec.timings else None,
            "config_hash": self.tag,
        })

    def pu(self, mag, known, method=OnsetMethod.QI, pct=None, name="pu", onsets=None):
        spec, cfg = self.spec, self.spec.config
        t0 = time.perf_counter()
        if onsets is None:
            onsets = detect_onsets(mag, segment_frames=cfg.frames_per_window)
        phase = reconstruct_phases(mag, known, onsets, cfg, method, self.seed).values
        y = istft(Spectrogram.from_polar(mag, phase, cfg, len(self.x), spec.sample_rate))
        self.add(name, self.seed, pct, sdr(self.x, y), time.perf_counter() - t0)

    def gl(self, mag, known, pct=None):
        spec = self.spec
        for init in range(spec.gl_seeds):
            t0 = time.perf_counter()
            res = griffin_lim(mag, known, spec.config, len(self.x), spec.gl_iters,
                              (self.seed, init), spec.sample_rate)
            y = istft(res.spectrogram)
            self.add("gl", f"{self.seed}/{init}", pct, sdr(self.x, y), time.perf_counter() - t0)


def _run_item(spec: ExperimentSpec, seed: int):
    cfg, length, rate = spec.config, spec.length, spec.sample_rate
    if spec.scenario == "horizontal":
        x = sinusoid_item(seed, length, rate, fft_len=cfg.fft_len)
    else:
        x = damped_item(seed, length, rate)
    runs = _Runs(spec, x, seed)
    X = stft(x, cfg)
    mag = X.magnitude

    if spec.scenario == "horizontal":
        known = _known_onset_frames(X)
        if "pu" in spec.methods:
            runs.pu(mag, known)
        if "gl" in spec.methods:
            runs.gl(mag, known)
    elif spec.scenario == "onset":
        onsets = detect_onsets(mag, segment_frames=cfg.frames_per_window)
        for m in spec.methods:
            if m == "gl":
                runs.gl(mag, None)
            else:
                runs.pu(mag, None, OnsetMethod(m), name=m, onsets=onsets)
    elif spec.scenario == "complete-phase":
        for frac in spec.fractions:
            pct = round(100 * frac, 6)
            Y, mask = corrupt_phases(X, frac, seed)
            known = PhaseMatrix.from_spectrogram(Y, ~mask)
            if "corrupted" in spec.methods:
                runs.add("corrupted", seed, pct, sdr(x, istft(Y)), 0.0)
            if "pu" in spec.methods:
                runs.pu(mag, known, pct=pct)
            if "gl" in spec.methods:
                runs.gl(mag, known, pct=pct)
    else:
        y, report = corrupt_with_clicks(x, spec.n_clicks, seed=seed, cfg=cfg)
        if "corrupted" in spec.methods:
            runs.add("corrupted", seed, None, sdr(x, y), 0.0)
        if "pu" in spec.methods:
            t0 = time.perf_counter()
            z = restore(y, report, cfg, RestoreMethod("pu", seed=seed))
            runs.add("pu", seed, None, sdr(x, z), time.perf_counter() - t0)
        if "gl" in spec.methods:
            for init in range(spec.gl_seeds):
                t0 = time.perf_counter()
                z = restore(y, report, cfg,
                            RestoreMethod("gl", iters=spec.gl_iters, seed=(seed, init)))
                runs.add("gl", f"{seed}/{init}", None, sdr(x, z), time.perf_counter() - t0)
    return runs.rows


def _sort_key(row):
    seed = row["seed"]
    item, _, init = seed.partition("/")
    pct = row["corruption_pct"]
    return (row["scenario"], row["method"], -1.0 if pct is None else pct,
            int(item), int(init) if init else -1)


def summarize(rows):
    """Mean and standard deviation of ``sdr_db`` (and mean runtime) per
    scenario, method and corruption level."""
    groups = {}
    for row in rows:
        key = (row["scenario"], row["method"], row["corruption_pct"], row["config_hash"])
        groups.setdefault(key, []).append(row)
    out = []
    for (scenario, method, pct, tag), members in sorted(
            groups.items(), key=lambda kv: (kv[0][0], kv[0][1], -1.0 if kv[0][2] is None else kv[0][2])):
        values = np.array([r["sdr_db"] for r in members])
        times = [r["runtime_ms"] for r in members if r["runtime_ms"] is not None]
        runtime = float(np.mean(times)) if times else None
        for stat, value in (("mean", values.mean()), ("std", values.std())):
            out.append({"scenario": scenario, "method": method, "seed": stat,
                        "corruption_pct": pct, "sdr_db": float(value),
                        "runtime_ms": runtime, "config_hash": tag})
    return out


def run_experiment(spec: ExperimentSpec, summary: bool = True):
    """Per-run rows sorted by scenario, method, corruption and seed, followed
    by the summary rows."""
    if spec.workers > 1 and len(spec.seeds) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            parts = list(pool.map(_run_item, [spec] * len(spec.seeds), spec.seeds))
    else:
        parts = [_run_item(spec, s) for s in spec.seeds]
    rows = sorted((r for part in parts for r in part), key=_sort_key)
    return rows + summarize(rows) if summary else rows


def mean_sdr(rows, method, corruption_pct=None):
    values = [r["sdr_db"] for r in rows
              if r["method"] == method and r["seed"] not in ("mean", "std")
              and r["corruption_pct"] == corruption_pct]
    if not values:
        raise KeyError(f"no runs for method {method!r}")
    return float(np.mean(values))


def format_rows(rows):
    """Rows with fixed float formatting, ready for ``csv.DictWriter``."""
    out = []
    for row in rows:
        fmt = dict(row)
        for key in ("corruption_pct", "sdr_db", "runtime_ms"):
            fmt[key] = "" if row[key] is None else f"{row[key]:.6f}"
        out.append(fmt)
    return out


def bench_signal(duration: float = 30.0, rate: int = 11025, seed: int = 0) -> Signal:
    """A sequence of damped tones, one new note every three seconds."""
    length = int(round(duration * rate))
    rng = np.random.default_rng(seed)
    x = np.zeros(length)
    for i, onset in enumerate(range(0, length, 3 * rate)):
        f0 = rng.uniform(110.0, 440.0) / rate
        decay = np.log(1000.0) / (rng.uniform(1.0, 2.0) * rate)
        x += gen_damped_tone(f0, 8, decay, length, rate, seed=seed + i, onset=onset).samples
    return Signal(x, rate)


def bench(x: Signal, cfg: StftConfig = StftConfig(), iters: int = 200, seed: int = 0):
    """Blind phase recovery of ``x`` by phase unwrapping and by Griffin-Lim;
    rows carry wall-clock time and SDR."""
    tag = hashlib.sha256(json.dumps([asdict(cfg), iters, len(x)]).encode()).hexdigest()[:12]
    rows = []
    mag = stft(x, cfg).magnitude

    t0 = time.perf_counter()
    onsets = detect_onsets(mag, segment_frames=cfg.frames_per_window)
    phase = reconstruct_phases(mag, None, onsets, cfg, OnsetMethod.QI, seed).values
    y = istft(Spectrogram.from_polar(mag, phase, cfg, len(x), x.sample_rate))
    rows.append(("pu", time.perf_counter() - t0, sdr(x, y)))

    t0 = time.perf_counter()
    res = griffin_lim(mag, None, cfg, len(x), iters, seed, x.sample_rate)
    y = istft(res.spectrogram)
    rows.append(("gl", time.perf_counter() - t0, sdr(x, y)))
    return [{"scenario": "bench", "method": m, "seed": str(seed), "corruption_pct": None,
             "sdr_db": float(v), "runtime_ms": 1000.0 * t, "config_hash": tag}
            for m, t, v in rows]
