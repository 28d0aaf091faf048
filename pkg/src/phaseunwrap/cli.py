"""Command-line front end.

Exit codes: 0 success, 2 invalid arguments, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, experiments, reconstruction, restoration, synth, wavio
from .errors import DataError
from .metrics import sdr
from .stft import Spectrogram, StftConfig, istft, stft

log = logging.getLogger("phaseunwrap")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _config(args) -> StftConfig:
    return StftConfig(args.win, args.hop, args.fft)


def _sidecar(path):
    return Path(path).with_suffix(".json")


# -- subcommands -------------------------------------------------------------

def cmd_synth(args):
    rate = args.rate
    length = int(round(args.duration * rate))
    if length <= 0:
        raise ValueError("duration must be positive")
    params = {"kind": args.kind, "rate": rate, "length": length}
    if args.kind == "sinusoids":
        freqs = args.freqs or [440.0]
        amps = args.amps or [1.0] * len(freqs)
        phases = args.phases or list(synth.random_phases(len(freqs), args.seed))
        if not len(freqs) == len(amps) == len(phases):
            raise ValueError("--freqs, --amps and --phases need equal lengths")
        comps = [synth.SinusoidParams(a, f / rate, p) for f, a, p in zip(freqs, amps, phases)]
        x = synth.gen_sinusoid_mixture(comps, length, rate)
        params["components"] = [{"freq_hz": f, "amplitude": a, "phase": float(p)}
                                for f, a, p in zip(freqs, amps, phases)]
    elif args.kind == "vibrato":
        p = synth.VibratoParams(args.carrier / rate, args.mod_rate / rate,
                                args.depth / rate, args.amplitude)
        x = synth.gen_vibrato(p, length, rate)
        params.update(carrier_hz=args.carrier, mod_rate_hz=args.mod_rate,
                      depth_hz=args.depth, amplitude=args.amplitude)
    elif args.kind == "impulses":
        positions = args.positions or [length // 2]
        x = synth.gen_impulse_mixture([synth.ImpulseParams(n) for n in positions], length, rate)
        params["positions"] = positions
    else:
        decay = np.log(1000.0) / (args.t60 * rate)
        x = synth.gen_damped_tone(args.f0 / rate, args.partials, decay, length, rate,
                                  seed=args.seed, onset=args.onset)
        params.update(f0_hz=args.f0, partials=args.partials, t60_s=args.t60,
                      onset=args.onset, seed=args.seed)
    wavio.write_wav(args.output, x, args.format)
    wavio.write_json(_sidecar(args.output), params)
    log.info("wrote %s (%d samples)", args.output, length)


def cmd_analyze(args):
    cfg = _config(args)
    x = wavio.read_wav(args.input, args.rate)
    mag = stft(x, cfg).magnitude
    frames = []
    for t in range(mag.shape[1]):
        regions = analysis.analyze_frame(mag[:, t], cfg, args.floor_db)
        frames.append([{"k_p": r.peak.channel, "A_p": r.peak.magnitude, "f0": r.peak.freq,
                        "lo": r.lo, "hi": r.hi} for r in regions if r.peak is not None])
    onsets = analysis.detect_onsets(mag, args.sensitivity, cfg.frames_per_window)
    report = {"frames": frames, "onsets": list(onsets.frames),
              "segments": [list(s) for s in onsets.segments],
              "config": {"win": cfg.win_len, "hop": cfg.hop, "fft": cfg.fft_len,
                         "rate": x.sample_rate}}
    wavio.write_json(args.output, report)


def _load_magnitude(args, cfg):
    """Magnitude, signal length and (for WAV input) the signal itself."""
    path = Path(args.input)
    if path.suffix == ".npz":
        mag = wavio.read_npz(path, "magnitude")
        if mag.ndim != 2 or mag.shape[0] != cfg.n_bins:
            raise DataError(f"magnitude must have {cfg.n_bins} rows")
        length = int(wavio.read_npz(path, "length")) if args.length is None else args.length
        if cfg.n_frames(length) != mag.shape[1]:
            raise DataError("magnitude frame count does not match the signal length")
        return mag, length, None
    x = wavio.read_wav(path, args.rate)
    return stft(x, cfg).magnitude, len(x), x


def cmd_reconstruct(args):
    cfg = _config(args)
    mag, length, x = _load_magnitude(args, cfg)
    known = None
    if args.known:
        values = wavio.read_npz(args.known, "phase")
        mask = wavio.read_npz(args.known, "mask").astype(bool)
        if values.shape != mag.shape or mask.shape != mag.shape:
            raise DataError("known-phase arrays do not match the magnitude shape")
        known = reconstruction.PhaseMatrix(values, mask)
    report = {"method": args.method, "seed": args.seed, "timings_ms": {}}
    t0 = time.perf_counter()
    if args.method == "pu":
        regions = reconstruction.frame_regions(mag, cfg, analysis.DEFAULT_FLOOR_DB, True)
        onsets = analysis.detect_onsets(mag, segment_frames=cfg.frames_per_window)
        report["timings_ms"]["analysis"] = 1000 * (time.perf_counter() - t0)
        t1 = time.perf_counter()
        phase = reconstruction.reconstruct_phases(mag, known, onsets, cfg, args.onset_phase,
                                                  args.seed, regions=regions).values
        report["timings_ms"]["unwrap"] = 1000 * (time.perf_counter() - t1)
        report["onset_phase"] = args.onset_phase
        report["peaks_per_frame"] = [sum(r.peak is not None for r in rs) for rs in regions]
        report["onsets"] = list(onsets.frames)
        X = Spectrogram.from_polar(mag, phase, cfg, length, args.rate)
    else:
        res = reconstruction.griffin_lim(mag, known, cfg, length, args.iters, args.seed, args.rate)
        report["timings_ms"]["griffin_lim"] = 1000 * (time.perf_counter() - t0)
        report["iters"] = args.iters
        report["inconsistency"] = res.inconsistency
        X = res.spectrogram
    y = istft(X)
    report["timings_ms"]["total"] = 1000 * (time.perf_counter() - t0)
    if x is not None:
        report["sdr_db"] = sdr(x, y)
    wavio.write_wav(args.output, y, args.format)
    wavio.write_json(args.report or _sidecar(args.output), report)


def cmd_corrupt(args):
    cfg = _config(args)
    x = wavio.read_wav(args.input, args.rate)
    y, report = restoration.corrupt_with_clicks(x, args.clicks, args.click_len, args.amp,
                                                args.seed, cfg)
    wavio.write_wav(args.output, y, args.format)
    wavio.write_json(args.report or _sidecar(args.output),
                     {"click_len": report.click_len, "positions": report.positions,
                      "corrupted_frames": report.corrupted_frames})


def cmd_restore(args):
    cfg = _config(args)
    x = wavio.read_wav(args.input, args.rate)
    report = restoration.CorruptionReport.from_dict(wavio.read_json(args.report))
    method = restoration.RestoreMethod(args.method, args.onset_phase, args.iters, args.seed)
    y = restoration.restore(x, report, cfg, method)
    wavio.write_wav(args.output, y, args.format)


def cmd_eval(args):
    if args.scenario is None:
        if not (args.reference and args.estimate):
            raise ValueError("eval needs --scenario, or --reference with --estimate")
        ref = wavio.read_wav(args.reference)
        est = wavio.read_wav(args.estimate, ref.sample_rate)
        value = sdr(ref, est)
        if args.output:
            wavio.write_json(args.output, {"sdr_db": value})
        print(f"{value:.6f}")
        return
    seeds = args.seeds if len(args.seeds) > 1 else list(range(args.seeds[0]))
    spec = experiments.ExperimentSpec(
        args.scenario, tuple(seeds), methods=args.methods, duration=args.duration,
        sample_rate=args.rate, config=_config(args), gl_iters=args.iters,
        gl_seeds=args.gl_seeds, n_clicks=args.clicks,
        fractions=tuple(args.fractions) if args.fractions else experiments.DEFAULT_FRACTIONS,
        timings=not args.no_timings, workers=args.workers)
    rows = experiments.run_experiment(spec)
    wavio.write_csv(args.output, experiments.format_rows(rows), experiments.COLUMNS)


def cmd_bench(args):
    cfg = _config(args)
    if args.input:
        x = wavio.read_wav(args.input, args.rate)
    else:
        x = experiments.bench_signal(args.duration, args.rate, args.seed)
    rows = experiments.bench(x, cfg, args.iters, args.seed)
    wavio.write_csv(args.output, experiments.format_rows(rows), experiments.COLUMNS)
    for r in rows:
        print(f"{r['method']}: {r['runtime_ms']:.1f} ms, SDR {r['sdr_db']:.2f} dB")


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--win", type=int, default=512, help="window length (samples)")
    common.add_argument("--hop", type=int, default=128, help="hop size (samples)")
    common.add_argument("--fft", type=int, default=512, help="FFT length")
    common.add_argument("--rate", type=int, default=11025, help="sample rate (Hz)")
    common.add_argument("-v", "--verbose", action="store_true")

    wav_out = argparse.ArgumentParser(add_help=False)
    wav_out.add_argument("-o", "--output", required=True)
    wav_out.add_argument("--format", choices=wavio.SAMPLE_FORMATS, default="float32")

    onset_choices = [m.value for m in reconstruction.OnsetMethod]
    parser = argparse.ArgumentParser(
        prog="phaseunwrap", description="Phase recovery from STFT magnitudes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common, wav_out], help="generate a test signal")
    p.add_argument("--kind", choices=("sinusoids", "vibrato", "impulses", "damped"),
                   default="sinusoids")
    p.add_argument("--duration", type=float, default=3.0, help="seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--freqs", type=_floats, help="sinusoid frequencies (Hz)")
    p.add_argument("--amps", type=_floats)
    p.add_argument("--phases", type=_floats)
    p.add_argument("--carrier", type=float, default=2800.0, help="vibrato carrier (Hz)")
    p.add_argument("--mod-rate", type=float, default=5.0, help="vibrato rate (Hz)")
    p.add_argument("--depth", type=float, default=28.0, help="vibrato depth (Hz)")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--positions", type=_ints, help="impulse sample positions")
    p.add_argument("--f0", type=float, default=220.0, help="damped tone pitch (Hz)")
    p.add_argument("--partials", type=int, default=8)
    p.add_argument("--t60", type=float, default=1.5, help="-60 dB decay time (s)")
    p.add_argument("--onset", type=int, default=0, help="tone start (samples)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", parents=[common], help="peaks, regions and onsets as JSON")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--floor-db", type=float, default=analysis.DEFAULT_FLOOR_DB)
    p.add_argument("--sensitivity", type=float, default=analysis.DEFAULT_SENSITIVITY)
    p.set_defaults(func=cmd_analyze)

    for name in ("reconstruct", "griffinlim"):
        p = sub.add_parser(name, parents=[common, wav_out],
                           help="recover phases from a WAV or a magnitude .npz")
        p.add_argument("input", help="WAV file, or .npz with 'magnitude' (and 'length')")
        if name == "reconstruct":
            p.add_argument("--method", choices=("pu", "gl"), default="pu")
        else:
            p.set_defaults(method="gl")
        p.add_argument("--onset-phase", choices=onset_choices, default="qi")
        p.add_argument("--iters", type=int, default=200)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--known", help=".npz with 'phase' and boolean 'mask'")
        p.add_argument("--length", type=int, help="signal length for .npz input")
        p.add_argument("--report", help="run report JSON (default: next to the output)")
        p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("corrupt", parents=[common, wav_out], help="add clicks")
    p.add_argument("input")
    p.add_argument("--clicks", type=int, default=3)
    p.add_argument("--click-len", type=int, default=10)
    p.add_argument("--amp", type=float, help="click peak (default 10x signal RMS)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="corruption report JSON (default: next to the output)")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("restore", parents=[common, wav_out], help="repair clicked frames")
    p.add_argument("input")
    p.add_argument("--report", required=True)
    p.add_argument("--method", choices=("pu", "gl"), default="pu")
    p.add_argument("--onset-phase", choices=onset_choices, default="qi")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("eval", parents=[common], help="SDR of two files, or a scenario to CSV")
    p.add_argument("--scenario", choices=experiments.SCENARIOS)
    p.add_argument("--reference")
    p.add_argument("--estimate")
    p.add_argument("--seeds", type=_ints, default=[5],
                   help="item count, or an explicit comma-separated seed list")
    p.add_argument("--methods", type=lambda s: tuple(v for v in s.split(",") if v))
    p.add_argument("--gl-seeds", type=int, default=30)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--duration", type=float, default=3.0)
    p.add_argument("--clicks", type=int, default=3)
    p.add_argument("--fractions", type=_floats)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timings", action="store_true",
                   help="leave runtime_ms empty so the CSV is bit-reproducible")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="PU vs GL wall-clock time")
    p.add_argument("--input", help="WAV file (default: a synthetic note sequence)")
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "eval" and args.scenario is not None and not args.output:
        print("error: eval --scenario needs -o/--output", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
