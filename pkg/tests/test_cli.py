import csv
import json

import numpy as np
import pytest
from scipy.io import wavfile

from phaseunwrap import cli, wavio
from phaseunwrap.errors import DataError
from phaseunwrap.stft import Signal, StftConfig, stft

from conftest import RATE


@pytest.fixture
def tone(tmp_path):
    path = tmp_path / "tone.wav"
    assert cli.main(["synth", "--kind", "damped", "--duration", "1.5", "-o", str(path)]) == 0
    return path


def test_synth_writes_sidecar(tone):
    meta = json.loads(tone.with_suffix(".json").read_text())
    assert meta["kind"] == "damped" and meta["length"] == round(1.5 * RATE)
    x = wavio.read_wav(tone)
    assert x.sample_rate == RATE and len(x) == meta["length"]


@pytest.mark.parametrize("args", [["--kind", "sinusoids", "--freqs", "300,1200"],
                                  ["--kind", "vibrato"], ["--kind", "impulses",
                                                          "--positions", "100,900"]])
def test_synth_kinds(tmp_path, args):
    out = tmp_path / "s.wav"
    assert cli.main(["synth", "--duration", "0.5", "-o", str(out)] + args) == 0
    assert out.exists()


def test_synth_bad_lengths(tmp_path):
    code = cli.main(["synth", "--freqs", "300,400", "--amps", "1", "-o", str(tmp_path / "s.wav")])
    assert code == 2


def test_analyze(tone, tmp_path):
    out = tmp_path / "a.json"
    assert cli.main(["analyze", str(tone), "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["onsets"][0] == 0
    first = report["frames"][10][0]
    assert set(first) == {"k_p", "A_p", "f0", "lo", "hi"}
    assert first["lo"] <= first["k_p"] <= first["hi"]


@pytest.mark.parametrize("cmd", [["reconstruct"], ["reconstruct", "--method", "gl",
                                                   "--iters", "5"],
                                 ["griffinlim", "--iters", "5"]])
def test_reconstruct_from_wav(tone, tmp_path, cmd):
    out = tmp_path / "r.wav"
    assert cli.main(cmd + [str(tone), "-o", str(out)]) == 0
    report = json.loads(out.with_suffix(".json").read_text())
    assert "total" in report["timings_ms"]
    if report["method"] == "gl":
        assert len(report["inconsistency"]) == 6
    else:
        assert report["onsets"] and len(report["peaks_per_frame"]) > 0


def test_reconstruct_from_npz_with_known_phases(tone, tmp_path):
    cfg = StftConfig()
    x = wavio.read_wav(tone)
    X = stft(x, cfg)
    np.savez(tmp_path / "mag.npz", magnitude=X.magnitude, length=len(x))
    np.savez(tmp_path / "known.npz", phase=X.phase, mask=np.ones(X.shape, dtype=bool))
    out = tmp_path / "r.wav"
    code = cli.main(["reconstruct", str(tmp_path / "mag.npz"), "--known",
                     str(tmp_path / "known.npz"), "-o", str(out)])
    assert code == 0
    y = wavio.read_wav(out)
    np.testing.assert_allclose(y.samples, x.samples, atol=1e-6)


def test_reconstruct_npz_shape_mismatch(tmp_path):
    np.savez(tmp_path / "mag.npz", magnitude=np.ones((100, 4)), length=100)
    assert cli.main(["reconstruct", str(tmp_path / "mag.npz"), "-o",
                     str(tmp_path / "o.wav")]) == 3


def test_corrupt_restore_eval(tone, tmp_path):
    bad, rep, fixed = tmp_path / "c.wav", tmp_path / "c.json", tmp_path / "f.wav"
    assert cli.main(["corrupt", str(tone), "--clicks", "2", "--seed", "1", "-o", str(bad),
                     "--report", str(rep)]) == 0
    report = json.loads(rep.read_text())
    assert set(report) == {"click_len", "positions", "corrupted_frames"}
    assert cli.main(["restore", str(bad), "--report", str(rep), "-o", str(fixed)]) == 0
    clean = wavio.read_wav(tone)
    from phaseunwrap.metrics import sdr
    assert sdr(clean, wavio.read_wav(fixed)) > sdr(clean, wavio.read_wav(bad)) + 5


def test_eval_two_files(tone, capsys):
    assert cli.main(["eval", "--reference", str(tone), "--estimate", str(tone)]) == 0
    assert float(capsys.readouterr().out) == 300.0


def test_eval_scenario_csv(tmp_path):
    out = tmp_path / "m.csv"
    code = cli.main(["eval", "--scenario", "onset", "--seeds", "2", "--methods", "qi,imp",
                     "--duration", "1", "--no-timings", "-o", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert rows[0].keys() == {"scenario", "method", "seed", "corruption_pct", "sdr_db",
                              "runtime_ms", "config_hash"}
    assert len(rows) == 4 + 4


def test_eval_needs_inputs():
    assert cli.main(["eval"]) == 2
    assert cli.main(["eval", "--scenario", "onset"]) == 2


def test_bench(tmp_path):
    out = tmp_path / "b.csv"
    assert cli.main(["bench", "--duration", "1", "--iters", "3", "-o", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["method"] for r in rows] == ["pu", "gl"]


def test_exit_codes(tone, tmp_path):
    out = str(tmp_path / "x.wav")
    assert cli.main(["nope"]) == 2
    assert cli.main(["reconstruct", str(tone), "--method", "xx", "-o", out]) == 2
    assert cli.main(["restore", str(tone), "--report", str(tmp_path / "missing.json"),
                     "-o", out]) == 3
    assert cli.main(["analyze", str(tone), "--rate", "44100", "-o", out]) == 3
    assert cli.main(["analyze", str(tmp_path / "missing.wav"), "-o", out]) == 3
    assert cli.main(["corrupt", str(tone), "--clicks", "100", "-o", out]) == 2


def test_outputs_are_idempotent(tone, tmp_path):
    out = tmp_path / "r.wav"
    cli.main(["reconstruct", str(tone), "-o", str(out), "--format", "pcm16"])
    first = out.read_bytes()
    cli.main(["reconstruct", str(tone), "-o", str(out), "--format", "pcm16"])
    assert out.read_bytes() == first
    assert not list(tmp_path.glob("*.tmp"))


# -- wav I/O ---------------------------------------------------------------------

def test_pcm16_round_trip(tmp_path):
    x = Signal(np.linspace(-0.5, 0.5, 100), RATE)
    wavio.write_wav(tmp_path / "a.wav", x, "pcm16")
    y = wavio.read_wav(tmp_path / "a.wav")
    np.testing.assert_allclose(y.samples, x.samples, atol=1 / 32768)


def test_stereo_is_averaged(tmp_path):
    data = np.stack([np.full(10, 0.5), np.full(10, -0.25)], axis=1).astype(np.float32)
    wavfile.write(tmp_path / "s.wav", RATE, data)
    np.testing.assert_allclose(wavio.read_wav(tmp_path / "s.wav").samples, 0.125)


def test_rate_mismatch(tmp_path):
    wavio.write_wav(tmp_path / "a.wav", Signal(np.zeros(10), 8000))
    with pytest.raises(DataError):
        wavio.read_wav(tmp_path / "a.wav", RATE)


def test_bad_format(tmp_path):
    with pytest.raises(ValueError):
        wavio.write_wav(tmp_path / "a.wav", Signal(np.zeros(10), RATE), "mp3")
