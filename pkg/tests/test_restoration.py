import json

import numpy as np
import pytest

from phaseunwrap.errors import DataError
from phaseunwrap.experiments import damped_item
from phaseunwrap.metrics import sdr
from phaseunwrap.restoration import (MAGNITUDE_FLOOR_DB, CorruptionReport, RestoreMethod,
                                     corrupt_phases, corrupt_with_clicks, interpolate_magnitude,
                                     restore)
from phaseunwrap.stft import Signal, StftConfig, stft

from conftest import RATE


@pytest.fixture(scope="module")
def tone():
    return damped_item(0, 3 * RATE, RATE)


def test_no_clicks_is_identity(tone):
    y, report = corrupt_with_clicks(tone, 0)
    np.testing.assert_array_equal(y.samples, tone.samples)
    assert report.positions == [] and report.corrupted_frames == []


def test_single_click_frames(tone, cfg):
    y, report = corrupt_with_clicks(tone, 1, seed=3)
    (p,) = report.positions
    g = p + cfg.pad_start
    expected = [t for t in range(cfg.n_frames(len(tone)))
                if t * cfg.hop <= g + 9 and t * cfg.hop + cfg.win_len > g]
    assert report.corrupted_frames == expected
    if g // cfg.hop == (g + 9) // cfg.hop:
        assert len(expected) == 4
    diff = np.flatnonzero(y.samples != tone.samples)
    assert diff.min() >= p and diff.max() < p + 10


def test_click_amplitude_lowers_sdr(tone):
    rms = np.sqrt(np.mean(tone.samples ** 2))
    values = [sdr(tone, corrupt_with_clicks(tone, 3, amp=a * rms, seed=1)[0])
              for a in (0.1, 1.0, 10.0)]
    assert all(np.isfinite(values))
    assert values[0] > values[1] > values[2]


def test_clicks_spaced_by_a_window(tone, cfg):
    _, report = corrupt_with_clicks(tone, 3, seed=8)
    assert np.all(np.diff(report.positions) >= cfg.win_len)


def test_click_budget_enforced(tone):
    with pytest.raises(ValueError):
        corrupt_with_clicks(tone, 34)


def test_unplaceable_clicks():
    x = Signal(np.ones(20000), RATE)
    with pytest.raises(DataError):
        corrupt_with_clicks(x, 60, click_len=3)


def test_corrupt_phases_extremes(tone, cfg):
    X = stft(tone, cfg)
    Y, mask = corrupt_phases(X, 0.0)
    np.testing.assert_array_equal(Y.bins, X.bins)
    assert not mask.any()
    Y, mask = corrupt_phases(X, 1.0)
    assert mask.all()
    np.testing.assert_allclose(Y.magnitude, X.magnitude, rtol=1e-12)


def test_corrupt_phases_density(cfg):
    c = StftConfig()
    x = Signal(np.random.default_rng(0).normal(size=255 * c.hop - c.pad_start + 1), RATE)
    X = stft(x, c)
    assert X.shape == (257, 256)
    _, mask = corrupt_phases(X, 0.5, seed=2)
    assert abs(mask.mean() - 0.5) <= 0.02


def test_corrupt_phases_fraction_checked(tone, cfg):
    with pytest.raises(ValueError):
        corrupt_phases(stft(tone, cfg), 1.5)


def test_interpolation_geometric_midpoint():
    mag = np.ones((3, 3))
    mag[:, 2] = np.e ** 2
    out = interpolate_magnitude(mag, [1])
    np.testing.assert_allclose(out[:, 1], np.e)


def test_interpolation_identity_without_gaps():
    mag = np.random.default_rng(0).random((5, 6)) + 0.1
    np.testing.assert_array_equal(interpolate_magnitude(mag, []), mag)


def test_interpolation_edge_runs_copy_neighbour():
    mag = np.arange(1, 13, dtype=float).reshape(3, 4)
    out = interpolate_magnitude(mag, [0, 3])
    np.testing.assert_allclose(out[:, 0], mag[:, 1])
    np.testing.assert_allclose(out[:, 3], mag[:, 2])


def test_interpolation_all_corrupted():
    with pytest.raises(DataError):
        interpolate_magnitude(np.ones((3, 3)), [0, 1, 2])


def test_interpolation_floor_and_finite():
    mag = np.zeros((4, 5))
    mag[0, 0] = 1.0
    out = interpolate_magnitude(mag, [2])
    assert np.all(np.isfinite(out))
    assert out.min() >= 10 ** (MAGNITUDE_FLOOR_DB / 20) * (1 - 1e-12)


def test_interpolated_envelope_tracks_decay(cfg):
    # each partial's envelope decays exponentially, i.e. linearly in dB
    f0, decay = 16 / 512, 4e-4
    from phaseunwrap.synth import gen_damped_tone
    x = gen_damped_tone(f0, 4, decay, 3 * RATE, RATE, seed=1)
    mag = stft(x, cfg).magnitude
    gap = [60, 61, 62, 63]
    out = interpolate_magnitude(mag, gap)
    for h in range(1, 5):
        k = 16 * h
        truth = mag[k, 59] * np.exp(-decay * cfg.hop * (np.array(gap) - 59))
        err_db = 20 * np.abs(np.log10(out[k, gap] / truth))
        assert err_db.max() < 1.0


def test_restore_empty_report(tone, cfg):
    y = restore(tone, CorruptionReport(), cfg)
    np.testing.assert_array_equal(y.samples, tone.samples)


@pytest.mark.parametrize("kind", ["pu", "gl"])
def test_restore_improves_and_passes_through(tone, cfg, kind):
    y, report = corrupt_with_clicks(tone, 3, seed=4)
    z = restore(y, report, cfg, RestoreMethod(kind, iters=50))
    assert sdr(tone, z) >= sdr(tone, y) + 5
    support = np.zeros(len(y), dtype=bool)
    for t in report.corrupted_frames:
        a = max(cfg.frame_start(t), 0)
        support[a:cfg.frame_start(t) + cfg.win_len] = True
    np.testing.assert_array_equal(z.samples[~support], y.samples[~support])


def test_restore_deterministic(tone, cfg):
    y, report = corrupt_with_clicks(tone, 3, seed=6)
    a = restore(y, report, cfg, RestoreMethod("gl", iters=10, seed=2)).samples
    b = restore(y, report, cfg, RestoreMethod("gl", iters=10, seed=2)).samples
    np.testing.assert_array_equal(a, b)


def test_restore_rejects_foreign_report(cfg):
    x = Signal(np.ones(3000), RATE)
    with pytest.raises(DataError):
        restore(x, CorruptionReport(10, [0], [500]), cfg)


def test_restore_method_validated():
    with pytest.raises(ValueError):
        RestoreMethod("ar")
    with pytest.raises(ValueError):
        RestoreMethod("pu", onset="bogus")


def test_report_json_round_trip():
    report = CorruptionReport(10, [5, 900], [0, 1, 2, 3, 7])
    back = CorruptionReport.from_dict(json.loads(report.to_json()))
    assert back == report


def test_malformed_report():
    with pytest.raises(DataError):
        CorruptionReport.from_dict({"positions": [1]})
