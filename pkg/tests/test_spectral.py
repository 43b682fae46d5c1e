import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import parseval_rms
from tonaldipls import (Channel, EmptyBandError, InputValidationError, SpectralFrame,
                        SpectralRangeError, band_rms, extract_features, label_from_mics, level_db,
                        to_db)
from tonaldipls.spectral import read_frame, write_frame

FS = 20000.0


def _sine(freq, amp=1.0, dur=10.0, fs=FS, phase=0.3):
    t = np.arange(int(round(fs * dur))) / fs
    return amp * np.sin(2 * np.pi * freq * t + phase)


def test_in_band_sine_gives_amplitude_over_root_two():
    assert band_rms(_sine(120.0), FS, 120.0, 3.0) == pytest.approx(1 / np.sqrt(2), rel=1e-9)


def test_out_of_band_sine_is_rejected():
    assert band_rms(_sine(130.0), FS, 120.0, 3.0) <= 0.01


def test_two_tone_mixture_keeps_in_band_part():
    x = _sine(120.0) + _sine(400.0, amp=5.0, phase=1.1)
    assert band_rms(x, FS, 120.0, 3.0) == pytest.approx(1 / np.sqrt(2), rel=0.02)


def test_band_edges_are_inclusive():
    x = _sine(123.0, dur=1.0)
    assert band_rms(x, FS, 120.0, 3.0) == pytest.approx(1 / np.sqrt(2), rel=1e-9)


def test_segment_averaging_matches_single_window_on_periodic_tone():
    x = _sine(120.0)
    assert band_rms(x, FS, 120.0, 3.0, segment_duration=1.0) == pytest.approx(
        band_rms(x, FS, 120.0, 3.0), rel=1e-9)


def test_hann_window_is_calibrated_for_broad_band():
    x = _sine(120.0, dur=1.0)
    assert band_rms(x, FS, 120.0, 3.0, window="hann") == pytest.approx(1 / np.sqrt(2), rel=1e-3)


def test_full_band_parseval():
    rng = np.random.default_rng(0)
    fs, n = 1000.0, 1000
    t = np.arange(n) / fs
    x = sum(rng.uniform(0.1, 2.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 6))
            for f in (1, 17, 250, 433)) + 0.7
    x = x + 0.2 * np.cos(2 * np.pi * 500 * t)  # Nyquist bin
    nyq = fs / 2
    got = band_rms(x, fs, nyq / 2, nyq / 2)
    assert abs(got - parseval_rms(x)) <= 1e-6 * parseval_rms(x)


def test_band_above_nyquist():
    with pytest.raises(SpectralRangeError):
        band_rms(np.zeros(100), 100.0, 49.0, 3.0)


def test_empty_band():
    with pytest.raises(EmptyBandError):
        band_rms(np.ones(10), 100.0, 15.0, 0.5)


def test_to_db_values():
    assert to_db(3.0, 3.0) == 0.0
    assert to_db(10.0, 1.0) == pytest.approx(20.0)
    assert to_db(2.0, 1.0) == pytest.approx(6.0206, abs=1e-4)


def test_to_db_rejects_non_positive():
    with pytest.raises(ValueError):
        to_db(0.0, 1.0)
    with pytest.raises(ValueError):
        to_db(1.0, -1.0)


def test_level_floor_for_dead_channel():
    assert level_db(0.0, 1e-6) == -120.0
    assert level_db(1e-30, 1e-6, floor_db=-90.0) == -90.0


def test_mic_label_is_arithmetic_mean():
    assert label_from_mics([50.0] * 8) == 50.0
    assert label_from_mics([40.0, 60.0]) == 50.0
    assert label_from_mics([40, 43, 46, 49, 52, 55, 41, 44]) == pytest.approx(46.25)
    with pytest.raises(InputValidationError):
        label_from_mics([])


def _frame(channels, dur=2.0, fs=2000.0, f0=60.0):
    return SpectralFrame(channels=channels, sample_rate=fs, duration=dur, fundamental_f=f0,
                         sample_id="s1", condition_id="c1", timestamp="t0")


def test_unit_ratio_feature_is_zero_db():
    ref = 1e-6
    ch = Channel("a1", "acceleration", _sine(120.0, amp=ref * np.sqrt(2), dur=2.0, fs=2000.0))
    row = extract_features(_frame([ch]), 3.0, {"acceleration": ref, "microphone": 2e-5})
    assert row.features[0] == pytest.approx(0.0, abs=1e-9)
    assert row.label_db is None
    assert row.feature_kinds == ("acceleration",)


def test_mic_only_frame_gives_label_only_row():
    amp = 2e-5 * np.sqrt(2) * 10 ** (45.0 / 20)
    chans = [Channel(f"m{i}", "microphone", _sine(120.0, amp=amp, dur=2.0, fs=2000.0, phase=i))
             for i in range(2)]
    row = extract_features(_frame(chans))
    assert row.features.size == 0
    assert row.label_db == pytest.approx(45.0, abs=1e-9)


def test_temperature_channels_use_window_mean():
    chans = [Channel("T1", "temperature", [20.0, 22.0, 24.0]),
             Channel("a1", "acceleration", _sine(120.0, dur=2.0, fs=2000.0))]
    row = extract_features(_frame(chans))
    assert row.feature_names == ("T1", "a1")
    assert row.feature_kinds == ("thermodynamic", "acceleration")
    assert row.features[0] == 22.0


def test_mixed_sample_counts_rejected():
    with pytest.raises(InputValidationError):
        _frame([Channel("a1", "acceleration", np.zeros(4000)),
                Channel("a2", "acceleration", np.zeros(3999))])


def test_missing_reference_rejected():
    ch = Channel("m1", "microphone", _sine(120.0, dur=2.0, fs=2000.0))
    with pytest.raises(InputValidationError):
        extract_features(_frame([ch]), 3.0, {"acceleration": 1e-6})


def test_nyquist_violation_in_frame():
    ch = Channel("a1", "acceleration", np.zeros(200))
    with pytest.raises(SpectralRangeError):
        extract_features(_frame([ch], dur=1.0, fs=200.0, f0=49.0))


def test_channel_permutation_follows_manifest():
    rng = np.random.default_rng(1)
    chans = [Channel(f"a{i}", "acceleration", _sine(120.0, amp=a, dur=2.0, fs=2000.0))
             for i, a in enumerate(rng.uniform(0.1, 2.0, 4))]
    base = extract_features(_frame(chans))
    perm = [2, 0, 3, 1]
    shuffled = extract_features(_frame([chans[i] for i in perm]))
    np.testing.assert_allclose(shuffled.features, base.features[perm])
    pinned = extract_features(_frame([chans[i] for i in perm]), feature_order=list(base.feature_names))
    np.testing.assert_allclose(pinned.features, base.features)


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(1e-3, 1e3), freq=st.integers(117, 123))
def test_scale_equivariance(alpha, freq):
    x = _sine(float(freq), dur=1.0, fs=2000.0) + 0.5 * _sine(300.0, dur=1.0, fs=2000.0)
    r1 = band_rms(x, 2000.0, 120.0, 3.0)
    r2 = band_rms(alpha * x, 2000.0, 120.0, 3.0)
    assert r2 == pytest.approx(alpha * r1, rel=1e-9, abs=1e-300)
    if r1 > 0:
        assert to_db(r2, 1e-6) - to_db(r1, 1e-6) == pytest.approx(20 * np.log10(alpha), abs=1e-9)


@pytest.mark.parametrize("encoding", ["f64le", "csv"])
def test_frame_container_round_trip(tmp_path, encoding):
    chans = [Channel("a1", "acceleration", _sine(120.0, dur=0.5, fs=2000.0), "m/s^2"),
             Channel("T1", "temperature", [1.5, 2.5], "degC")]
    frame = SpectralFrame(chans, 2000.0, 0.5, 60.0, "s9", "c2", "t")
    back = read_frame(write_frame(tmp_path, frame, encoding=encoding))
    assert back.sample_id == "s9" and back.condition_id == "c2"
    for a, b in zip(frame.channels, back.channels):
        assert (a.channel_id, a.kind, a.unit) == (b.channel_id, b.kind, b.unit)
        np.testing.assert_array_equal(a.samples, b.samples)


def test_corrupt_container_names_file(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    with pytest.raises(InputValidationError, match="broken.json"):
        read_frame(bad)


def test_truncated_data_block_names_file(tmp_path):
    frame = SpectralFrame([Channel("a1", "acceleration", np.ones(100))], 100.0, 1.0, 10.0, "s1")
    path = write_frame(tmp_path, frame)
    (tmp_path / "s1.bin").write_bytes(b"\0" * 16)
    with pytest.raises(InputValidationError, match="s1.json"):
        read_frame(path)
