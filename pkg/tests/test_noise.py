import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nrfar.dsp import AudioSignal
from nrfar.errors import ConfigError, MixingError
from nrfar.noise import (CLEAN, PEAK, SNR_GRID_DB, NoiseSource, clip_concat_noise, load_clips, mean_power,
                         mix_at_snr, mix_components, normalize_peak, snr_db, snr_grid, white_noise)
from nrfar.synth import write_noise_clips


def tone(n=20000, amp=0.3):
    return AudioSignal(amp * np.sin(2 * np.pi * 250 * np.arange(n) / 2000), 2000)


def test_grid():
    assert SNR_GRID_DB == snr_grid() == (20, 15, 10, 5, 0, -5, -10, -15)


def test_clean_is_normalized_input():
    s = tone()
    m = mix_components(s, None, CLEAN)
    np.testing.assert_allclose(m.audio.samples, s.samples * (PEAK / 0.3), rtol=1e-6)
    assert np.max(np.abs(m.audio.samples)) == PEAK
    assert not m.noise_part.any() and m.noise_gain == 0.0


def test_equal_power_zero_db(rng):
    s = tone()
    m = mix_components(s, rng.normal(size=len(s)), 0.0)
    assert abs(snr_db(m.signal_part, m.noise_part)) < 1e-6


@given(st.floats(-20, 30), st.integers(0, 10_000))
def test_requested_snr_is_met(snr, seed):
    s = tone(4000)
    m = mix_components(s, white_noise(4000, seed), snr)
    assert snr_db(m.signal_part, m.noise_part) == pytest.approx(snr, abs=1e-6)
    assert np.max(np.abs(m.audio.samples)) == PEAK
    np.testing.assert_allclose(m.signal_part + m.noise_part, m.audio.samples, atol=1e-12)


def test_mix_at_snr_is_reproducible():
    a = mix_at_snr(tone(), NoiseSource(), 5.0, seed=3)
    b = mix_at_snr(tone(), NoiseSource(), 5.0, seed=3)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_mixing_errors():
    silent = AudioSignal(np.zeros(100), 2000)
    with pytest.raises(MixingError):
        mix_at_snr(silent, NoiseSource(), 0.0)
    assert not mix_at_snr(silent, NoiseSource(), CLEAN).samples.any()
    with pytest.raises(MixingError):
        mix_components(tone(100), np.zeros(100), 0.0)
    with pytest.raises(MixingError):
        mix_components(tone(100), np.ones(50), 0.0)
    with pytest.raises(MixingError):
        mix_components(tone(100), np.ones(100), math.nan)


def test_normalize_peak_exact(rng):
    for _ in range(50):
        y, _ = normalize_peak(rng.normal(size=777) * rng.uniform(1e-3, 1e3))
        assert np.max(np.abs(y)) == PEAK


def test_white_noise_statistics():
    n = 10**6
    x = white_noise(n, seed=11)
    np.testing.assert_array_equal(x, white_noise(n, seed=11))
    assert abs(x.mean()) < 4 / math.sqrt(n)
    assert abs(x.var() - 1) < 0.02
    xc = x - x.mean()
    denom = xc @ xc
    for lag in (1, 2, 5, 50):
        assert abs(xc[:-lag] @ xc[lag:] / denom) < 0.01


def test_clip_concat_examples():
    a = np.arange(10.0)
    np.testing.assert_array_equal(clip_concat_noise([a], 10), a)
    clips = [np.full(4, v) for v in (1.0, 2.0, 3.0)]
    out = clip_concat_noise(clips, 12, seed=5)
    assert sorted(out[::4]) == [1.0, 2.0, 3.0]
    np.testing.assert_array_equal(out, clip_concat_noise(clips, 12, seed=5))
    part = clip_concat_noise(clips, 10, seed=5)
    assert len(part) == 10
    np.testing.assert_array_equal(part, out[:10])


def test_clip_concat_wraps_with_fresh_permutations():
    clips = [np.full(2, v) for v in (1.0, 2.0)]
    out = clip_concat_noise(clips, 9, seed=0)
    assert len(out) == 9
    assert sorted(out[0:4:2]) == [1.0, 2.0] and sorted(out[4:8:2]) == [1.0, 2.0]


def test_clip_errors(tmp_path):
    with pytest.raises(ConfigError):
        clip_concat_noise([], 10)
    with pytest.raises(ConfigError):
        load_clips(tmp_path)
    with pytest.raises(ConfigError):
        NoiseSource("clips")
    with pytest.raises(ConfigError):
        NoiseSource("pink")


def test_clip_source_from_disk(tmp_path):
    paths = write_noise_clips(tmp_path / "nat", seed=2, per_kind=1, duration_s=5.0)
    assert len(paths) == 4
    src = NoiseSource("clips", str(tmp_path / "nat"))
    assert src.label == "nat"
    clips = load_clips(src.clip_dir)
    x = src.generate(25000, seed=1)
    assert len(x) == 25000 and mean_power(x) > 0
    np.testing.assert_array_equal(x, src.generate(25000, seed=1, clips=clips))
    m = mix_components(tone(25000), x, -5.0)
    assert snr_db(m.signal_part, m.noise_part) == pytest.approx(-5.0, abs=1e-6)
