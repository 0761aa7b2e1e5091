import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from escnet.audio import AudioClip
from escnet.errors import ClipTooShort, ShapeMismatch, TooFewFrames
from escnet.features import (
    BandType, Spectrogram, apply_filterbank_log, delta, drop_silence, erb, featurize,
    gammatone_filterbank, hz_to_mel, mel_filterbank, mel_to_hz, segment, stft_power,
)

from conftest import SR, direct_dft


def brute_delta(x):
    b, t = x.shape
    out = np.zeros_like(x)
    for i in range(b):
        for j in range(t):
            acc = 0.0
            for k in range(1, 5):
                acc += k * (x[i, min(j + k, t - 1)] - x[i, max(j - k, 0)])
            out[i, j] = acc / 60.0
    return out


def test_stft_frame_count():
    assert stft_power(np.zeros(220500)).shape == (513, 429)


def test_stft_zero_clip():
    assert not stft_power(np.zeros(4096)).any()


def test_stft_bin_center_sine():
    t = np.arange(4096) / SR
    p = stft_power(np.sin(2 * np.pi * 43 * SR / 1024 * t))
    assert np.all(p.argmax(axis=0) == 43)


def test_stft_too_short():
    with pytest.raises(ClipTooShort):
        stft_power(np.zeros(1000))


def test_stft_matches_direct_dft(rng):
    for _ in range(5):
        x = rng.standard_normal(1024)
        window = 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(1024) / 1024)
        expected = np.abs(direct_dft(x * window)) ** 2
        got = stft_power(x)[:, 0]
        np.testing.assert_allclose(got, expected, rtol=1e-6, atol=1e-6 * expected.max())


def test_mel_formula():
    assert hz_to_mel(0) == 0
    assert hz_to_mel(700) == pytest.approx(2595 * np.log10(2))
    assert hz_to_mel(700) == pytest.approx(781.17, abs=0.01)
    for f in (100, 1000, 10000):
        assert mel_to_hz(hz_to_mel(f)) == pytest.approx(f, rel=1e-9)


def test_mel_filterbank_invariants():
    fb = mel_filterbank()
    assert fb.weights.shape == (128, 513)
    assert np.all(fb.weights >= 0)
    assert np.all(fb.weights.max(axis=1) > 0)
    bins = np.arange(513) * SR / 1024
    inside = (bins >= fb.centers[0]) & (bins <= fb.centers[-1])
    assert np.all(fb.weights[:, inside].sum(axis=0) > 0)


def test_erb_value():
    assert erb(1000) == pytest.approx(132.639)


def test_gammatone_filterbank_peaks():
    fb = gammatone_filterbank()
    assert fb.weights.shape == (128, 513)
    assert np.all(fb.weights >= 0)
    nearest = np.rint(fb.centers * 1024 / SR).astype(int)
    np.testing.assert_array_equal(fb.weights.argmax(axis=1), nearest)
    np.testing.assert_allclose(fb.weights[np.arange(128), nearest], 1.0)
    assert fb.centers[0] == pytest.approx(20.0)
    assert fb.centers[-1] == pytest.approx(SR / 2)


def test_apply_filterbank_log():
    fb = mel_filterbank()
    assert np.all(apply_filterbank_log(np.zeros((513, 3)), fb).values == pytest.approx(-10.0))
    power = np.abs(np.random.default_rng(0).standard_normal((513, 4))) + 1.0
    a = apply_filterbank_log(power, fb).values
    b = apply_filterbank_log(2 * power, fb).values
    np.testing.assert_allclose(b - a, np.log10(2), atol=1e-8)
    with pytest.raises(ShapeMismatch):
        apply_filterbank_log(np.zeros((512, 3)), fb)


def test_single_bin_filter_log_of_one():
    from escnet.features import Filterbank
    w = np.zeros((1, 513))
    w[0, 7] = 1.0
    fb = Filterbank(w, BandType.MEL, 0, SR / 2, np.array([0.0]))
    power = np.zeros((513, 1))
    power[7] = 1.0
    assert apply_filterbank_log(power, fb).values[0, 0] == pytest.approx(0.0, abs=1e-9)


def _spec(values):
    return Spectrogram(np.asarray(values, dtype=np.float64), BandType.MEL, 512 / SR)


def test_drop_silence_cases():
    uniform = _spec(np.zeros((128, 40)))
    assert drop_silence(uniform, 60).n_frames == 40

    mixed = np.zeros((128, 150))
    mixed[:, 100:] = -8.0  # 80 dB below
    assert drop_silence(_spec(mixed), 60).n_frames == 100

    silent = _spec(np.full((128, 30), -10.0))
    assert drop_silence(silent, 60).n_frames == 30  # uniform silence is still uniform
    quiet = np.full((128, 30), -10.0)
    quiet[:, 5] = 0.0
    out = drop_silence(_spec(quiet), 5)
    assert out.n_frames == 1


@settings(deadline=None, max_examples=30)
@given(st.integers(1, 60), st.floats(0, 120))
def test_drop_silence_bounds(frames, threshold):
    values = np.random.default_rng(frames).uniform(-10, 0, (128, frames))
    out = drop_silence(_spec(values), threshold)
    assert 1 <= out.n_frames <= frames


@pytest.mark.parametrize("frames, count", [(431, 5), (128, 1), (100, 1), (192, 2), (255, 2)])
def test_segment_counts(frames, count):
    segs = segment(np.zeros((128, frames)))
    assert len(segs) == count
    assert all(s.shape == (128, 128) for s in segs)


def test_segment_tiling():
    x = np.arange(100, dtype=float)[None, :].repeat(128, axis=0)
    (seg,) = segment(x)
    np.testing.assert_array_equal(seg[0, :100], np.arange(100))
    np.testing.assert_array_equal(seg[0, 100:], np.arange(28))


@given(st.integers(128, 600))
def test_segment_boundaries(frames):
    x = np.arange(frames, dtype=float)[None, :].repeat(2, axis=0)
    segs = segment(x)
    assert len(segs) == (frames - 128) // 64 + 1
    for i, s in enumerate(segs):
        assert s[0, 0] == 64 * i
    for a, b in zip(segs, segs[1:]):
        np.testing.assert_array_equal(a[:, 64:], b[:, :64])


def test_delta_constant_is_zero():
    assert np.all(delta(np.full((128, 128), 3.7)) == 0.0)


def test_delta_ramp_interior():
    x = np.tile(np.arange(128, dtype=float), (4, 1))
    d = delta(x)
    np.testing.assert_allclose(d[:, 4:-4], 1.0, atol=1e-12)


def test_delta_matches_brute_force(rng):
    x = rng.standard_normal((128, 128))
    np.testing.assert_allclose(delta(x), brute_delta(x), atol=1e-12)


def test_delta_too_few_frames():
    with pytest.raises(TooFewFrames):
        delta(np.zeros((4, 8)))


def _noise_clip(seconds, seed=0):
    rng = np.random.default_rng(seed)
    return AudioClip(rng.uniform(-1, 1, int(seconds * SR)), SR, "noise")


@pytest.mark.parametrize("kind", list(BandType))
def test_featurize_five_second_clip(kind):
    segs = featurize(_noise_clip(5.0), kind)
    assert len(segs) == 5
    for i, s in enumerate(segs):
        assert s.values.shape == (128, 128, 2)
        assert s.segment_index == i
        assert s.clip_id == "noise"
        np.testing.assert_allclose(s.values[:, :, 1], delta(s.values[:, :, 0]), atol=1e-12)
        assert np.all(np.isfinite(s.values))


def test_featurize_deterministic():
    a = featurize(_noise_clip(2.0, 3))
    b = featurize(_noise_clip(2.0, 3))
    assert all(x.values.tobytes() == y.values.tobytes() for x, y in zip(a, b))


def test_featurize_short_clip_single_segment():
    segs = featurize(_noise_clip(0.5))
    assert len(segs) == 1 and segs[0].values.shape == (128, 128, 2)
