import numpy as np
import pytest

from bsmkit.audio import AudioBuffer, AudioError, read_audio, resample, write_audio


def test_float32_round_trip(tmp_path, rng):
    buf = AudioBuffer(rng.normal(0, 0.3, (2, 500)).astype(np.float32), 16000)
    path = tmp_path / "x.wav"
    write_audio(path, buf)
    back = read_audio(path)
    assert back.sample_rate == 16000
    np.testing.assert_array_equal(back.samples, buf.samples)


def test_pcm16_full_scale(tmp_path):
    buf = AudioBuffer(np.array([[1.0, -1.0, 0.0]]), 16000)
    path = tmp_path / "x.wav"
    write_audio(path, buf, encoding="pcm16")
    back = read_audio(path)
    assert back.samples[0, 0] == pytest.approx(32767 / 32768)
    assert back.samples[0, 1] == pytest.approx(-1.0)


def test_channel_count_mismatch(tmp_path):
    write_audio(tmp_path / "mono.wav", AudioBuffer(np.zeros((1, 10)), 16000))
    with pytest.raises(AudioError, match="channels"):
        read_audio(tmp_path / "mono.wav", expect_channels=2)


def test_truncated_file(tmp_path):
    path = tmp_path / "bad.wav"
    write_audio(path, AudioBuffer(np.zeros((1, 100)), 16000))
    path.write_bytes(path.read_bytes()[:30])
    with pytest.raises(AudioError):
        read_audio(path)


def test_non_finite_rejected():
    with pytest.raises(AudioError, match="finite"):
        AudioBuffer(np.array([[np.nan, 0.0]]), 16000)


def test_unequal_rate_error():
    with pytest.raises(AudioError):
        AudioBuffer(np.zeros((1, 4)), 0)


def test_resample_tone_preserved():
    fs0 = 48000
    t = np.arange(fs0) / fs0
    buf = AudioBuffer(np.sin(2 * np.pi * 440 * t)[None, :], fs0)
    out = resample(buf, 16000)
    assert out.sample_rate == 16000
    assert out.n_samples == 16000
    # Interior should still be a 440 Hz unit tone.
    seg = out.samples[0, 2000:14000]
    ref = np.sin(2 * np.pi * 440 * np.arange(2000, 14000) / 16000)
    assert np.max(np.abs(seg - ref)) < 1e-3
