import numpy as np
import pytest
from scipy.signal import butter, sosfiltfilt

from bsmkit.audio import AudioBuffer
from bsmkit.hrtf import analytic_sphere_set
from bsmkit.synth import write_corpus

FS = 16000


@pytest.fixture(scope="session")
def hrtf_set():
    return analytic_sphere_set()


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus")
    write_corpus(path, n_clips=6, seconds=4.0, seed=11)
    return path


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def white_buffer(rng, seconds=1.0, channels=1, fs=FS, amp=0.1):
    return AudioBuffer(rng.normal(0.0, amp, (channels, int(seconds * fs))), fs)


def schroeder_t20(rir: np.ndarray, fs: int) -> float:
    """Independent T60 oracle: band-limit 200-6000 Hz, backward-integrate the
    energy, fit -5..-25 dB, extrapolate to 60 dB."""
    sos = butter(4, [200, 6000], "bandpass", fs=fs, output="sos")
    x = sosfiltfilt(sos, rir)
    edc = np.cumsum(x[::-1] ** 2)[::-1]
    db = 10 * np.log10(np.maximum(edc / edc[0], 1e-30))
    i5 = int(np.argmax(db <= -5.0))
    i25 = int(np.argmax(db <= -25.0))
    assert i25 > i5 + 4, "decay range not resolved"
    t = np.arange(db.size) / fs
    a = np.vstack([t[i5:i25], np.ones(i25 - i5)]).T
    slope = np.linalg.lstsq(a, db[i5:i25], rcond=None)[0][0]
    return -60.0 / slope
