import numpy as np
import pytest

from songemo import CLIP_SAMPLES, SAMPLE_RATE
from songemo.ingest import AudioClip


def sine(freq, n=CLIP_SAMPLES, sr=SAMPLE_RATE, amp=0.5):
    t = np.arange(n) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr, f"sine{freq}")


def peak_hz(samples, sr):
    mags = np.abs(np.fft.rfft(samples * np.hanning(len(samples))))
    return np.fft.rfftfreq(len(samples), 1.0 / sr)[np.argmax(mags)]


@pytest.fixture
def tone():
    return sine


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
