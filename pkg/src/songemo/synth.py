"""Synthetic labeled tone corpora for smoke tests and demos.

Each emotion class is a fixed chord of pitch classes; clips vary in octave,
detuning, note amplitudes, vibrato and background noise.
"""

from pathlib import Path

import numpy as np

from songemo import CLIP_SAMPLES, EMOTIONS, SAMPLE_RATE
from songemo.ingest import AudioClip, EmotionLabel, write_wav

# Semitone offsets from A for each class: triads rooted two semitones apart.
CLASS_CHORDS = tuple((2 * c, 2 * c + 4, 2 * c + 7) for c in range(len(EMOTIONS)))


def tone_clip(label_index: int, rng: np.random.Generator, num_samples: int = CLIP_SAMPLES,
              sample_rate: int = SAMPLE_RATE, noise: float = 0.01) -> np.ndarray:
    t = np.arange(num_samples) / sample_rate
    octave = rng.integers(-1, 1)  # A3- or A4-rooted
    y = np.zeros(num_samples)
    for semis in CLASS_CHORDS[label_index]:
        f = 440.0 * 2.0 ** (octave + semis / 12.0 + rng.uniform(-0.15, 0.15) / 12.0)
        vib = 1.0 + 0.003 * np.sin(2 * np.pi * rng.uniform(4, 6) * t)
        phase = 2 * np.pi * np.cumsum(f * vib) / sample_rate + rng.uniform(0, 2 * np.pi)
        y += rng.uniform(0.4, 1.0) * np.sin(phase)
    y *= rng.uniform(0.15, 0.3) / np.max(np.abs(y))
    y += rng.normal(0.0, noise, num_samples)
    return np.clip(y, -1.0, 1.0)


def corpus_filename(label_index: int, serial: int) -> str:
    """A song-channel corpus name; ``serial`` is spread over statement/repetition/actor fields."""
    statement = serial % 2 + 1
    repetition = serial // 2 % 2 + 1
    intensity = serial // 4 % 2 + 1
    actor = serial // 8 + 1
    if actor > 99:
        raise ValueError("too many clips for one class")
    return f"03-02-{label_index + 1:02d}-{intensity:02d}-{statement:02d}-{repetition:02d}-{actor:02d}.wav"


def make_clips(per_class: int, seed: int = 0, num_samples: int = CLIP_SAMPLES) -> list:
    """``per_class`` clips for each of the six classes, in class-major order."""
    rng = np.random.default_rng(seed)
    clips = []
    for c in range(len(EMOTIONS)):
        for i in range(per_class):
            samples = tone_clip(c, rng, num_samples)
            clips.append(AudioClip(samples, SAMPLE_RATE, corpus_filename(c, i)[:-4],
                                   EmotionLabel.from_index(c)))
    return clips


def write_corpus(root, per_class: int, seed: int = 0, num_samples: int = CLIP_SAMPLES) -> list:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for clip in make_clips(per_class, seed, num_samples):
        path = root / f"{clip.source_id}.wav"
        write_wav(path, clip)
        paths.append(path)
    return paths
