"""Waveform augmentation: additive Gaussian noise and phase-vocoder pitch shifting."""

import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import get_window
from scipy.signal import resample as fft_resample

from songemo.ingest import AudioClip, DatasetManifest, _fit

VOCODER_N_FFT = 2048
VOCODER_HOP = 512


@dataclass
class AugmentPolicy:
    noise_amplitude_range: tuple = (0.001, 0.015)
    pitch_shift_choices: tuple = (-24, -12, 12, 24)
    copies_per_clip: int = 1
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.noise_amplitude_range
        if not 0 <= lo <= hi:
            raise ValueError("noise_amplitude_range must satisfy 0 <= min <= max")
        if any(s == 0 or abs(s) > 24 for s in self.pitch_shift_choices):
            raise ValueError("pitch shifts must be nonzero and at most 24 semitones")
        if self.copies_per_clip < 1:
            raise ValueError("copies_per_clip must be at least 1")
        self.noise_amplitude_range = (float(lo), float(hi))
        self.pitch_shift_choices = tuple(int(s) for s in self.pitch_shift_choices)

    @property
    def has_transforms(self) -> bool:
        return bool(self.pitch_shift_choices) or self.noise_amplitude_range[1] > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise_amplitude_range"] = list(self.noise_amplitude_range)
        d["pitch_shift_choices"] = list(self.pitch_shift_choices)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPolicy":
        return cls(tuple(d["noise_amplitude_range"]), tuple(d["pitch_shift_choices"]),
                   int(d["copies_per_clip"]), int(d["seed"]))


def derive_seed(seed: int, source_id: str, copy_index: int) -> int:
    """Stable 63-bit seed for one (clip, copy) pair, independent of processing order."""
    digest = hashlib.sha256(f"{seed}\x00{source_id}\x00{copy_index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def add_gaussian_noise(clip: AudioClip, std: float, rng: np.random.Generator) -> AudioClip:
    if std < 0:
        raise ValueError("std must be non-negative")
    if std == 0:
        return clip.replace(samples=clip.samples.copy())
    noisy = clip.samples + rng.normal(0.0, std, size=len(clip))
    return clip.replace(samples=np.clip(noisy, -1.0, 1.0))


def _stft_complex(x, n_fft=VOCODER_N_FFT, hop=VOCODER_HOP):
    window = get_window("hann", n_fft, fftbins=True)
    padded = np.pad(x, n_fft // 2, mode="reflect")
    n_frames = 1 + (len(padded) - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return np.fft.rfft(padded[idx] * window, axis=1).T  # (bins, frames)


def _istft(stft_matrix, length, n_fft=VOCODER_N_FFT, hop=VOCODER_HOP):
    window = get_window("hann", n_fft, fftbins=True)
    frames = np.fft.irfft(stft_matrix, n=n_fft, axis=0).T * window
    n_frames = frames.shape[0]
    total = n_fft + hop * (n_frames - 1)
    y = np.zeros(total)
    wsum = np.zeros(total)
    for t in range(n_frames):
        y[t * hop:t * hop + n_fft] += frames[t]
        wsum[t * hop:t * hop + n_fft] += window ** 2
    nz = wsum > 1e-10
    y[nz] /= wsum[nz]
    return _fit(y[n_fft // 2:], length)


def phase_vocoder(stft_matrix: np.ndarray, rate: float, hop: int = VOCODER_HOP) -> np.ndarray:
    """Resample STFT frames in time by ``rate`` (>1 speeds up) keeping phase coherence."""
    n_bins, n_frames = stft_matrix.shape
    steps = np.arange(0, n_frames, rate)
    padded = np.pad(stft_matrix, [(0, 0), (0, 2)])
    expected_advance = np.linspace(0, np.pi * hop, n_bins)
    phase = np.angle(stft_matrix[:, 0])
    out = np.zeros((n_bins, len(steps)), dtype=complex)
    for t, step in enumerate(steps):
        i = int(step)
        alpha = step - i
        cols = padded[:, i:i + 2]
        mag = (1.0 - alpha) * np.abs(cols[:, 0]) + alpha * np.abs(cols[:, 1])
        out[:, t] = mag * np.exp(1j * phase)
        dphi = np.angle(cols[:, 1]) - np.angle(cols[:, 0]) - expected_advance
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        phase = phase + expected_advance + dphi
    return out


def time_stretch(x: np.ndarray, factor: float) -> np.ndarray:
    """Stretch duration by ``factor`` (2.0 doubles the length) without changing pitch."""
    rate = 1.0 / factor
    stretched = phase_vocoder(_stft_complex(x), rate)
    return _istft(stretched, int(round(len(x) * factor)))


def pitch_shift(clip: AudioClip, semitones: int) -> AudioClip:
    """Shift pitch by ``semitones`` while preserving length and sample rate."""
    if abs(semitones) > 24:
        raise ValueError("pitch shift limited to +/-24 semitones")
    if semitones == 0:
        return clip.replace(samples=clip.samples.copy())
    factor = 2.0 ** (semitones / 12.0)
    stretched = time_stretch(clip.samples, factor)
    shifted = _fit(fft_resample(stretched, len(clip)), len(clip))
    return clip.replace(samples=np.clip(shifted, -1.0, 1.0))


def apply_chain(clip: AudioClip, chain: list) -> AudioClip:
    """Replay a recorded transform chain on the original clip."""
    out = clip
    for step in chain:
        if step["op"] == "pitch_shift":
            out = pitch_shift(out, step["semitones"])
        elif step["op"] == "gaussian_noise":
            out = add_gaussian_noise(out, step["std"], np.random.default_rng(step["seed"]))
        else:
            raise ValueError(f"unknown transform {step['op']!r}")
    return out


@dataclass(frozen=True)
class AugmentedExample:
    source_id: str
    copy_index: int
    chain: tuple  # tuple of transform dicts, empty for originals

    @property
    def is_original(self) -> bool:
        return self.copy_index < 0


@dataclass
class ExpandedTrainingSet:
    examples: list
    policy: AugmentPolicy
    untouched: dict = field(default_factory=dict)  # split -> source ids

    def copies(self) -> list:
        return [e for e in self.examples if not e.is_original]

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.to_dict(),
            "examples": [
                {"source_id": e.source_id, "copy_index": e.copy_index, "chain": list(e.chain)}
                for e in self.examples
            ],
            "untouched": self.untouched,
        }


def make_chain(policy: AugmentPolicy, source_id: str, copy_index: int) -> tuple:
    rng = np.random.default_rng(derive_seed(policy.seed, source_id, copy_index))
    chain = []
    if policy.pitch_shift_choices:
        semis = int(policy.pitch_shift_choices[rng.integers(len(policy.pitch_shift_choices))])
        chain.append({"op": "pitch_shift", "semitones": semis})
    lo, hi = policy.noise_amplitude_range
    if hi > 0:
        std = float(rng.uniform(lo, hi))
        chain.append({"op": "gaussian_noise", "std": std,
                      "seed": int(rng.integers(0, 2 ** 63 - 1))})
    return tuple(chain)


def augment_manifest(manifest: DatasetManifest, policy: AugmentPolicy,
                     splits=("train",)) -> ExpandedTrainingSet:
    """Originals plus ``copies_per_clip`` augmented copies of every entry in ``splits``.

    The test split can never be augmented.
    """
    if not policy.has_transforms:
        raise ValueError("augmentation policy has no transforms")
    if "test" in splits:
        raise ValueError("the test split is never augmented")
    examples = []
    for entry in manifest.entries:
        if entry.split not in splits:
            continue
        examples.append(AugmentedExample(entry.source_id, -1, ()))
        for k in range(policy.copies_per_clip):
            examples.append(AugmentedExample(entry.source_id, k,
                                             make_chain(policy, entry.source_id, k)))
    untouched = {s: [e.source_id for e in manifest.entries if e.split == s]
                 for s in ("train", "val", "test") if s not in splits}
    return ExpandedTrainingSet(examples, policy, untouched)
