"""Low-level audio features, the MLP front-end vector and PCA projection."""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct
from scipy.signal import get_window

from songemo import CLIP_SAMPLES, HOP_LENGTH, N_FFT, NUM_FRAMES, SAMPLE_RATE
from songemo.ingest import AudioClip

FEATURE_KINDS = ("chroma", "mel", "mfcc", "centroid", "rolloff", "zcr")
CONCAT_ORDER = ("chroma", "mfcc", "centroid", "rolloff", "zcr")
N_MELS = 128
N_MFCC = 12
ROLLOFF_FRACTION = 0.85
DB_FLOOR = 1e-10


class FeatureError(ValueError):
    pass


@dataclass
class Spectrogram:
    magnitudes: np.ndarray  # (freq_bins, frames)
    bin_frequencies_hz: np.ndarray
    window_size: int = N_FFT
    hop: int = HOP_LENGTH
    window_kind: str = "hann"

    @property
    def frame_params(self):
        return (self.window_size, self.hop, self.window_kind)


@dataclass
class FeatureMatrix:
    kind: str
    values: np.ndarray  # (bins, frames)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise FeatureError(f"unknown feature kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise FeatureError(f"{self.kind}: expected a 2-D matrix, got {self.values.shape}")

    @property
    def shape(self):
        return self.values.shape


def _check_canonical(clip: AudioClip) -> None:
    if clip.sample_rate_hz != SAMPLE_RATE or len(clip) != CLIP_SAMPLES:
        raise FeatureError(
            f"clip {clip.source_id!r} is not canonical "
            f"({len(clip)} samples at {clip.sample_rate_hz} Hz; "
            f"expected {CLIP_SAMPLES} at {SAMPLE_RATE} Hz)"
        )


def frame_signal(x: np.ndarray, frame_length: int = N_FFT, hop: int = HOP_LENGTH) -> np.ndarray:
    """Centered frames with reflect padding, shape (frames, frame_length)."""
    pad = frame_length // 2
    padded = np.pad(np.asarray(x, dtype=np.float64), pad, mode="reflect")
    return sliding_window_view(padded, frame_length)[::hop]


def stft(clip: AudioClip, strict: bool = True) -> Spectrogram:
    """Magnitude STFT: periodic Hann window of 2048, hop 256, centered frames.

    ``strict`` rejects clips that are not at the canonical rate and length.
    """
    if strict:
        _check_canonical(clip)
    frames = frame_signal(clip.samples)
    window = get_window("hann", N_FFT, fftbins=True)
    mags = np.abs(np.fft.rfft(frames * window, axis=1)).T
    freqs = np.arange(N_FFT // 2 + 1) * clip.sample_rate_hz / N_FFT
    return Spectrogram(np.ascontiguousarray(mags), freqs)


def _params(spec: Spectrogram, **extra) -> dict:
    p = {"n_fft": spec.window_size, "hop": spec.hop, "window": spec.window_kind}
    p.update(extra)
    return p


def pitch_classes(freqs: np.ndarray) -> np.ndarray:
    """Pitch class per frequency (0 = A); -1 for non-positive frequencies."""
    freqs = np.asarray(freqs, dtype=np.float64)
    out = np.full(freqs.shape, -1, dtype=np.int64)
    pos = freqs > 0
    semis = np.floor(12.0 * np.log2(freqs[pos] / 440.0) + 0.5).astype(np.int64)
    out[pos] = np.mod(semis, 12)
    return out


def chromagram(spec: Spectrogram) -> FeatureMatrix:
    classes = pitch_classes(spec.bin_frequencies_hz)
    fold = np.zeros((12, len(classes)))
    valid = classes >= 0
    fold[classes[valid], np.nonzero(valid)[0]] = 1.0
    chroma = fold @ spec.magnitudes
    peak = chroma.max(axis=0, keepdims=True)
    chroma = np.divide(chroma, peak, out=np.zeros_like(chroma), where=peak > 0)
    return FeatureMatrix("chroma", chroma, _params(spec, reference_hz=440.0))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, bin_freqs: np.ndarray, fmax: float) -> np.ndarray:
    """Area-normalized triangular filters on the mel scale, shape (n_mels, bins)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(fmax), n_mels + 2))
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    f = bin_freqs[None, :]
    rising = (f - lo) / (center - lo)
    falling = (hi - f) / (hi - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return weights * (2.0 / (hi - lo))


def mel_spectrogram(spec: Spectrogram, n_mels: int = N_MELS) -> FeatureMatrix:
    n_bins = spec.magnitudes.shape[0]
    if n_mels < 12:
        raise FeatureError("n_mels must be at least 12")
    if n_mels > n_bins:
        raise FeatureError(f"n_mels={n_mels} exceeds {n_bins} frequency bins")
    sr = 2.0 * spec.bin_frequencies_hz[-1]
    fb = mel_filterbank(n_mels, spec.bin_frequencies_hz, sr / 2.0)
    mel = fb @ (spec.magnitudes ** 2)
    return FeatureMatrix("mel", mel, _params(spec, n_mels=n_mels, power=2.0, mel_scale="htk"))


def power_to_db(x: np.ndarray) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(x, DB_FLOOR))


def mfcc(mel: FeatureMatrix, n_coeffs: int = N_MFCC) -> FeatureMatrix:
    if mel.kind != "mel":
        raise FeatureError(f"mfcc expects a mel feature, got {mel.kind!r}")
    n_mels = mel.values.shape[0]
    if n_coeffs > n_mels:
        raise FeatureError(f"n_coeffs={n_coeffs} exceeds n_mels={n_mels}")
    coeffs = dct(power_to_db(mel.values), type=2, norm="ortho", axis=0)[:n_coeffs]
    return FeatureMatrix("mfcc", coeffs, dict(mel.params, n_mfcc=n_coeffs, dct="ortho-II"))


def spectral_centroid(spec: Spectrogram) -> FeatureMatrix:
    mags = spec.magnitudes
    total = mags.sum(axis=0)
    weighted = spec.bin_frequencies_hz @ mags
    c = np.divide(weighted, total, out=np.zeros_like(total), where=total > 0)
    return FeatureMatrix("centroid", c[None, :], _params(spec))


def spectral_rolloff(spec: Spectrogram, fraction: float = ROLLOFF_FRACTION) -> FeatureMatrix:
    if not 0.0 < fraction < 1.0:
        raise FeatureError("fraction must lie strictly between 0 and 1")
    mags = spec.magnitudes
    cum = np.cumsum(mags, axis=0)
    total = cum[-1]
    idx = np.argmax(cum >= fraction * total[None, :], axis=0)
    r = np.where(total > 0, spec.bin_frequencies_hz[idx], 0.0)
    return FeatureMatrix("rolloff", r[None, :], _params(spec, fraction=fraction))


def zero_crossing_rate(clip: AudioClip, strict: bool = True) -> FeatureMatrix:
    """Fraction of adjacent sample pairs per frame whose signs differ (zero counts as positive)."""
    if strict:
        _check_canonical(clip)
    frames = frame_signal(clip.samples)
    neg = frames < 0
    crossings = np.count_nonzero(neg[:, 1:] != neg[:, :-1], axis=1)
    rate = crossings / (frames.shape[1] - 1)
    return FeatureMatrix("zcr", rate[None, :].astype(np.float64),
                         {"frame_length": N_FFT, "hop": HOP_LENGTH, "center": True})


def extract_all(clip: AudioClip, n_mels: int = N_MELS, kinds=FEATURE_KINDS) -> dict:
    """Every requested feature of one canonical clip, sharing a single STFT."""
    spec = stft(clip)
    out = {}
    mel = None
    if "mel" in kinds or "mfcc" in kinds:
        mel = mel_spectrogram(spec, n_mels)
    for kind in kinds:
        if kind == "chroma":
            out[kind] = chromagram(spec)
        elif kind == "mel":
            out[kind] = mel
        elif kind == "mfcc":
            out[kind] = mfcc(mel)
        elif kind == "centroid":
            out[kind] = spectral_centroid(spec)
        elif kind == "rolloff":
            out[kind] = spectral_rolloff(spec)
        elif kind == "zcr":
            out[kind] = zero_crossing_rate(clip)
        else:
            raise FeatureError(f"unknown feature kind {kind!r}")
    return out


EXPECTED_ROWS = {"chroma": 12, "mfcc": N_MFCC, "centroid": 1, "rolloff": 1, "zcr": 1}


def concat_mlp_vector(chroma: FeatureMatrix, mfcc: FeatureMatrix, centroid: FeatureMatrix,
                      rolloff: FeatureMatrix, zcr: FeatureMatrix) -> np.ndarray:
    """Row-major flattening of the five features in fixed order (11,394 values)."""
    parts = []
    for kind, feat in zip(CONCAT_ORDER, (chroma, mfcc, centroid, rolloff, zcr)):
        if feat.kind != kind:
            raise FeatureError(f"slot {kind!r} received a {feat.kind!r} feature")
        expected = (EXPECTED_ROWS[kind], NUM_FRAMES)
        if feat.shape != expected:
            raise FeatureError(f"{kind}: shape {feat.shape}, expected {expected}")
        parts.append(feat.values.ravel())
    return np.concatenate(parts)


def flatten_chroma_1d(chroma: FeatureMatrix) -> np.ndarray:
    if chroma.kind != "chroma" or chroma.shape != (12, NUM_FRAMES):
        raise FeatureError(f"expected chroma of shape (12, {NUM_FRAMES}), got "
                           f"{chroma.kind} {chroma.shape}")
    return chroma.values.ravel().copy()


@dataclass
class PcaProjection:
    points: np.ndarray  # (n, k)
    explained_variance_ratio: np.ndarray  # (k,)
    component_axes: np.ndarray  # (k, d)
    mean: np.ndarray  # (d,)

    def back_project(self, points=None) -> np.ndarray:
        """Map projected points back into the centered input space."""
        pts = self.points if points is None else points
        return pts @ self.component_axes


def pca_project(data, k: int = 2) -> PcaProjection:
    """Top-``k`` principal components via SVD of the column-centered data."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("pca_project needs a matrix with at least two rows")
    n, d = x.shape
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k={k} outside [1, {min(n, d)}]")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    total = float(np.sum(s ** 2))
    if total <= 0.0:
        raise ValueError("all rows are identical; explained variance is undefined")
    axes = vt[:k].copy()
    # orient each axis so its largest-magnitude coordinate is positive
    lead = axes[np.arange(k), np.argmax(np.abs(axes), axis=1)]
    axes *= np.where(lead < 0, -1.0, 1.0)[:, None]
    ratio = s[:k] ** 2 / total
    return PcaProjection(centered @ axes.T, ratio, axes, mean)
