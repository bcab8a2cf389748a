"""Audio decoding, canonicalization, label parsing and dataset splits."""

import json
import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from songemo import CLIP_SAMPLES, EMOTIONS, SAMPLE_RATE

log = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")
REFERENCE_COUNTS = (612, 200, 200)
REFERENCE_RATIOS = tuple(c / sum(REFERENCE_COUNTS) for c in REFERENCE_COUNTS)

SONG_CHANNEL = "02"
_NAME_RE = re.compile(r"^(\d{2})-(\d{2})-(\d{2})-(\d{2})-(\d{2})-(\d{2})-(\d{2})$")


class AudioDecodeError(ValueError):
    pass


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class EmotionLabel:
    name: str

    def __post_init__(self):
        if self.name not in EMOTIONS:
            raise LabelError(f"unknown emotion {self.name!r}")

    @property
    def index(self) -> int:
        return EMOTIONS.index(self.name)

    @classmethod
    def from_index(cls, index: int) -> "EmotionLabel":
        return cls(EMOTIONS[index])


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    source_id: str = ""
    label: Optional[EmotionLabel] = None

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def replace(self, samples=None, sample_rate_hz=None) -> "AudioClip":
        return AudioClip(
            self.samples if samples is None else samples,
            self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            self.source_id,
            self.label,
        )


def load_wav(path) -> AudioClip:
    """Decode a 16-bit PCM or 32-bit float WAV file into a mono clip."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError, EOFError) as exc:
        raise AudioDecodeError(f"{path}: cannot read WAV ({exc})") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioDecodeError(f"{path}: unsupported sample encoding {data.dtype}")

    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise AudioDecodeError(f"{path}: {samples.shape[1]} channels, expected 1 or 2")
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise AudioDecodeError(f"{path}: zero-length audio")
    if not np.all(np.isfinite(samples)):
        raise AudioDecodeError(f"{path}: non-finite samples")

    label = None
    try:
        label = parse_label(path.name)
    except LabelError:
        pass
    return AudioClip(np.clip(samples, -1.0, 1.0), int(rate), path.stem, label)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.round(np.clip(clip.samples, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)
    wavfile.write(path, clip.sample_rate_hz, pcm)


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Band-limited polyphase resampling.

    Output length is ``round(len * target_hz / source_hz)``; the polyphase
    filter doubles as the anti-aliasing low-pass when downsampling.
    """
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    if len(clip) == 0:
        raise ValueError("cannot resample an empty clip")
    src = clip.sample_rate_hz
    if target_hz == src:
        return clip.replace(samples=clip.samples.copy())
    g = math.gcd(int(target_hz), int(src))
    up, down = target_hz // g, src // g
    out = resample_poly(clip.samples, up, down, window=("kaiser", 8.6))
    n_out = int(math.floor(len(clip) * target_hz / src + 0.5))
    out = _fit(out, n_out)
    return clip.replace(samples=np.clip(out, -1.0, 1.0), sample_rate_hz=int(target_hz))


def _fit(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) >= n:
        return x[:n]
    return np.concatenate([x, np.zeros(n - len(x))])


def fix_length(clip: AudioClip, num_samples: int = CLIP_SAMPLES) -> AudioClip:
    """Truncate or zero-pad at the end to exactly ``num_samples``."""
    if len(clip) == 0:
        raise ValueError("cannot fix the length of an empty clip")
    return clip.replace(samples=_fit(clip.samples, num_samples).copy())


def canonicalize(clip: AudioClip) -> AudioClip:
    return fix_length(resample(clip, SAMPLE_RATE), CLIP_SAMPLES)


def load_canonical(path) -> AudioClip:
    return canonicalize(load_wav(path))


def parse_label(filename: str) -> EmotionLabel:
    """Emotion label from a corpus file name such as ``03-02-05-02-02-02-14.wav``.

    Fields are modality, vocal channel, emotion, intensity, statement,
    repetition and actor. Only the song channel (``02``) is accepted.
    """
    stem = Path(filename).name
    if stem.lower().endswith(".wav"):
        stem = stem[:-4]
    m = _NAME_RE.match(stem)
    if m is None:
        raise LabelError(f"malformed corpus file name {filename!r}")
    fields = m.groups()
    if fields[1] != SONG_CHANNEL:
        raise LabelError(f"{filename!r}: vocal channel {fields[1]} is not song")
    code = int(fields[2])
    if not 1 <= code <= len(EMOTIONS):
        raise LabelError(f"{filename!r}: emotion code {fields[2]} is not a song emotion")
    return EmotionLabel(EMOTIONS[code - 1])


@dataclass
class ManifestEntry:
    source_id: str
    label: EmotionLabel
    split: str
    path: str = ""


@dataclass
class DatasetManifest:
    entries: list
    seed: int
    ratios: tuple = REFERENCE_RATIOS
    root: str = ""
    stratify: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def counts(self) -> tuple:
        c = Counter(e.split for e in self.entries)
        return tuple(c[s] for s in SPLITS)

    def split(self, name: str) -> list:
        return [e for e in self.entries if e.split == name]

    def path_of(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() or not self.root else Path(self.root) / p

    def class_counts(self) -> dict:
        out = {}
        for s in SPLITS:
            c = Counter(e.label.name for e in self.entries if e.split == s)
            out[s] = {name: c[name] for name in EMOTIONS}
        return out

    def to_json(self) -> str:
        doc = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "seed": self.seed,
            "ratios": list(self.ratios),
            "stratify": self.stratify,
            "root": self.root,
            "entries": [
                {"id": e.source_id, "emotion": e.label.name, "split": e.split, "path": e.path}
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema {doc.get('schema_version')!r}")
        entries = [
            ManifestEntry(e["id"], EmotionLabel(e["emotion"]), e["split"], e.get("path", ""))
            for e in doc["entries"]
        ]
        return cls(entries, doc["seed"], tuple(doc["ratios"]), doc.get("root", ""),
                   doc.get("stratify", False))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


def split_counts(n: int, ratios) -> tuple:
    """(train, val, test) sizes: val and test rounded half-up, remainder to train."""
    val = int(math.floor(n * ratios[1] + 0.5))
    test = int(math.floor(n * ratios[2] + 0.5))
    return n - val - test, val, test


def build_manifest(root, seed: int = 42, ratios=REFERENCE_RATIOS,
                   stratify: bool = False) -> DatasetManifest:
    """Shuffle the corpus files under ``root`` with ``seed`` and partition them."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    root = Path(root)
    files = sorted(p for p in root.rglob("*") if p.suffix.lower() == ".wav")
    if not files:
        raise ValueError(f"no WAV files under {root}")

    items = [(p.stem, parse_label(p.name), p.relative_to(root).as_posix()) for p in files]
    rng = random.Random(seed)
    entries = []
    if stratify:
        by_class = {}
        for it in items:
            by_class.setdefault(it[1].name, []).append(it)
        for name in EMOTIONS:
            group = by_class.get(name, [])
            rng.shuffle(group)
            entries.extend(_partition(group, ratios))
    else:
        rng.shuffle(items)
        entries = _partition(items, ratios)

    manifest = DatasetManifest(entries, seed, ratios, str(root), stratify)
    for split, counts in manifest.class_counts().items():
        log.info("%s split class counts: %s", split, counts)
        if len(files) >= sum(REFERENCE_COUNTS) and any(v == 0 for v in counts.values()):
            log.warning("%s split is missing a class", split)
    return manifest


def _partition(items, ratios) -> list:
    n_train, n_val, _ = split_counts(len(items), ratios)
    out = []
    for i, (sid, label, rel) in enumerate(items):
        split = "train" if i < n_train else "val" if i < n_train + n_val else "test"
        out.append(ManifestEntry(sid, label, split, rel))
    return out
