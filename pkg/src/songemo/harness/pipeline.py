"""Corpus-level extraction, training, evaluation, prediction and PCA export."""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from songemo import (CLIP_SAMPLES, EMOTIONS, HOP_LENGTH, N_FFT, NUM_CLASSES, NUM_FRAMES,
                     SAMPLE_RATE)
from songemo import features as F
from songemo import models
from songemo.augment import AugmentPolicy, apply_chain, augment_manifest
from songemo.harness.storage import is_cached, read_feature, write_feature
from songemo.ingest import AudioDecodeError, DatasetManifest, canonicalize, load_wav
from songemo.nn import TrainConfig, evaluate, kfold_train, load_model, save_model
from songemo.nn.training import fold_seed

log = logging.getLogger(__name__)

FEATURE_CHOICES = ("chroma", "mfcc", "mel", "centroid", "rolloff", "zcr", "concat5")
MIN_PREDICT_SECONDS = 0.1


class HarnessError(RuntimeError):
    pass


@dataclass
class RunConfig:
    manifest: str = ""
    feature: str = "chroma"
    arch: str = "cnn2d"
    out: str = "runs"
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: Optional[AugmentPolicy] = None
    n_mels: int = F.N_MELS
    normalize: str = "zscore"
    jobs: int = 1

    def __post_init__(self):
        if self.feature not in FEATURE_CHOICES:
            raise HarnessError(f"unknown feature {self.feature!r}")
        if self.arch not in models.ARCHITECTURES:
            raise HarnessError(f"unknown architecture {self.arch!r}")
        if self.normalize not in ("zscore", "none"):
            raise HarnessError("normalize must be 'zscore' or 'none'")
        check_compatible(self.feature, self.arch)

    @property
    def run_name(self) -> str:
        return f"{self.arch}_{self.feature}" + ("_da" if self.augment is not None else "")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        d["augment"] = self.augment.to_dict() if self.augment is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        aug = d.pop("augment", None)
        train_cfg = d.pop("train", {}) or {}
        augment = AugmentPolicy.from_dict(aug) if aug else None
        if augment is not None and "epochs" not in train_cfg:
            train_cfg["epochs"] = 200
        train_cfg.setdefault("augment", augment is not None)
        return cls(train=TrainConfig(**train_cfg), augment=augment, **d)


def feature_kinds(feature: str) -> tuple:
    return F.CONCAT_ORDER if feature == "concat5" else (feature,)


def check_compatible(feature: str, arch: str) -> None:
    if arch == "cnn2d" and feature not in ("chroma", "mfcc", "mel"):
        raise HarnessError(f"cnn2d needs a 2-D feature (chroma, mfcc, mel), not {feature!r}")
    if arch in ("cnn1d", "crnn") and feature == "concat5":
        raise HarnessError(f"{arch} takes a single feature, not the 5-feature concatenation")


def model_input(feats: dict, feature: str, arch: str) -> np.ndarray:
    """One example's network input from its feature matrices."""
    check_compatible(feature, arch)
    if feature == "concat5":
        return F.concat_mlp_vector(*(feats[k] for k in F.CONCAT_ORDER))
    values = feats[feature].values
    if arch == "mlp":
        return values.ravel()
    if arch == "cnn2d":
        return values[:, :, None]
    return values.ravel()[:, None]


def segments_for(feature: str) -> list:
    """(start, stop) index ranges of each feature inside a flattened input."""
    if feature != "concat5":
        return [None]
    rows = {"chroma": 12, "mfcc": F.N_MFCC, "centroid": 1, "rolloff": 1, "zcr": 1}
    out, pos = [], 0
    for k in F.CONCAT_ORDER:
        size = rows[k] * NUM_FRAMES
        out.append((pos, pos + size))
        pos += size
    return out


class ZScore:
    """Scalar mean/std standardization per feature segment, fitted on training inputs."""

    def __init__(self, segments, stats=None):
        self.segments = segments
        self.stats = stats or []

    @classmethod
    def fit(cls, x, segments) -> "ZScore":
        flat = x.reshape(len(x), -1)
        stats = []
        for seg in segments:
            part = flat if seg is None else flat[:, seg[0]:seg[1]]
            std = float(part.std())
            stats.append((float(part.mean()), std if std > 0 else 1.0))
        return cls(segments, stats)

    def apply(self, x):
        shape = x.shape
        flat = np.array(x, dtype=np.float64).reshape(len(x), -1)
        for seg, (mu, sd) in zip(self.segments, self.stats):
            if seg is None:
                flat = (flat - mu) / sd
            else:
                flat[:, seg[0]:seg[1]] = (flat[:, seg[0]:seg[1]] - mu) / sd
        return flat.reshape(shape)

    def to_dict(self) -> dict:
        return {"segments": [list(s) if s else None for s in self.segments],
                "stats": [list(s) for s in self.stats]}

    @classmethod
    def from_dict(cls, d) -> "ZScore":
        return cls([tuple(s) if s else None for s in d["segments"]], [tuple(s) for s in d["stats"]])


class Identity:
    def apply(self, x):
        return x

    def to_dict(self):
        return None


def cache_key(kind: str, n_mels: int, chain=()) -> dict:
    return {
        "kind": kind, "sr": SAMPLE_RATE, "clip_samples": CLIP_SAMPLES, "n_fft": N_FFT,
        "hop": HOP_LENGTH, "n_mels": n_mels if kind in ("mel", "mfcc") else None,
        "n_mfcc": F.N_MFCC if kind == "mfcc" else None, "chain": [dict(c) for c in chain],
    }


def feature_path(out, kind: str, source_id: str, copy_index: int = -1) -> Path:
    base = Path(out) / "features" / kind
    if copy_index >= 0:
        return base / "aug" / f"{source_id}__copy{copy_index}.feat"
    return base / f"{source_id}.feat"


def _extract_one(task):
    wav_path, out, source_id, copy_index, chain, kinds, n_mels = task
    todo = [k for k in kinds
            if not is_cached(feature_path(out, k, source_id, copy_index), cache_key(k, n_mels, chain))]
    if not todo:
        return 0
    try:
        clip = canonicalize(load_wav(wav_path))
    except AudioDecodeError as exc:
        raise HarnessError(f"cannot decode {wav_path}: {exc}") from exc
    if chain:
        clip = apply_chain(clip, chain)
    feats = F.extract_all(clip, n_mels, tuple(todo))
    for k in todo:
        write_feature(feature_path(out, k, source_id, copy_index), feats[k], cache_key(k, n_mels, chain))
    return len(todo)


def cmd_extract(manifest: DatasetManifest, out, kinds=F.FEATURE_KINDS, n_mels: int = F.N_MELS,
                expanded=None, jobs: int = 1) -> int:
    """Write one container per (clip, feature kind); returns how many were computed."""
    tasks = []
    for e in manifest.entries:
        tasks.append((str(manifest.path_of(e)), str(out), e.source_id, -1, (), tuple(kinds), n_mels))
    if expanded is not None:
        paths = {e.source_id: str(manifest.path_of(e)) for e in manifest.entries}
        for ex in expanded.copies():
            tasks.append((paths[ex.source_id], str(out), ex.source_id, ex.copy_index, ex.chain,
                          tuple(kinds), n_mels))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            counts = list(pool.map(_extract_one, tasks, chunksize=8))
    else:
        counts = [_extract_one(t) for t in tasks]
    computed = sum(counts)
    log.info("extracted %d feature matrices (%d cached)", computed, len(tasks) * len(kinds) - computed)
    return computed


def load_inputs(out, ids, feature: str, arch: str, copy_indices=None) -> np.ndarray:
    kinds = feature_kinds(feature)
    xs = []
    for i, sid in enumerate(ids):
        c = -1 if copy_indices is None else copy_indices[i]
        feats = {k: read_feature(feature_path(out, k, sid, c)) for k in kinds}
        xs.append(model_input(feats, feature, arch))
    return np.stack(xs)


def labels_of(entries) -> np.ndarray:
    return np.array([e.label.index for e in entries], dtype=np.int64)


def cmd_train(config: RunConfig, progress=None) -> dict:
    """K-fold training of one feature/architecture pairing; writes checkpoints and reports."""
    manifest = DatasetManifest.load(config.manifest)
    out = Path(config.out)
    kinds = feature_kinds(config.feature)
    pool = [e for e in manifest.entries if e.split in ("train", "val")]
    test = manifest.split("test")
    if not pool or not test:
        raise HarnessError("manifest needs train/val and test entries")

    expanded = None
    if config.augment is not None:
        # pool entries are augmented so every fold has copies of its training examples;
        # a copy is only used in folds where its source is not validation
        expanded = augment_manifest(manifest, config.augment, splits=("train", "val"))
        assert not set(expanded.untouched["test"]) & {ex.source_id for ex in expanded.examples}
    cmd_extract(manifest, out, kinds, config.n_mels, expanded, config.jobs)

    x_pool = load_inputs(out, [e.source_id for e in pool], config.feature, config.arch)
    y_pool = labels_of(pool)
    x_test = load_inputs(out, [e.source_id for e in test], config.feature, config.arch)
    y_test = labels_of(test)
    extra = None
    if expanded is not None:
        pool_index = {e.source_id: i for i, e in enumerate(pool)}
        copies = expanded.copies()
        x_aug = load_inputs(out, [c.source_id for c in copies], config.feature, config.arch,
                            [c.copy_index for c in copies])
        src = np.array([pool_index[c.source_id] for c in copies], dtype=np.int64)
        extra = (x_aug, y_pool[src], src)

    input_shape = x_pool.shape[1:]
    segments = segments_for(config.feature)
    factory = (lambda x: ZScore.fit(x, segments)) if config.normalize == "zscore" else (lambda x: Identity())
    report = kfold_train((x_pool, y_pool), (x_test, y_test),
                         lambda seed: models.build(config.arch, input_shape, seed),
                         config.train, extra, factory, progress=progress)

    run_dir = out / "runs" / config.run_name
    run_dir.mkdir(parents=True, exist_ok=True)
    graph = models.build(config.arch, input_shape, 0, init=False)
    checkpoints = []
    for fold in report.folds:
        graph.set_state(fold.state)
        graph.seed = fold_seed(config.train.seed, fold.fold)
        path = run_dir / f"fold{fold.fold}.ckpt"
        save_model(graph, path, {
            "arch": config.arch, "feature": config.feature, "n_mels": config.n_mels,
            "normalizer": fold.extra["normalizer"].to_dict(), "fold": fold.fold,
            "best_epoch": fold.best_epoch, "best_val_acc": fold.val_acc,
        })
        checkpoints.append(str(path))
    (run_dir / "metrics.csv").write_text(report.curves_csv())
    summary = {
        "model": config.arch, "feature": config.feature, "augment": config.augment is not None,
        "config": config.to_dict(), **report.to_dict(), "checkpoints": checkpoints,
    }
    (run_dir / "report.json").write_text(json.dumps(summary, indent=1))
    if expanded is not None:
        (run_dir / "expansion.json").write_text(json.dumps(expanded.to_dict(), indent=1))
    summary["report"] = report
    return summary


def _normalizer_from_meta(meta) -> object:
    d = meta.get("normalizer")
    return ZScore.from_dict(d) if d else Identity()


def confusion_matrix(y_true, y_pred, n: int = NUM_CLASSES) -> np.ndarray:
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def cmd_evaluate(checkpoint, manifest: DatasetManifest, out, split: str = "test") -> dict:
    graph = load_model(checkpoint)
    meta = graph.meta
    feature, arch = meta.get("feature"), meta.get("arch")
    if feature is None or arch is None:
        raise HarnessError(f"{checkpoint}: checkpoint lacks feature/arch metadata")
    entries = manifest.split(split)
    cmd_extract(manifest, out, feature_kinds(feature), meta.get("n_mels", F.N_MELS))
    x = _normalizer_from_meta(meta).apply(load_inputs(out, [e.source_id for e in entries], feature, arch))
    if x.shape[1:] != graph.input_shape:
        raise HarnessError(f"features of shape {x.shape[1:]} do not fit checkpoint input {graph.input_shape}")
    y = labels_of(entries)
    loss, acc, probs = evaluate(graph, x, y)
    cm = confusion_matrix(y, probs.argmax(axis=1))
    return {"checkpoint": str(checkpoint), "split": split, "n": len(entries), "accuracy": acc,
            "loss": loss, "classes": list(EMOTIONS), "confusion_matrix": cm.tolist()}


def cmd_predict(checkpoint, wav_path) -> dict:
    graph = load_model(checkpoint)
    meta = graph.meta
    clip = load_wav(wav_path)
    if clip.duration < MIN_PREDICT_SECONDS:
        raise HarnessError(f"{wav_path}: audio shorter than {MIN_PREDICT_SECONDS} s")
    clip = canonicalize(clip)
    feature, arch = meta["feature"], meta["arch"]
    feats = F.extract_all(clip, meta.get("n_mels", F.N_MELS), feature_kinds(feature))
    x = _normalizer_from_meta(meta).apply(model_input(feats, feature, arch)[None])
    probs = graph.predict(x)[0]
    top = int(np.argmax(probs))
    return {"file": str(wav_path), "probabilities": {e: float(p) for e, p in zip(EMOTIONS, probs)},
            "label": EMOTIONS[top]}


def cmd_pca(manifest: DatasetManifest, out, n_mels: int = F.N_MELS, kinds=F.FEATURE_KINDS) -> list:
    """Two-component projection of every corpus clip for each feature, one CSV per feature."""
    entries = manifest.entries
    if len(entries) < 3:
        raise HarnessError("PCA needs at least 3 examples")
    cmd_extract(manifest, out, kinds, n_mels)
    pca_dir = Path(out) / "pca"
    pca_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in kinds:
        data = np.stack([read_feature(feature_path(out, kind, e.source_id)).values.ravel()
                         for e in entries])
        proj = F.pca_project(data, 2)
        lines = ["# explained_variance_ratio=" + ",".join(repr(float(r)) for r in proj.explained_variance_ratio),
                 "id,label,pc1,pc2"]
        for e, (p1, p2) in zip(entries, proj.points):
            lines.append(f"{e.source_id},{e.label.name},{float(p1)!r},{float(p2)!r}")
        path = pca_dir / f"{kind}.csv"
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    return written


# The twelve feature/model pairings of the learning-curve figure.
REPRODUCE_GRID = (
    ("mlp", "chroma", False), ("mlp", "mfcc", False), ("mlp", "centroid", False),
    ("mlp", "rolloff", False), ("mlp", "zcr", False), ("mlp", "concat5", False),
    ("cnn2d", "mel", False), ("cnn2d", "mfcc", False), ("cnn2d", "chroma", False),
    ("cnn2d", "chroma", True), ("cnn1d", "chroma", True), ("crnn", "chroma", True),
)

TABLE_COLUMNS = ("model", "feature", "augment", "val_acc", "val_loss", "test_acc", "test_loss",
                 "train_time_total_s")


def cmd_reproduce(base: RunConfig, policy: AugmentPolicy = None, epochs: int = None,
                  grid=REPRODUCE_GRID) -> tuple:
    """Run every pairing in ``grid`` and write the consolidated table as CSV and text."""
    rows = []
    for arch, feature, aug in grid:
        train_cfg = TrainConfig.default(augment=aug, **{
            k: v for k, v in base.train.to_dict().items() if k not in ("epochs", "augment")})
        if epochs is not None:
            train_cfg.epochs = epochs
        cfg = RunConfig(base.manifest, feature, arch, base.out, train_cfg,
                        (policy or AugmentPolicy(seed=base.train.seed)) if aug else None,
                        base.n_mels, base.normalize, base.jobs)
        log.info("reproduce: %s", cfg.run_name)
        agg = cmd_train(cfg)["aggregate"]
        rows.append({"model": arch, "feature": feature, "augment": aug,
                     **{m: agg[m] for m in ("val_acc", "val_loss", "test_acc", "test_loss")},
                     "train_time_total_s": agg["train_time_total_s"]})
    out = Path(base.out)
    csv_lines = [",".join(TABLE_COLUMNS)]
    text = [f"{'model':<6} {'feature':<9} {'DA':<3} {'val acc':>13} {'val loss':>13} "
            f"{'test acc':>13} {'test loss':>13} {'time (s)':>10}"]
    for r in rows:
        cells = [r["model"], r["feature"], str(int(r["augment"]))]
        for m in ("val_acc", "val_loss", "test_acc", "test_loss"):
            cells.append(f"{r[m]['mean']!r}+-{r[m]['std']!r}")
        cells.append(repr(r["train_time_total_s"]))
        csv_lines.append(",".join(cells))
        text.append(f"{r['model']:<6} {r['feature']:<9} {'yes' if r['augment'] else 'no':<3} "
                    + " ".join(f"{r[m]['mean']:.2f}+-{r[m]['std']:.2f}".rjust(13)
                               for m in ("val_acc", "val_loss", "test_acc", "test_loss"))
                    + f" {r['train_time_total_s']:>10.1f}")
    (out / "table.csv").write_text("\n".join(csv_lines) + "\n")
    (out / "table.txt").write_text("\n".join(text) + "\n")
    return rows, "\n".join(text)
