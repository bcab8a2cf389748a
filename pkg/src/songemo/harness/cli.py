"""Command-line entry point: ``songemo <verb> [flags]``."""

import argparse
import json
import logging
import sys
from pathlib import Path

from songemo import features as F
from songemo.augment import AugmentPolicy
from songemo.harness import pipeline as P
from songemo.ingest import REFERENCE_RATIOS, DatasetManifest, build_manifest
from songemo.models import ARCHITECTURES


def _add_run_flags(p, feature=True, arch=True, augment=True):
    p.add_argument("--config", help="JSON run config; flags override its fields")
    p.add_argument("--manifest", help="manifest JSON path")
    p.add_argument("--out", help="output directory")
    if feature:
        p.add_argument("--feature", choices=P.FEATURE_CHOICES)
    if arch:
        p.add_argument("--arch", choices=ARCHITECTURES)
    if augment:
        p.add_argument("--augment", action="store_true", default=None)
    p.add_argument("--folds", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="songemo", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("manifest", help="scan a corpus directory and write a split manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--stratify", action="store_true")
    p.add_argument("--out", required=True, help="manifest JSON path")

    p = sub.add_parser("extract", help="extract feature containers for every manifest entry")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--feature", choices=F.FEATURE_KINDS, action="append",
                   help="repeatable; default all six")
    p.add_argument("--n-mels", type=int, default=F.N_MELS)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("train", help="k-fold training of one feature/architecture pairing")
    _add_run_flags(p)

    p = sub.add_parser("evaluate", help="test-split metrics of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory holding the feature containers")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))

    p = sub.add_parser("predict", help="class probabilities for one WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("wav")

    p = sub.add_parser("pca", help="two-component PCA CSV per feature")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("reproduce", help="run all twelve pairings and emit the results table")
    _add_run_flags(p, feature=False, arch=False, augment=False)

    p = sub.add_parser("synth", help="write a synthetic tone corpus with corpus-style names")
    p.add_argument("--root", required=True)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    return ap


def run_config_from_args(args) -> P.RunConfig:
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    train = dict(base.get("train") or {})
    for flag, key in (("folds", "folds"), ("epochs", "epochs"), ("seed", "seed"),
                      ("batch_size", "batch_size")):
        if getattr(args, flag, None) is not None:
            train[key] = getattr(args, flag)
    if getattr(args, "augment", None):
        base["augment"] = base.get("augment") or AugmentPolicy(seed=train.get("seed", 0)).to_dict()
    for flag in ("manifest", "out", "feature", "arch", "jobs"):
        if getattr(args, flag, None) is not None:
            base[flag] = getattr(args, flag)
    base["train"] = train
    if not base.get("manifest"):
        raise P.HarnessError("--manifest is required")
    return P.RunConfig.from_dict(base)


def _print_json(obj):
    json.dump(obj, sys.stdout, indent=1)
    sys.stdout.write("\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "manifest":
            m = build_manifest(args.root, args.seed, REFERENCE_RATIOS, args.stratify)
            m.save(args.out)
            _print_json({"manifest": args.out, "counts": dict(zip(("train", "val", "test"), m.counts))})
        elif args.verb == "extract":
            m = DatasetManifest.load(args.manifest)
            n = P.cmd_extract(m, args.out, tuple(args.feature or F.FEATURE_KINDS), args.n_mels,
                              jobs=args.jobs)
            _print_json({"computed": n})
        elif args.verb == "train":
            cfg = run_config_from_args(args)
            summary = P.cmd_train(cfg)
            summary.pop("report")
            _print_json({k: summary[k] for k in ("model", "feature", "augment", "aggregate", "checkpoints")})
        elif args.verb == "evaluate":
            _print_json(P.cmd_evaluate(args.checkpoint, DatasetManifest.load(args.manifest),
                                       args.out, args.split))
        elif args.verb == "predict":
            _print_json(P.cmd_predict(args.checkpoint, args.wav))
        elif args.verb == "pca":
            paths = P.cmd_pca(DatasetManifest.load(args.manifest), args.out)
            _print_json({"csv": [str(p) for p in paths]})
        elif args.verb == "reproduce":
            # augmentation is decided per grid row
            args.feature, args.arch = "chroma", "cnn2d"
            cfg = run_config_from_args(args)
            policy = AugmentPolicy(seed=cfg.train.seed)
            _, text = P.cmd_reproduce(cfg, policy, args.epochs)
            print(text)
        elif args.verb == "synth":
            from songemo.synth import write_corpus
            paths = write_corpus(args.root, args.per_class, args.seed)
            _print_json({"root": args.root, "files": len(paths)})
    except (P.HarnessError, ValueError, OSError) as exc:
        print(f"songemo: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
