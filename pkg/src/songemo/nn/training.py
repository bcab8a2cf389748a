"""Mini-batch training with best-epoch checkpointing and k-fold orchestration."""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from songemo import NUM_CLASSES
from songemo.nn.graph import (Adam, ModelGraph, NonFiniteError, categorical_cross_entropy,
                              categorical_cross_entropy_grad, one_hot)

log = logging.getLogger(__name__)

CURVE_FIELDS = ("train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    folds: int = 5
    seed: int = 0
    augment: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")

    @classmethod
    def default(cls, augment: bool = False, **overrides) -> "TrainConfig":
        """Default schedule: 100 epochs, or 200 when training on augmented data."""
        overrides.setdefault("epochs", 200 if augment else 100)
        return cls(augment=augment, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class TrainResult:
    curves: list  # one dict per epoch with CURVE_FIELDS
    best_epoch: int  # 1-based
    best_state: list
    train_time: float

    @property
    def best_val_acc(self) -> float:
        return self.curves[self.best_epoch - 1]["val_acc"]

    @property
    def best_val_loss(self) -> float:
        return self.curves[self.best_epoch - 1]["val_loss"]


def evaluate(graph: ModelGraph, x, y, batch_size: int = 64):
    """(loss, accuracy, probabilities) in evaluation mode."""
    probs = graph.predict(x, batch_size)
    loss = categorical_cross_entropy(probs, one_hot(y, probs.shape[1]))
    acc = float(np.mean(probs.argmax(axis=1) == np.asarray(y)))
    return loss, acc, probs


def train(graph: ModelGraph, train_set, val_set, config: TrainConfig,
          progress: Optional[Callable] = None) -> TrainResult:
    """Adam on shuffled mini-batches; keeps the parameters of the best validation epoch.

    ``train_set`` and ``val_set`` are ``(x, labels)`` pairs with integer labels.
    Ties in validation accuracy keep the earliest epoch. On a non-finite loss
    the graph is restored to the best checkpoint and ``TrainingDiverged`` is
    raised carrying the partial result.
    """
    x_tr, y_tr = np.asarray(train_set[0], dtype=np.float64), np.asarray(train_set[1])
    x_va, y_va = np.asarray(val_set[0], dtype=np.float64), np.asarray(val_set[1])
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("training and validation sets must be non-empty")
    n_classes = graph.output_shape[0]
    targets = one_hot(y_tr, n_classes)

    ss = np.random.SeedSequence(config.seed)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)

    curves = []
    best_epoch, best_acc = 0, -1.0
    best_state = graph.get_state()
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(x_tr))
        loss_sum, correct = 0.0, 0
        try:
            for i in range(0, len(order), config.batch_size):
                idx = order[i:i + config.batch_size]
                pred, caches = graph.forward(x_tr[idx], training=True, rng=dropout_rng)
                loss = categorical_cross_entropy(pred, targets[idx])
                if not np.isfinite(loss):
                    raise NonFiniteError(f"non-finite loss at epoch {epoch}")
                grads = graph.backward(caches, categorical_cross_entropy_grad(pred, targets[idx]))
                opt.step(graph, grads)
                loss_sum += loss * len(idx)
                correct += int(np.sum(pred.argmax(axis=1) == y_tr[idx]))
            val_loss, val_acc, _ = evaluate(graph, x_va, y_va, config.batch_size)
        except NonFiniteError as exc:
            graph.set_state(best_state)
            result = TrainResult(curves, max(best_epoch, 1), best_state,
                                 time.perf_counter() - start)
            raise TrainingDiverged(str(exc), result) from exc

        row = {"train_loss": loss_sum / len(x_tr), "train_acc": correct / len(x_tr),
               "val_loss": val_loss, "val_acc": val_acc}
        curves.append(row)
        if val_acc > best_acc:
            best_acc, best_epoch = val_acc, epoch
            best_state = graph.get_state()
        if progress is not None:
            progress(epoch, row)
        log.debug("epoch %d %s", epoch, row)

    graph.set_state(best_state)
    return TrainResult(curves, best_epoch, best_state, time.perf_counter() - start)


@dataclass
class FoldResult:
    fold: int
    curves: list
    best_epoch: int
    val_acc: float
    val_loss: float
    test_acc: float
    test_loss: float
    train_time: float
    state: list = field(default=None, repr=False)
    extra: dict = field(default_factory=dict, repr=False)


METRICS = ("val_acc", "val_loss", "test_acc", "test_loss")


@dataclass
class MetricsReport:
    folds: list
    wall_clock_train_time: float = 0.0

    def aggregate(self) -> dict:
        """Mean and population standard deviation of each metric over folds."""
        out = {}
        for m in METRICS:
            vals = np.array([getattr(f, m) for f in self.folds])
            out[m] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        times = np.array([f.train_time for f in self.folds])
        out["train_time_total_s"] = float(times.sum())
        out["train_time_mean_per_fold_s"] = float(times.mean())
        return out

    def curves_csv(self) -> str:
        lines = ["fold,epoch," + ",".join(CURVE_FIELDS)]
        for f in self.folds:
            for epoch, row in enumerate(f.curves, start=1):
                lines.append(f"{f.fold},{epoch}," + ",".join(repr(float(row[k])) for k in CURVE_FIELDS))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "folds": [{"fold": f.fold, "best_epoch": f.best_epoch,
                       **{m: getattr(f, m) for m in METRICS}, "train_time_s": f.train_time}
                      for f in self.folds],
            "aggregate": self.aggregate(),
            "wall_clock_train_time_s": self.wall_clock_train_time,
        }


def fold_assignment(n: int, k: int, seed: int) -> list:
    """Shuffled indices split into ``k`` folds whose sizes differ by at most one."""
    if k < 2 or k > n:
        raise ValueError(f"cannot split {n} examples into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def kfold_train(pool, test, build_graph: Callable[[int], ModelGraph], config: TrainConfig,
                extra_train=None, normalizer_factory=None, keep_states: bool = True,
                progress=None) -> MetricsReport:
    """K-fold cross-validation over the train+validation pool.

    ``pool`` and ``test`` are ``(x, labels)`` pairs. ``extra_train`` is an
    optional ``(x, labels, pool_index)`` triple of derived examples (for
    example augmented copies); each is used for training only in folds where
    its source pool example is not the validation fold. ``normalizer_factory``
    maps training inputs to an object with ``apply(x)``, fitted per fold.
    """
    x_pool, y_pool = np.asarray(pool[0], dtype=np.float64), np.asarray(pool[1])
    x_test, y_test = np.asarray(test[0], dtype=np.float64), np.asarray(test[1])
    folds = fold_assignment(len(x_pool), config.folds, config.seed)
    results = []
    start = time.perf_counter()
    for k, val_idx in enumerate(folds):
        in_val = np.zeros(len(x_pool), dtype=bool)
        in_val[val_idx] = True
        x_tr, y_tr = x_pool[~in_val], y_pool[~in_val]
        if extra_train is not None:
            ex_x, ex_y, ex_src = extra_train
            keep = ~in_val[np.asarray(ex_src)]
            x_tr = np.concatenate([x_tr, np.asarray(ex_x)[keep]])
            y_tr = np.concatenate([y_tr, np.asarray(ex_y)[keep]])
        x_va, y_va = x_pool[val_idx], y_pool[val_idx]
        missing = set(range(NUM_CLASSES)) - set(np.unique(y_va).tolist())
        if missing and len(np.unique(y_pool)) == NUM_CLASSES:
            log.warning("fold %d validation set lacks classes %s", k, sorted(missing))

        normalizer = None
        x_te = x_test
        if normalizer_factory is not None:
            normalizer = normalizer_factory(x_tr)
            x_tr, x_va, x_te = normalizer.apply(x_tr), normalizer.apply(x_va), normalizer.apply(x_test)

        seed = fold_seed(config.seed, k)
        graph = build_graph(seed)
        fold_cfg = TrainConfig(**{**config.to_dict(), "seed": seed})
        cb = (lambda e, row, k=k: progress(k, e, row)) if progress else None
        res = train(graph, (x_tr, y_tr), (x_va, y_va), fold_cfg, cb)
        test_loss, test_acc, _ = evaluate(graph, x_te, y_test, config.batch_size)
        results.append(FoldResult(
            k, res.curves, res.best_epoch, res.best_val_acc, res.best_val_loss,
            test_acc, test_loss, res.train_time, res.best_state if keep_states else None,
            {"normalizer": normalizer}))
        log.info("fold %d: best epoch %d val_acc %.4f test_acc %.4f", k, res.best_epoch,
                 res.best_val_acc, test_acc)
    return MetricsReport(results, time.perf_counter() - start)
