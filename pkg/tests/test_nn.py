import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from songemo.nn import (Adam, BiLSTM, CheckpointError, Conv1D, Conv2D, Dense, Dropout, Flatten,
                        FoldResult, MaxPool1D, MaxPool2D, MetricsReport, ModelGraph,
                        NonFiniteError, ReLU, ShapeError, Softmax, TrainConfig, TrainingDiverged,
                        adam_step, categorical_cross_entropy, categorical_cross_entropy_grad,
                        evaluate, fold_assignment, grad_check, kfold_train, load_model, one_hot,
                        read_checkpoint, save_model, softmax, train)
from songemo.nn.graph import loss_and_grads
from songemo.nn.layers import layer_from_spec, sigmoid


def rand_targets(rng, n, k):
    return one_hot(rng.integers(0, k, n), k)


# forward passes and shapes

def test_dense_identity():
    g = ModelGraph([Dense(4)], (4,))
    g.layers[0].params = {"W": np.eye(4), "b": np.zeros(4)}
    x = np.random.default_rng(0).normal(size=(3, 4))
    np.testing.assert_array_equal(g.forward(x)[0], x)


def test_conv2d_valid_shape():
    g = ModelGraph([Conv2D(8, (5, 5))], (12, 422, 1), init=False)
    assert g.output_shape == (8, 418, 8)
    with pytest.raises(ShapeError):
        ModelGraph([Conv2D(8, (13, 5))], (12, 422, 1), init=False)


@pytest.mark.parametrize("n,pool,stride", [(418, 2, 2), (10, 3, 3), (10, 3, 1), (7, 7, 7)])
def test_pool_shape_law(n, pool, stride):
    g = ModelGraph([MaxPool1D(pool, stride)], (n, 2), init=False)
    assert g.output_shape == ((n - pool) // stride + 1, 2)


def test_conv1d_matches_direct_correlation(rng):
    g = ModelGraph([Conv1D(3, 4)], (20, 2), seed=1)
    x = rng.normal(size=(2, 20, 2))
    y = g.forward(x)[0]
    w, b = g.layers[0].params["W"], g.layers[0].params["b"]
    for n in range(2):
        for t in range(17):
            for f in range(3):
                assert y[n, t, f] == pytest.approx(np.sum(x[n, t:t + 4, :] * w[:, :, f]) + b[f])


def test_conv2d_matches_direct_correlation(rng):
    g = ModelGraph([Conv2D(2, (3, 2))], (5, 6, 2), seed=1)
    x = rng.normal(size=(1, 5, 6, 2))
    y = g.forward(x)[0]
    w, b = g.layers[0].params["W"], g.layers[0].params["b"]
    for i in range(3):
        for j in range(5):
            for f in range(2):
                assert y[0, i, j, f] == pytest.approx(np.sum(x[0, i:i + 3, j:j + 2] * w[..., f]) + b[f])


def test_maxpool_first_index_on_ties():
    layer = MaxPool1D(3)
    layer.build((6, 1))
    x = np.array([[[2.0], [2.0], [1.0], [0.0], [5.0], [5.0]]])
    y, cache = layer.forward(x)
    np.testing.assert_array_equal(y[0, :, 0], [2.0, 5.0])
    dx, _ = layer.backward(np.ones_like(y), cache)
    np.testing.assert_array_equal(dx[0, :, 0], [1, 0, 0, 0, 1, 0])
    layer2 = MaxPool2D((2, 2))
    layer2.build((2, 2, 1))
    y, cache = layer2.forward(np.full((1, 2, 2, 1), 3.0))
    dx, _ = layer2.backward(np.ones_like(y), cache)
    np.testing.assert_array_equal(dx[0, :, :, 0], [[1, 0], [0, 0]])


def test_softmax_uniform_and_rows():
    np.testing.assert_allclose(softmax(np.zeros((2, 6))), np.full((2, 6), 1 / 6))
    p = softmax(np.array([[1000.0, 0.0, -1000.0]]))
    assert np.all(np.isfinite(p)) and p[0, 0] == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=6, max_size=6), st.floats(-100, 100))
def test_softmax_shift_invariance(logits, c):
    z = np.array([logits])
    p = softmax(z)
    assert abs(p.sum() - 1.0) <= 1e-9
    np.testing.assert_allclose(softmax(z + c), p, atol=1e-9)


def test_forward_errors():
    g = ModelGraph([Dense(3), Softmax()], (4,))
    with pytest.raises(ValueError):
        g.forward(np.zeros((2, 5)))
    g.layers[0].params["W"][:] = np.inf
    with pytest.raises(NonFiniteError):
        g.forward(np.ones((1, 4)))
    with pytest.raises(ValueError):
        g.backward(None, np.zeros((1, 3)))


def test_dropout_rate_zero_and_eval_identity(rng):
    x = rng.normal(size=(4, 10))
    d0 = Dropout(0.0)
    d0.build((10,))
    np.testing.assert_array_equal(d0.forward(x, training=True, rng=rng)[0], x)
    d5 = Dropout(0.5)
    d5.build((10,))
    np.testing.assert_array_equal(d5.forward(x, training=False)[0], x)
    y, mask = d5.forward(x, training=True, rng=np.random.default_rng(0))
    assert set(np.unique(mask)) <= {0.0, 2.0}
    dx, _ = d5.backward(np.ones_like(x), mask)
    np.testing.assert_array_equal(dx, mask)


def test_layer_spec_round_trip():
    for layer in (Dense(3), Conv1D(2, 3), Conv2D(2, (3, 3)), MaxPool1D(3), MaxPool2D((2, 2)),
                  Flatten(), Dropout(0.5), ReLU(), Softmax(), BiLSTM(4)):
        again = layer_from_spec(json.loads(json.dumps(layer.spec())))
        assert again.spec() == layer.spec()
    with pytest.raises(ValueError):
        layer_from_spec({"kind": "gru"})


# loss

def test_cross_entropy_examples():
    t = one_hot([0, 3], 6)
    assert categorical_cross_entropy(t, t) == 0.0
    assert categorical_cross_entropy(np.full((2, 6), 1 / 6), t) == pytest.approx(np.log(6))
    half = np.array([[0.5, 0.1, 0.1, 0.1, 0.1, 0.1]])
    assert categorical_cross_entropy(half, one_hot([0], 6)) == pytest.approx(np.log(2))
    zero = np.array([[0.0, 1.0, 0, 0, 0, 0]])
    assert categorical_cross_entropy(zero, one_hot([0], 6)) == pytest.approx(-np.log(1e-12))
    with pytest.raises(ValueError):
        categorical_cross_entropy(np.ones((2, 6)) / 6, np.ones((2, 5)))


def test_cross_entropy_grad_matches_finite_difference(rng):
    p = softmax(rng.normal(size=(3, 6)))
    t = rand_targets(rng, 3, 6)
    g = categorical_cross_entropy_grad(p, t)
    eps = 1e-7
    for i, j in ((0, 0), (1, 4), (2, 5)):
        d = np.zeros_like(p)
        d[i, j] = eps
        num = (categorical_cross_entropy(p + d, t) - categorical_cross_entropy(p - d, t)) / (2 * eps)
        assert g[i, j] == pytest.approx(num, rel=1e-6, abs=1e-9)


# gradients

def test_linear_squared_error_gradient():
    layer = Dense(1)
    layer.build((3,))
    layer.params = {"W": np.array([[0.5], [-1.0], [2.0]]), "b": np.array([0.1])}
    x = np.array([[1.0, 2.0, 3.0]])
    y_true = 1.0
    out, cache = layer.forward(x)
    dx, grads = layer.backward(2 * (out - y_true), cache)
    resid = float((x @ layer.params["W"])[0, 0] + 0.1 - y_true)
    np.testing.assert_allclose(grads["W"][:, 0], 2 * resid * x[0])
    assert grads["b"][0] == pytest.approx(2 * resid)


def test_zero_loss_gradient_gives_zero_grads(rng):
    g = ModelGraph([Conv1D(2, 3), ReLU(), Flatten(), Dense(4), Softmax()], (8, 2), seed=3)
    _, caches = g.forward(rng.normal(size=(2, 8, 2)))
    for layer_grads in g.backward(caches, np.zeros((2, 4))):
        for arr in layer_grads.values():
            assert not arr.any()


def _graphs():
    return {
        "dense_relu_softmax": (lambda: ModelGraph([Dense(7), ReLU(), Dense(4), Softmax()], (5,), seed=1),
                               (6, 5)),
        "conv2d_maxpool": (lambda: ModelGraph([Conv2D(3, (3, 3)), ReLU(), MaxPool2D((2, 2)), Flatten(),
                                               Dense(3), Softmax()], (7, 8, 2), seed=2), (3, 7, 8, 2)),
        "conv1d_maxpool": (lambda: ModelGraph([Conv1D(3, 4), ReLU(), MaxPool1D(3), Flatten(),
                                               Dense(3), Softmax()], (16, 2), seed=3), (3, 16, 2)),
        "maxpool1d_overlapping": (lambda: ModelGraph([Conv1D(2, 2), MaxPool1D(3, 1), Flatten(),
                                                      Dense(3), Softmax()], (9, 2), seed=4), (3, 9, 2)),
        "bilstm_relu": (lambda: ModelGraph([BiLSTM(4), Flatten(), Dense(3), Softmax()], (5, 6), seed=5),
                        (3, 5, 6)),
        "bilstm_tanh": (lambda: ModelGraph([BiLSTM(3, activation="tanh"), Flatten(), Dense(3), Softmax()],
                                           (4, 5), seed=6), (2, 4, 5)),
        "conv1d_bilstm": (lambda: ModelGraph([Conv1D(6, 3), MaxPool1D(2), BiLSTM(3), Flatten(), Dense(3),
                                              Softmax()], (14, 2), seed=7), (2, 14, 2)),
    }


@pytest.mark.parametrize("name", list(_graphs()))
def test_grad_check_per_layer_kind(name):
    build, xshape = _graphs()[name]
    g = build()
    rng = np.random.default_rng(11)
    x = rng.normal(size=xshape)
    t = rand_targets(rng, xshape[0], g.output_shape[0])
    assert grad_check(g, x, t, epsilon=1e-5, max_samples=60) < 1e-4


def test_grad_check_with_dropout_masks():
    g = ModelGraph([Dense(10), ReLU(), Dropout(0.3), Dense(3), Softmax()], (6,), seed=8)
    rng = np.random.default_rng(12)
    x = rng.normal(size=(4, 6))
    assert grad_check(g, x, rand_targets(rng, 4, 3), training=True, seed=5) < 1e-4
    g = ModelGraph([BiLSTM(3, dropout=0.3), Flatten(), Dense(3), Softmax()], (4, 6), seed=9)
    x = rng.normal(size=(2, 4, 6))
    assert grad_check(g, x, rand_targets(rng, 2, 3), training=True, seed=3) < 1e-4


@pytest.mark.parametrize("name", ["conv2d_maxpool", "bilstm_relu", "maxpool1d_overlapping"])
def test_input_gradient_finite_difference(name):
    build, xshape = _graphs()[name]
    g = build()
    rng = np.random.default_rng(21)
    x = rng.normal(size=xshape)
    t = rand_targets(rng, xshape[0], g.output_shape[0])
    loss_and_grads(g, x, t)
    analytic = g.input_grad.reshape(-1)
    flat = x.reshape(-1)
    eps = 1e-5
    for p in rng.choice(flat.size, 25, replace=False):
        orig = flat[p]
        flat[p] = orig + eps
        plus = categorical_cross_entropy(g.forward(x)[0], t)
        flat[p] = orig - eps
        minus = categorical_cross_entropy(g.forward(x)[0], t)
        flat[p] = orig
        num = (plus - minus) / (2 * eps)
        assert abs(analytic[p] - num) / max(abs(analytic[p]), abs(num), 1e-8) < 1e-4


# BiLSTM

def test_bilstm_zero_weights_zero_output(rng):
    g = ModelGraph([BiLSTM(5)], (7, 3))
    for k in g.layers[0].params:
        g.layers[0].params[k][:] = 0.0
    y = g.forward(rng.normal(size=(2, 7, 3)))[0]
    assert y.shape == (2, 7, 10) and not y.any()


def test_bilstm_backward_branch_is_reversed_forward(rng):
    g = ModelGraph([BiLSTM(4)], (6, 3), seed=2)
    p = g.layers[0].params
    for name in ("Wx", "Wh", "b"):
        p[f"bw_{name}"] = p[f"fw_{name}"].copy()
    x = rng.normal(size=(2, 6, 3))
    y = g.forward(x)[0]
    y_rev = g.forward(x[:, ::-1])[0]
    np.testing.assert_allclose(y[..., 4:], y_rev[..., :4][:, ::-1], atol=1e-12)


def test_bilstm_single_step_by_hand():
    g = ModelGraph([BiLSTM(1)], (1, 1))
    for d in ("fw", "bw"):
        g.layers[0].params[f"{d}_Wx"] = np.array([[1.0, 0.0, 2.0, -1.0]])  # i, f, g, o
        g.layers[0].params[f"{d}_Wh"] = np.array([[0.3, 0.3, 0.3, 0.3]])
        g.layers[0].params[f"{d}_b"] = np.zeros(4)
    y = g.forward(np.array([[[1.0]]]))[0]
    sig = lambda v: 1 / (1 + np.exp(-v))
    c = sig(1.0) * np.tanh(2.0)  # previous cell is zero so the forget gate drops out
    h = sig(-1.0) * max(c, 0.0)
    np.testing.assert_allclose(y[0, 0], [h, h], rtol=1e-12)


def test_bilstm_two_steps_against_scalar_recurrence():
    rng = np.random.default_rng(4)
    g = ModelGraph([BiLSTM(1)], (2, 1), seed=1)
    p = g.layers[0].params
    x = rng.normal(size=(1, 2, 1))
    y = g.forward(x)[0]
    sig = lambda v: 1 / (1 + np.exp(-v))

    def run(d, seq):
        wx, wh, b = p[f"{d}_Wx"][0], p[f"{d}_Wh"][0], p[f"{d}_b"]
        h = c = 0.0
        out = []
        for v in seq:
            z = v * wx + h * wh + b
            c = sig(z[1]) * c + sig(z[0]) * np.tanh(z[2])
            h = sig(z[3]) * max(c, 0.0)
            out.append(h)
        return out

    fw = run("fw", x[0, :, 0])
    bw = run("bw", x[0, ::-1, 0])[::-1]
    np.testing.assert_allclose(y[0, :, 0], fw, rtol=1e-12)
    np.testing.assert_allclose(y[0, :, 1], bw, rtol=1e-12)


def test_bilstm_forget_bias_and_params():
    layer = BiLSTM(100)
    g = ModelGraph([layer], (10, 128))
    assert g.param_count() == 2 * 4 * 100 * (128 + 100 + 1)
    b = layer.params["fw_b"]
    assert np.all(b[100:200] == 1.0) and not b[:100].any() and not b[200:].any()
    with pytest.raises(ValueError):
        BiLSTM(3, activation="sigmoid")
    assert sigmoid(np.array([0.0]))[0] == 0.5


# Adam

def test_adam_first_step_sign():
    for g in (0.003, -5.0, 1e3):
        p, _, _ = adam_step(np.array([1.0]), np.array([g]), None, None, 1, lr=1e-3)
        assert p[0] - 1.0 == pytest.approx(-1e-3 * np.sign(g) * abs(g) / (abs(g) + 1e-8), rel=1e-9)


def test_adam_zero_gradient_keeps_params():
    p = np.array([0.5, -2.0])
    m = v = None
    for t in range(1, 50):
        p2, m, v = adam_step(p, np.zeros(2), m, v, t)
        np.testing.assert_array_equal(p2, p)


def test_adam_two_step_hand_trace():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    # step 1: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1
    # step 2: m = 0.19, v = 0.001999, m_hat = 0.19/0.19 = 1, v_hat = 0.001999/0.001999 = 1
    p, m, v = adam_step(np.array([0.0]), np.array([1.0]), None, None, 1, lr, b1, b2, eps)
    assert m[0] == pytest.approx(0.1) and v[0] == pytest.approx(0.001)
    assert p[0] == pytest.approx(-0.1 / (1 + eps), rel=1e-12)
    p, m, v = adam_step(p, np.array([1.0]), m, v, 2, lr, b1, b2, eps)
    assert m[0] == pytest.approx(0.19) and v[0] == pytest.approx(0.001999)
    assert p[0] == pytest.approx(-0.2 / (1 + eps), rel=1e-9)


def test_adam_rejects_non_finite_gradient():
    g = ModelGraph([Dense(2)], (2,))
    with pytest.raises(NonFiniteError):
        Adam().step(g, [{"W": np.full((2, 2), np.nan), "b": np.zeros(2)}])


# training

def blobs(n, seed, sep=4.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.normal(size=(n, 2)) + sep * (2 * y[:, None] - 1)
    return x, y


def small_mlp(seed):
    return ModelGraph([Dense(8), ReLU(), Dense(2), Softmax()], (2,), seed=seed)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_train_separable_blobs(seed):
    tr, va = blobs(64, 0), blobs(32, 1)
    g = ModelGraph([Dense(32), ReLU(), Dense(2), Softmax()], (2,), seed=seed)
    res = train(g, tr, va, TrainConfig(epochs=50, seed=seed))
    assert max(row["train_acc"] for row in res.curves) == 1.0
    assert len(res.curves) == 50


def test_train_deterministic_and_best_epoch():
    tr, va = blobs(40, 2, sep=0.7), blobs(20, 3, sep=0.7)
    cfg = TrainConfig(epochs=15, seed=4, batch_size=8)
    a = train(small_mlp(1), tr, va, cfg)
    b = train(small_mlp(1), tr, va, cfg)
    assert a.curves == b.curves
    for sa, sb in zip(a.best_state, b.best_state):
        for k in sa:
            np.testing.assert_array_equal(sa[k], sb[k])
    accs = [row["val_acc"] for row in a.curves]
    assert a.best_epoch == int(np.argmax(accs)) + 1  # argmax picks the earliest maximum
    assert a.best_val_acc == max(accs)


def test_train_restores_best_state():
    tr, va = blobs(40, 5, sep=0.5), blobs(20, 6, sep=0.5)
    g = small_mlp(2)
    res = train(g, tr, va, TrainConfig(epochs=10, seed=0))
    _, acc, _ = evaluate(g, *va)
    assert acc == res.best_val_acc


def test_train_divergence_keeps_last_good_state():
    g = small_mlp(3)
    initial = g.get_state()
    g.layers[0].params["W"][:] = np.inf
    with pytest.raises(TrainingDiverged) as info:
        train(g, blobs(10, 0), blobs(4, 1), TrainConfig(epochs=3))
    assert info.value.result.curves == []
    assert not np.array_equal(g.layers[0].params["W"], initial[0]["W"])
    assert np.all(np.isinf(g.layers[0].params["W"]))  # restored to the state training started from


def test_train_rejects_empty():
    with pytest.raises(ValueError):
        train(small_mlp(0), (np.zeros((0, 2)), np.zeros(0, int)), blobs(4, 1), TrainConfig(epochs=1))


def test_train_config():
    assert TrainConfig.default().epochs == 100
    assert TrainConfig.default(augment=True).epochs == 200
    assert TrainConfig.default(augment=True, epochs=7).epochs == 7
    with pytest.raises(ValueError):
        TrainConfig(folds=1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


# k-fold

def test_fold_sizes_812():
    folds = fold_assignment(812, 5, 0)
    assert sorted(len(f) for f in folds) == [162, 162, 162, 163, 163]
    assert sorted(np.concatenate(folds).tolist()) == list(range(812))
    np.testing.assert_array_equal(np.concatenate(folds), np.concatenate(fold_assignment(812, 5, 0)))
    assert not all(np.array_equal(a, b) for a, b in zip(folds, fold_assignment(812, 5, 1)))
    with pytest.raises(ValueError):
        fold_assignment(3, 5, 0)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 500), k=st.integers(2, 10), seed=st.integers(0, 1000))
def test_fold_partition_property(n, k, seed):
    if k > n:
        return
    sizes = [len(f) for f in fold_assignment(n, k, seed)]
    assert sum(sizes) == n and max(sizes) - min(sizes) <= 1


def test_metrics_aggregate():
    folds = [FoldResult(i, [], 1, 0.5 + 0.1 * i, 1.0, 0.4 + 0.05 * i, 1.2, 2.0) for i in range(5)]
    agg = MetricsReport(folds).aggregate()
    assert abs(agg["test_acc"]["mean"] - np.mean([0.4, 0.45, 0.5, 0.55, 0.6])) <= 1e-12
    assert agg["test_acc"]["std"] == pytest.approx(np.std([0.4, 0.45, 0.5, 0.55, 0.6]))
    assert agg["train_time_total_s"] == 10.0 and agg["train_time_mean_per_fold_s"] == 2.0


def test_kfold_train_runs_and_is_deterministic():
    pool, test = blobs(50, 7), blobs(20, 8)
    cfg = TrainConfig(epochs=4, folds=3, seed=9)
    a = kfold_train(pool, test, small_mlp, cfg)
    b = kfold_train(pool, test, small_mlp, cfg)
    assert len(a.folds) == 3
    assert a.curves_csv() == b.curves_csv()
    assert a.curves_csv().splitlines()[0] == "fold,epoch,train_loss,train_acc,val_loss,val_acc"
    assert len(a.curves_csv().splitlines()) == 1 + 3 * 4
    for f in a.folds:
        assert 0 <= f.test_acc <= 1 and 0 <= f.val_acc <= 1


def test_kfold_extra_examples_skip_validation_sources():
    x, y = blobs(12, 0)
    seen = []

    class Spy:
        def __init__(self, x_tr):
            seen.append(x_tr.copy())

        def apply(self, v):
            return v

    extra = (x + 1000.0, y, np.arange(12))  # marked copies, one per pool example
    cfg = TrainConfig(epochs=1, folds=3, seed=1)
    kfold_train((x, y), blobs(6, 1), small_mlp, cfg, extra_train=extra, normalizer_factory=Spy)
    folds = fold_assignment(12, 3, 1)
    for val_idx, x_tr in zip(folds, seen):
        copies = x_tr[x_tr[:, 0] > 500] - 1000.0
        assert len(x_tr) == 2 * (12 - len(val_idx))
        val_rows = {tuple(r) for r in x[val_idx]}
        assert not any(tuple(r) in val_rows for r in copies)


# checkpoints

def test_checkpoint_round_trip(tmp_path, rng):
    g = ModelGraph([Conv1D(2, 3), MaxPool1D(2), BiLSTM(3), Flatten(), Dropout(0.5), Dense(6), Softmax()],
                   (12, 1), seed=5, name="t")
    path = tmp_path / "m.ckpt"
    save_model(g, path, {"best_val_acc": 0.5})
    h = load_model(path)
    assert h.specs() == g.specs() and h.input_shape == g.input_shape and h.seed == 5
    assert h.meta == {"best_val_acc": 0.5}
    for (_, _, a), (_, _, b) in zip(g.parameters(), h.parameters()):
        assert a.tobytes() == b.tobytes()
    x = rng.normal(size=(3, 12, 1))
    assert g.forward(x)[0].tobytes() == h.forward(x)[0].tobytes()


def test_checkpoint_corruption_and_version(tmp_path):
    g = ModelGraph([Dense(3), Softmax()], (4,), seed=1)
    path = tmp_path / "m.ckpt"
    save_model(g, path)
    data = bytearray(path.read_bytes())
    bad = tmp_path / "bad.ckpt"
    data[-40] ^= 0xFF
    bad.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="checksum"):
        read_checkpoint(bad)

    raw = path.read_bytes()
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + n])
    header["schema_version"] = 99
    head = json.dumps(header).encode()
    v99 = tmp_path / "v99.ckpt"
    v99.write_bytes(raw[:8] + struct.pack("<Q", len(head)) + head + raw[16 + n:])
    with pytest.raises(CheckpointError, match="version"):
        load_model(v99)

    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"hello")
    with pytest.raises(CheckpointError):
        load_model(junk)


def test_checkpoint_layout(tmp_path):
    g = ModelGraph([Dense(2)], (3,), seed=1)
    path = tmp_path / "m.ckpt"
    save_model(g, path)
    raw = path.read_bytes()
    assert raw[:8] == b"SEMOCKPT"
    (n,) = struct.unpack("<Q", raw[8:16])
    payload = raw[16 + n:-32]
    assert len(payload) == 8 * g.param_count()
    assert hashlib.sha256(payload).digest() == raw[-32:]
    # parameters are stored in layer order, names sorted: W then b
    np.testing.assert_array_equal(np.frombuffer(payload[:48], "<f8").reshape(3, 2), g.layers[0].params["W"])
