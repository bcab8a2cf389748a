"""Sequential model graph, loss and Adam."""

import numpy as np

from songemo.nn.layers import layer_from_spec

LOG_CLAMP = 1e-12


class NonFiniteError(FloatingPointError):
    pass


class ModelGraph:
    """An ordered stack of layers with static shape inference.

    Parameters are allocated by ``init_params``; a graph built with
    ``init=False`` supports shape inference and parameter counting only.
    """

    def __init__(self, layers, input_shape, seed: int = 0, init: bool = True, name: str = ""):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = int(seed)
        self.name = name
        self.shapes = [self.input_shape]
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape)
            self.shapes.append(shape)
        if init:
            self.init_params(seed)

    @property
    def output_shape(self):
        return self.shapes[-1]

    def init_params(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init_params(rng)

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for layer in self.layers for s in layer.param_shapes().values())

    def parameters(self):
        """(layer index, name, array) for every parameter tensor, in layer order."""
        out = []
        for idx, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                out.append((idx, name, layer.params[name]))
        return out

    def get_state(self) -> list:
        return [{k: v.copy() for k, v in layer.params.items()} for layer in self.layers]

    def set_state(self, state: list) -> None:
        for layer, params in zip(self.layers, state):
            layer.params = {k: v.copy() for k, v in params.items()}

    def specs(self) -> list:
        return [layer.spec() for layer in self.layers]

    def shape_of(self, kind: str) -> tuple:
        """Input shape of the first layer of ``kind`` (e.g. the flatten input)."""
        for layer, shape in zip(self.layers, self.shapes):
            if layer.kind == kind:
                return shape
        raise KeyError(kind)

    def forward(self, x, training: bool = False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match graph input {self.input_shape}")
        if training and rng is None:
            rng = np.random.default_rng(self.seed)
        caches = []
        for idx, layer in enumerate(self.layers):
            x, cache = layer.forward(x, training=training, rng=rng)
            if not np.all(np.isfinite(x)):
                raise NonFiniteError(f"non-finite output from layer {idx} ({layer.kind})")
            caches.append(cache)
        return x, caches

    def predict(self, x, batch_size: int = 64) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        outs = [self.forward(x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(outs) if outs else np.zeros((0,) + self.output_shape)

    def backward(self, caches, dout) -> list:
        """Per-layer gradient dicts shaped like each layer's parameters."""
        if caches is None or len(caches) != len(self.layers):
            raise ValueError("backward requires the cache of a forward pass through this graph")
        grads = [None] * len(self.layers)
        dy = dout
        for idx in reversed(range(len(self.layers))):
            dy, g = self.layers[idx].backward(dy, caches[idx])
            grads[idx] = g
        self.input_grad = dy
        return grads

    @classmethod
    def from_specs(cls, specs, input_shape, seed=0, init=True, name=""):
        return cls([layer_from_spec(s) for s in specs], input_shape, seed, init, name)

    def __repr__(self):
        return f"ModelGraph({self.name or 'unnamed'}, {len(self.layers)} layers, {self.param_count()} params)"


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def categorical_cross_entropy(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target {target.shape}")
    return float(-np.mean(np.sum(target * np.log(np.maximum(pred, LOG_CLAMP)), axis=1)))


def categorical_cross_entropy_grad(pred, target) -> np.ndarray:
    """Gradient of the mean loss with respect to the predicted probabilities."""
    clamped = np.maximum(pred, LOG_CLAMP)
    return np.where(pred > LOG_CLAMP, -target / clamped, 0.0) / pred.shape[0]


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr, self.beta1, self.beta2, self.epsilon = lr, beta1, beta2, epsilon
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, graph: ModelGraph, grads: list) -> None:
        for idx, g in enumerate(grads):
            for name, grad in g.items():
                if not np.all(np.isfinite(grad)):
                    raise NonFiniteError(f"non-finite gradient for layer {idx} parameter {name}")
        self.t += 1
        for idx, g in enumerate(grads):
            params = graph.layers[idx].params
            for name, grad in g.items():
                key = (idx, name)
                params[name], self.m[key], self.v[key] = adam_step(
                    params[name], grad, self.m.get(key), self.v.get(key), self.t,
                    self.lr, self.beta1, self.beta2, self.epsilon)


def adam_step(param, grad, m, v, t, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
    """One bias-corrected Adam update; ``t`` is the 1-based step number."""
    if m is None:
        m = np.zeros_like(param)
        v = np.zeros_like(param)
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return param - lr * m_hat / (np.sqrt(v_hat) + epsilon), m, v


def loss_and_grads(graph, x, y_onehot, training=False, seed=None):
    rng = np.random.default_rng(seed) if seed is not None else None
    pred, caches = graph.forward(x, training=training, rng=rng)
    loss = categorical_cross_entropy(pred, y_onehot)
    grads = graph.backward(caches, categorical_cross_entropy_grad(pred, y_onehot))
    return loss, grads


def grad_check(graph: ModelGraph, x, target, epsilon: float = 1e-5, max_samples: int = 200,
               seed: int = 0, training: bool = False) -> float:
    """Max relative error between analytic and central-difference parameter gradients.

    With ``training=True`` every forward pass reuses the same dropout masks.
    """
    mask_seed = seed if training else None
    _, grads = loss_and_grads(graph, x, target, training, mask_seed)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for idx, name, param in graph.parameters():
        analytic = grads[idx][name]
        flat = param.reshape(-1)
        count = min(max_samples, flat.size)
        picks = rng.choice(flat.size, size=count, replace=False)
        for p in picks:
            orig = flat[p]
            flat[p] = orig + epsilon
            plus = categorical_cross_entropy(
                graph.forward(x, training, np.random.default_rng(mask_seed) if training else None)[0], target)
            flat[p] = orig - epsilon
            minus = categorical_cross_entropy(
                graph.forward(x, training, np.random.default_rng(mask_seed) if training else None)[0], target)
            flat[p] = orig
            numeric = (plus - minus) / (2.0 * epsilon)
            a = analytic.reshape(-1)[p]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
