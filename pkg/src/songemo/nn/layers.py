"""Layer implementations with explicit forward/backward passes.

Tensors are float64 numpy arrays with the batch on axis 0. Spatial layouts
are channels-last: (N, L, C) for 1-D and (N, H, W, C) for 2-D layers;
recurrent layers take (N, T, F).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class Layer:
    kind = "layer"

    def __init__(self, **hyper):
        self.hyper = hyper
        self.params = {}
        self.input_shape = None
        self.output_shape = None

    def build(self, input_shape: tuple) -> tuple:
        """Validate hyperparameters against ``input_shape`` and return the output shape."""
        self.input_shape = tuple(input_shape)
        self.output_shape = tuple(self._infer(self.input_shape))
        return self.output_shape

    def _infer(self, shape):
        return shape

    def param_shapes(self) -> dict:
        return {}

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dy, cache):
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind, "hyper": dict(self.hyper)}


def _fan_in_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, units: int):
        super().__init__(units=int(units))

    def _infer(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"dense expects a flat input, got {shape}")
        return (self.hyper["units"],)

    def param_shapes(self):
        return {"W": (self.input_shape[0], self.hyper["units"]), "b": (self.hyper["units"],)}

    def init_params(self, rng):
        n_in, units = self.input_shape[0], self.hyper["units"]
        self.params = {"W": _fan_in_uniform(rng, (n_in, units), n_in), "b": np.zeros(units)}

    def forward(self, x, training=False, rng=None):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, dy, x):
        grads = {"W": x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["W"].T, grads


class Conv1D(Layer):
    """Valid 1-D convolution (cross-correlation) with stride 1."""

    kind = "conv1d"

    def __init__(self, filters: int, kernel: int):
        super().__init__(filters=int(filters), kernel=int(kernel))

    def _infer(self, shape):
        if len(shape) != 2:
            raise ShapeError(f"conv1d expects (length, channels), got {shape}")
        k = self.hyper["kernel"]
        if k > shape[0]:
            raise ShapeError(f"conv1d kernel {k} exceeds input length {shape[0]}")
        return (shape[0] - k + 1, self.hyper["filters"])

    def param_shapes(self):
        k, c, f = self.hyper["kernel"], self.input_shape[1], self.hyper["filters"]
        return {"W": (k, c, f), "b": (f,)}

    def init_params(self, rng):
        shapes = self.param_shapes()
        k, c, f = shapes["W"]
        self.params = {"W": _fan_in_uniform(rng, (k, c, f), k * c), "b": np.zeros(f)}

    def forward(self, x, training=False, rng=None):
        k, c, f = self.params["W"].shape
        n, length, _ = x.shape
        out_len = length - k + 1
        # (n, out_len, c, k) -> (n, out_len, k, c)
        cols = sliding_window_view(x, k, axis=1).transpose(0, 1, 3, 2).reshape(n * out_len, k * c)
        y = cols @ self.params["W"].reshape(k * c, f) + self.params["b"]
        return y.reshape(n, out_len, f), (x.shape, cols)

    def backward(self, dy, cache):
        x_shape, cols = cache
        k, c, f = self.params["W"].shape
        n, out_len, _ = dy.shape
        dy2 = dy.reshape(n * out_len, f)
        grads = {"W": (cols.T @ dy2).reshape(k, c, f), "b": dy2.sum(axis=0)}
        dcols = (dy2 @ self.params["W"].reshape(k * c, f).T).reshape(n, out_len, k, c)
        dx = np.zeros(x_shape)
        for i in range(k):
            dx[:, i:i + out_len, :] += dcols[:, :, i, :]
        return dx, grads


class Conv2D(Layer):
    """Valid 2-D convolution (cross-correlation) with stride (1, 1)."""

    kind = "conv2d"

    def __init__(self, filters: int, kernel):
        super().__init__(filters=int(filters), kernel=[int(k) for k in kernel])

    def _infer(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"conv2d expects (height, width, channels), got {shape}")
        kh, kw = self.hyper["kernel"]
        if kh > shape[0] or kw > shape[1]:
            raise ShapeError(f"conv2d kernel {(kh, kw)} exceeds input extent {shape[:2]}")
        return (shape[0] - kh + 1, shape[1] - kw + 1, self.hyper["filters"])

    def param_shapes(self):
        kh, kw = self.hyper["kernel"]
        return {"W": (kh, kw, self.input_shape[2], self.hyper["filters"]),
                "b": (self.hyper["filters"],)}

    def init_params(self, rng):
        kh, kw, c, f = self.param_shapes()["W"]
        self.params = {"W": _fan_in_uniform(rng, (kh, kw, c, f), kh * kw * c), "b": np.zeros(f)}

    def forward(self, x, training=False, rng=None):
        kh, kw, c, f = self.params["W"].shape
        n, h, w, _ = x.shape
        oh, ow = h - kh + 1, w - kw + 1
        # (n, oh, ow, c, kh, kw) -> (n, oh, ow, kh, kw, c)
        win = sliding_window_view(x, (kh, kw), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
        cols = win.reshape(n * oh * ow, kh * kw * c)
        y = cols @ self.params["W"].reshape(kh * kw * c, f) + self.params["b"]
        return y.reshape(n, oh, ow, f), (x.shape, cols)

    def backward(self, dy, cache):
        x_shape, cols = cache
        kh, kw, c, f = self.params["W"].shape
        n, oh, ow, _ = dy.shape
        dy2 = dy.reshape(-1, f)
        grads = {"W": (cols.T @ dy2).reshape(kh, kw, c, f), "b": dy2.sum(axis=0)}
        dcols = (dy2 @ self.params["W"].reshape(-1, f).T).reshape(n, oh, ow, kh, kw, c)
        dx = np.zeros(x_shape)
        for i in range(kh):
            for j in range(kw):
                dx[:, i:i + oh, j:j + ow, :] += dcols[:, :, :, i, j, :]
        return dx, grads


def _pool_out(extent, pool, stride):
    return (extent - pool) // stride + 1


class MaxPool1D(Layer):
    kind = "maxpool1d"

    def __init__(self, pool: int, stride: int = None):
        super().__init__(pool=int(pool), stride=int(stride if stride is not None else pool))

    def _infer(self, shape):
        if len(shape) != 2:
            raise ShapeError(f"maxpool1d expects (length, channels), got {shape}")
        p, s = self.hyper["pool"], self.hyper["stride"]
        if p > shape[0]:
            raise ShapeError(f"pool size {p} exceeds input length {shape[0]}")
        return (_pool_out(shape[0], p, s), shape[1])

    def forward(self, x, training=False, rng=None):
        p, s = self.hyper["pool"], self.hyper["stride"]
        out_len = _pool_out(x.shape[1], p, s)
        win = sliding_window_view(x, p, axis=1)[:, ::s][:, :out_len]  # (n, out, c, p)
        arg = win.argmax(axis=-1)
        y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        return y, (x.shape, arg)

    def backward(self, dy, cache):
        x_shape, arg = cache
        p, s = self.hyper["pool"], self.hyper["stride"]
        out_len = dy.shape[1]
        dx = np.zeros(x_shape)
        span = s * (out_len - 1) + 1
        for i in range(p):
            dx[:, i:i + span:s, :] += np.where(arg == i, dy, 0.0)
        return dx, {}


class MaxPool2D(Layer):
    kind = "maxpool2d"

    def __init__(self, pool, stride=None):
        pool = [int(v) for v in pool]
        stride = pool if stride is None else [int(v) for v in stride]
        super().__init__(pool=pool, stride=stride)

    def _infer(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"maxpool2d expects (height, width, channels), got {shape}")
        (ph, pw), (sh, sw) = self.hyper["pool"], self.hyper["stride"]
        if ph > shape[0] or pw > shape[1]:
            raise ShapeError(f"pool {(ph, pw)} exceeds input extent {shape[:2]}")
        return (_pool_out(shape[0], ph, sh), _pool_out(shape[1], pw, sw), shape[2])

    def forward(self, x, training=False, rng=None):
        (ph, pw), (sh, sw) = self.hyper["pool"], self.hyper["stride"]
        n, h, w, c = x.shape
        oh, ow = _pool_out(h, ph, sh), _pool_out(w, pw, sw)
        win = sliding_window_view(x, (ph, pw), axis=(1, 2))[:, ::sh, ::sw][:, :oh, :ow]
        flat = win.reshape(n, oh, ow, c, ph * pw)
        arg = flat.argmax(axis=-1)  # first maximum in row-major window order
        y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        return y, (x.shape, arg)

    def backward(self, dy, cache):
        x_shape, arg = cache
        (ph, pw), (sh, sw) = self.hyper["pool"], self.hyper["stride"]
        _, oh, ow, _ = dy.shape
        dx = np.zeros(x_shape)
        span_h, span_w = sh * (oh - 1) + 1, sw * (ow - 1) + 1
        for i in range(ph):
            for j in range(pw):
                dx[:, i:i + span_h:sh, j:j + span_w:sw, :] += np.where(arg == i * pw + j, dy, 0.0)
        return dx, {}


class Flatten(Layer):
    kind = "flatten"

    def _infer(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, shape):
        return dy.reshape(shape), {}


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    kind = "dropout"

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        super().__init__(rate=float(rate))

    def forward(self, x, training=False, rng=None):
        rate = self.hyper["rate"]
        if not training or rate == 0.0:
            return x, None
        mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
        return x * mask, mask

    def backward(self, dy, mask):
        return (dy if mask is None else dy * mask), {}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        return np.maximum(x, 0.0), x > 0

    def backward(self, dy, positive):
        return dy * positive, {}


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def _infer(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"softmax expects a flat input, got {shape}")
        return shape

    def forward(self, x, training=False, rng=None):
        p = softmax(x)
        return p, p

    def backward(self, dy, p):
        return p * (dy - np.sum(dy * p, axis=-1, keepdims=True)), {}


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class BiLSTM(Layer):
    """Bidirectional LSTM returning the full sequence, shape (N, T, 2*units).

    Gates (input, forget, output) use the sigmoid and the candidate uses tanh;
    the cell state passes through ``activation`` ("relu" or "tanh") before
    the output gate. ``dropout`` masks input features during training with
    one mask per sequence, shared across time steps.
    """

    kind = "bilstm"

    def __init__(self, units: int, activation: str = "relu", dropout: float = 0.0):
        if activation not in ("relu", "tanh"):
            raise ValueError("activation must be 'relu' or 'tanh'")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        super().__init__(units=int(units), activation=activation, dropout=float(dropout),
                         return_sequences=True)

    def _infer(self, shape):
        if len(shape) != 2:
            raise ShapeError(f"bilstm expects (steps, features), got {shape}")
        return (shape[0], 2 * self.hyper["units"])

    def param_shapes(self):
        u, f = self.hyper["units"], self.input_shape[1]
        shapes = {}
        for d in ("fw", "bw"):
            shapes[f"{d}_Wx"] = (f, 4 * u)
            shapes[f"{d}_Wh"] = (u, 4 * u)
            shapes[f"{d}_b"] = (4 * u,)
        return shapes

    def init_params(self, rng):
        u, f = self.hyper["units"], self.input_shape[1]
        self.params = {}
        for d in ("fw", "bw"):
            self.params[f"{d}_Wx"] = _fan_in_uniform(rng, (f, 4 * u), f)
            self.params[f"{d}_Wh"] = _fan_in_uniform(rng, (u, 4 * u), u)
            b = np.zeros(4 * u)
            b[u:2 * u] = 1.0  # forget gate
            self.params[f"{d}_b"] = b

    def _act(self, c):
        if self.hyper["activation"] == "relu":
            return np.maximum(c, 0.0)
        return np.tanh(c)

    def _act_grad(self, c, a):
        if self.hyper["activation"] == "relu":
            return (c > 0).astype(np.float64)
        return 1.0 - a * a

    def _run(self, x, d):
        """One direction over x (N, T, F) in its own time order."""
        u = self.hyper["units"]
        wx, wh, b = self.params[f"{d}_Wx"], self.params[f"{d}_Wh"], self.params[f"{d}_b"]
        n, steps, _ = x.shape
        xw = x @ wx + b  # (N, T, 4U)
        h = np.zeros((n, u))
        c = np.zeros((n, u))
        hs = np.zeros((n, steps, u))
        cache = []
        for t in range(steps):
            z = xw[:, t] + h @ wh
            i = sigmoid(z[:, :u])
            f = sigmoid(z[:, u:2 * u])
            g = np.tanh(z[:, 2 * u:3 * u])
            o = sigmoid(z[:, 3 * u:])
            c_prev = c
            c = f * c_prev + i * g
            a = self._act(c)
            h_prev = h
            h = o * a
            hs[:, t] = h
            cache.append((i, f, g, o, c_prev, c, a, h_prev))
        return hs, cache

    def _run_backward(self, x, dhs, cache, d):
        u = self.hyper["units"]
        wx, wh = self.params[f"{d}_Wx"], self.params[f"{d}_Wh"]
        n, steps, _ = x.shape
        dz_all = np.zeros((n, steps, 4 * u))
        dwh = np.zeros_like(wh)
        dh_next = np.zeros((n, u))
        dc_next = np.zeros((n, u))
        for t in reversed(range(steps)):
            i, f, g, o, c_prev, c, a, h_prev = cache[t]
            dh = dhs[:, t] + dh_next
            do = dh * a
            dc = dh * o * self._act_grad(c, a) + dc_next
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                 dg * (1 - g * g), do * o * (1 - o)], axis=1)
            dz_all[:, t] = dz
            dwh += h_prev.T @ dz
            dh_next = dz @ wh.T
        grads = {
            f"{d}_Wx": np.einsum("ntf,ntg->fg", x, dz_all),
            f"{d}_Wh": dwh,
            f"{d}_b": dz_all.sum(axis=(0, 1)),
        }
        return dz_all @ wx.T, grads

    def forward(self, x, training=False, rng=None):
        rate = self.hyper["dropout"]
        mask = None
        if training and rate > 0.0:
            mask = (rng.random((x.shape[0], 1, x.shape[2])) >= rate) / (1.0 - rate)
            x = x * mask
        h_fw, c_fw = self._run(x, "fw")
        x_rev = x[:, ::-1]
        h_bw, c_bw = self._run(x_rev, "bw")
        y = np.concatenate([h_fw, h_bw[:, ::-1]], axis=-1)
        return y, (x, x_rev, c_fw, c_bw, mask)

    def backward(self, dy, cache):
        x, x_rev, c_fw, c_bw, mask = cache
        u = self.hyper["units"]
        dx_fw, g_fw = self._run_backward(x, dy[..., :u], c_fw, "fw")
        dx_bw_rev, g_bw = self._run_backward(x_rev, dy[..., u:][:, ::-1], c_bw, "bw")
        dx = dx_fw + dx_bw_rev[:, ::-1]
        if mask is not None:
            dx = dx * mask
        return dx, {**g_fw, **g_bw}


LAYER_KINDS = {cls.kind: cls for cls in
               (Dense, Conv1D, Conv2D, MaxPool1D, MaxPool2D, Flatten, Dropout, ReLU, Softmax, BiLSTM)}


def layer_from_spec(spec: dict) -> Layer:
    kind = spec["kind"]
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    hyper = dict(spec.get("hyper", {}))
    hyper.pop("return_sequences", None)
    return LAYER_KINDS[kind](**hyper)
