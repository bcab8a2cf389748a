"""The four reference architectures."""

from songemo import NUM_CLASSES, NUM_FRAMES
from songemo.nn import (BiLSTM, Conv1D, Conv2D, Dense, Dropout, Flatten, MaxPool1D, MaxPool2D,
                        ModelGraph, ReLU, Softmax)

ARCHITECTURES = ("mlp", "cnn2d", "cnn1d", "crnn")
MLP_INPUT_DIM = 11394
CNN2D_INPUT = (12, NUM_FRAMES, 1)
CNN1D_INPUT_LEN = 12 * NUM_FRAMES  # 5064
DROPOUT = 0.5

# Published parameter figures, kept for comparison with param_count().
PUBLISHED_PARAM_CLAIMS = {
    "mlp": "over 141M",
    "cnn2d": "almost 125k",
    "cnn1d": "over 6M",
    "crnn": "over 19M",
}


def _head(hidden):
    layers = []
    for units in hidden:
        layers += [Dense(units), ReLU(), Dropout(DROPOUT)]
    return layers + [Dense(NUM_CLASSES), Softmax()]


def build_mlp(input_dim: int = MLP_INPUT_DIM, seed: int = 0, init: bool = True) -> ModelGraph:
    if input_dim < 1:
        raise ValueError("input_dim must be positive")
    return ModelGraph(_head((1024, 128)), (input_dim,), seed, init, name="mlp")


def build_cnn2d(input_shape=CNN2D_INPUT, seed: int = 0, init: bool = True) -> ModelGraph:
    layers = [
        Conv2D(24, (5, 5)), ReLU(), MaxPool2D((2, 4), (2, 4)),
        Conv2D(48, (2, 2)), ReLU(), MaxPool2D((1, 3), (1, 3)),
        Conv2D(48, (3, 3)), ReLU(),
        Flatten(), Dropout(DROPOUT),
        Dense(64), ReLU(), Dropout(DROPOUT),
        Dense(NUM_CLASSES), Softmax(),
    ]
    return ModelGraph(layers, input_shape, seed, init, name="cnn2d")


def _conv1d_blocks(filters):
    layers = []
    for f in filters:
        layers += [Conv1D(f, 4), ReLU(), MaxPool1D(3, 3)]
    return layers


def build_cnn1d(input_len: int = CNN1D_INPUT_LEN, seed: int = 0, init: bool = True) -> ModelGraph:
    layers = _conv1d_blocks((16, 32, 32)) + [Flatten()] + _head((1024, 128))
    return ModelGraph(layers, (input_len, 1), seed, init, name="cnn1d")


def build_crnn(input_len: int = CNN1D_INPUT_LEN, seed: int = 0, init: bool = True,
               lstm_units: int = 100) -> ModelGraph:
    layers = (_conv1d_blocks((16, 16, 16))
              + [BiLSTM(lstm_units, activation="relu", dropout=DROPOUT), Flatten()]
              + _head((1024, 128)))
    return ModelGraph(layers, (input_len, 1), seed, init, name="crnn")


def param_count(graph: ModelGraph) -> int:
    return graph.param_count()


def build(arch: str, input_shape, seed: int = 0, init: bool = True) -> ModelGraph:
    """Build ``arch`` for a sample of ``input_shape`` (without the batch axis)."""
    input_shape = tuple(input_shape)
    if arch == "mlp":
        if len(input_shape) != 1:
            raise ValueError(f"mlp expects a flat vector input, got {input_shape}")
        return build_mlp(input_shape[0], seed, init)
    if arch == "cnn2d":
        if len(input_shape) != 3 or input_shape[2] != 1:
            raise ValueError(f"cnn2d expects (bins, frames, 1), got {input_shape}")
        return build_cnn2d(input_shape, seed, init)
    if arch in ("cnn1d", "crnn"):
        if len(input_shape) != 2 or input_shape[1] != 1:
            raise ValueError(f"{arch} expects (length, 1), got {input_shape}")
        builder = build_cnn1d if arch == "cnn1d" else build_crnn
        return builder(input_shape[0], seed, init)
    raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
