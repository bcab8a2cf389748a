from songemo.nn.checkpoint import CheckpointError, load_model, read_checkpoint, save_model
from songemo.nn.graph import (Adam, ModelGraph, NonFiniteError, adam_step,
                              categorical_cross_entropy, categorical_cross_entropy_grad,
                              grad_check, one_hot)
from songemo.nn.layers import (BiLSTM, Conv1D, Conv2D, Dense, Dropout, Flatten, MaxPool1D,
                               MaxPool2D, ReLU, ShapeError, Softmax, softmax)
from songemo.nn.training import (FoldResult, MetricsReport, TrainConfig, TrainingDiverged,
                                 TrainResult, evaluate, fold_assignment, kfold_train, train)

__all__ = [
    "Adam", "BiLSTM", "CheckpointError", "Conv1D", "Conv2D", "Dense", "Dropout", "Flatten",
    "FoldResult", "MaxPool1D", "MaxPool2D", "MetricsReport", "ModelGraph", "NonFiniteError",
    "ReLU", "ShapeError", "Softmax", "TrainConfig", "TrainResult", "TrainingDiverged",
    "adam_step", "categorical_cross_entropy", "categorical_cross_entropy_grad", "evaluate",
    "fold_assignment", "grad_check", "kfold_train", "load_model", "one_hot", "read_checkpoint",
    "save_model", "softmax", "train",
]
