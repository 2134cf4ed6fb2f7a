"""Scikit-learn style estimators wrapping the fusion model and CNN baseline.

Both classifiers implement fit / predict / predict_proba / score and the
get_params / set_params contract, so they compose with sklearn tooling
(clone, grid search, pipelines) without depending on sklearn itself.

X layouts: the fusion classifier takes (n_samples, 2, tokens_per_view,
feature_dim) stacked view-token arrays; the CNN takes (n_samples, 2,
channels, height, width) stacked image pairs. y is binary 0/1.
"""

from __future__ import annotations

import inspect
import math
import warnings

import numpy as np

from .features import DualFrameSample
from .model import (
    BaselineCnnConfig,
    FusionModelConfig,
    build_cnn_baseline,
    build_fusion_model,
)
from .optim import TrainConfig, predict_probability, train


class NotFittedError(RuntimeError):
    """predict/predict_proba called before fit."""


def check_binary_labels(y, n_expected: int) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1 or arr.shape[0] != n_expected:
        raise ValueError(f"y must be 1-d with {n_expected} entries, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("y must contain only 0/1 labels")
    return arr.astype(int)


def check_dual_view_array(X, ndim: int, name: str) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != ndim or arr.shape[1] != 2:
        raise ValueError(
            f"{name} must have shape (n_samples, 2, ...) with {ndim} axes, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


class _ParamsMixin:
    """get_params/set_params over the constructor signature (sklearn contract)."""

    @classmethod
    def _param_names(cls) -> list[str]:
        signature = inspect.signature(cls.__init__)
        return [name for name in signature.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"invalid parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class _BinaryClassifierBase(_ParamsMixin):
    classes_ = np.array([0, 1])

    def _check_fitted(self):
        if getattr(self, "model_", None) is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def _samples(self, X, y=None):
        raise NotImplementedError

    def _build_model(self, X):
        raise NotImplementedError

    def fit(self, X, y):
        samples = self._samples(X, y)
        model = self._build_model(X)
        n_val = int(math.ceil(self.validation_fraction * len(samples)))
        val_set = samples[:n_val]
        train_set = samples[n_val:]
        config = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                             max_epochs=self.max_epochs, seed=self.seed)
        with warnings.catch_warnings():
            if not val_set:
                warnings.simplefilter("ignore")
            checkpoint, history = train(model, train_set, val_set, config, task=self.task)
        model.load_weights(checkpoint)
        self.model_ = model
        self.checkpoint_ = checkpoint
        self.history_ = history
        return self

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        samples = self._samples(X)
        p1 = predict_probability(self.model_, samples)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(int)

    def score(self, X, y) -> float:
        predictions = self.predict(X)
        labels = check_binary_labels(y, len(predictions))
        return float(np.mean(predictions == labels))


class _ViewPairSample:
    __slots__ = ("tokens_a", "tokens_b", "label")

    def __init__(self, tokens_a, tokens_b, label):
        self.tokens_a = tokens_a
        self.tokens_b = tokens_b
        self.label = label


class _ImagePairSample:
    __slots__ = ("image_a", "image_b", "label")

    def __init__(self, image_a, image_b, label):
        self.image_a = image_a
        self.image_b = image_b
        self.label = label


class FusionGazeClassifier(_BinaryClassifierBase):
    """Dual-view token-fusion transformer as a binary classifier.

    fit(X, y) with X of shape (n_samples, 2, tokens_per_view, feature_dim);
    axis 1 stacks the infant and parent views.
    """

    def __init__(self, embed_dim: int = 512, encoder_layers: int = 3,
                 attention_heads: int = 4, dropout: float = 0.426,
                 head_layer_sizes: tuple[int, ...] | None = None,
                 use_positional_embedding: bool = True,
                 use_view_segment_embedding: bool = True,
                 learning_rate: float = 6.1e-6, batch_size: int = 8,
                 max_epochs: int = 80, validation_fraction: float = 0.1,
                 threshold: float = 0.5, task: str = "MG", seed: int = 0):
        self.embed_dim = embed_dim
        self.encoder_layers = encoder_layers
        self.attention_heads = attention_heads
        self.dropout = dropout
        self.head_layer_sizes = head_layer_sizes
        self.use_positional_embedding = use_positional_embedding
        self.use_view_segment_embedding = use_view_segment_embedding
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.threshold = threshold
        self.task = task
        self.seed = seed
        self.model_ = None

    def _samples(self, X, y=None):
        arr = check_dual_view_array(X, ndim=4, name="X")
        labels = check_binary_labels(y, arr.shape[0]) if y is not None \
            else np.zeros(arr.shape[0], dtype=int)
        return [_ViewPairSample(arr[i, 0].astype(np.float32), arr[i, 1].astype(np.float32),
                                int(labels[i])) for i in range(arr.shape[0])]

    def _build_model(self, X):
        arr = np.asarray(X)
        tokens_per_view, feature_dim = arr.shape[2], arr.shape[3]
        head = self.head_layer_sizes
        if head is None:
            head = (self.embed_dim, max(self.embed_dim // 4, 2), 1)
        config = FusionModelConfig(
            feature_dim_in=feature_dim, embed_dim=self.embed_dim,
            encoder_layers=self.encoder_layers, attention_heads=self.attention_heads,
            dropout=self.dropout, head_layer_sizes=tuple(head),
            tokens_per_view=tokens_per_view,
            use_positional_embedding=self.use_positional_embedding,
            use_view_segment_embedding=self.use_view_segment_embedding)
        return build_fusion_model(config, seed=self.seed)


class TwoStreamCnnClassifier(_BinaryClassifierBase):
    """Two-stream convolutional baseline as a binary classifier.

    fit(X, y) with X of shape (n_samples, 2, channels, height, width).
    """

    def __init__(self, channels: tuple[int, int, int] = (8, 16, 32),
                 kernel_sizes: tuple[int, int, int] = (3, 3, 3),
                 fc_sizes: tuple[int, ...] | None = None, dropout: float = 0.426,
                 learning_rate: float = 6.1e-6, batch_size: int = 8,
                 max_epochs: int = 80, validation_fraction: float = 0.1,
                 threshold: float = 0.5, task: str = "MG", seed: int = 0):
        self.channels = channels
        self.kernel_sizes = kernel_sizes
        self.fc_sizes = fc_sizes
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.threshold = threshold
        self.task = task
        self.seed = seed
        self.model_ = None

    def _samples(self, X, y=None):
        arr = check_dual_view_array(X, ndim=5, name="X")
        labels = check_binary_labels(y, arr.shape[0]) if y is not None \
            else np.zeros(arr.shape[0], dtype=int)
        return [_ImagePairSample(arr[i, 0].astype(np.float32), arr[i, 1].astype(np.float32),
                                 int(labels[i])) for i in range(arr.shape[0])]

    def _build_model(self, X):
        arr = np.asarray(X)
        fc = self.fc_sizes
        if fc is None:
            fc = (2 * self.channels[-1], max(self.channels[-1] // 2, 2), 1)
        config = BaselineCnnConfig(channels=tuple(self.channels),
                                   kernel_sizes=tuple(self.kernel_sizes),
                                   fc_sizes=tuple(fc), dropout=self.dropout,
                                   in_channels=int(arr.shape[2]))
        return build_cnn_baseline(config, seed=self.seed)


def samples_to_arrays(samples: list[DualFrameSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack DualFrameSamples into the estimator's (X, y) layout."""
    X = np.stack([np.stack([s.tokens_a, s.tokens_b]) for s in samples])
    y = np.array([s.label for s in samples], dtype=int)
    return X, y
