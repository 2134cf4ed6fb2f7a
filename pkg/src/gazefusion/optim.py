"""Adam, BCE-with-logits, and the training loop with F1 checkpoint selection.

Each epoch shuffles by seed, runs minibatch forward/BCE/backward/Adam (the
last incomplete minibatch is kept), evaluates validation F1 at the configured
threshold, and retains the checkpoint with the highest validation F1, ties
resolved to the earliest epoch. A NaN/Inf loss aborts with the epoch and step
named. (seed, data, config) fully determine the history.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .evaluation import MetricReport, threshold_metrics
from .model import (
    BaselineCnnConfig,
    FusionModelConfig,
    ModelCheckpoint,
    build_cnn_baseline,
    build_fusion_model,
)
from .rng import named_stream


class ContractError(ValueError):
    """A training-API precondition was violated."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; message names the epoch and step."""


@dataclass
class TrainConfig:
    """Training hyperparameters (defaults: production values)."""

    learning_rate: float = 6.1e-6
    batch_size: int = 8
    max_epochs: int = 80
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    threshold_for_val_f1: float = 0.5
    shuffle_each_epoch: bool = True

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise T.ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise T.ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise T.ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        for name in ("adam_beta1", "adam_beta2"):
            beta = getattr(self, name)
            if not 0.0 < beta < 1.0:
                raise T.ConfigError(f"{name} must be in (0, 1), got {beta}")
        if self.adam_eps <= 0:
            raise T.ConfigError(f"adam_eps must be > 0, got {self.adam_eps}")


class AdamState:
    """Per-parameter first/second moment buffers plus the shared step counter."""

    def __init__(self, params: dict[str, T.Tensor]):
        self.m = {name: np.zeros(p.shape, dtype=p.dtype) for name, p in params.items()}
        self.v = {name: np.zeros(p.shape, dtype=p.dtype) for name, p in params.items()}
        self.step = 0


def adam_step(params: dict[str, T.Tensor], state: AdamState, config: TrainConfig) -> None:
    """Standard bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    b1, b2 = config.adam_beta1, config.adam_beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, p in params.items():
        if name not in state.m:
            raise T.ShapeError(f"optimizer state missing parameter {name!r}")
        grad = p.grad if p.grad is not None else np.zeros(p.shape, dtype=p.dtype)
        if grad.shape != p.shape:
            raise T.ShapeError(f"gradient shape {grad.shape} != parameter shape {p.shape}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * grad
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * grad * grad
        m_hat = state.m[name] / bias1
        v_hat = state.v[name] / bias2
        p.data = p.data - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


def bce_with_logits(logit: T.Tensor, target) -> T.Tensor:
    """Numerically stable binary cross-entropy on a raw scalar logit.

    Forward: max(z, 0) - z*y + log(1 + exp(-|z|)); gradient: sigmoid(z) - y.
    """
    if logit.size != 1:
        raise T.ShapeError(f"bce_with_logits expects a scalar logit, got shape {logit.shape}")
    y = float(target)
    if y not in (0.0, 1.0):
        raise ContractError(f"target must be binary 0/1, got {target!r}")
    z = float(logit.data.reshape(()))
    value = max(z, 0.0) - z * y + math.log1p(math.exp(-abs(z)))
    sig = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))

    def bw(g):
        logit.accumulate_grad(
            (g * np.asarray(sig - y, dtype=logit.dtype)).reshape(logit.shape))

    return T._result(np.asarray(value, dtype=logit.dtype).reshape(logit.shape),
                     (logit,), "bce_with_logits", bw)


def mean_batch_loss(losses: list[T.Tensor]) -> T.Tensor:
    """Average a list of scalar losses (batch losses are averaged, not summed)."""
    if not losses:
        raise ContractError("empty loss list")
    total = losses[0]
    for term in losses[1:]:
        total = T.add(total, term)
    return T.mul(total, 1.0 / len(losses))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float | None = None
    val_precision: float | None = None
    val_recall: float | None = None
    val_f1: float | None = None


HISTORY_HEADER = ["epoch", "train_loss", "val_accuracy", "val_precision",
                  "val_recall", "val_f1"]


def write_history_csv(history: list[EpochRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for rec in history:
            row = [str(rec.epoch), f"{rec.train_loss:.6f}"]
            for value in (rec.val_accuracy, rec.val_precision, rec.val_recall, rec.val_f1):
                row.append("" if value is None else f"{value:.6f}")
            writer.writerow(row)


def _sample_views(sample):
    if hasattr(sample, "tokens_a"):
        return sample.tokens_a, sample.tokens_b
    return sample.image_a, sample.image_b


def predict_probability(model, samples) -> np.ndarray:
    """Eval-mode sigmoid probabilities; sigmoid is applied only here."""
    probs = np.empty(len(samples), dtype=np.float64)
    with T.no_grad():
        for i, sample in enumerate(samples):
            a, b = _sample_views(sample)
            z = model.forward(a, b, train_mode=False).item()
            probs[i] = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    return probs


def train(model, train_set, val_set, config: TrainConfig,
          task: str = "MG") -> tuple[ModelCheckpoint, list[EpochRecord]]:
    """Train in place; return the best-validation-F1 checkpoint and history."""
    config.validate()
    if not train_set:
        raise ContractError("train set must be non-empty")
    if not val_set:
        warnings.warn("validation set is empty: the last epoch's weights win",
                      stacklevel=2)
    shuffle_rng = named_stream(config.seed, "shuffle")
    state = AdamState(model.params)
    history: list[EpochRecord] = []
    best: tuple[float, int, dict[str, np.ndarray]] | None = None
    val_labels = np.array([s.label for s in val_set]) if val_set else None

    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        if config.shuffle_each_epoch:
            order = shuffle_rng.permutation(n)
        else:
            order = np.arange(n)
        loss_sum = 0.0
        for step, start in enumerate(range(0, n, config.batch_size)):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            model.zero_grad()
            try:
                losses = []
                for sample in batch:
                    a, b = _sample_views(sample)
                    logit = model.forward(a, b, train_mode=True)
                    losses.append(bce_with_logits(logit, sample.label))
                batch_loss = mean_batch_loss(losses)
                T.backward(batch_loss)
            except T.NonFiniteError as exc:
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step}: {exc}") from exc
            adam_step(model.params, state, config)
            loss_sum += batch_loss.item() * len(batch)
        train_loss = loss_sum / n

        record = EpochRecord(epoch=epoch, train_loss=train_loss)
        if val_set:
            probs = predict_probability(model, val_set)
            report = threshold_metrics(probs, val_labels,
                                       threshold=config.threshold_for_val_f1, task=task)
            record.val_accuracy = report.accuracy
            record.val_precision = report.precision
            record.val_recall = report.recall
            record.val_f1 = report.f1
            if best is None or report.f1 > best[0]:
                best = (report.f1, epoch,
                        {name: p.data.copy() for name, p in model.params.items()})
        history.append(record)

    if best is None:
        best = (float("nan"), config.max_epochs,
                {name: p.data.copy() for name, p in model.params.items()})
    best_f1, best_epoch, best_weights = best
    checkpoint = ModelCheckpoint(
        kind=model.kind, config=model.config, weights=best_weights,
        epoch=best_epoch, seed=config.seed,
        val_f1=None if math.isnan(best_f1) else best_f1, task=task)
    return checkpoint, history


@dataclass
class MultiSeedTask:
    """Everything one training run needs, minus the seed."""

    model_config: FusionModelConfig | BaselineCnnConfig
    train_config: TrainConfig
    train_set: list
    val_set: list
    test_set: list
    task: str = "MG"
    test_threshold: float = 0.5


def _build_for(task_config: MultiSeedTask, seed: int):
    if isinstance(task_config.model_config, FusionModelConfig):
        return build_fusion_model(task_config.model_config, seed=seed)
    return build_cnn_baseline(task_config.model_config, seed=seed)


def run_multiseed(task_config: MultiSeedTask,
                  seeds: list[int]) -> list[tuple[ModelCheckpoint, MetricReport]]:
    """Independent runs, one per seed, all scored on the identical test set."""
    if not seeds:
        raise ContractError("need at least one seed")
    results = []
    test_labels = np.array([s.label for s in task_config.test_set])
    for seed in seeds:
        try:
            model = _build_for(task_config, seed)
            run_config = replace(task_config.train_config, seed=seed)
            checkpoint, _ = train(model, task_config.train_set, task_config.val_set,
                                  run_config, task=task_config.task)
            model.load_weights(checkpoint)
            probs = predict_probability(model, task_config.test_set)
            report = threshold_metrics(probs, test_labels,
                                       threshold=task_config.test_threshold,
                                       task=task_config.task, seed=seed)
        except Exception as exc:
            raise RuntimeError(f"run with seed {seed} failed: {exc}") from exc
        results.append((checkpoint, report))
    return results
