"""SGD training loop, parameter initialization, and pairwise metrics."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .data import PairDataset
from .errors import ConfigurationError, TrainingDivergenceError
from .model import Hyper, ModelParams, forward_pairs, pair_loss_and_grads, pairwise_loss
from .numerics import ParamTensor

__all__ = [
    "TrainConfig",
    "Metrics",
    "init_params",
    "sgd_step",
    "lr_schedule",
    "train_epoch",
    "evaluate",
    "binary_f1",
]


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr0: float = 5e-2
    weight_decay: float = 1e-5
    decay_factor: float = 0.5
    decay_every: int = 10
    seed: int = 0
    lam: float | None = None  # graph threshold; None -> 1/l
    pooling_mode: str = "max_avg"
    views: tuple[str, ...] = ("deep", "color", "hsv", "sift")

    def __post_init__(self) -> None:
        if self.lr0 <= 0:
            raise ConfigurationError("lr0 must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ConfigurationError("decay_factor must be in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0 or self.decay_every < 1:
            raise ConfigurationError("invalid epoch/batch settings")
        self.views = tuple(self.views)

    def resolve_lam(self, l: int) -> float:
        return 1.0 / l if self.lam is None else self.lam


@dataclass(frozen=True)
class Metrics:
    loss: float
    accuracy: float
    f1: float


def init_params(hyper: Hyper, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases; FC3 fully zero so initial f = 0.5."""
    from .model import expected_shapes

    rng = np.random.default_rng(seed)
    tensors: OrderedDict[str, ParamTensor] = OrderedDict()
    for name, shape in expected_shapes(hyper).items():
        if name.endswith("/b") or name.startswith("fc3/"):
            tensors[name] = ParamTensor(np.zeros(shape))
        else:
            fan_out, fan_in = shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = ParamTensor(rng.uniform(-bound, bound, size=shape))
    return ModelParams(hyper, tensors)


def sgd_step(params: ModelParams, lr: float, weight_decay: float) -> None:
    """w <- w - lr (grad + wd * w); biases are excluded from decay. Grads reset."""
    for name, t in params.items():
        if not np.all(np.isfinite(t.grad)):
            raise TrainingDivergenceError(f"non-finite gradient in {name}")
        decay = 0.0 if name.endswith("/b") else weight_decay
        t.value -= lr * (t.grad + decay * t.value)
        t.zero_grad()


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    return config.lr0 * config.decay_factor ** (epoch // config.decay_every)


def _predictions(f: np.ndarray) -> np.ndarray:
    # deterministic tie rule: f == 0.5 predicts class 0
    return (f > 0.5).astype(np.int64)


def binary_f1(pred: np.ndarray, y: np.ndarray) -> float:
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def train_epoch(
    dataset: PairDataset, params: ModelParams, config: TrainConfig, epoch: int
) -> Metrics:
    """One pass of mini-batch SGD; shuffle order derives from (seed, epoch).

    Parameters are rounded to float32 resolution at the end of the epoch so
    checkpoints capture the exact training state and resume is bit-exact.
    """
    if not len(dataset):
        raise ConfigurationError("training dataset is empty")
    lam = config.resolve_lam(params.hyper.l)
    lr = lr_schedule(epoch, config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, epoch]))
    order = rng.permutation(len(dataset))
    total_loss = 0.0
    preds = np.empty(len(dataset), dtype=np.int64)
    labels = np.empty(len(dataset), dtype=np.float64)
    done = 0
    for start in range(0, len(order), config.batch_size):
        idx = order[start : start + config.batch_size]
        raws, y = dataset.batch(idx)
        loss, f = pair_loss_and_grads(raws, y, params, lam)
        sgd_step(params, lr, config.weight_decay)
        total_loss += loss * len(idx)
        preds[done : done + len(idx)] = _predictions(f)
        labels[done : done + len(idx)] = y
        done += len(idx)
    for t in params.tensors.values():
        t.value = t.value.astype(np.float32).astype(np.float64)
    acc = float(np.mean(preds == labels))
    return Metrics(total_loss / len(dataset), acc, binary_f1(preds, labels))


def evaluate(dataset: PairDataset, params: ModelParams, config: TrainConfig) -> Metrics:
    """Pure evaluation: mean loss, accuracy (threshold 0.5), binary F1."""
    if not len(dataset):
        raise ConfigurationError("evaluation dataset is empty")
    lam = config.resolve_lam(params.hyper.l)
    raws, y = dataset.batch(range(len(dataset)))
    f, _ = forward_pairs(raws, params, lam)
    pred = _predictions(f)
    return Metrics(pairwise_loss(f, y), float(np.mean(pred == y)), binary_f1(pred, y))
