"""Initialisation, RMSProp, early stopping and the (multi)task training loops."""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyDevSet, NonFiniteGradient
from .layers import Mode, Parameter, Tape
from .metrics import mae_macro, micro_f1

log = logging.getLogger(__name__)


def glorot_limit(fan_in: int, fan_out: int) -> float:
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fan_in and fan_out must be >= 1")
    return math.sqrt(6.0 / (fan_in + fan_out))


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """(fan_out, fan_in) matrix drawn uniformly from +-sqrt(6 / (fan_in + fan_out))."""
    limit = glorot_limit(fan_in, fan_out)
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


# fixed stream ids so adding a task or a head never shifts another stream
STREAM_SAMPLER = 1
STREAM_DROPOUT = 2
STREAM_SHUFFLE = 3
STREAM_INIT = 4


def rng_for(seed: int, *key) -> np.random.Generator:
    words = []
    for k in key:
        words.append(zlib.crc32(k.encode("utf-8")) if isinstance(k, str) else int(k))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(words)))


class RMSProp:
    def __init__(self, params: Sequence[Parameter], learning_rate: float = 1e-3,
                 rho: float = 0.9, epsilon: float = 1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.rho = rho
        self.epsilon = epsilon
        self.mean_square = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                bad = int(np.sum(~np.isfinite(p.grad)))
                raise NonFiniteGradient(p.name, f"{bad} non-finite entries")
        for p, s in zip(self.params, self.mean_square):
            g = p.grad
            s *= self.rho
            s += (1.0 - self.rho) * g * g
            p.value -= self.learning_rate * g / (np.sqrt(s) + self.epsilon)
            p.grad.fill(0.0)


def rmsprop_step(state: RMSProp, params=None) -> None:
    state.step()


class EarlyStopping:
    """Minimise a monitored metric; stop after ``patience`` epochs without improvement."""

    def __init__(self, patience: int = 5):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0
        self.snapshot: list[np.ndarray] | None = None
        self.stopped_epoch: int | None = None

    def update(self, epoch: int, metric: float, params: Sequence[Parameter]) -> bool:
        """Record ``metric`` for ``epoch``; return True when training should stop."""
        if metric < self.best:
            self.best = metric
            self.best_epoch = epoch
            self.wait = 0
            self.snapshot = [p.value.copy() for p in params]
            return False
        self.wait += 1
        if self.wait >= self.patience:
            self.stopped_epoch = epoch
            return True
        return False

    def restore(self, params: Sequence[Parameter]) -> None:
        if self.snapshot is None:
            return
        for p, v in zip(params, self.snapshot):
            p.value[...] = v


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_epochs: int = 50
    seed: int = 0
    p_M: float = 0.5
    learning_rate: float = 1e-3
    rho: float = 0.9
    epsilon: float = 1e-8
    patience: int = 5
    weighted_loss: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TaskData:
    """Encoded training data for one task: token-id arrays, optional extra features, labels."""

    ids: list
    labels: np.ndarray
    extras: np.ndarray | None = None
    class_weights: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, idx) -> "TaskData":
        return TaskData([self.ids[i] for i in idx], self.labels[idx],
                        None if self.extras is None else self.extras[idx], self.class_weights)


class BatchStream:
    """Endless shuffled batches over ``n`` examples, reshuffled after each pass."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if n == 0:
            raise ValueError("cannot stream an empty dataset")
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos >= self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += len(idx)
        return idx


@dataclass
class EpochRecord:
    epoch: int
    task_loss: list[float]
    dev_mae: float
    dev_micro_f1: float
    stopped: bool = False


@dataclass
class History:
    task_names: list[str]
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    task_counts: list[int] = field(default_factory=list)

    def to_tsv(self) -> str:
        header = ["epoch"] + [f"loss_{t}" for t in self.task_names] + ["dev_mae_macro", "dev_micro_f1", "stopped"]
        lines = ["\t".join(header)]
        for r in self.epochs:
            losses = ["nan" if math.isnan(v) else f"{v:.6f}" for v in r.task_loss]
            lines.append("\t".join([str(r.epoch), *losses, f"{r.dev_mae:.6f}", f"{r.dev_micro_f1:.6f}",
                                    str(int(r.stopped))]))
        return "\n".join(lines) + "\n"


Evaluator = Callable[[object, int], tuple]


def dev_evaluator(dev: TaskData, task: int = 0) -> Evaluator:
    """Score the network's ``task`` head on ``dev`` in eval mode: (MAE_M, micro-F1)."""
    if len(dev) == 0:
        raise EmptyDevSet("development set is empty")

    def evaluate(network, epoch):
        pred = network.predict_ids(dev.ids, dev.extras, task)
        k = network.config.tasks[task][1]
        return mae_macro(dev.labels, pred, k), micro_f1(dev.labels, pred, k)

    return evaluate


def _train(network, train_sets: Sequence[TaskData], dev: TaskData | None, config: TrainConfig,
           sampler, evaluator: Evaluator | None, on_batch) -> History:
    if evaluator is None:
        if dev is None:
            raise EmptyDevSet("no development set given")
        evaluator = dev_evaluator(dev)
    params = network.parameters()
    opt = RMSProp(params, config.learning_rate, config.rho, config.epsilon)
    opt.zero_grad()
    streams = [BatchStream(len(d), config.batch_size, rng_for(config.seed, STREAM_SHUFFLE, t))
               for t, d in enumerate(train_sets)]
    dropout_rng = rng_for(config.seed, STREAM_DROPOUT)
    stopper = EarlyStopping(config.patience)
    names = [name for name, _ in network.config.tasks][: len(train_sets)]
    history = History(names, task_counts=[0] * len(train_sets))
    n_batches = math.ceil(len(train_sets[0]) / config.batch_size)

    for epoch in range(1, config.max_epochs + 1):
        sums = [0.0] * len(train_sets)
        counts = [0] * len(train_sets)
        for _ in range(n_batches):
            task = 0 if sampler is None else sampler.sample()
            data = train_sets[task]
            idx = streams[task].next()
            weights = None
            if config.weighted_loss and data.class_weights is not None:
                weights = data.class_weights[data.labels[idx]]
            tape = Tape()
            batch = network.make_batch([data.ids[i] for i in idx],
                                       None if data.extras is None else data.extras[idx])
            _, loss = network.loss(tape, batch, data.labels[idx], task, Mode.TRAIN, dropout_rng, weights)
            tape.backward(loss)
            if on_batch is not None:
                on_batch(epoch, task, network)
            opt.step()
            sums[task] += float(loss.value[0, 0])
            counts[task] += 1
            history.task_counts[task] += 1
        dev_mae, dev_f1 = evaluator(network, epoch)
        stop = stopper.update(epoch, dev_mae, params)
        history.epochs.append(EpochRecord(
            epoch, [s / c if c else math.nan for s, c in zip(sums, counts)], dev_mae, dev_f1, stop))
        log.info("epoch %d dev MAE_M %.4f micro-F1 %.4f", epoch, dev_mae, dev_f1)
        if stop:
            break
    stopper.restore(params)
    history.best_epoch = stopper.best_epoch
    return history


def train_multitask(network, train_sets: Sequence[TaskData], dev: TaskData | None, config: TrainConfig,
                    evaluator: Evaluator | None = None, on_batch=None) -> History:
    """Train all heads, choosing each batch's task by a Bernoulli(p_M) draw.

    One epoch is ceil(|primary train| / batch_size) batch slots. The dev
    metric is the primary task's MAE_M; the best epoch's parameters are
    restored at the end.
    """
    from .multitask import TaskSampler

    if len(train_sets) < 2:
        raise ValueError("multitask training needs at least two task datasets")
    sampler = TaskSampler(config.p_M, rng_for(config.seed, STREAM_SAMPLER), n_tasks=len(train_sets))
    return _train(network, train_sets, dev, config, sampler, evaluator, on_batch)


def train_singletask(network, train: TaskData, dev: TaskData | None, config: TrainConfig,
                     evaluator: Evaluator | None = None, on_batch=None) -> History:
    return _train(network, [train], dev, config, None, evaluator, on_batch)
