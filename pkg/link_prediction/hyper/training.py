"""
1-N training: label smoothing, fused BCE, backpropagation through the HypER
pipeline, Adam with bias correction and exponential learning-rate decay.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, TextIO, Tuple

import numpy as np

from .data import Dataset, build_filter_index, group_tails
from .evaluation import evaluate
from .exceptions import ConfigError, DatasetStateError, ShapeError, TrainingDivergedError
from .model import ModelConfig, ModelParams, backward, forward, init_params
from .tensor_ops import bce_with_logits

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

Group = Tuple[int, int]


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization settings.

    ``eval_every`` runs a validation pass every that many epochs (0 disables
    validation); ``init_scale`` multiplies the Xavier bound of the initial
    tables; ``dtype`` is the storage precision of the parameters.
    """
    learning_rate: float = 0.001
    lr_decay: float = 0.995
    batch_size: int = 128
    epochs: int = 100
    label_smoothing: float = 0.1
    seed: int = 0
    eval_every: int = 1
    init_scale: float = 1.0
    dtype: str = 'float64'
    tie_policy: str = 'optimistic'
    eval_batch_size: int = 256

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f'learning_rate must be positive, got {self.learning_rate}')
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f'lr_decay must be in (0, 1], got {self.lr_decay}')
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError('batch sizes must be at least 1')
        if self.epochs < 0 or self.eval_every < 0:
            raise ConfigError('epochs and eval_every must be non-negative')
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f'label_smoothing must be in [0, 1), got {self.label_smoothing}')
        if self.dtype not in ('float64', 'float32'):
            raise ConfigError(f'dtype must be float64 or float32, got {self.dtype!r}')


@dataclass
class OptimizerState:
    """
    Adam moment accumulators, keyed like ``ModelParams.trainable()``.
    """
    first_moment: Dict[str, np.ndarray]
    second_moment: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON

    @classmethod
    def create(cls, params: Mapping[str, np.ndarray]) -> 'OptimizerState':
        return cls(
            first_moment={name: np.zeros_like(array) for name, array in params.items()},
            second_moment={name: np.zeros_like(array) for name, array in params.items()},
        )


@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    loss: float
    seconds: float
    valid_mrr: Optional[float] = None

    def log_line(self) -> str:
        line = f'{self.epoch}\t{self.learning_rate:.8g}\t{self.loss:.6f}'
        if self.valid_mrr is not None:
            line += f'\t{self.valid_mrr:.6f}'
        return line


@dataclass
class TrainReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_valid_mrr: Optional[float] = None

    @property
    def losses(self) -> List[float]:
        return [record.loss for record in self.epochs]

    @property
    def valid_mrrs(self) -> List[Optional[float]]:
        return [record.valid_mrr for record in self.epochs]


class Batch(NamedTuple):
    heads: np.ndarray
    relations: np.ndarray
    targets: np.ndarray


# =============================================================================
# Targets and loss
# =============================================================================

def smooth_labels(targets: np.ndarray, epsilon: float) -> np.ndarray:
    """y' = (1 - epsilon) * y + epsilon / n_e"""
    if not 0.0 <= epsilon < 1.0:
        raise ConfigError(f'label smoothing must be in [0, 1), got {epsilon}')
    return (1.0 - epsilon) * targets + epsilon / targets.shape[-1]


def build_targets(groups: Sequence[Group], dataset: Dataset,
                  index: Optional[Mapping[Group, Sequence[int]]] = None, dtype=np.float64) -> np.ndarray:
    """
    Multi-hot 1-N labels: row g has a one at every tail i with (h, r, i) in train.

    Args:
        groups: Distinct (head, relation) pairs
        dataset: Reciprocal-augmented dataset
        index: Precomputed ``group_tails(dataset.train)``

    Returns:
        Array of shape (len(groups), n_e)
    """
    if index is None:
        index = group_tails(dataset.train)
    targets = np.zeros((len(groups), dataset.n_entities), dtype=dtype)
    for row, group in enumerate(groups):
        targets[row, list(index.get(group, ()))] = 1.0
    return targets


def forward_backward(batch: Batch, params: ModelParams, config: ModelConfig,
                     rng: Optional[np.random.Generator] = None) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Train-mode loss over a batch and gradients of every trainable tensor.

    Returns:
        Tuple of (mean BCE over rows and candidates, gradients keyed like ``trainable()``)
    """
    if len(batch.heads) == 0:
        raise ShapeError('cannot train on an empty batch')
    scores, cache = forward(params, config, batch.heads, batch.relations, training=True, rng=rng)
    loss, grad_scores = bce_with_logits(scores, batch.targets)
    return loss, backward(params, config, cache, grad_scores)


# =============================================================================
# Optimizer and schedule
# =============================================================================

def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: OptimizerState, lr: float) -> OptimizerState:
    """
    One bias-corrected Adam update, applied in place to ``params`` and ``state``.
    """
    state.step += 1
    bias_correction1 = 1.0 - state.beta1 ** state.step
    bias_correction2 = 1.0 - state.beta2 ** state.step

    for name, param in params.items():
        grad = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        if grad.shape != param.shape or m.shape != param.shape:
            raise ShapeError(f'{name}: gradient {grad.shape} / moment {m.shape} do not match parameter {param.shape}')

        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)

        m_hat = m / bias_correction1
        v_hat = v / bias_correction2
        param -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state


def lr_at(epoch: int, config: TrainConfig) -> float:
    return config.learning_rate * config.lr_decay ** epoch


def make_batches(triples: np.ndarray, batch_size: int, rng: np.random.Generator,
                 min_rows: int = 1) -> List[List[Group]]:
    """
    Shuffle triples, cut them into batches and deduplicate (head, relation) pairs.

    A chunk that dedups to fewer than ``min_rows`` groups is carried into the
    next one (and a trailing one is merged into the last batch).
    """
    order = rng.permutation(len(triples))
    pairs = triples[:, :2]
    batches: List[List[Group]] = []
    pending: List[Group] = []
    for start in range(0, len(order), batch_size):
        pending.extend(map(tuple, pairs[order[start:start + batch_size]].tolist()))
        groups = list(dict.fromkeys(pending))
        if len(groups) >= min_rows:
            batches.append(groups)
            pending = []
    if pending:
        if batches:
            batches[-1] = list(dict.fromkeys(batches[-1] + pending))
        else:
            batches.append(list(dict.fromkeys(pending)))
    return batches


# =============================================================================
# Training loop
# =============================================================================

ImprovementCallback = Callable[[int, ModelParams, OptimizerState], None]


class Trainer:
    """
    Runs seeded 1-N training on a reciprocal-augmented dataset.

    Three independent generators are derived from the seed: parameter
    initialization, batch shuffling and dropout masks.
    """

    def __init__(self, dataset: Dataset, model_config: ModelConfig, train_config: TrainConfig,
                 log_stream: Optional[TextIO] = None, params: Optional[ModelParams] = None):
        if not dataset.reciprocal_added:
            raise DatasetStateError('training expects a dataset with reciprocal relations')
        if len(dataset.train) == 0:
            raise DatasetStateError('training split is empty')

        self.dataset = dataset
        self.model_config = model_config
        self.config = train_config
        self.log_stream = log_stream

        init_seed, shuffle_seed, dropout_seed = np.random.SeedSequence(train_config.seed).spawn(3)
        self.shuffle_rng = np.random.default_rng(shuffle_seed)
        self.dropout_rng = np.random.default_rng(dropout_seed)
        self.dtype = np.dtype(train_config.dtype)

        if params is None:
            params = init_params(model_config, dataset.n_entities, dataset.n_relations,
                                 np.random.default_rng(init_seed), dtype=self.dtype,
                                 scale=train_config.init_scale)
        params.check_shapes(model_config)
        self.params = params
        self.optimizer = OptimizerState.create(params.trainable())
        self.tail_index = group_tails(dataset.train)
        self.filter_index = build_filter_index(dataset)
        self.min_rows = 2 if model_config.batchnorm else 1
        if len(self.tail_index) < self.min_rows:
            raise ConfigError('batch normalization needs at least two distinct (head, relation) pairs')
        self.report = TrainReport()

    def run_epoch(self, epoch: int) -> float:
        """
        One pass over the shuffled training triples.

        Returns:
            Mean batch loss of the epoch
        """
        lr = lr_at(epoch, self.config)
        smoothing = self.config.label_smoothing
        losses = []
        for groups in make_batches(self.dataset.train, self.config.batch_size, self.shuffle_rng, self.min_rows):
            targets = build_targets(groups, self.dataset, self.tail_index, dtype=self.dtype)
            batch = Batch(
                heads=np.array([g[0] for g in groups], dtype=np.int64),
                relations=np.array([g[1] for g in groups], dtype=np.int64),
                targets=smooth_labels(targets, smoothing),
            )
            loss, grads = forward_backward(batch, self.params, self.model_config, self.dropout_rng)
            adam_step(self.params.trainable(), grads, self.optimizer, lr)
            losses.append(loss)
        return float(np.mean(losses))

    def validate(self) -> float:
        report = evaluate(self.params, self.dataset, 'valid', self.model_config, self.filter_index,
                          tie_policy=self.config.tie_policy, batch_size=self.config.eval_batch_size)
        return report.mrr

    def fit(self, on_improvement: Optional[ImprovementCallback] = None) -> TrainReport:
        """
        Train for the configured number of epochs.

        Args:
            on_improvement: Called with (epoch, params, optimizer state) whenever
                the validation MRR reaches a new best

        Returns:
            The TrainReport, one record per completed epoch
        """
        validate_split = self.config.eval_every > 0 and len(self.dataset.valid) > 0
        for epoch in range(self.config.epochs):
            started = time.perf_counter()
            loss = self.run_epoch(epoch)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            if not self.params.all_finite():
                raise TrainingDivergedError(epoch, 'parameters')

            valid_mrr = None
            if validate_split and (epoch + 1) % self.config.eval_every == 0:
                valid_mrr = self.validate()
                if self.report.best_valid_mrr is None or valid_mrr > self.report.best_valid_mrr:
                    self.report.best_valid_mrr = valid_mrr
                    self.report.best_epoch = epoch
                    if on_improvement is not None:
                        on_improvement(epoch, self.params, self.optimizer)

            record = EpochRecord(epoch, lr_at(epoch, self.config), loss,
                                 time.perf_counter() - started, valid_mrr)
            self.report.epochs.append(record)
            if self.log_stream is not None:
                self.log_stream.write(record.log_line() + '\n')
                self.log_stream.flush()
            logger.info('epoch %d lr %.6g loss %.6f%s (%.2fs)', epoch, record.learning_rate, loss,
                        '' if valid_mrr is None else f' valid MRR {valid_mrr:.4f}', record.seconds)
        return self.report


def train(dataset: Dataset, model_config: ModelConfig, train_config: TrainConfig,
          log_stream: Optional[TextIO] = None,
          on_improvement: Optional[ImprovementCallback] = None) -> Tuple[ModelParams, TrainReport]:
    trainer = Trainer(dataset, model_config, train_config, log_stream)
    report = trainer.fit(on_improvement)
    return trainer.params, report
