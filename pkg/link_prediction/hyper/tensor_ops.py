"""
Dense numeric kernels with hand-derived gradients.

Every kernel is a pure function over numpy arrays. Forward functions work on a
single vector or on a batch (leading axis); each has a matching ``*_backward``
that takes the upstream gradient and returns gradients for every input slot.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .exceptions import ConfigError, ShapeError

PROBABILITY_CLAMP = 1e-12
BATCHNORM_EPSILON = 1e-5
BATCHNORM_MOMENTUM = 0.1


# =============================================================================
# Convolution
# =============================================================================

def _check_conv_shapes(signal: np.ndarray, filters: np.ndarray) -> Tuple[int, int]:
    if filters.ndim < 2:
        raise ShapeError(f'filters must be (l_f, n_f) or batched (B, l_f, n_f), got shape {filters.shape}')
    d_e = signal.shape[-1]
    l_f = filters.shape[-2]
    if l_f == 0:
        raise ShapeError('filter length must be at least 1')
    if l_f > d_e:
        raise ShapeError(f'filter length {l_f} exceeds signal length {d_e}')
    return d_e, l_f


def conv1d_valid(signal: np.ndarray, filters: np.ndarray) -> np.ndarray:
    """
    Valid 1D cross-correlation of a signal with a bank of filters.

    ``M[i, j] = sum_k signal[i + k] * filters[k, j]`` for ``i < d_e - l_f + 1``.
    No kernel flip, stride 1, no padding.

    Args:
        signal: ``(d_e,)`` or ``(B, d_e)``
        filters: ``(l_f, n_f)`` shared by all rows, or ``(B, l_f, n_f)`` one bank per row

    Returns:
        Feature map of shape ``(..., l_m, n_f)`` with ``l_m = d_e - l_f + 1``
    """
    _, l_f = _check_conv_shapes(signal, filters)
    windows = sliding_window_view(signal, l_f, axis=-1)  # (..., l_m, l_f)
    return windows @ filters


def conv1d_valid_backward(signal: np.ndarray, filters: np.ndarray,
                          grad_output: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients of ``conv1d_valid`` with respect to the signal and the filters.
    """
    d_e, l_f = _check_conv_shapes(signal, filters)
    l_m = d_e - l_f + 1
    windows = sliding_window_view(signal, l_f, axis=-1)

    grad_filters = np.swapaxes(windows, -1, -2) @ grad_output
    if grad_filters.ndim > filters.ndim:
        # shared filter bank: accumulate over the batch
        grad_filters = grad_filters.sum(axis=tuple(range(grad_filters.ndim - filters.ndim)))

    grad_windows = grad_output @ np.swapaxes(filters, -1, -2)  # (..., l_m, l_f)
    grad_signal = np.zeros(grad_windows.shape[:-2] + (d_e,), dtype=grad_windows.dtype)
    for k in range(l_f):
        grad_signal[..., k:k + l_m] += grad_windows[..., k]
    return grad_signal, grad_filters


# =============================================================================
# Linear map and activations
# =============================================================================

def linear(inputs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``output[j] = sum_i inputs[i] * weights[i, j]``, row-wise for a batch."""
    if weights.ndim != 2 or inputs.shape[-1] != weights.shape[0]:
        raise ShapeError(f'cannot apply {weights.shape} weights to input of shape {inputs.shape}')
    return inputs @ weights


def linear_backward(inputs: np.ndarray, weights: np.ndarray,
                    grad_output: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if grad_output.shape[-1] != weights.shape[1]:
        raise ShapeError(f'upstream gradient {grad_output.shape} does not match weights {weights.shape}')
    grad_inputs = grad_output @ weights.T
    if inputs.ndim == 1:
        grad_weights = np.outer(inputs, grad_output)
    else:
        grad_weights = inputs.T @ grad_output
    return grad_inputs, grad_weights


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_output: np.ndarray) -> np.ndarray:
    # subgradient 0 at x == 0
    return grad_output * (x > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def sigmoid_backward(output: np.ndarray, grad_output: np.ndarray) -> np.ndarray:
    return grad_output * output * (1 - output)


def identity_backward(x: np.ndarray, grad_output: np.ndarray) -> np.ndarray:
    return grad_output


# =============================================================================
# Dropout
# =============================================================================

def dropout(x: np.ndarray, rate: float, training: bool,
            rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inverted dropout.

    Args:
        x: Input array
        rate: Drop probability in [0, 1)
        training: Eval mode is the identity
        rng: Generator used to sample the mask (required when training with rate > 0)

    Returns:
        Tuple of (output, mask); the mask already carries the ``1 / (1 - rate)``
        scale so that ``output = x * mask`` and the backward pass is ``grad * mask``
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f'dropout rate must be in [0, 1), got {rate}')
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ConfigError('dropout in train mode needs a random generator')
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_output: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad_output * mask


# =============================================================================
# Batch normalization
# =============================================================================

@dataclass
class BatchNormState:
    """
    Affine parameters and running statistics of one batch-norm site.
    """
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BATCHNORM_EPSILON
    momentum: float = BATCHNORM_MOMENTUM

    @classmethod
    def create(cls, num_features: int, dtype=np.float64) -> 'BatchNormState':
        return cls(
            gamma=np.ones(num_features, dtype=dtype),
            beta=np.zeros(num_features, dtype=dtype),
            running_mean=np.zeros(num_features, dtype=dtype),
            running_var=np.ones(num_features, dtype=dtype),
        )

    @property
    def num_features(self) -> int:
        return self.gamma.shape[0]

    def copy(self) -> 'BatchNormState':
        return BatchNormState(self.gamma.copy(), self.beta.copy(), self.running_mean.copy(),
                              self.running_var.copy(), self.epsilon, self.momentum)


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    training: bool


def batchnorm(batch: np.ndarray, state: BatchNormState,
              training: bool) -> Tuple[np.ndarray, BatchNormCache]:
    """
    Normalize a ``(N, features)`` batch per feature.

    Train mode normalizes with the (biased) batch statistics and moves the
    running statistics towards the batch ones by ``momentum`` (the running
    variance uses the unbiased estimate). Eval mode uses the running statistics.

    Returns:
        Tuple of (output, cache for ``batchnorm_backward``)
    """
    if batch.ndim != 2 or batch.shape[1] != state.num_features:
        raise ShapeError(f'batch of shape {batch.shape} does not match {state.num_features} features')

    if training:
        n = batch.shape[0]
        if n < 2:
            raise ShapeError('batch normalization in train mode needs at least 2 rows')
        mean = batch.mean(axis=0)
        var = batch.var(axis=0)
        state.running_mean *= 1.0 - state.momentum
        state.running_mean += state.momentum * mean
        state.running_var *= 1.0 - state.momentum
        state.running_var += state.momentum * var * (n / (n - 1))
    else:
        mean = state.running_mean
        var = state.running_var

    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    x_hat = (batch - mean) * inv_std
    output = state.gamma * x_hat + state.beta
    return output, BatchNormCache(x_hat, inv_std, state.gamma, training)


def batchnorm_backward(grad_output: np.ndarray,
                       cache: BatchNormCache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns:
        Tuple of (grad_batch, grad_gamma, grad_beta)
    """
    grad_gamma = (grad_output * cache.x_hat).sum(axis=0)
    grad_beta = grad_output.sum(axis=0)
    grad_x_hat = grad_output * cache.gamma

    if not cache.training:
        return grad_x_hat * cache.inv_std, grad_gamma, grad_beta

    n = grad_output.shape[0]
    grad_batch = (cache.inv_std / n) * (
        n * grad_x_hat
        - grad_x_hat.sum(axis=0)
        - cache.x_hat * (grad_x_hat * cache.x_hat).sum(axis=0)
    )
    return grad_batch, grad_gamma, grad_beta


# =============================================================================
# Loss
# =============================================================================

def bce_loss(probabilities: np.ndarray, targets: np.ndarray) -> float:
    """
    Binary cross-entropy averaged over candidates (and over rows for a batch).
    """
    if probabilities.shape != targets.shape:
        raise ShapeError(f'predictions {probabilities.shape} and targets {targets.shape} differ in shape')
    p = np.clip(probabilities, PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    per_row = -np.mean(targets * np.log(p) + (1.0 - targets) * np.log1p(-p), axis=-1)
    return float(np.mean(per_row))


def bce_with_logits(scores: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Fused sigmoid + binary cross-entropy on raw scores.

    Returns:
        Tuple of (loss, gradient with respect to the scores); per row the
        gradient is ``(sigmoid(s) - y) / n_e``, and a batch is averaged over rows
    """
    if scores.shape != targets.shape:
        raise ShapeError(f'scores {scores.shape} and targets {targets.shape} differ in shape')
    per_row = np.mean(np.logaddexp(0.0, scores) - targets * scores, axis=-1)
    loss = float(np.mean(per_row))

    rows = scores.shape[0] if scores.ndim > 1 else 1
    grad = (sigmoid(scores) - targets) / (scores.shape[-1] * rows)
    return loss, grad
