from __future__ import annotations

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = float(np.log(2 * np.pi))


def mean_squared_error(prediction: np.ndarray, target: np.ndarray):
    """Mean over every element; returns (loss, d loss / d prediction)."""
    diff = prediction.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(prediction.dtype)


def log_sigmoid(logits: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -logits)


def sigmoid(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_sigmoid(logits))


def sigmoid_cross_entropy_terms(
    logits: np.ndarray, positive: bool, weights: np.ndarray | None = None
):
    """Weighted mean of ``-log sigmoid(l)`` (positive) or ``-log(1 - sigmoid(l))``.

    ``logits`` has shape ``(n, 1)`` or ``(n,)``. The mean divides by ``n``
    whatever the weights are. Returns (loss, d loss / d logits).
    """
    logits64 = logits.astype(np.float64)
    n = logits64.shape[0]
    w = np.ones_like(logits64) if weights is None else np.asarray(
        weights, dtype=np.float64
    ).reshape(logits64.shape)
    if positive:
        terms = -log_sigmoid(logits64)
        d_terms = -(1.0 - sigmoid(logits64))
    else:
        terms = -log_sigmoid(-logits64)
        d_terms = sigmoid(logits64)
    loss = float(np.sum(w * terms) / n)
    grad = w * d_terms / n
    return loss, grad.astype(logits.dtype)


def gaussian_negative_log_likelihood(
    mean: np.ndarray,
    log_std: np.ndarray,
    target: np.ndarray,
    weights: np.ndarray | None = None,
):
    """Weighted diagonal-Gaussian NLL, normalized by the weight sum.

    ``log_std`` is clamped to ``[LOG_STD_MIN, LOG_STD_MAX]``; the gradient
    through the clamp is zero outside that range. Returns
    (loss, d loss / d mean, d loss / d log_std).
    """
    mean64 = mean.astype(np.float64)
    raw_log_std = log_std.astype(np.float64)
    clamped = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
    n = mean64.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    total = float(np.sum(w))
    if total <= 0:
        total = 1.0
    w = w[:, None] / total

    inv_var = np.exp(-2.0 * clamped)
    diff = mean64 - target.astype(np.float64)
    per_dim = 0.5 * diff * diff * inv_var + clamped + 0.5 * _LOG_2PI
    loss = float(np.sum(w * per_dim))
    d_mean = w * diff * inv_var
    d_log_std = w * (1.0 - diff * diff * inv_var)
    d_log_std = d_log_std * (
        (raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX)
    )
    return loss, d_mean.astype(mean.dtype), d_log_std.astype(log_std.dtype)
