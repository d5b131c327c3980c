"""Loss functions. Each returns (scalar loss, gradient wrt prediction)."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def sum_squared_error(pred: np.ndarray, target: np.ndarray):
    """Squared-norm loss.

    1-D inputs: plain sum of squared differences.  2-D (batch, n) inputs:
    mean over the batch of per-row sums, so the value is independent of
    batch size.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    if pred.ndim <= 1:
        return float((diff * diff).sum()), 2.0 * diff
    b = pred.shape[0]
    loss = float((diff * diff).sum() / b)
    return loss, (2.0 / b) * diff


def mean_squared_error(pred: np.ndarray, target: np.ndarray):
    """Per-element MSE (mean over every axis), the reporting convention."""
    if pred.shape != target.shape:
        raise ShapeError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float((diff * diff).mean())
    return loss, (2.0 / diff.size) * diff


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Fused softmax + cross-entropy over integer labels.

    logits: (B, C); labels: (B,) ints. Returns mean loss and dL/dlogits.
    """
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} incompatible with labels {labels.shape}")
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    b = logits.shape[0]
    idx = np.arange(b)
    # clip only inside the log; the gradient uses the exact probs
    loss = float(-np.log(np.maximum(probs[idx, labels], 1e-30)).mean())
    dlogits = probs.copy()
    dlogits[idx, labels] -= 1.0
    dlogits /= b
    return loss, dlogits.astype(logits.dtype, copy=False)
