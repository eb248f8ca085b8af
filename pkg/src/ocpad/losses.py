"""Cross-entropy, pairwise-confusion and combined training losses.

Each loss returns ``(value, grad)`` with the gradient taken w.r.t. its
matrix argument.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError

PC_NORMALIZATIONS = ("pair_mean", "sum")


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    pc: float
    total: float
    lambda1: float
    lambda2: float


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits):
    return np.exp(_log_softmax(np.asarray(logits, dtype=np.float64)))


def cross_entropy(logits, labels):
    """Summed two-class cross-entropy; label 0 = bonafide, 1 = pseudo-negative.

    With a softmax over two logits the class-1 probability ``p_i`` gives
    ``-sum(y log p + (1 - y) log(1 - p))``, i.e. the usual categorical
    cross-entropy, which is what is computed here in log-sum-exp form.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim != 2 or z.shape[1] != 2:
        raise ShapeError(f"logits must be (n, 2), got {z.shape}")
    if y.shape != (z.shape[0],):
        raise ShapeError(f"labels must have shape ({z.shape[0]},), got {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ContractError("labels must be 0 (bonafide) or 1 (pseudo-negative)")
    if not np.all(np.isfinite(z)):
        raise ContractError("logits must be finite")
    y = y.astype(np.intp)
    logp = _log_softmax(z)
    rows = np.arange(z.shape[0])
    loss = -float(logp[rows, y].sum())
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    return loss, grad


def pairwise_confusion(features, normalization="pair_mean"):
    """Sum of squared distances over ordered pairs of distinct rows.

    ``normalization="pair_mean"`` divides by ``k(k-1)`` so the weight on this
    term does not scale with the batch size; ``"sum"`` returns the raw pair
    sum. Fewer than two rows give zero.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ShapeError(f"features must be 2-D, got {f.shape}")
    if normalization not in PC_NORMALIZATIONS:
        raise ContractError(f"unknown normalization {normalization!r}")
    k = f.shape[0]
    if k < 2:
        return 0.0, np.zeros_like(f)
    diffs = f[:, None, :] - f[None, :, :]
    raw = float(np.sum(diffs * diffs))
    grad = 4.0 * diffs.sum(axis=1)
    if normalization == "pair_mean":
        scale = 1.0 / (k * (k - 1))
        return raw * scale, grad * scale
    return raw, grad


def combined_loss(ce, pc, lambda1, lambda2) -> LossBreakdown:
    if lambda1 < 0 or lambda2 < 0:
        raise ContractError("loss weights must be non-negative")
    return LossBreakdown(
        ce=float(ce),
        pc=float(pc),
        total=float(lambda1 * pc + lambda2 * ce),
        lambda1=float(lambda1),
        lambda2=float(lambda2),
    )
