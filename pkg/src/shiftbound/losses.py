"""Pointwise agreement/disagreement loss kernels with analytic gradients.

Four kernels over a logit vector h(x) and a class id y:

  logistic     cross-entropy against y, optionally normalized by log C.
  dis          (1/log 2) * log(1 + exp(h_y - mean of the other logits));
               convex in the logits and an upper bound on 1{argmax = y},
               so driving it down drives agreement with y down.
  dbat         log(1 + exp(h_y) / sum_{j != y} exp(h_j)).
  neg_xent     log softmax(h)_y, the signed agreement term some ensembling
               objectives add; concave and nonpositive.

All kernels are evaluated in double precision with log-sum-exp / softplus
stabilization and return exact analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import log_softmax_rows, softmax_rows
from .validation import ValidationError, as_labels, as_matrix, check_class_id

LN2 = float(np.log(2.0))


@dataclass
class LossEval:
    """A loss value and its gradient with respect to the logits."""

    value: float
    gradient: np.ndarray


def _softplus(z: np.ndarray) -> np.ndarray:
    # max(z,0) + log1p(exp(-|z|)): overflow-free for |z| up to ~1e4 and beyond
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_batch(logits, y):
    Z = as_matrix("logits", logits)
    if Z.shape[1] < 2:
        raise ValidationError(f"losses: need >= 2 classes, got {Z.shape[1]}")
    y = as_labels("y", y, n_classes=Z.shape[1], length=Z.shape[0])
    return Z, y


def logistic_batch(logits, y, normalize: bool = True):
    """Cross-entropy values and gradients, divided by log C when normalized."""
    Z, y = _check_batch(logits, y)
    n, C = Z.shape
    scale = float(np.log(C)) if normalize else 1.0
    logp = log_softmax_rows(Z)
    rows = np.arange(n)
    values = -logp[rows, y] / scale
    grads = softmax_rows(Z)
    grads[rows, y] -= 1.0
    grads /= scale
    return values, grads


def disagreement_batch(logits, y):
    """(1/log 2) * log(1 + exp(margin)), margin = h_y - mean of other logits."""
    Z, y = _check_batch(logits, y)
    n, C = Z.shape
    rows = np.arange(n)
    own = Z[rows, y]
    margin = own - (Z.sum(axis=1) - own) / (C - 1)
    values = _softplus(margin) / LN2
    coeff = _sigmoid(margin) / LN2
    grads = np.full((n, C), -1.0 / (C - 1))
    grads[rows, y] = 1.0
    grads *= coeff[:, None]
    return values, grads


def dbat_batch(logits, y):
    """log(1 + exp(h_y) / sum_{j != y} exp(h_j)) = lse(h) - lse(h without y)."""
    Z, y = _check_batch(logits, y)
    n, C = Z.shape
    rows = np.arange(n)
    masked = Z.copy()
    masked[rows, y] = -np.inf
    m = masked.max(axis=1)
    lse_rest = m + np.log(np.exp(masked - m[:, None]).sum(axis=1))
    m_all = Z.max(axis=1)
    lse_all = m_all + np.log(np.exp(Z - m_all[:, None]).sum(axis=1))
    values = lse_all - lse_rest
    q = np.exp(masked - lse_rest[:, None])  # softmax over the non-y entries, 0 at y
    grads = softmax_rows(Z) - q
    return values, grads


def neg_xent_batch(logits, y):
    """log softmax(h)_y and its gradient; signed, nonpositive."""
    Z, y = _check_batch(logits, y)
    rows = np.arange(Z.shape[0])
    logp = log_softmax_rows(Z)
    values = logp[rows, y]
    grads = -softmax_rows(Z)
    grads[rows, y] += 1.0
    return values, grads


def _pointwise(batch_fn, logits, y, **kw) -> LossEval:
    Z = as_matrix("logits", np.asarray(logits, dtype=np.float64).reshape(1, -1))
    y = check_class_id("y", y, Z.shape[1])
    values, grads = batch_fn(Z, np.asarray([y]), **kw)
    return LossEval(value=float(values[0]), gradient=grads[0])


def logistic_loss(logits, y, normalize: bool = True) -> LossEval:
    return _pointwise(logistic_batch, logits, y, normalize=normalize)


def disagreement_loss(logits, y) -> LossEval:
    return _pointwise(disagreement_batch, logits, y)


def dbat_loss(logits, y) -> LossEval:
    return _pointwise(dbat_batch, logits, y)


def neg_xent_loss(logits, y) -> LossEval:
    return _pointwise(neg_xent_batch, logits, y)


# batch kernels for the critic's target term, keyed by loss variant
TARGET_LOSS_BATCH = {
    "dis": disagreement_batch,
    "dbat": dbat_batch,
    "neg_xent": neg_xent_batch,
}
