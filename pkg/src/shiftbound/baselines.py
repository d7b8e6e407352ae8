"""Confidence- and transport-based target-error estimators.

Four estimators predict a classifier's target error from its logits:

  ac      1 - mean maximum softmax confidence on target.
  doc     source error plus the drop in mean confidence from source to target.
  atc     fraction of target scores below a threshold chosen so that the
          source validation split reproduces its own error rate.
  cot     half the optimal-transport cost between target softmax rows and
          the one-hot vectors of the source validation labels, under uniform
          marginals and the Euclidean ground metric.

All consume temperature-scaled logits by default; pass scaler=None for raw
logits. Scaling divides logits by a positive scalar, so predicted classes
never change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog, minimize_scalar
from sklearn.base import BaseEstimator, TransformerMixin

from .data import argmax_rows, log_softmax_rows, softmax_rows
from .validation import ValidationError, as_labels, as_matrix

METHODS = ("ac", "doc", "atc_ne", "atc_mc", "cot", "dis2", "dis2_no_delta")
ATC_SCORES = ("neg_entropy", "max_confidence")
COT_SOLVERS = ("exact", "subsampled_assignment")
COT_EXACT_CELL_LIMIT = 4_000_000
COT_SUBSAMPLE_SIZE = 1024


@dataclass
class ErrorEstimate:
    method: str
    predicted_error: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        meta = {}
        for key, value in self.metadata.items():
            if isinstance(value, float) and not math.isfinite(value):
                value = None  # strict-JSON stand-in for +-inf thresholds
            meta[key] = value
        return {
            "method": self.method,
            "predicted_error": float(self.predicted_error),
            "metadata": meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorEstimate":
        return cls(method=d["method"], predicted_error=d["predicted_error"],
                   metadata=dict(d.get("metadata", {})))


class TemperatureScaler(BaseEstimator, TransformerMixin):
    """Divides logits by a scalar temperature fit on labeled validation data.

    fit() minimizes the mean cross-entropy of logits/T over a bounded 1-D
    search on [lower, upper], evaluating the bracket endpoints exactly so a
    boundary optimum is returned as the literal bound.
    """

    def __init__(self, lower: float = 0.01, upper: float = 100.0):
        self.lower = lower
        self.upper = upper

    def fit(self, logits, labels):
        Z = as_matrix("TemperatureScaler.fit logits", logits)
        y = as_labels("TemperatureScaler.fit labels", labels, n_classes=Z.shape[1],
                      length=Z.shape[0])
        if np.unique(y).size < 2:
            raise ValidationError(
                "TemperatureScaler.fit: validation labels contain a single class"
            )
        rows = np.arange(Z.shape[0])

        def nll(T: float) -> float:
            return float(-log_softmax_rows(Z / T)[rows, y].mean())

        result = minimize_scalar(
            nll, bounds=(self.lower, self.upper), method="bounded",
            options={"xatol": 1e-8},
        )
        candidates = sorted({self.lower, self.upper, float(result.x)})
        self.temperature_ = min(candidates, key=lambda T: (nll(T), T))
        self.nll_ = nll(self.temperature_)
        return self

    @classmethod
    def identity(cls) -> "TemperatureScaler":
        scaler = cls()
        scaler.temperature_ = 1.0
        scaler.nll_ = float("nan")
        return scaler

    @property
    def T(self) -> float:
        return self.temperature_

    def transform(self, logits) -> np.ndarray:
        Z = as_matrix("TemperatureScaler.transform logits", logits)
        return Z / self.temperature_


def fit_temperature(val_logits, val_labels, lower: float = 0.01,
                    upper: float = 100.0) -> TemperatureScaler:
    return TemperatureScaler(lower=lower, upper=upper).fit(val_logits, val_labels)


def _scaled(logits, scaler: TemperatureScaler | None) -> np.ndarray:
    Z = as_matrix("logits", logits)
    return Z if scaler is None else scaler.transform(Z)


def max_confidence(logits) -> np.ndarray:
    return softmax_rows(logits).max(axis=1)


def neg_entropy(logits) -> np.ndarray:
    P = softmax_rows(logits)
    return (P * np.log(P)).sum(axis=1)


def ac_estimate(target_logits, scaler: TemperatureScaler | None = None) -> ErrorEstimate:
    """Predicted error = 1 - mean maximum softmax confidence on target."""
    Z = _scaled(target_logits, scaler)
    mean_conf = float(max_confidence(Z).mean())
    return ErrorEstimate(
        method="ac",
        predicted_error=1.0 - mean_conf,
        metadata={"mean_target_confidence": mean_conf},
    )


def doc_estimate(
    source_val_logits,
    source_val_labels,
    target_logits,
    scaler: TemperatureScaler | None = None,
) -> ErrorEstimate:
    """Source error plus the source-to-target drop in mean confidence.

    target = source gives back the source error; a target more confident
    than source can produce a negative prediction, stored unclamped.
    """
    Z_s = _scaled(source_val_logits, scaler)
    Z_t = _scaled(target_logits, scaler)
    y = as_labels("source_val_labels", source_val_labels, n_classes=Z_s.shape[1],
                  length=Z_s.shape[0])
    err_s = float(np.mean(argmax_rows(Z_s) != y))
    conf_s = float(max_confidence(Z_s).mean())
    conf_t = float(max_confidence(Z_t).mean())
    return ErrorEstimate(
        method="doc",
        predicted_error=err_s + (conf_s - conf_t),
        metadata={
            "source_error": err_s,
            "mean_source_confidence": conf_s,
            "mean_target_confidence": conf_t,
        },
    )


def atc_estimate(
    source_val_logits,
    source_val_labels,
    target_logits,
    score: str = "neg_entropy",
    scaler: TemperatureScaler | None = None,
) -> ErrorEstimate:
    """Threshold the per-sample score so source reproduces its own error.

    The threshold is the k-th smallest source score, k = number of
    misclassified source validation points (k = 0 uses -inf); the predicted
    error is the fraction of target scores strictly below it.
    """
    if score not in ATC_SCORES:
        raise ValidationError(f"atc_estimate: unknown score {score!r}")
    Z_s = _scaled(source_val_logits, scaler)
    Z_t = _scaled(target_logits, scaler)
    y = as_labels("source_val_labels", source_val_labels, n_classes=Z_s.shape[1],
                  length=Z_s.shape[0])
    score_fn = neg_entropy if score == "neg_entropy" else max_confidence
    scores_s = score_fn(Z_s)
    scores_t = score_fn(Z_t)
    k = int(np.sum(argmax_rows(Z_s) != y))
    threshold = -np.inf if k == 0 else float(np.sort(scores_s)[k - 1])
    predicted = float(np.mean(scores_t < threshold))
    return ErrorEstimate(
        method="atc_ne" if score == "neg_entropy" else "atc_mc",
        predicted_error=predicted,
        metadata={"threshold": threshold, "score": score, "source_misclassified": k},
    )


def _transport_cost_matrix(target_probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # D[i, j] = || s_i - e_{y_j} ||_2 via ||s||^2 - 2 s_{y_j} + 1
    sq = np.square(target_probs).sum(axis=1)
    d2 = sq[:, None] - 2.0 * target_probs[:, labels] + 1.0
    return np.sqrt(np.maximum(d2, 0.0))


def _exact_transport(cost: np.ndarray) -> float:
    """Optimal transport cost under uniform marginals; exact solver.

    Equal sizes admit a permutation optimum, solved by assignment. Unequal
    sizes are the transportation LP with marginals 1/m and 1/n (equivalently
    a min-cost flow after scaling by lcm(m, n)), solved to optimality.
    """
    m, n = cost.shape
    if m == n:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].sum() / n)
    row_idx = np.repeat(np.arange(m), n)
    col_idx = np.tile(np.arange(n), m)
    data = np.ones(m * n)
    A_rows = sparse.csr_matrix((data, (row_idx, np.arange(m * n))), shape=(m, m * n))
    A_cols = sparse.csr_matrix((data, (col_idx, np.arange(m * n))), shape=(n, m * n))
    A_eq = sparse.vstack([A_rows, A_cols])
    b_eq = np.concatenate([np.full(m, 1.0 / m), np.full(n, 1.0 / n)])
    result = linprog(cost.reshape(-1), A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                     method="highs")
    if not result.success:
        raise RuntimeError(f"cot_estimate: transport LP failed: {result.message}")
    return float(result.fun)


def cot_estimate(
    source_val_labels,
    target_logits,
    scaler: TemperatureScaler | None = None,
    solver: str = "exact",
    seed: int = 0,
) -> ErrorEstimate:
    """Half the transport cost between target softmax rows and source one-hots.

    The exact solver refuses instances with more than 4e6 cost-matrix cells;
    `subsampled_assignment` instead draws up to 1024 points per side (equal
    counts) and solves the assignment on the subsample.
    """
    if solver not in COT_SOLVERS:
        raise ValidationError(f"cot_estimate: unknown solver {solver!r}")
    Z_t = _scaled(target_logits, scaler)
    labels = as_labels("source_val_labels", source_val_labels, n_classes=Z_t.shape[1])
    if labels.size == 0:
        raise ValidationError("cot_estimate: empty source label set")
    probs = softmax_rows(Z_t)
    m, n = probs.shape[0], labels.shape[0]

    if solver == "exact":
        if m * n > COT_EXACT_CELL_LIMIT:
            raise ValidationError(
                f"cot_estimate: exact solver refused for {m}x{n} "
                f"(> {COT_EXACT_CELL_LIMIT} cells); use solver='subsampled_assignment'"
            )
        cost = _exact_transport(_transport_cost_matrix(probs, labels))
        used_m, used_n = m, n
    else:
        common = min(COT_SUBSAMPLE_SIZE, m, n)
        rng = np.random.default_rng([seed, m, n])
        sub_rows = probs[rng.choice(m, size=common, replace=False)]
        sub_labels = labels[rng.choice(n, size=common, replace=False)]
        D = _transport_cost_matrix(sub_rows, sub_labels)
        rows, cols = linear_sum_assignment(D)
        cost = float(D[rows, cols].sum() / common)
        used_m = used_n = common
    return ErrorEstimate(
        method="cot",
        predicted_error=0.5 * cost,
        metadata={
            "transport_cost": cost,
            "solver": solver,
            "n_target": used_m,
            "n_source_labels": used_n,
        },
    )
