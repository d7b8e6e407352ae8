"""Per-shift evaluation records, summary metrics, and LOOCV calibration.

A record stores one shift's estimates for every method next to the true
target error measured on a labeled holdout. Metrics follow the usual
error-prediction conventions: MAE, coverage (predicted >= true), and the
mean shortfall conditional on underestimating the error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ..baselines import ErrorEstimate
from ..validation import ValidationError, check_fraction

SCALE_SEARCH_BOUND = 1e6
ADJUSTMENT_MODES = ("shift", "scale")


@dataclass
class EvaluationRecord:
    shift_id: str
    estimates: dict
    true_target_error: float
    n_source: int
    n_target: int

    def __post_init__(self):
        if not 0.0 <= self.true_target_error <= 1.0:
            raise ValidationError(
                f"EvaluationRecord: true_target_error {self.true_target_error} "
                "outside [0, 1]"
            )

    def to_dict(self) -> dict:
        return {
            "shift_id": self.shift_id,
            "estimates": {m: e.to_dict() for m, e in sorted(self.estimates.items())},
            "true_target_error": float(self.true_target_error),
            "n_source": int(self.n_source),
            "n_target": int(self.n_target),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRecord":
        return cls(
            shift_id=d["shift_id"],
            estimates={m: ErrorEstimate.from_dict(e)
                       for m, e in d["estimates"].items()},
            true_target_error=d["true_target_error"],
            n_source=d["n_source"],
            n_target=d["n_target"],
        )


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, no whitespace, strict floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_records_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(canonical_json(record.to_dict()) + "\n")


def read_records_jsonl(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(EvaluationRecord.from_dict(json.loads(line)))
    return records


def _pairs(records, method: str) -> np.ndarray:
    if not records:
        raise ValidationError("metrics: empty record list")
    pairs = []
    for record in records:
        if method not in record.estimates:
            raise ValidationError(
                f"metrics: record {record.shift_id!r} has no estimate for "
                f"method {method!r}"
            )
        pairs.append((record.estimates[method].predicted_error,
                      record.true_target_error))
    return np.asarray(pairs, dtype=np.float64)


def mae(records, method: str) -> float:
    pairs = _pairs(records, method)
    return float(np.abs(pairs[:, 0] - pairs[:, 1]).mean())


def coverage(records, method: str) -> float:
    pairs = _pairs(records, method)
    return float(np.mean(pairs[:, 0] >= pairs[:, 1]))


def conditional_overestimation(records, method: str) -> float:
    """Mean (true - predicted) over records that underestimate the error.

    The name follows the accuracy view: predicting too little error means
    overestimating accuracy. Returns 0 when no record underestimates.
    """
    pairs = _pairs(records, method)
    under = pairs[:, 0] < pairs[:, 1]
    if not under.any():
        return 0.0
    return float((pairs[under, 1] - pairs[under, 0]).mean())


@dataclass
class MetricsSummary:
    n_records: int
    methods: dict

    @classmethod
    def from_records(cls, records, methods=None) -> "MetricsSummary":
        if methods is None:
            sets = [set(r.estimates) for r in records]
            methods = sorted(set.intersection(*sets)) if sets else []
        table = {
            m: {
                "mae": mae(records, m),
                "coverage": coverage(records, m),
                "conditional_overestimation": conditional_overestimation(records, m),
            }
            for m in methods
        }
        return cls(n_records=len(records), methods=table)

    def to_dict(self) -> dict:
        return {"n_records": self.n_records, "methods": self.methods}


# ------------------------------------------------------------------ LOOCV


@dataclass
class AdjustmentParams:
    """Post-hoc correction making a method conservative at level alpha.

    mode=shift adds value to every prediction; mode=scale multiplies by
    value (>= 1) and clamps to [0, 1]. saturated marks a scale fit that hit
    the search bound without reaching the target coverage.
    """

    mode: str
    value: float
    target_coverage: float
    trained_on: tuple = ()
    saturated: bool = False

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "value": float(self.value),
            "target_coverage": float(self.target_coverage),
            "trained_on": list(self.trained_on),
            "saturated": self.saturated,
        }


def apply_adjustment(params: AdjustmentParams, predicted_error: float) -> float:
    if params.mode == "shift":
        return predicted_error + params.value
    return float(np.clip(params.value * predicted_error, 0.0, 1.0))


def _covered(pairs: np.ndarray, mode: str, value: float) -> int:
    pred, true = pairs[:, 0], pairs[:, 1]
    if mode == "shift":
        adjusted = pred + value
    else:
        adjusted = np.clip(value * pred, 0.0, 1.0)
    return int(np.sum(adjusted >= true))


def fit_adjustment(records, method: str, alpha: float, mode: str,
                   trained_on=()) -> AdjustmentParams:
    """Minimal shift (or minimal scale >= 1) reaching coverage alpha.

    Closed form: with k = ceil(alpha * n), the parameter is the k-th
    smallest per-record deficit (shift) or true/predicted ratio (scale),
    floored at 0 resp. 1 so an already-covering method is left alone.
    The order statistic is then advanced by ulps if rounding left its own
    record short (pred + fl(true - pred) can land one ulp below true), so
    the training-group coverage guarantee holds in float arithmetic too.
    """
    if mode not in ADJUSTMENT_MODES:
        raise ValidationError(f"fit_adjustment: unknown mode {mode!r}")
    check_fraction("alpha", alpha)
    pairs = _pairs(records, method)
    n = pairs.shape[0]
    k = max(1, math.ceil(alpha * n))
    saturated = False
    if mode == "shift":
        deficits = np.sort(pairs[:, 1] - pairs[:, 0])
        value = max(0.0, float(deficits[k - 1]))
    else:
        pred, true = pairs[:, 0], pairs[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(pred > 0, true / np.maximum(pred, 1e-300), np.inf)
        ratios = np.where((pred <= 0) & (true <= 0), 1.0, ratios)
        value = max(1.0, float(np.sort(ratios)[k - 1]))
        if value > SCALE_SEARCH_BOUND:
            value = SCALE_SEARCH_BOUND
            saturated = True
    if not saturated:
        for _ in range(64):
            if _covered(pairs, mode, value) >= k:
                break
            value = float(np.nextafter(value, np.inf))
        else:
            raise ValidationError(
                "fit_adjustment: could not restore coverage within 64 ulps")
    return AdjustmentParams(mode=mode, value=value, target_coverage=alpha,
                            trained_on=tuple(trained_on), saturated=saturated)


@dataclass
class LoocvFold:
    held_out: str
    params: AdjustmentParams
    adjusted_predictions: list
    coverage: float

    def to_dict(self) -> dict:
        return {
            "held_out": self.held_out,
            "params": self.params.to_dict(),
            "adjusted_predictions": [float(v) for v in self.adjusted_predictions],
            "coverage": float(self.coverage),
        }


def loocv_adjust(groups: dict, method: str, alpha: float = 0.95,
                 mode: str = "shift") -> list:
    """Leave-one-group-out calibration of one method's predictions.

    For each held-out group the parameter is fit on all other groups and
    applied to the held-out records; the fold reports the held-out coverage
    without asserting it reaches alpha.
    """
    if len(groups) < 2:
        raise ValidationError("loocv_adjust: need at least 2 groups")
    folds = []
    for held in sorted(groups):
        train = [r for g in sorted(groups) if g != held for r in groups[g]]
        params = fit_adjustment(train, method, alpha, mode,
                                trained_on=tuple(g for g in sorted(groups)
                                                 if g != held))
        adjusted = [apply_adjustment(params, r.estimates[method].predicted_error)
                    for r in groups[held]]
        truths = [r.true_target_error for r in groups[held]]
        cov = float(np.mean([a >= t for a, t in zip(adjusted, truths)]))
        folds.append(LoocvFold(held_out=held, params=params,
                               adjusted_predictions=adjusted, coverage=cov))
    return folds
