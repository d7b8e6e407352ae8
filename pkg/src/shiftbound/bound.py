"""Error-bound assembly from measured holdout quantities.

The bound on target error combines the labeled source holdout error, the
critic's holdout discrepancy, and a two-sample Hoeffding correction:

    bound = source_error + discrepancy + sqrt((n_S + 4 n_T) ln(1/delta) / (2 n_S n_T))

The log is natural. Stored bounds are never clamped; rendering marks
values above 1 as vacuous instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .critic import LinearCritic, empirical_discrepancy
from .data import EmbeddingDataset, LinearHead, argmax_rows, dataset_logits
from .reduction import PcaBasis, critic_inputs
from .validation import ValidationError, check_positive_int


@dataclass
class BoundReport:
    source_error: float
    discrepancy: float
    n_S: int
    n_T: int
    delta: float
    concentration: float
    bound_with_delta: float
    bound_without_delta: float

    def to_dict(self) -> dict:
        return {
            "source_error": float(self.source_error),
            "discrepancy": float(self.discrepancy),
            "n_S": int(self.n_S),
            "n_T": int(self.n_T),
            "delta": float(self.delta),
            "concentration": float(self.concentration),
            "bound_with_delta": float(self.bound_with_delta),
            "bound_without_delta": float(self.bound_without_delta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoundReport":
        return cls(**d)

    def render_line(self, label: str = "") -> str:
        tag = f"{label}: " if label else ""
        vacuous = "  [vacuous: bound > 1]" if self.bound_with_delta > 1.0 else ""
        return (
            f"{tag}bound={min(self.bound_with_delta, 1.0):.4f} "
            f"(source_error={self.source_error:.4f} + discrepancy={self.discrepancy:+.4f} "
            f"+ concentration={self.concentration:.4f}; raw={self.bound_with_delta:.4f}, "
            f"without delta={self.bound_without_delta:.4f}, "
            f"n_S={self.n_S}, n_T={self.n_T}, delta={self.delta}){vacuous}"
        )


def concentration_term(n_S: int, n_T: int, delta: float) -> float:
    """sqrt((n_S + 4 n_T) * ln(1/delta) / (2 n_S n_T)); natural log."""
    n_S = check_positive_int("n_S", n_S)
    n_T = check_positive_int("n_T", n_T)
    delta = float(delta)
    if not 0.0 < delta <= 1.0:
        raise ValidationError(f"concentration_term: delta must lie in (0, 1], got {delta}")
    return math.sqrt((n_S + 4.0 * n_T) * math.log(1.0 / delta) / (2.0 * n_S * n_T))


def assemble_bound(source_error: float, discrepancy: float, n_S: int, n_T: int,
                   delta: float) -> BoundReport:
    concentration = concentration_term(n_S, n_T, delta)
    return BoundReport(
        source_error=float(source_error),
        discrepancy=float(discrepancy),
        n_S=int(n_S),
        n_T=int(n_T),
        delta=delta,
        concentration=concentration,
        bound_with_delta=float(source_error + discrepancy + concentration),
        bound_without_delta=float(source_error + discrepancy),
    )


def dis2_bound(
    source_holdout: EmbeddingDataset,
    target_holdout: EmbeddingDataset,
    critic: LinearCritic,
    head: LinearHead | None = None,
    delta: float = 0.01,
    pca: PcaBasis | None = None,
) -> BoundReport:
    """Assemble the bound on held-out splits disjoint from critic training.

    The source holdout must carry labels (for the source error term); the
    target holdout needs none. `head` supplies the classifier's logits over
    features; when None, each split's stored logits are used. `pca` is
    required when the critic lives in the top-PC space.
    """
    if source_holdout.n == 0 or target_holdout.n == 0:
        raise ValidationError("dis2_bound: empty holdout")
    if source_holdout.labels is None:
        raise ValidationError("dis2_bound: source holdout must be labeled")

    hat_s = argmax_rows(dataset_logits(source_holdout, head))
    hat_t = argmax_rows(dataset_logits(target_holdout, head))
    X_s = critic_inputs(source_holdout, critic.input_space, head, pca)
    X_t = critic_inputs(target_holdout, critic.input_space, head, pca)

    source_error = float(np.mean(hat_s != source_holdout.labels))
    discrepancy = empirical_discrepancy(critic, hat_s, hat_t, X_s, X_t)
    return assemble_bound(source_error, discrepancy, source_holdout.n, target_holdout.n, delta)


def assumption_certificate(report: BoundReport, true_target_error_empirical: float) -> str:
    """'proven' when the measured target error is small enough that, with
    probability 1 - delta, the critic class contained a function realizing
    the true gap; 'inconclusive' otherwise."""
    correction = math.sqrt(
        2.0 * (report.n_S + report.n_T) * math.log(1.0 / report.delta)
        / (report.n_S * report.n_T)
    )
    threshold = report.source_error + report.discrepancy - correction
    return "proven" if true_target_error_empirical <= threshold else "inconclusive"
