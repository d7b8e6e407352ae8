"""Representation reduction: principal-component bases, the critic input
spaces, and the cumulative-l1 validity score for agreement trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .data import EmbeddingDataset, LinearHead, dataset_logits
from .validation import ValidationError, as_matrix, as_vector


class PcaBasis(BaseEstimator, TransformerMixin):
    """Top principal components of mean-centered data.

    Components come from the eigendecomposition of the sample covariance,
    sorted by descending explained variance (zero-variance directions last),
    each row signed so its largest-magnitude entry is positive. Projection
    rotates without whitening.
    """

    def __init__(self, n_components: int | None = None):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = as_matrix("PcaBasis.fit X", X)
        n, d = X.shape
        if n < 2:
            raise ValidationError(f"PcaBasis.fit: need >= 2 samples, got {n}")
        p = d if self.n_components is None else int(self.n_components)
        if not 1 <= p <= d:
            raise ValidationError(f"PcaBasis.fit: n_components {p} outside [1, {d}]")
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        cov = centered.T @ centered / (n - 1)
        eigenvalues, eigenvectors = np.linalg.eigh(cov)
        order = np.argsort(eigenvalues)[::-1]
        variances = np.maximum(eigenvalues[order], 0.0)
        components = eigenvectors[:, order].T
        for row in components:
            lead = np.argmax(np.abs(row))
            if row[lead] < 0:
                row *= -1.0
        self.components_ = components[:p]
        self.explained_variance_ = variances[:p]
        return self

    @property
    def p(self) -> int:
        return self.components_.shape[0]

    def transform(self, X) -> np.ndarray:
        X = as_matrix("PcaBasis.transform X", X, cols=self.mean_.shape[0])
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z) -> np.ndarray:
        Z = as_matrix("PcaBasis.inverse_transform Z", Z, cols=self.p)
        return Z @ self.components_ + self.mean_

    def truncated(self, p: int) -> "PcaBasis":
        """Fitted copy keeping only the leading p components."""
        if not 1 <= p <= self.p:
            raise ValidationError(f"PcaBasis.truncated: p {p} outside [1, {self.p}]")
        basis = PcaBasis(n_components=p)
        basis.mean_ = self.mean_
        basis.components_ = self.components_[:p]
        basis.explained_variance_ = self.explained_variance_[:p]
        return basis


def fit_pca(X, n_components: int | None = None) -> PcaBasis:
    return PcaBasis(n_components=n_components).fit(X)


def critic_inputs(
    dataset: EmbeddingDataset,
    input_space: str,
    head: LinearHead | None = None,
    pca: PcaBasis | None = None,
) -> np.ndarray:
    """Materialize a critic input representation for one split."""
    if input_space == "features":
        return dataset.features
    if input_space == "logits":
        return dataset_logits(dataset, head)
    if input_space == "top_pcs":
        if pca is None:
            raise ValidationError("critic_inputs: top_pcs space requires a fitted basis")
        return pca.transform(dataset.features)
    raise ValidationError(f"critic_inputs: unknown input space {input_space!r}")


def cumulative_l1_ratio(trajectory) -> float:
    """Peak agreement divided by the cumulative variation up to the peak.

    With m the earliest index of the trajectory maximum, the score is
    a_m / (a_1 + sum_{i=2..m} |a_i - a_{i-1}|). It equals 1 exactly when the
    trajectory is nondecreasing up to its first maximum, and is insensitive
    to anything after the peak.
    """
    a = as_vector("trajectory", trajectory)
    if a.size == 0:
        raise ValidationError("cumulative_l1_ratio: empty trajectory")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValidationError("cumulative_l1_ratio: agreement values must lie in [0, 1]")
    m = int(np.argmax(a))
    denom = a[0] + np.abs(np.diff(a[: m + 1])).sum()
    if denom == 0.0:
        # all-zero prefix: vacuously monotone to its first maximum
        return 1.0
    return float(a[m] / denom)


DEFAULT_K_LIST = (1, 4, 16, 32, 64, 128)


@dataclass
class SweepRecord:
    """Bound and validity score for one critic input space.

    k is the divisor applied to the feature dimension (p = floor(d/k),
    minimum 1) for projected records, and None for the logits-space record.
    """

    k: int | None
    p: int
    input_space: str
    bound_report: "BoundReport"
    validity_score: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "p": self.p,
            "input_space": self.input_space,
            "bound_report": self.bound_report.to_dict(),
            "validity_score": float(self.validity_score),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepRecord":
        from .bound import BoundReport

        return cls(
            k=d["k"],
            p=d["p"],
            input_space=d["input_space"],
            bound_report=BoundReport.from_dict(d["bound_report"]),
            validity_score=d["validity_score"],
        )


@dataclass
class SweepResult:
    """Outcome of a projection sweep over principal-component counts.

    records holds one entry per k; logits_record is always computed and
    serves as the fallback prediction when no projected record clears the
    validity threshold. selected is None when no threshold was requested
    (report-only sweep).
    """

    records: list
    logits_record: SweepRecord
    score_threshold: float | None
    selected: SweepRecord | None

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "logits_record": self.logits_record.to_dict(),
            "score_threshold": self.score_threshold,
            "selected": None if self.selected is None else self.selected.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        return cls(
            records=[SweepRecord.from_dict(r) for r in d["records"]],
            logits_record=SweepRecord.from_dict(d["logits_record"]),
            score_threshold=d["score_threshold"],
            selected=(None if d["selected"] is None
                      else SweepRecord.from_dict(d["selected"])),
        )


def select_record(
    records: list,
    logits_record: SweepRecord,
    score_threshold: float,
) -> SweepRecord:
    """Minimum-bound record whose validity score clears the threshold.

    Falls back to the logits-space record when nothing qualifies. Ties keep
    the earliest record in sweep order.
    """
    eligible = [r for r in records if r.validity_score >= score_threshold]
    if not eligible:
        return logits_record
    return min(eligible, key=lambda r: r.bound_report.bound_with_delta)


def _validated_k_list(k_list) -> list:
    ks = list(k_list)
    if not ks:
        raise ValidationError("sweep_pcs: k_list is empty")
    for k in ks:
        if int(k) != k or k < 1:
            raise ValidationError(f"sweep_pcs: k values must be positive ints, got {k!r}")
    if len(set(ks)) != len(ks):
        raise ValidationError("sweep_pcs: k values must be distinct")
    return [int(k) for k in ks]


def sweep_pcs(
    source_train: EmbeddingDataset,
    target_train: EmbeddingDataset,
    source_holdout: EmbeddingDataset,
    target_holdout: EmbeddingDataset,
    head: LinearHead | None = None,
    k_list=DEFAULT_K_LIST,
    configs=None,
    score_threshold: float | None = None,
    delta: float = 0.01,
    seed: int = 0,
) -> SweepResult:
    """Run the critic search over a ladder of PCA projections.

    One basis is fit on the union of source and target training features;
    each k keeps the top floor(d/k) components, reruns the critic search on
    the projected features, and evaluates the resulting bound on the holdout
    splits. A logits-space record is always computed alongside.
    """
    # local imports: bound and critic both build on this module
    from .bound import dis2_bound
    from .critic import DisagreementCriticSearch
    from .data import argmax_rows

    ks = _validated_k_list(k_list)
    d = source_train.d
    n_classes = source_train.n_classes
    hat_s = argmax_rows(dataset_logits(source_train, head))
    hat_t = argmax_rows(dataset_logits(target_train, head))
    basis = fit_pca(np.vstack([source_train.features, target_train.features]))

    def run_search(X_s, X_t, input_space):
        search = DisagreementCriticSearch(
            configs=configs, random_state=seed, input_space=input_space,
            n_classes=n_classes,
        )
        search.fit(X_s, X_t, preds_source=hat_s, preds_target=hat_t)
        validity = cumulative_l1_ratio(search.best_result_.agreement_trajectory)
        return search.critic_, validity

    records = []
    for k in ks:
        sub = basis.truncated(max(1, d // k))
        critic, validity = run_search(
            sub.transform(source_train.features),
            sub.transform(target_train.features),
            "top_pcs",
        )
        report = dis2_bound(source_holdout, target_holdout, critic, head=head,
                            delta=delta, pca=sub)
        records.append(SweepRecord(k=k, p=sub.p, input_space="top_pcs",
                                   bound_report=report, validity_score=validity))

    critic, validity = run_search(
        dataset_logits(source_train, head), dataset_logits(target_train, head),
        "logits",
    )
    report = dis2_bound(source_holdout, target_holdout, critic, head=head,
                        delta=delta)
    logits_record = SweepRecord(k=None, p=n_classes, input_space="logits",
                                bound_report=report, validity_score=validity)

    selected = None
    if score_threshold is not None:
        selected = select_record(records, logits_record, score_threshold)
    return SweepResult(records=records, logits_record=logits_record,
                       score_threshold=score_threshold, selected=selected)
