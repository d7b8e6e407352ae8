"""End-to-end evaluation of error predictors on a suite of shifts.

One shift = a labeled source dataset and a labeled target dataset sharing a
feature space. The harness splits both into train/val, fits a linear probe
(unless a head or stored logits are supplied), calibrates a temperature on
source validation data, runs every requested estimator, and measures the
true target error on the labeled target validation split.
"""

from __future__ import annotations

import hashlib

import numpy as np
from sklearn.linear_model import LogisticRegression

from ..baselines import (
    COT_EXACT_CELL_LIMIT,
    ErrorEstimate,
    ac_estimate,
    atc_estimate,
    cot_estimate,
    doc_estimate,
    fit_temperature,
)
from ..bound import assumption_certificate, dis2_bound
from ..critic import DisagreementCriticSearch
from ..data import (
    EmbeddingDataset,
    LinearHead,
    argmax_rows,
    dataset_logits,
    split_holdout,
)
from ..reduction import fit_pca
from ..validation import ValidationError, check_positive_int
from .metrics import EvaluationRecord, MetricsSummary
from .synth import SynthConfig, generate_synthetic_shift

DEFAULT_METHODS = ("ac", "doc", "atc_ne", "cot", "dis2", "dis2_no_delta")


def derive_seed(suite_seed: int, name: str) -> int:
    """Stable per-component seed: sha256 of "<seed>:<name>".

    Python's hash() is salted per process, so it cannot anchor
    reproducible suites.
    """
    digest = hashlib.sha256(f"{suite_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def fit_linear_probe(dataset: EmbeddingDataset, max_iter: int = 1000) -> LinearHead:
    """L-BFGS logistic regression on frozen features, as a C x d head.

    The binary solver returns one weight row; it is lifted to two rows
    (zeros for class 0) so every head exposes one logit per class.
    """
    if dataset.labels is None:
        raise ValidationError("fit_linear_probe: dataset has no labels")
    if np.unique(dataset.labels).size < 2:
        raise ValidationError("fit_linear_probe: need at least 2 classes present")
    model = LogisticRegression(max_iter=max_iter)
    model.fit(dataset.features, dataset.labels)
    classes = model.classes_.astype(int)
    if model.coef_.shape[0] == 1:
        rows_w = np.vstack([np.zeros_like(model.coef_[0]), model.coef_[0]])
        rows_b = np.array([0.0, model.intercept_[0]])
    else:
        rows_w, rows_b = model.coef_, model.intercept_
    if np.array_equal(classes, np.arange(dataset.n_classes)):
        return LinearHead(weights=rows_w, bias=rows_b)
    # lift to the declared class count; absent classes get a large negative bias
    weights = np.zeros((dataset.n_classes, dataset.d))
    bias = np.full(dataset.n_classes, -1e6)
    for i, c in enumerate(classes):
        weights[c] = rows_w[i]
        bias[c] = rows_b[i]
    return LinearHead(weights=weights, bias=bias)


def evaluate_shift(
    shift_id: str,
    source: EmbeddingDataset,
    target: EmbeddingDataset,
    head: LinearHead | None = None,
    methods=DEFAULT_METHODS,
    delta: float = 0.01,
    seed: int = 0,
    holdout_fraction: float = 0.2,
    input_space: str = "logits",
    configs=None,
    pc_k: int = 16,
    calibrate: bool = True,
) -> EvaluationRecord:
    """Run every requested estimator on one shift and measure the truth.

    Critics train on the train splits; the bound, the baselines, and the
    true error all use the validation splits. Unknown method ids raise.
    """
    unknown = set(methods) - {"ac", "doc", "atc_ne", "atc_mc", "cot",
                              "dis2", "dis2_no_delta"}
    if unknown:
        raise ValidationError(f"evaluate_shift: unknown methods {sorted(unknown)}")
    if source.labels is None or target.labels is None:
        raise ValidationError("evaluate_shift: both datasets need labels "
                              "(target labels measure the true error)")

    s_train, s_val = split_holdout(source, holdout_fraction,
                                   derive_seed(seed, "source_split"))
    t_train, t_val = split_holdout(target, holdout_fraction,
                                   derive_seed(seed, "target_split"))
    if head is None and source.logits is None:
        head = fit_linear_probe(s_train)

    z_s_val = dataset_logits(s_val, head)
    z_t_val = dataset_logits(t_val, head)
    scaler = fit_temperature(z_s_val, s_val.labels) if calibrate else None

    estimates = {}
    if "ac" in methods:
        estimates["ac"] = ac_estimate(z_t_val, scaler=scaler)
    if "doc" in methods:
        estimates["doc"] = doc_estimate(z_s_val, s_val.labels, z_t_val,
                                        scaler=scaler)
    if "atc_ne" in methods:
        estimates["atc_ne"] = atc_estimate(z_s_val, s_val.labels, z_t_val,
                                           score="neg_entropy", scaler=scaler)
    if "atc_mc" in methods:
        estimates["atc_mc"] = atc_estimate(z_s_val, s_val.labels, z_t_val,
                                           score="max_confidence", scaler=scaler)
    if "cot" in methods:
        solver = ("exact" if z_t_val.shape[0] * s_val.n <= COT_EXACT_CELL_LIMIT
                  else "subsampled_assignment")
        estimates["cot"] = cot_estimate(s_val.labels, z_t_val, scaler=scaler,
                                        solver=solver,
                                        seed=derive_seed(seed, "cot"))

    true_error = float(np.mean(argmax_rows(z_t_val) != t_val.labels))

    if "dis2" in methods or "dis2_no_delta" in methods:
        pca = None
        if input_space == "top_pcs":
            check_positive_int("pc_k", pc_k)
            full = fit_pca(np.vstack([s_train.features, t_train.features]))
            pca = full.truncated(max(1, source.d // pc_k))
            X_s, X_t = pca.transform(s_train.features), pca.transform(t_train.features)
        elif input_space == "features":
            X_s, X_t = s_train.features, t_train.features
        elif input_space == "logits":
            X_s = dataset_logits(s_train, head)
            X_t = dataset_logits(t_train, head)
        else:
            raise ValidationError(f"evaluate_shift: unknown input space {input_space!r}")
        search = DisagreementCriticSearch(
            configs=configs, random_state=derive_seed(seed, "critic"),
            input_space=input_space, n_classes=source.n_classes,
        )
        search.fit(X_s, X_t,
                   preds_source=argmax_rows(dataset_logits(s_train, head)),
                   preds_target=argmax_rows(dataset_logits(t_train, head)))
        report = dis2_bound(s_val, t_val, search.critic_, head=head,
                            delta=delta, pca=pca)
        meta = report.to_dict()
        meta["input_space"] = input_space
        meta["certificate"] = assumption_certificate(report, true_error)
        if "dis2" in methods:
            estimates["dis2"] = ErrorEstimate("dis2", report.bound_with_delta,
                                              dict(meta))
        if "dis2_no_delta" in methods:
            estimates["dis2_no_delta"] = ErrorEstimate(
                "dis2_no_delta", report.bound_without_delta, dict(meta))

    return EvaluationRecord(
        shift_id=shift_id,
        estimates=estimates,
        true_target_error=true_error,
        n_source=source.n,
        n_target=target.n,
    )


def make_synth_suite(
    n_shifts: int,
    seed: int = 0,
    n_per_side: int = 2000,
    dim: int = 16,
) -> list:
    """Deterministic mix of mean-shift, rotation, and reweighting shifts.

    Shift i cycles through four kinds and draws its magnitudes from a
    seeded stream, giving a spread of true target errors.
    """
    check_positive_int("n_shifts", n_shifts)
    shifts = []
    class_cycle = (2, 3, 4, 6)
    for i in range(n_shifts):
        shift_seed = derive_seed(seed, f"shift-{i}")
        rng = np.random.default_rng(shift_seed)
        kind = i % 4
        n_classes = class_cycle[i % len(class_cycle)]
        config = SynthConfig(
            n_classes=n_classes,
            dim=dim,
            n_source=n_per_side,
            n_target=n_per_side,
            separation=float(rng.uniform(2.0, 4.0)),
            shift_scale=float(rng.uniform(0.5, 3.0)) if kind in (0, 3) else 0.0,
            rotation_angle=float(rng.uniform(0.1, 1.0)) if kind in (1, 3) else 0.0,
            target_weights=(rng.dirichlet(np.full(n_classes, 2.0))
                            if kind == 2 else None),
            noise_scale=1.0,
            seed=shift_seed,
        )
        source, target = generate_synthetic_shift(config)
        shifts.append((f"synth-{i:03d}", source, target))
    return shifts


def run_benchmark(
    shifts,
    methods=DEFAULT_METHODS,
    delta: float = 0.01,
    seed: int = 0,
    **shift_kwargs,
):
    """Evaluate every (shift_id, source, target) triple; isolate failures.

    Returns (records, summary, failures); failures hold {"shift_id",
    "error"} without aborting the rest of the suite. Records come back
    sorted by shift id regardless of input order.
    """
    records, failures = [], []
    for shift_id, source, target in shifts:
        try:
            records.append(evaluate_shift(
                shift_id, source, target, methods=methods, delta=delta,
                seed=derive_seed(seed, shift_id), **shift_kwargs,
            ))
        except Exception as exc:  # noqa: BLE001 - per-shift isolation
            failures.append({"shift_id": shift_id, "error": f"{type(exc).__name__}: {exc}"})
    records.sort(key=lambda r: r.shift_id)
    summary = MetricsSummary.from_records(records, methods=sorted(methods)) \
        if records else MetricsSummary(n_records=0, methods={})
    return records, summary, failures
