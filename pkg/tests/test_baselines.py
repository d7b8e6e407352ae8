import itertools
import json
import math

import numpy as np
import pytest

from shiftbound.baselines import (
    ErrorEstimate,
    TemperatureScaler,
    ac_estimate,
    atc_estimate,
    cot_estimate,
    doc_estimate,
    fit_temperature,
    max_confidence,
    neg_entropy,
)
from shiftbound.data import argmax_rows, log_softmax_rows
from shiftbound.validation import ValidationError


def binary_logits(confidences):
    """Rows whose class-0 softmax equals each confidence (all > 0.5)."""
    a = [math.log(p / (1.0 - p)) for p in confidences]
    return np.column_stack([a, np.zeros(len(a))])


# ---------------------------------------------------------------- scores


def test_score_helpers_uniform_rows():
    Z = np.zeros((3, 4))
    assert np.allclose(max_confidence(Z), 0.25, atol=1e-12)
    assert np.allclose(neg_entropy(Z), -math.log(4.0), atol=1e-12)


def test_neg_entropy_monotone_in_binary_confidence():
    Z = binary_logits([0.55, 0.7, 0.9, 0.99])
    ne = neg_entropy(Z)
    assert np.all(np.diff(ne) > 0)


# ---------------------------------------------------------------- AC / DoC


def test_ac_hand_case():
    Z = binary_logits([0.9, 0.7, 0.8])
    est = ac_estimate(Z)
    assert est.method == "ac"
    assert est.predicted_error == pytest.approx(0.2, abs=1e-9)


def test_doc_hand_case():
    Z_s = binary_logits([0.85] * 10)
    y = np.zeros(10, dtype=int)
    y[0] = 1  # one misclassified source point
    Z_t = binary_logits([0.75] * 4)
    est = doc_estimate(Z_s, y, Z_t)
    assert est.method == "doc"
    assert est.predicted_error == pytest.approx(0.2, abs=1e-9)
    assert est.metadata["source_error"] == pytest.approx(0.1)


def test_doc_on_source_itself_returns_source_error():
    rng = np.random.default_rng(3)
    Z = rng.normal(size=(40, 5))
    y = rng.integers(0, 5, size=40)
    est = doc_estimate(Z, y, Z)
    err = float(np.mean(argmax_rows(Z) != y))
    assert est.predicted_error == pytest.approx(err, abs=1e-12)


def test_doc_can_go_negative_and_is_stored_unclamped():
    Z_s = binary_logits([0.6] * 5)
    Z_t = binary_logits([0.99] * 5)
    est = doc_estimate(Z_s, np.zeros(5, dtype=int), Z_t)
    assert est.predicted_error < 0


# ---------------------------------------------------------------- ATC


def test_atc_threshold_is_kth_smallest_source_score():
    Z_s = binary_logits([0.6, 0.7, 0.8, 0.9, 0.95])
    y = np.array([0, 0, 0, 1, 1])  # two confident rows misclassified -> k = 2
    Z_t = binary_logits([0.65, 0.72, 0.501, 0.9])
    est = atc_estimate(Z_s, y, Z_t, score="max_confidence")
    assert est.method == "atc_mc"
    assert est.metadata["source_misclassified"] == 2
    assert est.metadata["threshold"] == pytest.approx(0.7, abs=1e-9)
    assert est.predicted_error == pytest.approx(0.5, abs=1e-12)


def test_atc_invariant_under_monotone_score_change_in_binary():
    # neg-entropy is a monotone function of confidence for binary rows,
    # so both scores threshold the same set of points.
    Z_s = binary_logits([0.6, 0.7, 0.8, 0.9, 0.95])
    y = np.array([0, 0, 0, 1, 1])
    Z_t = binary_logits([0.65, 0.72, 0.501, 0.9])
    mc = atc_estimate(Z_s, y, Z_t, score="max_confidence")
    ne = atc_estimate(Z_s, y, Z_t, score="neg_entropy")
    assert ne.method == "atc_ne"
    assert ne.predicted_error == pytest.approx(mc.predicted_error, abs=1e-12)


def test_atc_zero_source_errors_predicts_zero():
    Z_s = binary_logits([0.9, 0.8, 0.7])
    y = np.zeros(3, dtype=int)
    Z_t = binary_logits([0.51, 0.52])
    est = atc_estimate(Z_s, y, Z_t)
    assert est.predicted_error == 0.0
    assert est.metadata["threshold"] == -np.inf


def test_atc_all_source_wrong_predicts_everything_below_max():
    Z_s = binary_logits([0.6, 0.7, 0.8])
    y = np.ones(3, dtype=int)  # k = 3 -> threshold = largest source score
    Z_t = binary_logits([0.65, 0.75, 0.85])
    est = atc_estimate(Z_s, y, Z_t, score="max_confidence")
    assert est.metadata["threshold"] == pytest.approx(0.8, abs=1e-9)
    assert est.predicted_error == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_atc_prediction_monotone_in_threshold():
    # raising the threshold can only sweep more target points below it
    rng = np.random.default_rng(17)
    scores_t = neg_entropy(rng.normal(size=(200, 3)))
    fractions = [float(np.mean(scores_t < t)) for t in np.linspace(-1.2, 0.0, 25)]
    assert all(a <= b for a, b in zip(fractions, fractions[1:]))


def test_atc_rejects_unknown_score():
    Z = binary_logits([0.9, 0.6])
    with pytest.raises(ValidationError):
        atc_estimate(Z, np.zeros(2, dtype=int), Z, score="margin")


# ---------------------------------------------------------------- COT


def test_cot_single_pair_oracle():
    # softmax((0,0)) = (1/2, 1/2); distance to e_0 is sqrt(1/2).
    est = cot_estimate(np.array([0]), np.zeros((1, 2)))
    assert est.method == "cot"
    assert est.predicted_error == pytest.approx(0.5 * math.sqrt(0.5), abs=1e-12)
    assert est.metadata["transport_cost"] == pytest.approx(math.sqrt(0.5), abs=1e-12)


def test_cot_zero_when_predictions_match_label_multiset():
    Z_t = 1e4 * np.eye(4)[np.array([2, 0, 3, 1])]
    labels = np.array([0, 1, 2, 3])
    est = cot_estimate(labels, Z_t)
    assert est.predicted_error == pytest.approx(0.0, abs=1e-6)


def test_cot_equal_sizes_matches_permutation_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(3):
        Z_t = rng.normal(size=(5, 3))
        labels = rng.integers(0, 3, size=5)
        probs = np.exp(log_softmax_rows(Z_t))
        onehot = np.eye(3)[labels]
        D = np.linalg.norm(probs[:, None, :] - onehot[None, :, :], axis=2)
        best = min(
            D[np.arange(5), list(perm)].mean()
            for perm in itertools.permutations(range(5))
        )
        est = cot_estimate(labels, Z_t)
        assert est.metadata["transport_cost"] == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("m,n", [(2, 3), (3, 2), (4, 6)])
def test_cot_unequal_sizes_matches_replicated_assignment(m, n):
    # Replicating each point lcm/m (resp. lcm/n) times reduces the uniform
    # transport problem to an equal-size assignment; the LP must match it.
    rng = np.random.default_rng(100 + 10 * m + n)
    Z_t = rng.normal(size=(m, 3))
    labels = rng.integers(0, 3, size=n)
    probs = np.exp(log_softmax_rows(Z_t))
    onehot = np.eye(3)[labels]
    D = np.linalg.norm(probs[:, None, :] - onehot[None, :, :], axis=2)
    lcm = math.lcm(m, n)
    rows_rep = np.repeat(np.arange(m), lcm // m)
    cols_rep = np.repeat(np.arange(n), lcm // n)
    D_rep = D[np.ix_(rows_rep, cols_rep)]
    from scipy.optimize import linear_sum_assignment

    r, c = linear_sum_assignment(D_rep)
    oracle = D_rep[r, c].sum() / lcm
    est = cot_estimate(labels, Z_t)
    assert est.metadata["transport_cost"] == pytest.approx(oracle, abs=1e-9)


def test_cot_exact_refuses_oversized_instances():
    Z_t = np.zeros((2001, 2))
    labels = np.zeros(2000, dtype=int)
    with pytest.raises(ValidationError, match="refused"):
        cot_estimate(labels, Z_t, solver="exact")


def test_cot_subsampled_equals_exact_when_data_fits():
    rng = np.random.default_rng(5)
    Z_t = rng.normal(size=(50, 4))
    labels = rng.integers(0, 4, size=50)
    exact = cot_estimate(labels, Z_t, solver="exact")
    sub = cot_estimate(labels, Z_t, solver="subsampled_assignment", seed=9)
    # the subsample of 50 out of 50 is a permutation, so costs coincide
    assert sub.predicted_error == pytest.approx(exact.predicted_error, abs=1e-12)
    assert sub.metadata["n_target"] == 50


def test_cot_subsampled_is_deterministic_in_seed():
    rng = np.random.default_rng(6)
    Z_t = rng.normal(size=(40, 3))
    labels = rng.integers(0, 3, size=60)
    a = cot_estimate(labels, Z_t, solver="subsampled_assignment", seed=4)
    b = cot_estimate(labels, Z_t, solver="subsampled_assignment", seed=4)
    assert a.predicted_error == b.predicted_error


def test_cot_invariant_under_class_relabeling_and_row_order():
    rng = np.random.default_rng(21)
    Z_t = rng.normal(size=(12, 4))
    labels = rng.integers(0, 4, size=12)
    base = cot_estimate(labels, Z_t)
    perm = np.array([2, 0, 3, 1])  # class relabeling sigma
    relabeled = cot_estimate(perm[labels], Z_t[:, np.argsort(perm)])
    assert relabeled.predicted_error == pytest.approx(base.predicted_error, abs=1e-12)
    order = rng.permutation(12)
    shuffled = cot_estimate(labels, Z_t[order])
    assert shuffled.predicted_error == pytest.approx(base.predicted_error, abs=1e-12)


def test_cot_rejects_unknown_solver_and_empty_labels():
    Z_t = np.zeros((2, 2))
    with pytest.raises(ValidationError):
        cot_estimate(np.array([0]), Z_t, solver="sinkhorn")
    with pytest.raises(ValidationError):
        cot_estimate(np.array([], dtype=int), Z_t)


# ---------------------------------------------------------------- temperature


def test_temperature_confident_correct_two_row_case():
    # NLL of [[2,0],[0,2]] with labels [0,1] strictly improves as T -> 0
    scaler = fit_temperature(np.array([[2.0, 0.0], [0.0, 2.0]]), np.array([0, 1]))
    assert scaler.temperature_ == 0.01


def test_temperature_all_correct_snaps_to_lower_bound():
    Z = binary_logits([0.7, 0.8, 0.9, 0.6])
    y = np.array([0, 0, 0, 1])
    Z[3] = -Z[3]  # flip so row 3 predicts class 1; every row is correct
    scaler = fit_temperature(Z, y)
    assert scaler.temperature_ == 0.01


def test_temperature_all_wrong_snaps_to_upper_bound():
    Z = binary_logits([0.7, 0.8, 0.9, 0.8])
    Z[3] = -Z[3]  # rows 0-2 predict class 0, row 3 predicts class 1
    y = np.array([1, 1, 1, 0])  # every prediction is wrong
    scaler = TemperatureScaler().fit(Z, y)
    assert scaler.temperature_ == 100.0


def test_temperature_recovers_inflation_factor():
    rng = np.random.default_rng(0)
    true_logits = rng.normal(size=(2000, 4))
    probs = np.exp(log_softmax_rows(true_logits))
    y = np.array([rng.choice(4, p=p) for p in probs])
    scaler = fit_temperature(3.0 * true_logits, y)
    assert 2.0 < scaler.temperature_ < 4.5
    # fitted optimum beats a dense grid up to numerical slack
    rows = np.arange(2000)
    Z = 3.0 * true_logits

    def nll(T):
        return float(-log_softmax_rows(Z / T)[rows, y].mean())

    grid_best = min(nll(T) for T in np.geomspace(0.5, 20.0, 400))
    assert nll(scaler.temperature_) <= grid_best + 1e-8


def test_temperature_transform_preserves_argmax():
    rng = np.random.default_rng(2)
    Z_val = rng.normal(size=(200, 5))
    y = rng.integers(0, 5, size=200)
    scaler = fit_temperature(Z_val, y)
    Z = rng.normal(size=(500, 5)) * 10
    assert np.array_equal(argmax_rows(scaler.transform(Z)), argmax_rows(Z))


def test_temperature_rejects_single_class_labels():
    Z = np.random.default_rng(1).normal(size=(10, 3))
    with pytest.raises(ValidationError, match="single class"):
        fit_temperature(Z, np.full(10, 2))


def test_identity_scaler_is_a_no_op():
    scaler = TemperatureScaler.identity()
    Z = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(scaler.transform(Z), Z)


def test_estimators_accept_fitted_scaler():
    rng = np.random.default_rng(8)
    Z_s = rng.normal(size=(100, 3)) * 4
    y = rng.integers(0, 3, size=100)
    Z_t = rng.normal(size=(80, 3)) * 4
    scaler = fit_temperature(Z_s, y)
    raw = doc_estimate(Z_s, y, Z_t)
    scaled = doc_estimate(Z_s, y, Z_t, scaler=scaler)
    # scaling never changes the measured source error term
    assert scaled.metadata["source_error"] == raw.metadata["source_error"]
    for est in (
        ac_estimate(Z_t, scaler=scaler),
        atc_estimate(Z_s, y, Z_t, scaler=scaler),
        cot_estimate(y, Z_t, scaler=scaler),
    ):
        assert math.isfinite(est.predicted_error)


# ---------------------------------------------------------------- records


def test_error_estimate_dict_round_trip_sanitizes_infinities():
    est = ErrorEstimate("atc_ne", 0.0, {"threshold": -np.inf, "score": "neg_entropy"})
    d = est.to_dict()
    assert d["metadata"]["threshold"] is None
    json.dumps(d, allow_nan=False)  # strict JSON must not choke
    back = ErrorEstimate.from_dict(d)
    assert back.method == "atc_ne"
    assert back.predicted_error == 0.0
