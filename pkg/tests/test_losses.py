from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftbound.losses import (
    dbat_loss,
    disagreement_batch,
    disagreement_loss,
    logistic_loss,
    neg_xent_loss,
)
from shiftbound.validation import ValidationError

ALL_LOSSES = {
    "logistic": lambda z, y: logistic_loss(z, y, normalize=True),
    "logistic_raw": lambda z, y: logistic_loss(z, y, normalize=False),
    "dis": disagreement_loss,
    "dbat": dbat_loss,
    "neg_xent": neg_xent_loss,
}


def finite_diff(fn, z, y, step=1e-5):
    z = np.asarray(z, dtype=np.float64)
    grad = np.zeros_like(z)
    for j in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[j] += step
        zm[j] -= step
        grad[j] = (fn(zp, y).value - fn(zm, y).value) / (2 * step)
    return grad


# hand and oracle values, computed independently of the implementation

def test_logistic_uniform_four_classes():
    assert logistic_loss([0.0, 0.0, 0.0, 0.0], 2).value == pytest.approx(1.0, abs=1e-12)


def test_logistic_unnormalized_binary():
    assert logistic_loss([0.0, 0.0], 0, normalize=False).value == pytest.approx(
        math.log(2), abs=1e-12
    )


def test_logistic_oracle_three_classes():
    # independent log-sum-exp evaluation of -(z_y - lse)/log(3) at z=(5,0,0), y=0
    lse = math.log(math.exp(5.0) + 2.0)
    expected = -(5.0 - lse) / math.log(3.0)
    assert logistic_loss([5.0, 0.0, 0.0], 0).value == pytest.approx(expected, rel=1e-12)


def test_disagreement_uniform_is_one():
    assert disagreement_loss([0.0, 0.0], 0).value == pytest.approx(1.0, abs=1e-12)
    assert disagreement_loss([3.0, 3.0, 3.0], 1).value == pytest.approx(1.0, abs=1e-12)


def test_disagreement_oracle_binary():
    expected = math.log(1 + math.exp(-10.0)) / math.log(2.0)
    got = disagreement_loss([-10.0, 0.0], 0).value
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(6.549676676199696e-05, rel=1e-9)


def test_dbat_hand_cases():
    assert dbat_loss([0.0, 0.0], 0).value == pytest.approx(math.log(2), abs=1e-12)
    expected = math.log(1 + math.exp(1.0) / 2.0)
    assert dbat_loss([1.0, 0.0, 0.0], 0).value == pytest.approx(expected, rel=1e-12)


def test_neg_xent_hand_case():
    assert neg_xent_loss([0.0, 0.0], 0).value == pytest.approx(math.log(0.5), abs=1e-12)


def test_invalid_class_id():
    for fn in (disagreement_loss, dbat_loss, neg_xent_loss):
        with pytest.raises(ValidationError):
            fn([0.0, 1.0], 2)
    with pytest.raises(ValidationError):
        logistic_loss([0.0, 1.0], -1)


def test_stability_at_extreme_logits():
    for fn in ALL_LOSSES.values():
        for z in ([1e4, -1e4, 0.0], [-1e4, 1e4, 1e4]):
            out = fn(z, 0)
            assert np.isfinite(out.value)
            assert np.all(np.isfinite(out.gradient))


def test_nonnegative_kernels():
    rng = np.random.default_rng(0)
    for _ in range(200):
        C = rng.integers(2, 8)
        z = rng.normal(scale=5.0, size=C)
        y = int(rng.integers(C))
        assert logistic_loss(z, y).value >= 0.0
        assert disagreement_loss(z, y).value >= 0.0
        assert dbat_loss(z, y).value >= 0.0


def test_disagreement_dominates_agreement_indicator():
    rng = np.random.default_rng(1)
    for C in range(2, 11):
        Z = rng.normal(scale=4.0, size=(500, C))
        y = rng.integers(0, C, size=500)
        values, _ = disagreement_batch(Z, y)
        agree = (np.argmax(Z, axis=1) == y).astype(float)
        assert (values >= agree - 1e-12).all()


def test_binary_disagreement_equals_flipped_cross_entropy():
    rng = np.random.default_rng(2)
    for _ in range(300):
        z = rng.normal(scale=6.0, size=2)
        y = int(rng.integers(2))
        lhs = disagreement_loss(z, y).value
        rhs = logistic_loss(z, 1 - y, normalize=False).value / math.log(2.0)
        assert lhs == pytest.approx(rhs, abs=1e-12)


@given(
    st.integers(min_value=2, max_value=6).flatmap(
        lambda C: st.tuples(
            st.lists(st.floats(-30, 30), min_size=C, max_size=C),
            st.lists(st.floats(-30, 30), min_size=C, max_size=C),
            st.integers(min_value=0, max_value=C - 1),
            st.floats(0.01, 0.99),
        )
    )
)
@settings(max_examples=300, deadline=None)
def test_segment_convexity_property(args):
    a, b, y, lam = args
    a, b = np.asarray(a), np.asarray(b)
    mid = lam * a + (1 - lam) * b
    for fn in (disagreement_loss, lambda z, yy: logistic_loss(z, yy)):
        assert (
            fn(mid, y).value
            <= lam * fn(a, y).value + (1 - lam) * fn(b, y).value + 1e-9
        )


@given(
    st.integers(min_value=2, max_value=6).flatmap(
        lambda C: st.tuples(
            st.lists(st.floats(-20, 20), min_size=C, max_size=C),
            st.integers(min_value=0, max_value=C - 1),
        )
    )
)
@settings(max_examples=200, deadline=None)
def test_gradients_match_finite_differences_property(args):
    z, y = args
    z = np.asarray(z)
    for fn in ALL_LOSSES.values():
        analytic = fn(z, y).gradient
        numeric = finite_diff(fn, z, y)
        scale = max(1.0, float(np.abs(numeric).max()))
        assert np.abs(analytic - numeric).max() / scale < 1e-5


def test_gradcheck_all_kernels_random():
    rng = np.random.default_rng(3)
    for _ in range(100):
        C = int(rng.integers(2, 9))
        z = rng.normal(scale=3.0, size=C)
        y = int(rng.integers(C))
        for name, fn in ALL_LOSSES.items():
            analytic = fn(z, y).gradient
            numeric = finite_diff(fn, z, y)
            scale = max(1.0, float(np.abs(numeric).max()))
            err = np.abs(analytic - numeric).max() / scale
            assert err < 1e-5, f"{name}: rel grad error {err}"
