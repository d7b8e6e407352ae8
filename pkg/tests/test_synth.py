import math

import numpy as np
import pytest

from shiftbound.data import argmax_rows, dataset_logits
from shiftbound.harness import SynthConfig, generate_synthetic_shift
from shiftbound.harness.benchmark import fit_linear_probe
from shiftbound.harness.synth import _apportion
from shiftbound.validation import ValidationError


def std_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def probe_accuracies(source, target):
    head = fit_linear_probe(source)
    acc_s = float(np.mean(argmax_rows(dataset_logits(source, head)) == source.labels))
    acc_t = float(np.mean(argmax_rows(dataset_logits(target, head)) == target.labels))
    return acc_s, acc_t


# ------------------------------------------------------------ validation


def test_config_validation():
    ok = dict(n_classes=3, dim=8, n_source=100, n_target=100)
    SynthConfig(**ok)
    with pytest.raises(ValidationError, match="dim"):
        SynthConfig(**{**ok, "dim": 2})
    with pytest.raises(ValidationError, match="n_source"):
        SynthConfig(**{**ok, "n_source": 2})
    with pytest.raises(ValidationError):
        SynthConfig(**{**ok, "separation": 0.0})
    with pytest.raises(ValidationError, match="noise_scale"):
        SynthConfig(**{**ok, "noise_scale": -1.0})
    with pytest.raises(ValidationError, match="target_weights"):
        SynthConfig(**{**ok, "target_weights": [0.5, 0.4, 0.2]})
    with pytest.raises(ValidationError, match="target_weights"):
        SynthConfig(**{**ok, "target_weights": [1.2, -0.1, -0.1]})
    with pytest.raises(ValidationError, match="zero norm"):
        SynthConfig(**{**ok, "shift_direction": np.zeros(8)})
    with pytest.raises(ValidationError, match="at least 2"):
        SynthConfig(**{**ok, "n_classes": 1, "n_source": 5, "n_target": 5})


def test_apportionment_is_exact_and_deterministic():
    assert _apportion(10, np.array([1 / 3, 1 / 3, 1 / 3])).tolist() == [4, 3, 3]
    assert _apportion(10, np.array([0.5, 0.25, 0.25])).tolist() == [5, 3, 2]
    assert _apportion(7, np.array([0.0, 1.0])).tolist() == [0, 7]
    counts = _apportion(997, np.array([0.2, 0.3, 0.5]))
    assert counts.sum() == 997


# ------------------------------------------------------------ generation


def test_same_seed_gives_identical_datasets():
    config = SynthConfig(n_classes=3, dim=8, n_source=200, n_target=150,
                         shift_scale=1.0, rotation_angle=0.3, seed=9)
    a_src, a_tgt = generate_synthetic_shift(config)
    b_src, b_tgt = generate_synthetic_shift(config)
    assert np.array_equal(a_src.features, b_src.features)
    assert np.array_equal(a_src.labels, b_src.labels)
    assert np.array_equal(a_tgt.features, b_tgt.features)
    assert np.array_equal(a_tgt.labels, b_tgt.labels)


def test_different_seeds_differ():
    base = dict(n_classes=3, dim=8, n_source=200, n_target=150)
    a_src, _ = generate_synthetic_shift(SynthConfig(**base, seed=1))
    b_src, _ = generate_synthetic_shift(SynthConfig(**base, seed=2))
    assert not np.array_equal(a_src.features, b_src.features)


def test_shapes_tags_and_label_ranges():
    config = SynthConfig(n_classes=4, dim=10, n_source=201, n_target=99, seed=3)
    source, target = generate_synthetic_shift(config)
    assert source.features.shape == (201, 10)
    assert target.features.shape == (99, 10)
    assert source.domain_tag == "source" and target.domain_tag == "target"
    assert source.n_classes == target.n_classes == 4
    assert set(np.unique(source.labels)) <= set(range(4))


def test_reweighting_hits_exact_class_counts():
    config = SynthConfig(n_classes=2, dim=4, n_source=100, n_target=1000,
                         target_weights=[0.9, 0.1], seed=4)
    _, target = generate_synthetic_shift(config)
    assert np.bincount(target.labels, minlength=2).tolist() == [900, 100]


def test_noiseless_rotation_moves_clusters_exactly():
    config = SynthConfig(n_classes=2, dim=4, n_source=10, n_target=10,
                         separation=2.0, rotation_angle=np.pi / 2,
                         noise_scale=0.0, seed=5)
    _, target = generate_synthetic_shift(config)
    for row, label in zip(target.features, target.labels):
        expected = np.array([0.0, 2.0, 0.0, 0.0]) if label == 0 \
            else np.array([-2.0, 0.0, 0.0, 0.0])
        assert np.allclose(row, expected, atol=1e-12)


def test_noiseless_shift_direction_is_normalized():
    config = SynthConfig(n_classes=2, dim=4, n_source=10, n_target=10,
                         separation=2.0, shift_scale=3.0,
                         shift_direction=[0.0, 0.0, 10.0, 0.0],
                         noise_scale=0.0, seed=6)
    _, target = generate_synthetic_shift(config)
    for row, label in zip(target.features, target.labels):
        mean = np.array([2.0, 0.0, 0.0, 0.0]) if label == 0 \
            else np.array([0.0, 2.0, 0.0, 0.0])
        assert np.allclose(row, mean + np.array([0.0, 0.0, 3.0, 0.0]), atol=1e-12)


# ------------------------------------------------------------ oracles


def test_zero_shift_probe_self_consistency():
    config = SynthConfig(n_classes=3, dim=6, n_source=5000, n_target=5000,
                         separation=3.0, seed=7)
    source, target = generate_synthetic_shift(config)
    acc_s, acc_t = probe_accuracies(source, target)
    assert abs(acc_s - acc_t) <= 0.02


def test_boundary_normal_shift_matches_gaussian_error_oracle():
    # Binary clusters at 2*e_0 and 2*e_1 with unit noise: the boundary
    # normal is (e_0 - e_1)/sqrt(2) at margin sqrt(2). Shifting the target
    # by 2.5 along the normal pushes class 1 across the boundary; the
    # closed-form accuracies follow the normal CDF.
    separation, scale = 2.0, 2.5
    margin = separation / math.sqrt(2.0)
    direction = np.zeros(6)
    direction[0], direction[1] = 1.0, -1.0
    config = SynthConfig(n_classes=2, dim=6, n_source=4000, n_target=6000,
                         separation=separation, shift_scale=scale,
                         shift_direction=direction, seed=8)
    source, target = generate_synthetic_shift(config)
    acc_s, acc_t = probe_accuracies(source, target)

    oracle_src = std_normal_cdf(margin)
    oracle_tgt = 0.5 * (std_normal_cdf(margin + scale)
                        + std_normal_cdf(margin - scale))
    assert abs(acc_s - oracle_src) <= 0.03
    assert abs(acc_t - oracle_tgt) <= 0.05
    drop = acc_s - acc_t
    assert drop >= 0.20
    assert abs(drop - (oracle_src - oracle_tgt)) <= 0.05
