"""Gaussian cluster shifts with a linear labeling function by construction.

Each class c draws from an isotropic Gaussian centered at separation * e_c,
so labels are realized by the generating cluster and a linear classifier can
separate them whenever the clusters do not overlap too much. The target
distribution differs from the source by any combination of a global mean
shift, a rotation in the (e_0, e_1) plane, and class reweighting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import EmbeddingDataset
from ..validation import (
    ValidationError,
    as_vector,
    check_positive,
    check_positive_int,
)


@dataclass
class SynthConfig:
    n_classes: int
    dim: int
    n_source: int
    n_target: int
    separation: float = 4.0
    shift_scale: float = 0.0
    shift_direction: object = None  # d-vector; None draws a random unit vector
    target_weights: object = None  # simplex over classes; None means uniform
    rotation_angle: float = 0.0  # radians, applied in the (e_0, e_1) plane
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        check_positive_int("n_classes", self.n_classes)
        check_positive_int("dim", self.dim)
        if self.n_classes < 2:
            raise ValidationError("SynthConfig: need at least 2 classes")
        if self.dim < self.n_classes:
            raise ValidationError(
                f"SynthConfig: dim {self.dim} < n_classes {self.n_classes}; "
                "class means are separation * e_c"
            )
        for name, n in (("n_source", self.n_source), ("n_target", self.n_target)):
            check_positive_int(name, n)
            if n < self.n_classes:
                raise ValidationError(f"SynthConfig: {name} {n} < n_classes")
        check_positive("separation", self.separation)
        if self.noise_scale < 0:
            raise ValidationError("SynthConfig: noise_scale must be >= 0")
        if self.target_weights is not None:
            w = as_vector("target_weights", self.target_weights,
                          length=self.n_classes)
            if w.min() < 0 or abs(w.sum() - 1.0) > 1e-9:
                raise ValidationError(
                    "SynthConfig: target_weights must be nonnegative and sum to 1"
                )
        if self.shift_direction is not None:
            u = as_vector("shift_direction", self.shift_direction, length=self.dim)
            if np.linalg.norm(u) == 0.0:
                raise ValidationError("SynthConfig: shift_direction has zero norm")


def _apportion(n: int, weights: np.ndarray) -> np.ndarray:
    """Integer class counts summing to n, proportional to weights.

    Largest-remainder rounding; remainder ties go to the lower class index.
    """
    exact = n * weights
    counts = np.floor(exact).astype(int)
    remainder = n - counts.sum()
    if remainder > 0:
        order = np.lexsort((np.arange(weights.size), -(exact - counts)))
        counts[order[:remainder]] += 1
    return counts


def _rotation(dim: int, angle: float) -> np.ndarray:
    R = np.eye(dim)
    c, s = np.cos(angle), np.sin(angle)
    R[0, 0] = c
    R[0, 1] = -s
    R[1, 0] = s
    R[1, 1] = c
    return R


def _sample_clusters(rng, counts, means, noise_scale):
    labels = np.repeat(np.arange(counts.size), counts)
    noise = rng.normal(size=(labels.size, means.shape[1])) * noise_scale
    features = means[labels] + noise
    order = rng.permutation(labels.size)
    return features[order], labels[order]


def generate_synthetic_shift(config: SynthConfig):
    """Return labeled (source, target) datasets for one synthetic shift.

    Deterministic in config.seed. Target rows are built as
    R @ (mean_c + noise) + shift_scale * u, with class counts apportioned
    from target_weights; source uses uniform weights and no transform.
    """
    C, d = config.n_classes, config.dim
    means = config.separation * np.eye(C, d)
    uniform = np.full(C, 1.0 / C)
    weights = (uniform if config.target_weights is None
               else np.asarray(config.target_weights, dtype=np.float64))

    src_rng = np.random.default_rng([config.seed, 0])
    tgt_rng = np.random.default_rng([config.seed, 1])
    X_s, y_s = _sample_clusters(src_rng, _apportion(config.n_source, uniform),
                                means, config.noise_scale)
    X_t, y_t = _sample_clusters(tgt_rng, _apportion(config.n_target, weights),
                                means, config.noise_scale)

    if config.rotation_angle != 0.0:
        X_t = X_t @ _rotation(d, config.rotation_angle).T
    if config.shift_scale != 0.0:
        if config.shift_direction is None:
            u = np.random.default_rng([config.seed, 2]).normal(size=d)
        else:
            u = np.asarray(config.shift_direction, dtype=np.float64)
        u = u / np.linalg.norm(u)
        X_t = X_t + config.shift_scale * u

    source = EmbeddingDataset(features=X_s, n_classes=C, labels=y_s,
                              domain_tag="source")
    target = EmbeddingDataset(features=X_t, n_classes=C, labels=y_t,
                              domain_tag="target")
    return source, target
