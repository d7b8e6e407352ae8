"""In-memory datasets, the shift manifest, splitting, and softmax helpers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .containers import read_labels, read_matrix
from .validation import (
    ValidationError,
    as_labels,
    as_matrix,
    check_fraction,
    check_positive_int,
)

SPLIT_ROLES = ("source_train", "source_val", "target_train", "target_val")


@dataclass
class EmbeddingDataset:
    """One domain split: feature matrix plus optional labels and logits."""

    features: np.ndarray
    n_classes: int
    labels: np.ndarray | None = None
    logits: np.ndarray | None = None
    domain_tag: str = ""

    def __post_init__(self):
        self.features = as_matrix(f"{self.domain_tag or 'dataset'}.features", self.features)
        self.n_classes = check_positive_int("n_classes", self.n_classes)
        if self.labels is not None:
            self.labels = as_labels(
                f"{self.domain_tag or 'dataset'}.labels",
                self.labels,
                n_classes=self.n_classes,
                length=self.n,
            )
        if self.logits is not None:
            self.logits = as_matrix(
                f"{self.domain_tag or 'dataset'}.logits",
                self.logits,
                cols=self.n_classes,
            )
            if self.logits.shape[0] != self.n:
                raise ValidationError(
                    f"{self.domain_tag or 'dataset'}: logits rows {self.logits.shape[0]} "
                    f"!= features rows {self.n}"
                )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, indices: np.ndarray, domain_tag: str | None = None) -> "EmbeddingDataset":
        return EmbeddingDataset(
            features=self.features[indices],
            n_classes=self.n_classes,
            labels=None if self.labels is None else self.labels[indices],
            logits=None if self.logits is None else self.logits[indices],
            domain_tag=self.domain_tag if domain_tag is None else domain_tag,
        )


@dataclass
class LinearHead:
    """A linear classifier over features: logits = X @ weights.T + bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = as_matrix("head.weights", self.weights)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ValidationError(
                f"head: bias length {self.bias.shape[0]} != weight rows {self.weights.shape[0]}"
            )

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = as_matrix("head input", X, cols=self.dim)
        return X @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        return argmax_rows(self.decision_function(X))


def dataset_logits(dataset: EmbeddingDataset, head: LinearHead | None) -> np.ndarray:
    """Logits for a split: from the linear head if given, else stored logits."""
    if head is not None:
        return head.decision_function(dataset.features)
    if dataset.logits is None:
        raise ValidationError(
            f"{dataset.domain_tag or 'dataset'}: no classifier head given and no stored logits"
        )
    return dataset.logits


@dataclass
class SplitSpec:
    role: str
    features_path: str
    labels_path: str | None = None
    logits_path: str | None = None


@dataclass
class ShiftManifest:
    name: str
    dim: int
    classes: int
    splits: list[SplitSpec] = field(default_factory=list)
    delta: float = 0.01
    root: Path | None = None

    def roles(self) -> list[str]:
        return [s.role for s in self.splits]

    def split(self, role: str) -> SplitSpec:
        for s in self.splits:
            if s.role == role:
                return s
        raise ValidationError(f"manifest {self.name}: no split with role {role!r}")

    def has_role(self, role: str) -> bool:
        return any(s.role == role for s in self.splits)

    def load_split(self, role: str) -> EmbeddingDataset:
        spec = self.split(role)
        root = self.root or Path(".")
        features = read_matrix(root / spec.features_path, cols=self.dim)
        labels = None
        if spec.labels_path is not None:
            labels = read_labels(root / spec.labels_path, count=features.shape[0])
        logits = None
        if spec.logits_path is not None:
            logits = read_matrix(root / spec.logits_path, rows=features.shape[0], cols=self.classes)
        return EmbeddingDataset(
            features=features,
            n_classes=self.classes,
            labels=labels,
            logits=logits,
            domain_tag=f"{self.name}/{role}",
        )


def load_manifest(path) -> ShiftManifest:
    """Load and validate a manifest JSON, checking every referenced file."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"load_manifest: file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"load_manifest({path}): invalid JSON: {exc}")

    for key in ("name", "dim", "classes", "splits"):
        if key not in raw:
            raise ValidationError(f"load_manifest({path}): missing field {key!r}")
    dim = check_positive_int("dim", raw["dim"])
    classes = check_positive_int("classes", raw["classes"])
    delta = float(raw.get("delta", 0.01))
    check_fraction("delta", delta)

    splits = []
    for i, entry in enumerate(raw["splits"]):
        if "role" not in entry or "features_path" not in entry:
            raise ValidationError(f"load_manifest({path}): split {i} missing role/features_path")
        role = entry["role"]
        if role not in SPLIT_ROLES:
            raise ValidationError(f"load_manifest({path}): split {i} has unknown role {role!r}")
        splits.append(
            SplitSpec(
                role=role,
                features_path=entry["features_path"],
                labels_path=entry.get("labels_path"),
                logits_path=entry.get("logits_path"),
            )
        )
    manifest = ShiftManifest(
        name=str(raw["name"]), dim=dim, classes=classes, splits=splits, delta=delta,
        root=path.parent,
    )

    for required in ("source_train", "target_train"):
        if not manifest.has_role(required):
            raise ValidationError(f"load_manifest({path}): required role absent: {required}")
    seen = set()
    for s in splits:
        if s.role in seen:
            raise ValidationError(f"load_manifest({path}): duplicate role {s.role!r}")
        seen.add(s.role)
    # eager shape validation of every referenced file
    for s in splits:
        manifest.load_split(s.role)
    return manifest


def save_manifest(manifest: ShiftManifest, path) -> None:
    path = Path(path)
    payload = {
        "name": manifest.name,
        "dim": manifest.dim,
        "classes": manifest.classes,
        "delta": manifest.delta,
        "splits": [
            {
                "role": s.role,
                "features_path": s.features_path,
                "labels_path": s.labels_path,
                "logits_path": s.logits_path,
            }
            for s in manifest.splits
        ],
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def split_holdout(dataset: EmbeddingDataset, fraction: float, seed: int):
    """Disjoint, exhaustive (train, holdout) partition, deterministic under seed."""
    check_fraction("fraction", fraction)
    n = dataset.n
    if n < 2:
        raise ValidationError(f"split_holdout: need >= 2 samples, got {n}")
    n_holdout = int(round(n * fraction))
    if n_holdout < 1 or n_holdout >= n:
        raise ValidationError(
            f"split_holdout: fraction {fraction} leaves a degenerate side for n={n}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    holdout_idx = np.sort(perm[:n_holdout])
    train_idx = np.sort(perm[n_holdout:])
    return dataset.take(train_idx), dataset.take(holdout_idx)


def log_softmax_rows(logits) -> np.ndarray:
    Z = as_matrix("logits", logits)
    shifted = Z - Z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_rows(logits) -> np.ndarray:
    """Row-wise softmax with max-subtraction stabilization.

    Probabilities are floored at the smallest normal positive float so rows
    stay strictly positive even when an exponential underflows; the induced
    row-sum error is far below the 1e-9 contract.
    """
    return np.maximum(np.exp(log_softmax_rows(logits)), np.finfo(np.float64).tiny)


def argmax_rows(logits) -> np.ndarray:
    """Row-wise argmax; ties break toward the lowest class index."""
    Z = as_matrix("logits", logits)
    return np.argmax(Z, axis=1).astype(np.int64)
