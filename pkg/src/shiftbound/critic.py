"""Linear critics trained to maximize the disagreement discrepancy.

A critic is a linear classifier h' over a chosen representation (raw
features, the classifier's logits, or top principal components). Training
minimizes

    mean over source of cross-entropy(h'(x), hat_h(x))
  + mean over target of a disagreement kernel(h'(x), hat_h(x))

so the critic agrees with the classifier under test on source and disagrees
on target. Only the classifier's predictions ever enter training; true
labels are never consumed here. The search trains a grid of configurations
and keeps the one with the largest discrepancy on held-out splits, which is
the conservative direction for the downstream error bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .containers import read_matrix, write_matrix
from .data import argmax_rows
from .losses import TARGET_LOSS_BATCH, disagreement_batch, logistic_batch
from .validation import (
    DivergenceError,
    ValidationError,
    as_labels,
    as_matrix,
    check_fraction,
    check_positive,
    check_positive_int,
)

INPUT_SPACES = ("features", "logits", "top_pcs")
OPTIMIZERS = ("sgd_momentum", "adam")
LOSS_VARIANTS = ("dis", "dbat", "neg_xent")


@dataclass
class LinearCritic:
    weights: np.ndarray
    bias: np.ndarray
    input_space: str = "features"

    def __post_init__(self):
        self.weights = as_matrix("critic.weights", self.weights)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ValidationError("critic: bias length != weight rows")
        if self.input_space not in INPUT_SPACES:
            raise ValidationError(f"critic: unknown input space {self.input_space!r}")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = as_matrix("critic input", X, cols=self.dim)
        return X @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        return argmax_rows(self.decision_function(X))


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 50
    batch_size: int = 256
    weight_decay: float = 0.0
    seed: int = 0
    optimizer: str = "sgd_momentum"
    loss_variant: str = "dis"

    def __post_init__(self):
        check_positive("learning_rate", self.learning_rate)
        self.epochs = check_positive_int("epochs", self.epochs)
        self.batch_size = check_positive_int("batch_size", self.batch_size)
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValidationError(f"unknown loss variant {self.loss_variant!r}")


@dataclass
class CriticFitResult:
    critic: LinearCritic
    agreement_trajectory: list[float]
    holdout_discrepancy: float
    config: TrainConfig
    # optional per-epoch diagnostics on the training splits (enabled via
    # track_objective): the normalized agreement+disagreement objective and
    # the raw train discrepancy
    objective_trajectory: list[float] = field(default_factory=list)
    train_discrepancy_trajectory: list[float] = field(default_factory=list)


def disagreement_rate(preds_a, preds_b) -> float:
    a = as_labels("preds_a", preds_a)
    b = as_labels("preds_b", preds_b, length=a.shape[0])
    if a.size == 0:
        raise ValidationError("disagreement_rate: empty predictions")
    return float(np.mean(a != b))


def discrepancy_from_preds(hat_preds_S, hat_preds_T, other_preds_S, other_preds_T) -> float:
    """Target disagreement rate minus source disagreement rate, in [-1, 1]."""
    return disagreement_rate(hat_preds_T, other_preds_T) - disagreement_rate(
        hat_preds_S, other_preds_S
    )


def empirical_discrepancy(critic: LinearCritic, hat_preds_S, hat_preds_T, X_S, X_T) -> float:
    """Discrepancy between the classifier's predictions and the critic's."""
    return discrepancy_from_preds(
        hat_preds_S, hat_preds_T, critic.predict(X_S), critic.predict(X_T)
    )


def _batch_stream(n: int, batch_size: int, rng: np.random.Generator):
    """Yield index batches forever, reshuffling after each full pass."""
    while True:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield perm[start : start + batch_size]


class _Optimizer:
    def __init__(self, config: TrainConfig, shapes):
        self.kind = config.optimizer
        self.lr = config.learning_rate
        self.step_count = 0
        if self.kind == "sgd_momentum":
            self.momentum = 0.9
            self.velocity = [np.zeros(s) for s in shapes]
        else:  # adam
            self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
            self.m = [np.zeros(s) for s in shapes]
            self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        self.step_count += 1
        if self.kind == "sgd_momentum":
            for p, g, v in zip(params, grads, self.velocity):
                v *= self.momentum
                v += g
                p -= self.lr * v
        else:
            bc1 = 1.0 - self.beta1 ** self.step_count
            bc2 = 1.0 - self.beta2 ** self.step_count
            for p, g, m, v in zip(params, grads, self.m, self.v):
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * np.square(g)
                p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _normalized_objective(W, b, X_s, ps, X_t, pt) -> float:
    vs, _ = logistic_batch(X_s @ W.T + b, ps, normalize=True)
    vt, _ = disagreement_batch(X_t @ W.T + b, pt)
    return float(vs.mean() + vt.mean())


def train_critic(
    X_S_train,
    X_T_train,
    hat_preds_S,
    hat_preds_T,
    n_classes: int,
    config: TrainConfig,
    *,
    X_S_holdout=None,
    X_T_holdout=None,
    hat_preds_S_holdout=None,
    hat_preds_T_holdout=None,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    input_space: str = "features",
    track_objective: bool = False,
) -> CriticFitResult:
    """Train one critic configuration; deterministic given config.seed.

    The recorded agreement trajectory a_i is measured against the
    classifier's predictions on the source training split after each epoch.
    holdout_discrepancy is measured on the holdout arrays when given, else
    on the training splits.
    """
    X_s = as_matrix("X_S_train", X_S_train)
    X_t = as_matrix("X_T_train", X_T_train, cols=X_s.shape[1])
    n_classes = check_positive_int("n_classes", n_classes)
    ps = as_labels("hat_preds_S", hat_preds_S, n_classes=n_classes, length=X_s.shape[0])
    pt = as_labels("hat_preds_T", hat_preds_T, n_classes=n_classes, length=X_t.shape[0])

    p_dim = X_s.shape[1]
    if init is not None:
        W = np.array(init[0], dtype=np.float64, copy=True)
        b = np.array(init[1], dtype=np.float64, copy=True).reshape(-1)
        if W.shape != (n_classes, p_dim) or b.shape != (n_classes,):
            raise ValidationError(
                f"train_critic: init shape {W.shape}/{b.shape} does not match "
                f"({n_classes}, {p_dim})"
            )
    else:
        W = np.zeros((n_classes, p_dim))
        b = np.zeros(n_classes)

    target_batch = TARGET_LOSS_BATCH[config.loss_variant]
    opt = _Optimizer(config, [W.shape, b.shape])
    src_stream = _batch_stream(X_s.shape[0], config.batch_size, np.random.default_rng([config.seed, 0]))
    tgt_stream = _batch_stream(X_t.shape[0], config.batch_size, np.random.default_rng([config.seed, 1]))
    steps_per_epoch = max(
        math.ceil(X_s.shape[0] / config.batch_size),
        math.ceil(X_t.shape[0] / config.batch_size),
    )

    agreement = []
    objective_traj: list[float] = []
    train_disc_traj: list[float] = []
    for epoch in range(config.epochs):
        for _ in range(steps_per_epoch):
            si = next(src_stream)
            ti = next(tgt_stream)
            Xb_s, yb_s = X_s[si], ps[si]
            Xb_t, yb_t = X_t[ti], pt[ti]
            with np.errstate(over="ignore", invalid="ignore"):
                Z_s = Xb_s @ W.T + b
                Z_t = Xb_t @ W.T + b
            if not (np.all(np.isfinite(Z_s)) and np.all(np.isfinite(Z_t))):
                raise DivergenceError(
                    f"train_critic: diverged (non-finite logits) at epoch {epoch} "
                    f"(config seed {config.seed}, lr {config.learning_rate})"
                )
            vs, gs = logistic_batch(Z_s, yb_s, normalize=False)
            vt, gt = target_batch(Z_t, yb_t)
            loss = vs.mean() + vt.mean()
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"train_critic: non-finite loss at epoch {epoch} "
                    f"(config seed {config.seed}, lr {config.learning_rate})"
                )
            gW = (gs.T @ Xb_s) / len(si) + (gt.T @ Xb_t) / len(ti)
            gb = gs.mean(axis=0) + gt.mean(axis=0)
            if config.weight_decay:
                gW = gW + config.weight_decay * W
            with np.errstate(over="ignore", invalid="ignore"):
                opt.step([W, b], [gW, gb])
        preds_s_epoch = argmax_rows(X_s @ W.T + b)
        agreement.append(1.0 - float(np.mean(preds_s_epoch != ps)))
        if track_objective:
            objective_traj.append(_normalized_objective(W, b, X_s, ps, X_t, pt))
            train_disc_traj.append(
                disagreement_rate(pt, argmax_rows(X_t @ W.T + b))
                - disagreement_rate(ps, preds_s_epoch)
            )

    critic = LinearCritic(weights=W, bias=b, input_space=input_space)
    if X_S_holdout is not None and X_T_holdout is not None:
        holdout = empirical_discrepancy(
            critic,
            as_labels("hat_preds_S_holdout", hat_preds_S_holdout, n_classes=n_classes),
            as_labels("hat_preds_T_holdout", hat_preds_T_holdout, n_classes=n_classes),
            X_S_holdout,
            X_T_holdout,
        )
    else:
        holdout = empirical_discrepancy(critic, ps, pt, X_s, X_t)
    return CriticFitResult(
        critic=critic,
        agreement_trajectory=agreement,
        holdout_discrepancy=holdout,
        config=config,
        objective_trajectory=objective_traj,
        train_discrepancy_trajectory=train_disc_traj,
    )


def default_search_grid(
    epochs: int = 50, batch_size: int = 256, loss_variant: str = "dis"
) -> list[TrainConfig]:
    """The declared default grid: lr {1e-1,1e-2,1e-3} x seeds {0,1,2} x both optimizers."""
    grid = []
    for lr in (1e-1, 1e-2, 1e-3):
        for seed in (0, 1, 2):
            for optimizer in ("sgd_momentum", "adam"):
                grid.append(
                    TrainConfig(
                        learning_rate=lr,
                        epochs=epochs,
                        batch_size=batch_size,
                        seed=seed,
                        optimizer=optimizer,
                        loss_variant=loss_variant,
                    )
                )
    return grid


def select_best_critic(results: list[CriticFitResult]) -> CriticFitResult:
    """The result with maximal holdout discrepancy; ties keep the earliest."""
    if not results:
        raise ValidationError("select_best_critic: empty result list")
    best = 0
    for i, r in enumerate(results):
        if r.holdout_discrepancy > results[best].holdout_discrepancy:
            best = i
    return results[best]


def search_critic(
    X_S_train,
    X_T_train,
    hat_preds_S_train,
    hat_preds_T_train,
    X_S_holdout,
    X_T_holdout,
    hat_preds_S_holdout,
    hat_preds_T_holdout,
    n_classes: int,
    configs: list[TrainConfig] | None = None,
    *,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    input_space: str = "features",
    track_objective: bool = False,
) -> tuple[CriticFitResult, list[CriticFitResult]]:
    """Train every configuration and select by holdout discrepancy."""
    if configs is None:
        configs = default_search_grid()
    results = [
        train_critic(
            X_S_train,
            X_T_train,
            hat_preds_S_train,
            hat_preds_T_train,
            n_classes,
            config,
            X_S_holdout=X_S_holdout,
            X_T_holdout=X_T_holdout,
            hat_preds_S_holdout=hat_preds_S_holdout,
            hat_preds_T_holdout=hat_preds_T_holdout,
            init=init,
            input_space=input_space,
            track_objective=track_objective,
        )
        for config in configs
    ]
    return select_best_critic(results), results


class DisagreementCriticSearch(BaseEstimator):
    """Estimator facade over the critic search.

    fit(Xs, Xt, preds_source, preds_target) splits both sample sets,
    trains the configuration grid on the training parts, and keeps the
    critic with the largest discrepancy on the held-out parts.
    """

    def __init__(
        self,
        configs=None,
        holdout_fraction: float = 0.2,
        random_state: int = 0,
        input_space: str = "features",
        track_objective: bool = False,
        n_classes: int | None = None,
    ):
        self.configs = configs
        self.holdout_fraction = holdout_fraction
        self.random_state = random_state
        self.input_space = input_space
        self.track_objective = track_objective
        self.n_classes = n_classes

    def fit(self, Xs, Xt, preds_source=None, preds_target=None):
        Xs = as_matrix("Xs", Xs)
        Xt = as_matrix("Xt", Xt, cols=Xs.shape[1])
        if preds_source is None or preds_target is None:
            raise ValidationError(
                "DisagreementCriticSearch.fit needs the classifier's predictions "
                "for both sample sets"
            )
        preds_source = as_labels("preds_source", preds_source, length=Xs.shape[0])
        preds_target = as_labels("preds_target", preds_target, length=Xt.shape[0])
        n_classes = self.n_classes
        if n_classes is None:
            n_classes = int(max(preds_source.max(), preds_target.max())) + 1
        check_fraction("holdout_fraction", self.holdout_fraction)

        def split(n, salt):
            perm = np.random.default_rng([self.random_state, salt]).permutation(n)
            n_holdout = int(round(n * self.holdout_fraction))
            if n_holdout < 1 or n_holdout >= n:
                raise ValidationError("DisagreementCriticSearch: degenerate holdout split")
            return perm[n_holdout:], perm[:n_holdout]

        s_tr, s_ho = split(Xs.shape[0], 0)
        t_tr, t_ho = split(Xt.shape[0], 1)
        best, results = search_critic(
            Xs[s_tr],
            Xt[t_tr],
            preds_source[s_tr],
            preds_target[t_tr],
            Xs[s_ho],
            Xt[t_ho],
            preds_source[s_ho],
            preds_target[t_ho],
            n_classes,
            self.configs,
            input_space=self.input_space,
            track_objective=self.track_objective,
        )
        self.best_result_ = best
        self.results_ = results
        self.critic_ = best.critic
        self.discrepancy_ = best.holdout_discrepancy
        self.n_classes_ = n_classes
        return self

    def predict(self, X):
        return self.critic_.predict(X)

    def decision_function(self, X):
        return self.critic_.decision_function(X)


def save_critic(base_path, critic: LinearCritic, config: TrainConfig | None = None) -> None:
    """Write <base>.weights.dsb, <base>.bias.dsb and a <base>.json sidecar."""
    base = Path(base_path)
    base.parent.mkdir(parents=True, exist_ok=True)
    write_matrix(f"{base}.weights.dsb", critic.weights)
    write_matrix(f"{base}.bias.dsb", critic.bias.reshape(1, -1))
    sidecar = {
        "input_space": critic.input_space,
        "config": None if config is None else asdict(config),
    }
    Path(f"{base}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_critic(base_path) -> tuple[LinearCritic, TrainConfig | None]:
    base = Path(base_path)
    sidecar_path = Path(f"{base}.json")
    if not sidecar_path.exists():
        raise ValidationError(f"load_critic: sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    weights = read_matrix(f"{base}.weights.dsb")
    bias = read_matrix(f"{base}.bias.dsb").reshape(-1)
    critic = LinearCritic(weights=weights, bias=bias, input_space=sidecar["input_space"])
    config = None if sidecar.get("config") is None else TrainConfig(**sidecar["config"])
    return critic, config
