"""Upper bounds and estimators for classifier error under distribution shift.

The bound trains linear critics to maximize the disagreement discrepancy
(how much more a critic disagrees with the classifier on target data than
on source data) and adds a finite-sample concentration term. Baseline
estimators, synthetic shift generation, metrics, and a benchmark harness
round out the toolkit; `shiftbound --help` exposes the same flows on the
command line.
"""

from .baselines import (
    ErrorEstimate,
    TemperatureScaler,
    ac_estimate,
    atc_estimate,
    cot_estimate,
    doc_estimate,
    fit_temperature,
)
from .bound import (
    BoundReport,
    assemble_bound,
    assumption_certificate,
    concentration_term,
    dis2_bound,
)
from .containers import read_labels, read_matrix, write_labels, write_matrix
from .critic import (
    CriticFitResult,
    DisagreementCriticSearch,
    LinearCritic,
    TrainConfig,
    default_search_grid,
    empirical_discrepancy,
    load_critic,
    save_critic,
    search_critic,
    select_best_critic,
    train_critic,
)
from .data import (
    EmbeddingDataset,
    LinearHead,
    ShiftManifest,
    SplitSpec,
    dataset_logits,
    load_manifest,
    save_manifest,
    split_holdout,
)
from .harness import (
    AdjustmentParams,
    EvaluationRecord,
    MetricsSummary,
    SynthConfig,
    conditional_overestimation,
    coverage,
    evaluate_shift,
    fit_adjustment,
    generate_synthetic_shift,
    loocv_adjust,
    mae,
    make_synth_suite,
    run_benchmark,
)
from .losses import (
    dbat_loss,
    disagreement_loss,
    logistic_loss,
    neg_xent_loss,
)
from .reduction import (
    PcaBasis,
    SweepRecord,
    SweepResult,
    cumulative_l1_ratio,
    fit_pca,
    sweep_pcs,
)
from .validation import DivergenceError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "AdjustmentParams",
    "BoundReport",
    "CriticFitResult",
    "DisagreementCriticSearch",
    "DivergenceError",
    "EmbeddingDataset",
    "ErrorEstimate",
    "EvaluationRecord",
    "LinearCritic",
    "LinearHead",
    "MetricsSummary",
    "PcaBasis",
    "ShiftManifest",
    "SplitSpec",
    "SweepRecord",
    "SweepResult",
    "SynthConfig",
    "TemperatureScaler",
    "TrainConfig",
    "ValidationError",
    "ac_estimate",
    "assemble_bound",
    "assumption_certificate",
    "atc_estimate",
    "concentration_term",
    "conditional_overestimation",
    "cot_estimate",
    "coverage",
    "cumulative_l1_ratio",
    "dataset_logits",
    "dbat_loss",
    "default_search_grid",
    "dis2_bound",
    "disagreement_loss",
    "doc_estimate",
    "empirical_discrepancy",
    "evaluate_shift",
    "fit_adjustment",
    "fit_pca",
    "fit_temperature",
    "generate_synthetic_shift",
    "load_critic",
    "load_manifest",
    "logistic_loss",
    "loocv_adjust",
    "mae",
    "make_synth_suite",
    "neg_xent_loss",
    "read_labels",
    "read_matrix",
    "run_benchmark",
    "save_critic",
    "save_manifest",
    "search_critic",
    "select_best_critic",
    "split_holdout",
    "sweep_pcs",
    "train_critic",
    "write_labels",
    "write_matrix",
]
