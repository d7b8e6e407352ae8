"""Synthetic shifts, evaluation metrics, LOOCV calibration, and the
benchmark orchestration behind the command-line interface."""

from .benchmark import (
    derive_seed,
    evaluate_shift,
    fit_linear_probe,
    make_synth_suite,
    run_benchmark,
)
from .metrics import (
    AdjustmentParams,
    EvaluationRecord,
    LoocvFold,
    MetricsSummary,
    apply_adjustment,
    canonical_json,
    conditional_overestimation,
    coverage,
    fit_adjustment,
    loocv_adjust,
    mae,
    read_records_jsonl,
    write_records_jsonl,
)
from .synth import SynthConfig, generate_synthetic_shift

__all__ = [
    "AdjustmentParams",
    "EvaluationRecord",
    "LoocvFold",
    "MetricsSummary",
    "SynthConfig",
    "apply_adjustment",
    "canonical_json",
    "conditional_overestimation",
    "coverage",
    "derive_seed",
    "evaluate_shift",
    "fit_adjustment",
    "fit_linear_probe",
    "generate_synthetic_shift",
    "loocv_adjust",
    "mae",
    "make_synth_suite",
    "read_records_jsonl",
    "run_benchmark",
    "write_records_jsonl",
]
