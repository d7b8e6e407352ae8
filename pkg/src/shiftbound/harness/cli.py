"""Command-line interface.

One verb per pipeline stage:

  synth      generate a synthetic shift and write its manifest + splits
  bound      train critics on a manifest and print the error bound
  estimate   run the confidence/transport baselines on a manifest
  sweep-pcs  bound across a ladder of principal-component projections
  evaluate   run a full benchmark suite, writing records + summary
  calibrate  LOOCV shift/scale adjustment over recorded results

Exit codes: 0 success, 1 validation/input error, 2 partial per-shift
failures during evaluate.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..bound import dis2_bound
from ..containers import write_labels, write_matrix
from ..critic import DisagreementCriticSearch, save_critic
from ..data import (
    ShiftManifest,
    SplitSpec,
    argmax_rows,
    dataset_logits,
    load_manifest,
    save_manifest,
    split_holdout,
)
from ..baselines import (
    ac_estimate,
    atc_estimate,
    cot_estimate,
    doc_estimate,
    fit_temperature,
)
from ..reduction import DEFAULT_K_LIST, sweep_pcs
from ..validation import ValidationError
from .benchmark import (
    DEFAULT_METHODS,
    derive_seed,
    evaluate_shift,
    fit_linear_probe,
    make_synth_suite,
    run_benchmark,
)
from .metrics import canonical_json, loocv_adjust, read_records_jsonl, write_records_jsonl
from .synth import SynthConfig, generate_synthetic_shift

INPUT_SPACES = {"features": "features", "logits": "logits", "pcs": "top_pcs"}


def _global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--delta", type=float, default=0.01,
                        help="bound failure probability (default 0.01)")
    parser.add_argument("--seed", type=int, default=0,
                        help="master seed; all randomness derives from it")
    parser.add_argument("--holdout-fraction", type=float, default=0.2,
                        help="fraction held out for validation splits")
    parser.add_argument("--input-space", choices=sorted(INPUT_SPACES),
                        default="logits", help="critic input representation")
    parser.add_argument("--pc-k", type=int, default=16,
                        help="with --input-space pcs, keep floor(d/k) components")
    parser.add_argument("--out", type=Path, default=None,
                        help="output directory (created if missing)")


def _out_dir(args) -> Path:
    if args.out is None:
        raise ValidationError("this command requires --out <dir>")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _write_json(path: Path, obj) -> None:
    path.write_text(canonical_json(obj) + "\n", encoding="utf-8")


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")], dtype=np.float64)


def _write_split(out_dir: Path, role: str, dataset) -> SplitSpec:
    features = f"{role}.features.dsb"
    labels = f"{role}.labels.dsb"
    write_matrix(out_dir / features, dataset.features)
    write_labels(out_dir / labels, dataset.labels)
    return SplitSpec(role=role, features_path=features, labels_path=labels)


def _load_shift(args):
    """Manifest -> (source/target train+val datasets, head).

    Missing validation roles fall back to a seeded holdout split of the
    train roles. A head is fit on source train unless every split already
    carries logits.
    """
    manifest = load_manifest(args.manifest)
    s_train = manifest.load_split("source_train")
    t_train = manifest.load_split("target_train")
    if manifest.has_role("source_val"):
        s_val = manifest.load_split("source_val")
    else:
        s_train, s_val = split_holdout(s_train, args.holdout_fraction,
                                       derive_seed(args.seed, "source_split"))
    if manifest.has_role("target_val"):
        t_val = manifest.load_split("target_val")
    else:
        t_train, t_val = split_holdout(t_train, args.holdout_fraction,
                                       derive_seed(args.seed, "target_split"))
    head = None
    if s_train.logits is None:
        head = fit_linear_probe(s_train)
    return manifest, s_train, s_val, t_train, t_val, head


def _cmd_synth(args) -> int:
    out = _out_dir(args)
    config = SynthConfig(
        n_classes=args.classes,
        dim=args.dim,
        n_source=args.n_source,
        n_target=args.n_target,
        separation=args.separation,
        shift_scale=args.shift_scale,
        shift_direction=(None if args.shift_direction is None
                         else _parse_floats(args.shift_direction)),
        target_weights=(None if args.weights is None
                        else _parse_floats(args.weights)),
        rotation_angle=args.rotation,
        noise_scale=args.noise,
        seed=args.seed,
    )
    source, target = generate_synthetic_shift(config)
    s_train, s_val = split_holdout(source, args.holdout_fraction,
                                   derive_seed(args.seed, "source_split"))
    t_train, t_val = split_holdout(target, args.holdout_fraction,
                                   derive_seed(args.seed, "target_split"))
    splits = [
        _write_split(out, "source_train", s_train),
        _write_split(out, "source_val", s_val),
        _write_split(out, "target_train", t_train),
        _write_split(out, "target_val", t_val),
    ]
    manifest = ShiftManifest(name=args.name, dim=config.dim,
                             classes=config.n_classes, splits=splits,
                             delta=args.delta, root=out)
    path = out / "manifest.json"
    save_manifest(manifest, path)
    print(path)
    return 0


def _search_critic(args, s_train, t_train, head, n_classes):
    from ..reduction import fit_pca

    space = INPUT_SPACES[args.input_space]
    pca = None
    if space == "top_pcs":
        full = fit_pca(np.vstack([s_train.features, t_train.features]))
        pca = full.truncated(max(1, s_train.d // args.pc_k))
        X_s, X_t = pca.transform(s_train.features), pca.transform(t_train.features)
    elif space == "features":
        X_s, X_t = s_train.features, t_train.features
    else:
        X_s = dataset_logits(s_train, head)
        X_t = dataset_logits(t_train, head)
    search = DisagreementCriticSearch(
        random_state=derive_seed(args.seed, "critic"), input_space=space,
        n_classes=n_classes,
    )
    search.fit(X_s, X_t,
               preds_source=argmax_rows(dataset_logits(s_train, head)),
               preds_target=argmax_rows(dataset_logits(t_train, head)))
    return search, pca


def _cmd_bound(args) -> int:
    manifest, s_train, s_val, t_train, t_val, head = _load_shift(args)
    search, pca = _search_critic(args, s_train, t_train, head, manifest.classes)
    report = dis2_bound(s_val, t_val, search.critic_, head=head,
                        delta=args.delta, pca=pca)
    print(report.render_line(label=manifest.name))
    if args.out is not None:
        out = _out_dir(args)
        _write_json(out / "bound.json", report.to_dict())
        save_critic(out / "critic", search.critic_,
                    search.best_result_.config)
    return 0


def _cmd_estimate(args) -> int:
    _, s_train, s_val, t_train, t_val, head = _load_shift(args)
    z_s = dataset_logits(s_val, head)
    z_t = dataset_logits(t_val, head)
    if s_val.labels is None:
        raise ValidationError("estimate: source validation split must be labeled")
    scaler = None if args.no_calibrate else fit_temperature(z_s, s_val.labels)
    wanted = [m.strip() for m in args.methods.split(",") if m.strip()]
    estimates = {}
    for method in wanted:
        if method == "ac":
            estimates[method] = ac_estimate(z_t, scaler=scaler)
        elif method == "doc":
            estimates[method] = doc_estimate(z_s, s_val.labels, z_t, scaler=scaler)
        elif method == "atc_ne":
            estimates[method] = atc_estimate(z_s, s_val.labels, z_t,
                                             score="neg_entropy", scaler=scaler)
        elif method == "atc_mc":
            estimates[method] = atc_estimate(z_s, s_val.labels, z_t,
                                             score="max_confidence", scaler=scaler)
        elif method == "cot":
            estimates[method] = cot_estimate(s_val.labels, z_t, scaler=scaler,
                                             seed=derive_seed(args.seed, "cot"))
        else:
            raise ValidationError(f"estimate: unknown method {method!r}")
    for method, est in estimates.items():
        print(f"{method}: predicted_error={est.predicted_error:.4f}")
    if args.out is not None:
        out = _out_dir(args)
        _write_json(out / "estimates.json",
                    {m: e.to_dict() for m, e in estimates.items()})
    return 0


def _cmd_sweep_pcs(args) -> int:
    manifest, s_train, s_val, t_train, t_val, head = _load_shift(args)
    k_list = ([int(v) for v in args.k_list.split(",")]
              if args.k_list else list(DEFAULT_K_LIST))
    result = sweep_pcs(
        s_train, t_train, s_val, t_val, head=head, k_list=k_list,
        score_threshold=args.score_threshold, delta=args.delta, seed=args.seed,
    )
    for record in result.records:
        print(f"k={record.k:<4d} p={record.p:<5d} "
              f"bound={record.bound_report.bound_with_delta:.4f} "
              f"validity={record.validity_score:.4f}")
    lr = result.logits_record
    print(f"logits    p={lr.p:<5d} bound={lr.bound_report.bound_with_delta:.4f} "
          f"validity={lr.validity_score:.4f}")
    if result.selected is not None:
        sel = result.selected
        tag = "logits" if sel.k is None else f"k={sel.k}"
        print(f"selected: {tag} bound={sel.bound_report.bound_with_delta:.4f}")
    if args.out is not None:
        _write_json(_out_dir(args) / "sweep.json", result.to_dict())
    return 0


def _cmd_evaluate(args) -> int:
    out = _out_dir(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.manifest is not None:
        # evaluate_shift splits internally, so hand it the train roles whole
        manifest = load_manifest(args.manifest)
        shifts = [(manifest.name, manifest.load_split("source_train"),
                   manifest.load_split("target_train"))]
    else:
        shifts = make_synth_suite(args.synth_suite, seed=args.seed,
                                  n_per_side=args.n_per_side, dim=args.dim)
    records, summary, failures = run_benchmark(
        shifts, methods=methods, delta=args.delta, seed=args.seed,
        holdout_fraction=args.holdout_fraction,
        input_space=INPUT_SPACES[args.input_space], pc_k=args.pc_k,
    )
    write_records_jsonl(out / "records.jsonl", records)
    _write_json(out / "summary.json", summary.to_dict())
    for method, row in summary.methods.items():
        print(f"{method}: mae={row['mae']:.4f} coverage={row['coverage']:.4f} "
              f"overestimation={row['conditional_overestimation']:.4f}")
    if failures:
        _write_json(out / "failures.json", failures)
        for failure in failures:
            print(f"FAILED {failure['shift_id']}: {failure['error']}",
                  file=sys.stderr)
        return 2
    return 0


def _cmd_calibrate(args) -> int:
    records = read_records_jsonl(args.records)
    if not records:
        raise ValidationError("calibrate: no records found")
    n_groups = args.groups
    if n_groups < 2:
        raise ValidationError("calibrate: need --groups >= 2")
    records = sorted(records, key=lambda r: r.shift_id)
    groups = {f"group-{g:02d}": [] for g in range(n_groups)}
    for i, record in enumerate(records):
        groups[f"group-{i % n_groups:02d}"].append(record)
    folds = loocv_adjust(groups, args.method, alpha=args.alpha, mode=args.mode)
    for fold in folds:
        print(f"{fold.held_out}: {fold.params.mode}={fold.params.value:.4f} "
              f"held-out coverage={fold.coverage:.4f}"
              + (" [saturated]" if fold.params.saturated else ""))
    if args.out is not None:
        _write_json(_out_dir(args) / "calibration.json",
                    [f.to_dict() for f in folds])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftbound",
        description="Error bounds and estimators for classifiers under "
                    "distribution shift.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic shift dataset")
    _global_flags(p)
    p.add_argument("--name", default="synth")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n-source", type=int, default=2000)
    p.add_argument("--n-target", type=int, default=2000)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--shift-scale", type=float, default=0.0)
    p.add_argument("--shift-direction", default=None,
                   help="comma-separated d-vector; default random")
    p.add_argument("--weights", default=None,
                   help="comma-separated target class weights")
    p.add_argument("--rotation", type=float, default=0.0,
                   help="target rotation angle in radians")
    p.add_argument("--noise", type=float, default=1.0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("bound", help="compute the disagreement-discrepancy bound")
    _global_flags(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("estimate", help="run baseline error estimators")
    _global_flags(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--methods", default="ac,doc,atc_ne,cot")
    p.add_argument("--no-calibrate", action="store_true",
                   help="skip temperature scaling")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("sweep-pcs", help="bound across PCA projection sizes")
    _global_flags(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--k-list", default=None,
                   help="comma-separated divisors (default 1,4,16,32,64,128)")
    p.add_argument("--score-threshold", type=float, default=None)
    p.set_defaults(func=_cmd_sweep_pcs)

    p = sub.add_parser("evaluate", help="run a benchmark suite")
    _global_flags(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--manifest", type=Path, default=None)
    group.add_argument("--synth-suite", type=int, default=None,
                       help="number of synthetic shifts to generate")
    p.add_argument("--methods", default=",".join(DEFAULT_METHODS))
    p.add_argument("--n-per-side", type=int, default=2000)
    p.add_argument("--dim", type=int, default=16)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("calibrate", help="LOOCV shift/scale adjustment")
    _global_flags(p)
    p.add_argument("--records", type=Path, required=True,
                   help="records.jsonl from evaluate")
    p.add_argument("--method", required=True)
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--mode", choices=("shift", "scale"), default="shift")
    p.add_argument("--groups", type=int, default=5,
                   help="round-robin record groups for cross-validation")
    p.set_defaults(func=_cmd_calibrate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
