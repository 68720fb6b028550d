"""Command-line entry point.

Subcommands: synth, sample, entropy, eval, uq-eval, features, classify,
sweep, loss-check, report. Every command reads/writes VGF volumes, CSV
tables or deterministic JSON reports; nothing is rendered graphically.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import defaults
from .classify import (
    bootstrap_eval,
    confusion_matrix,
    predict_proba_table,
    rfe,
    stratified_split,
)
from .grid import LN2, BinaryMask, ProbMap, UncertaintyMap, binarize
from .losses import gradient_check_suite
from .reports import dump_json, evaluate_subject, run_pipeline, TOOL_VERSION
from .ring_features import (
    FeatureTable,
    extract_features,
    normalize_table,
    read_feature_csv,
    ring_partition,
    write_feature_csv,
)
from .stochastic import (
    SampleSet,
    predictive_entropy,
    read_logit_model,
    sample_logits,
    write_logit_model,
)
from .synth import SynthSpec, generate
from .uq_metrics import tau_sweep
from .vgf import read_vgf, write_vgf


def _read_mask(path) -> BinaryMask:
    g = read_vgf(path)
    return BinaryMask(g.data, g.spacing)


def _read_prob(path) -> ProbMap:
    g = read_vgf(path)
    return ProbMap(np.asarray(g.data, dtype=np.float64), g.spacing)


def _read_samples(paths) -> SampleSet:
    return SampleSet([_read_prob(p) for p in paths], provenance="external")


def cmd_synth(args) -> int:
    spec_cfg = json.loads(Path(args.spec).read_text()) if args.spec else {}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SynthSpec(**{**spec_cfg, "seed": args.seed if args.seed is not None
                        else spec_cfg.get("seed", 0)})
    subject = generate(spec)
    write_vgf(out / "brain.vgf", subject.brain, dtype="u8")
    write_vgf(out / "ventricles.vgf", subject.ventricles, dtype="u8")
    write_vgf(out / "gt.vgf", subject.gt_lesions, dtype="u8")
    manifest = write_logit_model(out, subject.logit, name="logit")
    bundle = {
        "brain": "brain.vgf",
        "ventricles": "ventricles.vgf",
        "gt": "gt.vgf",
        "logit_manifest": manifest.name,
        "fazekas_proxy": {"deep": subject.fazekas_proxy[0],
                          "pv": subject.fazekas_proxy[1]},
        "seed": spec.seed,
    }
    (out / "subject.json").write_text(dump_json(bundle))
    print(f"wrote synthetic subject to {out}")
    return 0


def cmd_sample(args) -> int:
    model = read_logit_model(args.model)
    samples = sample_logits(model, args.n, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, member in enumerate(samples):
        write_vgf(out / f"sample{i:03d}.vgf", member)
    write_vgf(out / "mean_prob.vgf", samples.mean_prob())
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def cmd_entropy(args) -> int:
    if args.samples:
        source = _read_samples(args.samples)
    else:
        source = _read_prob(args.prob)
    write_vgf(args.out, predictive_entropy(source))
    print(f"wrote entropy map to {args.out}")
    return 0


def cmd_eval(args) -> int:
    gt = _read_mask(args.gt)
    if args.samples:
        samples = _read_samples(args.samples)
    else:
        samples = SampleSet([_read_prob(args.pred)], provenance="external")
    row = evaluate_subject(samples, gt, threshold=args.threshold,
                           connectivity=args.connectivity)
    report = {
        "tool_version": TOOL_VERSION,
        "config": {**defaults.config_echo(),
                   "binarize_threshold": args.threshold,
                   "connectivity": args.connectivity},
        "subjects": {args.id: {"metrics": row}},
    }
    text = dump_json(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_uq_eval(args) -> int:
    gt = _read_mask(args.gt)
    if args.samples:
        samples = _read_samples(args.samples)
        pred = binarize(samples.mean_prob(), args.threshold)
        unc = predictive_entropy(samples)
    else:
        prob = _read_prob(args.pred)
        pred = binarize(prob, args.threshold)
        unc = predictive_entropy(prob)
    taus = np.linspace(0.0, LN2, args.taus)
    rows = tau_sweep(pred, gt, unc, taus, patch=args.patch,
                     acc_thresh=args.acc_thresh, connectivity=args.connectivity,
                     mode=args.patch_mode)
    fields = list(rows[0].keys())
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                        for k, v in r.items()})
    print(f"wrote tau sweep ({len(rows)} rows) to {args.out}")
    return 0


def cmd_features(args) -> int:
    seg = _read_prob(args.seg)
    uq_grid = read_vgf(args.uq)
    uq = UncertaintyMap(uq_grid.data, uq_grid.spacing)
    ventricles = _read_mask(args.ventricles)
    brain = _read_mask(args.brain)
    rings = ring_partition(ventricles, brain)
    samples = _read_samples(args.samples) if args.samples else None
    fv = extract_features(seg, uq, rings, args.t, samples=samples,
                          connectivity=args.connectivity)
    tbl = FeatureTable(feature_names=fv.names(),
                       rows={args.id: fv.as_array(fv.names())})
    write_feature_csv(args.out, tbl)
    print(f"wrote {len(fv.names())} features for {args.id} to {args.out}")
    return 0


def _eval_summary_json(summary, extra: dict) -> dict:
    return {
        "tool_version": TOOL_VERSION,
        "config": {**defaults.config_echo(), **extra},
        "metrics": summary.as_dict(),
    }


def cmd_classify(args) -> int:
    tbl = read_feature_csv(args.table)
    if tbl.targets is None:
        print("error: feature table has no target column", file=sys.stderr)
        return 2
    k = args.k if args.k is not None else (
        defaults.QC_K if args.target == "qc" else defaults.FAZEKAS_K)
    summary = bootstrap_eval(tbl, split_ratio=args.split, n_boot=args.boot,
                             seed=args.seed, k=k, reg=args.reg)
    out = _eval_summary_json(summary, {
        "target": args.target, "feature_threshold": args.t, "k": k,
        "classifier_reg": args.reg, "bootstrap_splits": args.boot,
        "train_fraction": args.split, "seed": args.seed,
    })
    Path(args.out).write_text(dump_json(out))

    # Confusion matrix for one designated split (the seed's first resample).
    labels = tbl.labels()
    rng = np.random.default_rng(np.random.SeedSequence(args.seed).spawn(1)[0])
    train_idx, test_idx = stratified_split(labels, args.split, rng)
    ids = np.array(tbl.subject_ids, dtype=object)
    normed, _ = normalize_table(tbl, fit_rows=list(ids[train_idx]))
    train_tbl = FeatureTable(feature_names=list(normed.feature_names),
                             rows={s: normed.rows[s] for s in ids[train_idx]},
                             targets={s: tbl.targets[s] for s in ids[train_idx]})
    _, model = rfe(train_tbl, k=k, reg=args.reg)
    probs = predict_proba_table(model, normed, subject_ids=list(ids[test_idx]))
    pred = model.classes[np.argmax(probs, axis=1)]
    true = labels[test_idx]
    cm = confusion_matrix(pred, true, model.classes)
    cm_path = Path(args.out).with_suffix(".confusion.csv")
    with open(cm_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["true\\pred", *model.classes.tolist()])
        for i, c in enumerate(model.classes):
            w.writerow([c, *cm[i].tolist()])
    print(f"wrote classifier summary to {args.out} and confusion matrix to {cm_path}")
    return 0


def cmd_sweep(args) -> int:
    tables = {}
    for pair in args.tables:
        t_str, path = pair.split("=", 1)
        tables[float(t_str)] = read_feature_csv(path)
    if args.target == "qc":
        k_lo, k_hi = defaults.QC_K_RANGE
    else:
        k_lo, k_hi = defaults.FAZEKAS_K_RANGE
    if args.k_min is not None:
        k_lo = args.k_min
    if args.k_max is not None:
        k_hi = args.k_max
    rows = []
    for t in sorted(tables):
        tbl = tables[t]
        for k in range(k_lo, min(k_hi, len(tbl.feature_names)) + 1):
            summary = bootstrap_eval(tbl, split_ratio=args.split, n_boot=args.boot,
                                     seed=args.seed, k=k, reg=args.reg)
            d = summary.as_dict()
            rows.append({
                "t": t, "k": k,
                **{f"{m}_{fld}": (None if d[m] is None else d[m][fld])
                   for m in ("kappa", "balanced_accuracy", "auroc", "root_brier")
                   for fld in ("mean", "ci_low", "ci_high")},
            })
    fields = list(rows[0].keys())
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({key: ("" if v is None else repr(v) if isinstance(v, float) else v)
                        for key, v in r.items()})
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def cmd_loss_check(args) -> int:
    rows = gradient_check_suite(seed=args.seed, points=args.points)
    width = max(len(name) for name, _, _ in rows)
    all_ok = True
    for name, err, ok in rows:
        all_ok &= ok
        print(f"{name:<{width}}  max rel err {err:.3e}  {'PASS' if ok else 'FAIL'}")
    return 0 if all_ok else 1


def cmd_report(args) -> int:
    config = json.loads(Path(args.config).read_text())
    status, report = run_pipeline(config, base_dir=Path(args.config).parent)
    out = Path(args.out) if args.out else Path(args.config).with_suffix(".report.json")
    out.write_text(dump_json(report))
    print(f"wrote cohort report to {out} (exit {status})")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seguq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic subject bundle")
    s.add_argument("--spec", help="JSON file of SynthSpec overrides")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("sample", help="draw probability samples from a logit model")
    s.add_argument("--model", required=True, help="logit model manifest JSON")
    s.add_argument("--n", type=int, default=defaults.SAMPLES_PER_EVAL)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("entropy", help="predictive entropy map")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--samples", nargs="+")
    src.add_argument("--prob")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_entropy)

    s = sub.add_parser("eval", help="segmentation metrics for one subject")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--samples", nargs="+")
    src.add_argument("--pred")
    s.add_argument("--gt", required=True)
    s.add_argument("--id", default="subject")
    s.add_argument("--threshold", type=float, default=defaults.BINARIZE_THRESHOLD)
    s.add_argument("--connectivity", type=int, default=defaults.CONNECTIVITY)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("uq-eval", help="uncertainty quality sweep over tau")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--samples", nargs="+")
    src.add_argument("--pred")
    s.add_argument("--gt", required=True)
    s.add_argument("--threshold", type=float, default=defaults.BINARIZE_THRESHOLD)
    s.add_argument("--taus", type=int, default=50)
    s.add_argument("--patch", type=int, default=defaults.PATCH_SIZE)
    s.add_argument("--acc-thresh", type=float, default=defaults.PATCH_ACC_THRESHOLD)
    s.add_argument("--patch-mode", choices=("tile", "sliding"), default="tile")
    s.add_argument("--connectivity", type=int, default=defaults.CONNECTIVITY)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_uq_eval)

    s = sub.add_parser("features", help="ring feature row for one subject")
    s.add_argument("--seg", required=True)
    s.add_argument("--uq", required=True)
    s.add_argument("--ventricles", required=True)
    s.add_argument("--brain", required=True)
    s.add_argument("--samples", nargs="*")
    s.add_argument("--t", type=float, default=defaults.FEATURE_THRESHOLD)
    s.add_argument("--connectivity", type=int, default=defaults.CONNECTIVITY)
    s.add_argument("--id", default="subject")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_features)

    s = sub.add_parser("classify", help="bootstrap-evaluated classifier")
    s.add_argument("--table", required=True, help="feature CSV with target column")
    s.add_argument("--target", choices=("deep", "pv", "qc"), required=True)
    s.add_argument("--t", type=float, default=defaults.FEATURE_THRESHOLD)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--reg", type=float, default=defaults.CLASSIFIER_REG)
    s.add_argument("--boot", type=int, default=defaults.BOOTSTRAP_SPLITS)
    s.add_argument("--split", type=float, default=defaults.TRAIN_FRACTION)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_classify)

    s = sub.add_parser("sweep", help="grid of classifier runs over t and k")
    s.add_argument("--tables", nargs="+", required=True,
                   help="t=path pairs of feature CSVs extracted per threshold")
    s.add_argument("--target", choices=("deep", "pv", "qc"), required=True)
    s.add_argument("--k-min", type=int, default=None)
    s.add_argument("--k-max", type=int, default=None)
    s.add_argument("--reg", type=float, default=defaults.CLASSIFIER_REG)
    s.add_argument("--boot", type=int, default=30)
    s.add_argument("--split", type=float, default=defaults.TRAIN_FRACTION)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("loss-check", help="gradients vs central finite differences")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--points", type=int, default=10)
    s.set_defaults(fn=cmd_loss_check)

    s = sub.add_parser("report", help="run the full pipeline from a cohort config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
