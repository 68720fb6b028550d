"""Machine-readable reports and the cohort pipeline driver.

Reports are JSON with a stable key set: metrics that cannot be computed
are explicit nulls with a reason code, never silently absent. Floats are
serialised with 17 significant digits so a rerun with the same config and
seed produces byte-identical files.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import defaults
from .errors import ConfigError, EmptyGroundTruthError, SegUQError
from .grid import BinaryMask, ProbMap, binarize
from .seg_metrics import aggregate, avd_percent, component_f1, dice, ged, top_scores
from .stochastic import SampleSet, predictive_entropy, read_logit_model, sample_logits
from .uq_metrics import error_map, sueo, tau_sweep
from .vgf import read_vgf

TOOL_VERSION = "seguq 0.1.0"


def dump_json(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""

    def fmt(x, depth):
        pad = " " * (indent * depth)
        pad_in = " " * (indent * (depth + 1))
        if x is None:
            return "null"
        if isinstance(x, bool):
            return "true" if x else "false"
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        if isinstance(x, (float, np.floating)):
            value = float(x)
            if value != value or value in (float("inf"), float("-inf")):
                raise ValueError("reports must not contain NaN/Inf; use null")
            return format(value, ".17g")
        if isinstance(x, str):
            return json.dumps(x)
        if isinstance(x, dict):
            if not x:
                return "{}"
            items = sorted(x.items(), key=lambda kv: kv[0])
            body = ",\n".join(
                f'{pad_in}"{k}": {fmt(v, depth + 1)}' for k, v in items
            )
            return "{\n" + body + "\n" + pad + "}"
        if isinstance(x, (list, tuple)):
            seq = list(x)
            if not seq:
                return "[]"
            body = ",\n".join(f"{pad_in}{fmt(v, depth + 1)}" for v in seq)
            return "[\n" + body + "\n" + pad + "]"
        raise TypeError(f"cannot serialise {type(x).__name__}")

    return fmt(obj, 0) + "\n"


def max_workers() -> int:
    """Worker cap: SEG_UQ_THREADS env var, default 1 (fully deterministic)."""
    raw = os.environ.get("SEG_UQ_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SEG_UQ_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def missing(reason: str) -> dict:
    return {"value": None, "reason": reason}


def present(value) -> dict:
    return {"value": value, "reason": None}


def evaluate_subject(
    samples: SampleSet,
    gt: BinaryMask,
    threshold: float = defaults.BINARIZE_THRESHOLD,
    connectivity: int = defaults.CONNECTIVITY,
    gt_set: SampleSet | None = None,
) -> dict:
    """All segmentation + sUEO metrics for one subject's sample set.

    Every metric slot is ``{"value": ..., "reason": ...}``; metrics with an
    undefined denominator report value null plus a reason code.
    """
    mean_prob = samples.mean_prob()
    pred = binarize(mean_prob, threshold)
    unc = predictive_entropy(samples)
    row = {
        "dice": present(dice(pred, gt)),
        "component_f1": present(component_f1(pred, gt, connectivity)),
    }
    try:
        row["avd_percent"] = present(avd_percent(pred, gt))
    except EmptyGroundTruthError:
        row["avd_percent"] = missing("empty_ground_truth")
    try:
        top_d, top_a = top_scores(samples, gt, threshold)
        row["top_dice"] = present(top_d)
        row["top_avd_percent"] = present(top_a)
    except EmptyGroundTruthError:
        row["top_dice"] = present(max(dice(binarize(s, threshold), gt) for s in samples))
        row["top_avd_percent"] = missing("empty_ground_truth")
    reference = gt_set if gt_set is not None else SampleSet([gt])
    row["ged"] = present(ged(samples, reference, threshold))
    err = error_map(pred, gt)
    if err.count == 0 and float(np.asarray(unc.data).sum()) == 0.0:
        row["sueo"] = missing("degenerate_denominator")
    else:
        row["sueo"] = present(sueo(unc, err))
    return row


def aggregate_block(per_run_rows: list[dict]) -> dict:
    """Mean and both std conventions per metric over runs x subjects.

    ``per_run_rows`` is a list (one entry per run) of {subject_id: row}
    maps. Subjects missing a metric in any run are excluded from that
    metric's matrix.
    """
    metrics = sorted({m for run in per_run_rows for row in run.values() for m in row})
    subject_ids = sorted({sid for run in per_run_rows for sid in run})
    out = {}
    for m in metrics:
        cols = []
        for sid in subject_ids:
            vals = []
            for run in per_run_rows:
                cell = run.get(sid, {}).get(m)
                if cell is None or cell["value"] is None:
                    break
                vals.append(cell["value"])
            else:
                cols.append(vals)
        if not cols:
            out[m] = {"mean": None, "std_over_runs": None,
                      "std_over_subjects": None, "reason": "no_values"}
            continue
        matrix = np.array(cols, dtype=np.float64).T  # runs x subjects
        stats = aggregate(matrix)
        out[m] = {
            "mean": stats.mean,
            "std_over_runs": stats.std_over_runs,
            "std_over_subjects": stats.std_over_subjects,
            "reason": None,
        }
    return out


@dataclass
class SubjectResult:
    subject_id: str
    row: dict | None
    sweep: list | None
    error: str | None


def _load_subject_samples(entry: dict, base: Path, n_samples: int, seed) -> SampleSet:
    if "logit_manifest" in entry:
        model = read_logit_model(base / entry["logit_manifest"])
        return sample_logits(model, n_samples, seed)
    if "samples" in entry:
        members = []
        for p in entry["samples"]:
            g = read_vgf(base / p)
            members.append(ProbMap(g.data, g.spacing))
        return SampleSet(members, provenance="external")
    raise ConfigError(f"subject {entry.get('id')!r} has neither logit_manifest nor samples")


def _subject_seed(seed: int, subject_id: str) -> int:
    # Stable per-subject sub-seed; independent of cohort order.
    digest = np.frombuffer(subject_id.encode("utf-8"), dtype=np.uint8)
    return int(np.random.SeedSequence([seed, int(digest.sum()), len(digest)])
               .generate_state(1)[0])


def run_pipeline(config: dict, base_dir=".") -> tuple[int, dict]:
    """Run sample -> entropy -> eval -> uq-eval for every configured subject.

    Returns (exit_status, report). Per-subject failures are recorded with
    the subject id and do not abort the cohort; the exit status is nonzero
    iff any stage errored.
    """
    base = Path(base_dir)
    subjects = config.get("subjects", [])
    seed = int(config.get("seed", 0))
    threshold = float(config.get("binarize_threshold", defaults.BINARIZE_THRESHOLD))
    n_samples = int(config.get("samples_per_eval", defaults.SAMPLES_PER_EVAL))
    connectivity = int(config.get("connectivity", defaults.CONNECTIVITY))
    n_taus = int(config.get("tau_grid", 10))
    taus = np.linspace(0.0, float(np.log(2.0)), n_taus)

    def work(entry) -> SubjectResult:
        sid = str(entry.get("id"))
        try:
            gt_grid = read_vgf(base / entry["gt"])
            gt = BinaryMask(gt_grid.data, gt_grid.spacing)
            samples = _load_subject_samples(entry, base, n_samples,
                                            _subject_seed(seed, sid))
            row = evaluate_subject(samples, gt, threshold, connectivity)
            pred = binarize(samples.mean_prob(), threshold)
            unc = predictive_entropy(samples)
            sweep = tau_sweep(pred, gt, unc, taus, connectivity=connectivity)
            return SubjectResult(sid, row, sweep, None)
        except (SegUQError, OSError, KeyError, ValueError) as exc:
            return SubjectResult(sid, None, None, f"{type(exc).__name__}: {exc}")

    workers = max_workers()
    if workers == 1:
        results = [work(e) for e in subjects]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, subjects))
    results.sort(key=lambda r: r.subject_id)

    rows = {r.subject_id: r.row for r in results if r.row is not None}
    report = {
        "tool_version": TOOL_VERSION,
        "config": {**defaults.config_echo(),
                   "seed": seed,
                   "binarize_threshold": threshold,
                   "samples_per_eval": n_samples,
                   "connectivity": connectivity,
                   "tau_grid": n_taus},
        "subjects": {
            r.subject_id: {
                "metrics": r.row,
                "tau_sweep": r.sweep,
                "error": r.error,
            }
            for r in results
        },
        "aggregate": aggregate_block([rows]) if rows else {},
    }
    status = 0 if all(r.error is None for r in results) else 1
    return status, report
