"""Balanced multinomial logistic regression with recursive feature
elimination, the associated classification metrics, and bootstrapped
confidence intervals.

The optimiser is deterministic full-batch gradient descent with Armijo
backtracking from a zero initialisation: the objective (class-weighted
mean cross entropy + L2 on the weights, bias unregularised) is convex, so
no stochastic machinery is needed and repeated fits are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, DegenerateLabelsError, MissingFeatureError
from .ring_features import FeatureTable, FeatureVector, normalize_table


@dataclass
class ClassifierModel:
    """Linear softmax classifier over named features."""

    feature_names: list
    weights: np.ndarray  # (k features, C classes)
    bias: np.ndarray     # (C,)
    classes: np.ndarray  # class labels, column order of weights

    def scores(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights + self.bias

    def proba(self, x: np.ndarray) -> np.ndarray:
        z = self.scores(np.atleast_2d(x))
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def _class_weights(labels: np.ndarray, classes: np.ndarray, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.ones(len(labels))
    counts = np.array([(labels == c).sum() for c in classes], dtype=np.float64)
    w = len(labels) / (len(classes) * counts)
    lookup = {c: w[i] for i, c in enumerate(classes)}
    return np.array([lookup[l] for l in labels])


def _objective(w, b, x, y_onehot, sample_w, reg):
    z = x @ w + b
    z = z - z.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = x.shape[0]
    ce = -(sample_w * (y_onehot * log_p).sum(axis=1)).sum() / n
    value = ce + reg * (w**2).sum()
    p = np.exp(log_p)
    resid = (p - y_onehot) * sample_w[:, None] / n
    grad_w = x.T @ resid + 2.0 * reg * w
    grad_b = resid.sum(axis=0)
    return value, grad_w, grad_b


def fit(
    tbl: FeatureTable,
    reg: float = 10.0,
    class_balance: bool = True,
    grad_tol: float = 1e-6,
    max_iter: int = 10_000,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> ClassifierModel:
    """Fit a multinomial logistic regression on a (normalised) feature table.

    Minimises mean class-weighted cross entropy plus ``reg`` times the sum
    of squared weights (bias excluded), to gradient norm <= ``grad_tol``.
    Class weights are inversely proportional to class frequency. Starts
    from zeros (``init`` overrides, mainly to demonstrate convexity).
    Raises :class:`DegenerateLabelsError` when fewer than two classes are
    present.
    """
    x = tbl.matrix()
    labels = tbl.labels()
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DegenerateLabelsError(f"need >= 2 classes, got {classes}")
    y_onehot = (labels[:, None] == classes[None, :]).astype(np.float64)
    sample_w = _class_weights(labels, classes, class_balance)

    k, c = x.shape[1], len(classes)
    if init is None:
        w = np.zeros((k, c))
        b = np.zeros(c)
    else:
        w = np.array(init[0], dtype=np.float64).reshape(k, c)
        b = np.array(init[1], dtype=np.float64).reshape(c)
    value, grad_w, grad_b = _objective(w, b, x, y_onehot, sample_w, reg)
    step = 1.0
    for _ in range(max_iter):
        gnorm2 = float((grad_w**2).sum() + (grad_b**2).sum())
        if np.sqrt(gnorm2) <= grad_tol:
            break
        # Armijo backtracking on the steepest-descent direction.
        step = min(step * 2.0, 1e6)
        while True:
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            v_new, gw_new, gb_new = _objective(w_new, b_new, x, y_onehot, sample_w, reg)
            ok = np.isfinite(v_new) and v_new <= value - 1e-4 * step * gnorm2
            if ok or step < 1e-18:
                break
            step *= 0.5
        w, b, value, grad_w, grad_b = w_new, b_new, v_new, gw_new, gb_new
    return ClassifierModel(feature_names=list(tbl.feature_names),
                           weights=w, bias=b, classes=classes)


def rfe(
    tbl: FeatureTable,
    k: int,
    reg: float = 10.0,
    class_balance: bool = True,
) -> tuple[list, ClassifierModel]:
    """Recursive feature elimination down to ``k`` features.

    Repeatedly fits, scores each feature by the L2 norm of its weight row
    across classes, and removes the single lowest-scoring feature
    (lexicographically last name on ties) until k remain; the returned
    model is a final refit on the survivors.
    """
    if not 1 <= k <= len(tbl.feature_names):
        raise ValueError(f"k must be in [1, {len(tbl.feature_names)}], got {k}")
    current = tbl
    while len(current.feature_names) > k:
        model = fit(current, reg=reg, class_balance=class_balance)
        importance = np.linalg.norm(model.weights, axis=1)
        worst = importance.min()
        candidates = [n for n, imp in zip(current.feature_names, importance)
                      if imp == worst]
        drop = sorted(candidates)[-1]
        current = current.select([n for n in current.feature_names if n != drop])
    model = fit(current, reg=reg, class_balance=class_balance)
    return list(current.feature_names), model


def predict_proba(model: ClassifierModel, row) -> np.ndarray:
    """Class probabilities for one feature row (FeatureVector or dict)."""
    values = row.values if isinstance(row, FeatureVector) else row
    missing = [n for n in model.feature_names if n not in values]
    if missing:
        raise MissingFeatureError(f"row lacks features: {missing}")
    x = np.array([values[n] for n in model.feature_names], dtype=np.float64)
    return model.proba(x)[0]


def predict_proba_table(model: ClassifierModel, tbl: FeatureTable, subject_ids=None) -> np.ndarray:
    missing = [n for n in model.feature_names if n not in tbl.feature_names]
    if missing:
        raise MissingFeatureError(f"table lacks features: {missing}")
    sub = tbl.select(model.feature_names)
    ids = tbl.subject_ids if subject_ids is None else list(subject_ids)
    return model.proba(sub.matrix(ids))


def confusion_matrix(pred_labels, true_labels, classes) -> np.ndarray:
    """Counts[i, j] = instances with true class i predicted as class j."""
    classes = list(classes)
    idx = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(true_labels, pred_labels):
        m[idx[t], idx[p]] += 1
    return m


def cohen_kappa(pred_labels, true_labels, classes) -> float | None:
    """Unweighted Cohen's kappa from the hard confusion matrix."""
    m = confusion_matrix(pred_labels, true_labels, classes).astype(np.float64)
    n = m.sum()
    if n == 0:
        return None
    po = np.trace(m) / n
    pe = float((m.sum(axis=1) * m.sum(axis=0)).sum()) / n**2
    if pe == 1.0:
        return None
    return (po - pe) / (1.0 - pe)


def balanced_accuracy(pred_labels, true_labels) -> float | None:
    """Mean per-class recall over the classes present in the true labels."""
    true_labels = np.asarray(true_labels)
    pred_labels = np.asarray(pred_labels)
    present = np.unique(true_labels)
    if len(present) == 0:
        return None
    recalls = [
        float((pred_labels[true_labels == c] == c).mean()) for c in present
    ]
    return float(np.mean(recalls))


def _binary_auc(scores, positives) -> float:
    """Mann-Whitney AUC with tie credit 0.5, via average ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(scores) - n_pos
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[positives].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def macro_auroc(probs: np.ndarray, true_labels, classes) -> float | None:
    """Macro one-vs-rest AUROC; classes absent from the labels are skipped."""
    true_labels = np.asarray(true_labels)
    aucs = []
    for j, c in enumerate(classes):
        pos = true_labels == c
        if pos.all() or not pos.any():
            continue
        aucs.append(_binary_auc(probs[:, j], pos))
    if not aucs:
        return None
    return float(np.mean(aucs))


def root_brier(probs: np.ndarray, true_labels, classes) -> float | None:
    """sqrt of the mean (over instances) sum of squared probability errors."""
    true_labels = np.asarray(true_labels)
    if len(true_labels) == 0:
        return None
    onehot = (true_labels[:, None] == np.asarray(classes)[None, :]).astype(np.float64)
    return float(np.sqrt(((probs - onehot) ** 2).sum(axis=1).mean()))


def eval_metrics(probs: np.ndarray, true_labels, classes) -> dict:
    """kappa / balanced accuracy / macro AUROC / root Brier for one split.

    ``probs`` rows must follow the ``classes`` column order. Metrics whose
    denominator is empty come back as None.
    """
    classes = np.asarray(classes)
    pred_labels = classes[np.argmax(probs, axis=1)]
    return {
        "kappa": cohen_kappa(pred_labels, true_labels, classes),
        "balanced_accuracy": balanced_accuracy(pred_labels, true_labels),
        "auroc": macro_auroc(probs, true_labels, classes),
        "root_brier": root_brier(probs, true_labels, classes),
    }


def stratified_split(labels: np.ndarray, train_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Random split keeping at least one instance of every class in train."""
    train_idx = []
    test_idx = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_train = max(1, int(round(train_fraction * len(idx))))
        n_train = min(n_train, len(idx))
        train_idx.extend(idx[:n_train])
        test_idx.extend(idx[n_train:])
    return np.sort(np.array(train_idx, dtype=int)), np.sort(np.array(test_idx, dtype=int))


@dataclass
class MetricSummary:
    mean: float
    ci_low: float
    ci_high: float


@dataclass
class EvalSummary:
    """Bootstrap summary: mean and 95% percentile CI per metric."""

    kappa: MetricSummary | None
    balanced_accuracy: MetricSummary | None
    auroc: MetricSummary | None
    root_brier: MetricSummary | None
    n_boot: int

    def as_dict(self) -> dict:
        def conv(s):
            if s is None:
                return None
            return {"mean": s.mean, "ci_low": s.ci_low, "ci_high": s.ci_high}
        return {
            "kappa": conv(self.kappa),
            "balanced_accuracy": conv(self.balanced_accuracy),
            "auroc": conv(self.auroc),
            "root_brier": conv(self.root_brier),
            "n_boot": self.n_boot,
        }


def run_split(tbl: FeatureTable, train_ids, test_ids, k: int, reg: float,
              class_balance: bool = True) -> dict:
    """Normalise on train, RFE + fit on train, evaluate on test."""
    normed, _ = normalize_table(tbl, fit_rows=train_ids)
    train_tbl = FeatureTable(
        feature_names=list(normed.feature_names),
        rows={s: normed.rows[s] for s in train_ids},
        targets={s: tbl.targets[s] for s in train_ids},
    )
    selected, model = rfe(train_tbl, k=k, reg=reg, class_balance=class_balance)
    probs = predict_proba_table(model, normed, subject_ids=test_ids)
    true = np.array([tbl.targets[s] for s in test_ids])
    out = eval_metrics(probs, true, model.classes)
    out["selected_features"] = selected
    return out


def bootstrap_eval(
    tbl: FeatureTable,
    split_ratio: float = 0.75,
    n_boot: int = 1000,
    seed: int = 0,
    k: int | None = None,
    reg: float = 10.0,
    class_balance: bool = True,
    max_retries: int = 10,
) -> EvalSummary:
    """Repeatedly resample a stratified train/test split and summarise.

    Each resample normalises on its train rows, runs RFE to ``k`` features
    (defaults to all), fits, and evaluates on the test rows. Sub-seeds are
    derived per resample index, so results are independent of evaluation
    order. Splits that cannot be fitted (train degenerate or test empty)
    are redrawn up to ``max_retries`` times, then raised.
    """
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    if tbl.targets is None:
        raise ValueError("table has no targets")
    ids = np.array(tbl.subject_ids, dtype=object)
    labels = tbl.labels()
    k = len(tbl.feature_names) if k is None else k
    root = np.random.SeedSequence(seed)
    children = root.spawn(n_boot)
    per_metric = {"kappa": [], "balanced_accuracy": [], "auroc": [], "root_brier": []}
    for i in range(n_boot):
        rng = np.random.default_rng(children[i])
        result = None
        for _ in range(max_retries):
            train_idx, test_idx = stratified_split(labels, split_ratio, rng)
            if len(test_idx) == 0 or len(np.unique(labels[train_idx])) < 2:
                continue
            result = run_split(tbl, list(ids[train_idx]), list(ids[test_idx]),
                               k=k, reg=reg, class_balance=class_balance)
            break
        if result is None:
            raise DegenerateError(
                f"resample {i}: no usable split after {max_retries} retries"
            )
        for name in per_metric:
            if result[name] is not None:
                per_metric[name].append(result[name])

    def summarise(vals):
        if not vals:
            return None
        arr = np.asarray(vals, dtype=np.float64)
        return MetricSummary(
            mean=float(arr.mean()),
            ci_low=float(np.percentile(arr, 2.5)),
            ci_high=float(np.percentile(arr, 97.5)),
        )

    return EvalSummary(
        kappa=summarise(per_metric["kappa"]),
        balanced_accuracy=summarise(per_metric["balanced_accuracy"]),
        auroc=summarise(per_metric["auroc"]),
        root_brier=summarise(per_metric["root_brier"]),
        n_boot=n_boot,
    )


def qc_labels(dice_scores: dict, cutoff: float = 0.57) -> dict:
    """Binary quality labels: 1 (poor) iff the subject's Dice <= cutoff."""
    out = {}
    for sid, score in dice_scores.items():
        if not np.isfinite(score):
            raise ValueError(f"non-finite Dice for {sid!r}")
        out[sid] = int(score <= cutoff)
    return out
