"""Evaluation protocol: metrics, stratified 10-fold cross-validation,
imbalance handling, grouped permutation importance, and the sweep/transfer
analyses.

Everything here is seeded and deterministic: folds, subsamples, and
permutations derive from the supplied seed, results are keyed and sorted
before aggregation, and a configuration fingerprint rides along in every
report so reruns can be audited.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .features import build_tweet_matrix
from .models import (
    Scaler,
    TrainedModel,
    apply_scaler,
    fit_scaler,
    predict_score,
    train,
    tune_threshold,
)


class EvalError(Exception):
    pass


_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2.0 spells it trapz


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    auc: float

    def as_dict(self) -> dict[str, float]:
        return {
            "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "auc": self.auc,
        }


@dataclass
class EvalReport:
    per_fold: list[Metrics]
    mean: Metrics
    stderr: Metrics
    threshold: float
    fingerprint: dict

    def as_dict(self) -> dict:
        return {
            "per_fold": [m.as_dict() for m in self.per_fold],
            "mean": self.mean.as_dict(),
            "stderr": self.stderr.as_dict(),
            "threshold": self.threshold,
            "fingerprint": self.fingerprint,
        }


def precision_recall_f1(labels: np.ndarray, predicted: np.ndarray) -> tuple[float, float, float]:
    labels = np.asarray(labels, dtype=int)
    predicted = np.asarray(predicted, dtype=int)
    tp = int(np.sum((predicted == 1) & (labels == 1)))
    fp = int(np.sum((predicted == 1) & (labels == 0)))
    fn = int(np.sum((predicted == 0) & (labels == 1)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve by trapezoidal integration, with tied scores
    grouped so ties contribute half-wins."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise EvalError("AUC requires both classes")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    # cumulative tp/fp at the end of each tied-score group
    boundaries = np.nonzero(np.diff(s))[0]
    idx = np.concatenate([boundaries, [s.size - 1]])
    tp = np.cumsum(l == 1)[idx]
    fp = np.cumsum(l == 0)[idx]
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    return float(_trapezoid(tpr, fpr))


def fold_metrics(scores: np.ndarray, labels: np.ndarray, threshold: float) -> Metrics:
    p, r, f1 = precision_recall_f1(labels, (np.asarray(scores) >= threshold).astype(int))
    return Metrics(p, r, f1, auc(scores, labels))


def _aggregate(per_fold: Sequence[Metrics], threshold: float, fingerprint: dict) -> EvalReport:
    arr = np.array([[m.precision, m.recall, m.f1, m.auc] for m in per_fold])
    mean = arr.mean(axis=0)
    if arr.shape[0] > 1:
        stderr = arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])
    else:
        stderr = np.zeros(4)
    return EvalReport(
        per_fold=list(per_fold),
        mean=Metrics(*mean),
        stderr=Metrics(*stderr),
        threshold=threshold,
        fingerprint=fingerprint,
    )


# --- folds and sampling ----------------------------------------------------------

def stratified_kfold(y: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Disjoint covering test folds; per-fold class counts are within one of
    the even split for each class."""
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if idx.size < k:
            raise EvalError(f"class {cls} has {idx.size} examples, fewer than k={k}")
        idx = idx[rng.permutation(idx.size)]
        for i, j in enumerate(idx):
            folds[i % k].append(int(j))
    return [np.array(sorted(f), dtype=int) for f in folds]


def oversample_train(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Replicate whole minority rows (cycling in order) until classes match.
    Training data only; callers never touch test splits."""
    y = np.asarray(y, dtype=int)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == n_neg or n_pos == 0 or n_neg == 0:
        return X, y
    minority = 1 if n_pos < n_neg else 0
    idx = np.flatnonzero(y == minority)
    need = abs(n_neg - n_pos)
    extra = idx[np.arange(need) % idx.size]
    X2 = np.vstack([X, X[extra]])
    y2 = np.concatenate([y, y[extra]])
    return X2, y2


def downsample_balanced(
    y: np.ndarray,
    n_datasets: int = 10,
    seed: int = 0,
) -> list[np.ndarray]:
    """Row indices of ``n_datasets`` balanced datasets: all positives plus an
    equal number of negatives sampled without replacement (per dataset)."""
    y = np.asarray(y, dtype=int)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if neg.size < pos.size:
        raise EvalError(f"need at least {pos.size} negatives, have {neg.size}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_datasets):
        chosen = rng.choice(neg, size=pos.size, replace=False)
        out.append(np.sort(np.concatenate([pos, chosen])))
    return out


# --- cross-validation ------------------------------------------------------------

@dataclass
class CvModel:
    """A fitted 10-fold bundle: per-fold scaler+model, fold assignments, the
    pooled out-of-fold tuned threshold, and the baseline report."""

    kind: str
    seed: int
    folds: list[np.ndarray]
    scalers: list[Scaler]
    models: list[TrainedModel]
    threshold: float
    report: EvalReport
    sampling: str = "none"


def fit_cv(
    X: np.ndarray,
    y: np.ndarray,
    kind: str,
    k: int = 10,
    seed: int = 0,
    sampling: str = "none",
    fingerprint_extra: Optional[dict] = None,
) -> CvModel:
    """Stratified k-fold protocol: scaler and model fitted per training split
    (leakage-free), one threshold tuned on out-of-fold scores to maximize the
    mean F1 across folds, metrics reported as mean +/- standard error."""
    if sampling not in ("none", "oversample"):
        raise EvalError(f"unknown sampling strategy: {sampling!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    folds = stratified_kfold(y, k, seed)
    scalers: list[Scaler] = []
    fold_models: list[TrainedModel] = []
    fold_scores: list[np.ndarray] = []
    fold_labels: list[np.ndarray] = []
    all_idx = np.arange(y.size)
    for test_idx in folds:
        train_mask = np.ones(y.size, dtype=bool)
        train_mask[test_idx] = False
        train_idx = all_idx[train_mask]
        X_tr, y_tr = X[train_idx], y[train_idx]
        if sampling == "oversample":
            X_tr, y_tr = oversample_train(X_tr, y_tr)
        scaler = fit_scaler(X_tr)
        model = train(kind, apply_scaler(scaler, X_tr), y_tr, seed)
        scores = predict_score(model, apply_scaler(scaler, X[test_idx]))
        scalers.append(scaler)
        fold_models.append(model)
        fold_scores.append(scores)
        fold_labels.append(y[test_idx])
    threshold = tune_threshold(fold_scores, fold_labels)
    for m in fold_models:
        m.threshold = threshold
    per_fold = [fold_metrics(s, l, threshold) for s, l in zip(fold_scores, fold_labels)]
    fingerprint = {
        "kind": kind, "seed": seed, "k": k, "sampling": sampling,
        "n_examples": int(y.size), "n_positive": int(np.sum(y == 1)),
        "threshold_rule": "pooled out-of-fold, smallest grid argmax of mean F1",
    }
    if fingerprint_extra:
        fingerprint.update(fingerprint_extra)
    report = _aggregate(per_fold, threshold, fingerprint)
    return CvModel(kind, seed, folds, scalers, fold_models, threshold, report, sampling)


def kfold_cv(
    X: np.ndarray,
    y: np.ndarray,
    kind: str,
    k: int = 10,
    seed: int = 0,
    sampling: str = "none",
    fingerprint_extra: Optional[dict] = None,
) -> EvalReport:
    return fit_cv(X, y, kind, k=k, seed=seed, sampling=sampling,
                  fingerprint_extra=fingerprint_extra).report


def evaluate_downsampled(
    X: np.ndarray,
    y: np.ndarray,
    kind: str,
    n_datasets: int = 10,
    k: int = 10,
    seed: int = 0,
) -> EvalReport:
    """Balanced-downsampling protocol: average the k-fold report over
    ``n_datasets`` balanced datasets; stderr is across dataset means."""
    subsets = downsample_balanced(y, n_datasets=n_datasets, seed=seed)
    dataset_means: list[Metrics] = []
    thresholds: list[float] = []
    for i, rows in enumerate(subsets):
        report = kfold_cv(X[rows], y[rows], kind, k=k, seed=seed + i)
        dataset_means.append(report.mean)
        thresholds.append(report.threshold)
    fingerprint = {
        "kind": kind, "seed": seed, "k": k, "sampling": "downsample",
        "n_datasets": n_datasets, "n_examples": int(y.size),
        "n_positive": int(np.sum(y == 1)),
    }
    return _aggregate(dataset_means, float(np.mean(thresholds)), fingerprint)


# --- permutation importance --------------------------------------------------------

@dataclass
class ImportanceRow:
    group: str
    drops: list[float]

    @property
    def median_drop(self) -> float:
        return float(np.median(self.drops))


def permutation_importance(
    cv_model: CvModel,
    X: np.ndarray,
    y: np.ndarray,
    groups: Mapping[str, Sequence[str]],
    feature_names: Sequence[str],
    repeats: int = 10,
    seed: int = 0,
) -> list[ImportanceRow]:
    """Drop in mean out-of-fold F1 when a feature group's columns are shuffled
    jointly (one row permutation per group and repeat, applied to every column
    in the group so within-group dependence is preserved)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    name_to_col = {n: i for i, n in enumerate(feature_names)}
    col_groups: dict[str, list[int]] = {}
    for gname, cols in groups.items():
        missing = [c for c in cols if c not in name_to_col]
        if missing:
            raise EvalError(f"unknown columns in group {gname!r}: {missing}")
        col_groups[gname] = [name_to_col[c] for c in cols]

    def mean_f1(matrix: np.ndarray) -> float:
        f1s = []
        for scaler, model, test_idx in zip(cv_model.scalers, cv_model.models, cv_model.folds):
            scores = predict_score(model, apply_scaler(scaler, matrix[test_idx]))
            _, _, f1 = precision_recall_f1(
                y[test_idx], (scores >= cv_model.threshold).astype(int)
            )
            f1s.append(f1)
        return float(np.mean(f1s))

    baseline = mean_f1(X)
    rng = np.random.default_rng(seed)
    rows = []
    for gname in sorted(col_groups):
        cols = col_groups[gname]
        drops = []
        for _ in range(repeats):
            perm = rng.permutation(X.shape[0])
            X_perm = X.copy()
            X_perm[:, cols] = X[perm][:, cols]
            drops.append(baseline - mean_f1(X_perm))
        rows.append(ImportanceRow(gname, drops))
    rows.sort(key=lambda r: -r.median_drop)
    return rows


# --- sweeps -------------------------------------------------------------------------

@dataclass
class SweepRow:
    parameter: float
    report: Optional[EvalReport]
    note: str = ""


def threshold_sweep(
    corpus,
    tweet_samples_for: Callable[[set[str]], Mapping],
    thresholds: Iterable[int] = range(5, 21),
    kind: str = "random_forest",
    k: int = 10,
    seed: int = 0,
    min_total_replies: int = 5,
) -> list[SweepRow]:
    """Rebuild the classification dataset at each minimum-coordinated-reply
    threshold, re-extract features, and rerun the CV protocol.

    ``tweet_samples_for`` maps a post-id scope to per-post cosine samples
    (embeddings are computed once by the caller and reused across thresholds).
    """
    from .dataset_builder import select_controls, select_targeted

    rows: list[SweepRow] = []
    for m in thresholds:
        targeted = select_targeted(corpus, min_io_replies=m)
        if not targeted:
            rows.append(SweepRow(float(m), None, "insufficient: no targeted posts"))
            continue
        dataset = select_controls(corpus, targeted, min_total_replies=min_total_replies)
        n_pos = len(dataset.positives)
        n_neg = len(dataset.negatives)
        if min(n_pos, n_neg) < 2 * k:
            rows.append(SweepRow(float(m), None, f"insufficient: {n_pos} per class"))
            continue
        samples = tweet_samples_for(dataset.positives | dataset.negatives)
        matrix = build_tweet_matrix(
            corpus, dataset.positives, dataset.negatives, samples,
            min_total_replies=min_total_replies,
        )
        report = kfold_cv(
            matrix.X, matrix.y, kind, k=k, seed=seed,
            fingerprint_extra={"min_io_replies": int(m)},
        )
        rows.append(SweepRow(float(m), report))
    return rows


def imbalance_sweep(
    X: np.ndarray,
    y: np.ndarray,
    ratios: Iterable[int] = range(5, 46, 5),
    kind: str = "random_forest",
    k: int = 10,
    seed: int = 0,
) -> list[SweepRow]:
    """Subsample negatives to 1:ratio against the positives and rerun CV."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    rows: list[SweepRow] = []
    rng = np.random.default_rng(seed)
    for ratio in ratios:
        need = pos.size * ratio
        if need > neg.size:
            rows.append(SweepRow(float(ratio), None, f"insufficient: need {need} negatives"))
            continue
        chosen = np.sort(np.concatenate([pos, rng.choice(neg, size=need, replace=False)]))
        report = kfold_cv(
            X[chosen], y[chosen], kind, k=k, seed=seed,
            fingerprint_extra={"negative_ratio": int(ratio)},
        )
        rows.append(SweepRow(float(ratio), report))
    return rows


# --- cross-campaign transfer ----------------------------------------------------------

@dataclass
class CrossCampaignResult:
    campaigns: list[str]
    f1_matrix: np.ndarray  # [train, test]
    excluded: list[tuple[str, str]]

    def as_dict(self) -> dict:
        return {
            "campaigns": self.campaigns,
            "f1_matrix": [[float(v) for v in row] for row in self.f1_matrix],
            "excluded": self.excluded,
        }


def cross_campaign(
    datasets: Mapping[str, tuple[np.ndarray, np.ndarray]],
    kind: str = "random_forest",
    k: int = 10,
    seed: int = 0,
) -> CrossCampaignResult:
    """Diagonal: mean k-fold F1 within a campaign. Off-diagonal (r, c): model
    trained on all of campaign r (threshold from r's CV) scored on all of c."""
    usable: list[str] = []
    excluded: list[tuple[str, str]] = []
    for name in sorted(datasets):
        _, y = datasets[name]
        y = np.asarray(y, dtype=int)
        if np.unique(y).size < 2:
            excluded.append((name, "single class"))
        elif min(np.sum(y == 1), np.sum(y == 0)) < k:
            excluded.append((name, f"class smaller than k={k}"))
        else:
            usable.append(name)
    if len(usable) < 1:
        raise EvalError("no usable campaign datasets")
    n = len(usable)
    matrix = np.zeros((n, n))
    full_models: dict[str, tuple[Scaler, TrainedModel, float]] = {}
    for i, name in enumerate(usable):
        X, y = datasets[name]
        cv = fit_cv(np.asarray(X, dtype=float), np.asarray(y, dtype=int), kind, k=k, seed=seed)
        matrix[i, i] = cv.report.mean.f1
        scaler = fit_scaler(np.asarray(X, dtype=float))
        model = train(kind, apply_scaler(scaler, np.asarray(X, dtype=float)),
                      np.asarray(y, dtype=int), seed)
        full_models[name] = (scaler, model, cv.threshold)
    for i, r in enumerate(usable):
        scaler, model, threshold = full_models[r]
        for j, c in enumerate(usable):
            if i == j:
                continue
            Xc, yc = datasets[c]
            scores = predict_score(model, apply_scaler(scaler, np.asarray(Xc, dtype=float)))
            _, _, f1 = precision_recall_f1(
                np.asarray(yc, dtype=int), (scores >= threshold).astype(int)
            )
            matrix[i, j] = f1
    return CrossCampaignResult(usable, matrix, excluded)


# --- engagement correlation -------------------------------------------------------------

ENGAGEMENT_PAIRS = ("reply_count", "retweet_count", "like_count")


def engagement_correlation(
    corpus,
    samples: int = 10,
    seed: int = 0,
) -> dict[str, dict]:
    """Mean Pearson correlation between each post-level engagement count and
    the same count on a reply, over ``samples`` subsamples of replies sized to
    the number of posts (each sampled reply pairs with its own post)."""
    posts_with_replies = sorted({r.target_tweet_id for r in corpus.replies}
                                & set(corpus.posts))
    if not posts_with_replies:
        raise EvalError("no posts with replies")
    eligible = [
        r for r in sorted(corpus.replies, key=lambda r: r.reply_tweet_id)
        if r.target_tweet_id in corpus.posts
        and all(getattr(r, a) is not None for a in ENGAGEMENT_PAIRS)
        and all(getattr(corpus.posts[r.target_tweet_id], a) is not None
                for a in ENGAGEMENT_PAIRS)
    ]
    if not eligible:
        raise EvalError("no replies with full engagement counts")
    n = min(len(posts_with_replies), len(eligible))
    rng = np.random.default_rng(seed)
    sums = {a: [] for a in ENGAGEMENT_PAIRS}
    degenerate = {a: False for a in ENGAGEMENT_PAIRS}
    for _ in range(samples):
        idx = rng.choice(len(eligible), size=n, replace=False)
        chosen = [eligible[i] for i in idx]
        for attr in ENGAGEMENT_PAIRS:
            x = np.array([corpus.posts[r.target_tweet_id].__getattribute__(attr)
                          for r in chosen], dtype=float)
            y = np.array([getattr(r, attr) for r in chosen], dtype=float)
            if np.std(x) == 0.0 or np.std(y) == 0.0:
                degenerate[attr] = True
                sums[attr].append(0.0)
            else:
                sums[attr].append(float(np.corrcoef(x, y)[0, 1]))
    return {
        attr: {
            "mean_correlation": float(np.mean(vals)),
            "degenerate": degenerate[attr],
            "samples": len(vals),
        }
        for attr, vals in sums.items()
    }
