"""Classifier zoo behind a uniform contract: z-score scaling, seeded training,
probability-like scores in [0, 1], and F1-maximizing threshold tuning.

Hyperparameters are repo constants (surfaced in MODEL_HYPERPARAMS) rather
than library defaults pulled in silently; the forest score is the fraction of
trees voting positive, so score * n_trees is always an integer. Trained
models serialize to a self-describing versioned JSON file from which a pure
numpy predictor can be rebuilt.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit
from sklearn.ensemble import AdaBoostClassifier, RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.naive_bayes import GaussianNB
from sklearn.tree import DecisionTreeClassifier

MODEL_KINDS = (
    "logistic_regression", "random_forest", "adaboost", "decision_tree", "naive_bayes",
)

MODEL_HYPERPARAMS: dict[str, dict] = {
    "random_forest": {
        "n_estimators": 100, "criterion": "gini", "max_depth": None,
        "max_features": "sqrt", "bootstrap": True,
    },
    "logistic_regression": {"penalty": "l2", "C": 1.0, "tol": 1e-6, "max_iter": 10_000},
    "adaboost": {"n_estimators": 50, "stump_depth": 1},
    "decision_tree": {"criterion": "gini", "max_depth": None},
    "naive_bayes": {"var_smoothing": 1e-9},
}

THRESHOLD_GRID = tuple(i / 100 for i in range(101))

MODEL_FORMAT = "reply-sentinel-model/1"


class ModelError(Exception):
    pass


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray  # 1.0 substituted wherever the fitted std is 0

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.mean.shape[0]:
            raise ModelError(
                f"scaler fitted on {self.mean.shape[0]} columns, got {X.shape[1]}"
            )
        return (X - self.mean) / self.std


def fit_scaler(X: np.ndarray) -> Scaler:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ModelError("cannot fit scaler on empty matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    std = np.where(std == 0.0, 1.0, std)
    return Scaler(mean=mean, std=std)


def apply_scaler(scaler: Scaler, X: np.ndarray) -> np.ndarray:
    return scaler.transform(X)


@dataclass
class TrainedModel:
    kind: str
    estimator: object
    seed: int
    n_features: int
    scaler: Optional[Scaler] = None
    threshold: float = 0.5
    feature_names: tuple[str, ...] = ()


def _build_estimator(kind: str, seed: int):
    if kind == "random_forest":
        hp = MODEL_HYPERPARAMS[kind]
        return RandomForestClassifier(
            n_estimators=hp["n_estimators"], criterion=hp["criterion"],
            max_depth=hp["max_depth"], max_features=hp["max_features"],
            bootstrap=hp["bootstrap"], random_state=seed,
        )
    if kind == "logistic_regression":
        hp = MODEL_HYPERPARAMS[kind]
        return LogisticRegression(
            penalty=hp["penalty"], C=hp["C"], tol=hp["tol"],
            max_iter=hp["max_iter"], random_state=seed,
        )
    if kind == "adaboost":
        hp = MODEL_HYPERPARAMS[kind]
        return AdaBoostClassifier(
            estimator=DecisionTreeClassifier(max_depth=hp["stump_depth"]),
            n_estimators=hp["n_estimators"], random_state=seed,
        )
    if kind == "decision_tree":
        hp = MODEL_HYPERPARAMS[kind]
        return DecisionTreeClassifier(
            criterion=hp["criterion"], max_depth=hp["max_depth"], random_state=seed,
        )
    if kind == "naive_bayes":
        return GaussianNB(var_smoothing=MODEL_HYPERPARAMS["naive_bayes"]["var_smoothing"])
    raise ModelError(f"unknown model kind: {kind!r}")


def train(
    kind: str,
    X: np.ndarray,
    y: np.ndarray,
    seed: int,
    feature_names: Sequence[str] = (),
) -> TrainedModel:
    """Fit one classifier on already-scaled features."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise ModelError("training labels contain a single class")
    if not set(classes) <= {0, 1}:
        raise ModelError(f"labels must be binary 0/1, got {classes}")
    if counts.min() < 2:
        raise ModelError("training needs at least 2 examples per class")
    est = _build_estimator(kind, seed)
    est.fit(X, y)
    return TrainedModel(
        kind=kind, estimator=est, seed=seed, n_features=X.shape[1],
        feature_names=tuple(feature_names),
    )


def predict_score(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Positive-class score in [0, 1]; for forests this is the fraction of
    trees voting positive."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != model.n_features:
        raise ModelError(
            f"model trained on {model.n_features} features, got {X.shape[1]}"
        )
    est = model.estimator
    if model.kind == "random_forest":
        votes = np.zeros(X.shape[0])
        for tree in est.estimators_:
            votes += tree.predict(X)
        return votes / len(est.estimators_)
    pos_col = int(np.where(est.classes_ == 1)[0][0])
    return est.predict_proba(X)[:, pos_col]


def predict_label(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    return (predict_score(model, X) >= model.threshold).astype(int)


def _f1(labels: np.ndarray, predicted: np.ndarray) -> float:
    tp = int(np.sum((predicted == 1) & (labels == 1)))
    fp = int(np.sum((predicted == 1) & (labels == 0)))
    fn = int(np.sum((predicted == 0) & (labels == 1)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def tune_threshold(
    scores: Union[np.ndarray, Sequence[np.ndarray]],
    labels: Union[np.ndarray, Sequence[np.ndarray]],
) -> float:
    """Smallest grid threshold in {0.00 .. 1.00} maximizing the mean F1 across
    the supplied per-fold score sets (a single set is the degenerate case).
    Prediction rule: positive iff score >= threshold."""
    if isinstance(scores, np.ndarray) and scores.ndim == 1:
        fold_scores = [np.asarray(scores, dtype=float)]
        fold_labels = [np.asarray(labels, dtype=int)]
    else:
        fold_scores = [np.asarray(s, dtype=float) for s in scores]
        fold_labels = [np.asarray(l, dtype=int) for l in labels]
    if len(fold_scores) != len(fold_labels) or not fold_scores:
        raise ModelError("scores and labels fold lists must align")
    for s, l in zip(fold_scores, fold_labels):
        if s.shape != l.shape:
            raise ModelError("scores and labels must align")
    if not any((l == 1).any() for l in fold_labels):
        raise ModelError("no positive labels to tune against")
    best_t = 0.0
    best_f1 = -1.0
    for t in THRESHOLD_GRID:
        mean_f1 = float(
            np.mean([_f1(l, (s >= t).astype(int)) for s, l in zip(fold_scores, fold_labels)])
        )
        if mean_f1 > best_f1:
            best_f1 = mean_f1
            best_t = t
    return best_t


# --- serialization ---------------------------------------------------------------

def _dump_tree(tree) -> dict:
    t = tree.tree_
    value = np.asarray(t.value)  # (n_nodes, 1, n_classes)
    totals = value.sum(axis=2)
    totals = np.where(totals == 0.0, 1.0, totals)
    classes = np.asarray(tree.classes_)
    if classes.size == 2:
        pos = int(np.where(classes == 1)[0][0])
        prob_pos = value[:, 0, pos] / totals[:, 0]
    else:  # single-class stump edge case
        prob_pos = np.full(value.shape[0], float(classes[0]))
    return {
        "children_left": t.children_left.tolist(),
        "children_right": t.children_right.tolist(),
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "prob_pos": prob_pos.tolist(),
    }


def _model_params(model: TrainedModel) -> dict:
    est = model.estimator
    kind = model.kind
    if kind == "logistic_regression":
        return {"coef": est.coef_[0].tolist(), "intercept": float(est.intercept_[0]),
                "classes": est.classes_.tolist()}
    if kind == "naive_bayes":
        return {"theta": est.theta_.tolist(), "var": est.var_.tolist(),
                "class_prior": est.class_prior_.tolist(), "classes": est.classes_.tolist()}
    if kind == "decision_tree":
        return {"tree": _dump_tree(est)}
    if kind == "random_forest":
        return {"trees": [_dump_tree(t) for t in est.estimators_]}
    if kind == "adaboost":
        return {
            "stumps": [_dump_tree(s) for s in est.estimators_],
            "weights": est.estimator_weights_[: len(est.estimators_)].tolist(),
            "classes": est.classes_.tolist(),
        }
    raise ModelError(f"unknown model kind: {kind!r}")


def save_model(model: TrainedModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "kind": model.kind,
        "seed": model.seed,
        "threshold": model.threshold,
        "n_features": model.n_features,
        "feature_names": list(model.feature_names),
        "scaler": None if model.scaler is None else {
            "mean": model.scaler.mean.tolist(), "std": model.scaler.std.tolist(),
        },
        "params": _model_params(model),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


class LoadedModel:
    """Self-contained numpy predictor rebuilt from a serialized model file;
    scores match the live estimator's."""

    def __init__(self, doc: dict):
        if doc.get("format") != MODEL_FORMAT:
            raise ModelError(f"unsupported model format: {doc.get('format')!r}")
        self.kind = doc["kind"]
        self.seed = int(doc["seed"])
        self.threshold = float(doc["threshold"])
        self.n_features = int(doc["n_features"])
        self.feature_names = tuple(doc["feature_names"])
        self.scaler = None
        if doc["scaler"] is not None:
            self.scaler = Scaler(
                mean=np.asarray(doc["scaler"]["mean"]),
                std=np.asarray(doc["scaler"]["std"]),
            )
        self.params = doc["params"]

    @staticmethod
    def _tree_scores(tree: dict, X: np.ndarray, vote: bool) -> np.ndarray:
        left = np.asarray(tree["children_left"])
        right = np.asarray(tree["children_right"])
        feature = np.asarray(tree["feature"])
        threshold = np.asarray(tree["threshold"])
        prob = np.asarray(tree["prob_pos"])
        Xf = X.astype(np.float32)  # match the fitted trees' input representation
        out = np.empty(X.shape[0])
        for i in range(X.shape[0]):
            node = 0
            while left[node] != -1:
                node = left[node] if Xf[i, feature[node]] <= threshold[node] else right[node]
            out[i] = prob[node]
        return (out > 0.5).astype(float) if vote else out

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.n_features:
            raise ModelError(
                f"model trained on {self.n_features} features, got {X.shape[1]}"
            )
        p = self.params
        if self.kind == "logistic_regression":
            return expit(X @ np.asarray(p["coef"]) + p["intercept"])
        if self.kind == "naive_bayes":
            theta = np.asarray(p["theta"])
            var = np.asarray(p["var"])
            prior = np.asarray(p["class_prior"])
            jll = []
            for c in range(theta.shape[0]):
                ll = -0.5 * np.sum(np.log(2.0 * np.pi * var[c]))
                ll = ll - 0.5 * np.sum((X - theta[c]) ** 2 / var[c], axis=1)
                jll.append(np.log(prior[c]) + ll)
            jll = np.vstack(jll).T
            mx = jll.max(axis=1, keepdims=True)
            prob = np.exp(jll - mx)
            prob /= prob.sum(axis=1, keepdims=True)
            pos = int(np.where(np.asarray(p["classes"]) == 1)[0][0])
            return prob[:, pos]
        if self.kind == "decision_tree":
            return self._tree_scores(p["tree"], X, vote=False)
        if self.kind == "random_forest":
            votes = np.zeros(X.shape[0])
            for tree in p["trees"]:
                votes += self._tree_scores(tree, X, vote=True)
            return votes / len(p["trees"])
        if self.kind == "adaboost":
            weights = np.asarray(p["weights"])
            # SAMME decision function: weighted vote margin mapped through a sigmoid
            margin = np.zeros(X.shape[0])
            for stump, w in zip(p["stumps"], weights):
                pred = self._tree_scores(stump, X, vote=True)
                margin += w * (2.0 * pred - 1.0)
            margin /= weights.sum()
            return expit(2.0 * margin)
        raise ModelError(f"unknown model kind: {self.kind!r}")

    def predict_label(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_score(X) >= self.threshold).astype(int)


def load_model(path) -> LoadedModel:
    with open(path, encoding="utf-8") as fh:
        return LoadedModel(json.load(fh))
