"""Repeated stratified cross-validation with augmented-data-in-training-only.

Augmented samples are pooled into every training fold but may never appear
in a test fold; that protocol is asserted structurally on every run.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    EmptyInput,
    ProtocolViolation,
    SingleClassError,
    TooFewSamples,
)
from .learn import Label, decision_function, fit_svm_model
from .metrics import FeatureVector
from .validation import as_signed_labels

#: Fixed row/column order of confusion matrices.
CLASS_ORDER = (Label.ACCEPTABLE, Label.UNACCEPTABLE)

SAMPLE_ORIGINS = ("rated", "augmented")


@dataclass(frozen=True)
class Sample:
    """One (region, dpi) feature row with its label and provenance."""

    features: FeatureVector
    label: Label
    dpi: int
    origin: str
    region_id: str

    def __post_init__(self):
        if self.origin not in SAMPLE_ORIGINS:
            raise ProtocolViolation(f"unknown sample origin {self.origin!r}")
        if self.origin == "augmented" and self.label is not Label.UNACCEPTABLE:
            raise ProtocolViolation("augmented samples must be labeled unacceptable")


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float | None = None
    feature_mask: tuple | None = None
    tol: float = 1e-3


@dataclass
class ClassificationReport:
    accuracy: float
    per_class: dict
    confusion_counts: np.ndarray     # raw counts, rows = true class
    confusion: np.ndarray            # row-normalized rates

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {
                label.value: dict(stats) for label, stats in self.per_class.items()
            },
            "confusion_counts": self.confusion_counts.tolist(),
            "confusion": self.confusion.tolist(),
            "class_order": [label.value for label in CLASS_ORDER],
        }


@dataclass
class EvalReport:
    runs: int
    mean_accuracy: float
    variance_accuracy: float
    per_run_accuracies: list
    per_class: dict
    confusion_counts: np.ndarray
    confusion: np.ndarray
    per_run_confusion_counts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "mean_accuracy": self.mean_accuracy,
            "variance_accuracy": self.variance_accuracy,
            "per_run_accuracies": list(self.per_run_accuracies),
            "per_class": {
                label.value: dict(stats) for label, stats in self.per_class.items()
            },
            "confusion_counts": self.confusion_counts.tolist(),
            "confusion": self.confusion.tolist(),
            "per_run_confusion_counts": [c.tolist() for c in self.per_run_confusion_counts],
            "class_order": [label.value for label in CLASS_ORDER],
        }


def kfold_split(n: int, k: int, seed, strata: Sequence | None = None):
    """Disjoint, seeded, stratified folds of range(n).

    Fold sizes differ by at most one overall and within each stratum. If any
    stratum has fewer than k members the split downgrades to unstratified
    with a warning.
    """
    if k < 2:
        raise TooFewSamples(f"k must be >= 2, got {k}")
    if n < k:
        raise TooFewSamples(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng(seed)

    groups: list[np.ndarray]
    if strata is not None:
        if len(strata) != n:
            raise TooFewSamples(f"strata length {len(strata)} != n {n}")
        keys = sorted({str(s) for s in strata})
        by_key = {key: [] for key in keys}
        for idx, s in enumerate(strata):
            by_key[str(s)].append(idx)
        if any(len(v) < k for v in by_key.values()):
            warnings.warn(
                "stratum smaller than k; falling back to unstratified folds",
                stacklevel=2,
            )
            groups = [np.arange(n)]
        else:
            groups = [np.asarray(by_key[key]) for key in keys]
    else:
        groups = [np.arange(n)]

    folds = [[] for _ in range(k)]
    fold_sizes = np.zeros(k, dtype=np.int64)
    for group in groups:
        perm = group[rng.permutation(len(group))]
        base, extra = divmod(len(perm), k)
        counts = np.full(k, base, dtype=np.int64)
        if extra:
            # grant the remainder to the currently lightest folds so the
            # overall fold sizes also stay within one of each other
            order = np.lexsort((np.arange(k), fold_sizes))
            counts[order[:extra]] += 1
        pos = 0
        for f in range(k):
            folds[f].extend(perm[pos : pos + counts[f]].tolist())
            pos += counts[f]
        fold_sizes += counts
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def classification_metrics(y_true, y_pred) -> ClassificationReport:
    """Accuracy, per-class precision/recall/F1, and confusion matrices."""
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise EmptyInput("y_true and y_pred lengths differ")
    if not y_true:
        raise EmptyInput("no predictions to score")
    index = {label: i for i, label in enumerate(CLASS_ORDER)}
    counts = np.zeros((2, 2), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[index[Label.from_value(t)], index[Label.from_value(p)]] += 1

    per_class = {}
    for label in CLASS_ORDER:
        i = index[label]
        tp = counts[i, i]
        predicted = counts[:, i].sum()
        actual = counts[i, :].sum()
        precision = float(tp / predicted) if predicted else 0.0
        recall = float(tp / actual) if actual else 0.0
        per_class[label] = {
            "precision": precision,
            "recall": recall,
            "f1": f1_score(precision, recall),
        }

    row_sums = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(
        counts, row_sums, out=np.zeros((2, 2), dtype=np.float64), where=row_sums > 0
    )
    accuracy = float(np.trace(counts) / counts.sum())
    return ClassificationReport(
        accuracy=accuracy,
        per_class=per_class,
        confusion_counts=counts,
        confusion=normalized,
    )


def _run_seed(base_seed: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(run,))


def default_split(samples: Sequence[Sample], k: int, seed):
    """Stratified folds over the rated samples, as global sample indices."""
    rated = np.asarray([i for i, s in enumerate(samples) if s.origin == "rated"])
    labels = [samples[i].label.value for i in rated]
    folds = kfold_split(len(rated), k, seed, strata=labels)
    return [rated[f] for f in folds]


def svm_cv_accuracy(X, y, k: int, seed, config: TrainConfig = TrainConfig(), subset=None) -> float:
    """Mean fold accuracy of the SVM over a seeded stratified k-fold split.

    ``subset`` restricts the feature columns before normalization; this is
    the criterion used by the feature-selection search.
    """
    X = np.asarray(X, dtype=np.float64)
    y = list(y)
    if subset is not None:
        cols = sorted(int(c) for c in subset)
        X = X[:, cols]
    folds = kfold_split(X.shape[0], k, seed, strata=[str(v) for v in y])
    accuracies = []
    for f in range(k):
        test_idx = folds[f]
        train_idx = np.setdiff1d(np.arange(X.shape[0]), test_idx)
        model = fit_svm_model(
            X[train_idx],
            [y[i] for i in train_idx],
            C=config.C,
            kernel=config.kernel,
            gamma=config.gamma,
            tol=config.tol,
        )
        values = decision_function(model, X[test_idx])
        signed = as_signed_labels([y[i] for i in test_idx])
        predicted = np.where(values >= 0, 1, -1)
        accuracies.append(float(np.mean(predicted == signed)))
    return float(np.mean(accuracies))


def grid_search_svm(X, y, seed=0, k=5, Cs=(0.1, 1.0, 10.0), gammas=None):
    """3x3 grid over (C, gamma) scored by CV accuracy; ties prefer smaller C."""
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    if gammas is None:
        gammas = tuple(g / d for g in (0.1, 1.0, 10.0))
    best = None
    for C in Cs:
        for gamma in gammas:
            score = svm_cv_accuracy(
                X, y, k, seed, TrainConfig(C=C, kernel="rbf", gamma=gamma)
            )
            key = (score, -C, -gamma)
            if best is None or key > best[0]:
                best = (key, C, gamma, score)
    return {"C": best[1], "gamma": best[2], "score": best[3]}


def cross_validate(
    samples: Sequence[Sample],
    runs: int,
    k: int = 5,
    base_seed: int = 0,
    train_config: TrainConfig = TrainConfig(),
    split_fn=None,
) -> EvalReport:
    """Repeated stratified k-fold CV over the rated samples.

    Every training fold additionally receives all augmented samples; test
    folds are rated-only (violations raise ProtocolViolation). Run r uses a
    seed derived from (base_seed, r), so runs are independent and the whole
    report is deterministic.
    """
    samples = list(samples)
    rated = [s for s in samples if s.origin == "rated"]
    if len({s.label for s in rated}) < 2:
        raise SingleClassError("rated samples must contain both classes")
    split_fn = split_fn or default_split

    X = np.asarray([s.features.as_array() for s in samples])
    mask = (
        np.asarray(train_config.feature_mask, dtype=bool)
        if train_config.feature_mask is not None
        else None
    )
    augmented_idx = np.asarray(
        [i for i, s in enumerate(samples) if s.origin == "augmented"], dtype=np.int64
    )

    index = {label: i for i, label in enumerate(CLASS_ORDER)}
    per_run_accuracies = []
    per_run_counts = []
    pooled_true: list[Label] = []
    pooled_pred: list[Label] = []

    for run in range(runs):
        folds = split_fn(samples, k, _run_seed(base_seed, run))
        seen = np.concatenate(folds) if folds else np.array([], dtype=np.int64)
        run_true: list[Label] = []
        run_pred: list[Label] = []
        for test_idx in folds:
            test_idx = np.asarray(test_idx, dtype=np.int64)
            for i in test_idx:
                if samples[i].origin == "augmented":
                    raise ProtocolViolation(
                        f"augmented sample {samples[i].region_id!r} in a test fold"
                    )
            held_out = set(test_idx.tolist())
            train_rated = np.asarray(
                [
                    i
                    for i in range(len(samples))
                    if samples[i].origin == "rated" and i not in held_out
                ],
                dtype=np.int64,
            )
            train_idx = np.concatenate([train_rated, augmented_idx])
            model = fit_svm_model(
                X[train_idx],
                [samples[i].label for i in train_idx],
                C=train_config.C,
                kernel=train_config.kernel,
                gamma=train_config.gamma,
                feature_mask=mask,
                tol=train_config.tol,
            )
            values = decision_function(model, X[test_idx])
            run_true.extend(samples[i].label for i in test_idx)
            run_pred.extend(
                Label.ACCEPTABLE if v >= 0 else Label.UNACCEPTABLE for v in values
            )
        # every rated sample tested exactly once per run
        rated_ids = sorted(i for i, s in enumerate(samples) if s.origin == "rated")
        if sorted(seen.tolist()) != rated_ids:
            raise ProtocolViolation("folds do not partition the rated samples")

        counts = np.zeros((2, 2), dtype=np.int64)
        for t, p in zip(run_true, run_pred):
            counts[index[t], index[p]] += 1
        per_run_counts.append(counts)
        per_run_accuracies.append(float(np.trace(counts) / counts.sum()))
        pooled_true.extend(run_true)
        pooled_pred.extend(run_pred)

    pooled = classification_metrics(pooled_true, pooled_pred)
    acc = np.asarray(per_run_accuracies, dtype=np.float64)
    return EvalReport(
        runs=runs,
        mean_accuracy=float(acc.mean()),
        variance_accuracy=float(acc.var()),
        per_run_accuracies=per_run_accuracies,
        per_class=pooled.per_class,
        confusion_counts=pooled.confusion_counts,
        confusion=pooled.confusion,
        per_run_confusion_counts=per_run_counts,
    )
