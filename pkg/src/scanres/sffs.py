"""Sequential floating forward selection over the nine canonical features.

Forward steps add the feature with the best criterion gain; after each
addition, backward "float" steps remove features as long as a removal
strictly improves the best known score at the smaller size. The criterion
is seeded stratified 5-fold SVM accuracy, so the whole search is
deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .errors import InvalidDimension, SingleClassError
from .evaluation import TrainConfig, svm_cv_accuracy
from .validation import as_float_matrix

_IMPROVEMENT_EPS = 1e-12
_MAX_STEPS = 200
_CRITERION_FOLDS = 5


@dataclass
class SelectionResult:
    selected: tuple            # feature indices of the final subset, ascending
    ranking: tuple             # all features by first inclusion into a best subset
    criterion_trace: list = field(default_factory=list)  # (size, subset, score)

    def to_dict(self) -> dict:
        return {
            "selected": list(self.selected),
            "ranking": list(self.ranking),
            "trace": [
                {"size": size, "subset": list(subset), "score": score}
                for size, subset, score in self.criterion_trace
            ],
        }


def criterion(X, y, subset, eval_seed, train_config: TrainConfig = TrainConfig()) -> float:
    """Stratified 5-fold SVM accuracy restricted to the given feature subset."""
    subset = sorted(int(i) for i in subset)
    if not subset:
        raise InvalidDimension("criterion needs a nonempty feature subset")
    return svm_cv_accuracy(
        X, y, _CRITERION_FOLDS, eval_seed, train_config, subset=subset
    )


def sffs_select(
    X, y, d_target: int, eval_seed=0, train_config: TrainConfig = TrainConfig()
) -> SelectionResult:
    """Classic SFFS to a target subset size, recording the best subset per size.

    All argmax/argmin ties break toward the lowest feature index; a float
    removal must beat the best known score at that size by more than 1e-12.
    """
    X = as_float_matrix(X)
    t = X.shape[1]
    if not (1 <= d_target <= t):
        raise InvalidDimension(f"d_target must be in 1..{t}, got {d_target}")
    y = list(y)
    if len({str(v) for v in y}) < 2:
        raise SingleClassError("selection needs both classes")

    cache: dict[tuple, float] = {}

    def score(subset: tuple) -> float:
        if subset not in cache:
            cache[subset] = criterion(X, y, subset, eval_seed, train_config)
        return cache[subset]

    best_at_size: dict[int, tuple[tuple, float]] = {}

    def record(subset: tuple, value: float) -> None:
        size = len(subset)
        if size not in best_at_size or value > best_at_size[size][1] + _IMPROVEMENT_EPS:
            best_at_size[size] = (subset, value)

    current: list[int] = []
    steps = 0
    while steps < _MAX_STEPS:
        steps += 1
        # forward: add the feature with the best criterion value
        candidates = [f for f in range(t) if f not in current]
        scored = [(score(tuple(sorted(current + [f]))), -f) for f in candidates]
        best = max(scored)
        added = -best[1]
        current.append(added)
        subset = tuple(sorted(current))
        record(subset, best[0])

        # backward float: drop features while that strictly improves the
        # best known score at the smaller size
        just_added = added
        while len(current) > 2 and steps < _MAX_STEPS:
            removals = [
                (score(tuple(sorted(set(current) - {f}))), -f) for f in current
            ]
            best_removal = max(removals)
            drop = -best_removal[1]
            if drop == just_added:
                break
            smaller = len(current) - 1
            known = best_at_size.get(smaller)
            if known is not None and best_removal[0] <= known[1] + _IMPROVEMENT_EPS:
                break
            current.remove(drop)
            record(tuple(sorted(current)), best_removal[0])
            just_added = -1  # further floats may remove anything
            steps += 1

        if len(current) == d_target:
            break

    while len(current) < d_target:
        # loop guard tripped mid-float; finish with plain forward steps
        candidates = [f for f in range(t) if f not in current]
        best = max((score(tuple(sorted(current + [f]))), -f) for f in candidates)
        current.append(-best[1])
        record(tuple(sorted(current)), best[0])

    selected = tuple(sorted(best_at_size[d_target][0]))
    ranking = _ranking_from_trace(best_at_size, t)
    trace = [
        (size, best_at_size[size][0], best_at_size[size][1])
        for size in sorted(best_at_size)
        if size <= d_target
    ]
    return SelectionResult(selected=selected, ranking=ranking, criterion_trace=trace)


def _ranking_from_trace(best_at_size: dict, t: int) -> tuple:
    ranking: list[int] = []
    for size in sorted(best_at_size):
        subset, _ = best_at_size[size]
        for f in sorted(subset):
            if f not in ranking:
                ranking.append(f)
    for f in range(t):  # features never entering any best subset rank last
        if f not in ranking:
            ranking.append(f)
    return tuple(ranking)


def rank_features(
    X, y, eval_seed=0, train_config: TrainConfig = TrainConfig()
) -> tuple:
    """Importance order = first inclusion into the best subset of each size."""
    X = as_float_matrix(X)
    result = sffs_select(X, y, X.shape[1], eval_seed, train_config)
    return result.ranking


def exhaustive_best_subsets(
    X, y, eval_seed=0, train_config: TrainConfig = TrainConfig()
) -> dict[int, tuple[tuple, float]]:
    """Brute-force best subset per size under the identical criterion.

    Exponential in the feature count; intended as the oracle for small
    problems and for sensitivity experiments.
    """
    from itertools import combinations

    X = as_float_matrix(X)
    t = X.shape[1]
    best: dict[int, tuple[tuple, float]] = {}
    for size in range(1, t + 1):
        for subset in combinations(range(t), size):
            value = criterion(X, y, subset, eval_seed, train_config)
            if size not in best or value > best[size][1] + _IMPROVEMENT_EPS:
                best[size] = (subset, value)
    return best


class SffsSelector(BaseEstimator):
    """Estimator-style wrapper: fit learns the mask, transform applies it."""

    def __init__(self, d_target=5, eval_seed=0, train_config=None):
        self.d_target = d_target
        self.eval_seed = eval_seed
        self.train_config = train_config

    def fit(self, X, y):
        config = self.train_config or TrainConfig()
        self.result_ = sffs_select(X, y, self.d_target, self.eval_seed, config)
        n = np.asarray(X).shape[1]
        self.support_ = np.zeros(n, dtype=bool)
        self.support_[list(self.result_.selected)] = True
        return self

    def get_support(self):
        return self.support_

    def transform(self, X):
        return np.asarray(X)[:, self.support_]
