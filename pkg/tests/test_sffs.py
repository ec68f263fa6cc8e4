import numpy as np
import pytest

from scanres.errors import InvalidDimension, SingleClassError
from scanres.sffs import (
    SffsSelector,
    criterion,
    exhaustive_best_subsets,
    rank_features,
    sffs_select,
)


def informative_dataset(seed=0, n=40, n_noise=2):
    """Feature 0 determines the label; the rest is noise."""
    rng = np.random.default_rng(seed)
    signal = np.concatenate([rng.uniform(1, 3, n // 2), rng.uniform(-3, -1, n // 2)])
    y = [1 if v > 0 else -1 for v in signal]
    X = np.column_stack([signal] + [rng.normal(0, 1, n) for _ in range(n_noise)])
    return X, y


def two_informative_dataset(seed=0, n=40):
    """Labels need features 0 AND 1 jointly (quadrant rule); 2 is noise."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-2, 2, n)
    b = rng.uniform(-2, 2, n)
    y = [1 if (u > 0) == (v > 0) else -1 for u, v in zip(a, b)]
    X = np.column_stack([a, b, rng.normal(0, 1, n)])
    return X, y


def random_dataset(seed, n=40, d=5):
    """Overlapping class-conditional Gaussians, 2-4 informative dims."""
    rng = np.random.default_rng(seed)
    y = [1] * (n // 2) + [-1] * (n - n // 2)
    n_informative = int(rng.integers(2, 5))
    idx = rng.permutation(d)[:n_informative]
    shift = np.zeros(d)
    shift[idx] = rng.uniform(0.6, 1.6, n_informative)
    X = np.vstack([
        rng.normal(+shift, 1.0, (n // 2, d)),
        rng.normal(-shift, 1.0, (n - n // 2, d)),
    ])
    return X, y


class TestCriterion:
    def test_perfect_feature_scores_one(self):
        X, y = informative_dataset()
        assert criterion(X, y, {0}, eval_seed=1) == 1.0

    def test_noise_feature_near_chance(self):
        scores = []
        for seed in range(6):
            rng = np.random.default_rng(100 + seed)
            X = rng.normal(0, 1, (40, 1))
            y = [1] * 20 + [-1] * 20
            scores.append(criterion(X, y, {0}, eval_seed=seed))
        assert abs(float(np.mean(scores)) - 0.5) <= 0.1

    def test_deterministic(self):
        X, y = informative_dataset(seed=3)
        a = criterion(X, y, {0, 1}, eval_seed=9)
        b = criterion(X, y, {0, 1}, eval_seed=9)
        assert a == b

    def test_empty_subset_rejected(self):
        X, y = informative_dataset()
        with pytest.raises(InvalidDimension):
            criterion(X, y, set(), eval_seed=0)


class TestSffsSelect:
    def test_d_nine_selects_all(self):
        rng = np.random.default_rng(5)
        X = rng.normal(0, 1, (30, 9))
        X[:, 0] += np.array([2] * 15 + [-2] * 15)
        y = [1] * 15 + [-1] * 15
        result = sffs_select(X, y, d_target=9, eval_seed=2)
        assert result.selected == tuple(range(9))

    def test_duplicate_feature_not_paired_with_original(self):
        X, y = two_informative_dataset(seed=7)
        X_dup = np.column_stack([X[:, 0], X[:, 0], X[:, 1]])  # 1 duplicates 0
        result = sffs_select(X_dup, y, d_target=2, eval_seed=4)
        assert set(result.selected) != {0, 1}  # complement beats the clone

    def test_matches_exhaustive_small_problems(self):
        for seed in (0, 1, 2):
            X, y = random_dataset(seed)
            result = sffs_select(X, y, d_target=5, eval_seed=seed)
            oracle = exhaustive_best_subsets(X, y, eval_seed=seed)
            by_size = {size: (sub, score) for size, sub, score in result.criterion_trace}
            for size, (best_subset, best_score) in oracle.items():
                assert size in by_size
                got_subset, got_score = by_size[size]
                assert got_score == pytest.approx(best_score, abs=1e-12)

    def test_trace_scores_are_max_observed(self):
        X, y = random_dataset(11)
        result = sffs_select(X, y, d_target=4, eval_seed=3)
        for size, subset, score in result.criterion_trace:
            assert len(subset) == size
            assert criterion(X, y, subset, eval_seed=3) == pytest.approx(score)

    def test_deterministic(self):
        X, y = random_dataset(13)
        a = sffs_select(X, y, d_target=3, eval_seed=6)
        b = sffs_select(X, y, d_target=3, eval_seed=6)
        assert a.selected == b.selected and a.ranking == b.ranking
        assert a.criterion_trace == b.criterion_trace

    def test_invalid_d(self):
        X, y = informative_dataset()
        with pytest.raises(InvalidDimension):
            sffs_select(X, y, d_target=0)
        with pytest.raises(InvalidDimension):
            sffs_select(X, y, d_target=4)  # only 3 features

    def test_single_class_rejected(self):
        X = np.random.default_rng(0).normal(0, 1, (10, 3))
        with pytest.raises(SingleClassError):
            sffs_select(X, [1] * 10, d_target=2)


class TestRankFeatures:
    def test_informative_ranked_first(self):
        X, y = informative_dataset(seed=21, n_noise=3)
        ranking = rank_features(X, y, eval_seed=5)
        assert ranking[0] == 0
        assert sorted(ranking) == list(range(4))

    def test_two_informative_in_top_two(self):
        X, y = two_informative_dataset(seed=23)
        ranking = rank_features(X, y, eval_seed=5)
        assert set(ranking[:2]) == {0, 1}

    def test_is_permutation(self):
        X, y = random_dataset(17)
        ranking = rank_features(X, y, eval_seed=1)
        assert sorted(ranking) == list(range(5))


class TestSffsSelectorEstimator:
    def test_fit_transform(self):
        X, y = informative_dataset(seed=29, n_noise=3)
        sel = SffsSelector(d_target=2, eval_seed=0).fit(X, y)
        assert sel.get_support().sum() == 2
        assert sel.get_support()[0]
        assert sel.transform(X).shape == (len(y), 2)

    def test_get_params(self):
        sel = SffsSelector(d_target=4, eval_seed=7)
        assert sel.get_params()["d_target"] == 4
