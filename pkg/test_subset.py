# -*- coding: utf-8 -*-
"""
Tests for k-means, membership entropy and exemplar selection
"""

import itertools
import math

import numpy as np
import pytest

from services.errors import DataError, DomainError
from services.subset import (
    best_kmeans, entropy_scores, exemplar_budget, kmeans, membership_matrix,
    membership_probabilities, select_exemplars, select_random,
)

EPSILONS = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 1.0)


def two_blobs(n_per_class=20, separation=10.0, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.zeros((2, dim))
    centers[1, 0] = separation
    features = np.concatenate([centers[c] + rng.normal(size=(n_per_class, dim)) for c in range(2)])
    labels = np.repeat([0, 1], n_per_class)
    return features, labels


def optimal_inertia(X, k):
    best = math.inf
    for assignment in itertools.product(range(k), repeat=X.shape[0]):
        assignment = np.array(assignment)
        if len(set(assignment)) < k:
            continue
        total = sum(((X[assignment == c] - X[assignment == c].mean(axis=0)) ** 2).sum()
                    for c in range(k))
        best = min(best, total)
    return best


class TestBudget:

    @pytest.mark.parametrize('epsilon', EPSILONS)
    @pytest.mark.parametrize('count', [7, 20, 100])
    def test_floor(self, epsilon, count):
        assert exemplar_budget(epsilon, count) == math.floor(round(epsilon * count, 9))

    def test_known_values(self):
        assert exemplar_budget(0.3, 100) == 30
        assert exemplar_budget(0.05, 7) == 0
        assert exemplar_budget(0.15, 20) == 3


class TestKMeans:

    def test_recovers_separated_blobs(self):
        X, labels = two_blobs()
        model = kmeans(X, 2, seed=0)
        first = model.assignments[labels == 0]
        second = model.assignments[labels == 1]
        assert len(set(first)) == 1 and len(set(second)) == 1
        assert first[0] != second[0]

    def test_inertia_never_increases(self):
        rng = np.random.default_rng(1)
        for trial in range(30):
            X = rng.normal(size=(rng.integers(3, 30), 2))
            k = int(rng.integers(1, min(5, X.shape[0]) + 1))
            history = kmeans(X, k, seed=trial).inertia_history
            assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(history, history[1:]))

    def test_best_of_ten_near_optimum(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            X = rng.normal(size=(int(rng.integers(3, 9)), 2))
            best = best_kmeans(X, 2, seed=trial, restarts=10)
            assert best.inertia <= optimal_inertia(X, 2) * 1.05 + 1e-12

    def test_deterministic(self):
        X, _ = two_blobs(seed=3)
        a, b = kmeans(X, 3, seed=5), kmeans(X, 3, seed=5)
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_duplicate_points(self):
        X = np.ones((6, 2))
        model = kmeans(X, 3, seed=0)
        assert model.inertia == pytest.approx(0.0)

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            kmeans(np.zeros((2, 2)), 3, seed=0)

    def test_single_cluster_is_global_mean(self):
        X = np.random.default_rng(7).normal(size=(15, 3))
        model = kmeans(X, 1, seed=0)
        np.testing.assert_allclose(model.centroids[0], X.mean(axis=0), atol=1e-12)
        assert set(model.assignments) == {0}


class TestMembership:

    def test_rows_normalized_and_entropy_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            k = int(rng.integers(1, 6))
            X = rng.normal(scale=rng.uniform(0.1, 20), size=(50, 3))
            C = rng.normal(scale=5, size=(k, 3))
            P = membership_matrix(X, C)
            np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
            h = entropy_scores(X, C)
            assert np.all(h >= -1e-12) and np.all(h <= math.log(k) + 1e-12)

    def test_equidistant_point_is_uniform(self):
        p = membership_probabilities([0.0, 0.0], [[1.0, 0.0], [-1.0, 0.0]])
        np.testing.assert_allclose(p, [0.5, 0.5])

    def test_far_points_do_not_underflow(self):
        p = membership_probabilities([1000.0, 0.0], [[999.0, 0.0], [0.0, 0.0]])
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            membership_matrix(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_entropy_translation_invariant(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(20, 3))
        C = rng.normal(size=(4, 3))
        shift = np.array([3.0, -7.5, 12.0])
        np.testing.assert_allclose(entropy_scores(X + shift, C + shift), entropy_scores(X, C),
                                   atol=1e-9)


class TestSelectExemplars:

    @pytest.mark.parametrize('epsilon', EPSILONS)
    @pytest.mark.parametrize('count', [7, 20, 100])
    def test_exact_budget(self, epsilon, count):
        X, labels = two_blobs(n_per_class=count, seed=count)
        result = select_exemplars(X, labels, epsilon, seed=0, restarts=2)
        for class_id in (0, 1):
            assert len(result.kept[class_id]) == exemplar_budget(epsilon, count)
            assert len(set(result.kept[class_id])) == len(result.kept[class_id])
            assert all(labels[i] == class_id for i in result.kept[class_id])

    @pytest.mark.parametrize('dim', [1, 2])
    def test_planted_outlier_is_pruned(self, dim):
        rng = np.random.default_rng(9)
        n = 12
        inliers = [np.zeros(dim), np.zeros(dim)]
        inliers[1][0] = 10.0
        X = np.concatenate([inliers[c] + 0.3 * rng.normal(size=(n, dim)) for c in range(2)])
        labels = np.repeat([0, 1], n)
        # class-0 sample halfway between the clusters
        X[0] = 0.0
        X[0, 0] = 5.0
        for epsilon in (0.25, 0.5, 0.75):
            kept = select_exemplars(X, labels, epsilon, seed=1).kept[0]
            assert 0 not in kept

    def test_one_dimensional_outlier(self):
        # class 0 at {0, 0.1, 0.2, 5.0}, class 1 clustered near 10
        X = np.array([[0.0], [0.1], [0.2], [5.0], [10.0], [10.1], [10.2], [10.3]])
        labels = np.repeat([0, 1], 4)
        result = select_exemplars(X, labels, 0.5, seed=0)
        assert result.kept[0] == [0, 1]
        scores = [result.scores[i] for i in range(4)]
        assert scores == sorted(scores)
        assert scores[3] > scores[2]

    def test_lowest_entropy_first(self):
        X, labels = two_blobs(seed=5)
        result = select_exemplars(X, labels, 0.3, seed=0)
        for class_id in (0, 1):
            scores = [result.scores[i] for i in result.kept[class_id]]
            assert scores == sorted(scores)
            members = np.flatnonzero(labels == class_id)
            rejected = [result.scores[i] for i in members if i not in result.kept[class_id]]
            assert max(scores) <= min(rejected)

    def test_distance_criterion(self):
        X, labels = two_blobs(seed=6)
        result = select_exemplars(X, labels, 0.2, seed=0, criterion='distance')
        distances = [result.distances[i] for i in result.kept[0]]
        assert distances == sorted(distances)

    def test_deterministic(self):
        X, labels = two_blobs(seed=7)
        assert select_exemplars(X, labels, 0.3, seed=3).kept == select_exemplars(X, labels, 0.3, seed=3).kept

    def test_rejects_bad_epsilon(self):
        X, labels = two_blobs()
        with pytest.raises(DomainError):
            select_exemplars(X, labels, 0.0, seed=0)
        with pytest.raises(DomainError):
            select_exemplars(X, labels, 1.5, seed=0)

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            select_exemplars(np.zeros((0, 2)), [], 0.3, seed=0)

    def test_audit(self):
        X, labels = two_blobs()
        audit = select_exemplars(X, labels, 0.1, seed=0).audit()
        assert audit['criterion'] == 'entropy'
        assert len(audit['kept']['0']) == 2


class TestSelectRandom:

    @pytest.mark.parametrize('epsilon', EPSILONS)
    def test_same_budget_as_iss(self, epsilon):
        _, labels = two_blobs(n_per_class=20)
        result = select_random(labels, epsilon, seed=0)
        for class_id in (0, 1):
            assert len(result.kept[class_id]) == exemplar_budget(epsilon, 20)
        assert result.criterion == 'random'

    def test_seeded(self):
        _, labels = two_blobs()
        assert select_random(labels, 0.3, seed=1).kept == select_random(labels, 0.3, seed=1).kept
