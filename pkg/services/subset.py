# -*- coding: utf-8 -*-
"""
Informative subset selection - k-means over a task's features, per-sample
cluster-membership entropy, and an epsilon-fraction exemplar budget per class
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from services.errors import DataError, DomainError
from services.numkit import (
    as_matrix, as_vector, derive_seed, make_rng, pairwise_squared_distances, row_entropy,
)

logger = logging.getLogger(__name__)


@dataclass
class ClusterModel:
    """Result of one k-means run"""

    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_history: List[float] = field(default_factory=list)
    iterations: int = 0
    seed: int = 0

    @property
    def k(self):
        return self.centroids.shape[0]


@dataclass
class SelectionResult:
    """Exemplars kept per class, in ranking order"""

    kept: Dict[int, List[int]]
    scores: Dict[int, float] = field(default_factory=dict)
    distances: Dict[int, float] = field(default_factory=dict)
    inertia: float = 0.0
    criterion: str = 'entropy'

    @property
    def total_kept(self):
        return sum(len(v) for v in self.kept.values())

    def audit(self):
        """Per-stream selection record for the results log"""
        return {
            'criterion': self.criterion,
            'inertia': self.inertia,
            'kept': {str(c): list(idx) for c, idx in sorted(self.kept.items())},
            'scores': {str(c): [self.scores[i] for i in idx]
                       for c, idx in sorted(self.kept.items()) if self.scores},
        }


def exemplar_budget(epsilon, count):
    """floor(ε·N), robust to binary rounding of ε"""
    return int(math.floor(epsilon * count + 1e-9))


def _kmeans_pp_init(X, k, rng):
    n = X.shape[0]
    centroids = [X[rng.integers(n)]]
    closest = pairwise_squared_distances(X, np.asarray(centroids))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            index = rng.choice(n, p=closest / total)
        else:
            index = rng.integers(n)
        centroids.append(X[index])
        closest = np.minimum(closest, pairwise_squared_distances(X, X[index:index + 1])[:, 0])
    return np.array(centroids)


def _assign(X, centroids):
    d2 = pairwise_squared_distances(X, centroids)
    labels = np.argmin(d2, axis=1)
    own = d2[np.arange(X.shape[0]), labels]
    return labels, own


def kmeans(features, k, seed, max_iter=100, tol=1e-6):
    """Lloyd's algorithm with k-means++ seeding

    Empty clusters are re-seeded from the point farthest from its own centroid.
    Stops when no centroid moves by `tol` or more, or after max_iter updates.
    """
    X = as_matrix(features, "features")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if X.shape[0] < k:
        raise DomainError(f"{X.shape[0]} rows cannot form {k} clusters")

    rng = make_rng(seed, 'kmeans')
    centroids = _kmeans_pp_init(X, k, rng)
    labels, own = _assign(X, centroids)
    history = [float(own.sum())]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        updated = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for cluster in np.flatnonzero(counts):
            updated[cluster] = X[labels == cluster].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            far = own.copy()
            for cluster in empty:
                index = int(np.argmax(far))
                updated[cluster] = X[index]
                far[index] = -1.0
            logger.debug("re-seeded %d empty cluster(s)", empty.size)
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        labels, own = _assign(X, centroids)
        history.append(float(own.sum()))
        if shift < tol:
            break
    return ClusterModel(centroids, labels, history[-1], history, iterations, int(seed))


def best_kmeans(features, k, seed, restarts=5, max_iter=100, tol=1e-6):
    """Lowest-inertia run over `restarts` derived seeds (first one wins ties)"""
    best = None
    for restart in range(restarts):
        run = kmeans(features, k, derive_seed(seed, 'restart', restart), max_iter, tol)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def membership_matrix(features, centroids):
    """Row i: p_l ∝ exp(−‖x_i − Γ_l‖²), stabilised by shifting the smallest distance"""
    X = as_matrix(features, "features")
    C = as_matrix(centroids, "centroids")
    if C.shape[0] == 0:
        raise DomainError("at least one centroid is required")
    if X.shape[1] != C.shape[1]:
        raise DomainError(f"dimension mismatch: features {X.shape[1]}, centroids {C.shape[1]}")
    neg = -pairwise_squared_distances(X, C)
    neg -= neg.max(axis=1, keepdims=True)
    exp = np.exp(neg)
    return exp / exp.sum(axis=1, keepdims=True)


def membership_probabilities(feature, centroids):
    """Cluster-membership probability vector of one feature"""
    feature = as_vector(feature, "feature")
    return membership_matrix(feature.reshape(1, -1), centroids)[0]


def entropy_scores(features, centroids):
    """Entropy of every row's membership vector, each in [0, ln k]"""
    X = as_matrix(features, "features")
    if X.shape[0] == 0:
        raise DomainError("no features to score")
    return row_entropy(membership_matrix(X, centroids))


def _validate_selection_inputs(labels, epsilon, n_rows):
    if not 0 < epsilon <= 1:
        raise DomainError(f"epsilon must lie in (0, 1], got {epsilon}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n_rows:
        raise DomainError(f"{n_rows} feature rows but {labels.shape[0]} labels")
    if labels.size == 0:
        raise DataError("no samples to select from")
    return labels


def select_exemplars(features, labels, epsilon, seed, criterion='entropy', restarts=5,
                     max_iter=100, tol=1e-6):
    """Keep the floor(ε·N_c) most confidently clustered samples of every class

    Ranking key within a class: (entropy, distance to own centroid, index); with
    criterion='distance' the first two swap.
    """
    X = as_matrix(features, "features")
    labels = _validate_selection_inputs(labels, epsilon, X.shape[0])
    if criterion not in ('entropy', 'distance'):
        raise DomainError(f"unknown selection criterion '{criterion}'")
    classes = sorted(int(c) for c in np.unique(labels))

    clusters = best_kmeans(X, len(classes), seed, restarts, max_iter, tol)
    scores = entropy_scores(X, clusters.centroids)
    own = pairwise_squared_distances(X, clusters.centroids)[np.arange(X.shape[0]),
                                                            clusters.assignments]
    kept = {}
    for class_id in classes:
        members = np.flatnonzero(labels == class_id)
        if criterion == 'entropy':
            order = np.lexsort((members, own[members], scores[members]))
        else:
            order = np.lexsort((members, scores[members], own[members]))
        budget = exemplar_budget(epsilon, members.size)
        kept[class_id] = [int(i) for i in members[order][:budget]]

    logger.info("selected %d of %d samples (%s, inertia %.4f)",
                sum(len(v) for v in kept.values()), X.shape[0], criterion, clusters.inertia)
    return SelectionResult(
        kept,
        {int(i): float(scores[i]) for i in range(X.shape[0])},
        {int(i): float(own[i]) for i in range(X.shape[0])},
        clusters.inertia, criterion)


def select_random(labels, epsilon, seed):
    """Uniform-random exemplars with the same per-class budget"""
    labels = _validate_selection_inputs(labels, epsilon, np.asarray(labels).reshape(-1).shape[0])
    rng = make_rng(seed, 'random-selection')
    kept = {}
    for class_id in sorted(int(c) for c in np.unique(labels)):
        members = np.flatnonzero(labels == class_id)
        budget = exemplar_budget(epsilon, members.size)
        kept[class_id] = sorted(int(i) for i in rng.choice(members, size=budget, replace=False))
    return SelectionResult(kept, criterion='random')
