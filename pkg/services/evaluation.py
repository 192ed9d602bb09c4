# -*- coding: utf-8 -*-
"""
Evaluation - per-task accuracy, average incremental accuracy and forgetting
"""

import numpy as np

from services.backbone import predict
from services.errors import DomainError


def task_accuracy(model, task):
    """Fraction of the task's test samples whose arg-max unit is their label"""
    test = task.test
    if len(test) == 0:
        return 0.0
    return float(np.mean(predict(model, test.features) == test.labels))


def evaluate_seen(model, tasks):
    """(accuracy per task, test size per task) over the given tasks, in order"""
    accuracies = [task_accuracy(model, task) for task in tasks]
    sizes = [len(task.test) for task in tasks]
    return accuracies, sizes


def average_incremental_accuracy(metrics):
    """Mean overall accuracy over streams 2..T; stream 1 is not incremental"""
    overall = metrics.overall_accuracy
    if len(overall) < 2:
        raise DomainError(f"average incremental accuracy needs at least 2 streams, got {len(overall)}")
    return float(sum(overall[1:]) / (len(overall) - 1))


def forgetting_measure(metrics, t):
    """Mean over old tasks j < t of max_{l<t} a[l][j] − a[t][j]"""
    a = metrics.accuracy_matrix
    if not 2 <= t <= len(a):
        raise DomainError(f"forgetting is defined for streams 2..{len(a)}, got t={t}")
    drops = []
    for j in range(t - 1):
        best = max(a[l][j] for l in range(j, t - 1))
        drops.append(best - a[t - 1][j])
    return float(sum(drops) / len(drops))


def forgetting_curve(metrics):
    """Forgetting at every stream (None for stream 1)"""
    return [None] + [forgetting_measure(metrics, t) for t in range(2, metrics.streams_completed + 1)]
