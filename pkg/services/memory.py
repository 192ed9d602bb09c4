# -*- coding: utf-8 -*-
"""
Replay memory - retained raw exemplars of every learned class
"""

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from models.task import FeatureMatrix
from services.errors import DataError, StateError
from services.numkit import make_rng
from services.subset import exemplar_budget

logger = logging.getLogger(__name__)


@dataclass
class ReplayMemory:
    """Append-only class → exemplar store with a floor(ε·N) per-class budget

    Raw samples are stored, never features; callers re-extract features with
    the current model.
    """

    epsilon: float
    per_class: Dict[int, FeatureMatrix] = field(default_factory=dict)
    introduced_at: Dict[int, int] = field(default_factory=dict)
    budget_per_class: Dict[int, int] = field(default_factory=dict)

    @property
    def class_ids(self):
        return sorted(self.per_class)

    @property
    def sample_count(self):
        return sum(len(m) for m in self.per_class.values())

    def __len__(self):
        return self.sample_count

    def counts(self):
        return {c: len(self.per_class[c]) for c in self.class_ids}

    def classes_before(self, task_index):
        """Classes introduced strictly before `task_index`"""
        return [c for c in self.class_ids if self.introduced_at[c] < task_index]

    def absorb(self, selection, task_data):
        """New memory holding the selected raw samples of the task's classes"""
        selected = set(selection.kept)
        expected = set(task_data.class_ids)
        if selected != expected:
            raise StateError(f"selection covers classes {sorted(selected)}, task "
                             f"{task_data.task_index} has {sorted(expected)}")
        for class_id in sorted(selected):
            if class_id in self.per_class:
                raise StateError(f"class {class_id} is already stored in replay memory")

        per_class = dict(self.per_class)
        introduced_at = dict(self.introduced_at)
        budgets = dict(self.budget_per_class)
        train = task_data.train
        for class_id in sorted(selected):
            indices = np.asarray(selection.kept[class_id], dtype=np.int64)
            available = int(np.sum(train.labels == class_id))
            budget = exemplar_budget(self.epsilon, available)
            if indices.size > budget:
                raise StateError(f"class {class_id}: {indices.size} exemplars exceed the "
                                 f"budget of {budget}")
            if indices.size and np.any(train.labels[indices] != class_id):
                raise DataError(f"selection for class {class_id} holds foreign samples",
                                class_id=class_id)
            per_class[class_id] = train.select(indices)
            introduced_at[class_id] = task_data.task_index
            budgets[class_id] = budget

        logger.info("memory absorbed task %d: %d classes, %d samples stored",
                    task_data.task_index, len(per_class), sum(len(m) for m in per_class.values()))
        return ReplayMemory(self.epsilon, per_class, introduced_at, budgets)

    def old_exemplars(self, task_index, dim):
        """All stored samples of classes introduced before `task_index`"""
        parts = [self.per_class[c] for c in self.classes_before(task_index)]
        return FeatureMatrix.concat(parts, dim=dim)

    def serve_training_mix(self, task_data, seed):
        """New-task samples plus every older exemplar, shuffled by seed"""
        old = self.classes_before(task_data.task_index)
        if not old:
            return task_data.train
        mix = FeatureMatrix.concat([task_data.train, self.old_exemplars(task_data.task_index,
                                                                         task_data.train.dim)])
        return mix.shuffled(seed, 'training-mix', task_data.task_index)

    def serve_balanced(self, task_data, seed):
        """Class-balanced fine-tuning set with a perfectly flat histogram

        Every class contributes min(new-class budget, smallest class count)
        samples: old classes from memory, new classes uniformly subsampled from
        the task.
        """
        old = self.classes_before(task_data.task_index)
        if not old:
            raise StateError("balanced fine-tuning needs exemplars of earlier classes")
        train = task_data.train
        sources = {c: self.per_class[c] for c in old}
        sources.update({c: train.for_class(c) for c in task_data.class_ids})
        new_budget = min(exemplar_budget(self.epsilon, len(train.for_class(c)))
                         for c in task_data.class_ids)
        target = min([new_budget] + [len(m) for m in sources.values()])

        rng = make_rng(seed, 'balanced', task_data.task_index)
        parts = []
        for class_id in sorted(sources):
            source = sources[class_id]
            if len(source) == target:
                parts.append(source)
            else:
                parts.append(source.select(np.sort(rng.choice(len(source), size=target,
                                                              replace=False))))
        balanced = FeatureMatrix.concat(parts, dim=train.dim)
        logger.debug("balanced set: %d classes x %d samples", len(sources), target)
        return balanced.shuffled(seed, 'balanced-order', task_data.task_index)

    def snapshot(self):
        """Plain arrays for checkpointing"""
        return {
            'epsilon': self.epsilon,
            'classes': {c: (self.per_class[c].features, self.per_class[c].labels,
                            self.introduced_at[c], self.budget_per_class.get(c, len(self.per_class[c])))
                        for c in self.class_ids},
        }

    @staticmethod
    def from_snapshot(snapshot):
        per_class, introduced, budgets = {}, {}, {}
        for class_id, (features, labels, task_index, budget) in snapshot['classes'].items():
            per_class[int(class_id)] = FeatureMatrix(features, labels)
            introduced[int(class_id)] = int(task_index)
            budgets[int(class_id)] = int(budget)
        return ReplayMemory(float(snapshot['epsilon']), per_class, introduced, budgets)
