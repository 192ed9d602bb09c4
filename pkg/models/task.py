# -*- coding: utf-8 -*-
"""
Task data models - FeatureMatrix, TaskSet and TaskStream
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from services.errors import DataError, DomainError
from services.numkit import DTYPE, as_matrix, check_finite, make_rng


@dataclass(frozen=True)
class FeatureMatrix:
    """Batch of feature rows with one integer label per row"""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = as_matrix(self.features, "features")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.shape[0] != labels.shape[0]:
            raise DomainError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        check_finite(features, "features")
        # never freeze the caller's own buffers
        if features.flags.writeable and isinstance(self.features, np.ndarray) and \
                np.may_share_memory(features, self.features):
            features = features.copy()
        if labels.flags.writeable and isinstance(self.labels, np.ndarray) and \
                np.may_share_memory(labels, self.labels):
            labels = labels.copy()
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim), dtype=DTYPE), np.zeros(0, dtype=np.int64))

    @classmethod
    def concat(cls, parts, dim=None):
        """Row-wise concatenation; an empty part list needs `dim`"""
        parts = [p for p in parts if p is not None]
        if not parts:
            return cls.empty(dim or 0)
        return cls(np.concatenate([p.features for p in parts], axis=0),
                   np.concatenate([p.labels for p in parts], axis=0))

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def classes(self):
        """Sorted distinct labels"""
        return [int(c) for c in np.unique(self.labels)]

    def class_counts(self):
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def indices_of(self, class_id):
        return np.flatnonzero(self.labels == class_id)

    def select(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(self.features[indices], self.labels[indices])

    def for_class(self, class_id):
        return self.select(self.indices_of(class_id))

    def for_classes(self, class_ids):
        mask = np.isin(self.labels, list(class_ids))
        return self.select(np.flatnonzero(mask))

    def shuffled(self, seed, *keys):
        """Rows permuted by a seeded generator"""
        order = make_rng(seed, "shuffle", *keys).permutation(self.n_rows)
        return self.select(order)

    def relabel(self, mapping):
        """Copy with labels mapped through `mapping`"""
        labels = np.array([mapping[int(c)] for c in self.labels], dtype=np.int64)
        return FeatureMatrix(self.features, labels)


@dataclass(frozen=True)
class TaskSet:
    """One stream: k new classes with their train and test splits"""

    task_index: int
    class_ids: Tuple[int, ...]
    train: FeatureMatrix
    test: FeatureMatrix

    def __post_init__(self):
        object.__setattr__(self, "class_ids", tuple(int(c) for c in self.class_ids))
        for split_name, split in (("train", self.train), ("test", self.test)):
            unexpected = set(split.classes()) - set(self.class_ids)
            if unexpected:
                raise DataError(
                    f"task {self.task_index} {split_name} split holds foreign classes "
                    f"{sorted(unexpected)}", class_id=min(unexpected))

    @property
    def k(self):
        return len(self.class_ids)

    @property
    def samples_per_class(self):
        """Smallest per-class train count (equal for every class after stream building)"""
        counts = self.train.class_counts()
        return min(counts.get(c, 0) for c in self.class_ids)


@dataclass
class TaskStream:
    """Ordered tasks plus the mapping from output units back to source labels"""

    tasks: List[TaskSet]
    classes_per_task: int
    input_dim: int
    label_names: Dict[int, int] = field(default_factory=dict)
    dropped_classes: List[int] = field(default_factory=list)
    source: Optional[str] = None

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, index):
        return self.tasks[index]

    @property
    def total_classes(self):
        return sum(task.k for task in self.tasks)

    def to_dict(self):
        """Summary (no payloads)"""
        return {
            'source': self.source,
            'tasks': len(self.tasks),
            'classes_per_task': self.classes_per_task,
            'input_dim': self.input_dim,
            'class_order': [self.label_names.get(c, c) for t in self.tasks for c in t.class_ids],
            'dropped_classes': list(self.dropped_classes),
        }
