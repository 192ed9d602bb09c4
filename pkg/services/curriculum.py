# -*- coding: utf-8 -*-
"""
Curriculum - orders a task's new classes by prototype similarity to the
classes learned in the previous task, and turns the order into a staged
class-admission schedule
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from services.backbone import extract_features
from services.errors import DataError, DomainError
from services.numkit import as_matrix, cosine_matrix, make_rng

logger = logging.getLogger(__name__)


@dataclass
class PrototypeTable:
    """Mean penultimate feature per class"""

    task_index: int
    prototypes: Dict[int, np.ndarray]
    samples_per_class: int

    def __post_init__(self):
        dims = {p.shape for p in self.prototypes.values()}
        if len(dims) > 1:
            raise DomainError(f"prototypes of unequal dimension: {sorted(dims)}")

    @property
    def class_ids(self):
        return sorted(self.prototypes)

    @property
    def dim(self):
        return next(iter(self.prototypes.values())).shape[0] if self.prototypes else 0

    def as_matrix(self):
        return np.stack([self.prototypes[c] for c in self.class_ids]) if self.prototypes else \
            np.zeros((0, 0))

    def merged(self, other):
        """Union of two tables; later entries win"""
        prototypes = dict(self.prototypes)
        prototypes.update(other.prototypes)
        return PrototypeTable(max(self.task_index, other.task_index), prototypes,
                              min(self.samples_per_class, other.samples_per_class))

    def to_dict(self):
        return {
            'task_index': self.task_index,
            'samples_per_class': self.samples_per_class,
            'prototypes': {str(c): self.prototypes[c].tolist() for c in self.class_ids},
        }

    @staticmethod
    def from_dict(data):
        return PrototypeTable(
            int(data['task_index']),
            {int(c): np.asarray(v, dtype=np.float64) for c, v in data['prototypes'].items()},
            int(data['samples_per_class']))


@dataclass
class Curriculum:
    """Training order of a task's new classes"""

    task_index: int
    ordered_classes: List[int]
    scores: Dict[int, float] = field(default_factory=dict)
    anchor_map: Dict[int, int] = field(default_factory=dict)

    def rank_of(self, class_id):
        return self.ordered_classes.index(class_id) + 1

    def to_dict(self):
        return {
            'task_index': self.task_index,
            'ordered_classes': list(self.ordered_classes),
            'scores': {str(c): s for c, s in self.scores.items()},
            'anchor_map': {str(c): a for c, a in self.anchor_map.items()},
        }


@dataclass
class BatchPlan:
    """Classes admitted in every epoch; replayed classes are always admitted"""

    epochs: List[Tuple[int, ...]]
    replay_classes: Tuple[int, ...] = ()

    @classmethod
    def uniform(cls, class_ids, epochs, replay_classes=()):
        """No curriculum: every class in every epoch"""
        admitted = tuple(sorted(int(c) for c in class_ids))
        return cls([admitted] * int(epochs), tuple(sorted(replay_classes)))

    def __len__(self):
        return len(self.epochs)

    def admitted(self, epoch):
        """Classes whose samples enter epoch `epoch` (0-based)"""
        return self.epochs[epoch] + self.replay_classes

    def epoch_indices(self, epoch, labels, seed):
        """Shuffled row indices of `labels` admitted in `epoch`"""
        labels = np.asarray(labels)
        rows = np.flatnonzero(np.isin(labels, self.admitted(epoch)))
        return rows[make_rng(seed, 'epoch', epoch).permutation(rows.size)]

    def to_dict(self):
        return {'epochs': [list(e) for e in self.epochs], 'replay_classes': list(self.replay_classes)}


def prototypes_from_features(features, labels, class_ids, task_index):
    """Class means of precomputed feature rows"""
    features = as_matrix(features, "features")
    labels = np.asarray(labels)
    prototypes = {}
    counts = []
    for class_id in class_ids:
        rows = features[labels == class_id]
        if rows.shape[0] == 0:
            raise DataError(f"class {class_id} has no samples in task {task_index}", class_id=class_id)
        prototypes[int(class_id)] = rows.mean(axis=0)
        counts.append(rows.shape[0])
    return PrototypeTable(task_index, prototypes, min(counts) if counts else 0)


def compute_prototypes(model, data):
    """μ_q = mean of the model's penultimate features over class q's train samples"""
    features = extract_features(model, data.train.features)
    return prototypes_from_features(features, data.train.labels, data.class_ids, data.task_index)


def similarity_matrix(old, new):
    """S[r][c] = cosine(μ_r, μ_c); rows follow old.class_ids, columns new.class_ids"""
    if not old.prototypes or not new.prototypes:
        raise DomainError("similarity needs two nonempty prototype tables")
    if old.dim != new.dim:
        raise DomainError(f"prototype dimension mismatch: {old.dim} vs {new.dim}")
    return cosine_matrix(old.as_matrix(), new.as_matrix())


def generate_curriculum(S, new_class_ids, task_index=0, old_class_ids=None,
                        most_similar_first=True):
    """Order new classes by their best similarity to any old class

    score(c) = max_r S[r][c]; ties go to the smaller class id. anchor_map[c] is
    the arg-max row (mapped through old_class_ids when given).
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.size == 0:
        raise DomainError("similarity matrix is empty")
    new_class_ids = [int(c) for c in new_class_ids]
    if S.shape[1] != len(new_class_ids):
        raise DomainError(f"similarity matrix has {S.shape[1]} columns for "
                          f"{len(new_class_ids)} new classes")
    rows = list(range(S.shape[0])) if old_class_ids is None else [int(r) for r in old_class_ids]
    if len(rows) != S.shape[0]:
        raise DomainError(f"{len(rows)} old class ids for {S.shape[0]} similarity rows")

    best_rows = np.argmax(S, axis=0)
    scores = {c: float(S[best_rows[j], j]) for j, c in enumerate(new_class_ids)}
    anchors = {c: rows[int(best_rows[j])] for j, c in enumerate(new_class_ids)}
    sign = -1.0 if most_similar_first else 1.0
    ordered = sorted(new_class_ids, key=lambda c: (sign * scores[c], c))
    return Curriculum(task_index, ordered, scores, anchors)


def schedule_batches(curriculum, data, epochs, phase_fraction, replay_classes=()):
    """Staged admission for the first ceil(phase_fraction·epochs) epochs, then all classes

    During the staged phase the number of admitted classes after e staged epochs
    is ceil(e·k / staged), so ranks enter evenly spaced and the last staged epoch
    admits everything.
    """
    if not 0 < phase_fraction <= 1:
        raise DomainError(f"phase_fraction must lie in (0, 1], got {phase_fraction}")
    ordered = [int(c) for c in curriculum.ordered_classes]
    if sorted(ordered) != sorted(data.class_ids):
        raise DomainError(f"curriculum {ordered} is not a permutation of task classes "
                          f"{list(data.class_ids)}")
    k = len(ordered)
    staged = math.ceil(phase_fraction * epochs - 1e-9)
    everything = tuple(sorted(ordered))
    plan = []
    for epoch in range(1, int(epochs) + 1):
        if epoch <= staged:
            admitted = ordered[:-(-epoch * k // staged)]
            plan.append(tuple(sorted(admitted)))
        else:
            plan.append(everything)
    logger.debug("task %d schedule: %s", curriculum.task_index, plan)
    return BatchPlan(plan, tuple(sorted(replay_classes)))
