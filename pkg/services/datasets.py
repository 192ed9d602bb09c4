# -*- coding: utf-8 -*-
"""
Datasets - synthetic Gaussian classes, feature CSV files and task streams
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from models.task import FeatureMatrix, TaskSet, TaskStream
from services.errors import DataError, DomainError, InputError
from services.numkit import DTYPE, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetDescriptor:
    """Labelled feature vectors from one source"""

    name: str
    data: FeatureMatrix
    source: str = ''

    @property
    def class_ids(self):
        return self.data.classes()

    @property
    def dim(self):
        return self.data.dim


def generate_synthetic(classes, samples, dim, separation, seed):
    """One unit-variance isotropic Gaussian blob per class

    Means sit on a seeded random orthonormal frame scaled so that every pair is
    `separation` apart; with more classes than dimensions the extra means use
    random unit directions at the same radius.
    """
    if classes < 2:
        raise DomainError(f"need at least 2 classes, got {classes}")
    if dim < 2:
        raise DomainError(f"need at least 2 dimensions, got {dim}")
    rng = make_rng(seed, 'synthetic')
    frame, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    radius = separation / np.sqrt(2.0)
    directions = [frame[:, c] for c in range(min(classes, dim))]
    for _ in range(classes - len(directions)):
        v = rng.standard_normal(dim)
        directions.append(v / np.linalg.norm(v))
    means = radius * np.array(directions)

    features = np.concatenate([means[c] + rng.standard_normal((samples, dim))
                               for c in range(classes)])
    labels = np.repeat(np.arange(classes), samples)
    name = f"synthetic-c{classes}-d{dim}-s{separation:g}-seed{seed}"
    return DatasetDescriptor(name, FeatureMatrix(features, labels), 'synthetic')


def load_feature_csv(path):
    """Rows `label,f1,...,fd`; an optional header row is skipped"""
    path = Path(path)
    try:
        handle = path.open(newline='', encoding='utf-8')
    except OSError as e:
        raise InputError(path, e.strerror or str(e)) from e

    labels, rows, width = [], [], None
    with handle:
        for line_no, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if line_no == 1 and not _is_int(row[0]):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise InputError(path, f"line {line_no}: a row needs a label and at least one feature")
            elif len(row) != width:
                raise InputError(path, f"line {line_no}: {len(row)} fields, expected {width}")
            if not _is_int(row[0]) or int(row[0]) < 0:
                raise InputError(path, f"line {line_no}: label {row[0]!r} is not a non-negative integer")
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError:
                raise InputError(path, f"line {line_no}: non-numeric feature value") from None
            labels.append(int(row[0]))

    if not rows:
        raise InputError(path, "no samples")
    features = np.asarray(rows, dtype=DTYPE)
    if not np.all(np.isfinite(features)):
        raise InputError(path, "non-finite feature value")
    logger.info("loaded %d samples x %d features from %s", len(rows), width - 1, path)
    return DatasetDescriptor(path.stem, FeatureMatrix(features, labels), str(path))


def _is_int(text):
    try:
        int(text.strip())
        return True
    except ValueError:
        return False


def save_feature_csv(descriptor, path):
    data = descriptor.data
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['label'] + [f"f{i + 1}" for i in range(data.dim)])
        for label, row in zip(data.labels, data.features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])
    return path


def build_stream(source, k, seed, test_fraction=0.2):
    """Partition classes (seeded order) into tasks of k with per-class train/test splits

    Classes are relabelled to output units in stream order; trailing classes
    that do not fill a task are dropped with a warning.
    """
    if k < 1:
        raise DomainError(f"classes per task must be >= 1, got {k}")
    data = source.data
    class_ids = source.class_ids
    rng = make_rng(seed, 'class-order')
    order = [class_ids[i] for i in rng.permutation(len(class_ids))]
    usable = (len(order) // k) * k
    dropped = sorted(order[usable:])
    if dropped:
        logger.warning("dropping %d class(es) %s: %d classes do not divide into tasks of %d",
                       len(dropped), dropped, len(order), k)
    order = order[:usable]
    if not order:
        raise DataError(f"{len(class_ids)} classes cannot fill a single task of {k}")

    counts = data.class_counts()
    per_class = min(counts[c] for c in order)
    if any(counts[c] != per_class for c in order):
        logger.info("truncating every class to %d samples", per_class)
    n_test = int(round(per_class * test_fraction))
    if per_class - n_test < 1:
        raise DataError(f"{per_class} samples per class leave no training data")

    mapping = {source_label: unit for unit, source_label in enumerate(order)}
    split_rng = make_rng(seed, 'split')
    tasks = []
    for t in range(usable // k):
        train_parts, test_parts = [], []
        for source_label in order[t * k:(t + 1) * k]:
            rows = data.indices_of(source_label)[:per_class]
            rows = rows[split_rng.permutation(rows.size)]
            test_parts.append(data.select(np.sort(rows[:n_test])))
            train_parts.append(data.select(np.sort(rows[n_test:])))
        units = tuple(range(t * k, (t + 1) * k))
        tasks.append(TaskSet(
            t + 1, units,
            FeatureMatrix.concat(train_parts, data.dim).relabel(mapping),
            FeatureMatrix.concat(test_parts, data.dim).relabel(mapping)))

    return TaskStream(tasks, k, data.dim,
                      label_names={unit: label for label, unit in mapping.items()},
                      dropped_classes=dropped, source=source.name)


def load_source(config):
    """Dataset named by a StreamConfig"""
    if config.dataset == 'csv':
        return load_feature_csv(config.dataset_path)
    return generate_synthetic(config.synthetic_classes, config.samples_per_class,
                              config.synthetic_dim, config.synthetic_separation, config.seed)
