# -*- coding: utf-8 -*-
"""
Stream metrics model - StreamMetrics
"""

from dataclasses import dataclass, field
from typing import Dict, List


@dataclass
class StreamMetrics:
    """Accuracy matrix and per-stream records of one run

    accuracy_matrix[t - 1][j - 1] is the accuracy on task j's test split after
    training stream t (defined for j <= t only).
    """

    accuracy_matrix: List[List[float]] = field(default_factory=list)
    overall_accuracy: List[float] = field(default_factory=list)
    test_sizes: List[int] = field(default_factory=list)
    wall_times: List[float] = field(default_factory=list)
    records: List[Dict] = field(default_factory=list)

    @property
    def streams_completed(self):
        return len(self.accuracy_matrix)

    def add_stream(self, accuracies, test_sizes, wall_time, record=None):
        """Append row a[t][1..t]; overall accuracy is the sample-weighted mean"""
        row = [float(a) for a in accuracies]
        if len(row) != self.streams_completed + 1:
            raise ValueError(f"stream {self.streams_completed + 1} needs {self.streams_completed + 1} "
                             f"accuracies, got {len(row)}")
        sizes = [int(n) for n in test_sizes]
        total = sum(sizes)
        overall = sum(a * n for a, n in zip(row, sizes)) / total if total else 0.0
        self.accuracy_matrix.append(row)
        self.overall_accuracy.append(overall)
        self.test_sizes = sizes
        self.wall_times.append(float(wall_time))
        self.records.append(record or {})
        return overall

    @property
    def total_time(self):
        return sum(self.wall_times)

    def to_dict(self):
        return {
            'accuracy_matrix': [list(row) for row in self.accuracy_matrix],
            'overall_accuracy': list(self.overall_accuracy),
            'test_sizes': list(self.test_sizes),
            'wall_times': list(self.wall_times),
            'records': list(self.records),
        }

    @staticmethod
    def from_dict(data):
        return StreamMetrics(
            accuracy_matrix=[list(row) for row in data.get('accuracy_matrix', [])],
            overall_accuracy=list(data.get('overall_accuracy', [])),
            test_sizes=list(data.get('test_sizes', [])),
            wall_times=list(data.get('wall_times', [])),
            records=list(data.get('records', [])),
        )
