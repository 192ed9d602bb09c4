# -*- coding: utf-8 -*-
"""
Stream configuration model - StreamConfig

Config files are flat `key = value` text; `#` starts a comment.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

from services.errors import ConfigError, InputError

CHOICES = {
    'optimizer': ('adam', 'sgd'),
    'prototype_history': ('previous_task', 'all_tasks'),
    'curriculum_order': ('most_similar_first', 'least_similar_first'),
    'selection_criterion': ('entropy', 'distance'),
    'finetune_scope': ('heads', 'full'),
    'dataset': ('synthetic', 'csv'),
}

_TRUE = {'true', 'yes', 'on', '1'}
_FALSE = {'false', 'no', 'off', '0'}


@dataclass(frozen=True)
class StreamConfig:
    """Every knob of a class-incremental run"""

    classes_per_task: int = 2
    samples_per_class: int = 100
    epsilon: float = 0.3
    temperature: float = 2.0
    epochs: int = 40
    finetune_epochs: int = 30
    train_lr: float = 1e-3
    finetune_lr: float = 1e-4
    weight_decay: float = 1e-4
    optimizer: str = 'adam'
    batch_size: int = 32
    hidden_units: Tuple[int, ...] = (64,)
    feature_dim: int = 128
    curriculum_enabled: bool = True
    iss_enabled: bool = True
    seed: int = 0
    phase_fraction: float = 0.5
    prototype_history: str = 'previous_task'
    curriculum_order: str = 'most_similar_first'
    selection_criterion: str = 'entropy'
    finetune_scope: str = 'heads'
    regularizer_weight: float = 1.0
    kmeans_restarts: int = 5
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-6
    test_fraction: float = 0.2
    dataset: str = 'synthetic'
    dataset_path: str = ''
    synthetic_classes: int = 10
    synthetic_dim: int = 16
    synthetic_separation: float = 4.0
    show_progress: bool = False

    def validate(self):
        """Check the invariants; returns self so calls can be chained"""
        if self.classes_per_task < 1:
            raise ConfigError('classes_per_task', 'must be >= 1')
        if self.samples_per_class < 1:
            raise ConfigError('samples_per_class', 'must be >= 1')
        if not 0 < self.epsilon <= 1:
            raise ConfigError('epsilon', 'must lie in (0, 1]')
        if not self.temperature > 0:
            raise ConfigError('temperature', 'must be positive')
        if not 0 < self.phase_fraction <= 1:
            raise ConfigError('phase_fraction', 'must lie in (0, 1]')
        if not 0 < self.test_fraction < 1:
            raise ConfigError('test_fraction', 'must lie in (0, 1)')
        for key in ('epochs', 'finetune_epochs'):
            if getattr(self, key) < 0:
                raise ConfigError(key, 'must be >= 0')
        for key in ('batch_size', 'feature_dim', 'kmeans_restarts', 'kmeans_max_iter'):
            if getattr(self, key) < 1:
                raise ConfigError(key, 'must be >= 1')
        for key in ('train_lr', 'finetune_lr', 'weight_decay', 'regularizer_weight', 'kmeans_tol'):
            if getattr(self, key) < 0:
                raise ConfigError(key, 'must be >= 0')
        if any(units < 1 for units in self.hidden_units):
            raise ConfigError('hidden_units', 'every layer needs at least one unit')
        for key, allowed in CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(key, f"must be one of {', '.join(allowed)}")
        if self.dataset == 'csv' and not self.dataset_path:
            raise ConfigError('dataset_path', 'required when dataset = csv')
        if self.dataset == 'synthetic':
            if self.synthetic_classes < 2:
                raise ConfigError('synthetic_classes', 'must be >= 2')
            if self.synthetic_dim < 2:
                raise ConfigError('synthetic_dim', 'must be >= 2')
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes).validate()

    def to_dict(self):
        data = dataclasses.asdict(self)
        data['hidden_units'] = list(self.hidden_units)
        return data

    @classmethod
    def from_dict(cls, data):
        """Build from raw key/value pairs; strings are parsed by field type"""
        known = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in data.items():
            if key not in known:
                raise ConfigError(key, 'unknown key')
            values[key] = _parse_value(key, known[key].default, raw)
        return cls(**values).validate()

    @classmethod
    def from_file(cls, path):
        """Read a flat key = value file"""
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise InputError(path, e.strerror or str(e)) from e

        data = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError(line, f"line {line_no} is not 'key = value'")
            key, value = (part.strip() for part in line.split('=', 1))
            if key in data:
                raise ConfigError(key, f'duplicated on line {line_no}')
            data[key] = value
        return cls.from_dict(data)

    def to_file(self, path):
        lines = [f"{key} = {_format_value(value)}" for key, value in self.to_dict().items()]
        Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')


def _parse_value(key, default, raw):
    if not isinstance(raw, str):
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw)
        if isinstance(default, bool) and not isinstance(raw, bool):
            raise ConfigError(key, f'expected a boolean, got {raw!r}')
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise ConfigError(key, f'cannot parse {text!r} as {type(default).__name__}') from None
    return text


def _format_value(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ','.join(str(v) for v in value)
    return str(value)
