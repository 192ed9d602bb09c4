# -*- coding: utf-8 -*-
"""
Checkpoints - versioned .npz container for model, replay memory and run state
"""

import json
import logging
from pathlib import Path

import numpy as np

from services.backbone import DenseLayer, IncrementalModel, clone_frozen
from services.errors import InputError
from services.memory import ReplayMemory

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def save_checkpoint(path, model, memory=None, extra=None):
    """Write model parameters, memory payloads and JSON metadata to `path`"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for name, param in zip(model.parameter_names(), model.parameters()):
        arrays[f"model__{name}"] = np.asarray(param)

    meta = {
        'format_version': FORMAT_VERSION,
        'trunk': [{'activation': layer.activation, 'shape': list(layer.weights.shape)}
                  for layer in model.trunk],
        'head_count': model.head_count,
        'classes_per_head': model.classes_per_head,
        'seed_lineage': list(model.seed_lineage),
        'frozen': model.frozen,
        'memory': None,
        'extra': extra or {},
    }
    if memory is not None:
        snapshot = memory.snapshot()
        meta['memory'] = {
            'epsilon': snapshot['epsilon'],
            'classes': {str(c): [task_index, budget]
                        for c, (_, _, task_index, budget) in snapshot['classes'].items()},
        }
        for c, (features, labels, _, _) in snapshot['classes'].items():
            arrays[f"memory__{c}__features"] = np.asarray(features)
            arrays[f"memory__{c}__labels"] = np.asarray(labels)

    arrays['metadata'] = np.array(json.dumps(meta, sort_keys=True))
    # np.savez appends .npz to bare names; write through a handle to keep `path`
    with path.open('wb') as handle:
        np.savez(handle, **arrays)
    logger.debug("checkpoint written to %s", path)
    return path


def load_checkpoint(path):
    """(model, memory or None, extra dict)"""
    path = Path(path)
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise InputError(path, f"unreadable checkpoint: {e}") from e

    with archive:
        if 'metadata' not in archive.files:
            raise InputError(path, "checkpoint has no metadata entry")
        meta = json.loads(str(archive['metadata']))
        if meta.get('format_version') != FORMAT_VERSION:
            raise InputError(path, f"unsupported checkpoint format {meta.get('format_version')!r}")

        trunk = [DenseLayer(archive[f"model__trunk_{i}_weights"], archive[f"model__trunk_{i}_biases"],
                            layer['activation'])
                 for i, layer in enumerate(meta['trunk'])]
        heads = [DenseLayer(archive[f"model__head_{i}_weights"], archive[f"model__head_{i}_biases"])
                 for i in range(meta['head_count'])]
        model = IncrementalModel(trunk, heads, meta['classes_per_head'], meta['seed_lineage'])

        memory = None
        if meta['memory'] is not None:
            classes = {int(c): (archive[f"memory__{c}__features"], archive[f"memory__{c}__labels"],
                                task_index, budget)
                       for c, (task_index, budget) in meta['memory']['classes'].items()}
            memory = ReplayMemory.from_snapshot({'epsilon': meta['memory']['epsilon'],
                                                 'classes': classes})

    if meta['frozen']:
        model = clone_frozen(model)
    return model, memory, meta['extra']
