# -*- coding: utf-8 -*-
"""
Harness - the stream driver and the benchmark experiments built on it

Stream 1 is trained with cross-entropy only. Every later stream runs
curriculum → joint training on new data + replay → exemplar selection →
class-balanced fine-tuning → evaluation on every seen task.
"""

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from tqdm import tqdm

from models.metrics import StreamMetrics
from models.task import FeatureMatrix
from services.backbone import (
    backward, build_model, clone_frozen, expand_head, extract_features, forward, make_optimizer,
    step,
)
from services.checkpoint import load_checkpoint, save_checkpoint
from services.curriculum import (
    BatchPlan, PrototypeTable, compute_prototypes, generate_curriculum, schedule_batches,
    similarity_matrix,
)
from services.datasets import build_stream, load_source
from services.errors import CILError, ConfigError, StreamError
from services.evaluation import (
    average_incremental_accuracy, evaluate_seen, forgetting_curve, forgetting_measure,
)
from services.losses import total_loss
from services.memory import ReplayMemory
from services.numkit import derive_seed
from services.subset import select_exemplars, select_random

logger = logging.getLogger(__name__)

ARMS = {
    'proposed': {'curriculum_enabled': True, 'iss_enabled': True},
    'without_curriculum': {'curriculum_enabled': False, 'iss_enabled': True},
    'without_iss': {'curriculum_enabled': True, 'iss_enabled': False},
    'without_curriculum_and_iss': {'curriculum_enabled': False, 'iss_enabled': False},
}

GRID_FACTORS = {'curriculum': 'curriculum_enabled', 'iss': 'iss_enabled'}


@dataclass
class RunState:
    """Everything carried from one stream to the next"""

    model: object
    memory: ReplayMemory
    metrics: StreamMetrics = field(default_factory=StreamMetrics)
    prototypes: Optional[PrototypeTable] = None
    next_task: int = 1


def stream_for(config):
    """Task stream described by a config"""
    return build_stream(load_source(config), config.classes_per_task, config.seed,
                        config.test_fraction)


def train_epochs(model, teacher, data, plan, old_count, config, learning_rate, seed,
                 scope='full', desc='train'):
    """Mini-batch minimisation of L_T over the epochs of `plan`; returns mean loss per epoch"""
    optimizer = make_optimizer(model, config.optimizer, learning_rate, config.weight_decay)
    teacher_logits = None
    if teacher is not None and old_count:
        teacher_logits = forward(teacher, data.features)[1]

    epoch_losses = []
    for epoch in tqdm(range(len(plan)), desc=desc, disable=not config.show_progress, leave=False):
        order = plan.epoch_indices(epoch, data.labels, seed)
        batch_losses = []
        for start in range(0, order.size, config.batch_size):
            rows = order[start:start + config.batch_size]
            x = data.features[rows]
            _, logits = forward(model, x)
            breakdown = total_loss(
                logits, data.labels[rows],
                teacher_logits[rows] if teacher_logits is not None else None,
                old_count, config.temperature, config.regularizer_weight)
            grads = backward(model, x, breakdown.grad_wrt_logits)
            if scope == 'heads':
                grads = grads.without_trunk()
            step(optimizer, model, grads)
            batch_losses.append(breakdown.total)
        epoch_losses.append(float(np.mean(batch_losses)) if batch_losses else 0.0)
    return epoch_losses


def _learn_task(config, stream, task, state):
    t = task.task_index
    k = stream.classes_per_task
    old_count = k * (t - 1)
    timings = {}
    started = time.perf_counter()

    teacher = clone_frozen(state.model) if t > 1 else None
    model = expand_head(state.model, k, derive_seed(config.seed, 'head', t))
    replay = state.memory.classes_before(t)

    curriculum = None
    if t > 1 and config.curriculum_enabled:
        new_table = compute_prototypes(teacher, task)
        S = similarity_matrix(state.prototypes, new_table)
        curriculum = generate_curriculum(
            S, new_table.class_ids, t, state.prototypes.class_ids,
            most_similar_first=config.curriculum_order == 'most_similar_first')
        plan = schedule_batches(curriculum, task, config.epochs, config.phase_fraction, replay)
        logger.info("stream %d curriculum: %s", t, curriculum.ordered_classes)
    else:
        plan = BatchPlan.uniform(task.class_ids, config.epochs, replay)
    timings['curriculum'] = time.perf_counter() - started

    mark = time.perf_counter()
    mix = state.memory.serve_training_mix(task, config.seed)
    train_losses = train_epochs(model, teacher, mix, plan, old_count, config, config.train_lr,
                                derive_seed(config.seed, 'train', t), 'full', f"stream {t}")
    timings['train'] = time.perf_counter() - mark

    mark = time.perf_counter()
    select_seed = derive_seed(config.seed, 'select', t)
    if config.iss_enabled:
        selection = select_exemplars(
            extract_features(model, task.train.features), task.train.labels, config.epsilon,
            select_seed, config.selection_criterion, config.kmeans_restarts,
            config.kmeans_max_iter, config.kmeans_tol)
    else:
        selection = select_random(task.train.labels, config.epsilon, select_seed)
    memory = state.memory.absorb(selection, task)
    timings['select'] = time.perf_counter() - mark

    mark = time.perf_counter()
    finetune_losses = []
    if t > 1 and config.finetune_epochs > 0:
        balanced = memory.serve_balanced(task, config.seed)
        if len(balanced):
            finetune_plan = BatchPlan.uniform(balanced.classes(), config.finetune_epochs)
            finetune_losses = train_epochs(
                model, teacher, balanced, finetune_plan, old_count, config, config.finetune_lr,
                derive_seed(config.seed, 'finetune', t), config.finetune_scope,
                f"fine-tune {t}")
        else:
            logger.warning("stream %d: balanced set is empty, fine-tuning skipped", t)
    timings['finetune'] = time.perf_counter() - mark

    table = compute_prototypes(model, task)
    if config.prototype_history == 'all_tasks' and state.prototypes is not None:
        table = state.prototypes.merged(table)

    accuracies, sizes = evaluate_seen(model, stream.tasks[:t])
    wall_time = time.perf_counter() - started
    timings['total'] = wall_time

    record = {
        'stream': t,
        'classes': list(task.class_ids),
        'curriculum': curriculum.to_dict() if curriculum else None,
        'selection': selection.audit(),
        'memory_size': memory.sample_count,
        'train_loss': train_losses[-1] if train_losses else None,
        'finetune_loss': finetune_losses[-1] if finetune_losses else None,
        'timings': timings,
    }
    overall = state.metrics.add_stream(accuracies, sizes, wall_time, record)
    record['accuracy_row'] = list(state.metrics.accuracy_matrix[-1])
    record['overall_accuracy'] = overall
    record['forgetting'] = forgetting_measure(state.metrics, t) if t > 1 else None

    state.model = model
    state.memory = memory
    state.prototypes = table
    state.next_task = t + 1
    logger.info("stream %d/%d: accuracy %.4f, forgetting %s, %.2fs", t, len(stream), overall,
                'n/a' if record['forgetting'] is None else f"{record['forgetting']:.4f}", wall_time)
    return record


def _initial_state(config, stream):
    model = build_model(stream.input_dim, config.hidden_units, config.feature_dim,
                        derive_seed(config.seed, 'model'))
    return RunState(model, ReplayMemory(config.epsilon))


def _resume_state(path, config):
    model, memory, extra = load_checkpoint(path)
    saved = extra.get('config', {})
    differing = sorted(key for key, value in config.to_dict().items()
                       if key != 'show_progress' and saved.get(key) != value)
    if differing:
        raise ConfigError(differing[0], f"differs from the checkpoint at {path}")
    prototypes = extra.get('prototypes')
    return RunState(model, memory or ReplayMemory(config.epsilon),
                    StreamMetrics.from_dict(extra.get('metrics', {})),
                    PrototypeTable.from_dict(prototypes) if prototypes else None,
                    int(extra.get('next_task', 1)))


def run_stream(config, stream, on_stream=None, checkpoint_path=None, resume_from=None):
    """Learn every task of `stream` in order; returns the run's StreamMetrics

    `on_stream(record, metrics)` is called after each stream. With
    `checkpoint_path` the run state is saved after every stream, and
    `resume_from` continues a run from such a checkpoint.
    """
    config.validate()
    if stream.classes_per_task != config.classes_per_task:
        raise ConfigError('classes_per_task', f"stream was built with {stream.classes_per_task}")
    state = _resume_state(resume_from, config) if resume_from else _initial_state(config, stream)
    if resume_from:
        logger.info("resuming at stream %d from %s", state.next_task, resume_from)

    for task in stream.tasks[state.next_task - 1:]:
        try:
            record = _learn_task(config, stream, task, state)
        except CILError as e:
            raise StreamError(task.task_index, e) from e
        if checkpoint_path:
            save_checkpoint(checkpoint_path, state.model, state.memory, {
                'next_task': state.next_task,
                'metrics': state.metrics.to_dict(),
                'prototypes': state.prototypes.to_dict() if state.prototypes else None,
                'config': config.to_dict(),
            })
        if on_stream:
            on_stream(record, state.metrics)
    return state.metrics


def summarize(metrics):
    """Summary record of a finished run"""
    curve = forgetting_curve(metrics)
    return {
        'streams': metrics.streams_completed,
        'overall_accuracy': list(metrics.overall_accuracy),
        'average_incremental_accuracy':
            average_incremental_accuracy(metrics) if metrics.streams_completed >= 2 else None,
        'forgetting': curve,
        'final_forgetting': curve[-1] if curve else None,
        'total_time': metrics.total_time,
    }


def run_joint(config, stream):
    """Non-incremental reference: one head over every class, cross-entropy only"""
    config.validate()
    model = build_model(stream.input_dim, config.hidden_units, config.feature_dim,
                        derive_seed(config.seed, 'model'))
    model = expand_head(model, stream.total_classes, derive_seed(config.seed, 'joint-head'))
    data = FeatureMatrix.concat([task.train for task in stream.tasks], stream.input_dim)
    plan = BatchPlan.uniform(data.classes(), config.epochs)
    started = time.perf_counter()
    losses = train_epochs(model, None, data, plan, 0, config, config.train_lr,
                          derive_seed(config.seed, 'joint'), 'full', 'joint')
    accuracies, sizes = evaluate_seen(model, stream.tasks)
    overall = sum(a * n for a, n in zip(accuracies, sizes)) / sum(sizes)
    return {
        'accuracy': overall,
        'task_accuracy': accuracies,
        'final_loss': losses[-1] if losses else None,
        'total_time': time.perf_counter() - started,
    }


def arms_for_grid(grid):
    """Arm name → flag overrides for the on/off product of the grid factors"""
    factors = [g.strip() for g in grid if g.strip()]
    for factor in factors:
        if factor not in GRID_FACTORS:
            raise ConfigError('grid', f"unknown factor '{factor}'")
    arms = {}
    for values in itertools.product((True, False), repeat=len(factors)):
        flags = {'curriculum_enabled': True, 'iss_enabled': True}
        flags.update({GRID_FACTORS[f]: v for f, v in zip(factors, values)})
        name = next(n for n, f in ARMS.items() if f == flags)
        arms[name] = flags
    return arms


def run_ablation(config, grid=('curriculum', 'iss'), seeds=(0, 1, 2), on_run=None):
    """Every arm of the grid on every seed; the stream for a seed is shared by all arms"""
    arms = arms_for_grid(grid)
    results = {name: {'flags': flags, 'per_seed': [], 'forgetting': []}
               for name, flags in arms.items()}
    for seed in seeds:
        seeded = config.replace(seed=int(seed))
        stream = stream_for(seeded)
        for name, flags in arms.items():
            arm_config = seeded.replace(**flags)
            metrics = run_stream(arm_config, stream)
            summary = summarize(metrics)
            results[name]['per_seed'].append(summary['average_incremental_accuracy'])
            results[name]['forgetting'].append(summary['final_forgetting'])
            logger.info("ablation seed %s arm %s: average accuracy %s", seed, name,
                        summary['average_incremental_accuracy'])
            if on_run:
                on_run(name, seed, arm_config, metrics)
    for arm in results.values():
        arm['mean_accuracy'] = _mean(arm['per_seed'])
        arm['mean_forgetting'] = _mean(arm['forgetting'])
    return results


def sweep_memory(config, epsilons, seeds=(0, 1, 2), compare_random=False):
    """Average incremental accuracy per retained fraction (ISS, optionally random too)"""
    selectors = [True, False] if compare_random else [config.iss_enabled]
    rows = []
    for seed in seeds:
        seeded = config.replace(seed=int(seed))
        stream = stream_for(seeded)
        for epsilon in epsilons:
            for iss in selectors:
                metrics = run_stream(seeded.replace(epsilon=float(epsilon), iss_enabled=iss), stream)
                rows.append({'epsilon': float(epsilon), 'iss': iss, 'seed': int(seed),
                             'average_accuracy': summarize(metrics)['average_incremental_accuracy']})
                logger.info("memory sweep seed %s epsilon %.2f iss %s: %s", seed, epsilon, iss,
                            rows[-1]['average_accuracy'])
    means = {}
    for row in rows:
        means.setdefault((row['epsilon'], row['iss']), []).append(row['average_accuracy'])
    return {
        'rows': rows,
        'means': [{'epsilon': e, 'iss': iss, 'average_accuracy': _mean(values)}
                  for (e, iss), values in sorted(means.items())],
    }


def sweep_step_sizes(config, steps, compare_curriculum=False):
    """Average incremental accuracy and total time per classes-per-task value

    With `compare_curriculum` every step size is also run without the curriculum.
    """
    arms = [True, False] if compare_curriculum else [config.curriculum_enabled]
    results = []
    for k in steps:
        step_config = config.replace(classes_per_task=int(k))
        stream = stream_for(step_config)
        for curriculum in arms:
            metrics = run_stream(step_config.replace(curriculum_enabled=curriculum), stream)
            summary = summarize(metrics)
            results.append({'classes_per_task': int(k),
                            'curriculum': curriculum,
                            'streams': summary['streams'],
                            'average_accuracy': summary['average_incremental_accuracy'],
                            'total_time': summary['total_time']})
    return results


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None
