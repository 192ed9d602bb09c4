# -*- coding: utf-8 -*-
"""
Tests for the stream driver and the experiments built on it (small, fast configs)
"""

import numpy as np
import pytest

import services.harness as harness
from models.stream_config import StreamConfig
from models.task import FeatureMatrix
from services.backbone import build_model, clone_frozen, expand_head, model_fingerprint
from services.curriculum import BatchPlan
from services.errors import ConfigError, DataError, StreamError
from services.harness import (
    arms_for_grid, run_ablation, run_joint, run_stream, stream_for, summarize, sweep_memory,
    sweep_step_sizes, train_epochs,
)
from services.results import format_table, table_rows

FAST = dict(
    synthetic_classes=4, synthetic_dim=4, synthetic_separation=6.0, samples_per_class=30,
    classes_per_task=2, epochs=4, finetune_epochs=2, hidden_units=(8,), feature_dim=8,
    kmeans_restarts=2, batch_size=16,
)


def fast_config(**changes):
    return StreamConfig(**{**FAST, **changes}).validate()


class _Stop(Exception):
    pass


class TestRunStream:

    def test_records_every_stream(self):
        config = fast_config(synthetic_classes=6)
        metrics = run_stream(config, stream_for(config))
        assert metrics.streams_completed == 3
        assert [len(row) for row in metrics.accuracy_matrix] == [1, 2, 3]
        for row in metrics.accuracy_matrix:
            assert all(0.0 <= a <= 1.0 for a in row)
        first, second = metrics.records[0], metrics.records[1]
        assert first['curriculum'] is None
        assert first['forgetting'] is None
        assert sorted(second['curriculum']['ordered_classes']) == [2, 3]
        assert second['memory_size'] == 4 * 7
        assert set(second['timings']) == {'curriculum', 'train', 'select', 'finetune', 'total'}

    def test_overall_is_weighted_mean(self):
        config = fast_config()
        metrics = run_stream(config, stream_for(config))
        row, sizes = metrics.accuracy_matrix[-1], metrics.test_sizes
        expected = sum(a * n for a, n in zip(row, sizes)) / sum(sizes)
        assert metrics.overall_accuracy[-1] == pytest.approx(expected, abs=1e-9)

    def test_single_task_stream(self):
        config = fast_config(synthetic_classes=2)
        metrics = run_stream(config, stream_for(config))
        assert metrics.accuracy_matrix and len(metrics.accuracy_matrix) == 1
        summary = summarize(metrics)
        assert summary['average_incremental_accuracy'] is None
        assert summary['forgetting'] == [None]

    def test_bit_identical_reruns(self):
        config = fast_config()
        first = run_stream(config, stream_for(config))
        second = run_stream(config, stream_for(config))
        assert first.accuracy_matrix == second.accuracy_matrix
        table = lambda m: format_table(table_rows(m.overall_accuracy, summarize(m)['forgetting']))
        assert table(first) == table(second)

    def test_old_task_above_chance(self):
        config = StreamConfig(synthetic_classes=4, synthetic_dim=4, synthetic_separation=8.0,
                              classes_per_task=2).validate()
        metrics = run_stream(config, stream_for(config))
        assert metrics.accuracy_matrix[1][0] > 0.5

    def test_without_iss_keeps_same_budget(self):
        config = fast_config(iss_enabled=False, curriculum_enabled=False)
        metrics = run_stream(config, stream_for(config))
        selection = metrics.records[0]['selection']
        assert selection['criterion'] == 'random'
        assert [len(v) for v in selection['kept'].values()] == [7, 7]
        assert metrics.records[1]['curriculum'] is None

    def test_teacher_never_changes(self, monkeypatch):
        seen = []
        original = harness.train_epochs

        def spy(model, teacher, *args, **kwargs):
            before = model_fingerprint(teacher) if teacher is not None else None
            losses = original(model, teacher, *args, **kwargs)
            if teacher is not None:
                seen.append(before == model_fingerprint(teacher))
            return losses

        monkeypatch.setattr(harness, 'train_epochs', spy)
        config = fast_config()
        run_stream(config, stream_for(config))
        assert seen and all(seen)

    def test_module_errors_carry_stream_index(self, monkeypatch):
        def broken(*args, **kwargs):
            raise DataError("no samples to select from")

        monkeypatch.setattr(harness, 'select_exemplars', broken)
        config = fast_config()
        with pytest.raises(StreamError) as info:
            run_stream(config, stream_for(config))
        assert info.value.stream_index == 1
        assert isinstance(info.value.__cause__, DataError)

    def test_stream_and_config_must_agree(self):
        config = fast_config()
        with pytest.raises(ConfigError):
            run_stream(config.replace(classes_per_task=1), stream_for(config))

    def test_all_tasks_prototype_history(self):
        config = fast_config(synthetic_classes=6, prototype_history='all_tasks')
        metrics = run_stream(config, stream_for(config))
        anchors = metrics.records[2]['curriculum']['anchor_map']
        assert all(a in (0, 1, 2, 3) for a in anchors.values())

    def test_full_finetune_scope(self):
        config = fast_config(finetune_scope='full', optimizer='sgd', train_lr=0.05)
        metrics = run_stream(config, stream_for(config))
        assert metrics.records[1]['finetune_loss'] is not None


class TestResume:

    def test_resumed_run_matches_uninterrupted(self, tmp_path):
        config = fast_config(synthetic_classes=6)
        stream = stream_for(config)
        full = run_stream(config, stream)

        checkpoint = tmp_path / 'checkpoint.npz'

        def stop_after_second(record, metrics):
            if record['stream'] == 2:
                raise _Stop()

        with pytest.raises(_Stop):
            run_stream(config, stream, stop_after_second, checkpoint)
        resumed = run_stream(config, stream, checkpoint_path=checkpoint, resume_from=checkpoint)
        assert resumed.accuracy_matrix == full.accuracy_matrix
        assert resumed.overall_accuracy == full.overall_accuracy

    def test_resume_rejects_changed_config(self, tmp_path):
        config = fast_config()
        checkpoint = tmp_path / 'checkpoint.npz'
        run_stream(config, stream_for(config), checkpoint_path=checkpoint)
        changed = config.replace(epsilon=0.2)
        with pytest.raises(ConfigError):
            run_stream(changed, stream_for(changed), resume_from=checkpoint)


class TestExperiments:

    def test_arms_for_grid(self):
        assert set(arms_for_grid(['curriculum', 'iss'])) == {
            'proposed', 'without_curriculum', 'without_iss', 'without_curriculum_and_iss'}
        assert set(arms_for_grid(['iss'])) == {'proposed', 'without_iss'}
        with pytest.raises(ConfigError):
            arms_for_grid(['dropout'])

    def test_ablation_summary(self):
        results = run_ablation(fast_config(), ['curriculum'], seeds=[0, 1])
        assert set(results) == {'proposed', 'without_curriculum'}
        for arm in results.values():
            assert len(arm['per_seed']) == 2
            assert arm['mean_accuracy'] == pytest.approx(np.mean(arm['per_seed']))

    def test_memory_sweep_with_random(self):
        results = sweep_memory(fast_config(), [0.1, 0.3], seeds=[0], compare_random=True)
        assert len(results['rows']) == 4
        assert {(m['epsilon'], m['iss']) for m in results['means']} == {
            (0.1, True), (0.1, False), (0.3, True), (0.3, False)}

    def test_step_sweep(self):
        results = sweep_step_sizes(fast_config(synthetic_classes=4), [1, 2])
        assert [r['streams'] for r in results] == [4, 2]
        assert all(r['curriculum'] for r in results)
        assert all(r['total_time'] > 0 for r in results)

    def test_step_sweep_compares_curriculum(self):
        results = sweep_step_sizes(fast_config(synthetic_classes=4), [1, 2], compare_curriculum=True)
        assert [(r['classes_per_task'], r['curriculum']) for r in results] == [
            (1, True), (1, False), (2, True), (2, False)]
        assert all(r['average_accuracy'] is not None for r in results)
        assert all(r['total_time'] > 0 for r in results)

    def test_joint_reference(self):
        config = fast_config(epochs=20, train_lr=0.01)
        result = run_joint(config, stream_for(config))
        assert 0.5 < result['accuracy'] <= 1.0
        assert len(result['task_accuracy']) == 2


class TestTrainEpochs:

    def test_heads_scope_keeps_trunk_under_weight_decay(self):
        previous = expand_head(build_model(4, hidden_units=(8,), feature_dim=8, seed=0), 2, seed=1)
        teacher = clone_frozen(previous)
        model = expand_head(previous, 2, seed=2)
        rng = np.random.default_rng(5)
        data = FeatureMatrix(rng.normal(size=(40, 4)), np.repeat([0, 1, 2, 3], 10))
        plan = BatchPlan.uniform([2, 3], 3, replay_classes=(0, 1))
        trunk_before = [p.copy() for layer in model.trunk for p in (layer.weights, layer.biases)]
        head_before = model.heads[-1].weights.copy()

        for optimizer in ('sgd', 'adam'):
            config = fast_config(weight_decay=1e-2, optimizer=optimizer)
            losses = train_epochs(model, teacher, data, plan, 2, config, 0.1, seed=0, scope='heads')
            assert len(losses) == 3

        trunk_after = [p for layer in model.trunk for p in (layer.weights, layer.biases)]
        for before, after in zip(trunk_before, trunk_after):
            np.testing.assert_array_equal(before, after)
        assert not np.array_equal(head_before, model.heads[-1].weights)

    def test_full_scope_moves_trunk(self):
        model = expand_head(build_model(4, hidden_units=(8,), feature_dim=8, seed=0), 2, seed=1)
        rng = np.random.default_rng(6)
        data = FeatureMatrix(rng.normal(size=(20, 4)), np.repeat([0, 1], 10))
        before = model.trunk[0].weights.copy()
        train_epochs(model, None, data, BatchPlan.uniform([0, 1], 2), 0,
                     fast_config(optimizer='sgd'), 0.1, seed=0)
        assert not np.array_equal(before, model.trunk[0].weights)
