# -*- coding: utf-8 -*-
"""
Experiment runner - command line entry point

    python run_experiment.py run --config configs/synthetic.txt --out results/run1
    python run_experiment.py ablate --config configs/synthetic.txt --out results/ablation
    python run_experiment.py sweep-memory --config configs/synthetic.txt --compare-random --out results/memory
    python run_experiment.py synth --classes 10 --dim 16 --separation 4 --out data/synthetic.csv
"""

import argparse
import logging
import sys
from pathlib import Path

from models.stream_config import StreamConfig
from services.database import ResultsDatabase
from services.datasets import generate_synthetic, save_feature_csv
from services.errors import CILError
from services.harness import (
    run_ablation, run_joint, run_stream, stream_for, summarize, sweep_memory, sweep_step_sizes,
)
from services.results import ResultsWriter

logger = logging.getLogger('run_experiment')

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def setup_logging(level='INFO', out_dir=None):
    """Root logger: stderr, plus run.log in `out_dir` when given"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, logging.FileHandler):
            handler.close()
        root.removeHandler(handler)
    root.setLevel(getattr(logging, level.upper(), logging.INFO))
    handlers = [logging.StreamHandler()]
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(Path(out_dir) / 'run.log', encoding='utf-8'))
    for handler in handlers:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)


def _ints(text):
    return [int(part) for part in text.split(',') if part.strip()]


def _floats(text):
    return [float(part) for part in text.split(',') if part.strip()]


def _load_config(args):
    config = StreamConfig.from_file(args.config)
    if getattr(args, 'seed', None) is not None:
        config = config.replace(seed=args.seed)
    return config


def cmd_run(args):
    config = _load_config(args)
    stream = stream_for(config)
    writer = ResultsWriter(args.out) if args.out else None
    checkpoint = Path(args.out) / 'checkpoint.npz' if args.out else None
    db = ResultsDatabase() if args.store else None
    run_id = db.add_run(config, args.label) if db else None

    def on_stream(record, metrics):
        if writer:
            writer.on_stream(record, metrics)
        if db:
            db.add_stream_result(run_id, record)

    if writer:
        writer.write_config(config)
    metrics = run_stream(config, stream, on_stream, checkpoint, args.resume)
    summary = summarize(metrics)
    if writer:
        writer.finish(metrics, summary)
    if db:
        db.finish_run(run_id, summary)
    logger.info("average incremental accuracy: %s", summary['average_incremental_accuracy'])
    return summary


def cmd_ablate(args):
    config = _load_config(args)
    results = run_ablation(config, args.grid.split(','), _ints(args.seeds))
    ResultsWriter(args.out).write_json('ablation.json', results)
    for name, arm in results.items():
        logger.info("%s: mean accuracy %s, mean forgetting %s", name, arm['mean_accuracy'],
                    arm['mean_forgetting'])
    return results


def cmd_sweep_memory(args):
    config = _load_config(args)
    results = sweep_memory(config, _floats(args.epsilons), _ints(args.seeds), args.compare_random)
    ResultsWriter(args.out).write_json('memory_sweep.json', results)
    return results


def cmd_sweep_step(args):
    config = _load_config(args)
    results = sweep_step_sizes(config, _ints(args.steps), args.compare_curriculum)
    if args.out:
        ResultsWriter(args.out).write_json('step_sweep.json', results)
    for row in results:
        logger.info("k=%d curriculum %s: average accuracy %s in %.1fs", row['classes_per_task'],
                    row['curriculum'], row['average_accuracy'], row['total_time'])
    return results


def cmd_joint(args):
    config = _load_config(args)
    result = run_joint(config, stream_for(config))
    if args.out:
        ResultsWriter(args.out).write_json('joint.json', result)
    logger.info("joint accuracy: %.4f", result['accuracy'])
    return result


def cmd_synth(args):
    descriptor = generate_synthetic(args.classes, args.samples, args.dim, args.separation, args.seed)
    path = save_feature_csv(descriptor, args.out)
    logger.info("wrote %d samples of %d classes to %s", len(descriptor.data),
                len(descriptor.class_ids), path)
    return path


def build_parser():
    parser = argparse.ArgumentParser(description="Class-incremental learning experiments")
    parser.add_argument('--log-level', default='INFO')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('run', help='one incremental run')
    p.add_argument('--config', required=True)
    p.add_argument('--seed', type=int)
    p.add_argument('--out')
    p.add_argument('--resume', help='checkpoint to continue from')
    p.add_argument('--label', default='')
    p.add_argument('--store', action='store_true', help='also record the run in the results database')
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser('ablate', help='curriculum x subset-selection grid')
    p.add_argument('--config', required=True)
    p.add_argument('--grid', default='curriculum,iss')
    p.add_argument('--seeds', default='0,1,2')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser('sweep-memory', help='average accuracy per retained fraction')
    p.add_argument('--config', required=True)
    p.add_argument('--epsilons', default='0.05,0.10,0.15,0.20,0.25,0.30')
    p.add_argument('--seeds', default='0,1,2')
    p.add_argument('--compare-random', action='store_true')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_sweep_memory)

    p = sub.add_parser('sweep-step', help='average accuracy and time per classes-per-task value')
    p.add_argument('--config', required=True)
    p.add_argument('--steps', required=True)
    p.add_argument('--compare-curriculum', action='store_true')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_sweep_step)

    p = sub.add_parser('joint', help='non-incremental reference')
    p.add_argument('--config', required=True)
    p.add_argument('--out')
    p.set_defaults(handler=cmd_joint)

    p = sub.add_parser('synth', help='write a synthetic feature CSV')
    p.add_argument('--classes', type=int, required=True)
    p.add_argument('--dim', type=int, required=True)
    p.add_argument('--separation', type=float, required=True)
    p.add_argument('--samples', type=int, default=100)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = args.out if args.command in ('run', 'ablate', 'sweep-memory', 'sweep-step', 'joint') else None
    setup_logging(args.log_level, out_dir)
    try:
        args.handler(args)
    except CILError as e:
        logger.error("%s", e)
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())
