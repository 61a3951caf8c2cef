# -*- coding: utf-8 -*-
"""
neurograph command line: phantom generation, training, inference,
evaluation and gradient checks.
"""

import argparse
import logging
import sys

from config import TrainConfig
from constants import EXIT_DIVERGED, EXIT_GRADCHECK, EXIT_OK, EXIT_USAGE
from core.checkpoint import load_checkpoint, save_checkpoint
from core.nifti import read_volume
from core.records import write_log
from errors import NeurographError, ShapeError, TrainingDivergedError
from gradcheck import SUITES, run_checks
from phantom import (SPLITS, PhantomSpec, load_dataset, load_template,
                     make_dataset, save_dataset)
from pipeline import evaluate, infer, train

logger = logging.getLogger('neurograph')


def cmd_phantom_gen(args):
    spec = PhantomSpec(dims=args.dims, classes=args.classes, rois=args.rois,
                       subjects=args.subjects, delta=args.delta,
                       sigma=args.sigma,
                       max_translation=args.max_translation, seed=args.seed)
    save_dataset(make_dataset(spec), args.out)
    return EXIT_OK


def training_config(args, spec):
    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    changes = {'dims': spec.dims, 'classes': spec.classes,
               'rois': spec.rois}
    for key in ('mode', 'seed', 'epochs'):
        value = getattr(args, key)
        if value is not None:
            changes[key] = value
    return config.replace(**changes)


def cmd_train(args):
    dataset = load_dataset(args.data)
    config = training_config(args, dataset.spec)

    def on_stage_end(stage, params):
        save_checkpoint('{0}.stage{1}'.format(args.out, stage), params,
                        config)

    try:
        params, log = train(config, dataset, on_stage_end=on_stage_end)
    except TrainingDivergedError as exc:
        logger.error('%s; writing last stable parameters', exc)
        save_checkpoint(args.out, exc.params, config)
        if args.log:
            write_log(args.log, exc.log)
        return EXIT_DIVERGED

    save_checkpoint(args.out, params, config)
    if args.log:
        write_log(args.log, log)
    return EXIT_OK


def cmd_infer(args):
    params, config = load_checkpoint(args.ckpt)
    template = load_template(args.template, config.classes, config.rois)
    volume = read_volume(args.subject)
    if volume.shape != (config.dims,) * 3:
        raise ShapeError('Subject dims {0} do not match checkpoint dims {1}'
                         .format(volume.shape, config.dims))
    result = infer(params, volume, template)
    result.save(args.out)
    logger.info('Predicted class %d', result.prediction)
    return EXIT_OK


def cmd_eval(args):
    params, _ = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    table = evaluate(params, dataset.split(args.split), dataset.template,
                     oracle=args.oracle)
    table.save(args.out)
    for metric, (mean, std) in table.summary().items():
        logger.info('%-13s %.4f +- %.4f', metric, mean, std)
    return EXIT_OK


def cmd_gradcheck(args):
    modules = [args.module] if args.module else None
    results = run_checks(modules, args.trials, args.seed)
    for result in results:
        print('{0:<12} {1:<16} {2:.3e} {3}'.format(
            result.suite, result.name, result.error,
            'ok' if result.passed else 'FAIL'))
    failed = [result for result in results if not result.passed]
    if failed:
        logger.error('Gradient check failed: %s', ', '.join(
            '{0}/{1}'.format(r.suite, r.name) for r in failed))
        return EXIT_GRADCHECK
    return EXIT_OK


COMMANDS = {
    'phantom-gen': cmd_phantom_gen,
    'train': cmd_train,
    'infer': cmd_infer,
    'eval': cmd_eval,
    'gradcheck': cmd_gradcheck,
}


def build_parser():
    defaults = PhantomSpec()
    parser = argparse.ArgumentParser(
        prog='neurograph',
        description='Joint brain extraction, registration, segmentation, '
                    'parcellation and graph classification')
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='debug logging')
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('phantom-gen', help='generate a dataset')
    gen.add_argument('--out', required=True)
    gen.add_argument('--dims', type=int, default=defaults.dims)
    gen.add_argument('--classes', type=int, default=defaults.classes)
    gen.add_argument('--rois', type=int, default=defaults.rois)
    gen.add_argument('--subjects', type=int, default=defaults.subjects)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--delta', type=float, default=defaults.delta)
    gen.add_argument('--sigma', type=float, default=defaults.sigma)
    gen.add_argument('--max-translation', type=float,
                     default=defaults.max_translation)

    trainer = commands.add_parser('train', help='train a model')
    trainer.add_argument('--data', required=True)
    trainer.add_argument('--config')
    trainer.add_argument('--mode', choices=('joint', 'staged'))
    trainer.add_argument('--out', required=True)
    trainer.add_argument('--log')
    trainer.add_argument('--seed', type=int)
    trainer.add_argument('--epochs', type=int)

    inference = commands.add_parser('infer', help='run one subject')
    inference.add_argument('--ckpt', required=True)
    inference.add_argument('--subject', required=True)
    inference.add_argument('--template', required=True)
    inference.add_argument('--out', required=True)

    evaluation = commands.add_parser('eval', help='evaluate a split')
    evaluation.add_argument('--ckpt', required=True)
    evaluation.add_argument('--data', required=True)
    evaluation.add_argument('--split', choices=SPLITS, default='test')
    evaluation.add_argument('--out', required=True)
    evaluation.add_argument('--oracle', action='store_true',
                            help='inject ground-truth masks and transforms')

    grad = commands.add_parser('gradcheck', help='finite-difference checks')
    grad.add_argument('--module', choices=tuple(SUITES))
    grad.add_argument('--trials', type=int, default=1)
    grad.add_argument('--seed', type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return COMMANDS[args.command](args)
    except (NeurographError, OSError, ValueError) as exc:
        logger.error('%s', exc)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
