#!/usr/bin/env python
"""nicereg V0.1
Copyright (c) 2026 nicereg developers

Usage: nicereg [options] synth|train|register|evaluate|ablate|report ...
"""

from __future__ import print_function
from argparse import ArgumentParser
import json
import logging
import os
import sys
import time

logger = logging.getLogger('nicereg')


def nicereg_exception(type, value, tb):
    if hasattr(sys, 'ps1') or not sys.stderr.isatty():
        # We are not in interactive mode or we don't have a tty-like
        # device, so call the default hook
        sys.__excepthook__(type, value, tb)
    else:
        import traceback, pdb
        # We are in interactive mode, print the exception...
        traceback.print_exception(type, value, tb)
        print()
        # ...then start the debugger in post-mortem mode.
        pdb.pm()


def comma_list(convert):

    def parse(string):
        return [convert(part) for part in string.split(',') if part.strip()]
    return parse


def flag_overrides(args, names):
    """{section: {key: value}} for the command-line flags that were given."""

    overrides = {}
    for section, key, attr in names:
        val = getattr(args, attr, None)
        if val is not None:
            overrides.setdefault(section, {})[key] = val
    return overrides


def load_pairs(dataset, n, seed, split):

    from nicereg.training import draw_pairs

    subjects = getattr(dataset, split)
    return draw_pairs(subjects, n, seed)


def cmd_synth(args, config):

    from nicereg.phantom import make_dataset, save_dataset
    from nicereg.config import save_config

    data = config.data
    dataset = make_dataset(data.seed, data.n_volumes, data.shape, data.n_blobs,
                           data.max_disp, data.n_val, data.n_test)
    save_dataset(dataset, args.outdir)
    save_config(config, os.path.join(args.outdir, 'config.json'))
    print('Wrote %d subjects to %s' % (len(dataset), args.outdir))
    return 0


def cmd_train(args, config):

    from nicereg.phantom import load_dataset
    from nicereg.training import train_loop
    from nicereg.config import save_config

    dataset = load_dataset(args.datadir)
    os.makedirs(args.outdir, exist_ok=True)
    save_config(config, os.path.join(args.outdir, 'config.json'))
    state = train_loop(config.train, dataset.train, dataset.val, args.outdir,
                       resume=args.resume, model_config=config.model)
    print('Final checkpoint %s' % state.last_checkpoint)
    return 0


def cmd_register(args, config):

    from nicereg.checkpoint import load_model
    from nicereg.evaluation import register_volumes, stepwise_report
    from nicereg.field import warp_trilinear, warp_nearest, njd_percent
    from nicereg.losses import local_ncc
    from nicereg.metrics import dsc
    from nicereg.volume import normalize_intensity
    from nicereg.volumeio import load_volume, save_volume

    model = load_model(args.checkpoint, config.train.device)
    fixed = normalize_intensity(load_volume(args.fixed))
    moving = normalize_intensity(load_volume(args.moving))

    start = time.perf_counter()
    output, field = register_volumes(model, fixed, moving)
    seconds = time.perf_counter() - start

    ext = '.raw' if args.format == 'raw' else '.nii'
    os.makedirs(args.outdir, exist_ok=True)
    warped = warp_trilinear(moving, field)
    save_volume(field, os.path.join(args.outdir, 'field' + ext))
    save_volume(warped, os.path.join(args.outdir, 'warped' + ext))

    metrics = {'seconds': seconds,
               'njd': njd_percent(field),
               'ncc': float(local_ncc(warped, fixed, config.train.ncc_window)),
               'L': model.L}

    if args.moving_labels is not None:
        moving_labels = load_volume(args.moving_labels, labels=True)
        warped_labels = warp_nearest(moving_labels, field)
        save_volume(warped_labels, os.path.join(args.outdir, 'warped_labels' + ext))
        if args.fixed_labels is not None:
            fixed_labels = load_volume(args.fixed_labels, labels=True)
            result = dsc(fixed_labels, warped_labels,
                         pooled=config.eval.pooled_dsc)
            metrics['dsc'] = result.mean
            metrics['dsc_per_label'] = {str(k): v for k, v in
                                        result.per_label.items()}

    if args.emit_intermediate:
        report = stepwise_report(model, (fixed, moving),
                                 os.path.join(args.outdir, 'steps'),
                                 config.train.ncc_window)
        metrics['step_ncc'] = report.ncc
        for i, phi in enumerate(report.fields, 1):
            save_volume(phi,
                        os.path.join(args.outdir, 'steps', 'phi_%d%s' % (i, ext)))

    with open(os.path.join(args.outdir, 'metrics.json'), 'w') as f:
        json.dump(metrics, f, indent=2)
    print(json.dumps({key: val for key, val in metrics.items()
                      if not isinstance(val, dict)}))
    return 0


def cmd_evaluate(args, config):

    from nicereg.checkpoint import load_model
    from nicereg.evaluation import evaluate, baseline_report
    from nicereg.phantom import load_dataset
    from nicereg.plot import plot_step_ncc

    model = load_model(args.checkpoint, config.train.device)
    dataset = load_dataset(args.datadir)
    pairs = load_pairs(dataset, config.data.test_pairs, config.data.seed + 2,
                       'test')

    report = evaluate(model, pairs, config.eval.exclude_preprocessing,
                      config.eval.workers, config.train.ncc_window,
                      config.eval.pooled_dsc)
    baseline = baseline_report(pairs, config.train.ncc_window,
                               config.eval.pooled_dsc)

    os.makedirs(args.outdir, exist_ok=True)
    report.to_csv(os.path.join(args.outdir, 'evaluation.csv'))
    summary = {'registered': report.summary(), 'baseline': baseline.summary()}
    with open(os.path.join(args.outdir, 'summary.json'), 'w') as f:
        json.dump(summary, f, indent=2)
    plot_step_ncc(report.step_ncc, os.path.join(args.outdir, 'step_ncc.png'),
                  baseline=baseline.ncc[0])

    print('DSC %.4f +- %.4f (baseline %.4f), NJD %.4f%%, %.3f s per pair' %
          (report.dsc[0], report.dsc[1], baseline.dsc[0], report.njd[0],
           report.seconds[0]))
    return 0


def cmd_ablate(args, config):

    from nicereg.evaluation import ablate
    from nicereg.phantom import load_dataset

    dataset = load_dataset(args.datadir)
    pairs = load_pairs(dataset, config.data.test_pairs, config.data.seed + 2,
                       'test')
    rows = ablate(config.train, dataset.train, dataset.val, pairs,
                  config.eval.grid_L, config.eval.grid_lam, config.eval.budget,
                  args.outdir, config.model, config.eval.exclude_preprocessing)
    failed = [row for row in rows if row['status'] != 'ok']
    print('%d cells, %d failed; table in %s' %
          (len(rows), len(failed), os.path.join(args.outdir, 'ablation.csv')))
    return 0


def cmd_report(args, config):

    import csv
    from nicereg.plot import (plot_losses, plot_validation, plot_step_ncc,
                              plot_ablation)

    outdir = args.outdir or args.rundir
    os.makedirs(outdir, exist_ok=True)

    def path(name):
        return os.path.join(args.rundir, name)

    made = []
    if os.path.exists(path('metrics.csv')):
        made.append(plot_losses(path('metrics.csv'),
                                os.path.join(outdir, 'losses.png')))
    if os.path.exists(path('validation.csv')):
        made.append(plot_validation(path('validation.csv'),
                                    os.path.join(outdir, 'validation.png')))
    if os.path.exists(path('summary.json')):
        with open(path('summary.json')) as f:
            summary = json.load(f)
        made.append(plot_step_ncc(summary['registered']['step_ncc'],
                                  os.path.join(outdir, 'step_ncc.png'),
                                  baseline=summary['baseline']['ncc_mean']))
    if os.path.exists(path('ablation.csv')):
        with open(path('ablation.csv'), newline='') as f:
            rows = list(csv.DictReader(f))
        made.append(plot_ablation(rows, os.path.join(outdir, 'ablation.png')))

    if not made:
        logger.warning('Nothing to plot in %s', args.rundir)
    for filename in made:
        print(filename)
    return 0


def make_parser():

    parser = ArgumentParser(description='Single-pass coarse-to-fine deformable '
                            '3D image registration.')
    parser.add_argument('--version', action='version',
                        version=__doc__.split('\n')[0])

    parser.add_argument('--config', type=str, default=None,
                        help='JSON configuration file')
    parser.add_argument('--set', type=str, default=None, dest='overrides',
                        help='configuration overrides, e.g., '
                        '"train.lr=1e-3, model.enc_channels={[8, 8, 8, 8, 8]}"')
    parser.add_argument('--verbose', '-v', action='count', default=0,
                        help='log progress, twice for debug output')
    parser.add_argument('--quiet', '-q', action='store_true', default=False,
                        help='only log errors')
    parser.add_argument('--pdb', action='store_true', default=False,
                        help='enter python debugger on exception')

    sub = parser.add_subparsers(dest='command')
    sub.required = True

    p = sub.add_parser('synth', help='generate a phantom dataset')
    p.add_argument('outdir', type=str, help='output directory')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--n', type=int, default=None, dest='n_volumes',
                   help='number of subjects')
    p.add_argument('--shape', type=comma_list(int), default=None,
                   help='volume shape D,H,W')
    p.add_argument('--max-disp', type=float, default=None, dest='max_disp')
    p.set_defaults(func=cmd_synth,
                   flags=[('data', 'seed', 'seed'),
                          ('data', 'n_volumes', 'n_volumes'),
                          ('data', 'shape', 'shape'),
                          ('data', 'max_disp', 'max_disp')])

    p = sub.add_parser('train', help='train a model')
    p.add_argument('datadir', type=str, help='dataset directory')
    p.add_argument('outdir', type=str, help='run directory')
    p.add_argument('--iterations', type=int, default=None)
    p.add_argument('--L', type=int, default=None, dest='L',
                   help='number of registration steps')
    p.add_argument('--lr', type=float, default=None)
    p.add_argument('--sigma', type=float, default=None)
    p.add_argument('--lam', type=float, default=None,
                   help='negative Jacobian penalty weight')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--resume', action='store_true', default=False,
                   help='continue from the latest checkpoint')
    p.set_defaults(func=cmd_train,
                   flags=[('train', 'iterations', 'iterations'),
                          ('train', 'L', 'L'), ('model', 'L', 'L'),
                          ('train', 'lr', 'lr'), ('train', 'sigma', 'sigma'),
                          ('train', 'lam', 'lam'), ('train', 'seed', 'seed')])

    p = sub.add_parser('register', help='register a moving image to a fixed image')
    p.add_argument('checkpoint', type=str)
    p.add_argument('fixed', type=str)
    p.add_argument('moving', type=str)
    p.add_argument('outdir', type=str)
    p.add_argument('--fixed-labels', type=str, default=None, dest='fixed_labels')
    p.add_argument('--moving-labels', type=str, default=None, dest='moving_labels')
    p.add_argument('--emit-intermediate', action='store_true', default=False,
                   dest='emit_intermediate',
                   help='write the field and warped image of every step')
    p.add_argument('--format', type=str, default='nifti1',
                   choices=('nifti1', 'raw'), help='output format')
    p.set_defaults(func=cmd_register, flags=[])

    p = sub.add_parser('evaluate', help='evaluate a model on test pairs')
    p.add_argument('checkpoint', type=str)
    p.add_argument('datadir', type=str)
    p.add_argument('outdir', type=str)
    p.add_argument('--pairs', type=int, default=None, dest='test_pairs')
    p.add_argument('--exclude-preprocessing', action='store_true', default=None,
                   dest='exclude_preprocessing',
                   help='time the network only')
    p.add_argument('--workers', type=int, default=None)
    p.add_argument('--pooled-dsc', action='store_true', default=None,
                   dest='pooled_dsc')
    p.set_defaults(func=cmd_evaluate,
                   flags=[('data', 'test_pairs', 'test_pairs'),
                          ('eval', 'exclude_preprocessing', 'exclude_preprocessing'),
                          ('eval', 'workers', 'workers'),
                          ('eval', 'pooled_dsc', 'pooled_dsc')])

    p = sub.add_parser('ablate', help='train and evaluate an (L, lambda) grid')
    p.add_argument('datadir', type=str)
    p.add_argument('outdir', type=str)
    p.add_argument('--grid-L', type=comma_list(int), default=None, dest='grid_L')
    p.add_argument('--grid-lam', type=comma_list(float), default=None,
                   dest='grid_lam')
    p.add_argument('--budget', type=int, default=None,
                   help='training iterations per cell')
    p.set_defaults(func=cmd_ablate,
                   flags=[('eval', 'grid_L', 'grid_L'),
                          ('eval', 'grid_lam', 'grid_lam'),
                          ('eval', 'budget', 'budget')])

    p = sub.add_parser('report', help='plot the results in a run directory')
    p.add_argument('rundir', type=str)
    p.add_argument('--out', type=str, default=None, dest='outdir')
    p.set_defaults(func=cmd_report, flags=[])

    return parser


def main(argv=None):

    if argv is None:
        argv = sys.argv[1:]

    parser = make_parser()
    args = parser.parse_args(argv)

    if args.pdb:
        sys.excepthook = nicereg_exception

    level = logging.WARNING
    if args.quiet:
        level = logging.ERROR
    elif args.verbose == 1:
        level = logging.INFO
    elif args.verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level,
                        format='%(asctime)s %(name)s %(levelname)s: %(message)s')

    import matplotlib
    matplotlib.use('Agg')

    from nicereg.config import load_config, apply_overrides
    from nicereg.errors import NiceRegError

    try:
        config = load_config(args.config, args.overrides)
        apply_overrides(config, flag_overrides(args, args.flags))
        return args.func(args, config)
    except NiceRegError as e:
        if args.pdb:
            raise
        logger.error('%s', e)
        return e.exit_code
    except OSError as e:
        if args.pdb:
            raise
        logger.error('%s', e)
        return 1


if __name__ == '__main__':
    sys.exit(main())
