"""This module evaluates trained models: per-pair Dice, NJD, and
registration time, the per-step NCC curve, step-wise warped volumes,
the unregistered baseline, and the (L, lambda) ablation.

Copyright 2026 nicereg developers
"""

import os
import csv
import json
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from warnings import warn

import numpy as np
import torch

from .errors import NiceRegError, DataError
from .field import (DisplacementField, warp_trilinear, warp_nearest,
                    njd_percent, field_magnitude)
from .kernels import pyramid_tensors, warp_tensor
from .losses import local_ncc, local_ncc_tensor
from .metrics import dsc
from .network import select_propagation, SIZE_MULTIPLE
from .volume import pad_to_multiple, crop_to_shape, build_pyramid
from .volumeio import save_volume

__all__ = ('EvalReport', 'PairResult', 'StepwiseReport', 'evaluate',
           'register_volumes', 'stepwise_report', 'baseline_report',
           'ablate', 'ABLATION_COLUMNS')

logger = logging.getLogger(__name__)

# Times are wall-clock seconds per registration on the training device.
ABLATION_COLUMNS = ['L', 'lambda', 'dsc', 'njd', 'wall_seconds', 'device',
                    'status']


class PairResult(object):
    """Metrics of one registered pair."""

    def __init__(self, dsc, njd, seconds, step_ncc, mean_disp=0.0):

        self.dsc = dsc
        self.njd = njd
        self.seconds = seconds
        self.step_ncc = step_ncc
        self.mean_disp = mean_disp

    @property
    def ncc(self):
        """Full resolution NCC after registration."""
        return self.step_ncc[-1]

    def as_row(self, index):

        return [index, self.dsc, self.njd, self.seconds, self.ncc,
                self.mean_disp] + list(self.step_ncc)


class EvalReport(object):

    def __init__(self, pairs, L, exclude_preprocessing=False, pooled=False):

        if not pairs:
            raise DataError('EvalReport needs at least one pair')
        for pair in pairs:
            if len(pair.step_ncc) != L:
                raise DataError('Per-step curve has %d entries, expecting %d' %
                                (len(pair.step_ncc), L))
        self.pairs = pairs
        self.L = L
        self.exclude_preprocessing = exclude_preprocessing
        self.pooled = pooled

    def _stat(self, name):

        values = np.array([getattr(pair, name) for pair in self.pairs])
        return float(values.mean()), float(values.std())

    @property
    def dsc(self):
        """(mean, std)"""
        return self._stat('dsc')

    @property
    def njd(self):
        return self._stat('njd')

    @property
    def seconds(self):
        return self._stat('seconds')

    @property
    def ncc(self):
        return self._stat('ncc')

    @property
    def step_ncc(self):
        """Mean NCC after each step, over the pairs."""

        return [float(x) for x in
                np.mean([pair.step_ncc for pair in self.pairs], axis=0)]

    def header(self):

        timing = ('network only, pyramid and tensor setup excluded'
                  if self.exclude_preprocessing else 'full register call')
        return ['L=%d pairs=%d' % (self.L, len(self.pairs)),
                'dsc=%s' % ('pooled over labels' if self.pooled
                            else 'mean over labels'),
                'seconds=%s' % timing,
                'step ncc measured on pyramid level i for step i']

    def summary(self):

        return {'L': self.L,
                'pairs': len(self.pairs),
                'dsc_mean': self.dsc[0], 'dsc_std': self.dsc[1],
                'njd_mean': self.njd[0], 'njd_std': self.njd[1],
                'seconds_mean': self.seconds[0],
                'seconds_std': self.seconds[1],
                'ncc_mean': self.ncc[0],
                'step_ncc': self.step_ncc,
                'exclude_preprocessing': self.exclude_preprocessing,
                'pooled_dsc': self.pooled}

    def to_csv(self, filename):

        with open(filename, 'w', newline='') as f:
            for line in self.header():
                f.write('# %s\n' % line)
            writer = csv.writer(f)
            writer.writerow(['pair', 'dsc', 'njd', 'seconds', 'ncc', 'mean_disp'] +
                            ['ncc_step_%d' % (i + 1) for i in range(self.L)])
            for index, pair in enumerate(self.pairs):
                writer.writerow(pair.as_row(index))

    def __repr__(self):

        return 'EvalReport(pairs=%d, dsc=%.4f, njd=%.4f)' % (
            len(self.pairs), self.dsc[0], self.njd[0])


def _model_tensor(vol, model):

    return vol.tensor(dtype=model.dtype, device=model.device)


def step_ncc(output, fixed, moving, window=9):
    """NCC of each phi_i applied to moving pyramid level i against fixed
    level i; fixed and moving are (N, 1, D, H, W) tensors."""

    L = output.L
    fixed_pyr = pyramid_tensors(fixed, L)
    moving_pyr = pyramid_tensors(moving, L)
    return [float(local_ncc_tensor(warp_tensor(moving_pyr[i], output.phi[i]),
                                   fixed_pyr[i], window))
            for i in range(L)]


def register_volumes(model, fixed, moving):
    """Register Volumes of any size.  Volumes are padded by edge
    replication to a multiple of 16 and the fields cropped back.
    Return (RegistrationOutput, DisplacementField)."""

    if fixed.shape != moving.shape:
        raise DataError('Fixed shape %s differs from moving shape %s' %
                        (fixed.shape, moving.shape))
    padded_f, shape = pad_to_multiple(fixed, SIZE_MULTIPLE)
    padded_m, shape = pad_to_multiple(moving, SIZE_MULTIPLE)
    if padded_f.shape != shape:
        warn('Padding %s to %s for registration' % (shape, padded_f.shape))

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            output = model(_model_tensor(padded_f, model),
                           _model_tensor(padded_m, model))
    finally:
        model.train(was_training)
    phi = output.final[0].cpu().numpy()
    return output, DisplacementField(crop_to_shape(phi, shape))


def _evaluate_pair(model, pair, exclude_preprocessing, window, pooled):

    (vol_f, lab_f), (vol_m, lab_m) = pair

    if exclude_preprocessing:
        I_f = _model_tensor(vol_f, model)
        I_m = _model_tensor(vol_m, model)
        moving_pyr = pyramid_tensors(I_m, model.L)
        start = time.perf_counter()
        F_f, F_m = model.encode(I_f, I_m)
        output = model.decode(F_f, select_propagation(F_m, model.L), moving_pyr)
        seconds = time.perf_counter() - start
    else:
        start = time.perf_counter()
        I_f = _model_tensor(vol_f, model)
        I_m = _model_tensor(vol_m, model)
        output = model(I_f, I_m)
        seconds = time.perf_counter() - start

    field = DisplacementField.from_tensor(output.final[0])
    result = dsc(lab_f, warp_nearest(lab_m, field), pooled=pooled)
    return PairResult(result.mean, njd_percent(field), seconds,
                      step_ncc(output, I_f, I_m, window),
                      float(field_magnitude(field).data.mean()))


def evaluate(model, pairs, exclude_preprocessing=False, workers=1, window=9,
             pooled=False):
    """Register each ((fixed, labels), (moving, labels)) pair and
    return an EvalReport.  With workers > 1 the pairs are registered in a
    thread pool; results keep the pair order."""

    was_training = model.training
    model.eval()

    def run(pair):
        with torch.no_grad():
            return _evaluate_pair(model, pair, exclude_preprocessing,
                                  window, pooled)

    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                results = list(executor.map(run, pairs))
        else:
            results = [run(pair) for pair in pairs]
    finally:
        model.train(was_training)

    report = EvalReport(results, model.L, exclude_preprocessing, pooled)
    logger.info('Evaluated %s', report)
    return report


def baseline_report(pairs, window=9, pooled=False):
    """The metrics of the unregistered pairs, as a one-step EvalReport."""

    results = []
    for (vol_f, lab_f), (vol_m, lab_m) in pairs:
        ncc = local_ncc(vol_f.tensor(), vol_m.tensor(), window)
        results.append(PairResult(dsc(lab_f, lab_m, pooled=pooled).mean,
                                  0.0, 0.0, [float(ncc)]))
    return EvalReport(results, 1, pooled=pooled)


class StepwiseReport(object):
    """Moving image levels warped by each step's field, with their NCC
    against the matching fixed level."""

    def __init__(self, warped, fixed, ncc, fields=None):

        self.warped = warped
        self.fixed = fixed
        self.ncc = ncc
        self.fields = fields

    @property
    def L(self):
        return len(self.warped)

    @property
    def shapes(self):
        return [vol.shape for vol in self.warped]


def level_shape(shape, L, i):
    """Shape of pyramid level i of an input of the given shape, rounded
    up for sizes that are not divisible."""

    scale = 2 ** (L - i)
    return tuple(-(-n // scale) for n in shape)


def stepwise_report(model, pair, out_dir=None, window=9):
    """Warp the moving pyramid level i by phi_i for each step i.  The
    volumes are padded to a multiple of 16 for registration; the warped
    levels and fields are cropped back to the levels of the input shape.
    With out_dir, save step_<i>.nii volumes and a mid-slice montage."""

    fixed, moving = [item[0] if isinstance(item, tuple) else item
                     for item in pair]
    padded_f, shape = pad_to_multiple(fixed, SIZE_MULTIPLE)
    padded_m, shape = pad_to_multiple(moving, SIZE_MULTIPLE)
    output, field = register_volumes(model, padded_f, padded_m)

    L = model.L
    fixed_pyr = build_pyramid(padded_f, L)
    moving_pyr = build_pyramid(padded_m, L)
    warped, fixed_levels, fields, nccs = [], [], [], []
    for i in range(1, L + 1):
        level = level_shape(shape, L, i)
        vol = warp_trilinear(moving_pyr[i], output.field(i))
        vol = vol.__class__(crop_to_shape(vol.data, level))
        target = fixed_pyr[i].__class__(crop_to_shape(fixed_pyr[i].data, level))
        warped.append(vol)
        fixed_levels.append(target)
        fields.append(DisplacementField(crop_to_shape(output.field(i).data, level)))
        nccs.append(local_ncc(vol, target, window))

    report = StepwiseReport(warped, fixed_levels, nccs, fields)
    if out_dir is not None:
        from .plot import plot_stepwise

        os.makedirs(out_dir, exist_ok=True)
        for i, vol in enumerate(warped):
            save_volume(vol, os.path.join(out_dir, 'step_%d.nii' % (i + 1)))
        with open(os.path.join(out_dir, 'stepwise.json'), 'w') as f:
            json.dump({'ncc': nccs, 'shapes': [list(s) for s in report.shapes]},
                      f, indent=2)
        plot_stepwise(report, moving, fixed,
                      filename=os.path.join(out_dir, 'stepwise.png'))
    return report


def ablate(train_cfg, train_set, val_set, test_pairs, grid_L=(1, 3),
           grid_lam=(0.0, ), budget=None, out_dir='ablation', model_config=None,
           exclude_preprocessing=False):
    """Train one model per (L, lambda) cell with identical seeds and
    budget and evaluate it on test_pairs.  Write ablation.csv to out_dir
    and return its rows.  A failing cell is recorded and the run goes
    on."""

    from .training import train_loop

    os.makedirs(out_dir, exist_ok=True)
    if budget is None:
        budget = train_cfg.iterations

    rows = []
    for L in grid_L:
        for lam in grid_lam:
            cell_dir = os.path.join(out_dir, 'L%d_lam%g' % (L, lam))
            try:
                cfg = train_cfg.copy(L=L, lam=lam, iterations=budget)
                cell_model = (None if model_config is None
                              else model_config.copy(L=L))
                state = train_loop(cfg, train_set, val_set, cell_dir,
                                   model_config=cell_model)
                report = evaluate(state.model, test_pairs, exclude_preprocessing,
                                  window=cfg.ncc_window)
                row = [L, lam, report.dsc[0], report.njd[0], report.seconds[0],
                       cfg.device, 'ok']
            except (NiceRegError, RuntimeError, OSError) as e:
                logger.warning('Ablation cell L=%d lambda=%g failed: %s', L, lam, e)
                row = [L, lam, float('nan'), float('nan'), float('nan'),
                       train_cfg.device, 'failed: %s' % e]
            logger.info('Ablation cell %s', row)
            rows.append(dict(zip(ABLATION_COLUMNS, row)))

    with open(os.path.join(out_dir, 'ablation.csv'), 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=ABLATION_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows
