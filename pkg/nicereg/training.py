"""This module trains the registration network without supervision:
random pair sampling, ADAM updates of the multi-level loss, validation
monitoring, and resumable checkpointing.

The pair used at iteration k is drawn from a generator seeded by
(seed, k), so the pair sequence does not depend on how far the
prefetcher has run ahead and a resumed run sees the same pairs as an
uninterrupted one.

Copyright 2026 nicereg developers
"""

import os
import csv
import time
import queue
import logging
import threading
import numpy as np
import torch

from .checkpoint import save_checkpoint, load_checkpoint, latest_checkpoint
from .config import ModelConfig
from .errors import ConfigError, NumericalError
from .field import DisplacementField, warp_nearest, njd_percent
from .kernels import pyramid_tensors, warp_tensor
from .losses import total_loss, local_ncc_tensor, loss_header
from .metrics import dsc
from .network import NiceNet
from .volume import Volume

__all__ = ('TrainState', 'sample_pair', 'sample_indices', 'draw_pairs',
           'PairPrefetcher', 'train_step', 'validate', 'train_loop')

logger = logging.getLogger(__name__)

METRICS_CSV = 'metrics.csv'
VALIDATION_CSV = 'validation.csv'
VALIDATION_HEADER = ['iteration', 'mean_ncc', 'mean_dsc', 'mean_njd']


def sample_indices(n, rng):
    """Two distinct indices in range(n), uniform without replacement;
    the first is the fixed image."""

    if n < 2:
        raise ConfigError('Need at least two volumes to form a pair, got %d' % n)
    i, j = rng.choice(n, size=2, replace=False)
    return int(i), int(j)


def sample_pair(dataset, rng):
    """Return (fixed, moving) drawn from dataset."""

    i, j = sample_indices(len(dataset), rng)
    return dataset[i], dataset[j]


def draw_pairs(dataset, n, seed):
    """Return n ordered pairs drawn once with the given seed, as used for
    validation and testing."""

    rng = np.random.default_rng(seed)
    return [sample_pair(dataset, rng) for _ in range(n)]


def _image(item):
    """The volume of a subject, which is a Volume or (Volume, LabelMap)."""

    return item[0] if isinstance(item, tuple) else item


class TrainState(object):
    """Model, optimizer, iteration counter, and best validation record."""

    def __init__(self, config, model_config=None):

        if model_config is None:
            model_config = ModelConfig(L=config.L)
        elif model_config.L != config.L:
            raise ConfigError('model.L=%d differs from train.L=%d; set both '
                              '(the --L option does)' % (model_config.L, config.L))
        self.config = config
        self.model_config = model_config

        torch.manual_seed(config.seed)
        self.model = NiceNet(model_config).to(config.device)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.lr,
                                          betas=(0.9, 0.999), eps=1e-8)
        self.iteration = 0
        self.best = {}
        self.last_checkpoint = None

    def restore(self, path):
        """Load the checkpoint at path into this state."""

        data = load_checkpoint(path, self.model_config,
                               map_location=self.config.device)
        self.model.load_state_dict(data['model_state'])
        self.optimizer.load_state_dict(data['optimizer_state'])
        torch.set_rng_state(data['rng_state'])
        self.iteration = data['iteration']
        self.best = dict(data['best'])
        self.last_checkpoint = path
        logger.info('Resumed from %s at iteration %d', path, self.iteration)

    def checksum(self):
        """Sum of all parameter values, for detecting parameter changes."""

        with torch.no_grad():
            return float(sum(p.double().sum() for p in self.model.parameters()))


class PairPrefetcher(object):
    """Iterate over (iteration, fixed, moving) for the iterations
    start + 1 .. stop, with fixed and moving as (1, 1, D, H, W) tensors.

    With size > 0 a background thread fills a queue of at most size
    pairs; the order is always the iteration order."""

    def __init__(self, dataset, seed, start, stop, size=2,
                 dtype=torch.float32, device='cpu'):

        if len(dataset) < 2:
            raise ConfigError('Need at least two training volumes, got %d' %
                              len(dataset))
        self.tensors = [_image(item).tensor(dtype=dtype, device=device)
                        for item in dataset]
        self.seed = seed
        self.start = start
        self.stop = stop
        self.size = size
        self._stop = threading.Event()

    def pair(self, iteration):

        rng = np.random.default_rng([self.seed, iteration])
        i, j = sample_indices(len(self.tensors), rng)
        return iteration, self.tensors[i], self.tensors[j]

    def _produce(self, q):

        try:
            for iteration in range(self.start + 1, self.stop + 1):
                item = self.pair(iteration)
                while not self._stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        pass
                if self._stop.is_set():
                    return
        except Exception as e:
            q.put(e)

    def __iter__(self):

        if self.size <= 0:
            for iteration in range(self.start + 1, self.stop + 1):
                yield self.pair(iteration)
            return

        q = queue.Queue(maxsize=self.size)
        self._stop.clear()
        thread = threading.Thread(target=self._produce, args=(q, ), daemon=True)
        thread.start()
        try:
            for _ in range(self.start + 1, self.stop + 1):
                item = q.get()
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            self._stop.set()
            thread.join()


def train_step(state, pair, cfg=None):
    """One ADAM update on the pair (fixed, moving) of tensors or Volumes.
    Return (state, LossReport)."""

    if cfg is None:
        cfg = state.config
    model = state.model
    I_f, I_m = [x.tensor(dtype=model.dtype, device=model.device)
                if isinstance(x, Volume) else x for x in pair]

    model.train()
    state.optimizer.zero_grad()
    output = model(I_f, I_m)
    report = total_loss(pyramid_tensors(I_f, cfg.L), pyramid_tensors(I_m, cfg.L),
                        output.phi, cfg.loss_weights())
    if not report.is_finite():
        terms = report.terms()
        raise NumericalError('Non-finite loss at iteration %d: %s' %
                             (state.iteration + 1, terms), terms)
    report.total.backward()
    state.optimizer.step()
    state.iteration += 1
    return state, report


def validate(state, val_pairs):
    """Register each ((fixed, labels), (moving, labels)) pair and return
    (mean_ncc, mean_dsc, mean_njd).  Parameters are not changed."""

    if len(val_pairs) < 1:
        raise ConfigError('Need at least one validation pair')

    model = state.model
    cfg = state.config
    was_training = model.training
    model.eval()
    nccs, dscs, njds = [], [], []
    try:
        with torch.no_grad():
            for (vol_f, lab_f), (vol_m, lab_m) in val_pairs:
                I_f = vol_f.tensor(dtype=model.dtype, device=model.device)
                I_m = vol_m.tensor(dtype=model.dtype, device=model.device)
                phi = model(I_f, I_m).final
                ncc = local_ncc_tensor(warp_tensor(I_m, phi), I_f, cfg.ncc_window)
                field = DisplacementField.from_tensor(phi[0].cpu())
                nccs.append(float(ncc))
                dscs.append(dsc(lab_f, warp_nearest(lab_m, field)).mean)
                njds.append(njd_percent(field))
    finally:
        model.train(was_training)
    return float(np.mean(nccs)), float(np.mean(dscs)), float(np.mean(njds))


def _truncate_csv(filename, iteration):
    """Drop rows after iteration so a resumed run appends seamlessly."""

    if not os.path.exists(filename):
        return
    with open(filename, newline='') as f:
        rows = list(csv.reader(f))
    kept = rows[:1] + [row for row in rows[1:] if int(row[0]) <= iteration]
    with open(filename, 'w', newline='') as f:
        csv.writer(f).writerows(kept)


def _open_csv(filename, header, append):

    exists = append and os.path.exists(filename)
    f = open(filename, 'a' if exists else 'w', newline='')
    writer = csv.writer(f)
    if not exists:
        writer.writerow(header)
    return f, writer


def train_loop(cfg, train_set, val_set, out_dir, resume=False,
               model_config=None):
    """Train for cfg.iterations iterations, writing metrics.csv,
    validation.csv, and checkpoints to out_dir.  With resume, continue
    from the checkpoint named by out_dir/latest if there is one.
    Return the final TrainState."""

    if len(val_set) < 2:
        raise ConfigError('Need at least two validation volumes, got %d' %
                          len(val_set))
    if cfg.deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)

    os.makedirs(out_dir, exist_ok=True)
    state = TrainState(cfg, model_config)
    metrics_file = os.path.join(out_dir, METRICS_CSV)
    validation_file = os.path.join(out_dir, VALIDATION_CSV)

    path = latest_checkpoint(out_dir) if resume else None
    if path is not None:
        state.restore(path)
        _truncate_csv(metrics_file, state.iteration)
        _truncate_csv(validation_file, state.iteration)
    resumed = path is not None

    val_pairs = draw_pairs(val_set, cfg.val_pairs, cfg.seed + 1)
    prefetcher = PairPrefetcher(train_set, cfg.seed, state.iteration,
                                cfg.iterations, cfg.prefetch,
                                state.model.dtype, cfg.device)

    mf, metrics = _open_csv(metrics_file, loss_header(cfg.L) + ['seconds'], resumed)
    vf, validation = _open_csv(validation_file, VALIDATION_HEADER, resumed)

    def run_validation(iteration):

        ncc, mean_dsc, njd = validate(state, val_pairs)
        validation.writerow([iteration, ncc, mean_dsc, njd])
        vf.flush()
        logger.info('Iteration %d: validation NCC %.4f DSC %.4f NJD %.4f%%',
                    iteration, ncc, mean_dsc, njd)
        if not state.best or mean_dsc > state.best['mean_dsc']:
            state.best = {'iteration': iteration, 'mean_ncc': ncc,
                          'mean_dsc': mean_dsc, 'mean_njd': njd}
            if iteration > 0:
                save_checkpoint(state, out_dir, 'best.bin', mark_latest=False)

    try:
        if not resumed:
            run_validation(0)

        start = time.perf_counter()
        for iteration, I_f, I_m in prefetcher:
            state, report = train_step(state, (I_f, I_m), cfg)
            metrics.writerow(report.as_row(iteration) +
                             [time.perf_counter() - start])
            mf.flush()
            logger.debug('Iteration %d: %s', iteration, report)

            if iteration % cfg.val_interval == 0 or iteration == cfg.iterations:
                run_validation(iteration)
            if (iteration % cfg.checkpoint_interval == 0 or
                    iteration == cfg.iterations):
                state.last_checkpoint = save_checkpoint(state, out_dir)
    finally:
        mf.close()
        vf.close()

    if state.best:
        logger.info('Best validation DSC %.4f at iteration %d',
                    state.best['mean_dsc'], state.best['iteration'])
    return state
