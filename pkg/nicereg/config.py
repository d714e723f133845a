"""This module contains the configuration sections and the JSON
configuration file handling.

A configuration file is a JSON object with optional sections `model`,
`train`, `data`, and `eval`; each key is documented in
doc/config.rst.  Values not given take the defaults below.

Copyright 2026 nicereg developers
"""

import json
from .attrdict import AttrDict, Config
from .errors import ConfigError
from .opts import Opts

__all__ = ('ModelConfig', 'LossWeights', 'TrainConfig', 'DataConfig',
           'EvalConfig', 'load_config', 'save_config', 'default_config',
           'apply_overrides', 'MAX_STEPS')

# The encoder and decoder have five convolutions so at most five
# registration steps are possible.
MAX_STEPS = 5


def _check_odd_window(window):

    if window < 3 or window % 2 != 1:
        raise ConfigError('NCC window must be odd and >= 3, got %s' % window)


class ModelConfig(Config):
    """Network architecture.

    L                 number of registration steps, 1--5
    enc_channels      output channels of the five encoder convolutions
    dec_channels      output channels of the five decoder convolutions
    leaky_slope       LeakyReLU negative slope
    head_init_scale   standard deviation of the registration head weights
    """

    defaults = {'L': 3,
                'enc_channels': [16, 32, 32, 64, 64],
                'dec_channels': [64, 64, 64, 32, 16],
                'leaky_slope': 0.2,
                'head_init_scale': 1e-5}

    def validate(self):

        if not 1 <= self.L <= MAX_STEPS:
            raise ConfigError('L must be in 1..%d, got %s' % (MAX_STEPS, self.L))
        for name in ('enc_channels', 'dec_channels'):
            channels = self[name]
            if len(channels) != MAX_STEPS:
                raise ConfigError('%s needs %d entries, got %s' %
                                  (name, MAX_STEPS, channels))
            if min(channels) < 1:
                raise ConfigError('%s must be positive, got %s' %
                                  (name, channels))
        if self.head_init_scale < 0:
            raise ConfigError('head_init_scale must be >= 0')


class LossWeights(Config):
    """Loss weighting.

    sigma         weight of the regularisation term
    lam           weight of the negative Jacobian penalty inside the
                  regularisation term
    ncc_window    side length of the local NCC window
    squared_ncc   use the squared local correlation coefficient
    """

    defaults = {'sigma': 1.0,
                'lam': 1e-4,
                'ncc_window': 9,
                'squared_ncc': True}

    def validate(self):

        if self.sigma < 0 or self.lam < 0:
            raise ConfigError('sigma and lam must be >= 0, got %s, %s' %
                              (self.sigma, self.lam))
        _check_odd_window(self.ncc_window)


class TrainConfig(Config):
    """Optimisation.

    lr                    ADAM learning rate
    batch_size            pairs per iteration (only 1 is supported)
    iterations            total number of iterations
    seed                  seed for initialisation, pair sampling, validation
    sigma, lam            loss weights
    ncc_window            local NCC window
    L                     number of registration steps
    val_interval          iterations between validation rows
    val_pairs             number of fixed validation pairs
    checkpoint_interval   iterations between checkpoints
    deterministic         request deterministic torch kernels
    prefetch              size of the pair prefetch queue, 0 disables
    device                torch device name
    """

    defaults = {'lr': 1e-4,
                'batch_size': 1,
                'iterations': 2000,
                'seed': 0,
                'sigma': 1.0,
                'lam': 1e-4,
                'ncc_window': 9,
                'L': 3,
                'val_interval': 100,
                'val_pairs': 20,
                'checkpoint_interval': 500,
                'deterministic': True,
                'prefetch': 2,
                'device': 'cpu'}

    def validate(self):

        if self.iterations < 1:
            raise ConfigError('iterations must be >= 1, got %s' % self.iterations)
        if self.val_pairs < 1:
            raise ConfigError('val_pairs must be >= 1, got %s' % self.val_pairs)
        if not self.lr >= 0:
            raise ConfigError('lr must be >= 0, got %s' % self.lr)
        if self.batch_size != 1:
            raise ConfigError('Only batch_size 1 is supported')
        if self.val_interval < 1 or self.checkpoint_interval < 1:
            raise ConfigError('Intervals must be >= 1')
        if not 1 <= self.L <= MAX_STEPS:
            raise ConfigError('L must be in 1..%d, got %s' % (MAX_STEPS, self.L))
        _check_odd_window(self.ncc_window)
        LossWeights(sigma=self.sigma, lam=self.lam)

    def loss_weights(self):

        return LossWeights(sigma=self.sigma, lam=self.lam,
                           ncc_window=self.ncc_window)


class DataConfig(Config):
    """Synthetic dataset.

    n_volumes   number of subjects
    n_val       subjects held out for validation
    n_test      subjects held out for testing
    shape       volume shape (D, H, W), each divisible by 16
    n_blobs     blobs (labels) per phantom
    max_disp    maximum displacement of each subject from the template
    seed        generator seed
    test_pairs  number of ordered test pairs
    """

    defaults = {'n_volumes': 30,
                'n_val': 5,
                'n_test': 5,
                'shape': [48, 48, 48],
                'n_blobs': 6,
                'max_disp': 2.0,
                'seed': 0,
                'test_pairs': 20}

    def validate(self):

        if len(self.shape) != 3 or any(n % 16 for n in self.shape):
            raise ConfigError('shape must be three sizes divisible by 16, got %s'
                              % self.shape)
        if self.n_volumes - self.n_val - self.n_test < 2:
            raise ConfigError('Need at least two training volumes')
        if self.n_val < 2 or self.n_test < 2:
            raise ConfigError('Need at least two validation and test volumes')
        if self.max_disp <= 0:
            raise ConfigError('max_disp must be positive')


class EvalConfig(Config):
    """Evaluation and ablation.

    grid_L                  values of L for the ablation
    grid_lam                values of lam for the ablation
    budget                  training iterations per ablation cell
    exclude_preprocessing   time only the network, not pyramid and tensor setup
    workers                 threads used to evaluate pairs
    pooled_dsc              pool voxels over labels instead of averaging labels
    """

    defaults = {'grid_L': [1, 2, 3, 4, 5],
                'grid_lam': [0.0, 1e-4],
                'budget': 2000,
                'exclude_preprocessing': False,
                'workers': 1,
                'pooled_dsc': False}

    def validate(self):

        for L in self.grid_L:
            if not 1 <= L <= MAX_STEPS:
                raise ConfigError('grid_L entries must be in 1..%d' % MAX_STEPS)
        if self.budget < 1 or self.workers < 1:
            raise ConfigError('budget and workers must be >= 1')


sections = {'model': ModelConfig,
            'train': TrainConfig,
            'data': DataConfig,
            'eval': EvalConfig}


def default_config():

    return AttrDict({name: cls() for name, cls in sections.items()})


def load_config(filename=None, overrides=None):
    """Load a JSON configuration file and apply `overrides`, a dict of
    section -> {key: value} or an override string parsed by Opts."""

    raw = {}
    if filename is not None:
        try:
            with open(filename) as f:
                raw = json.load(f)
        except ValueError as e:
            raise ConfigError('Cannot parse %s: %s' % (filename, e))
        if not isinstance(raw, dict):
            raise ConfigError('%s must contain a JSON object' % filename)

    for name in raw:
        if name not in sections:
            raise ConfigError('Unknown configuration section %s' % name)

    config = AttrDict()
    for name, cls in sections.items():
        config[name] = cls(raw.get(name, {}))

    if overrides:
        apply_overrides(config, overrides)
    return config


def apply_overrides(config, overrides):

    if isinstance(overrides, str):
        overrides = Opts(overrides).sections()

    for name, values in overrides.items():
        if name not in sections:
            raise ConfigError('Unknown configuration section %s' % name)
        section = config[name]
        section.update(values)
        section.validate()
    return config


def save_config(config, filename):

    with open(filename, 'w') as f:
        json.dump({name: section.as_dict() for name, section in config.items()},
                  f, indent=2, sort_keys=True)
