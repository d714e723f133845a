"""This module saves and restores training checkpoints.

A checkpoint is a torch.save file ckpt_<iteration>.bin in the training
directory holding the format version, the configuration, the iteration
counter, the model and optimizer state, the torch RNG state, and the
best validation record.  A text file `latest` in the same directory
names the most recent checkpoint.

Copyright 2026 nicereg developers
"""

import os
import pickle
import logging
import torch
from .config import ModelConfig
from .errors import ConfigError, FormatError
from .network import NiceNet
from .volumeio import atomic_write

__all__ = ('save_checkpoint', 'load_checkpoint', 'latest_checkpoint', 'load_model',
           'checkpoint_path', 'FORMAT_VERSION')

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

LATEST = 'latest'

required_keys = ('format_version', 'config', 'iteration', 'model_state',
                 'optimizer_state', 'rng_state', 'best')


def checkpoint_path(directory, iteration):

    return os.path.join(directory, 'ckpt_%d.bin' % iteration)


def save_checkpoint(state, directory, filename=None, mark_latest=True):
    """Save a TrainState; return the checkpoint path."""

    os.makedirs(directory, exist_ok=True)
    if filename is None:
        path = checkpoint_path(directory, state.iteration)
    else:
        path = os.path.join(directory, filename)

    data = {'format_version': FORMAT_VERSION,
            'config': {'train': state.config.as_dict(),
                       'model': state.model_config.as_dict()},
            'iteration': state.iteration,
            'model_state': state.model.state_dict(),
            'optimizer_state': state.optimizer.state_dict(),
            'rng_state': torch.get_rng_state(),
            'best': dict(state.best)}

    with atomic_write(path, suffix='.bin') as tmpname:
        torch.save(data, tmpname)

    if mark_latest:
        with atomic_write(os.path.join(directory, LATEST)) as tmpname:
            with open(tmpname, 'w') as f:
                f.write(os.path.basename(path) + '\n')

    logger.info('Saved checkpoint %s', path)
    return path


def latest_checkpoint(directory):
    """Path of the checkpoint named by the `latest` marker, or None."""

    marker = os.path.join(directory, LATEST)
    if not os.path.exists(marker):
        return None
    with open(marker) as f:
        name = f.read().strip()
    path = os.path.join(directory, name)
    if not os.path.exists(path):
        raise FormatError('%s names missing checkpoint %s' % (marker, path))
    return path


def load_checkpoint(path, model_config=None, map_location='cpu'):
    """Load a checkpoint dict.  If model_config is given it must match
    the architecture the checkpoint was saved with."""

    try:
        data = torch.load(path, map_location=map_location, weights_only=False)
    except (RuntimeError, EOFError, ValueError, pickle.UnpicklingError) as e:
        raise FormatError('Cannot read checkpoint %s: %s' % (path, e))

    if not isinstance(data, dict) or any(key not in data for key in required_keys):
        raise FormatError('%s is not a checkpoint' % path)
    if data['format_version'] != FORMAT_VERSION:
        raise ConfigError('%s has format version %s, expecting %s' %
                          (path, data['format_version'], FORMAT_VERSION))

    if model_config is not None:
        saved = data['config']['model']
        for key, val in model_config.as_dict().items():
            if saved.get(key) != val:
                raise ConfigError('Checkpoint %s has model %s=%s, configured %s' %
                                  (path, key, saved.get(key), val))
    return data


def load_model(path, map_location='cpu'):
    """Build the network saved in a checkpoint, in eval mode."""

    data = load_checkpoint(path, map_location=map_location)
    model = NiceNet(ModelConfig(data['config']['model']))
    model.load_state_dict(data['model_state'])
    model.to(map_location)
    model.eval()
    return model
