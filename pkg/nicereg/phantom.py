"""This module generates synthetic phantom volumes, smooth random
deformations, and phantom datasets for desk-scale experiments.

A phantom is a sum of anisotropic Gaussian blobs on a low-contrast
textured background; each blob's core is a label.  A dataset is one
template phantom deformed by an independent smooth field per subject,
so any two subjects differ by a composite deformation.

Copyright 2026 nicereg developers
"""

import os
import json
import logging
import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DataError, ShapeError, GenerationError, FormatError
from .volume import Volume, LabelMap, normalize_intensity
from .field import DisplacementField, warp_trilinear, warp_nearest, njd_percent
from .volumeio import load_volume, save_volume, load_field

__all__ = ('make_phantom', 'make_smooth_field', 'make_dataset',
           'PhantomDataset', 'save_dataset', 'load_dataset')

logger = logging.getLogger(__name__)

# Blob cores: voxels where the blob reaches this fraction of its peak.
LABEL_THRESHOLD = 0.5


def _check_shape(shape, multiple=16):

    shape = tuple(int(n) for n in shape)
    if len(shape) != 3 or any(n <= 0 or n % multiple for n in shape):
        raise ShapeError('Shape %s must have three sizes divisible by %d' %
                         (shape, multiple))
    return shape


def make_phantom(seed, shape, n_blobs):
    """Return a (Volume, LabelMap) pair.  The volume is normalised to
    [0, 1]; blob b has label b + 1."""

    shape = _check_shape(shape)
    if n_blobs < 1:
        raise DataError('n_blobs must be >= 1, got %s' % n_blobs)

    rng = np.random.default_rng(seed)
    z, y, x = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in shape],
                          indexing='ij')
    coords = (z, y, x)
    size = np.array(shape, dtype=np.float64)

    centres = []
    while len(centres) < n_blobs:
        centre = tuple(np.round(rng.uniform(0.25 * (n - 1), 0.75 * (n - 1)))
                       for n in shape)
        if centre not in centres:
            centres.append(centre)

    image = np.zeros(shape)
    responses = np.zeros((n_blobs, ) + shape)
    for b, centre in enumerate(centres):
        widths = rng.uniform(0.06, 0.14, size=3) * size
        amplitude = rng.uniform(0.5, 1.0)
        arg = sum(((c - c0) / w) ** 2 for c, c0, w in zip(coords, centre, widths))
        responses[b] = np.exp(-0.5 * arg)
        image += amplitude * responses[b]

    texture = gaussian_filter(rng.standard_normal(shape), sigma=1.5, mode='nearest')
    texture /= texture.std()
    image += 0.05 * texture + 0.02 * (z / size[0] + y / size[1] + x / size[2])

    strongest = np.argmax(responses, axis=0)
    labels = np.where(np.max(responses, axis=0) >= LABEL_THRESHOLD,
                      strongest + 1, 0).astype(np.int16)

    vol = normalize_intensity(Volume(image.astype(np.float32)))
    return vol, LabelMap(labels)


def make_smooth_field(seed, shape, max_disp, smoothing=None, max_tries=6):
    """Return a smooth random DisplacementField whose largest
    displacement length is max_disp voxels and which has no
    non-positive Jacobian determinants.

    The field is per-component white noise smoothed by a Gaussian
    (standard deviation `smoothing`, default an eighth of the largest
    axis) and rescaled.  If the result folds, the smoothing is doubled
    and the same noise reused; GenerationError is raised after
    max_tries attempts."""

    shape = tuple(int(n) for n in shape)
    if not max_disp > 0:
        raise DataError('max_disp must be positive, got %s' % max_disp)

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((3, ) + shape)
    if smoothing is None:
        smoothing = max(shape) / 8.0

    for attempt in range(max_tries):
        u = np.stack([gaussian_filter(noise[c], sigma=smoothing, mode='nearest')
                      for c in range(3)])
        magnitude = np.sqrt(np.sum(u ** 2, axis=0)).max()
        if magnitude == 0:
            raise GenerationError('Smoothed noise vanished for shape %s' % (shape, ))
        field = DisplacementField((u * (max_disp / magnitude)).astype(np.float32))
        if njd_percent(field) == 0:
            return field
        logger.debug('Field seed %s folds at smoothing %.3g, retrying',
                     seed, smoothing)
        smoothing *= 2

    raise GenerationError('Cannot generate a fold-free field with max_disp %s '
                          'on %s within %d attempts' % (max_disp, shape, max_tries))


class PhantomDataset(object):
    """Subjects with volumes, labels, and the template-to-subject
    fields, split into training, validation, and test subjects."""

    def __init__(self, volumes, labels, fields, n_val=0, n_test=0, meta=None):

        if not len(volumes) == len(labels) == len(fields):
            raise DataError('Dataset lists differ in length')
        if len(volumes) - n_val - n_test < 0:
            raise DataError('Splits exceed dataset size %d' % len(volumes))
        self.volumes = volumes
        self.labels = labels
        self.fields = fields
        self.n_val = n_val
        self.n_test = n_test
        self.meta = meta or {}

    def __len__(self):
        return len(self.volumes)

    @property
    def n_train(self):
        return len(self) - self.n_val - self.n_test

    def _split(self, start, stop):
        return list(range(start, stop))

    @property
    def train_indices(self):
        return self._split(0, self.n_train)

    @property
    def val_indices(self):
        return self._split(self.n_train, self.n_train + self.n_val)

    @property
    def test_indices(self):
        return self._split(self.n_train + self.n_val, len(self))

    def subset(self, indices):
        """Return [(Volume, LabelMap), ...] for the given indices."""

        return [(self.volumes[i], self.labels[i]) for i in indices]

    @property
    def train(self):
        return self.subset(self.train_indices)

    @property
    def val(self):
        return self.subset(self.val_indices)

    @property
    def test(self):
        return self.subset(self.test_indices)


def make_dataset(seed, n, shape, n_blobs, max_disp, n_val=0, n_test=0):
    """Deform one template phantom by n independent smooth fields.  Each
    subject also gets a random gamma intensity change."""

    shape = _check_shape(shape)
    template, template_labels = make_phantom(seed, shape, n_blobs)
    rng = np.random.default_rng(seed + 1)

    volumes, labels, fields = [], [], []
    for k in range(n):
        field = make_smooth_field(seed * 100003 + k + 1, shape, max_disp)
        warped = warp_trilinear(template, field)
        gamma = np.exp(rng.normal(0.0, 0.1))
        data = np.clip(warped.data, 0, 1) ** gamma
        volumes.append(normalize_intensity(Volume(data.astype(np.float32))))
        labels.append(warp_nearest(template_labels, field))
        fields.append(field)

    meta = {'seed': seed, 'shape': list(shape), 'n_blobs': n_blobs,
            'max_disp': max_disp}
    logger.info('Made %d phantom subjects of shape %s', n, shape)
    return PhantomDataset(volumes, labels, fields, n_val, n_test, meta)


def save_dataset(dataset, directory):

    os.makedirs(directory, exist_ok=True)
    for k in range(len(dataset)):
        save_volume(dataset.volumes[k], os.path.join(directory, 'vol_%03d.nii' % k))
        save_volume(dataset.labels[k], os.path.join(directory, 'seg_%03d.nii' % k))
        save_volume(dataset.fields[k], os.path.join(directory, 'field_%03d.nii' % k))

    index = dict(dataset.meta, n=len(dataset), n_val=dataset.n_val,
                 n_test=dataset.n_test)
    with open(os.path.join(directory, 'dataset.json'), 'w') as f:
        json.dump(index, f, indent=2, sort_keys=True)


def load_dataset(directory):

    filename = os.path.join(directory, 'dataset.json')
    try:
        with open(filename) as f:
            index = json.load(f)
        n = index['n']
    except (OSError, ValueError, KeyError) as e:
        raise FormatError('Cannot read dataset index %s: %s' % (filename, e))

    volumes, labels, fields = [], [], []
    for k in range(n):
        volumes.append(load_volume(os.path.join(directory, 'vol_%03d.nii' % k)))
        labels.append(load_volume(os.path.join(directory, 'seg_%03d.nii' % k),
                                  labels=True))
        fields.append(load_field(os.path.join(directory, 'field_%03d.nii' % k)))

    meta = {key: val for key, val in index.items()
            if key not in ('n', 'n_val', 'n_test')}
    return PhantomDataset(volumes, labels, fields, index.get('n_val', 0),
                          index.get('n_test', 0), meta)
