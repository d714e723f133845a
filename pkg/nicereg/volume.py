"""This module provides the Volume, LabelMap, and ImagePyramid classes
and the intensity and resolution operations on volumes.

Arrays are stored (D, H, W), that is (z, y, x), with x the fastest
varying axis on disk.

Copyright 2026 nicereg developers
"""

import numpy as np
import torch
from .errors import DataError, DegenerateInputError, ShapeError
from .kernels import downsample_half_tensor

__all__ = ('Volume', 'LabelMap', 'ImagePyramid', 'normalize_intensity',
           'downsample_half', 'build_pyramid', 'pad_to_multiple',
           'crop_to_shape')


class Volume(object):
    """A 3D scalar intensity grid."""

    def __init__(self, data):

        data = np.asarray(data)
        if data.ndim != 3:
            raise ShapeError('Volume must be 3D, got shape %s' % (data.shape, ))
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise DataError('Volume has non-finite values')
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __array__(self, dtype=None):

        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    def __repr__(self):

        return '%s(shape=%s, dtype=%s)' % (self.__class__.__name__,
                                           self.shape, self.dtype)

    def tensor(self, dtype=torch.float64, device=None):
        """Return the data as a (1, 1, D, H, W) tensor."""

        return torch.as_tensor(np.array(self.data), dtype=dtype,
                               device=device)[None, None]

    @classmethod
    def from_tensor(cls, tensor, dtype=np.float32):

        return cls(tensor.detach().cpu().numpy().reshape(tensor.shape[-3:]).astype(dtype))

    def copy(self):

        return self.__class__(self.data.copy())


class LabelMap(Volume):
    """A 3D integer label grid; label 0 is the background."""

    def __init__(self, data):

        data = np.asarray(data)
        if data.ndim != 3:
            raise ShapeError('LabelMap must be 3D, got shape %s' % (data.shape, ))
        if np.issubdtype(data.dtype, np.floating):
            if not np.all(data == np.round(data)):
                raise DataError('LabelMap values must be integers')
            data = data.astype(np.int32)
        if data.size and data.min() < 0:
            raise DataError('LabelMap values must be non-negative')
        self.data = data

    def labels(self, background=False):

        labels = set(int(label) for label in np.unique(self.data))
        if not background:
            labels.discard(0)
        return labels

    @classmethod
    def from_tensor(cls, tensor, dtype=np.int32):

        return cls(np.rint(tensor.detach().cpu().numpy()).reshape(tensor.shape[-3:]).astype(dtype))


class ImagePyramid(object):
    """L volumes with level i (1-based) at scale 0.5^(L - i) and level L
    the original volume."""

    def __init__(self, levels):

        if not 1 <= len(levels) <= 5:
            raise ShapeError('Pyramid needs 1..5 levels, got %d' % len(levels))
        for coarse, fine in zip(levels[:-1], levels[1:]):
            if tuple(2 * n for n in coarse.shape) != tuple(fine.shape):
                raise ShapeError('Pyramid levels %s and %s are not a factor 2 apart'
                                 % (coarse.shape, fine.shape))
        self.levels = list(levels)

    @property
    def L(self):
        return len(self.levels)

    def __getitem__(self, i):
        """Level i, counting from 1 as the coarsest."""

        if not 1 <= i <= self.L:
            raise IndexError('Pyramid level %d not in 1..%d' % (i, self.L))
        return self.levels[i - 1]

    def __len__(self):
        return self.L

    def __iter__(self):
        return iter(self.levels)

    @property
    def shapes(self):
        return [level.shape for level in self.levels]


def normalize_intensity(vol):
    """Min-max normalise to [0, 1]."""

    data = np.asarray(vol.data, dtype=np.float64)
    vmin = data.min()
    vmax = data.max()
    if vmax == vmin:
        raise DegenerateInputError('Cannot normalise constant volume (value %s)'
                                   % vmin)
    out = (data - vmin) / (vmax - vmin)
    return Volume(out.astype(vol.dtype))


def downsample_half(vol):
    """Halve each axis with trilinear interpolation."""

    for n in vol.shape:
        if n % 2:
            raise ShapeError('Cannot halve odd axis size in %s' % (vol.shape, ))
    out = downsample_half_tensor(vol.tensor())
    return Volume.from_tensor(out, dtype=vol.dtype)


def build_pyramid(vol, L):
    """Build an L level pyramid of vol by repeated halving."""

    if not 1 <= L <= 5:
        raise ShapeError('L must be in 1..5, got %s' % L)
    factor = 2 ** (L - 1)
    for n in vol.shape:
        if n % factor:
            raise ShapeError('Shape %s not divisible by %d for L=%d' %
                             (vol.shape, factor, L))
    levels = [vol]
    for m in range(L - 1):
        levels.insert(0, downsample_half(levels[0]))
    return ImagePyramid(levels)


def pad_to_multiple(vol, multiple=16):
    """Pad with edge replication at the far end of each axis so every
    size is divisible by multiple.  Returns the padded volume and the
    original shape."""

    shape = vol.shape
    pad = [(0, (-n) % multiple) for n in shape]
    if not any(after for before, after in pad):
        return vol, shape
    data = np.pad(vol.data, pad, mode='edge')
    return vol.__class__(data), shape


def crop_to_shape(data, shape):
    """Crop the trailing spatial axes of an array to shape."""

    index = (Ellipsis, ) + tuple(slice(0, n) for n in shape)
    return data[index]
