"""This module provides displacement field algebra: warping, upsampling,
addition, Jacobian determinants, and invertibility
metrics.

A DisplacementField stores an array of shape (3, D, H, W).  Component 0
is the x displacement (along the W axis), component 1 the y
displacement (along H), and component 2 the z displacement (along D).
Displacements are in voxels of the field's own grid; the zero field is
the identity transformation.

Copyright 2026 nicereg developers
"""

import numpy as np
import torch
from .errors import DataError, ShapeError
from .kernels import (warp_tensor, upsample_field_tensor,
                      jacobian_det_tensor)
from .volume import Volume, LabelMap

__all__ = ('DisplacementField', 'JacobianMap', 'warp_trilinear',
           'warp_nearest', 'upsample_field_2x', 'add_fields',
           'jacobian_determinants', 'njd_percent',
           'field_magnitude')


class DisplacementField(object):

    def __init__(self, data):

        data = np.asarray(data)
        if data.ndim != 4 or data.shape[0] != 3:
            raise ShapeError('DisplacementField must have shape (3, D, H, W), got %s'
                             % (data.shape, ))
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise DataError('DisplacementField has non-finite values')
        self.data = data

    @property
    def shape(self):
        """Spatial shape (D, H, W)."""
        return self.data.shape[1:]

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return 'DisplacementField(shape=%s, dtype=%s)' % (self.shape, self.dtype)

    def __array__(self, dtype=None):

        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    @classmethod
    def zeros(cls, shape, dtype=np.float32):

        return cls(np.zeros((3, ) + tuple(shape), dtype=dtype))

    @classmethod
    def from_function(cls, shape, func, dtype=np.float64):
        """Build a field from func(x, y, z) -> (u_x, u_y, u_z) evaluated
        on the voxel coordinate grids."""

        z, y, x = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in shape],
                              indexing='ij')
        components = [np.broadcast_to(c, shape) for c in func(x, y, z)]
        return cls(np.stack(components).astype(dtype))

    def tensor(self, dtype=torch.float64, device=None):
        """Return the data as a (1, 3, D, H, W) tensor."""

        return torch.as_tensor(np.array(self.data), dtype=dtype,
                               device=device)[None]

    @classmethod
    def from_tensor(cls, tensor, dtype=np.float32):

        return cls(tensor.detach().cpu().numpy().reshape((3, ) + tuple(tensor.shape[-3:])).astype(dtype))


class JacobianMap(Volume):
    """Per-voxel Jacobian determinant of p -> p + u(p)."""

    @property
    def negative_fraction(self):

        return float(np.mean(self.data <= 0))


def _check_shapes(a, b):

    if tuple(a.shape) != tuple(b.shape):
        raise ShapeError('Shape mismatch: %s and %s' % (tuple(a.shape),
                                                         tuple(b.shape)))


def warp_trilinear(vol, field):
    """Return vol warped by field, vol(p + u(p)), with trilinear
    interpolation."""

    _check_shapes(vol, field)
    out = warp_tensor(vol.tensor(), field.tensor())
    return Volume.from_tensor(out, dtype=vol.dtype)


def warp_nearest(labels, field):
    """Return labels warped by field with nearest neighbour sampling."""

    _check_shapes(labels, field)
    data = torch.as_tensor(np.array(labels.data, dtype=np.int64))[None, None]
    out = warp_tensor(data, field.tensor(), mode='nearest')
    return LabelMap(out[0, 0].numpy().astype(labels.dtype))


def upsample_field_2x(field):
    """Double the resolution of field, doubling its values."""

    out = upsample_field_tensor(field.tensor())
    return DisplacementField.from_tensor(out, dtype=field.dtype)


def add_fields(a, b):

    _check_shapes(a, b)
    return DisplacementField(a.data + b.data)


def jacobian_determinants(field):

    det = jacobian_det_tensor(field.tensor())
    return JacobianMap(det[0].numpy())


def njd_percent(field):
    """Percentage of voxels with a non-positive Jacobian determinant,
    counted over all voxels."""

    return 100.0 * jacobian_determinants(field).negative_fraction


def field_magnitude(field):
    """Per-voxel displacement length."""

    return Volume(np.sqrt(np.sum(np.asarray(field.data, dtype=np.float64) ** 2,
                                 axis=0)))
