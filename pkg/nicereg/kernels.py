"""This module contains the tensor kernels shared by the volume and
field operations, the losses, and the network.

Tensors are laid out (N, C, D, H, W).  A displacement tensor has C = 3
with channel 0 the x displacement (along W), channel 1 the y
displacement (along H), and channel 2 the z displacement (along D),
all in voxels of its own grid.

All kernels are differentiable with respect to their floating point
inputs.

Copyright 2026 nicereg developers
"""

import torch
import torch.nn.functional as F
from .errors import ShapeError

__all__ = ('downsample_half_tensor', 'upsample_2x_tensor',
           'upsample_field_tensor', 'pyramid_tensors', 'identity_grid',
           'warp_tensor', 'spatial_gradients', 'jacobian_det_tensor')


def _spatial(x):

    if x.dim() != 5:
        raise ShapeError('Expecting (N, C, D, H, W) tensor, got shape %s' %
                         (tuple(x.shape), ))
    return tuple(x.shape[2:])


def downsample_half_tensor(x):
    """Trilinear downsampling by two.  Output voxel o samples the input
    at 2 * o + 0.5 along each axis, that is half-pixel centred, with
    edge clamping."""

    shape = _spatial(x)
    for n in shape:
        if n % 2:
            raise ShapeError('Cannot halve odd axis size in %s' % (shape, ))
    size = tuple(n // 2 for n in shape)
    return F.interpolate(x, size=size, mode='trilinear', align_corners=False)


def upsample_2x_tensor(x):
    """Trilinear upsampling by two.  Output voxel o samples the input at
    (o + 0.5) / 2 - 0.5 along each axis, with edge clamping."""

    size = tuple(2 * n for n in _spatial(x))
    return F.interpolate(x, size=size, mode='trilinear', align_corners=False)


def upsample_field_tensor(u):
    """Upsample a displacement tensor by two.  The values are doubled
    so that they remain in voxels of the finer grid."""

    return 2 * upsample_2x_tensor(u)


def pyramid_tensors(x, L):
    """Return [x^1, ..., x^L] with x^L = x and x^i at 0.5^(L - i)."""

    levels = [x]
    for m in range(L - 1):
        levels.insert(0, downsample_half_tensor(levels[0]))
    return levels


def identity_grid(shape, dtype=torch.float64, device=None):
    """Voxel coordinates (z, y, x) of a grid, each of the given shape."""

    axes = [torch.arange(n, dtype=dtype, device=device) for n in shape]
    return torch.meshgrid(*axes, indexing='ij')


def warp_tensor(x, u, mode='trilinear'):
    """Resample x at p + u(p).  Sampling coordinates are clamped to the
    grid.  With mode 'nearest' the coordinate is rounded half up, which
    keeps integer labels intact."""

    shape = _spatial(x)
    if _spatial(u) != shape or u.shape[1] != 3:
        raise ShapeError('Field shape %s does not match volume shape %s' %
                         (tuple(u.shape[1:]), shape))
    if x.shape[0] != u.shape[0]:
        raise ShapeError('Batch sizes %d and %d differ' % (x.shape[0], u.shape[0]))

    N, C = x.shape[0:2]
    D, H, W = shape
    gz, gy, gx = identity_grid(shape, dtype=u.dtype, device=u.device)

    cz = (gz + u[:, 2]).clamp(0, D - 1)
    cy = (gy + u[:, 1]).clamp(0, H - 1)
    cx = (gx + u[:, 0]).clamp(0, W - 1)

    flat = x.reshape(N, C, D * H * W)

    def gather(z, y, x_):
        index = ((z * H + y) * W + x_).reshape(N, 1, -1).expand(N, C, -1)
        return torch.gather(flat, 2, index).reshape(N, C, D, H, W)

    if mode == 'nearest':
        z = torch.floor(cz + 0.5).long()
        y = torch.floor(cy + 0.5).long()
        x_ = torch.floor(cx + 0.5).long()
        return gather(z, y, x_)
    elif mode != 'trilinear':
        raise ValueError('Unknown interpolation mode %s' % mode)

    z0 = torch.floor(cz).detach()
    y0 = torch.floor(cy).detach()
    x0 = torch.floor(cx).detach()
    wz = (cz - z0).unsqueeze(1)
    wy = (cy - y0).unsqueeze(1)
    wx = (cx - x0).unsqueeze(1)

    z0 = z0.long()
    y0 = y0.long()
    x0 = x0.long()
    z1 = (z0 + 1).clamp(max=D - 1)
    y1 = (y0 + 1).clamp(max=H - 1)
    x1 = (x0 + 1).clamp(max=W - 1)

    out = (gather(z0, y0, x0) * ((1 - wz) * (1 - wy) * (1 - wx))
           + gather(z0, y0, x1) * ((1 - wz) * (1 - wy) * wx)
           + gather(z0, y1, x0) * ((1 - wz) * wy * (1 - wx))
           + gather(z0, y1, x1) * ((1 - wz) * wy * wx)
           + gather(z1, y0, x0) * (wz * (1 - wy) * (1 - wx))
           + gather(z1, y0, x1) * (wz * (1 - wy) * wx)
           + gather(z1, y1, x0) * (wz * wy * (1 - wx))
           + gather(z1, y1, x1) * (wz * wy * wx))
    return out


def _difference(u, dim):
    """Forward difference along dim, backward difference on the last
    slice, so the result has the shape of u."""

    n = u.shape[dim]
    if n < 2:
        raise ShapeError('Need at least two voxels along each axis, got %s' %
                         (tuple(u.shape[2:]), ))
    forward = u.narrow(dim, 1, n - 1) - u.narrow(dim, 0, n - 1)
    return torch.cat([forward, forward.narrow(dim, n - 2, 1)], dim=dim)


def spatial_gradients(u):
    """Partial derivatives of a displacement tensor.  Returns a tensor of
    shape (N, 3, 3, D, H, W) where [:, i, k] is d u_i / d x_k with
    x_0 = x (W axis), x_1 = y (H axis), x_2 = z (D axis)."""

    _spatial(u)
    return torch.stack([_difference(u, -1), _difference(u, -2),
                        _difference(u, -3)], dim=2)


def jacobian_det_tensor(u):
    """Determinant of the Jacobian of p -> p + u(p), shape (N, D, H, W)."""

    g = spatial_gradients(u)

    def J(i, k):
        return g[:, i, k] + 1 if i == k else g[:, i, k]

    return (J(0, 0) * (J(1, 1) * J(2, 2) - J(1, 2) * J(2, 1))
            - J(0, 1) * (J(1, 0) * J(2, 2) - J(1, 2) * J(2, 0))
            + J(0, 2) * (J(1, 0) * J(2, 1) - J(1, 1) * J(2, 0)))
