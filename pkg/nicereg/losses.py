"""This module provides the loss terms for unsupervised training and the
multi-level total loss

   total = sum_i 2^-(L - i) (sim_i + sigma (smooth_i + lam inv_i))

where, at level i, sim_i is the negative local NCC between the moving
level warped by phi_i and the fixed level, smooth_i the mean squared
spatial gradient of phi_i, and inv_i the mean negative Jacobian
determinant of phi_i.

Every function accepts either the domain objects (Volume,
DisplacementField, ImagePyramid) or tensors.  Tensor inputs give tensor
results that can be differentiated; domain inputs give floats.

Copyright 2026 nicereg developers
"""

import torch
import torch.nn.functional as F
from .config import LossWeights
from .errors import ShapeError
from .kernels import spatial_gradients, jacobian_det_tensor, warp_tensor
from .volume import ImagePyramid

__all__ = ('LossWeights', 'LossReport', 'local_ncc', 'grad_l2',
           'neg_jac_penalty', 'total_loss', 'level_weights', 'loss_header',
           'NCC_EPS')

# Stabiliser for windows with no variance.
NCC_EPS = 1e-5


def _tensor(obj):

    if isinstance(obj, torch.Tensor):
        return obj, True
    return obj.tensor(), False


def _result(value, as_tensor):

    return value if as_tensor else float(value)


def level_weights(L):
    """Level weights 1 / 2^(L - i) for i = 1..L."""

    return [1.0 / 2 ** (L - i) for i in range(1, L + 1)]


def local_ncc_tensor(a, b, window=9, squared=True, eps=NCC_EPS):
    """Mean local correlation of a and b, (N, 1, D, H, W) tensors.

    Window sums are zero padded: voxels outside the grid contribute
    nothing and the local means are over the voxels inside."""

    if a.shape != b.shape:
        raise ShapeError('Shape mismatch: %s and %s' % (tuple(a.shape),
                                                         tuple(b.shape)))
    if window % 2 != 1:
        raise ValueError('NCC window must be odd, got %s' % window)

    kernel = torch.ones((1, 1, window, window, window), dtype=a.dtype,
                        device=a.device)
    pad = window // 2

    def wsum(x):
        return F.conv3d(x, kernel, padding=pad)

    count = wsum(torch.ones_like(a))
    a_sum = wsum(a)
    b_sum = wsum(b)

    cross = wsum(a * b) - a_sum * b_sum / count
    a_var = (wsum(a * a) - a_sum * a_sum / count).clamp(min=0)
    b_var = (wsum(b * b) - b_sum * b_sum / count).clamp(min=0)

    if squared:
        cc = cross * cross / (a_var * b_var + eps)
    else:
        cc = cross / torch.sqrt(a_var * b_var + eps)
    return torch.mean(cc)


def local_ncc(a, b, window=9, squared=True):
    """Mean over voxels of the squared local correlation coefficient of
    a and b, in [0, 1].  The similarity loss is its negative."""

    at, as_tensor = _tensor(a)
    bt, b_tensor = _tensor(b)
    return _result(local_ncc_tensor(at, bt.to(at.dtype), window, squared),
                   as_tensor or b_tensor)


def grad_l2(field):
    """Mean over voxels of the sum of the nine squared partial
    derivatives of the field."""

    u, as_tensor = _tensor(field)
    g = spatial_gradients(u)
    return _result(torch.mean(torch.sum(g * g, dim=(1, 2))), as_tensor)


def neg_jac_penalty(field):
    """Mean over voxels of max(0, -det J)."""

    u, as_tensor = _tensor(field)
    return _result(torch.mean(F.relu(-jacobian_det_tensor(u))), as_tensor)


class LossReport(object):
    """Per-level loss terms and their weighted total.  When built from
    tensors the terms are tensors and `total` can be back-propagated."""

    def __init__(self, sim, smooth, inv, weights, total, sigma, lam):

        self.sim = sim
        self.smooth = smooth
        self.inv = inv
        self.weights = weights
        self.total = total
        self.sigma = sigma
        self.lam = lam

    @property
    def L(self):
        return len(self.weights)

    def terms(self):
        """Float copy of the per-level terms."""

        return {'sim': [float(x) for x in self.sim],
                'smooth': [float(x) for x in self.smooth],
                'inv': [float(x) for x in self.inv],
                'weights': list(self.weights),
                'total': float(self.total)}

    def is_finite(self):

        return torch.isfinite(torch.as_tensor(float(self.total))).item()

    def header(self):

        return loss_header(self.L)

    def as_row(self, iteration):

        row = [iteration]
        for i in range(self.L):
            row.extend([float(self.sim[i]), float(self.smooth[i]),
                        float(self.inv[i])])
        row.append(float(self.total))
        return row

    def __repr__(self):

        return 'LossReport(total=%.6g, L=%d)' % (float(self.total), self.L)


def loss_header(L):
    """CSV column names matching LossReport.as_row."""

    names = ['iteration']
    for i in range(1, L + 1):
        names.extend(['sim_%d' % i, 'smooth_%d' % i, 'inv_%d' % i])
    return names + ['total']


def _levels(pyramid):

    if isinstance(pyramid, ImagePyramid):
        return [level.tensor() for level in pyramid.levels], False
    return list(pyramid), True


def total_loss(fixed_pyr, moving_pyr, fields, weights=None):
    """Evaluate the multi-level loss for fields [phi_1, ..., phi_L]."""

    if weights is None:
        weights = LossWeights()

    fixed, fixed_tensor = _levels(fixed_pyr)
    moving, moving_tensor = _levels(moving_pyr)
    phis = [_tensor(phi) for phi in fields]
    as_tensor = fixed_tensor or moving_tensor or any(t for p, t in phis)
    phis = [p for p, t in phis]

    L = len(phis)
    if len(fixed) != L or len(moving) != L:
        raise ShapeError('Need %d pyramid levels, got %d and %d' %
                         (L, len(fixed), len(moving)))

    lw = level_weights(L)
    sims, smooths, invs = [], [], []
    total = 0
    for i in range(L):
        phi = phis[i]
        if tuple(phi.shape[2:]) != tuple(fixed[i].shape[2:]):
            raise ShapeError('Field %d has shape %s, level has %s' %
                             (i + 1, tuple(phi.shape[2:]),
                              tuple(fixed[i].shape[2:])))
        warped = warp_tensor(moving[i].to(phi.dtype), phi)
        sim = -local_ncc_tensor(warped, fixed[i].to(phi.dtype),
                                weights.ncc_window, weights.squared_ncc)
        smooth = grad_l2(phi)
        inv = neg_jac_penalty(phi)
        reg = smooth if weights.lam == 0 else smooth + weights.lam * inv
        total = total + lw[i] * (sim + weights.sigma * reg)
        sims.append(sim)
        smooths.append(smooth)
        invs.append(inv)

    if not as_tensor:
        sims = [float(x) for x in sims]
        smooths = [float(x) for x in smooths]
        invs = [float(x) for x in invs]
        total = float(total)
    return LossReport(sims, smooths, invs, lw, total, weights.sigma,
                      weights.lam)
