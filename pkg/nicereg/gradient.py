"""This module provides functions for computing the finite-difference
gradient of a scalar function of tensors, and for checking analytic
(autograd) gradients against it.

Copyright 2026 nicereg developers
"""

import logging
import numpy as np
import torch

__all__ = ('analytic_gradient', 'finite_difference', 'check_gradient',
           'GradientCheck')

logger = logging.getLogger(__name__)


def analytic_gradient(func, inputs):
    """Gradients of func(*inputs) with respect to each input tensor."""

    leaves = [x.detach().clone().requires_grad_(True) for x in inputs]
    value = func(*leaves)
    grads = torch.autograd.grad(value, leaves, allow_unused=True)
    return [torch.zeros_like(x) if g is None else g.detach()
            for x, g in zip(leaves, grads)]


def finite_difference(func, inputs, coordinates, h=1e-4):
    """Central differences of func(*inputs) at the given coordinates, a
    list of (input number, flat index) pairs."""

    inputs = [x.detach().clone() for x in inputs]
    values = []
    with torch.no_grad():
        for which, index in coordinates:
            flat = inputs[which].view(-1)
            x0 = flat[index].item()

            flat[index] = x0 + h
            fplus = float(func(*inputs))
            flat[index] = x0 - h
            fminus = float(func(*inputs))
            flat[index] = x0

            values.append((fplus - fminus) / (2 * h))
    return np.array(values)


class GradientCheck(object):
    """Result of check_gradient."""

    def __init__(self, analytic, numeric, rtol, atol):

        self.analytic = analytic
        self.numeric = numeric
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        error = np.abs(analytic - numeric)
        self.relative_error = np.where(scale > 0, error / np.where(scale > 0, scale, 1), 0)
        self.passed = (self.relative_error < rtol) | (error < atol)

    @property
    def pass_fraction(self):
        return float(np.mean(self.passed))

    @property
    def max_relative_error(self):
        return float(np.max(self.relative_error))

    def __repr__(self):
        return 'GradientCheck(pass_fraction=%.4f, max_relative_error=%.3g)' % (
            self.pass_fraction, self.max_relative_error)


def check_gradient(func, inputs, n_coordinates=200, h=1e-4, rtol=1e-4,
                   atol=1e-9, seed=0):
    """Compare autograd and central finite differences of func at up to
    n_coordinates randomly chosen input coordinates.  Coordinates whose
    absolute error is below atol pass regardless of relative error."""

    rng = np.random.default_rng(seed)
    sizes = [x.numel() for x in inputs]
    total = sum(sizes)
    offsets = np.cumsum([0] + sizes)
    picks = rng.choice(total, size=min(n_coordinates, total), replace=False)
    coordinates = []
    for pick in sorted(picks):
        which = int(np.searchsorted(offsets, pick, side='right') - 1)
        coordinates.append((which, int(pick - offsets[which])))

    grads = analytic_gradient(func, inputs)
    analytic = np.array([grads[which].view(-1)[index].item()
                         for which, index in coordinates])
    numeric = finite_difference(func, inputs, coordinates, h)

    result = GradientCheck(analytic, numeric, rtol, atol)
    logger.info('Gradient check over %d coordinates: %s', len(coordinates), result)
    return result
