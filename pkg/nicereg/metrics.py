"""This module provides the overlap metric used for evaluation, the Dice
similarity coefficient of label maps.

Copyright 2026 nicereg developers
"""

import numpy as np
from .errors import ShapeError, EmptyEvaluationError

__all__ = ('dsc', 'DiceResult')


class DiceResult(object):
    """Per-label Dice coefficients and their mean."""

    def __init__(self, per_label, mean, pooled=False):

        self.per_label = per_label
        self.mean = mean
        self.pooled = pooled

    @property
    def labels(self):
        return sorted(self.per_label)

    def __float__(self):
        return float(self.mean)

    def __repr__(self):
        return 'DiceResult(mean=%.4f, labels=%s)' % (self.mean, self.labels)


def dsc(a, b, labels=None, pooled=False):
    """Dice coefficient 2 |A & B| / (|A| + |B|) of each label of the
    label maps a and b.

    `labels` defaults to the labels present in either map.  Background
    0 is never counted and labels absent from both maps are excluded
    from the mean.  With `pooled` the mean is replaced by the Dice
    coefficient of the voxel counts summed over the labels."""

    a = np.asarray(a.data if hasattr(a, 'data') else a)
    b = np.asarray(b.data if hasattr(b, 'data') else b)
    if a.shape != b.shape:
        raise ShapeError('Label maps have shapes %s and %s' % (a.shape, b.shape))

    if labels is None:
        labels = np.union1d(np.unique(a), np.unique(b))
    labels = sorted(int(label) for label in labels if label != 0)

    per_label = {}
    intersections = 0
    sizes = 0
    for label in labels:
        A = a == label
        B = b == label
        size = int(A.sum()) + int(B.sum())
        if size == 0:
            continue
        intersection = int(np.logical_and(A, B).sum())
        per_label[label] = 2.0 * intersection / size
        intersections += intersection
        sizes += size

    if not per_label:
        raise EmptyEvaluationError('No foreground labels to evaluate')

    if pooled:
        mean = 2.0 * intersections / sizes
    else:
        mean = float(np.mean(list(per_label.values())))
    return DiceResult(per_label, mean, pooled)
