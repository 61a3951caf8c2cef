# -*- coding: utf-8 -*-
"""
Evaluation metrics: overlap (Dice, Jaccard), intensity agreement (MI, CC)
and classification (ACC, AUC-ROC).
"""

import numpy as np
from scipy.stats import rankdata

from constants import MI_BINS
from errors import DegenerateInputError, ShapeError


def _overlap(a, b):
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeError('Mask shapes differ: {0} vs {1}'.format(a.shape,
                                                                 b.shape))
    inter = np.count_nonzero(a & b)
    return inter, np.count_nonzero(a), np.count_nonzero(b)


def _per_class(metric, a, b, labels):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.mean([metric(a == label, b == label)
                          for label in range(1, labels)]))


def dice(a, b, labels=None):
    """
    Dice overlap of two hard masks. With 'labels' the masks are label maps
    and the score is the mean over labels 1..labels-1 (0 is background).
    Two empty masks score 1.
    """
    if labels is not None:
        return _per_class(dice, a, b, labels)
    inter, size_a, size_b = _overlap(a, b)
    if size_a + size_b == 0:
        return 1.
    return 2. * inter / (size_a + size_b)


def jaccard(a, b, labels=None):
    """Jaccard index; same conventions as dice()."""
    if labels is not None:
        return _per_class(jaccard, a, b, labels)
    inter, size_a, size_b = _overlap(a, b)
    union = size_a + size_b - inter
    if union == 0:
        return 1.
    return float(inter) / union


def _bin(values, bins):
    values = np.asarray(values, dtype=np.float64).ravel()
    low, high = values.min(), values.max()
    if high == low:
        return np.zeros(values.size, dtype=np.int64)
    index = np.floor((values - low) / (high - low) * bins).astype(np.int64)
    return np.minimum(index, bins - 1)


def entropy(x, bins=MI_BINS):
    """Shannon entropy (nats) of the equal-width histogram of x."""
    counts = np.bincount(_bin(x, bins), minlength=bins)
    prob = counts[counts > 0] / float(counts.sum())
    return float(-np.sum(prob * np.log(prob)))


def mutual_information(x, y, bins=MI_BINS):
    """
    Histogram mutual information (nats). Each image gets 'bins' equal-width
    bins spanning its own [min, max].
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ShapeError('MI: shapes differ: {0} vs {1}'.format(x.shape,
                                                                y.shape))
    joint = np.bincount(_bin(x, bins) * bins + _bin(y, bins),
                        minlength=bins * bins).reshape(bins, bins)
    joint = joint / float(joint.sum())
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    nonzero = joint > 0
    outer = np.outer(px, py)
    mi = np.sum(joint[nonzero] * np.log(joint[nonzero] / outer[nonzero]))
    return max(float(mi), 0.)


def correlation(x, y):
    """Pearson correlation over all voxels."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError('CC: sizes differ: {0} vs {1}'.format(x.size,
                                                               y.size))
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    if denom == 0:
        raise DegenerateInputError('CC undefined for a constant image')
    return float(np.sum(dx * dy) / denom)


def accuracy(preds, labels):
    """
    Fraction of correct predictions. 'preds' is either a vector of
    predicted labels or an (n, classes) score matrix (argmax taken).
    """
    preds = np.asarray(preds)
    if preds.ndim == 2:
        preds = np.argmax(preds, axis=1)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or labels.size == 0:
        raise ShapeError('accuracy: {0} predictions vs {1} labels'.format(
            preds.shape, labels.shape))
    return float(np.mean(preds == labels))


def auc_roc(scores, labels):
    """Area under the ROC curve via the Mann-Whitney rank statistic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        raise DegenerateInputError('AUC needs both classes in the labels')
    ranks = rankdata(scores)
    rank_sum = ranks[labels].sum()
    return float((rank_sum - positives * (positives + 1) / 2.) /
                 (positives * negatives))
