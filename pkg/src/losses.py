# -*- coding: utf-8 -*-
"""
Loss terms of the joint objective

    total = cls + alpha * ext + beta * sim + gamma * seg
"""

import logging
from dataclasses import dataclass

import numpy as np

from constants import PROB_CLAMP
from core.tensor import Tensor, as_tensor, conv3d, softmax
from errors import DegenerateInputError, ShapeError

logger = logging.getLogger(__name__)

VARIANCE_EPS = 1e-20
LNCC_EPS = 1e-5

TERMS = ('cls', 'ext', 'sim', 'seg')


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError('Loss weights must be non-negative: {0}'.format(
                self))


@dataclass(frozen=True)
class LossReport:
    total: float
    cls: float
    ext: float
    sim: float
    seg: float

    def recompose(self, weights):
        """Weighted sum of the parts (equals 'total')."""
        return (self.cls + weights.alpha * self.ext + weights.beta * self.sim
                + weights.gamma * self.seg)


@dataclass
class LossTargets:
    """Per-subject supervision: extraction mask, class label, template."""
    mask: np.ndarray
    label: int
    template: np.ndarray


def cross_entropy(pred, target, axis=None):
    """
    Mean negative log-likelihood. Without 'axis' the prediction is a
    per-element Bernoulli probability; with 'axis' it is a distribution
    along that axis and the target one-hot along the same axis.
    """
    pred = as_tensor(pred)
    target = as_tensor(target).detach()
    if pred.shape != target.shape:
        raise ShapeError('cross_entropy: prediction {0} vs target {1}'
                         .format(pred.shape, target.shape))

    if axis is None:
        prob = pred.clamp(PROB_CLAMP, 1. - PROB_CLAMP)
        nll = -(target * prob.log() + (1. - target) * (1. - prob).log())
        return nll.mean()

    prob = pred.clamp(PROB_CLAMP, 1.)
    return -(target * prob.log()).sum(axes=axis).mean()


def classification_loss(logits, label, num_classes=None):
    """Softmax cross-entropy of class logits against an integer label."""
    num_classes = num_classes or logits.shape[0]
    target = np.eye(num_classes)[int(label)]
    return cross_entropy(softmax(logits, axis=0), target, axis=0)


def _standardize(image, name):
    if np.var(image.data) < VARIANCE_EPS:
        raise DegenerateInputError(
            'NCC undefined: {0} image has zero variance'.format(name))
    centered = image - image.mean()
    return centered / (centered * centered).mean().sqrt()


def _box_sum(volume, window):
    kernel = Tensor(np.ones((1, 1) + (window,) * 3))
    return conv3d(volume, kernel, padding=window // 2)


def local_ncc(warped, template, window=5):
    """
    Mean squared local correlation over cubic windows (box filters through
    conv3d). Returned negated, like the global variant.
    """
    shape = (1,) + warped.shape[-3:]
    image = warped.reshape(shape)
    target = template.reshape(shape)
    count = float(window ** 3)

    sum_i = _box_sum(image, window)
    sum_j = _box_sum(target, window)
    sum_ii = _box_sum(image * image, window)
    sum_jj = _box_sum(target * target, window)
    sum_ij = _box_sum(image * target, window)

    cross = sum_ij - sum_i * sum_j / count
    var_i = sum_ii - sum_i * sum_i / count
    var_j = sum_jj - sum_j * sum_j / count
    local = cross * cross / (var_i * var_j + LNCC_EPS)
    return -local.mean()


def similarity_loss(warped, template, kind='ncc', window=5):
    """Image dissimilarity between the warped image and the template."""
    warped = as_tensor(warped)
    template = as_tensor(template)
    if warped.shape != template.shape:
        raise ShapeError('similarity_loss: {0} vs {1}'.format(
            warped.shape, template.shape))

    if kind == 'mse':
        diff = warped - template
        return (diff * diff).mean()
    if kind == 'ncc':
        return -(_standardize(warped, 'warped') *
                 _standardize(template, 'template')).mean()
    if kind == 'lncc':
        return local_ncc(warped, template, window)
    raise ValueError('Unknown similarity kind: {0}'.format(kind))


def loss_terms(outputs, targets, similarity='ncc', window=5):
    """
    The four loss terms for one subject. The segmentation target (the
    warped atlas mask) is detached, so the segmentation term never pulls
    on the registration through its own pseudo-label.
    """
    template = Tensor(targets.template)
    return {
        'cls': classification_loss(outputs.logits, targets.label),
        'ext': cross_entropy(outputs.m_hat, targets.mask),
        'sim': similarity_loss(outputs.warped.reshape(template.shape),
                               template, similarity, window),
        'seg': cross_entropy(outputs.seg_pred, outputs.seg_warped.detach(),
                             axis=0),
    }


def joint_coefficients(weights):
    return {'cls': 1., 'ext': weights.alpha, 'sim': weights.beta,
            'seg': weights.gamma}


def weighted_total(terms, coefficients):
    """
    Sum of coefficient * term over 'coefficients' as a Tensor, plus the
    float report (every term is reported, weighted in or not).
    """
    total = None
    for name in TERMS:
        if name not in coefficients:
            continue
        part = coefficients[name] * terms[name]
        total = part if total is None else total + part
    report = LossReport(total.item(), *(terms[name].item()
                                        for name in TERMS))
    return total, report


def combine(terms, weights):
    """Joint weighted total as a Tensor, plus the float report."""
    return weighted_total(terms, joint_coefficients(weights))


def joint_loss(outputs, targets, weights, similarity='ncc', window=5):
    """Joint objective for one subject -> (total Tensor, LossReport)."""
    return combine(loss_terms(outputs, targets, similarity, window), weights)


def mean_report(reports):
    """Element-wise mean of a list of LossReports."""
    parts = np.array([[r.total, r.cls, r.ext, r.sim, r.seg]
                      for r in reports])
    return LossReport(*parts.mean(axis=0).tolist())
