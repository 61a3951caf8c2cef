# -*- coding: utf-8 -*-
"""
Finite-difference checks of every differentiable primitive and of the
full pipeline loss.

Each check pushes random inputs through a function, contracts the output
with a random direction to get a scalar and compares the autodiff gradient of
every input against central differences.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from config import TrainConfig
from constants import (FD_ABS_TOL, FD_REL_TOL, FD_SMALL_GRAD, FD_STEP,
                       PIPELINE_REL_TOL)
from core.geometry import AffineTransform, Inverse, Resample, compose
from core.tensor import (ELEMENTWISE, REDUCTIONS, Tensor, backward, concat,
                         conv3d, l2_normalize, matmul, no_grad, pool3d,
                         softmax, upsample3d)
from losses import joint_loss
from nets import ModelParams
from phantom import PhantomSpec, make_subject, make_template
from pipeline import forward, subject_targets
from utils import derive_rng

logger = logging.getLogger(__name__)

MAX_GRID_DRAWS = 100
GRID_MARGIN = 1e-3


@dataclass
class CheckResult:
    suite: str
    name: str
    error: float
    passed: bool


def compare(analytic, numeric, rel_tol=FD_REL_TOL):
    """
    Worst relative error and pass flag. Entries where both gradients are
    below FD_SMALL_GRAD are held to the absolute FD_ABS_TOL instead.
    """
    analytic = np.ravel(analytic)
    numeric = np.ravel(numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    diff = np.abs(analytic - numeric)
    small = scale < FD_SMALL_GRAD
    rel = np.where(small, 0., diff / np.where(small, 1., scale))
    worst = float(rel.max()) if rel.size else 0.
    passed = worst <= rel_tol and bool(np.all(diff[small] <= FD_ABS_TOL))
    return worst, passed


def numeric_gradient(loss, array, step=FD_STEP):
    """Central differences of loss() w.r.t. every entry of 'array'."""
    grad = np.zeros(array.shape)
    for index in np.ndindex(*array.shape):
        saved = array[index]
        array[index] = saved + step
        upper = loss()
        array[index] = saved - step
        lower = loss()
        array[index] = saved
        grad[index] = (upper - lower) / (2. * step)
    return grad


def check(build, arrays, rng, rel_tol=FD_REL_TOL):
    """Worst error over all inputs of build(*tensors)."""
    arrays = [np.array(array, dtype=np.float64) for array in arrays]
    tensors = [Tensor(array, requires_grad=True) for array in arrays]
    out = build(*tensors)
    direction = rng.normal(size=out.shape)
    backward((out * Tensor(direction)).sum())

    def loss():
        with no_grad():
            return float(np.sum(build(*(Tensor(a) for a in arrays)).data *
                                direction))

    worst, passed = 0., True
    for array, tensor in zip(arrays, tensors):
        analytic = tensor.grad if tensor.grad is not None else np.zeros(
            array.shape)
        error, ok = compare(analytic, numeric_gradient(loss, array), rel_tol)
        worst = max(worst, error)
        passed = passed and ok
    return worst, passed


def away_from_zero(rng, shape, low=0.1):
    """Random values with |x| >= low (keeps kinks out of the FD step)."""
    return rng.choice((-1., 1.), size=shape) * rng.uniform(low, 1., shape)


def distinct(rng, shape):
    """Random values that are pairwise far apart (no max ties)."""
    size = int(np.prod(shape))
    return rng.permutation(size).reshape(shape) / float(size) + rng.uniform(
        0., 1e-3, shape)


def elementwise_suite(rng):
    shape = (3, 4)
    positive = rng.uniform(0.5, 2., shape)
    signed = away_from_zero(rng, shape)
    cases = OrderedDict([
        ('add', (signed, rng.normal(size=shape))),
        ('sub', (signed, rng.normal(size=shape))),
        ('mul', (signed, rng.normal(size=shape))),
        ('div', (rng.normal(size=shape), signed)),
        ('power', (positive, rng.uniform(-2., 2., shape))),
        ('neg', (signed,)),
        ('relu', (signed,)),
        ('sigmoid', (rng.normal(size=shape),)),
        ('tanh', (rng.normal(size=shape),)),
        ('exp', (rng.normal(size=shape),)),
        ('log', (positive,)),
        ('sqrt', (positive,)),
        ('abs', (signed,)),
    ])
    for kind, arrays in cases.items():
        yield kind, check(ELEMENTWISE[kind].apply, arrays, rng)
    # magnitudes on both sides of the clamp bound, never on it
    inside = rng.uniform(0.1, 0.4, shape)
    outside = rng.uniform(0.6, 1., shape)
    clamped = np.sign(signed) * np.where(rng.random(shape) < 0.5, inside,
                                         outside)
    yield 'clamp', check(lambda x: x.clamp(-0.5, 0.5), (clamped,), rng)
    yield 'scalar_broadcast', check(lambda x, s: x * s,
                                    (rng.normal(size=shape),
                                     rng.normal(size=())), rng)


def matmul_suite(rng):
    yield 'matmul', check(matmul, (rng.normal(size=(3, 4)),
                                   rng.normal(size=(4, 2))), rng)


def reduce_suite(rng):
    for kind in ('sum', 'mean'):
        yield kind, check(
            lambda x, kind=kind: REDUCTIONS[kind].apply(x, axes=(0, 2)),
            (rng.normal(size=(2, 3, 4)),), rng)
    yield 'max', check(lambda x: x.max(axes=1, keepdims=True),
                       (distinct(rng, (2, 3, 4)),), rng)


def shape_suite(rng):
    yield 'reshape', check(lambda x: x.reshape(4, 6),
                           (rng.normal(size=(2, 3, 4)),), rng)
    yield 'transpose', check(lambda x: x.transpose(2, 0, 1),
                             (rng.normal(size=(2, 3, 4)),), rng)
    yield 'getitem', check(lambda x: x[1:, ::2],
                           (rng.normal(size=(3, 4)),), rng)
    yield 'broadcast_to', check(lambda x: x.broadcast_to((3, 4)),
                                (rng.normal(size=(1, 4)),), rng)
    yield 'concat', check(lambda a, b: concat([a, b], axis=1),
                          (rng.normal(size=(2, 3)),
                           rng.normal(size=(2, 2))), rng)


def softmax_suite(rng):
    yield 'softmax', check(lambda x: softmax(x, axis=0),
                           (rng.normal(size=(3, 4)),), rng)
    yield 'l2_normalize', check(lambda x: l2_normalize(x, axis=1),
                                (rng.normal(size=(3, 4)),), rng)


def conv3d_suite(rng):
    x = rng.normal(size=(2, 4, 4, 4))
    w = rng.normal(size=(3, 2, 3, 3, 3))
    yield 'conv3d', check(lambda a, b: conv3d(a, b, padding=1), (x, w), rng)
    yield 'conv3d_stride2', check(lambda a, b: conv3d(a, b, stride=2),
                                  (x, w), rng)


def pool_suite(rng):
    yield 'pool3d', check(pool3d, (distinct(rng, (2, 4, 4, 4)),), rng)
    yield 'upsample3d', check(upsample3d, (rng.normal(size=(2, 2, 2, 2)),),
                              rng)


def random_affine(rng, scale=0.2):
    matrix = np.eye(4)
    matrix[:3] += rng.uniform(-scale, scale, (3, 4))
    return matrix


def off_grid_affine(rng, dims):
    """Affine whose sample points all stay GRID_MARGIN away from voxels."""
    for _ in range(MAX_GRID_DRAWS):
        matrix = random_affine(rng)
        source = np.zeros((1,) + dims)
        resampler = Resample(Tensor(source), Tensor(matrix))
        resampler.forward(source, matrix)
        frac = resampler.frac
        if np.all(np.minimum(frac, 1. - frac) > GRID_MARGIN):
            return matrix
    raise RuntimeError('No off-grid affine found')


def resample_suite(rng):
    dims = (4, 4, 4)
    matrix = off_grid_affine(rng, dims)
    yield 'resample', check(lambda s, m: Resample.apply(s, m),
                            (rng.normal(size=(2,) + dims), matrix), rng)
    yield 'inverse', check(Inverse.apply, (random_affine(rng),), rng)
    yield 'compose', check(
        lambda p, q: compose(AffineTransform.from_params(p),
                             AffineTransform.from_params(q)).matrix,
        (rng.uniform(-0.2, 0.2, 12), rng.uniform(-0.2, 0.2, 12)), rng)


def check_config():
    """Smallest network stack that still exercises every stage."""
    return TrainConfig(dims=16, classes=3, rois=4, features=4, unet_depth=1,
                       unet_base=2, reg_channels=(2, 2), roi_hidden=4,
                       gcn_widths=(4,), stages=2)


def pipeline_suite(rng, trials=3):
    """
    Full joint loss vs central differences on a few parameters of the
    extraction head. Downstream of the head the loss is smooth: the
    zero-initialized registration head keeps A at the identity.
    """
    config = check_config()
    spec = PhantomSpec(dims=config.dims, classes=config.classes,
                       rois=config.rois, seed=int(rng.integers(1000)))
    template = make_template(spec)
    subject = make_subject(template, spec, 0)
    params = ModelParams.build(config.replace(seed=int(rng.integers(1000))))
    targets = subject_targets(subject, template)

    def loss():
        outputs = forward(params, subject.image, template)
        return joint_loss(outputs, targets, config.weights,
                          config.similarity)[0]

    backward(loss())
    head = params.extractor.head
    tensors = [head.weight, head.bias]
    picks = []
    for _ in range(trials):
        tensor = tensors[int(rng.integers(len(tensors)))]
        picks.append((tensor, np.unravel_index(
            int(rng.integers(tensor.size)), tensor.shape)))

    analytic, numeric = [], []
    for tensor, index in picks:
        analytic.append(tensor.grad[index])
        saved = tensor.data[index]
        values = []
        for shift in (FD_STEP, -FD_STEP):
            tensor.data[index] = saved + shift
            with no_grad():
                values.append(loss().item())
        tensor.data[index] = saved
        numeric.append((values[0] - values[1]) / (2. * FD_STEP))
    yield 'joint_loss', compare(np.array(analytic), np.array(numeric),
                                PIPELINE_REL_TOL)


SUITES = OrderedDict([
    ('elementwise', elementwise_suite),
    ('matmul', matmul_suite),
    ('reduce', reduce_suite),
    ('shape', shape_suite),
    ('softmax', softmax_suite),
    ('conv3d', conv3d_suite),
    ('pool', pool_suite),
    ('resample', resample_suite),
    ('pipeline', pipeline_suite),
])


def run_checks(modules=None, trials=1, seed=0):
    """
    Run the named suites (all by default) 'trials' times with fresh random
    inputs; one CheckResult per check holding its worst error.
    """
    if trials < 1:
        raise ValueError('trials must be >= 1, got {0}'.format(trials))
    modules = list(modules or SUITES)
    unknown = [name for name in modules if name not in SUITES]
    if unknown:
        raise ValueError('Unknown gradcheck module(s): {0}'.format(
            ', '.join(unknown)))

    results = OrderedDict()
    for trial in range(trials):
        for index, module in enumerate(modules):
            rng = derive_rng(seed, trial, index)
            for name, (error, passed) in SUITES[module](rng):
                key = (module, name)
                previous = results.get(key)
                if previous is not None:
                    error = max(error, previous.error)
                    passed = passed and previous.passed
                results[key] = CheckResult(module, name, error, passed)
                logger.debug('%s/%s trial %d: %.3e', module, name, trial,
                             error)
    return list(results.values())
