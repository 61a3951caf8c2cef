# -*- coding: utf-8 -*-

"""
Affine transforms and the differentiable spatial transformation layer.

Coordinates are normalized to [-1, 1] per axis with voxel centres at
-1 + 2i/(n-1) (align-corners). A transform maps output coordinates to the
source coordinates that get sampled (pull warping), so
resample(resample(x, A1), A2) ~ resample(x, compose(A1, A2)).
Samples falling outside the source volume read zero.
"""

import logging
from itertools import product

import numpy as np

from constants import DET_EPS, HARDEN_THRESHOLD, SNAP_TOL
from core.tensor import Function, Tensor, as_tensor, concat, matmul
from errors import ShapeError, SingularTransformError
from utils import harden

logger = logging.getLogger(__name__)

BOTTOM_ROW = np.array([0., 0., 0., 1.])


def voxel_to_normalized(index, dim):
    """Voxel index -> normalized coordinate."""
    return -1. + 2. * np.asarray(index, dtype=np.float64) / (dim - 1)


def normalized_to_voxel(coord, dim):
    """Normalized coordinate -> (fractional) voxel index."""
    return (np.asarray(coord, dtype=np.float64) + 1.) * (dim - 1) / 2.


def normalized_grid(dims):
    """(3, prod(dims)) normalized coordinates of every voxel, row-major."""
    axes = [voxel_to_normalized(np.arange(dim), dim) for dim in dims]
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.stack([axis.ravel() for axis in mesh])


class AffineTransform(object):

    """
    4x4 homogeneous matrix, held as a Tensor so gradients reach whatever
    produced it. The bottom row is fixed to [0, 0, 0, 1].
    """

    def __init__(self, matrix):
        matrix = as_tensor(matrix)
        if matrix.shape != (4, 4):
            raise ShapeError('Affine matrix must be 4x4, got {0}'.format(
                matrix.shape))
        if not np.array_equal(matrix.data[3], BOTTOM_ROW):
            raise ValueError('Affine bottom row must be [0, 0, 0, 1], got {0}'
                             .format(matrix.data[3]))
        det = self.linear_determinant(matrix.data)
        if abs(det) < DET_EPS:
            raise SingularTransformError(det)
        self.matrix = matrix

    @staticmethod
    def linear_determinant(matrix):
        return float(np.linalg.det(np.asarray(matrix)[:3, :3]))

    @property
    def values(self):
        """The matrix as a numpy array."""
        return self.matrix.data

    @property
    def determinant(self):
        return self.linear_determinant(self.values)

    def detach(self):
        return AffineTransform(self.matrix.detach())

    def __repr__(self):
        return 'AffineTransform({0})'.format(
            np.array2string(self.values[:3], precision=4))

    @classmethod
    def identity(cls):
        return cls(np.eye(4))

    @classmethod
    def translation(cls, offset):
        matrix = np.eye(4)
        matrix[:3, 3] = offset
        return cls(matrix)

    @classmethod
    def scaling(cls, factor):
        matrix = np.eye(4)
        matrix[:3, :3] *= np.broadcast_to(factor, (3,))
        return cls(matrix)

    @classmethod
    def rotation(cls, angles):
        """Rotation by Euler angles (radians) about x, then y, then z."""
        ax, ay, az = angles
        rot_x = np.array([[1, 0, 0],
                          [0, np.cos(ax), -np.sin(ax)],
                          [0, np.sin(ax), np.cos(ax)]])
        rot_y = np.array([[np.cos(ay), 0, np.sin(ay)],
                          [0, 1, 0],
                          [-np.sin(ay), 0, np.cos(ay)]])
        rot_z = np.array([[np.cos(az), -np.sin(az), 0],
                          [np.sin(az), np.cos(az), 0],
                          [0, 0, 1]])
        matrix = np.eye(4)
        matrix[:3, :3] = rot_z.dot(rot_y).dot(rot_x)
        return cls(matrix)

    @classmethod
    def from_params(cls, params):
        """
        Identity plus 12 free parameters (the top 3x4 block, row-major).
        'params' is a Tensor of shape (12,).
        """
        params = as_tensor(params)
        if params.shape != (12,):
            raise ShapeError('Expected 12 affine parameters, got {0}'.format(
                params.shape))
        top = params.reshape(3, 4)
        full = concat([top, Tensor(np.zeros((1, 4)))], axis=0)
        return cls(full + Tensor(np.eye(4)))


def compose(*transforms):
    """
    Matrix product of the transforms in argument order. With pull warping,
    resampling by compose(a, b) equals resampling by a, then by b.
    """
    if not transforms:
        return AffineTransform.identity()
    # [0 0 0 1] . B is B's bottom row, so products keep it exact
    matrix = transforms[0].matrix
    for transform in transforms[1:]:
        matrix = matmul(matrix, transform.matrix)
    return AffineTransform(matrix)


class Inverse(Function):
    def forward(self, a):
        linear = np.linalg.inv(a[:3, :3])
        self.out = np.eye(4)
        self.out[:3, :3] = linear
        self.out[:3, 3] = -linear.dot(a[:3, 3])
        return self.out

    def backward(self, grad):
        inv_t = self.out.T
        adjoint = -inv_t.dot(grad).dot(inv_t)
        # the bottom row is fixed, forward never reads it
        adjoint[3] = 0.
        return (adjoint,)


def inverse(transform):
    det = transform.determinant
    if abs(det) < DET_EPS:
        raise SingularTransformError(det)
    return AffineTransform(Inverse.apply(transform.matrix))


def _snap(coords):
    """Pull coordinates within SNAP_TOL of a grid point onto it."""
    nearest = np.round(coords)
    return np.where(np.abs(coords - nearest) < SNAP_TOL, nearest, coords)


class Resample(Function):

    """
    Trilinear resampling of source (C, W, H, D) through a 4x4 matrix onto
    an output grid of 'out_dims'. Differentiable in the source values and
    in the top 3x4 block of the matrix.
    """

    def forward(self, source, matrix, out_dims=None):
        if source.ndim != 4:
            raise ShapeError('resample: expected (C, W, H, D), got {0}'
                             .format(source.shape))
        out_dims = tuple(out_dims or source.shape[1:])
        if min(out_dims) <= 0:
            raise ShapeError('resample: non-positive output dims {0}'.format(
                out_dims))

        src_dims = np.array(source.shape[1:])
        self.grid = normalized_grid(out_dims)
        sampled = matrix[:3, :3].dot(self.grid) + matrix[:3, 3:]
        self.scale = (src_dims - 1) / 2.
        coords = _snap((sampled + 1.) * self.scale[:, None])

        base = np.floor(coords)
        self.frac = coords - base
        self.base = base.astype(np.int64)
        self.out_dims = out_dims

        flat = source.reshape(source.shape[0], -1)
        self.corners = []
        out = np.zeros((source.shape[0], self.grid.shape[1]))

        for bits in product((0, 1), repeat=3):
            index = self.base + np.array(bits)[:, None]
            valid = np.all((index >= 0) & (index < src_dims[:, None]), axis=0)
            linear = np.ravel_multi_index(
                np.where(valid, index, 0), tuple(src_dims))
            weights = [self.frac[axis] if bit else 1. - self.frac[axis]
                       for axis, bit in enumerate(bits)]
            weight = weights[0] * weights[1] * weights[2] * valid
            values = flat[:, linear] * valid
            out += values * weight
            self.corners.append((bits, linear, valid, weights, values))

        return out.reshape((source.shape[0],) + out_dims)

    def backward(self, grad):
        source = self.inputs[0].data
        grad = grad.reshape(source.shape[0], -1)
        grad_source = grad_matrix = None

        if self.needs_grad(0):
            grad_source = np.zeros((source.shape[0], source[0].size))
            for bits, linear, valid, weights, _ in self.corners:
                weight = weights[0] * weights[1] * weights[2] * valid
                for channel in range(source.shape[0]):
                    grad_source[channel] += np.bincount(
                        linear, weights=grad[channel] * weight,
                        minlength=source[0].size)
            grad_source = grad_source.reshape(source.shape)

        if self.needs_grad(1):
            # d out / d voxel coordinate, per axis
            dcoord = np.zeros((3, self.grid.shape[1]))
            for bits, linear, valid, weights, values in self.corners:
                contribution = (grad * values).sum(axis=0)
                for axis in range(3):
                    slope = 1. if bits[axis] else -1.
                    others = [weights[other] for other in range(3)
                              if other != axis]
                    dcoord[axis] += (contribution * slope * others[0] *
                                     others[1])
            dcoord *= self.scale[:, None]
            homogeneous = np.vstack([self.grid, np.ones(self.grid.shape[1])])
            grad_matrix = np.zeros((4, 4))
            grad_matrix[:3] = dcoord.dot(homogeneous.T)

        return grad_source, grad_matrix


def resample(source, transform, out_dims=None):
    """Warp 'source' (C, W, H, D) by 'transform' (pull)."""
    return Resample.apply(source, transform.matrix, out_dims=out_dims)


def warp_mask(mask, transform):
    """Soft-warp every channel of a one-hot mask (L, W, H, D)."""
    return resample(mask, transform, mask.shape[1:])


def harden_mask(mask, offset=0):
    """Label map from a soft mask; 0 where every channel is < 0.5."""
    data = mask.data if isinstance(mask, Tensor) else mask
    return harden(data, HARDEN_THRESHOLD, offset)
