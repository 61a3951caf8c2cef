# -*- coding: utf-8 -*-
"""Contains useful functions/classes"""

import os
import logging

import numpy as np

from constants import THREADS_ENV

logger = logging.getLogger(__name__)


def worker_count():
    """Number of worker threads allowed by the environment."""
    raw = os.environ.get(THREADS_ENV, '1')
    try:
        count = int(raw)
    except ValueError:
        logger.warning('Ignoring %s=%r, using 1 thread', THREADS_ENV, raw)
        return 1
    return max(1, count)


def derive_rng(seed, *keys):
    """Independent generator for (seed, key...)."""
    return np.random.default_rng((seed,) + tuple(keys))


def one_hot(labels, num_labels, offset=0):
    """
    Convert a label map into a one-hot array with the channel axis first.
    Labels below 'offset' (background) get an all-zero column.
    """
    labels = np.asarray(labels)
    out = np.zeros((num_labels,) + labels.shape)
    for channel in range(num_labels):
        out[channel] = labels == channel + offset
    return out


def harden(mask, threshold=0.5, offset=0):
    """
    Per-voxel channel argmax of a soft mask (channel axis first). Voxels
    where every channel is below 'threshold' become label 0.
    """
    mask = np.asarray(mask)
    labels = np.argmax(mask, axis=0) + offset
    labels[mask.max(axis=0) < threshold] = 0
    return labels.astype(np.int64)


def ellipsoid_radius(dims, semi_axes, transform=None):
    """
    Normalized ellipsoidal radius of every voxel of a dims-cube, with the
    centre in the middle of the cube. An optional 4x4 matrix maps the voxel
    grid (normalized coordinates) before the radius is taken.
    """
    axes = [np.linspace(-1., 1., dim) for dim in dims]
    coords = np.stack(np.meshgrid(*axes, indexing='ij'))
    if transform is not None:
        flat = coords.reshape(3, -1)
        flat = transform[:3, :3].dot(flat) + transform[:3, 3:]
        coords = flat.reshape(coords.shape)
    radius = np.zeros(coords.shape[1:])
    for axis, semi in enumerate(semi_axes):
        radius += (coords[axis] / semi) ** 2
    return np.sqrt(radius), coords
