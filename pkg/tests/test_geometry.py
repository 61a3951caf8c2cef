# -*- coding: utf-8 -*-
import numpy as np
import pytest

from core.geometry import (AffineTransform, compose, harden_mask, inverse,
                           normalized_to_voxel, resample, voxel_to_normalized,
                           warp_mask)
from core.tensor import Tensor
from errors import ShapeError, SingularTransformError
from gradcheck import run_checks
from metrics import dice
from utils import ellipsoid_radius, one_hot


def mild_affine(rng):
    shear = np.eye(4)
    shear[0, 1] = 0.05
    return compose(AffineTransform.translation(rng.uniform(-0.1, 0.1, 3)),
                   AffineTransform.rotation(rng.uniform(-0.2, 0.2, 3)),
                   AffineTransform(shear),
                   AffineTransform.scaling(1.05))


def blob(dims, sigma):
    radius, _ = ellipsoid_radius((dims,) * 3, (1., 1., 1.))
    return np.exp(-radius ** 2 / (2. * sigma ** 2))[None]


def test_voxel_coordinates_round_trip():
    index = np.arange(17)
    back = normalized_to_voxel(voxel_to_normalized(index, 17), 17)
    assert np.allclose(back, index, atol=1e-12)
    assert voxel_to_normalized(0, 17) == -1.
    assert voxel_to_normalized(16, 17) == 1.


def test_matrix_validation():
    with pytest.raises(ShapeError):
        AffineTransform(np.eye(3))
    bad = np.eye(4)
    bad[3, 0] = 0.5
    with pytest.raises(ValueError):
        AffineTransform(bad)
    with pytest.raises(SingularTransformError) as info:
        AffineTransform(np.diag([1., 1., 1e-7, 1.]))
    assert abs(info.value.determinant) < 1e-6


def test_from_zero_params_is_identity():
    transform = AffineTransform.from_params(Tensor(np.zeros(12)))
    assert np.array_equal(transform.values, np.eye(4))


def test_compose_laws(rng):
    a = mild_affine(rng)
    b = mild_affine(rng)
    identity = AffineTransform.identity()
    assert np.array_equal(compose(identity, identity).values, np.eye(4))
    assert np.allclose(compose(a, identity).values, a.values, atol=1e-15)
    assert np.allclose(compose(a, b).values, a.values.dot(b.values),
                       atol=1e-15)
    assert np.array_equal(compose(a, b).values[3], [0., 0., 0., 1.])

    offset = rng.normal(size=3)
    shifted = compose(AffineTransform.translation(offset),
                      AffineTransform.translation(-offset))
    assert np.allclose(shifted.values, np.eye(4), atol=1e-15)


def test_inverse(rng):
    assert np.array_equal(inverse(AffineTransform.identity()).values,
                          np.eye(4))
    half = inverse(AffineTransform.scaling(2.))
    assert np.allclose(half.values, AffineTransform.scaling(0.5).values)

    a = mild_affine(rng)
    assert np.allclose(compose(a, inverse(a)).values, np.eye(4), atol=1e-10)
    assert np.allclose(compose(inverse(a), a).values, np.eye(4), atol=1e-10)


def test_identity_resample_is_exact(rng):
    x = rng.normal(size=(2, 6, 5, 7))
    out = resample(Tensor(x), AffineTransform.identity())
    assert np.array_equal(out.data, x)


def test_midpoint_interpolates():
    source = np.zeros((1, 2, 2, 2))
    source[0, 1] = 1.
    out = resample(Tensor(source), AffineTransform.identity(),
                   out_dims=(3, 2, 2)).data
    assert np.allclose(out[0, :, 0, 0], [0., 0.5, 1.])


def test_integer_translation_shifts(rng):
    dims = 9
    x = rng.normal(size=(1, dims, dims, dims))
    step = 2. * 2. / (dims - 1)
    out = resample(Tensor(x),
                   AffineTransform.translation([step, 0., 0.])).data
    assert np.allclose(out[:, :-2], x[:, 2:], atol=1e-12)
    assert np.array_equal(out[:, -2:], np.zeros((1, 2, dims, dims)))


def test_border_samples_blend_with_zero_padding():
    dims = 8
    ones = Tensor(np.ones((1, dims, dims, dims)))
    voxel = 2. / (dims - 1)
    half = resample(ones, AffineTransform.translation(
        [0.5 * voxel, 0., 0.])).data
    assert np.allclose(half[:, :-1], 1., atol=1e-12)
    assert np.allclose(half[:, -1], 0.5, atol=1e-12)
    beyond = resample(ones, AffineTransform.translation(
        [1.5 * voxel, 0., 0.])).data
    assert np.allclose(beyond[:, -2], 0.5, atol=1e-12)
    assert np.array_equal(beyond[:, -1], np.zeros((dims, dims)))


def test_partition_of_unity():
    ones = np.ones((1, 10, 10, 10))
    transform = compose(AffineTransform.rotation((0., 0., 0.05)),
                        AffineTransform.scaling(0.9))
    out = resample(Tensor(ones), transform).data
    assert np.allclose(out, 1., atol=1e-12)


def test_composition_consistency():
    x = blob(16, 0.5)
    first = AffineTransform.rotation((0., 0., np.deg2rad(5.)))
    second = AffineTransform.scaling(0.95)
    twice = resample(resample(Tensor(x), first), second).data
    once = resample(Tensor(x), compose(first, second)).data
    assert np.max(np.abs(twice - once)) <= 0.05


def test_warp_mask_identity_and_mass(rng):
    labels = rng.integers(0, 3, (8, 8, 8))
    mask = one_hot(labels, 3)
    assert np.array_equal(
        warp_mask(Tensor(mask), AffineTransform.identity()).data, mask)

    warped = warp_mask(Tensor(mask), mild_affine(rng)).data
    assert np.all(warped >= 0.)
    assert np.all(warped.sum(axis=0) <= 1. + 1e-9)


def test_warp_then_inverse_warp_preserves_mask(rng):
    radius, _ = ellipsoid_radius((24,) * 3, (0.6, 0.5, 0.45))
    labels = (radius < 1.).astype(np.int64)
    mask = Tensor(one_hot(labels, 2))
    transform = mild_affine(rng)
    back = warp_mask(warp_mask(mask, transform), inverse(transform))
    assert dice(harden_mask(back), labels, labels=2) >= 0.95


def test_harden_mask():
    mask = np.zeros((2, 3, 1, 1))
    mask[:, 0, 0, 0] = (0.6, 0.4)
    mask[:, 1, 0, 0] = (0.3, 0.4)
    mask[:, 2, 0, 0] = (0.2, 0.7)
    assert harden_mask(mask)[:, 0, 0].tolist() == [0, 0, 1]
    assert harden_mask(mask, offset=1)[:, 0, 0].tolist() == [1, 0, 2]


def test_resample_gradients():
    for result in run_checks(['resample'], trials=2):
        assert result.passed, (result.name, result.error)
