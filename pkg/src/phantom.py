# -*- coding: utf-8 -*-
"""
Synthetic brain phantoms with known ground truth.

A template (intensity image T, tissue mask B, parcellation P) is rendered
from a centred ellipsoid; every subject is the template pushed through a
random affine, wrapped in a skull shell and corrupted by Gaussian noise.
Class 1 subjects have parcel 0 attenuated by (1 - delta).
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from config import coerce
from constants import (BRAIN_SEMI_AXES, LABELS_FILE, MANIFEST_FILE,
                       MAX_REDRAWS, MAX_ROTATION_DEG, MAX_SHEAR,
                       MAX_TRANSLATION_LIMIT, MIN_DIMS, MIN_SPLIT,
                       MIN_SUBJECTS, SCALE_RANGE, SKULL_INNER,
                       SKULL_INTENSITY, SKULL_OUTER, TEMPLATE_FILE,
                       TEMPLATE_PARC_FILE, TEMPLATE_SEG_FILE, TRUTH_DIR,
                       VAL_FRACTION)
from core.defaults import PHANTOM_DEFAULTS
from core.geometry import AffineTransform, compose, inverse, resample
from core.nifti import read_volume, write_volume
from core.records import (read_labels, read_transform, write_labels,
                          write_transform)
from core.store import ConfigStore
from core.tensor import Tensor, no_grad
from errors import FormatError, SingularTransformError, SpecError
from utils import derive_rng, ellipsoid_radius, harden, one_hot, worker_count

logger = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')

_D = PHANTOM_DEFAULTS


@dataclass(frozen=True)
class PhantomSpec:
    dims: int = _D['dims']
    classes: int = _D['classes']
    rois: int = _D['rois']
    subjects: int = _D['subjects']
    delta: float = _D['delta']
    sigma: float = _D['sigma']
    max_rotation: float = _D['max_rotation']
    scale_min: float = _D['scale_min']
    scale_max: float = _D['scale_max']
    max_translation: float = _D['max_translation']
    max_shear: float = _D['max_shear']
    seed: int = _D['seed']

    def __post_init__(self):
        for item in fields(self):
            try:
                value = coerce(item.type, item.name,
                               getattr(self, item.name))
            except ValueError as exc:
                raise SpecError(str(exc))
            object.__setattr__(self, item.name, value)
        self.validate()

    def validate(self):
        def check(condition, message):
            if not condition:
                raise SpecError(message)

        check(self.dims >= MIN_DIMS, 'dims must be >= {0}'.format(MIN_DIMS))
        check(self.classes >= 2, 'classes must be >= 2')
        check(self.rois >= 2, 'rois must be >= 2')
        check(self.subjects >= MIN_SUBJECTS,
              'subjects must be >= {0}'.format(MIN_SUBJECTS))
        check(0. <= self.delta < 1., 'delta must be in [0, 1)')
        check(self.sigma >= 0., 'sigma must be >= 0')
        check(0. <= self.max_rotation <= MAX_ROTATION_DEG,
              'max_rotation must be in [0, {0}]'.format(MAX_ROTATION_DEG))
        check(SCALE_RANGE[0] <= self.scale_min <= self.scale_max <=
              SCALE_RANGE[1], 'scale range must lie within {0}'.format(
                  SCALE_RANGE))
        check(0. <= self.max_translation <= MAX_TRANSLATION_LIMIT,
              'max_translation must be in [0, {0}]'.format(
                  MAX_TRANSLATION_LIMIT))
        check(0. <= self.max_shear <= MAX_SHEAR,
              'max_shear must be in [0, {0}]'.format(MAX_SHEAR))

    @property
    def shape(self):
        return (self.dims,) * 3

    def replace(self, **changes):
        values = {item.name: getattr(self, item.name)
                  for item in fields(self)}
        values.update(changes)
        return PhantomSpec(**values)

    def save(self, file_path):
        store = ConfigStore(defaults=PHANTOM_DEFAULTS)
        for item in fields(self):
            store[item.name] = getattr(self, item.name)
        store.persist(file_path)

    @classmethod
    def load(cls, file_path):
        store = ConfigStore.load(file_path, PHANTOM_DEFAULTS)
        return cls(**dict(store.items()))


@dataclass
class PhantomTemplate:
    image: np.ndarray      # T (W, H, D)
    seg: np.ndarray        # B (C, W, H, D), channel 0 = background
    parc: np.ndarray       # P (K, W, H, D)

    @property
    def brain(self):
        return self.parc.sum(axis=0) > 0

    @property
    def shape(self):
        return self.image.shape


@dataclass
class PhantomSubject:
    index: int
    image: np.ndarray      # S
    mask: np.ndarray       # M, uint8
    label: int             # y
    transform: AffineTransform = field(repr=False)  # A_true
    seg: np.ndarray = field(repr=False)    # tissue labels 0..C-1
    parc: np.ndarray = field(repr=False)   # ROI labels 1..K, 0 outside


@dataclass
class PhantomDataset:
    spec: PhantomSpec
    template: PhantomTemplate
    subjects: list

    def split(self, name):
        if name not in SPLITS:
            raise ValueError('Unknown split {0!r}'.format(name))
        bounds = np.cumsum((0,) + split_sizes(len(self.subjects)))
        index = SPLITS.index(name)
        return self.subjects[bounds[index]:bounds[index + 1]]

    @property
    def train(self):
        return self.split('train')

    @property
    def val(self):
        return self.split('val')

    @property
    def test(self):
        return self.split('test')


def split_sizes(total):
    """(train, val, test) subject counts."""
    held = max(MIN_SPLIT, int(total * VAL_FRACTION))
    return total - 2 * held, held, held


def semi_axes(dims):
    """Brain semi-axes in normalized units (fractions of dims in voxels)."""
    return tuple(2. * frac * dims / (dims - 1) for frac in BRAIN_SEMI_AXES)


def tissue_intensities(classes):
    """Base intensity of tissue shells 1..C-1, outermost brightest."""
    return np.linspace(0.6, 1., classes - 1)


def make_template(spec):
    radius, coords = ellipsoid_radius(spec.shape, semi_axes(spec.dims))
    brain = radius < 1.

    shells = spec.classes - 1
    tissue = np.minimum((radius * shells).astype(np.int64), shells - 1) + 1
    tissue[~brain] = 0
    seg = one_hot(tissue, spec.classes)

    # Azimuth around the vertical (z) axis
    azimuth = np.arctan2(coords[1], coords[0])
    sector = ((azimuth + np.pi) / (2. * np.pi) * spec.rois).astype(np.int64)
    sector = np.minimum(sector, spec.rois - 1) + 1
    sector[~brain] = 0
    parc = one_hot(sector, spec.rois, offset=1)

    counts = parc.reshape(spec.rois, -1).sum(axis=1)
    if counts.min() == 0:
        raise SpecError('dims={0} too small for {1} parcels (empty parcel '
                        '{2})'.format(spec.dims, spec.rois,
                                      int(np.argmin(counts))))

    image = np.zeros(spec.shape)
    for shell, intensity in enumerate(tissue_intensities(spec.classes)):
        image[tissue == shell + 1] = intensity
    return PhantomTemplate(image, seg, parc)


def draw_transform(spec, rng):
    """Random affine within the PhantomSpec perturbation ranges."""
    angles = np.deg2rad(rng.uniform(-spec.max_rotation, spec.max_rotation,
                                    3))
    scale = rng.uniform(spec.scale_min, spec.scale_max)
    shear = np.eye(4)
    shear[[0, 0, 1], [1, 2, 2]] = rng.uniform(-spec.max_shear,
                                              spec.max_shear, 3)
    shift = (rng.uniform(-spec.max_translation, spec.max_translation, 3) *
             2. / (spec.dims - 1))
    total = compose(AffineTransform.translation(shift),
                    AffineTransform.rotation(angles),
                    AffineTransform(shear),
                    AffineTransform.scaling(scale))
    return AffineTransform(total.values.copy())


def _pull(volume, transform):
    """Resample a (W, H, D) or (C, W, H, D) array by 'transform'."""
    volume = np.asarray(volume, dtype=np.float64)
    flat = volume.ndim == 3
    source = volume[None] if flat else volume
    out = resample(Tensor(source), transform).data
    return out[0] if flat else out


def make_subject(template, spec, index, label=None, transform=None):
    """
    Subject 'index'. 'label' and 'transform' override the seeded draws
    (transform is A_true, mapping subject space back onto the template).
    """
    rng = derive_rng(spec.seed, index)
    if label is None:
        label = int(rng.integers(2))

    with no_grad():
        if transform is None:
            for _ in range(MAX_REDRAWS):
                try:
                    candidate = draw_transform(spec, rng)
                    pull = inverse(candidate)
                except SingularTransformError:
                    logger.debug('Subject %d: redrawing degenerate affine',
                                 index)
                    continue
                transform = candidate
                break
            else:
                raise SpecError('Subject {0}: no valid affine after {1} draws'
                                .format(index, MAX_REDRAWS))
        else:
            pull = inverse(transform)

        image = template.image.copy()
        if label == 1:
            image[template.parc[0] > 0] *= 1. - spec.delta

        mask = _pull(template.brain, pull) >= 0.5
        brain = _pull(image, pull) * mask
        seg = harden(_pull(template.seg, pull))
        parc = harden(_pull(template.parc, pull), offset=1)

    radius, _ = ellipsoid_radius(spec.shape, semi_axes(spec.dims),
                                 pull.values)
    skull = (radius >= SKULL_INNER) & (radius <= SKULL_OUTER) & ~mask
    volume = brain + SKULL_INTENSITY * skull
    if spec.sigma > 0:
        volume = volume + rng.normal(0., spec.sigma, spec.shape)

    logger.debug('Subject %d: label=%d det=%.3f', index, label,
                 transform.determinant)
    return PhantomSubject(index, volume, mask.astype(np.uint8), int(label),
                          transform, seg, parc)


def balanced_labels(spec):
    """Per-split alternating labels, shuffled with the phantom seed."""
    rng = derive_rng(spec.seed)
    labels = []
    for size in split_sizes(spec.subjects):
        labels.extend(rng.permutation(np.arange(size) % 2).tolist())
    return labels


def make_dataset(spec):
    """Template plus every subject, generated in parallel by index."""
    template = make_template(spec)
    labels = balanced_labels(spec)

    def build(index):
        return make_subject(template, spec, index, labels[index])

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        subjects = list(pool.map(build, range(spec.subjects)))
    logger.info('Generated %d subjects at %d^3 (splits %s)', len(subjects),
                spec.dims, split_sizes(len(subjects)))
    return PhantomDataset(spec, template, subjects)


def save_dataset(dataset, directory):
    truth = os.path.join(directory, TRUTH_DIR)
    os.makedirs(truth, exist_ok=True)
    template = dataset.template

    dataset.spec.save(os.path.join(directory, MANIFEST_FILE))
    write_volume(os.path.join(directory, TEMPLATE_FILE), template.image)
    write_volume(os.path.join(directory, TEMPLATE_SEG_FILE),
                 harden(template.seg))
    write_volume(os.path.join(directory, TEMPLATE_PARC_FILE),
                 harden(template.parc, offset=1))

    for subject in dataset.subjects:
        index = subject.index
        write_volume(os.path.join(directory, 's{0}.nii'.format(index)),
                     subject.image)
        write_volume(os.path.join(directory, 'm{0}.nii'.format(index)),
                     subject.mask)
        write_transform(os.path.join(truth, 'a{0}.txt'.format(index)),
                        subject.transform)
        write_volume(os.path.join(truth, 'seg{0}.nii'.format(index)),
                     subject.seg)
        write_volume(os.path.join(truth, 'parc{0}.nii'.format(index)),
                     subject.parc)
    write_labels(os.path.join(directory, LABELS_FILE),
                 [subject.label for subject in dataset.subjects])
    logger.info('Dataset written to %s', directory)


def load_template(directory, classes, rois):
    """Template from a dataset directory (or any directory holding one)."""
    paths = [os.path.join(directory, name) for name in
             (TEMPLATE_FILE, TEMPLATE_SEG_FILE, TEMPLATE_PARC_FILE)]
    for path in paths:
        if not os.path.isfile(path):
            raise FormatError('Missing template file {0}'.format(path))
    image = read_volume(paths[0])
    seg = one_hot(read_volume(paths[1]).astype(np.int64), classes)
    parc = one_hot(read_volume(paths[2]).astype(np.int64), rois, offset=1)
    return PhantomTemplate(image, seg, parc)


def load_dataset(directory):
    manifest = os.path.join(directory, MANIFEST_FILE)
    if not os.path.isfile(manifest):
        raise FormatError('Missing dataset manifest {0}'.format(manifest))
    spec = PhantomSpec.load(manifest)
    template = load_template(directory, spec.classes, spec.rois)
    labels = read_labels(os.path.join(directory, LABELS_FILE))
    if len(labels) != spec.subjects:
        raise FormatError('{0} labels for {1} subjects'.format(
            len(labels), spec.subjects))

    truth = os.path.join(directory, TRUTH_DIR)
    subjects = []
    for index, label in enumerate(labels):
        subjects.append(PhantomSubject(
            index,
            read_volume(os.path.join(directory, 's{0}.nii'.format(index))),
            read_volume(os.path.join(directory, 'm{0}.nii'.format(index)))
            .astype(np.uint8),
            label,
            read_transform(os.path.join(truth, 'a{0}.txt'.format(index))),
            read_volume(os.path.join(truth, 'seg{0}.nii'.format(index)))
            .astype(np.int64),
            read_volume(os.path.join(truth, 'parc{0}.nii'.format(index)))
            .astype(np.int64)))
    return PhantomDataset(spec, template, subjects)
