# -*- coding: utf-8 -*-
import numpy as np
import pytest

from gradcheck import check_config
from phantom import PhantomSpec, make_dataset, save_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def small_spec():
    return PhantomSpec(dims=16, classes=3, rois=4, subjects=10)


@pytest.fixture(scope='session')
def small_dataset(small_spec):
    return make_dataset(small_spec)


@pytest.fixture(scope='session')
def small_config():
    return check_config().replace(epochs=2, batch_size=4)


@pytest.fixture(scope='session')
def dataset_dir(small_dataset, tmp_path_factory):
    directory = tmp_path_factory.mktemp('phantom')
    save_dataset(small_dataset, str(directory))
    return directory
