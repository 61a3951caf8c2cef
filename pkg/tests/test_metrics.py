# -*- coding: utf-8 -*-
import numpy as np
import pytest

from errors import DegenerateInputError, ShapeError
from metrics import (accuracy, auc_roc, correlation, dice, entropy, jaccard,
                     mutual_information)


def pair_auc(scores, labels):
    wins = 0.
    positives = [s for s, y in zip(scores, labels) if y == 1]
    negatives = [s for s, y in zip(scores, labels) if y == 0]
    for pos in positives:
        for neg in negatives:
            wins += 1. if pos > neg else 0.5 if pos == neg else 0.
    return wins / (len(positives) * len(negatives))


def test_overlap_conventions():
    a = np.array([1, 1, 0, 0], dtype=bool)
    assert dice(a, a) == 1.
    assert dice(a, ~a) == 0.
    assert jaccard(a, ~a) == 0.
    empty = np.zeros(4, dtype=bool)
    assert dice(empty, empty) == 1.
    assert jaccard(empty, empty) == 1.

    b = np.array([1, 0, 1, 0], dtype=bool)
    assert dice(a, b) == pytest.approx(0.5)
    assert jaccard(a, b) == pytest.approx(1. / 3.)

    with pytest.raises(ShapeError):
        dice(a, np.ones(5))


def test_multiclass_overlap_ignores_background():
    a = np.array([0, 1, 1, 2, 2, 0])
    b = np.array([0, 1, 2, 2, 2, 1])
    expected = np.mean([dice(a == 1, b == 1), dice(a == 2, b == 2)])
    assert dice(a, b, labels=3) == pytest.approx(expected)
    assert dice(np.zeros(6), np.zeros(6), labels=3) == 1.


def test_dice_dominates_jaccard(rng):
    for _ in range(10):
        a = rng.random(50) > 0.5
        b = rng.random(50) > 0.3
        assert dice(a, b) >= jaccard(a, b)


def test_mutual_information(rng):
    x = rng.normal(size=(8, 8, 8))
    y = x + rng.normal(size=(8, 8, 8))
    assert mutual_information(x, x) == pytest.approx(entropy(x), abs=1e-12)
    assert mutual_information(x, y) == pytest.approx(
        mutual_information(y, x), abs=1e-12)
    assert mutual_information(x, np.ones_like(x)) == 0.
    assert mutual_information(x, y) >= 0.

    with pytest.raises(ShapeError):
        mutual_information(x, np.ones((8, 8)))


def test_independent_noise_has_little_information():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(24, 24, 24))
    y = rng.uniform(size=(24, 24, 24))
    assert mutual_information(x, y) <= 0.1


def test_correlation(rng):
    x = rng.normal(size=200)
    y = rng.normal(size=200)
    assert correlation(x, x) == pytest.approx(1.)
    assert correlation(x, -x) == pytest.approx(-1.)
    assert correlation(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1],
                                              abs=1e-12)
    with pytest.raises(DegenerateInputError):
        correlation(x, np.full(200, 3.))


def test_accuracy():
    probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]])
    assert accuracy(probs, [0, 1, 1]) == pytest.approx(2. / 3.)
    assert accuracy([1, 0], [1, 0]) == 1.
    with pytest.raises(ShapeError):
        accuracy([1, 0], [1])


def test_auc_examples():
    labels = [0, 0, 1, 1]
    assert auc_roc([0.1, 0.2, 0.8, 0.9], labels) == 1.
    assert auc_roc([0.5] * 4, labels) == 0.5
    with pytest.raises(DegenerateInputError):
        auc_roc([0.1, 0.2], [1, 1])


def test_auc_matches_pair_counting(rng):
    scores = [0.3, 0.7, 0.3, 0.9, 0.1, 0.7]
    labels = [1, 0, 0, 1, 0, 1]
    assert auc_roc(scores, labels) == pytest.approx(pair_auc(scores, labels))

    scores = np.round(rng.uniform(size=40), 1)
    labels = rng.integers(0, 2, 40)
    assert auc_roc(scores, labels) == pytest.approx(pair_auc(scores, labels))


def test_auc_invariant_to_monotone_transform(rng):
    scores = rng.normal(size=30)
    labels = np.arange(30) % 2
    assert auc_roc(np.exp(scores), labels) == pytest.approx(
        auc_roc(scores, labels))
