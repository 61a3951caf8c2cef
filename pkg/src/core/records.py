# -*- coding: utf-8 -*-

"""
Text records: affine transforms and the CSV tables written by the
pipeline (metrics, training logs, graphs, predictions, labels).
"""

import csv
import logging
from collections import OrderedDict

import numpy as np

from constants import CSV_DIGITS
from core.geometry import BOTTOM_ROW, AffineTransform
from errors import DegenerateInputError, FormatError, TransformFormatError

logger = logging.getLogger(__name__)

# Columns of the evaluation table, in report order
METRICS = ('ext_dice', 'ext_jaccard', 'reg_mi', 'reg_cc', 'seg_dice',
           'seg_jaccard', 'parc_dice', 'parc_jaccard', 'acc', 'auc')
# Split-level metrics (no per-subject value)
SPLIT_METRICS = ('acc', 'auc')
SUMMARY = 'all'

LOG_COLUMNS = ('stage', 'epoch', 'loss_total', 'loss_cls', 'loss_ext',
               'loss_sim', 'loss_seg', 'val_acc', 'val_auc')


def format_number(value):
    """Decimal text with CSV_DIGITS significant digits."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return '{0:.{1}g}'.format(float(value), CSV_DIGITS)


def write_transform(file_path, transform):
    """16 values, row-major, 17 significant digits."""
    values = np.asarray(getattr(transform, 'values', transform)).ravel()
    text = ' '.join('{0:.17g}'.format(value) for value in values)
    with open(file_path, 'wt', newline='\n') as transform_file:
        transform_file.write(text + '\n')


def parse_transform(text):
    try:
        values = [float(item) for item in text.split()]
    except ValueError as exc:
        raise TransformFormatError('Non-numeric transform value: {0}'.format(
            exc))
    if len(values) != 16:
        raise TransformFormatError('Transform needs 16 values, got {0}'
                                   .format(len(values)))
    matrix = np.array(values).reshape(4, 4)
    if not np.array_equal(matrix[3], BOTTOM_ROW):
        raise TransformFormatError('Bad bottom row {0}'.format(matrix[3]))
    return AffineTransform(matrix)


def read_transform(file_path):
    with open(file_path, 'rt') as transform_file:
        return parse_transform(transform_file.read())


def write_rows(file_path, header, rows):
    """Write a CSV table; numbers are formatted by format_number()."""
    with open(file_path, 'wt', newline='') as csv_file:
        writer = csv.writer(csv_file, lineterminator='\n')
        if header:
            writer.writerow(header)
        for row in rows:
            writer.writerow([item if isinstance(item, str) else
                             format_number(item) for item in row])


def read_rows(file_path, header=None):
    """
    Read a CSV table. With 'header' the first row must match it exactly
    and is dropped.
    """
    with open(file_path, 'rt', newline='') as csv_file:
        rows = list(csv.reader(csv_file))
    if header is not None:
        if not rows or tuple(rows[0]) != tuple(header):
            raise FormatError('{0}: expected header {1}'.format(
                file_path, ','.join(header)))
        rows = rows[1:]
    return rows


class MetricTable(object):

    """
    Per-subject evaluation metrics plus the split summary. Long-form CSV:
    one (subject, metric, value, std) row per entry; summary rows use the
    subject name 'all' and carry the standard deviation across subjects.
    """

    HEADER = ('subject', 'metric', 'value', 'std')

    def __init__(self):
        self.rows = OrderedDict()
        self.split_values = OrderedDict()

    def add(self, subject, values):
        self.rows[int(subject)] = OrderedDict(
            (metric, float(values[metric])) for metric in METRICS
            if metric in values)

    def set_split(self, metric, value):
        self.split_values[metric] = float(value)

    def __len__(self):
        return len(self.rows)

    def column(self, metric):
        return np.array([row[metric] for row in self.rows.values()
                         if metric in row])

    def summary(self):
        """metric -> (mean, std) over subjects; split metrics have std 0."""
        if not self.rows:
            raise DegenerateInputError('Empty metric table')
        result = OrderedDict()
        for metric in METRICS:
            if metric in self.split_values:
                result[metric] = (self.split_values[metric], 0.)
                continue
            column = self.column(metric)
            if column.size:
                result[metric] = (float(column.mean()), float(column.std()))
        return result

    def to_rows(self):
        for subject, values in self.rows.items():
            for metric, value in values.items():
                yield (str(subject), metric, value, 0.)
        for metric, (mean, std) in self.summary().items():
            yield (SUMMARY, metric, mean, std)

    def save(self, file_path):
        write_rows(file_path, self.HEADER, self.to_rows())

    @classmethod
    def load(cls, file_path):
        table = cls()
        per_subject = OrderedDict()
        try:
            for subject, metric, value, _ in read_rows(file_path, cls.HEADER):
                if subject == SUMMARY:
                    if metric in SPLIT_METRICS:
                        table.set_split(metric, float(value))
                    continue
                per_subject.setdefault(int(subject), {})[metric] = float(
                    value)
        except ValueError as exc:
            raise FormatError('{0}: malformed metric row ({1})'.format(
                file_path, exc))
        for subject, values in per_subject.items():
            table.add(subject, values)
        return table


def write_log(file_path, entries):
    """Training log; 'entries' are LogEntry-like objects."""
    write_rows(file_path, LOG_COLUMNS,
               ([getattr(entry, column) for column in LOG_COLUMNS]
                for entry in entries))


def read_log(file_path):
    rows = read_rows(file_path, LOG_COLUMNS)
    return [OrderedDict(zip(LOG_COLUMNS, (float(item) for item in row)))
            for row in rows]


def write_graph(file_path, connectivity):
    """K x K connectivity matrix, no header."""
    write_rows(file_path, None, np.asarray(connectivity).tolist())


def read_graph(file_path):
    return np.array([[float(item) for item in row]
                     for row in read_rows(file_path)])


def write_prediction(file_path, logits):
    logits = np.asarray(logits)
    header = ['logit_{0}'.format(index) for index in range(logits.size)]
    write_rows(file_path, header + ['pred'],
               [list(logits.tolist()) + [int(np.argmax(logits))]])


def write_labels(file_path, labels):
    write_rows(file_path, ('index', 'y'), enumerate(labels))


def read_labels(file_path):
    try:
        rows = read_rows(file_path, ('index', 'y'))
        return [int(label) for _, label in rows]
    except ValueError as exc:
        raise FormatError('{0}: malformed label row ({1})'.format(
            file_path, exc))
