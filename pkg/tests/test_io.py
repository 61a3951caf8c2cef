# -*- coding: utf-8 -*-
import struct

import numpy as np
import pytest

from config import TrainConfig
from core.checkpoint import MAGIC, decode, encode, load_checkpoint, \
    save_checkpoint
from core.geometry import AffineTransform
from core.nifti import read_volume, write_volume
from core.records import (MetricTable, parse_transform, read_graph, read_log,
                          read_rows, read_transform, write_graph, write_log,
                          write_rows, write_transform)
from errors import (BadMagicError, CheckpointError, FormatError, HeaderError,
                    TransformFormatError, TruncatedFileError,
                    UnsupportedDatatypeError)
from gradcheck import check_config
from nets import ModelParams
from pipeline import LogEntry


def patched(path, offset, data):
    raw = bytearray(path.read_bytes())
    raw[offset:offset + len(data)] = data
    path.write_bytes(bytes(raw))


@pytest.fixture
def volume_file(tmp_path, rng):
    path = tmp_path / 'volume.nii'
    write_volume(str(path), rng.normal(size=(4, 5, 6)))
    return path


def test_volume_round_trip(tmp_path, rng):
    volume = rng.normal(size=(4, 5, 6))
    path = str(tmp_path / 'float.nii')
    write_volume(path, volume)
    back = read_volume(path)
    assert back.dtype == np.float64
    assert np.array_equal(back, volume.astype(np.float32))

    labels = rng.integers(0, 9, (3, 4, 5))
    write_volume(path, labels)
    assert np.array_equal(read_volume(path), labels)

    write_volume(path, volume, dtype='<f8')
    assert np.array_equal(read_volume(path), volume)


def test_channel_first_volume(tmp_path, rng):
    volume = rng.uniform(size=(3, 4, 5, 6))
    path = str(tmp_path / 'channels.nii')
    write_volume(path, volume)
    back = read_volume(path)
    assert back.shape == (3, 4, 5, 6)
    assert np.array_equal(back, volume.astype(np.float32))


def test_voxel_layout_is_x_fastest(tmp_path):
    volume = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    path = tmp_path / 'order.nii'
    write_volume(str(path), volume)
    raw = path.read_bytes()[352:]
    assert raw[:3] == bytes([volume[0, 0, 0], volume[1, 0, 0],
                             volume[0, 1, 0]])


def test_write_rejects_bad_volumes(tmp_path):
    with pytest.raises(ValueError):
        write_volume(str(tmp_path / 'flat.nii'), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        write_volume(str(tmp_path / 'big.nii'), np.full((2, 2, 2), 300))


def test_header_errors(volume_file):
    patched(volume_file, 0, struct.pack('<i', 347))
    with pytest.raises(HeaderError):
        read_volume(str(volume_file))


def test_bad_magic(volume_file):
    patched(volume_file, 344, b'ni1\x00')
    with pytest.raises(BadMagicError):
        read_volume(str(volume_file))


def test_unsupported_datatype(volume_file):
    patched(volume_file, 70, struct.pack('<h', 4))
    with pytest.raises(UnsupportedDatatypeError):
        read_volume(str(volume_file))


def test_truncated_and_trailing_data(volume_file):
    raw = volume_file.read_bytes()
    volume_file.write_bytes(raw[:-4])
    with pytest.raises(TruncatedFileError):
        read_volume(str(volume_file))
    volume_file.write_bytes(raw[:200])
    with pytest.raises(TruncatedFileError):
        read_volume(str(volume_file))
    volume_file.write_bytes(raw + b'\x00')
    with pytest.raises(HeaderError):
        read_volume(str(volume_file))


def test_format_errors_share_a_base(volume_file):
    patched(volume_file, 344, b'xxxx')
    with pytest.raises(FormatError):
        read_volume(str(volume_file))


def test_transform_text(tmp_path, rng):
    path = str(tmp_path / 'A.txt')
    write_transform(path, AffineTransform.identity())
    with open(path) as transform_file:
        assert transform_file.read() == '1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n'

    matrix = np.eye(4)
    matrix[:3] = rng.normal(size=(3, 4))
    matrix[:3, :3] += 2. * np.eye(3)
    write_transform(path, AffineTransform(matrix))
    assert np.array_equal(read_transform(path).values, matrix)


@pytest.mark.parametrize('text', ['1 0 0 0 0 1 0 0 0 0 1 0 0 0 0',
                                  '1 0 0 0 0 1 0 0 0 0 1 0 0 0 x 1',
                                  '1 0 0 0 0 1 0 0 0 0 1 0 0 0 1 1'])
def test_malformed_transform_rejected(text):
    with pytest.raises(TransformFormatError):
        parse_transform(text)


def test_rows_and_graph(tmp_path, rng):
    path = str(tmp_path / 'rows.csv')
    write_rows(path, ('a', 'b'), [(1, 0.5), ('x', 2)])
    assert read_rows(path, ('a', 'b')) == [['1', '0.5'], ['x', '2']]
    with pytest.raises(FormatError):
        read_rows(path, ('a', 'c'))

    features = rng.normal(size=(5, 3))
    connectivity = features @ features.T
    write_graph(path, connectivity)
    assert np.allclose(read_graph(path), connectivity, rtol=1e-11)


def test_metric_table_round_trip(tmp_path):
    table = MetricTable()
    table.add(3, {'ext_dice': 0.9, 'reg_cc': 0.5})
    table.add(7, {'ext_dice': 0.7, 'reg_cc': 0.25})
    table.set_split('acc', 0.5)
    summary = table.summary()
    assert summary['ext_dice'] == pytest.approx((0.8, 0.1))
    assert summary['acc'] == (0.5, 0.)
    assert 'auc' not in summary

    path = str(tmp_path / 'metrics.csv')
    table.save(path)
    loaded = MetricTable.load(path)
    assert len(loaded) == 2
    assert np.array_equal(loaded.column('reg_cc'), [0.5, 0.25])
    reloaded = loaded.summary()
    assert list(reloaded) == list(summary)
    for metric, (mean, std) in summary.items():
        assert reloaded[metric] == pytest.approx((mean, std))


def test_training_log_round_trip(tmp_path):
    entries = [LogEntry(1, 1, 2.5, 0.7, 0.6, -0.5, 1.2, 0.5, float('nan')),
               LogEntry(2, 2, 1.5, 0.6, 0.5, -0.7, 1.1, 0.75, 1.)]
    path = str(tmp_path / 'log.csv')
    write_log(path, entries)
    rows = read_log(path)
    assert [row['epoch'] for row in rows] == [1., 2.]
    assert rows[1]['loss_sim'] == -0.7
    assert np.isnan(rows[0]['val_auc'])


@pytest.fixture(scope='module')
def trained_pair():
    config = check_config().replace(seed=3)
    return ModelParams.build(config), config


def test_checkpoint_round_trip(tmp_path, trained_pair):
    params, config = trained_pair
    path = str(tmp_path / 'model.ckpt')
    save_checkpoint(path, params, config)
    loaded, loaded_config = load_checkpoint(path)
    assert loaded_config == config
    for name, values in params.snapshot().items():
        assert np.array_equal(loaded.snapshot()[name], values)

    again = str(tmp_path / 'again.ckpt')
    save_checkpoint(again, loaded, loaded_config)
    with open(path, 'rb') as first, open(again, 'rb') as second:
        assert first.read() == second.read()


def first_dim_offset(buffer):
    length, = struct.unpack_from('<I', buffer, len(MAGIC) + 4)
    offset = len(MAGIC) + 8 + length + 4
    name_length, = struct.unpack_from('<H', buffer, offset)
    return offset + 2 + name_length + 1


def test_checkpoint_corruption_rejected(trained_pair):
    params, config = trained_pair
    buffer = encode(params, config)

    tampered = bytearray(buffer)
    offset = first_dim_offset(buffer)
    dim, = struct.unpack_from('<I', buffer, offset)
    struct.pack_into('<I', tampered, offset, dim + 1)
    with pytest.raises(CheckpointError, match='shape'):
        decode(bytes(tampered))

    wrong_version = buffer[:8] + struct.pack('<I', 2) + buffer[12:]
    with pytest.raises(CheckpointError, match='version'):
        decode(wrong_version)
    with pytest.raises(CheckpointError, match='trailing'):
        decode(buffer + b'\x00')
    with pytest.raises(CheckpointError, match='Truncated'):
        decode(buffer[:-8])
    with pytest.raises(CheckpointError, match='magic'):
        decode(b'NOTACKPT' + buffer[8:])


def test_checkpoint_rejects_other_architecture(trained_pair):
    params, config = trained_pair
    buffer = encode(params, config)
    other = encode(ModelParams.build(TrainConfig(dims=16, classes=3, rois=4,
                                                 reg_channels=(2, 2))),
                   config)
    with pytest.raises(CheckpointError):
        decode(other)
    assert decode(buffer)[1] == config
