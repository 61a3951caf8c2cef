# -*- coding: utf-8 -*-

"""
Checkpoint container: every ModelParams tensor plus the TrainConfig that
built them.

    magic     8 bytes  b'NGRAPHCK'
    version   uint32
    config    uint32 length + UTF-8 flat key=value text
    count     uint32
    tensors   count x (uint16 name length, name, uint8 rank,
                       rank x uint32 dims, float64 data)

All integers and floats are little-endian.
"""

import logging
import struct

import numpy as np

from config import TrainConfig
from errors import CheckpointError, ConfigError
from nets import ModelParams

logger = logging.getLogger(__name__)

MAGIC = b'NGRAPHCK'
VERSION = 1


def encode(params, config):
    chunks = [MAGIC, struct.pack('<I', VERSION)]
    blob = config.to_text().encode('utf-8')
    chunks.append(struct.pack('<I', len(blob)))
    chunks.append(blob)

    named = params.named_tensors()
    chunks.append(struct.pack('<I', len(named)))
    for name, tensor in named.items():
        raw_name = name.encode('utf-8')
        chunks.append(struct.pack('<H', len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack('<B', tensor.ndim))
        chunks.append(struct.pack('<{0}I'.format(tensor.ndim), *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor.data, dtype='<f8').tobytes())
    return b''.join(chunks)


def save_checkpoint(file_path, params, config):
    with open(file_path, 'wb') as ckpt_file:
        ckpt_file.write(encode(params, config))
    logger.info('Checkpoint written to %s', file_path)


class Reader(object):
    """Bounds-checked cursor over the checkpoint bytes."""

    def __init__(self, buffer):
        self.buffer = buffer
        self.pos = 0

    def take(self, size, what):
        if self.pos + size > len(self.buffer):
            raise CheckpointError('Truncated checkpoint while reading {0}'
                                  .format(what))
        chunk = self.buffer[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buffer):
    """Rebuild (ModelParams, TrainConfig) from checkpoint bytes."""
    reader = Reader(buffer)
    if reader.take(len(MAGIC), 'magic') != MAGIC:
        raise CheckpointError('Not a checkpoint (bad magic)')
    version, = reader.unpack('<I', 'version')
    if version != VERSION:
        raise CheckpointError('Checkpoint version {0} unsupported (expected '
                              '{1})'.format(version, VERSION))

    length, = reader.unpack('<I', 'config length')
    try:
        config = TrainConfig.from_text(
            reader.take(length, 'config').decode('utf-8'))
    except (UnicodeDecodeError, ConfigError) as exc:
        raise CheckpointError('Bad config blob: {0}'.format(exc))

    params = ModelParams.build(config)
    named = params.named_tensors()
    count, = reader.unpack('<I', 'tensor count')
    if count != len(named):
        raise CheckpointError('Checkpoint holds {0} tensors, model has {1}'
                              .format(count, len(named)))

    seen = set()
    for _ in range(count):
        size, = reader.unpack('<H', 'name length')
        name = reader.take(size, 'tensor name').decode('utf-8', 'replace')
        if name not in named or name in seen:
            raise CheckpointError('Unexpected tensor {0!r}'.format(name))
        seen.add(name)
        rank, = reader.unpack('<B', name)
        shape = reader.unpack('<{0}I'.format(rank), name)
        tensor = named[name]
        if tuple(shape) != tensor.shape:
            raise CheckpointError('Tensor {0!r}: shape {1} does not match '
                                  'model shape {2}'.format(name, shape,
                                                           tensor.shape))
        raw = reader.take(8 * tensor.size, name)
        tensor.data[...] = np.frombuffer(raw, dtype='<f8').reshape(shape)

    if reader.pos != len(buffer):
        raise CheckpointError('{0} trailing bytes after last tensor'.format(
            len(buffer) - reader.pos))
    return params, config


def load_checkpoint(file_path):
    with open(file_path, 'rb') as ckpt_file:
        params, config = decode(ckpt_file.read())
    logger.info('Checkpoint loaded from %s', file_path)
    return params, config
