# -*- coding: utf-8 -*-

"""
Single-file NIfTI-1 (.nii) volumes, little-endian, uncompressed.

Only the header fields needed to place the voxel block are interpreted;
orientation (qform/sform) fields are left zero on write and ignored on
read. A 3D volume (W, H, D) is stored as is; a channel-first 4D volume
(C, W, H, D) is stored with the channel as the fourth NIfTI axis. Voxel
data on disk is x-fastest.
"""

import logging

import numpy as np

from errors import (BadMagicError, HeaderError, TruncatedFileError,
                    UnsupportedDatatypeError)

logger = logging.getLogger(__name__)

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b'n+1\x00'

# (name, format, offset) of the interpreted header fields
HEADER_FIELDS = [
    ('sizeof_hdr', '<i4', 0),
    ('dim', ('<i2', (8,)), 40),
    ('datatype', '<i2', 70),
    ('bitpix', '<i2', 72),
    ('pixdim', ('<f4', (8,)), 76),
    ('vox_offset', '<f4', 108),
    ('magic', 'S4', 344),
]

HEADER_DTYPE = np.dtype({
    'names': [name for name, _, _ in HEADER_FIELDS],
    'formats': [fmt for _, fmt, _ in HEADER_FIELDS],
    'offsets': [offset for _, _, offset in HEADER_FIELDS],
    'itemsize': HEADER_SIZE,
})

# datatype code -> (numpy dtype, bitpix)
DATATYPES = {
    2: (np.dtype('<u1'), 8),
    16: (np.dtype('<f4'), 32),
    64: (np.dtype('<f8'), 64),
}
CODES = {dtype: code for code, (dtype, _) in DATATYPES.items()}


def make_header(shape, dtype):
    """Header for a (W, H, D) or (W, H, D, C) array of 'dtype'."""
    header = np.zeros((), dtype=HEADER_DTYPE)
    code = CODES[np.dtype(dtype)]
    header['sizeof_hdr'] = HEADER_SIZE
    header['dim'][0] = len(shape)
    header['dim'][1:len(shape) + 1] = shape
    header['dim'][len(shape) + 1:] = 1
    header['pixdim'][:] = 1.
    header['datatype'] = code
    header['bitpix'] = DATATYPES[code][1]
    header['vox_offset'] = VOX_OFFSET
    header['magic'] = MAGIC
    return header


def parse_header(buffer):
    """Validate the first HEADER_SIZE bytes; return (dims, dtype, offset)."""
    if len(buffer) < HEADER_SIZE:
        raise TruncatedFileError('NIfTI header needs {0} bytes, got {1}'
                                 .format(HEADER_SIZE, len(buffer)))
    header = np.frombuffer(buffer[:HEADER_SIZE], dtype=HEADER_DTYPE)[0]

    if header['sizeof_hdr'] != HEADER_SIZE:
        raise HeaderError('sizeof_hdr is {0}, expected {1}'.format(
            int(header['sizeof_hdr']), HEADER_SIZE))
    if bytes(buffer[344:348]) != MAGIC:
        raise BadMagicError('Bad NIfTI magic {0!r}'.format(
            bytes(buffer[344:348])))

    rank = int(header['dim'][0])
    if rank not in (3, 4):
        raise HeaderError('Unsupported dimensionality dim[0]={0}'.format(
            rank))
    dims = tuple(int(dim) for dim in header['dim'][1:rank + 1])
    if min(dims) < 1:
        raise HeaderError('Non-positive dims {0}'.format(dims))

    code = int(header['datatype'])
    if code not in DATATYPES:
        raise UnsupportedDatatypeError('Unsupported datatype {0}'.format(
            code))
    dtype, bitpix = DATATYPES[code]
    if header['bitpix'] != bitpix:
        raise HeaderError('bitpix {0} inconsistent with datatype {1}'.format(
            int(header['bitpix']), code))

    offset = float(header['vox_offset'])
    if offset < VOX_OFFSET or not offset.is_integer():
        raise HeaderError('Invalid vox_offset {0}'.format(offset))
    return dims, dtype, int(offset)


def read_volume(file_path):
    """
    Read a volume as float64. 4D files come back channel-first.
    """
    with open(file_path, 'rb') as nii_file:
        buffer = nii_file.read()

    dims, dtype, offset = parse_header(buffer)
    size = int(np.prod(dims)) * dtype.itemsize
    available = len(buffer) - offset
    if available < size:
        raise TruncatedFileError('{0}: voxel data needs {1} bytes, got {2}'
                                 .format(file_path, size, max(available, 0)))
    if available > size:
        raise HeaderError('{0}: {1} trailing bytes after voxel data'.format(
            file_path, available - size))

    data = np.frombuffer(buffer, dtype=dtype, count=int(np.prod(dims)),
                         offset=offset).reshape(dims, order='F')
    if len(dims) == 4:
        data = np.moveaxis(data, -1, 0)
    logger.debug('Read %s: dims=%s dtype=%s', file_path, dims, dtype)
    return np.ascontiguousarray(data, dtype=np.float64)


def volume_dtype(volume):
    """uint8 for boolean/integer label data, float32 otherwise."""
    volume = np.asarray(volume)
    if volume.dtype == bool or np.issubdtype(volume.dtype, np.integer):
        return np.dtype('<u1')
    return np.dtype('<f4')


def write_volume(file_path, volume, dtype=None):
    """
    Write a (W, H, D) or channel-first (C, W, H, D) array. The stored type
    follows volume_dtype() unless 'dtype' is given.
    """
    volume = np.asarray(volume)
    if volume.ndim not in (3, 4):
        raise ValueError('Volumes must be 3D or 4D, got {0}'.format(
            volume.shape))
    dtype = np.dtype(dtype) if dtype is not None else volume_dtype(volume)
    if dtype == np.dtype('<u1') and (volume.min() < 0 or volume.max() > 255):
        raise ValueError('Label values out of uint8 range')

    data = np.moveaxis(volume, 0, -1) if volume.ndim == 4 else volume
    header = make_header(data.shape, dtype)

    with open(file_path, 'wb') as nii_file:
        nii_file.write(header.tobytes())
        nii_file.write(b'\x00' * (VOX_OFFSET - HEADER_SIZE))
        nii_file.write(data.astype(dtype).tobytes(order='F'))
