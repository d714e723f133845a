"""This module reads and writes volumes, label maps, and displacement
fields.

Two formats are supported:

nifti1   single file NIfTI-1 (.nii), little-endian.  Only the data
         array, its datatype, and its dimensions are used; the affine
         is ignored.  Displacement fields are stored as 5D vector images
         (x, y, z, 1, 3).

raw      a binary blob (.raw) with a plain text descriptor alongside
         (the blob filename plus .txt) giving dtype, shape (D H W),
         channels, order, and endianness.  The blob is C ordered with
         shape (channels, D, H, W) so x varies fastest.

Files are written to a temporary name in the target directory and
then renamed.

Copyright 2026 nicereg developers
"""

import os
import logging
from contextlib import contextmanager
from tempfile import NamedTemporaryFile
from warnings import warn

import numpy as np
import nibabel as nib
from nibabel.filebasedimages import ImageFileError
from nibabel.spatialimages import HeaderDataError

from .errors import FormatError, UnsupportedDtypeError, ShapeError
from .volume import Volume, LabelMap
from .field import DisplacementField

__all__ = ('load_volume', 'save_volume', 'load_field', 'guess_format')

logger = logging.getLogger(__name__)

# NIfTI-1 datatype codes.
nifti_dtypes = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32,
                64: np.float64}

raw_dtypes = ('uint8', 'int16', 'int32', 'float32', 'float64')

NIFTI_HEADER_SIZE = 348


def guess_format(path):

    path = str(path)
    if path.endswith('.nii') or path.endswith('.hdr'):
        return 'nifti1'
    if path.endswith('.raw'):
        return 'raw'
    if path.endswith('.nii.gz'):
        raise FormatError('Compressed NIfTI is not supported: %s' % path)
    raise FormatError('Cannot determine format of %s, use .nii or .raw' % path)


def descriptor_path(path):

    return str(path) + '.txt'


def _storage_dtype(data):
    """The on-disk dtype for an array."""

    dtype = data.dtype
    if dtype == np.bool_:
        return np.dtype(np.uint8)
    if dtype == np.int64:
        if data.size and (data.min() < np.iinfo(np.int32).min or
                          data.max() > np.iinfo(np.int32).max):
            raise UnsupportedDtypeError('Labels do not fit in int32')
        return np.dtype(np.int32)
    if dtype.name not in raw_dtypes:
        raise UnsupportedDtypeError('Cannot store dtype %s' % dtype)
    return dtype


def _wrap(data, labels):
    """Make the domain object for a (C, D, H, W) array."""

    if data.shape[0] == 3:
        return DisplacementField(data)
    if data.shape[0] != 1:
        raise FormatError('Expecting 1 or 3 channels, got %d' % data.shape[0])
    if labels:
        return LabelMap(data[0])
    return Volume(data[0])


@contextmanager
def atomic_write(path, suffix=''):
    """Yield a temporary filename in the directory of path; it is
    renamed to path if the block completes."""

    path = str(path)
    dirname = os.path.dirname(os.path.abspath(path))
    try:
        tmp = NamedTemporaryFile(dir=dirname, suffix=suffix, delete=False)
        tmp.close()
    except OSError as e:
        raise OSError(e.errno, 'Cannot write %s: %s' % (path, e.strerror))
    try:
        yield tmp.name
        os.replace(tmp.name, path)
    except BaseException:
        if os.path.exists(tmp.name):
            os.remove(tmp.name)
        raise


def _check_nifti_header(path):

    try:
        with open(path, 'rb') as f:
            header = f.read(NIFTI_HEADER_SIZE)
    except OSError as e:
        raise OSError(e.errno, 'Cannot read %s: %s' % (path, e.strerror))

    if len(header) < NIFTI_HEADER_SIZE:
        raise FormatError('%s is too short for a NIfTI-1 header' % path)
    sizeof_hdr = np.frombuffer(header, dtype='<i4', count=1)[0]
    if sizeof_hdr != NIFTI_HEADER_SIZE:
        raise FormatError('%s has header size %d, expecting 348 little-endian'
                          % (path, sizeof_hdr))
    magic = header[344:348]
    if magic not in (b'n+1\x00', b'ni1\x00'):
        raise FormatError('%s has bad NIfTI-1 magic %r' % (path, magic))
    code = int(np.frombuffer(header, dtype='<i2', count=1, offset=70)[0])
    if code not in nifti_dtypes:
        raise UnsupportedDtypeError('%s has unsupported datatype code %d' %
                                    (path, code))
    return magic


def _load_nifti(path, labels):

    magic = _check_nifti_header(path)
    try:
        if magic == b'ni1\x00':
            image = nib.Nifti1Pair.from_filename(path)
        else:
            image = nib.Nifti1Image.from_filename(path)
    except (ImageFileError, HeaderDataError, ValueError) as e:
        raise FormatError('Cannot read %s: %s' % (path, e))

    affine = image.affine
    if affine is not None and not np.allclose(affine, np.eye(4)):
        warn('Ignoring non-identity affine in %s' % path)

    data = np.asanyarray(image.dataobj)
    if data.ndim == 3:
        data = data.transpose(2, 1, 0)[None]
    elif data.ndim == 5 and data.shape[3] == 1:
        data = data[:, :, :, 0, :].transpose(3, 2, 1, 0)
    elif data.ndim == 4 and data.shape[3] == 1:
        data = data[:, :, :, 0].transpose(2, 1, 0)[None]
    else:
        raise FormatError('%s has unsupported dimensions %s' % (path, data.shape))
    return _wrap(np.ascontiguousarray(data), labels)


def _save_nifti(data, path):

    if data.shape[0] == 3:
        array = data.transpose(3, 2, 1, 0)[:, :, :, None, :]
    else:
        array = data[0].transpose(2, 1, 0)
    image = nib.Nifti1Image(np.ascontiguousarray(array), np.eye(4))
    image.header.set_data_dtype(array.dtype)
    if data.shape[0] == 3:
        image.header.set_intent('vector')
    with atomic_write(path, suffix='.nii') as tmpname:
        nib.save(image, tmpname)


def _parse_descriptor(path):

    filename = descriptor_path(path)
    try:
        with open(filename) as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise OSError(e.errno, 'Cannot read %s: %s' % (filename, e.strerror))

    fields = {}
    for line in lines:
        line = line.strip()
        if line == '' or line.startswith('#'):
            continue
        parts = line.split()
        fields[parts[0]] = parts[1:]

    try:
        dtype = fields['dtype'][0]
        shape = tuple(int(n) for n in fields['shape'])
    except (KeyError, IndexError, ValueError):
        raise FormatError('%s needs dtype and shape lines' % filename)
    if dtype not in raw_dtypes:
        raise UnsupportedDtypeError('%s has unsupported dtype %s' % (filename, dtype))
    if len(shape) != 3:
        raise FormatError('%s shape must be D H W, got %s' % (filename, shape))
    channels = int(fields.get('channels', ['1'])[0])
    order = fields.get('order', ['x-fastest'])[0]
    if order != 'x-fastest':
        raise FormatError('%s has unsupported order %s' % (filename, order))
    endian = fields.get('endian', ['little'])[0]
    if endian not in ('little', 'big'):
        raise FormatError('%s has unknown endianness %s' % (filename, endian))
    return np.dtype(dtype).newbyteorder('<' if endian == 'little' else '>'), \
        shape, channels


def _load_raw(path, labels):

    dtype, shape, channels = _parse_descriptor(path)
    try:
        data = np.fromfile(path, dtype=dtype)
    except OSError as e:
        raise OSError(e.errno, 'Cannot read %s: %s' % (path, e.strerror))
    expected = channels * int(np.prod(shape))
    if data.size != expected:
        raise FormatError('%s has %d values, descriptor implies %d' %
                          (path, data.size, expected))
    data = data.astype(dtype.newbyteorder('=')).reshape((channels, ) + shape)
    return _wrap(data, labels)


def _save_raw(data, path):

    descriptor = '\n'.join(['dtype %s' % data.dtype.name,
                            'shape %d %d %d' % data.shape[1:],
                            'channels %d' % data.shape[0],
                            'order x-fastest',
                            'endian little']) + '\n'
    with atomic_write(path) as tmpname:
        data.astype(data.dtype.newbyteorder('<')).tofile(tmpname)
    with atomic_write(descriptor_path(path)) as tmpname:
        with open(tmpname, 'w') as f:
            f.write(descriptor)


def load_volume(path, format=None, labels=False):
    """Load a Volume, a LabelMap (if labels is True), or a
    DisplacementField (if the file has three channels)."""

    path = str(path)
    if format is None:
        format = guess_format(path)
    if not os.path.exists(path):
        raise FileNotFoundError('No such file %s' % path)

    if format == 'nifti1':
        obj = _load_nifti(path, labels)
    elif format == 'raw':
        obj = _load_raw(path, labels)
    else:
        raise FormatError('Unknown format %s' % format)
    logger.debug('Loaded %s from %s', obj, path)
    return obj


def load_field(path, format=None):

    obj = load_volume(path, format)
    if not isinstance(obj, DisplacementField):
        raise ShapeError('%s does not hold a displacement field' % path)
    return obj


def save_volume(vol, path, format=None):
    """Save a Volume, LabelMap, or DisplacementField."""

    path = str(path)
    if format is None:
        format = guess_format(path)

    data = np.asarray(vol.data)
    if isinstance(vol, DisplacementField):
        data = data.reshape((3, ) + data.shape[1:])
    else:
        data = data[None]
    data = data.astype(_storage_dtype(data), copy=False)

    if format == 'nifti1':
        _save_nifti(data, path)
    elif format == 'raw':
        _save_raw(data, path)
    else:
        raise FormatError('Unknown format %s' % format)
    logger.debug('Saved %s to %s', vol, path)
