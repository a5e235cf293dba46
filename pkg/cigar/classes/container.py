"""
    This file is part of cigar.


    Versioned binary container for every artifact the package writes.

    Layout (all integers little-endian):
        magic       4 bytes
        version     u32
        fields      u32
        per field:  name length u16, name (utf-8),
                    dtype length u8, dtype string (numpy, little-endian),
                    ndim u8, shape u64 * ndim,
                    raw array bytes in C order

    Scalars are stored as 0-d arrays. Field order is the order of the
    dict passed to write(), so equal inputs give byte-identical files.

"""

import logging
import struct

import numpy as np

from cigar.classes.errors import ArtifactError
from cigar.const import formats


log = logging.getLogger(__name__)


def write(path: str, magic: bytes, fields: dict) -> None:
    """ Writes the named arrays under the given magic and its current
    version. """
    with open(path, 'wb') as file:
        file.write(magic)
        file.write(struct.pack('<II', formats.VERSIONS[magic], len(fields)))

        for name, value in fields.items():
            array = np.ascontiguousarray(value)
            array = array.astype(array.dtype.newbyteorder('<'), copy=False)
            encoded_name = name.encode('utf-8')
            encoded_dtype = array.dtype.str.encode('ascii')
            file.write(struct.pack('<H', len(encoded_name)))
            file.write(encoded_name)
            file.write(struct.pack('<B', len(encoded_dtype)))
            file.write(encoded_dtype)
            file.write(struct.pack('<B', array.ndim))
            file.write(struct.pack(f'<{array.ndim}Q', *array.shape))
            file.write(array.tobytes(order='C'))

    log.debug('Wrote %s artifact with %d fields to %s', magic.decode(), len(fields), path)


def read(path: str, magic: bytes) -> dict:
    """ Reads an artifact back into a dict of arrays, checking the magic
    and version first. """
    try:
        with open(path, 'rb') as file:
            data = file.read()
    except FileNotFoundError as e:
        raise ArtifactError(f'{path} does not exist') from e

    if len(data) < 12:
        raise ArtifactError(f'{path} is truncated')

    if data[:4] != magic:
        raise ArtifactError(f'{path} is not a {magic.decode()} artifact (found {data[:4]!r})')

    version, count = struct.unpack_from('<II', data, 4)

    if version != formats.VERSIONS[magic]:
        raise ArtifactError(f'{path} has {magic.decode()} version {version}, expected {formats.VERSIONS[magic]}')

    fields = {}
    offset = 12

    try:
        for _ in range(count):
            name_length, = struct.unpack_from('<H', data, offset)
            offset += 2
            if offset + name_length > len(data):
                raise struct.error('name')
            name = data[offset:offset+name_length].decode('utf-8')
            offset += name_length
            dtype_length, = struct.unpack_from('<B', data, offset)
            offset += 1
            if offset + dtype_length > len(data):
                raise struct.error('dtype')
            dtype = np.dtype(data[offset:offset+dtype_length].decode('ascii'))
            offset += dtype_length
            ndim, = struct.unpack_from('<B', data, offset)
            offset += 1
            shape = struct.unpack_from(f'<{ndim}Q', data, offset)
            offset += 8 * ndim
            size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize

            if offset + size > len(data):
                raise ArtifactError(f'{path} is truncated in field {name}')

            fields[name] = np.frombuffer(data, dtype=dtype, count=size // dtype.itemsize if dtype.itemsize else 0, offset=offset).reshape(shape).copy()
            offset += size
    except (struct.error, TypeError, UnicodeDecodeError) as e:
        raise ArtifactError(f'{path} is truncated') from e

    log.debug('Read %s artifact with %d fields from %s', magic.decode(), count, path)
    return fields


def scalar(fields: dict, name: str) -> int | float:
    """ Unwraps a 0-d field back into a Python number. """
    return fields[name].item()
