""" Native blocked cube format.

Layout (all little-endian)::

    b'HFC1' | uint32 version
    | int64 n_inlines, n_crosslines, n_samples, inline_origin, crossline_origin
    | float64 sample_interval_ms
    | presence bitmap, inline-major, packed LSB-first
    | for each 64x64 tile of traces (inline-major tile order):
          float32 values in depth-major order (depth, inline, crossline)
          uint32 CRC32 of the tile bytes
"""
import struct
import zlib

import numpy as np

from ..errors import ChecksumError, FormatError
from .cube import Cube, CubeGeometry

MAGIC = b'HFC1'
VERSION = 1
BLOCK = 64

_HEADER = struct.Struct('<4sI5qd')


def _tiles(geometry):
    for i0 in range(0, geometry.n_inlines, BLOCK):
        for x0 in range(0, geometry.n_crosslines, BLOCK):
            yield (slice(i0, min(i0 + BLOCK, geometry.n_inlines)),
                   slice(x0, min(x0 + BLOCK, geometry.n_crosslines)))


def encode_native(cube):
    g = cube.geometry
    parts = [_HEADER.pack(MAGIC, VERSION, g.n_inlines, g.n_crosslines, g.n_samples,
                          g.inline_origin, g.crossline_origin, g.sample_interval_ms)]
    parts.append(np.packbits(cube.trace_presence.ravel(), bitorder='little').tobytes())
    for si, sx in _tiles(g):
        tile = np.ascontiguousarray(cube.values[si, sx, :].transpose(2, 0, 1), dtype='<f4').tobytes()
        parts.append(tile)
        parts.append(struct.pack('<I', zlib.crc32(tile)))
    return b''.join(parts)


def decode_native(data):
    if len(data) < _HEADER.size:
        raise FormatError('file too short for native cube header')
    magic, version, n_il, n_xl, n_s, il0, xl0, interval = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f'bad magic {magic!r}, expected {MAGIC!r}')
    if version != VERSION:
        raise FormatError(f'unsupported native format version {version} (reader supports {VERSION})')
    geometry = CubeGeometry(n_il, n_xl, n_s, interval, il0, xl0)

    offset = _HEADER.size
    n_bits = n_il * n_xl
    n_bytes = (n_bits + 7) // 8
    bitmap = np.frombuffer(data, dtype=np.uint8, count=n_bytes, offset=offset) \
        if len(data) >= offset + n_bytes else None
    if bitmap is None:
        raise FormatError('truncated presence bitmap')
    presence = np.unpackbits(bitmap, bitorder='little')[:n_bits].astype(bool).reshape(n_il, n_xl)
    offset += n_bytes

    values = np.empty(geometry.shape, dtype=np.float32)
    for index, (si, sx) in enumerate(_tiles(geometry)):
        n_tile = (si.stop - si.start) * (sx.stop - sx.start) * n_s
        end = offset + 4 * n_tile
        if end + 4 > len(data):
            raise FormatError(f'truncated data in block {index}')
        tile = data[offset:end]
        (crc,) = struct.unpack_from('<I', data, end)
        if zlib.crc32(tile) != crc:
            raise ChecksumError(f'checksum mismatch in block {index}', block=index)
        shaped = np.frombuffer(tile, dtype='<f4').reshape(n_s, si.stop - si.start, sx.stop - sx.start)
        values[si, sx, :] = shaped.transpose(1, 2, 0)
        offset = end + 4
    if offset != len(data):
        raise FormatError(f'{len(data) - offset} trailing bytes after last block')
    return Cube(geometry, values, presence)


def save_native(cube, path):
    """ Write `cube` in the native blocked format. I/O errors propagate with the path attached. """
    payload = encode_native(cube)
    with open(path, 'wb') as f:
        f.write(payload)


def load_native(path):
    with open(path, 'rb') as f:
        data = f.read()
    return decode_native(data)
