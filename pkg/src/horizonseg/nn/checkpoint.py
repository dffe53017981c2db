""" Model checkpoint file.

Layout: b'HFW1' | uint32 manifest length | UTF-8 JSON manifest {"meta": ..., "layers": [{name, kind,
shape}, ...]} | float32 little-endian parameter blocks in manifest order | uint32 CRC32 of everything
before it.
"""
import json
import struct
import zlib

import numpy as np

from ..errors import ChecksumError, FormatError

MAGIC = b'HFW1'


def encode_checkpoint(params, meta=None, kinds=None):
    kinds = kinds or {}
    layers = [{'name': name, 'kind': kinds.get(name, name.rsplit('.', 1)[-1]), 'shape': list(array.shape)}
              for name, array in params.items()]
    manifest = json.dumps({'meta': meta or {}, 'layers': layers}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack('<I', len(manifest)), manifest]
    parts.extend(np.ascontiguousarray(array, dtype='<f4').tobytes() for array in params.values())
    body = b''.join(parts)
    return body + struct.pack('<I', zlib.crc32(body))


def decode_checkpoint(data):
    """ Returns (params, meta) with params as float32 arrays keyed by layer name, in file order. """
    if data[:4] != MAGIC:
        raise FormatError(f'bad checkpoint magic {data[:4]!r}')
    if len(data) < 12:
        raise FormatError('truncated checkpoint')
    (crc,) = struct.unpack_from('<I', data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise ChecksumError('checkpoint checksum mismatch')
    (n,) = struct.unpack_from('<I', data, 4)
    manifest = json.loads(data[8:8 + n].decode())
    offset = 8 + n
    params = {}
    for layer in manifest['layers']:
        count = int(np.prod(layer['shape'], dtype=np.int64))
        block = np.frombuffer(data, dtype='<f4', count=count, offset=offset)
        params[layer['name']] = block.astype(np.float32).reshape(layer['shape'])
        offset += 4 * count
    if offset != len(data) - 4:
        raise FormatError('checkpoint size does not match its manifest')
    return params, manifest['meta']


def save_checkpoint(path, params, meta=None, kinds=None):
    with open(path, 'wb') as f:
        f.write(encode_checkpoint(params, meta, kinds))


def load_checkpoint(path):
    with open(path, 'rb') as f:
        return decode_checkpoint(f.read())
