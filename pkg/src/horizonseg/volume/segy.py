""" Reader and fixture writer for a fixed-trace-length SEG-Y rev-1 subset.

Supported sample formats: 1 (4-byte IBM float) and 5 (4-byte IEEE float), both big-endian.
Byte offsets in this module are 1-based, matching the SEG-Y documentation.
"""
import struct

import numpy as np

from ..errors import FormatError
from .cube import DEFAULT_SAMPLE_INTERVAL_MS, Cube, CubeGeometry

TEXT_HEADER_BYTES = 3200
BINARY_HEADER_BYTES = 400
TRACE_HEADER_BYTES = 240

INLINE_BYTE = 189
CROSSLINE_BYTE = 193

# binary header fields (1-based)
_BIN_INTERVAL = 3217
_BIN_NSAMPLES = 3221
_BIN_FORMAT = 3225
_BIN_REVISION = 3501
_BIN_FIXED_LENGTH = 3503
_BIN_N_EXTENDED = 3505
# trace header fields, relative to trace start (1-based)
_TR_SEQUENCE = 1
_TR_NSAMPLES = 115
_TR_INTERVAL = 117

IBM_FLOAT = 1
IEEE_FLOAT = 5
_FORMATS = {IBM_FLOAT: 'IBM float', IEEE_FLOAT: 'IEEE float'}


def _u16(buf, byte):
    return struct.unpack_from('>H', buf, byte - 1)[0]


def _i32(buf, byte):
    return struct.unpack_from('>i', buf, byte - 1)[0]


def ibm_to_ieee(words):
    """ Decode big-endian IBM System/360 single-precision words (given as uint32) to float32. """
    words = np.asarray(words, dtype=np.uint32)
    sign = np.where(words >> 31, -1.0, 1.0)
    exponent = ((words >> 24) & 0x7F).astype(np.int64)
    mantissa = (words & 0x00FFFFFF).astype(np.float64)
    # value = mantissa / 2**24 * 16**(exponent - 64), exact in float64
    return (sign * np.ldexp(mantissa, 4 * (exponent - 64) - 24)).astype(np.float32)


def ieee_to_ibm(values):
    """ Encode floats as IBM words (uint32), rounding the hex-normalized mantissa to nearest. """
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros(values.shape, dtype=np.uint32)
    nonzero = values != 0
    if not nonzero.any():
        return out
    v = values[nonzero]
    sign = (v < 0).astype(np.uint32)
    mag = np.abs(v)
    _, exp2 = np.frexp(mag)  # mag = m * 2**exp2, m in [0.5, 1)
    exp16 = -((-exp2) // 4)  # ceil(exp2 / 4)
    mantissa = np.rint(np.ldexp(mag, 24 - 4 * exp16)).astype(np.int64)
    carry = mantissa >= (1 << 24)
    mantissa[carry] >>= 4
    exp16[carry] += 1
    biased = exp16 + 64
    if (biased > 127).any() or (biased < 0).any():
        raise FormatError('value outside IBM float range')
    out[nonzero] = (sign << 31) | (biased.astype(np.uint32) << 24) | mantissa.astype(np.uint32)
    return out


def write_segy(path, traces, sample_interval_ms=DEFAULT_SAMPLE_INTERVAL_MS, sample_format=IEEE_FLOAT,
               inline_byte=INLINE_BYTE, crossline_byte=CROSSLINE_BYTE):
    """ Write `traces`, an iterable of (inline label, crossline label, samples), to a SEG-Y file.

    Intended for building fixtures; trace lengths are written as given, so inconsistent
    files can be produced deliberately.
    """
    if sample_format not in _FORMATS:
        raise FormatError(f'unknown sample-format code {sample_format}')
    traces = [(int(il), int(xl), np.asarray(s, dtype=np.float32)) for il, xl, s in traces]
    n_samples = len(traces[0][2]) if traces else 0

    text = 'C01 horizonseg fixture'.ljust(80).encode('cp500') * 40
    binary = bytearray(BINARY_HEADER_BYTES)
    base = TEXT_HEADER_BYTES + 1
    struct.pack_into('>H', binary, _BIN_INTERVAL - base, int(round(sample_interval_ms * 1000)))
    struct.pack_into('>H', binary, _BIN_NSAMPLES - base, n_samples)
    struct.pack_into('>H', binary, _BIN_FORMAT - base, sample_format)
    struct.pack_into('>H', binary, _BIN_REVISION - base, 0x0100)
    struct.pack_into('>H', binary, _BIN_FIXED_LENGTH - base, 1)

    chunks = [text, bytes(binary)]
    for number, (il, xl, samples) in enumerate(traces, start=1):
        header = bytearray(TRACE_HEADER_BYTES)
        struct.pack_into('>i', header, _TR_SEQUENCE - 1, number)
        struct.pack_into('>H', header, _TR_NSAMPLES - 1, len(samples))
        struct.pack_into('>H', header, _TR_INTERVAL - 1, int(round(sample_interval_ms * 1000)))
        struct.pack_into('>i', header, inline_byte - 1, il)
        struct.pack_into('>i', header, crossline_byte - 1, xl)
        chunks.append(bytes(header))
        if sample_format == IEEE_FLOAT:
            chunks.append(samples.astype('>f4').tobytes())
        else:
            chunks.append(ieee_to_ibm(samples).astype('>u4').tobytes())
    with open(path, 'wb') as f:
        f.write(b''.join(chunks))


def write_segy_cube(path, cube, sample_format=IEEE_FLOAT, **kwargs):
    """ Write every present trace of `cube`. """
    g = cube.geometry
    traces = [(g.inline_origin + i, g.crossline_origin + x, cube.values[i, x])
              for i, x in zip(*np.nonzero(cube.trace_presence))]
    write_segy(path, traces, g.sample_interval_ms, sample_format, **kwargs)


def ingest_segy(path, inline_byte=INLINE_BYTE, crossline_byte=CROSSLINE_BYTE):
    """ Read a fixed-length SEG-Y file into a :class:`Cube`.

    Geometry spans the observed min/max inline and crossline labels; positions without a trace
    are marked dead and zero-filled.
    """
    with open(path, 'rb') as f:
        data = f.read()
    head = TEXT_HEADER_BYTES + BINARY_HEADER_BYTES
    if len(data) < head:
        raise FormatError(f'{path}: truncated file header ({len(data)} bytes)')

    n_samples = _u16(data, _BIN_NSAMPLES)
    sample_format = _u16(data, _BIN_FORMAT)
    interval_us = _u16(data, _BIN_INTERVAL)
    n_extended = _u16(data, _BIN_N_EXTENDED) if _u16(data, _BIN_REVISION) >= 0x0100 else 0
    if sample_format not in _FORMATS:
        raise FormatError(f'{path}: unknown sample-format code {sample_format}')

    position = head + n_extended * TEXT_HEADER_BYTES
    labels, payloads = [], []
    while position < len(data):
        header = data[position:position + TRACE_HEADER_BYTES]
        if len(header) < TRACE_HEADER_BYTES:
            raise FormatError(f'{path}: truncated trace header at byte {position}')
        n_this = _u16(header, _TR_NSAMPLES) or n_samples
        if n_samples == 0:
            n_samples = n_this
        if n_this != n_samples:
            raise FormatError(f'{path}: inconsistent trace length: trace {len(labels) + 1} has '
                              f'{n_this} samples, expected {n_samples}')
        start = position + TRACE_HEADER_BYTES
        stop = start + 4 * n_samples
        if stop > len(data):
            raise FormatError(f'{path}: truncated trace data in trace {len(labels) + 1}')
        labels.append((_i32(header, inline_byte), _i32(header, crossline_byte)))
        payloads.append(data[start:stop])
        position = stop
    if not labels:
        raise FormatError(f'{path}: file contains zero traces')
    if n_samples == 0:
        raise FormatError(f'{path}: traces have zero samples')

    raw = np.frombuffer(b''.join(payloads), dtype='>u4').reshape(len(labels), n_samples)
    samples = ibm_to_ieee(raw) if sample_format == IBM_FLOAT else raw.view('>f4').astype(np.float32)

    labels = np.array(labels, dtype=np.int64)
    il0, xl0 = labels.min(axis=0)
    il1, xl1 = labels.max(axis=0)
    interval_ms = interval_us / 1000 if interval_us else DEFAULT_SAMPLE_INTERVAL_MS
    geometry = CubeGeometry(int(il1 - il0 + 1), int(xl1 - xl0 + 1), n_samples, interval_ms, int(il0), int(xl0))

    values = np.zeros(geometry.shape, dtype=np.float32)
    presence = np.zeros(geometry.spatial_shape, dtype=bool)
    ii, xx = labels[:, 0] - il0, labels[:, 1] - xl0
    if len(set(zip(ii.tolist(), xx.tolist()))) != len(labels):
        raise FormatError(f'{path}: duplicate (inline, crossline) trace labels')
    values[ii, xx] = samples
    presence[ii, xx] = True
    return Cube(geometry, values, presence)
