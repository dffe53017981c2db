""" Cube geometry and the in-memory amplitude volume. """
from dataclasses import dataclass, field

import numpy as np

from ..errors import GeometryError, HorizonSegError

DEFAULT_SAMPLE_INTERVAL_MS = 2.0


@dataclass(frozen=True)
class CubeGeometry:
    """ Shape of a post-stack cube in (inline, crossline, depth) order.

    Depth is always counted in samples; `sample_interval_ms` converts to time.
    `inline_origin` / `crossline_origin` are the labels of the first trace along each axis.
    """
    n_inlines: int
    n_crosslines: int
    n_samples: int
    sample_interval_ms: float = DEFAULT_SAMPLE_INTERVAL_MS
    inline_origin: int = 0
    crossline_origin: int = 0

    def __post_init__(self):
        for name in ('n_inlines', 'n_crosslines', 'n_samples'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f'{name} must be a positive integer, got {value}')
            object.__setattr__(self, name, int(value))
        if not self.sample_interval_ms > 0:
            raise ValueError(f'sample_interval_ms must be positive, got {self.sample_interval_ms}')
        object.__setattr__(self, 'sample_interval_ms', float(self.sample_interval_ms))
        object.__setattr__(self, 'inline_origin', int(self.inline_origin))
        object.__setattr__(self, 'crossline_origin', int(self.crossline_origin))

    @property
    def shape(self):
        return (self.n_inlines, self.n_crosslines, self.n_samples)

    @property
    def spatial_shape(self):
        return (self.n_inlines, self.n_crosslines)


@dataclass(frozen=True, eq=False)
class Cube:
    """ Amplitude volume with a dead-trace map.

    Values are stored as float32 in (inline, crossline, depth) order. Dead traces are
    zero-filled and excluded from `stats`. Arrays are made read-only on construction.
    """
    geometry: CubeGeometry
    values: np.ndarray
    trace_presence: np.ndarray = None
    stats: tuple = field(init=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float32)
        if values.shape != self.geometry.shape:
            raise ValueError(f'values shape {values.shape} does not match geometry {self.geometry.shape}')
        if self.trace_presence is None:
            presence = np.ones(self.geometry.spatial_shape, dtype=bool)
        else:
            presence = np.array(self.trace_presence, dtype=bool)
            if presence.shape != self.geometry.spatial_shape:
                raise ValueError('trace_presence shape does not match geometry')
        values[~presence] = 0.0
        values.flags.writeable = False
        presence.flags.writeable = False
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'trace_presence', presence)
        stats = _masked_minmax(values, presence) if presence.any() else None
        object.__setattr__(self, 'stats', stats)

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, Cube):
            return NotImplemented
        return (self.geometry == other.geometry
                and np.array_equal(self.trace_presence, other.trace_presence)
                and self.values.tobytes() == other.values.tobytes())

    __hash__ = None

    def __repr__(self):
        return f'Cube(shape={self.shape}, dead_traces={int((~self.trace_presence).sum())})'


def _masked_minmax(values, presence):
    live = values[presence]
    return float(live.min()), float(live.max())


def value_stats(cube):
    """ Min and max over present traces only. """
    if cube.stats is None:
        raise HorizonSegError('all traces are dead; no statistics available')
    return cube.stats


def slice_section(cube, axis, index):
    """ Copy of one inline or crossline section, shaped (other spatial axis, depth). """
    if axis not in ('inline', 'crossline'):
        raise ValueError(f"axis must be 'inline' or 'crossline', got {axis!r}")
    limit = cube.geometry.n_inlines if axis == 'inline' else cube.geometry.n_crosslines
    if not 0 <= index < limit:
        raise GeometryError(f'{axis} index {index} out of range [0, {limit})')
    if axis == 'inline':
        return cube.values[index, :, :].copy()
    return cube.values[:, index, :].copy()
