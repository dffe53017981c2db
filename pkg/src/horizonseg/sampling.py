""" Crop geometry, train splits, min-max scaling and batch assembly. """
import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, HorizonSegError

CHANNEL_AXES = ('inline', 'crossline')


@dataclass(frozen=True)
class CropWindow:
    """ Axis-aligned sub-volume: `origin` and `shape` are (inline, crossline, depth) triples. """
    origin: tuple
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, 'origin', tuple(int(v) for v in self.origin))
        object.__setattr__(self, 'shape', tuple(int(v) for v in self.shape))
        if len(self.origin) != 3 or len(self.shape) != 3:
            raise ValueError('origin and shape must be triples')
        if min(self.shape) < 1:
            raise ValueError(f'crop extents must be positive, got {self.shape}')

    @property
    def slices(self):
        return tuple(slice(o, o + n) for o, n in zip(self.origin, self.shape))

    def inside(self, geometry):
        return all(o >= 0 and o + n <= limit for o, n, limit in zip(self.origin, self.shape, geometry.shape))


@dataclass(frozen=True)
class ShapePolicy:
    """ How crop shapes are chosen.

    'fixed' always yields `fixed_shape`. 'random' draws each spatial extent uniformly from
    [ceil(low * extent), floor(high * extent)] of the cube, rounded down to `multiple_of`;
    the depth extent is always `depth_extent`.
    """
    kind: str = 'fixed'
    fixed_shape: tuple = (1, 128, 128)
    fraction_range: tuple = (0.1, 0.5)
    depth_extent: int = 128
    multiple_of: int = 1

    def __post_init__(self):
        if self.kind not in ('fixed', 'random'):
            raise ValueError(f"shape policy kind must be 'fixed' or 'random', got {self.kind!r}")
        low, high = self.fraction_range
        if not 0 < low <= high <= 1:
            raise ValueError(f'fraction_range must satisfy 0 < low <= high <= 1, got {self.fraction_range}')
        object.__setattr__(self, 'fixed_shape', tuple(int(v) for v in self.fixed_shape))


@dataclass
class CropBatch:
    """ Network-ready batch: `values` and `masks` are (batch, channels, spatial, depth). """
    values: np.ndarray
    masks: np.ndarray
    channel_axis: str
    windows: list


def make_inline_split(geometry, stride):
    """ Inline indices kept for training: every `stride`-th inline, starting at 0. """
    if stride < 1:
        raise ValueError(f'stride must be >= 1, got {stride}')
    return list(range(0, geometry.n_inlines, stride))


def _extent_bounds(extent, policy):
    low, high = policy.fraction_range
    lo, hi = math.ceil(low * extent - 1e-9), math.floor(high * extent + 1e-9)
    m = policy.multiple_of
    lo = max(m, -(-lo // m) * m)
    hi = hi // m * m
    if hi < lo:
        raise HorizonSegError(f'random policy {policy.fraction_range} infeasible for extent {extent}')
    return lo, hi


def sample_crop_shape(geometry, policy, rng, thin_inline=False):
    """ Draw a crop shape according to `policy`. `thin_inline` forces N_x = 1 (train-split mode). """
    if policy.kind == 'fixed':
        shape = policy.fixed_shape
    else:
        extents = []
        for extent in geometry.spatial_shape:
            lo, hi = _extent_bounds(extent, policy)
            m = policy.multiple_of
            extents.append(int(rng.integers(lo // m, hi // m + 1)) * m)
        shape = (extents[0], extents[1], policy.depth_extent)
    if thin_inline:
        shape = (1,) + tuple(shape[1:])
    if any(n > limit for n, limit in zip(shape, geometry.shape)):
        raise HorizonSegError(f'crop shape {tuple(shape)} does not fit cube {geometry.shape}')
    return tuple(shape)


def sample_crop_window(geometry, policy, allowed_inlines=None, rng=None, shape=None):
    """ Random window inside the cube.

    When `allowed_inlines` is given the window is one inline thick and its inline is drawn from
    that list. Pass `shape` to reuse a shape drawn once per batch.
    """
    rng = rng if rng is not None else np.random.default_rng()
    split = allowed_inlines is not None
    if shape is None:
        shape = sample_crop_shape(geometry, policy, rng, thin_inline=split)
    elif any(n > limit for n, limit in zip(shape, geometry.shape)):
        raise HorizonSegError(f'crop shape {tuple(shape)} does not fit cube {geometry.shape}')
    if split:
        if shape[0] != 1:
            raise HorizonSegError('train-split sampling requires crops one inline thick')
        allowed = [i for i in allowed_inlines if 0 <= i < geometry.n_inlines]
        if not allowed:
            raise HorizonSegError('no allowed inlines inside the cube')
        inline = allowed[int(rng.integers(len(allowed)))]
    else:
        inline = int(rng.integers(geometry.n_inlines - shape[0] + 1))
    crossline = int(rng.integers(geometry.n_crosslines - shape[1] + 1))
    depth = int(rng.integers(geometry.n_samples - shape[2] + 1))
    return CropWindow((inline, crossline, depth), shape)


def cut_crop(cube, window):
    if not window.inside(cube.geometry):
        raise GeometryError(f'window {window.origin}+{window.shape} outside cube {cube.geometry.shape}')
    return cube.values[window.slices].copy()


def scale_minmax(crop, stats=None):
    """ Map values to [0, 1]. Uses the crop's own range unless `stats` (min, max) is given.

    A degenerate range maps to all zeros.
    """
    crop = np.asarray(crop)
    lo, hi = (crop.min(), crop.max()) if stats is None else stats
    if hi <= lo:
        return np.zeros(crop.shape, dtype=np.float32)
    out = (crop.astype(np.float64) - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def to_channels(volume, channel_axis):
    """ (N_x, N_y, N_t) -> (channels, spatial, depth) with `channel_axis` moved first. """
    if channel_axis == 'inline':
        return volume
    if channel_axis == 'crossline':
        return volume.transpose(1, 0, 2)
    raise ValueError(f'channel_axis must be one of {CHANNEL_AXES}, got {channel_axis!r}')


def from_channels(image, channel_axis):
    """ Inverse of :func:`to_channels`. """
    return to_channels(image, channel_axis)


def assemble_batch(crops, channel_axis='inline', windows=None):
    """ Stack (values, mask) crop pairs into a :class:`CropBatch`. """
    crops = list(crops)
    if not crops:
        raise ValueError('cannot assemble an empty batch')
    shape = np.shape(crops[0][0])
    for values, mask in crops:
        if np.shape(values) != shape or np.shape(mask) != shape:
            raise HorizonSegError(f'heterogeneous crop shapes in batch: {np.shape(values)} vs {shape}')
    values = np.stack([to_channels(np.asarray(v, dtype=np.float32), channel_axis) for v, _ in crops])
    masks = np.stack([to_channels(np.asarray(m, dtype=np.float32), channel_axis) for _, m in crops])
    return CropBatch(values, masks, channel_axis, list(windows) if windows is not None else [])
