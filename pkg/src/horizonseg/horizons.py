""" Horizon surfaces, their conversion to and from segmentation volumes, and quality metrics. """
import math
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import FormatError, GeometryError, HorizonSegError, OverlapError

NEIGHBOR_TOLERANCE = 2.0
MATCH_MAX_DISTANCE = 25.0
HEADER_SUFFIX = ': INLINE CROSSLINE DEPTH_MS'


class Horizon:
    """ Depth surface over the traces of one cube.

    `depths` is an (n_inlines, n_crosslines) array of fractional sample indices, NaN where the
    horizon is absent. Indices are zero-based cube coordinates; labels appear only in files.
    """

    def __init__(self, geometry, depths, name='horizon'):
        self.name = str(name)
        depths = np.array(depths, dtype=np.float64)
        if depths.shape != geometry.spatial_shape:
            raise ValueError(f'depth map shape {depths.shape} does not match {geometry.spatial_shape}')
        covered = ~np.isnan(depths)
        if not covered.any():
            raise HorizonSegError(f'horizon {name!r} has no points')
        live = depths[covered]
        if not np.isfinite(live).all() or live.min() < 0 or live.max() >= geometry.n_samples:
            raise GeometryError(f'horizon {name!r} has depths outside [0, {geometry.n_samples})')
        depths.flags.writeable = False
        self.geometry = geometry
        self.depths = depths

    @property
    def coverage(self):
        """ Boolean map of traces where the horizon is defined. """
        return ~np.isnan(self.depths)

    @property
    def n_traces(self):
        return int(self.coverage.sum())

    @property
    def mean_depth(self):
        return float(np.nanmean(self.depths))

    @classmethod
    def from_points(cls, geometry, inlines, crosslines, depths, name='horizon'):
        matrix = np.full(geometry.spatial_shape, np.nan)
        matrix[np.asarray(inlines), np.asarray(crosslines)] = depths
        return cls(geometry, matrix, name)

    def __eq__(self, other):
        if not isinstance(other, Horizon):
            return NotImplemented
        return (self.geometry == other.geometry and self.name == other.name
                and np.array_equal(self.depths, other.depths, equal_nan=True))

    __hash__ = None

    def __repr__(self):
        return f'Horizon({self.name!r}, traces={self.n_traces}, mean_depth={self.mean_depth:.2f})'


@dataclass
class HorizonSet:
    horizons: list = field(default_factory=list)
    source: str = 'ground-truth'

    def __post_init__(self):
        self.horizons = list(self.horizons)
        names = [h.name for h in self.horizons]
        if len(set(names)) != len(names):
            raise HorizonSegError(f'horizon names must be unique, got {names}')
        if self.source not in ('ground-truth', 'predicted'):
            raise ValueError(f'unknown horizon set source {self.source!r}')

    def __len__(self):
        return len(self.horizons)

    def __iter__(self):
        return iter(self.horizons)

    def __getitem__(self, index):
        return self.horizons[index]


@dataclass(frozen=True)
class MetricRow:
    """ Quality of one predicted horizon against its label. `None` marks an undefined metric. """
    coverage_pct: float
    mean_error_ms: float = None
    window_pct: float = None
    window_ms: float = 5.0
    name: str = ''


# ---------------------------------------------------------------- text format

def _format_ms(value):
    short = f'{value:.6g}'
    return short if float(short) == value else repr(float(value))


def load_horizon(path, geometry, name=None):
    """ Read "INLINE CROSSLINE DEPTH_MS" lines; '#' starts a comment.

    Without an explicit `name`, the one recorded in a leading "# NAME: INLINE CROSSLINE DEPTH_MS"
    comment (as written by :func:`save_horizon`) is used, falling back to the file stem.
    """
    inlines, crosslines, depths, seen = [], [], [], set()
    header_name = None
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            if number == 1 and line.startswith('#') and line.rstrip().endswith(HEADER_SUFFIX):
                header_name = line[1:].rstrip()[:-len(HEADER_SUFFIX)].strip() or None
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if len(parts) != 3:
                    raise ValueError
                il, xl, depth_ms = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise FormatError(f'{path}: malformed line {number}: {line!r}') from None
            i, x = il - geometry.inline_origin, xl - geometry.crossline_origin
            if not (0 <= i < geometry.n_inlines and 0 <= x < geometry.n_crosslines):
                raise GeometryError(f'{path}: line {number}: trace ({il}, {xl}) outside cube')
            depth = depth_ms / geometry.sample_interval_ms
            if not 0 <= depth < geometry.n_samples:
                raise GeometryError(f'{path}: line {number}: depth {depth_ms} ms outside cube')
            if (i, x) in seen:
                raise FormatError(f'{path}: line {number}: duplicate trace ({il}, {xl})')
            seen.add((i, x))
            inlines.append(i)
            crosslines.append(x)
            depths.append(depth)
    if not depths:
        raise FormatError(f'{path}: no points')
    if name is None:
        name = header_name or Path(path).stem
    return Horizon.from_points(geometry, inlines, crosslines, depths, name)


def save_horizon(horizon, path):
    g = horizon.geometry
    ii, xx = np.nonzero(horizon.coverage)  # row-major order is already sorted by (inline, crossline)
    lines = [f'{g.inline_origin + i} {g.crossline_origin + x} '
             f'{_format_ms(horizon.depths[i, x] * g.sample_interval_ms)}\n'
             for i, x in zip(ii.tolist(), xx.tolist())]
    with open(path, 'w') as f:
        f.write(f'# {horizon.name}{HEADER_SUFFIX}\n')
        f.writelines(lines)


# ---------------------------------------------------------------- masks

def _centers(depths):
    return np.floor(depths + 0.5)


def check_overlap(horizons, thickness, region=None, context=''):
    """ Raise :class:`OverlapError` if any two horizons, thickened to `thickness`, share a voxel.

    `region` optionally restricts the check to a (slice, slice) block of traces.
    """
    region = region or (slice(None), slice(None))
    for a, b in combinations(horizons, 2):
        ca, cb = _centers(a.depths[region]), _centers(b.depths[region])
        both = ~np.isnan(ca) & ~np.isnan(cb)
        if (np.abs(ca[both] - cb[both]) < thickness).any():
            raise OverlapError(a.name, b.name, context)


def rasterize_mask(horizons, window, thickness=3):
    """ Binary mask of `window` with each horizon thickened to `thickness` samples around its rounded depth.

    `window` needs `origin` and `shape` triples in (inline, crossline, depth) order. Overlapping
    horizons are an error rather than being merged.
    """
    if thickness < 1 or thickness % 2 == 0:
        raise ValueError(f'thickness must be an odd positive integer, got {thickness}')
    (i0, x0, t0), (nx, ny, nt) = window.origin, window.shape
    horizons = list(horizons)
    if horizons:
        n_il, n_xl, n_s = horizons[0].geometry.shape
        if i0 < 0 or x0 < 0 or t0 < 0 or i0 + nx > n_il or x0 + ny > n_xl or t0 + nt > n_s:
            raise GeometryError(f'window {window.origin}+{window.shape} outside cube')
    region = (slice(i0, i0 + nx), slice(x0, x0 + ny))
    check_overlap(horizons, thickness, region, context=f'window origin {tuple(window.origin)}')

    mask = np.zeros((nx, ny, nt), dtype=np.uint8)
    half = (thickness - 1) // 2
    for horizon in horizons:
        centers = _centers(horizon.depths[region])
        ii, xx = np.nonzero(~np.isnan(centers))
        base = centers[ii, xx].astype(np.int64) - t0
        for offset in range(-half, half + 1):
            zz = base + offset
            inside = (zz >= 0) & (zz < nt)
            mask[ii[inside], xx[inside], zz[inside]] = 1
    return mask


# ---------------------------------------------------------------- extraction

def find_picks(prob, threshold):
    """ Centroid depth of every maximal run with `prob >= threshold` along the last axis.

    Returns (inline, crossline, depth) arrays ordered by trace, then depth.
    """
    above = prob >= threshold
    padded = np.zeros(above.shape[:-1] + (above.shape[-1] + 2,), dtype=np.int8)
    padded[..., 1:-1] = above
    edges = np.diff(padded, axis=-1)
    si, sx, starts = np.nonzero(edges == 1)
    _, _, stops = np.nonzero(edges == -1)

    p = prob.astype(np.float64)
    z = np.arange(p.shape[-1], dtype=np.float64)
    zeros = np.zeros(p.shape[:-1] + (1,))
    mass = np.concatenate([zeros, np.cumsum(p, axis=-1)], axis=-1)
    moment = np.concatenate([zeros, np.cumsum(p * z, axis=-1)], axis=-1)
    total = mass[si, sx, stops] - mass[si, sx, starts]
    depth = (moment[si, sx, stops] - moment[si, sx, starts]) / total
    return si, sx, depth


def extract_horizons(prob, geometry, threshold=0.5, min_traces=1, tolerance=NEIGHBOR_TOLERANCE):
    """ Convert a probability volume into surfaces.

    Each trace contributes one pick per supra-threshold run (its probability-weighted centroid).
    Picks are then grown into surfaces by flood fill over 4-connected traces, joining the closest
    unassigned neighbor pick within `tolerance` samples. Surfaces covering fewer than `min_traces`
    traces are dropped; the rest are ordered by mean depth.
    """
    prob = np.asarray(prob)
    if prob.shape != geometry.shape:
        raise ValueError(f'probability volume shape {prob.shape} does not match {geometry.shape}')
    if not 0 < threshold < 1:
        raise ValueError(f'threshold must be in (0, 1), got {threshold}')
    if prob.size and (np.nanmin(prob) < 0 or np.nanmax(prob) > 1 or np.isnan(prob).any()):
        raise ValueError('probability values must lie in [0, 1]')

    si, sx, depth = find_picks(prob, threshold)
    at_trace = {}
    for k, key in enumerate(zip(si.tolist(), sx.tolist())):
        at_trace.setdefault(key, []).append(k)
    depth_list = depth.tolist()

    owner = [-1] * len(depth_list)
    surfaces = []
    for seed in range(len(depth_list)):
        if owner[seed] != -1:
            continue
        label = len(surfaces)
        owner[seed] = label
        members = {(si[seed], sx[seed]): seed}
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            i, x = int(si[p]), int(sx[p])
            for key in ((i - 1, x), (i + 1, x), (i, x - 1), (i, x + 1)):
                if key in members or key not in at_trace:
                    continue
                best, best_gap = None, None
                for q in at_trace[key]:
                    gap = abs(depth_list[q] - depth_list[p])
                    if owner[q] == -1 and gap <= tolerance and (best is None or gap < best_gap):
                        best, best_gap = q, gap
                if best is not None:
                    owner[best] = label
                    members[key] = best
                    queue.append(best)
        surfaces.append(members)

    kept = []
    for members in surfaces:
        if len(members) < min_traces:
            continue
        ids = np.fromiter(members.values(), dtype=np.int64)
        kept.append((float(depth[ids].mean()), ids))
    kept.sort(key=lambda item: item[0])
    horizons = [Horizon.from_points(geometry, si[ids], sx[ids], depth[ids], name=f'predicted_{n + 1}')
                for n, (_, ids) in enumerate(kept)]
    return HorizonSet(horizons, source='predicted')


# ---------------------------------------------------------------- metrics

def mean_distance(a, b):
    """ Mean absolute depth difference (samples) over common traces, or None without overlap. """
    common = a.coverage & b.coverage
    if not common.any():
        return None
    return float(np.abs(a.depths[common] - b.depths[common]).mean())


def match_horizons(pred, truth, max_distance=MATCH_MAX_DISTANCE):
    """ Greedy one-to-one pairing by ascending mean depth difference over common traces. """
    candidates = []
    for p, ph in enumerate(pred):
        for t, th in enumerate(truth):
            distance = mean_distance(ph, th)
            if distance is not None and distance <= max_distance:
                candidates.append((distance, p, t))
    candidates.sort()
    used_pred, used_truth, pairs = set(), set(), []
    for _, p, t in candidates:
        if p in used_pred or t in used_truth:
            continue
        used_pred.add(p)
        used_truth.add(t)
        pairs.append((p, t))
    return sorted(pairs, key=lambda pair: pair[1])


def compare_horizons(pred, truth, window_ms=5.0, interval_ms=None):
    """ Coverage of `truth` by `pred`, mean absolute error and share of common traces inside ±window_ms. """
    if pred.geometry.spatial_shape != truth.geometry.spatial_shape:
        raise ValueError('horizons belong to different geometries')
    if interval_ms is None:
        interval_ms = truth.geometry.sample_interval_ms
    common = pred.coverage & truth.coverage
    n_common = int(common.sum())
    coverage = 100.0 * n_common / truth.n_traces
    if n_common == 0:
        return MetricRow(0.0, None, None, window_ms, truth.name)
    error_ms = np.abs(pred.depths[common] - truth.depths[common]) * interval_ms
    inside = int((error_ms <= window_ms).sum())
    # correctly rounded sum: the mean does not depend on trace order
    mean_error = math.fsum(error_ms.tolist()) / n_common
    return MetricRow(coverage, mean_error, 100.0 * inside / n_common, window_ms, truth.name)

