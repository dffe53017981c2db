""" Layered-earth synthetic cubes with known horizons, for tests and desk-scale experiments. """
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import HorizonSegError
from ..horizons import Horizon, HorizonSet
from .cube import Cube, CubeGeometry

MIN_SEPARATION = 3.0


def ricker(t, peak_hz):
    """ Zero-phase Ricker wavelet evaluated at times `t` (seconds). """
    arg = (np.pi * peak_hz * np.asarray(t, dtype=np.float64)) ** 2
    return (1.0 - 2.0 * arg) * np.exp(-arg)


@dataclass(frozen=True)
class SyntheticSpec:
    """ Recipe for :func:`synthesize_cube`.

    `n_layers` layers are separated by `n_layers - 1` interfaces, evenly spaced in depth unless
    `interface_depths` is given. `relief` (samples) scales the smooth undulation of interfaces,
    whose lateral correlation length is `surface_smoothness` traces. Each fault shifts every
    interface by up to `fault_throw` samples on one side of a random straight line.
    """
    geometry: CubeGeometry
    n_layers: int = 4
    surface_smoothness: float = 8.0
    fault_count: int = 0
    wavelet_peak_hz: float = 25.0
    noise_std: float = 0.0
    seed: int = 0
    relief: float = 4.0
    fault_throw: float = 6.0
    interface_depths: tuple = None

    def __post_init__(self):
        if self.n_layers < 2:
            raise ValueError('n_layers must be at least 2')
        if self.surface_smoothness <= 0 or self.wavelet_peak_hz <= 0:
            raise ValueError('surface_smoothness and wavelet_peak_hz must be positive')
        if self.noise_std < 0 or self.fault_count < 0 or self.relief < 0 or self.fault_throw < 0:
            raise ValueError('noise_std, fault_count, relief and fault_throw must be nonnegative')
        if self.interface_depths is not None and len(self.interface_depths) != self.n_layers - 1:
            raise ValueError('interface_depths must list n_layers - 1 depths')
        base = np.asarray(self.base_depths())
        if base.min() <= 0 or base.max() >= self.geometry.n_samples - 1 or \
                (np.diff(base) < MIN_SEPARATION).any():
            raise ValueError(f'interfaces {base.tolist()} do not fit the depth range with '
                             f'{MIN_SEPARATION:g}-sample separation')

    def base_depths(self):
        if self.interface_depths is not None:
            return [float(d) for d in self.interface_depths]
        step = self.geometry.n_samples / self.n_layers
        return [step * (k + 1) for k in range(self.n_layers - 1)]


def _smooth_field(rng, shape, sigma):
    field = gaussian_filter(rng.standard_normal(shape), sigma=sigma, mode='reflect', truncate=3.0)
    peak = np.abs(field).max()
    return field / peak if peak > 0 else field


def interface_surfaces(spec, rng):
    """ Depth maps (samples) of every interface, shape (n_interfaces, n_inlines, n_crosslines). """
    g = spec.geometry
    shape = g.spatial_shape
    shared = _smooth_field(rng, shape, spec.surface_smoothness)
    surfaces = []
    for depth in spec.base_depths():
        own = _smooth_field(rng, shape, spec.surface_smoothness)
        surfaces.append(depth + spec.relief * (shared + 0.3 * own))
    surfaces = np.array(surfaces)

    ii, xx = np.meshgrid(np.arange(g.n_inlines), np.arange(g.n_crosslines), indexing='ij')
    for _ in range(spec.fault_count):
        pi, px = rng.uniform(0, g.n_inlines), rng.uniform(0, g.n_crosslines)
        angle = rng.uniform(0, np.pi)
        throw = rng.uniform(0.5, 1.0) * spec.fault_throw * rng.choice([-1.0, 1.0])
        side = (ii - pi) * np.cos(angle) + (xx - px) * np.sin(angle) > 0
        surfaces[:, side] += throw
    return surfaces


def synthesize_cube(spec):
    """ Generate a cube and its ground-truth horizons, deterministic in `spec.seed`.

    Per-layer impedances give interface reflectivities; each trace is the sum of Ricker wavelets
    centred on the (fractional) interface depths, scaled by reflectivity, plus Gaussian noise.
    """
    g = spec.geometry
    rng = np.random.default_rng(spec.seed)
    surfaces = interface_surfaces(spec, rng)
    if surfaces.min() <= 0 or surfaces.max() >= g.n_samples - 1:
        raise HorizonSegError('perturbed interfaces leave the depth range')
    if (np.diff(surfaces, axis=0) < MIN_SEPARATION).any():
        raise HorizonSegError(f'perturbed interfaces closer than {MIN_SEPARATION:g} samples')

    reflectivity = _reflectivity(rng, len(surfaces))

    dt = g.sample_interval_ms / 1000.0
    t = np.arange(g.n_samples, dtype=np.float64)
    values = np.zeros(g.shape, dtype=np.float64)
    for r, surface in zip(reflectivity, surfaces):
        values += r * ricker((t - surface[..., None]) * dt, spec.wavelet_peak_hz)
    if spec.noise_std > 0:
        values += spec.noise_std * rng.standard_normal(g.shape)

    horizons = HorizonSet([Horizon(g, s, name=f'horizon_{k + 1}') for k, s in enumerate(surfaces)])
    return Cube(g, values.astype(np.float32)), horizons


def _reflectivity(rng, n_interfaces):
    steps = rng.uniform(0.15, 0.4, n_interfaces) * rng.choice([-1.0, 1.0], n_interfaces)
    impedance = np.cumprod(np.concatenate([[1.0], 1.0 + steps]))
    return np.diff(impedance) / (impedance[1:] + impedance[:-1])


def reflectivity_of(spec):
    """ Interface reflectivities drawn by :func:`synthesize_cube` for `spec` (replays the generator). """
    rng = np.random.default_rng(spec.seed)
    surfaces = interface_surfaces(spec, rng)
    return _reflectivity(rng, len(surfaces))
