""" Seeded training-time distortions of (image, mask) pairs.

Images and masks are (channels, height, width) arrays; every geometric transform is applied
to all channels of both with one sampled coordinate field.
"""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates


@dataclass(frozen=True)
class AugmentConfig:
    additive_std: float = 0.03
    multiplicative_range: tuple = (0.9, 1.1)
    rotate_max_deg: float = 15.0
    shift_max_frac: float = 0.1
    scale_range: tuple = (0.85, 1.15)
    perspective_jitter_frac: float = 0.05
    elastic_alpha: float = 40.0
    elastic_sigma: float = 6.0
    cutout_count: int = 1
    cutout_frac: float = 0.1
    p_noise: float = 0.5
    p_affine: float = 0.5
    p_perspective: float = 0.3
    p_elastic: float = 0.3
    p_cutout: float = 0.3

    def __post_init__(self):
        for name in ('p_noise', 'p_affine', 'p_perspective', 'p_elastic', 'p_cutout'):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f'{name} must lie in [0, 1]')
        values = [self.additive_std, *self.multiplicative_range, self.rotate_max_deg, self.shift_max_frac,
                  *self.scale_range, self.perspective_jitter_frac, self.elastic_alpha, self.elastic_sigma]
        if not np.all(np.isfinite(values)):
            raise ValueError('augmentation bounds must be finite')
        if min(self.additive_std, self.perspective_jitter_frac, self.elastic_alpha, self.elastic_sigma) < 0:
            raise ValueError('augmentation magnitudes must be nonnegative')
        if self.cutout_count < 0 or not 0 < self.cutout_frac < 1:
            raise ValueError('cutout_count must be >= 0 and cutout_frac in (0, 1)')

    @classmethod
    def disabled(cls):
        return cls(p_noise=0, p_affine=0, p_perspective=0, p_elastic=0, p_cutout=0)


def apply_noise(image, cfg, rng):
    """ image * m + a with m ~ U(multiplicative_range) and a ~ N(0, additive_std), per element. """
    lo, hi = cfg.multiplicative_range
    m = rng.uniform(lo, hi, image.shape)
    a = rng.normal(0.0, cfg.additive_std, image.shape)
    return (image * m + a).astype(image.dtype)


@dataclass
class GeometricParams:
    """ One sampled coordinate transform. Angles in degrees, shift and corner offsets in pixels. """
    angle_deg: float = 0.0
    scale: float = 1.0
    shift: tuple = (0.0, 0.0)
    corners: np.ndarray = None
    elastic: np.ndarray = None

    def is_identity(self):
        return (self.angle_deg == 0 and self.scale == 1 and tuple(self.shift) == (0, 0)
                and (self.corners is None or not np.any(self.corners))
                and (self.elastic is None or not np.any(self.elastic)))


def sample_geometric(cfg, rng, shape):
    """ Draw affine, perspective and elastic parameters for an image of spatial `shape`, each gated. """
    h, w = shape
    params = GeometricParams()
    if rng.random() < cfg.p_affine:
        params.angle_deg = rng.uniform(-cfg.rotate_max_deg, cfg.rotate_max_deg)
        params.scale = rng.uniform(*cfg.scale_range)
        params.shift = tuple(rng.uniform(-cfg.shift_max_frac, cfg.shift_max_frac, 2) * (h, w))
    if rng.random() < cfg.p_perspective:
        jitter = cfg.perspective_jitter_frac * np.array([h, w])
        params.corners = rng.uniform(-1, 1, (4, 2)) * jitter
    if rng.random() < cfg.p_elastic and cfg.elastic_alpha > 0:
        noise = rng.uniform(-1, 1, (2, h, w))
        smooth = np.stack([gaussian_filter(n, cfg.elastic_sigma, mode='constant', truncate=3.0) for n in noise])
        params.elastic = cfg.elastic_alpha * smooth
    return params


def _homography(src, dst):
    """ 3x3 matrix H with dst ~ H @ src for four point pairs. """
    rows, rhs = [], []
    for (y, x), (v, u) in zip(src, dst):
        rows.append([y, x, 1, 0, 0, 0, -v * y, -v * x])
        rows.append([0, 0, 0, y, x, 1, -u * y, -u * x])
        rhs.extend([v, u])
    coeffs = np.linalg.solve(np.array(rows, dtype=np.float64), np.array(rhs, dtype=np.float64))
    return np.append(coeffs, 1.0).reshape(3, 3)


def source_coordinates(params, shape):
    """ For every output pixel, the (row, col) it samples from. Shape (2, h, w). """
    h, w = shape
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing='ij')
    if params.elastic is not None:
        rows = rows + params.elastic[0]
        cols = cols + params.elastic[1]
    if params.corners is not None and np.any(params.corners):
        box = np.array([[0, 0], [0, w - 1], [h - 1, 0], [h - 1, w - 1]], dtype=np.float64)
        hom = _homography(box, box + params.corners)
        denom = hom[2, 0] * rows + hom[2, 1] * cols + hom[2, 2]
        rows, cols = ((hom[0, 0] * rows + hom[0, 1] * cols + hom[0, 2]) / denom,
                      (hom[1, 0] * rows + hom[1, 1] * cols + hom[1, 2]) / denom)
    cy, cx = (h - 1) / 2, (w - 1) / 2
    theta = np.deg2rad(params.angle_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    dy, dx = rows - cy - params.shift[0], cols - cx - params.shift[1]
    rows = (cos * dy - sin * dx) / params.scale + cy
    cols = (sin * dy + cos * dx) / params.scale + cx
    return np.stack([rows, cols])


def warp(image, mask, params):
    """ Resample image bilinearly and mask by nearest neighbour; outside samples become 0. """
    if image.shape != mask.shape:
        raise ValueError(f'image shape {image.shape} and mask shape {mask.shape} differ')
    if params.is_identity():
        return image.copy(), mask.copy()
    coords = source_coordinates(params, image.shape[1:])
    out_image = np.stack([map_coordinates(c, coords, order=1, mode='constant', cval=0.0) for c in image])
    out_mask = np.stack([map_coordinates(m.astype(np.float64), coords, order=0, mode='constant', cval=0.0)
                         for m in mask])
    return out_image.astype(image.dtype), (out_mask > 0.5).astype(mask.dtype)


def apply_geometric(image, mask, cfg, rng):
    if image.shape != mask.shape:
        raise ValueError(f'image shape {image.shape} and mask shape {mask.shape} differ')
    return warp(image, mask, sample_geometric(cfg, rng, image.shape[1:]))


def cutout_size(shape, frac):
    h, w = shape
    side = np.sqrt(frac)
    return max(1, int(round(side * h))), max(1, int(round(side * w)))


def apply_cutout(image, cfg, rng):
    """ Fill `cutout_count` rectangles of about `cutout_frac` of the area with the image mean. """
    if cfg.cutout_count == 0:
        return image.copy()
    h, w = image.shape[1:]
    ch, cw = cutout_size((h, w), cfg.cutout_frac)
    fill = image.mean(dtype=np.float64)
    out = image.copy()
    for _ in range(cfg.cutout_count):
        top = int(rng.integers(h - ch + 1))
        left = int(rng.integers(w - cw + 1))
        out[:, top:top + ch, left:left + cw] = fill
    return out


def compose(image, mask, cfg, rng):
    """ noise -> geometric -> cutout, each gated by its probability. """
    if rng.random() < cfg.p_noise:
        image = apply_noise(image, cfg, rng)
    image, mask = apply_geometric(image, mask, cfg, rng)
    if rng.random() < cfg.p_cutout:
        image = apply_cutout(image, cfg, rng)
    return image, mask
