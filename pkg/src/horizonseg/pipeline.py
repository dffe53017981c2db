""" Encoder-decoder model, the training loop and sliding-window inference over whole cubes. """
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugmentConfig, compose
from .errors import HorizonSegError, OverlapError
from .horizons import check_overlap, rasterize_mask
from .nn import AdamState, Tensor, adam_step, concat, dice_loss, lr_inverse_time, relu, sigmoid
from .nn.ops import conv2d_nhwc, transpose, upsample2x_nhwc
from .nn.checkpoint import decode_checkpoint, encode_checkpoint
from .sampling import (CHANNEL_AXES, ShapePolicy, assemble_batch, cut_crop, from_channels, make_inline_split,
                       sample_crop_shape, sample_crop_window, scale_minmax, to_channels)

PROB_FLOOR = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    depth: int = 3
    base_channels: int = 16
    input_channels: int = 1
    skip_connections: bool = True
    channel_axis: str = 'inline'
    input_shape: tuple = None

    def __post_init__(self):
        if self.depth < 1 or self.base_channels < 1 or self.input_channels < 1:
            raise ValueError('depth, base_channels and input_channels must be positive')
        if self.channel_axis not in CHANNEL_AXES:
            raise ValueError(f'channel_axis must be one of {CHANNEL_AXES}')
        if self.input_shape is not None:
            check_divisible(self.input_shape, self.depth)


def check_divisible(spatial, depth):
    factor = 2 ** depth
    if any(n % factor for n in spatial):
        raise HorizonSegError(f'input extents {tuple(spatial)} must be divisible by 2**depth = {factor}')


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    iterations: int = 1000
    base_lr: float = 1e-3
    lr_decay_rate: float = 0.002
    seed: int = 0
    shape_policy: ShapePolicy = ShapePolicy()
    augment: AugmentConfig = AugmentConfig()
    thickness: int = 3
    channel_axis: str = 'inline'
    inline_stride: int = None
    scaling: str = 'crop'
    cube_weighting: str = 'uniform'
    smooth: float = 1.0

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1:
            raise ValueError('batch_size and iterations must be >= 1')
        if self.scaling not in ('crop', 'cube'):
            raise ValueError(f"scaling must be 'crop' or 'cube', got {self.scaling!r}")
        if self.cube_weighting not in ('uniform', 'volume'):
            raise ValueError(f"cube_weighting must be 'uniform' or 'volume', got {self.cube_weighting!r}")
        if self.channel_axis not in CHANNEL_AXES:
            raise ValueError(f'channel_axis must be one of {CHANNEL_AXES}')


@dataclass
class TrainedModel:
    config: ModelConfig
    parameters: dict
    loss_history: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def channel_axis(self):
        return self.config.channel_axis

    def forward(self, values, params=None):
        return forward(self, values, params)

    def predict(self, images):
        """ Probabilities for a (batch, channels, h, w) array, without recording a tape. """
        params = {k: Tensor(v) for k, v in self.parameters.items()}
        out = forward(self, Tensor(np.asarray(images, dtype=np.float32)), params).data
        return np.clip(out, PROB_FLOOR, 1 - PROB_FLOOR)

    def to_bytes(self):
        meta = {'config': _config_dict(self.config), 'provenance': self.provenance,
                'loss_history': [float(v) for v in self.loss_history]}
        return encode_checkpoint(self.parameters, meta)

    @classmethod
    def from_bytes(cls, data):
        params, meta = decode_checkpoint(data)
        cfg = dict(meta['config'])
        if cfg.get('input_shape') is not None:
            cfg['input_shape'] = tuple(cfg['input_shape'])
        return cls(ModelConfig(**cfg), params, list(meta.get('loss_history', [])), meta.get('provenance', {}))

    def save(self, path):
        with open(path, 'wb') as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, 'rb') as f:
            return cls.from_bytes(f.read())


def _config_dict(config):
    out = dict(config.__dict__)
    if out['input_shape'] is not None:
        out['input_shape'] = list(out['input_shape'])
    return out


# ---------------------------------------------------------------- model

def layer_specs(config):
    """ (name, in_channels, out_channels, kernel) for every conv layer, in forward order. """
    ch = [config.base_channels * 2 ** d for d in range(config.depth + 1)]
    specs = [('stem', config.input_channels, ch[0], 3)]
    specs += [(f'enc{d}', ch[d - 1], ch[d], 3) for d in range(1, config.depth + 1)]
    for d in range(config.depth, 0, -1):
        inputs = ch[d] + (ch[d - 1] if config.skip_connections else 0)
        specs.append((f'dec{d}', inputs, ch[d - 1], 3))
    specs.append(('head', ch[0], config.input_channels, 1))
    return specs


def build_model(config, rng):
    """ Untrained model with He-normal weights and zero biases drawn from `rng`.

    Kernels are stored channels-last, (k, k, in, out).
    """
    params = {}
    for name, c_in, c_out, k in layer_specs(config):
        std = np.sqrt(2.0 / (c_in * k * k))
        params[f'{name}.weight'] = (rng.standard_normal((k, k, c_in, c_out)) * std).astype(np.float32)
        params[f'{name}.bias'] = np.zeros(c_out, dtype=np.float32)
    return TrainedModel(config, params)


def forward(model, values, params=None):
    """ Probability tensor with the same shape as `values` (batch, channels, h, w). """
    config = model.config
    if params is None:
        params = {k: Tensor(v, requires_grad=True) for k, v in model.parameters.items()}
    x = values if isinstance(values, Tensor) else Tensor(np.asarray(values, dtype=np.float32))
    if x.data.ndim != 4 or x.shape[1] != config.input_channels:
        raise HorizonSegError(f'model expects (batch, {config.input_channels}, h, w) input, got {x.shape}')
    check_divisible(x.shape[2:], config.depth)

    def conv(name, t, stride=1):
        w = params[f'{name}.weight']
        return conv2d_nhwc(t, w, params[f'{name}.bias'], stride=stride, padding=w.shape[0] // 2)

    # channels-last internally: im2col then copies contiguous channel vectors
    h = relu(conv('stem', transpose(x, (0, 2, 3, 1))))
    skips = [h]
    for d in range(1, config.depth + 1):
        h = relu(conv(f'enc{d}', h, stride=2))
        skips.append(h)
    for d in range(config.depth, 0, -1):
        h = upsample2x_nhwc(h)
        if config.skip_connections:
            h = concat([h, skips[d - 1]], axis=-1)
        h = relu(conv(f'dec{d}', h))
    return transpose(sigmoid(conv('head', h)), (0, 3, 1, 2))


# ---------------------------------------------------------------- training

def _input_channels(policy, channel_axis, split):
    axis = CHANNEL_AXES.index(channel_axis)
    if policy.kind == 'fixed':
        return 1 if split and axis == 0 else policy.fixed_shape[axis]
    if split and axis == 0:
        return 1
    raise HorizonSegError('a random shape policy needs a fixed channel extent: use the inline channel '
                          'axis together with an inline train split')


def train(cubes, cfg=TrainConfig(), model_cfg=ModelConfig(), log=None, names=None):
    """ Fit a model on `cubes`, a list of (Cube, HorizonSet) pairs.

    Each iteration picks one cube, samples a batch of windows (restricted to the train-split
    inlines when `cfg.inline_stride` is set), scales, rasterizes and augments them, and takes one
    Adam step on the Dice loss at the inverse-time-decayed learning rate. `log`, if given,
    receives one "iter, lr, loss" line per iteration.
    """
    if not cubes:
        raise HorizonSegError('no training cubes')
    names = list(names) if names is not None else [f'cube_{k}' for k in range(len(cubes))]
    for (cube, horizons), name in zip(cubes, names):
        if len(horizons) == 0:
            raise HorizonSegError(f'training cube {name!r} has no horizons')
        try:
            check_overlap(list(horizons), cfg.thickness)
        except OverlapError as err:
            raise OverlapError(err.first, err.second, f'cube {name!r}, thickness {cfg.thickness}') from None

    split = cfg.inline_stride is not None
    policy = cfg.shape_policy
    if policy.kind == 'random':
        policy = replace(policy, multiple_of=max(policy.multiple_of, 2 ** model_cfg.depth))
    model_cfg = replace(model_cfg, channel_axis=cfg.channel_axis,
                        input_channels=_input_channels(policy, cfg.channel_axis, split))
    allowed = [make_inline_split(c.geometry, cfg.inline_stride) if split else None for c, _ in cubes]

    rng = np.random.default_rng(cfg.seed)
    model = build_model(model_cfg, rng)
    model.provenance = {'train_cubes': names, 'seed': int(cfg.seed)}
    state = AdamState()
    weights = None
    if cfg.cube_weighting == 'volume':
        sizes = np.array([c.values.size for c, _ in cubes], dtype=np.float64)
        weights = sizes / sizes.sum()

    for iteration in range(cfg.iterations):
        lr = lr_inverse_time(cfg.base_lr, iteration, cfg.lr_decay_rate)
        index = int(rng.choice(len(cubes), p=weights))
        cube, horizons = cubes[index]
        batch = make_batch(cube, horizons, cfg, policy, allowed[index], rng)
        check_divisible(batch.values.shape[2:], model_cfg.depth)

        params = {k: Tensor(v, requires_grad=True) for k, v in model.parameters.items()}
        loss = dice_loss(forward(model, batch.values, params), batch.masks, cfg.smooth)
        value = float(loss.data)
        if not np.isfinite(value):
            raise HorizonSegError(f'non-finite loss at iteration {iteration}')
        loss.backward()
        grads = {k: t.grad for k, t in params.items() if t.grad is not None}
        adam_step(model.parameters, grads, state, lr)
        model.loss_history.append(value)
        if log is not None:
            log(f'{iteration}, {lr:.6g}, {value:.6f}')
    return model


def make_batch(cube, horizons, cfg, policy, allowed_inlines, rng):
    shape = sample_crop_shape(cube.geometry, policy, rng, thin_inline=allowed_inlines is not None)
    stats = cube.stats if cfg.scaling == 'cube' else None
    items, windows = [], []
    for _ in range(cfg.batch_size):
        window = sample_crop_window(cube.geometry, policy, allowed_inlines, rng, shape)
        values = scale_minmax(cut_crop(cube, window), stats)
        mask = rasterize_mask(horizons, window, cfg.thickness).astype(np.float32)
        image, label = compose(to_channels(values, cfg.channel_axis), to_channels(mask, cfg.channel_axis),
                               cfg.augment, rng)
        # the crop is already in channel layout; assemble_batch must not permute it again
        items.append((np.clip(image, 0.0, 1.0), label))
        windows.append(window)
    batch = assemble_batch(items, 'inline', windows)
    batch.channel_axis = cfg.channel_axis
    return batch


# ---------------------------------------------------------------- inference

def window_starts(extent, crop, stride):
    """ Window origins along one axis; the last window is clamped to end at the boundary. """
    if crop > extent:
        raise HorizonSegError(f'crop extent {crop} exceeds cube extent {extent}')
    if not 1 <= stride <= crop:
        raise HorizonSegError(f'stride {stride} must lie in [1, {crop}]')
    starts = list(range(0, extent - crop + 1, stride))
    if starts[-1] != extent - crop:
        starts.append(extent - crop)
    return starts


def predict_volume(model, cube, crop_shape, stride, batch_size=16, stats=None):
    """ Mean-blended sliding-window prediction over the whole cube.

    `model` needs a `channel_axis` attribute and `predict(images) -> probabilities`. Every voxel
    is the arithmetic mean of the predictions of all windows covering it.
    """
    g = cube.geometry
    starts = [window_starts(n, c, s) for n, c, s in zip(g.shape, crop_shape, stride)]
    origins = list(itertools.product(*starts))
    total = np.zeros(g.shape, dtype=np.float64)
    hits = np.zeros(g.shape, dtype=np.float64)
    axis = model.channel_axis
    for lo in range(0, len(origins), batch_size):
        chunk = origins[lo:lo + batch_size]
        slices = [tuple(slice(o, o + n) for o, n in zip(origin, crop_shape)) for origin in chunk]
        images = np.stack([to_channels(scale_minmax(cube.values[s], stats), axis) for s in slices])
        preds = np.asarray(model.predict(images), dtype=np.float32)
        if preds.shape != images.shape:
            raise HorizonSegError(f'model returned shape {preds.shape} for input {images.shape}')
        for s, pred in zip(slices, preds):
            total[s] += from_channels(pred, axis)
            hits[s] += 1
    return (total / hits).astype(np.float32)
