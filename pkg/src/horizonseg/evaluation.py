""" Experiment harness: train on some cubes, predict another, score extracted horizons. """
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import HorizonSegError
from .horizons import compare_horizons, extract_horizons, match_horizons
from .pipeline import ModelConfig, TrainConfig, predict_volume, train
from .volume import Cube, save_native, slice_section

UNDEFINED = '—'


class CubeRegistry:
    """ Alias -> (cube, horizons) lookup that records every access in `access_log`. """

    def __init__(self, entries=None):
        self._entries = {}
        self.access_log = []
        for alias, (cube, horizons) in (entries or {}).items():
            self.register(alias, cube, horizons)

    def register(self, alias, cube, horizons=None):
        if alias in self._entries:
            raise HorizonSegError(f'duplicate cube alias {alias!r}')
        self._entries[alias] = (cube, horizons)

    def __contains__(self, alias):
        return alias in self._entries

    def aliases(self):
        return list(self._entries)

    def _entry(self, alias):
        if alias not in self._entries:
            raise HorizonSegError(f'unknown cube alias {alias!r}')
        return self._entries[alias]

    def cube(self, alias):
        cube = self._entry(alias)[0]
        self.access_log.append((alias, 'cube'))
        return cube() if callable(cube) else cube

    def horizons(self, alias):
        horizons = self._entry(alias)[1]
        if horizons is None:
            raise HorizonSegError(f'no ground-truth horizons for cube {alias!r}')
        self.access_log.append((alias, 'horizons'))
        return horizons() if callable(horizons) else horizons


@dataclass
class ExperimentSetup:
    train_cubes: list
    test_cube: str
    train_inline_stride: int = 200
    window_ms: float = 5.0
    train_config: TrainConfig = field(default_factory=TrainConfig)
    model_config: ModelConfig = field(default_factory=ModelConfig)
    same_cube: bool = False
    inference_crop: tuple = None
    inference_stride: tuple = None
    threshold: float = 0.5
    min_traces_frac: float = 0.05

    def __post_init__(self):
        self.train_cubes = list(self.train_cubes)
        if not self.train_cubes:
            raise HorizonSegError('experiment needs at least one training cube')
        if self.test_cube in self.train_cubes and not self.same_cube:
            raise HorizonSegError(f'test cube {self.test_cube!r} is also a training cube; '
                                  'set same_cube for the same-cube setup')
        if self.train_inline_stride < 1:
            raise ValueError('train_inline_stride must be >= 1')

    def crop_and_stride(self):
        crop = self.inference_crop
        if crop is None:
            fixed = self.train_config.shape_policy.fixed_shape
            crop = (1,) + tuple(fixed[1:])
        stride = self.inference_stride or tuple(max(1, n // 2) for n in crop)
        return tuple(crop), tuple(stride)


@dataclass
class Report:
    setup: ExperimentSetup
    rows: list
    unmatched_pred: int
    unmatched_truth: int
    runtime_s: float = 0.0
    model: object = None


def score_volume(prob, truth, window_ms=5.0, threshold=0.5, min_traces=1):
    """ Extract, match and compare. Returns (rows in truth order, unmatched pred, unmatched truth). """
    geometry = truth[0].geometry
    pred = extract_horizons(prob, geometry, threshold, min_traces)
    pairs = match_horizons(pred, truth)
    rows = [compare_horizons(pred[p], truth[t], window_ms) for p, t in pairs]
    return rows, len(pred) - len(pairs), len(truth) - len(pairs)


def run_experiment(setup, registry, model=None, out_dir=None, log=None):
    """ Train (unless `model` is injected), predict the test cube, and score it against its labels.

    Test-cube horizons are only requested from `registry` after prediction.
    """
    start = time.perf_counter()
    if setup.test_cube not in registry:
        raise HorizonSegError(f'unknown test cube alias {setup.test_cube!r}')
    if model is None:
        data = [(registry.cube(a), registry.horizons(a)) for a in setup.train_cubes]
        cfg = replace(setup.train_config, inline_stride=setup.train_inline_stride)
        model = train(data, cfg, setup.model_config, log=log, names=setup.train_cubes)

    test = registry.cube(setup.test_cube)
    crop, stride = setup.crop_and_stride()
    prob = predict_volume(model, test, crop, stride)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_native(Cube(test.geometry, prob), out_dir / f'prob_{setup.test_cube}.hfc')
        if hasattr(model, 'save'):
            model.save(out_dir / 'model.hfw')

    truth = registry.horizons(setup.test_cube)
    n_traces = int(test.trace_presence.sum())
    min_traces = max(1, int(setup.min_traces_frac * n_traces))
    rows, unmatched_pred, unmatched_truth = score_volume(prob, truth, setup.window_ms, setup.threshold, min_traces)
    return Report(setup, rows, unmatched_pred, unmatched_truth, time.perf_counter() - start, model)


# ---------------------------------------------------------------- reports

def format_value(value):
    if value is None:
        return UNDEFINED
    text = f'{value:.1f}'
    return text[:-2] if text.endswith('.0') else text


def format_cells(rows):
    """ "a1, a2 | e1, e2 | w1, w2": one comma-joined column per metric, rows in truth order. """
    if not rows:
        return UNDEFINED
    columns = [[r.coverage_pct for r in rows], [r.mean_error_ms for r in rows], [r.window_pct for r in rows]]
    return ' | '.join(', '.join(format_value(v) for v in column) for column in columns)


def format_report(report):
    """ Table with the train cubes, test cube and the three metric columns. Runtime is left out
    so equal seeds give byte-identical reports. """
    setup = report.setup
    header = f'Train cube | Test cube | Area, % | Mean error, ms | Area in {format_value(setup.window_ms)}ms window, %'
    row = f'{", ".join(setup.train_cubes)} | {setup.test_cube} | {format_cells(report.rows)}'
    footer = f'unmatched predicted: {report.unmatched_pred}; unmatched labeled: {report.unmatched_truth}'
    return '\n'.join([header, row, footer]) + '\n'


def report_csv(report):
    lines = ['horizon,coverage_pct,mean_error_ms,window_pct']
    for r in report.rows:
        cells = ['' if v is None else f'{v:.6f}' for v in (r.coverage_pct, r.mean_error_ms, r.window_pct)]
        lines.append(','.join([r.name] + cells))
    return '\n'.join(lines) + '\n'


def write_report(report, directory, stem='report'):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f'{stem}.txt').write_text(format_report(report), encoding='utf-8')
    (directory / f'{stem}.csv').write_text(report_csv(report), encoding='utf-8')


def emit_section_image(cube, axis, index, horizons, path):
    """ Binary PGM of one section: traces as columns, depth as rows, horizons burned in at 255. """
    section = slice_section(cube, axis, index)
    lo, hi = float(section.min()), float(section.max())
    if hi > lo:
        pixels = np.rint((section.astype(np.float64) - lo) / (hi - lo) * 255)
    else:
        pixels = np.zeros(section.shape)
    image = pixels.T.astype(np.uint8).copy()  # rows = depth, columns = traces
    for horizon in horizons or []:
        curve = horizon.depths[index, :] if axis == 'inline' else horizon.depths[:, index]
        columns = np.nonzero(~np.isnan(curve))[0]
        rows = np.floor(curve[columns] + 0.5).astype(np.int64)
        keep = (rows >= 0) & (rows < image.shape[0])
        image[rows[keep], columns[keep]] = 255
    height, width = image.shape
    with open(path, 'wb') as f:
        f.write(f'P5 {width} {height} 255\n'.encode('ascii'))
        f.write(image.tobytes())

