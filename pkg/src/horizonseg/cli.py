""" Command-line entry point: ``horizonseg {synth,ingest,train,predict,evaluate,render} --config FILE``.

The configuration file is INI-style (bracketed sections, ``key = value`` lines, ``#`` comments);
see ``configs/example.cfg`` for every section and key with its default. Parsing is strict:
unknown sections or keys are errors, reported with their line number.

The environment variable ``HORIZONSEG_OUTPUT_DIR`` replaces ``[run] output_dir`` and nothing else.
"""
import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .augment import AugmentConfig
from .errors import ConfigError, HorizonSegError
from .evaluation import (CubeRegistry, ExperimentSetup, Report, emit_section_image, format_report, score_volume,
                         write_report)
from .horizons import HorizonSet, extract_horizons, load_horizon, save_horizon
from .pipeline import ModelConfig, TrainConfig, TrainedModel, predict_volume, train
from .sampling import ShapePolicy
from .volume import Cube, CubeGeometry, SyntheticSpec, ingest_segy, load_native, save_native, synthesize_cube

OUTPUT_ENV = 'HORIZONSEG_OUTPUT_DIR'
COMMANDS = ('synth', 'ingest', 'train', 'predict', 'evaluate', 'render')


# ---------------------------------------------------------------- value parsers

def _bool(text):
    lowered = text.strip().lower()
    if lowered in ('1', 'yes', 'true', 'on'):
        return True
    if lowered in ('0', 'no', 'false', 'off'):
        return False
    raise ValueError(f'expected a boolean, got {text!r}')


def _list(convert):
    def parse(text):
        items = [item for item in text.replace(',', ' ').split() if item]
        return [convert(item) for item in items]
    return parse


def _tuple(convert, size=None):
    def parse(text):
        items = tuple(_list(convert)(text))
        if size is not None and len(items) != size:
            raise ValueError(f'expected {size} values, got {len(items)}')
        return items
    return parse


def _optional(convert):
    def parse(text):
        return None if text.strip().lower() in ('', 'none', 'auto') else convert(text)
    return parse


def _choice(*options):
    def parse(text):
        text = text.strip()
        if text not in options:
            raise ValueError(f'expected one of {", ".join(options)}, got {text!r}')
        return text
    return parse


# key -> (parser, default); a default of REQUIRED makes the key mandatory
REQUIRED = object()

SCHEMA = {
    'run': {
        'output_dir': (str, REQUIRED),
        'seed': (int, 0),
    },
    'cube': {
        'path': (str, REQUIRED),
        'horizons': (_list(str), []),
        'format': (_choice('auto', 'native', 'segy'), 'auto'),
    },
    'synth': {
        'aliases': (_list(str), ['A', 'B', 'C', 'D']),
        'shape': (_tuple(int, 3), (64, 64, 128)),
        'sample_interval_ms': (float, 2.0),
        'n_layers': (int, 4),
        'surface_smoothness': (float, 8.0),
        'relief': (float, 4.0),
        'fault_count': (_list(int), [0]),
        'fault_throw': (float, 6.0),
        'wavelet_peak_hz': (_list(float), [25.0]),
        'noise_std': (float, 0.01),
    },
    'model': {
        'depth': (int, 3),
        'base_channels': (int, 16),
        'skip_connections': (_bool, True),
    },
    'train': {
        'batch_size': (int, 64),
        'iterations': (int, 1000),
        'base_lr': (float, 1e-3),
        'lr_decay_rate': (float, 0.002),
        'shape_policy': (_choice('fixed', 'random'), 'fixed'),
        'crop_shape': (_tuple(int, 3), (1, 128, 128)),
        'fraction_range': (_tuple(float, 2), (0.1, 0.5)),
        'depth_extent': (int, 128),
        'thickness': (int, 3),
        'channel_axis': (_choice('inline', 'crossline'), 'inline'),
        'scaling': (_choice('crop', 'cube'), 'crop'),
        'cube_weighting': (_choice('uniform', 'volume'), 'uniform'),
        'smooth': (float, 1.0),
    },
    'augment': {f.name: ((_tuple(float, 2) if isinstance(f.default, tuple) else type(f.default)), f.default)
                for f in fields(AugmentConfig)},
    'experiment': {
        'train_cubes': (_list(str), REQUIRED),
        'test_cube': (str, REQUIRED),
        'same_cube': (_bool, False),
        'train_inline_stride': (_optional(int), None),
        'window_ms': (float, 5.0),
        'inference_crop': (_optional(_tuple(int, 3)), None),
        'inference_stride': (_optional(_tuple(int, 3)), None),
        'threshold': (float, 0.5),
        'min_traces_frac': (float, 0.05),
    },
    'ingest': {
        'inline_byte': (int, 189),
        'crossline_byte': (int, 193),
    },
    'render': {
        'cube': (_optional(str), None),
        'axis': (_choice('inline', 'crossline'), 'inline'),
        'index': (int, 0),
        'horizons': (_choice('truth', 'predicted', 'none'), 'truth'),
    },
}


@dataclass
class CubeEntry:
    alias: str
    path: Path
    horizons: list
    format: str = 'auto'


@dataclass
class RunConfig:
    output_dir: Path
    seed: int = 0
    cubes: dict = field(default_factory=dict)
    synth: dict = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: dict = None
    ingest: dict = field(default_factory=dict)
    render: dict = field(default_factory=dict)
    source: Path = None


# ---------------------------------------------------------------- parsing

def _locate(lines, section, key=None):
    """ 1-based line number of a section header, or of `key` inside that section. """
    current = None
    for number, raw in enumerate(lines, start=1):
        text = raw.strip()
        if text.startswith('[') and text.endswith(']'):
            current = text[1:-1].strip()
            if key is None and current == section:
                return number
        elif key is not None and current == section and '=' in text:
            if text.split('=', 1)[0].strip().lower() == key:
                return number
    return None


def _read_section(parser, lines, section, schema):
    values = {}
    items = parser[section]
    for key in items:
        if key not in schema:
            raise ConfigError(f'unknown key {key!r} in [{section}]', _locate(lines, section, key))
    for key, (convert, default) in schema.items():
        if key in items:
            try:
                values[key] = convert(items[key])
            except ValueError as err:
                raise ConfigError(f'bad value for {key!r} in [{section}]: {err}', _locate(lines, section, key)) from None
        elif default is REQUIRED:
            raise ConfigError(f'missing required key {key!r} in [{section}]', _locate(lines, section))
        else:
            values[key] = default
    return values


def parse_config(path, check_paths=True):
    """ Read and validate a run configuration. Relative paths resolve against the file's directory. """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as err:
        raise ConfigError(f'cannot read config {path}: {err.strerror}') from None
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=('#', ';'),
                                       inline_comment_prefixes=('#',), default_section='\0defaults')
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as err:
        raise ConfigError('content before the first [section] header', err.lineno) from None
    except configparser.ParsingError as err:
        raise ConfigError(f'syntax error: {err.errors[0][1]!r}', err.errors[0][0]) from None
    except configparser.DuplicateOptionError as err:
        raise ConfigError(f'duplicate key {err.option!r} in [{err.section}]', err.lineno) from None
    except configparser.DuplicateSectionError as err:
        raise ConfigError(f'duplicate section [{err.section}]', err.lineno) from None

    for section in parser.sections():
        kind = 'cube' if section.startswith('cube:') else section
        if kind not in SCHEMA:
            raise ConfigError(f'unknown section [{section}]', _locate(lines, section))
    if 'run' not in parser:
        raise ConfigError('missing section [run]')

    base = path.parent
    run = _read_section(parser, lines, 'run', SCHEMA['run'])
    output_dir = os.environ.get(OUTPUT_ENV) or run['output_dir']
    config = RunConfig(output_dir=(base / output_dir).resolve(), seed=run['seed'], source=path)

    for section in parser.sections():
        if not section.startswith('cube:'):
            continue
        alias = section[len('cube:'):].strip()
        if not alias:
            raise ConfigError('cube section needs an alias, as in [cube:NAME]', _locate(lines, section))
        entry = _read_section(parser, lines, section, SCHEMA['cube'])
        cube = CubeEntry(alias, base / entry['path'], [base / h for h in entry['horizons']], entry['format'])
        if check_paths:
            for p in [cube.path] + cube.horizons:
                if not p.exists():
                    raise ConfigError(f'[{section}] references missing file {p}', _locate(lines, section))
        config.cubes[alias] = cube

    if 'synth' in parser:
        config.synth = _read_section(parser, lines, 'synth', SCHEMA['synth'])
        if len(set(config.synth['aliases'])) != len(config.synth['aliases']):
            raise ConfigError('synth aliases must be unique', _locate(lines, 'synth', 'aliases'))
        for alias in config.synth['aliases']:
            if alias in config.cubes:
                raise ConfigError(f'alias {alias!r} is both a synthetic and a [cube:] entry',
                                  _locate(lines, 'synth', 'aliases'))

    model = _read_section(parser, lines, 'model', SCHEMA['model']) if 'model' in parser else \
        {k: d for k, (_, d) in SCHEMA['model'].items()}
    train_values = _read_section(parser, lines, 'train', SCHEMA['train']) if 'train' in parser else \
        {k: d for k, (_, d) in SCHEMA['train'].items()}
    augment = _read_section(parser, lines, 'augment', SCHEMA['augment']) if 'augment' in parser else {}

    try:
        config.model = ModelConfig(depth=model['depth'], base_channels=model['base_channels'],
                                   skip_connections=model['skip_connections'],
                                   channel_axis=train_values['channel_axis'])
        policy = ShapePolicy(kind=train_values['shape_policy'], fixed_shape=train_values['crop_shape'],
                             fraction_range=train_values['fraction_range'],
                             depth_extent=train_values['depth_extent'])
        config.train = TrainConfig(
            batch_size=train_values['batch_size'], iterations=train_values['iterations'],
            base_lr=train_values['base_lr'], lr_decay_rate=train_values['lr_decay_rate'], seed=config.seed,
            shape_policy=policy, augment=AugmentConfig(**augment), thickness=train_values['thickness'],
            channel_axis=train_values['channel_axis'], scaling=train_values['scaling'],
            cube_weighting=train_values['cube_weighting'], smooth=train_values['smooth'])
    except ValueError as err:
        raise ConfigError(str(err)) from None

    if 'experiment' in parser:
        config.experiment = _read_section(parser, lines, 'experiment', SCHEMA['experiment'])
    if 'ingest' in parser:
        config.ingest = _read_section(parser, lines, 'ingest', SCHEMA['ingest'])
    else:
        config.ingest = {k: d for k, (_, d) in SCHEMA['ingest'].items()}
    if 'render' in parser:
        config.render = _read_section(parser, lines, 'render', SCHEMA['render'])
    else:
        config.render = {k: d for k, (_, d) in SCHEMA['render'].items()}

    known = set(config.cubes) | set(config.synth['aliases'] if config.synth else [])
    if config.experiment is not None:
        for alias in config.experiment['train_cubes'] + [config.experiment['test_cube']]:
            if alias not in known:
                raise ConfigError(f'experiment references unknown cube alias {alias!r}',
                                  _locate(lines, 'experiment'))
    return config


# ---------------------------------------------------------------- data access

def synth_dir(config):
    return config.output_dir / 'synth'


def synth_specs(config):
    """ alias -> SyntheticSpec. Per-cube lists (fault_count, wavelet_peak_hz) are cycled over aliases. """
    s = config.synth
    geometry = CubeGeometry(*s['shape'], sample_interval_ms=s['sample_interval_ms'])
    specs = {}
    for k, alias in enumerate(s['aliases']):
        specs[alias] = SyntheticSpec(
            geometry, n_layers=s['n_layers'], surface_smoothness=s['surface_smoothness'],
            fault_count=s['fault_count'][k % len(s['fault_count'])],
            wavelet_peak_hz=s['wavelet_peak_hz'][k % len(s['wavelet_peak_hz'])],
            noise_std=s['noise_std'], seed=config.seed + k, relief=s['relief'], fault_throw=s['fault_throw'])
    return specs


def _load_cube(entry, ingest):
    fmt = entry.format
    if fmt == 'auto':
        fmt = 'segy' if entry.path.suffix.lower() in ('.sgy', '.segy') else 'native'
    if fmt == 'segy':
        return ingest_segy(entry.path, ingest['inline_byte'], ingest['crossline_byte'])
    return load_native(entry.path)


def _require(path, hint):
    if not path.exists():
        raise HorizonSegError(f'{path} not found; {hint}')
    return path


def build_registry(config):
    """ Lazily loading registry over configured and synthesized cubes. """
    registry = CubeRegistry()
    cache = {}

    def cube_loader(alias, loader):
        def load():
            if alias not in cache:
                cache[alias] = loader()
            return cache[alias]
        return load

    for alias, entry in config.cubes.items():
        cube = cube_loader(alias, lambda entry=entry: _load_cube(entry, config.ingest))

        def horizons(entry=entry, cube=cube):
            if not entry.horizons:
                raise HorizonSegError(f'no ground-truth horizons for cube {entry.alias!r}')
            return HorizonSet([load_horizon(p, cube().geometry) for p in entry.horizons])
        registry.register(alias, cube, horizons)

    if config.synth:
        manifest_path = synth_dir(config) / 'manifest.json'
        for alias in config.synth['aliases']:
            def load(alias=alias):
                _require(manifest_path, 'run the synth command first')
                record = json.loads(manifest_path.read_text(encoding='utf-8'))['cubes'][alias]
                return load_native(synth_dir(config) / record['cube'])
            cube = cube_loader(alias, load)

            def horizons(alias=alias, cube=cube):
                record = json.loads(manifest_path.read_text(encoding='utf-8'))['cubes'][alias]
                geometry = cube().geometry
                return HorizonSet([load_horizon(synth_dir(config) / p, geometry) for p in record['horizons']])
            registry.register(alias, cube, horizons)
    return registry


def experiment_setup(config, registry=None):
    e = config.experiment
    if e is None:
        raise ConfigError('this command needs an [experiment] section')
    stride = e['train_inline_stride']
    if stride is None:
        # the 200-inline stride presumes kilo-inline cubes; scale it down to an eighth of the survey
        cube = registry.cube(e['train_cubes'][0])
        stride = max(1, cube.geometry.n_inlines // 8)
    return ExperimentSetup(e['train_cubes'], e['test_cube'], train_inline_stride=stride, window_ms=e['window_ms'],
                           train_config=config.train, model_config=config.model, same_cube=e['same_cube'],
                           inference_crop=e['inference_crop'], inference_stride=e['inference_stride'],
                           threshold=e['threshold'], min_traces_frac=e['min_traces_frac'])


# ---------------------------------------------------------------- commands

def cmd_synth(config, args):
    if not config.synth:
        raise ConfigError('synth needs a [synth] section')
    out = synth_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {'seed': config.seed, 'cubes': {}}
    for alias, spec in synth_specs(config).items():
        cube, horizons = synthesize_cube(spec)
        save_native(cube, out / f'{alias}.hfc')
        names = []
        for horizon in horizons:
            name = f'{alias}_{horizon.name}.txt'
            save_horizon(horizon, out / name)
            names.append(name)
        manifest['cubes'][alias] = {
            'cube': f'{alias}.hfc', 'horizons': names, 'shape': list(cube.geometry.shape),
            'wavelet_peak_hz': spec.wavelet_peak_hz, 'fault_count': spec.fault_count, 'seed': spec.seed}
        print(f'{alias}: {cube.geometry.shape} with {len(horizons)} horizons', file=sys.stderr)
    (out / 'manifest.json').write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n', encoding='utf-8')


def cmd_ingest(config, args):
    out = config.output_dir / 'cubes'
    out.mkdir(parents=True, exist_ok=True)
    converted = 0
    for alias, entry in config.cubes.items():
        if args.cube and alias != args.cube:
            continue
        cube = _load_cube(entry, config.ingest)
        save_native(cube, out / f'{alias}.hfc')
        live = int(cube.trace_presence.sum())
        print(f'{alias}: {cube.geometry.shape}, {live} live traces -> {out / (alias + ".hfc")}', file=sys.stderr)
        converted += 1
    if not converted:
        raise HorizonSegError('no [cube:] entries to ingest')


def cmd_train(config, args):
    registry = build_registry(config)
    setup = experiment_setup(config, registry)
    data = [(registry.cube(a), registry.horizons(a)) for a in setup.train_cubes]
    cfg = replace(setup.train_config, inline_stride=setup.train_inline_stride)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    with open(config.output_dir / 'train.log', 'w', encoding='utf-8') as log:
        log.write('iter, lr, loss\n')
        model = train(data, cfg, setup.model_config, log=lambda line: log.write(line + '\n'),
                      names=setup.train_cubes)
    model.save(config.output_dir / 'model.hfw')
    print(f'final loss {model.loss_history[-1]:.6f}; model written to {config.output_dir / "model.hfw"}',
          file=sys.stderr)


def _model_path(config, args):
    return Path(args.model) if getattr(args, 'model', None) else config.output_dir / 'model.hfw'


def _prob_path(config, alias):
    return config.output_dir / f'prob_{alias}.hfc'


def cmd_predict(config, args):
    registry = build_registry(config)
    setup = experiment_setup(config, registry)
    alias = args.cube or setup.test_cube
    model = TrainedModel.load(_require(_model_path(config, args), 'run the train command first'))
    cube = registry.cube(alias)
    crop, stride = setup.crop_and_stride()
    prob = predict_volume(model, cube, crop, stride)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    save_native(Cube(cube.geometry, prob), _prob_path(config, alias))


def cmd_evaluate(config, args):
    registry = build_registry(config)
    setup = experiment_setup(config, registry)
    alias = setup.test_cube
    prob_path = Path(args.prob) if args.prob else _prob_path(config, alias)
    if not prob_path.exists():
        cmd_predict(config, argparse.Namespace(cube=alias, model=getattr(args, 'model', None)))
    prob = load_native(prob_path)
    cube = registry.cube(alias)
    if prob.geometry.shape != cube.geometry.shape:
        raise HorizonSegError(f'probability volume {prob.geometry.shape} does not match cube {cube.geometry.shape}')
    truth = registry.horizons(alias)
    min_traces = max(1, int(setup.min_traces_frac * int(cube.trace_presence.sum())))
    rows, unmatched_pred, unmatched_truth = score_volume(prob.values, truth, setup.window_ms, setup.threshold,
                                                         min_traces)
    report = Report(setup, rows, unmatched_pred, unmatched_truth)
    write_report(report, config.output_dir)
    sys.stdout.write(format_report(report))


def cmd_render(config, args):
    registry = build_registry(config)
    r = config.render
    alias = args.cube or r['cube'] or (config.experiment or {}).get('test_cube')
    if alias is None:
        raise ConfigError('render needs a cube alias ([render] cube or --cube)')
    axis = args.axis or r['axis']
    index = args.index if args.index is not None else r['index']
    cube = registry.cube(alias)
    horizons = []
    if r['horizons'] == 'truth':
        horizons = registry.horizons(alias)
    elif r['horizons'] == 'predicted':
        prob = load_native(_require(_prob_path(config, alias), 'run the predict command first'))
        setup = experiment_setup(config, registry)
        min_traces = max(1, int(setup.min_traces_frac * int(cube.trace_presence.sum())))
        horizons = extract_horizons(prob.values, cube.geometry, setup.threshold, min_traces)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    target = config.output_dir / f'section_{alias}_{axis}_{index}.pgm'
    emit_section_image(cube, axis, index, horizons, target)
    print(f'wrote {target}', file=sys.stderr)


HANDLERS = {'synth': cmd_synth, 'ingest': cmd_ingest, 'train': cmd_train, 'predict': cmd_predict,
            'evaluate': cmd_evaluate, 'render': cmd_render}


def build_parser():
    parser = argparse.ArgumentParser(prog='horizonseg', description='Seismic horizon detection by segmentation.')
    sub = parser.add_subparsers(dest='command', metavar='{' + ','.join(COMMANDS) + '}')
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument('--config', required=True, help='run configuration file')
        if name in ('ingest', 'predict', 'render'):
            p.add_argument('--cube', help='cube alias (defaults from the config)')
        if name in ('predict', 'evaluate'):
            p.add_argument('--model', help='checkpoint path (default OUTPUT_DIR/model.hfw)')
        if name == 'evaluate':
            p.add_argument('--prob', help='probability volume to score (default OUTPUT_DIR/prob_TEST.hfc)')
        if name == 'render':
            p.add_argument('--axis', choices=('inline', 'crossline'))
            p.add_argument('--index', type=int)
    return parser


def run_command(argv=None):
    """ Run one subcommand. Returns 0 on success, 1 on a domain error and 2 on a usage error. """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return 0 if exit_.code == 0 else 2
    try:
        config = parse_config(args.config, check_paths=args.command != 'synth')
        HANDLERS[args.command](config, args)
    except HorizonSegError as err:
        print(f'horizonseg {args.command}: error: {err}', file=sys.stderr)
        return 1
    except OSError as err:
        print(f'horizonseg {args.command}: error: {err}', file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == '__main__':
    main()
