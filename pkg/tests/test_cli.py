import json
import textwrap
from pathlib import Path

import numpy as np
import pytest

from horizonseg.cli import OUTPUT_ENV, parse_config, run_command
from horizonseg.errors import ConfigError
from horizonseg.horizons import Horizon, save_horizon
from horizonseg.pipeline import TrainedModel
from horizonseg.volume import Cube, CubeGeometry, load_native, save_native, write_segy_cube

EXAMPLE = Path(__file__).resolve().parents[1] / 'configs' / 'example.cfg'

TINY = """
[run]
output_dir = out
seed = 3

[synth]
aliases = A, B
shape = 8, 16, 48
n_layers = 3
relief = 2.0
fault_count = 0, 1
wavelet_peak_hz = 30, 40

[model]
depth = 2
base_channels = 4

[train]
batch_size = 2
iterations = 3
crop_shape = 1, 16, 32

[augment]
p_elastic = 0.0

[experiment]
train_cubes = A
test_cube = B
train_inline_stride = 2
"""


def write(tmp_path, text, name='run.cfg'):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


@pytest.fixture
def cube_files(tmp_path):
    g = CubeGeometry(4, 8, 40)
    cube = Cube(g, np.random.default_rng(0).standard_normal(g.shape))
    save_native(cube, tmp_path / 'c.hfc')
    save_horizon(Horizon(g, np.full(g.spatial_shape, 10.0), 'top'), tmp_path / 'top.txt')
    return tmp_path


class TestParse:
    def test_minimal_defaults(self, cube_files):
        path = write(cube_files, """
            [run]
            output_dir = out
            [cube:X]
            path = c.hfc
            horizons = top.txt
            [experiment]
            train_cubes = X
            test_cube = X
            same_cube = yes
        """)
        config = parse_config(path)
        assert config.train.batch_size == 64 and config.train.iterations == 1000
        assert config.experiment['window_ms'] == 5.0
        assert config.cubes['X'].path == cube_files / 'c.hfc'
        assert config.output_dir == (cube_files / 'out').resolve()

    def test_misspelled_key(self, tmp_path):
        path = write(tmp_path, """\
            [run]
            output_dir = out
            [train]
            batchsize = 32
        """)
        with pytest.raises(ConfigError, match='line 4') as info:
            parse_config(path)
        assert 'batchsize' in str(info.value)

    def test_empty_file(self, tmp_path):
        with pytest.raises(ConfigError, match=r'missing section \[run\]'):
            parse_config(write(tmp_path, ''))

    def test_syntax_error_line(self, tmp_path):
        path = write(tmp_path, "[run]\noutput_dir = out\nthis line is wrong\n")
        with pytest.raises(ConfigError, match='line 3'):
            parse_config(path)

    def test_missing_required_key(self, tmp_path):
        with pytest.raises(ConfigError, match='output_dir'):
            parse_config(write(tmp_path, '[run]\nseed = 1\n'))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match='line 3'):
            parse_config(write(tmp_path, '[run]\noutput_dir = o\n[trian]\n'))

    def test_bad_value(self, tmp_path):
        with pytest.raises(ConfigError, match='iterations'):
            parse_config(write(tmp_path, '[run]\noutput_dir = o\n[train]\niterations = many\n'))

    def test_missing_cube_file(self, tmp_path):
        path = write(tmp_path, '[run]\noutput_dir = o\n[cube:X]\npath = nowhere.hfc\n')
        with pytest.raises(ConfigError, match='missing file'):
            parse_config(path)
        assert parse_config(path, check_paths=False).cubes['X'].path.name == 'nowhere.hfc'

    def test_unknown_alias(self, tmp_path):
        path = write(tmp_path, '[run]\noutput_dir = o\n[experiment]\ntrain_cubes = Q\ntest_cube = Q\n')
        with pytest.raises(ConfigError, match="'Q'"):
            parse_config(path)

    def test_env_overrides_output_only(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / 'elsewhere'))
        config = parse_config(write(tmp_path, TINY))
        assert config.output_dir == (tmp_path / 'elsewhere').resolve()
        assert config.seed == 3 and config.train.iterations == 3

    def test_example_config_parses(self):
        config = parse_config(EXAMPLE, check_paths=False)
        assert config.synth['aliases'] == ['A', 'B', 'C', 'D']
        assert config.experiment['test_cube'] == 'D'
        assert config.train.augment.p_noise == 0.5


class TestCommands:
    def test_unknown_subcommand(self, capsys):
        assert run_command(['fly']) == 2
        assert 'usage' in capsys.readouterr().err

    def test_missing_config_flag(self):
        assert run_command(['train']) == 2

    def test_bad_config_is_domain_error(self, tmp_path, capsys):
        assert run_command(['train', '--config', str(write(tmp_path, ''))]) == 1
        assert 'missing section' in capsys.readouterr().err

    def test_full_session(self, tmp_path, monkeypatch):
        monkeypatch.delenv(OUTPUT_ENV, raising=False)
        cfg = str(write(tmp_path, TINY))
        out = tmp_path / 'out'
        assert run_command(['synth', '--config', cfg]) == 0
        manifest = json.loads((out / 'synth' / 'manifest.json').read_text())
        assert set(manifest['cubes']) == {'A', 'B'}
        assert manifest['cubes']['B']['fault_count'] == 1 and manifest['cubes']['B']['wavelet_peak_hz'] == 40
        assert len(list((out / 'synth').glob('A_horizon_*.txt'))) == 2
        first = (out / 'synth' / 'A.hfc').read_bytes()

        assert run_command(['synth', '--config', cfg]) == 0
        assert (out / 'synth' / 'A.hfc').read_bytes() == first

        assert run_command(['train', '--config', cfg]) == 0
        log = (out / 'train.log').read_text().splitlines()
        assert log[0] == 'iter, lr, loss' and len(log) == 4
        assert log[1].startswith('0, 0.001, ')
        model = TrainedModel.load(out / 'model.hfw')
        assert len(model.loss_history) == 3 and model.provenance['train_cubes'] == ['A']

        assert run_command(['predict', '--config', cfg]) == 0
        prob = load_native(out / 'prob_B.hfc')
        assert prob.geometry.shape == (8, 16, 48)
        assert 0 < prob.values.min() and prob.values.max() < 1

        assert run_command(['evaluate', '--config', cfg]) == 0
        assert (out / 'report.txt').read_text().startswith('Train cube | Test cube |')
        assert (out / 'report.csv').read_text().startswith('horizon,coverage_pct,mean_error_ms,window_pct\n')

        assert run_command(['render', '--config', cfg, '--index', '2']) == 0
        image = (out / 'section_B_inline_2.pgm').read_bytes()
        assert image.startswith(b'P5 16 48 255\n') and len(image) == len(b'P5 16 48 255\n') + 16 * 48

        written = {p for p in tmp_path.rglob('*') if p.is_file()}
        assert all(p == tmp_path / 'run.cfg' or out in p.parents for p in written)

    def test_train_overlap_exit_1(self, tmp_path, capsys):
        g = CubeGeometry(4, 8, 40)
        save_native(Cube(g, np.zeros(g.shape)), tmp_path / 'c.hfc')
        save_horizon(Horizon(g, np.full(g.spatial_shape, 10.0), 'upper'), tmp_path / 'a.txt')
        save_horizon(Horizon(g, np.full(g.spatial_shape, 12.0), 'lower'), tmp_path / 'b.txt')
        cfg = write(tmp_path, """
            [run]
            output_dir = out
            [cube:X]
            path = c.hfc
            horizons = a.txt, b.txt
            [train]
            iterations = 1
            [experiment]
            train_cubes = X
            test_cube = X
            same_cube = yes
        """)
        assert run_command(['train', '--config', str(cfg)]) == 1
        err = capsys.readouterr().err
        assert 'overlap' in err and "'upper'" in err and "'lower'" in err

    def test_ingest_segy(self, tmp_path):
        g = CubeGeometry(3, 4, 10, 4.0, 100, 7)
        cube = Cube(g, np.random.default_rng(1).standard_normal(g.shape))
        write_segy_cube(tmp_path / 'field.sgy', cube)
        cfg = write(tmp_path, '[run]\noutput_dir = out\n[cube:F]\npath = field.sgy\n')
        assert run_command(['ingest', '--config', str(cfg)]) == 0
        assert load_native(tmp_path / 'out' / 'cubes' / 'F.hfc') == cube

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / 'env_out'))
        assert run_command(['synth', '--config', str(write(tmp_path, TINY))]) == 0
        assert (tmp_path / 'env_out' / 'synth' / 'manifest.json').exists()
        assert not (tmp_path / 'out').exists()
