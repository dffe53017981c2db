import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from horizonseg.errors import ChecksumError, FormatError, GeometryError, HorizonSegError
from horizonseg.volume import (Cube, CubeGeometry, SyntheticSpec, ingest_segy, load_native, ricker, save_native,
                               slice_section, synthesize_cube, value_stats, write_segy, write_segy_cube)
from horizonseg.volume.native import decode_native, encode_native
from horizonseg.volume.segy import IBM_FLOAT, IEEE_FLOAT, ibm_to_ieee, ieee_to_ibm
from horizonseg.volume.synthetic import MIN_SEPARATION, reflectivity_of


@pytest.fixture
def enum_cube():
    g = CubeGeometry(2, 2, 3)
    return Cube(g, np.arange(12, dtype=np.float32).reshape(2, 2, 3))


def fixture_traces(values, il0=0, xl0=0, skip=()):
    return [(il0 + i, xl0 + x, values[i, x])
            for i in range(values.shape[0]) for x in range(values.shape[1]) if (i, x) not in skip]


# hand-decoded IBM words: sign | 7-bit excess-64 base-16 exponent | 24-bit fraction
IBM_TABLE = [
    (0x00000000, 0.0),
    (0x41100000, 1.0),          # 16**1 * 1/16
    (0xC1100000, -1.0),
    (0x40800000, 0.5),          # 16**0 * 8/16
    (0x41200000, 2.0),
    (0x42640000, 100.0),        # 16**2 * 0x64/256
    (0xC276A000, -118.625),     # 16**2 * 0x76A/4096
    (0x3F100000, 0.00390625),   # 16**-1 * 1/16
]


class TestSegy:
    @pytest.mark.parametrize('sample_format', [IEEE_FLOAT, IBM_FLOAT])
    def test_enumeration_round_trip(self, tmp_path, sample_format):
        values = np.arange(12, dtype=np.float32).reshape(2, 2, 3)
        path = tmp_path / 'enum.sgy'
        write_segy(path, fixture_traces(values, 100, 200), sample_format=sample_format)
        cube = ingest_segy(path)
        assert cube.geometry.shape == (2, 2, 3)
        assert (cube.geometry.inline_origin, cube.geometry.crossline_origin) == (100, 200)
        assert cube.values.ravel().tolist() == list(range(12))
        assert cube.geometry.sample_interval_ms == 2.0

    @pytest.mark.parametrize('word, expected', IBM_TABLE)
    def test_ibm_table(self, word, expected):
        assert ibm_to_ieee(np.array([word], dtype=np.uint32))[0] == np.float32(expected)
        assert int(ieee_to_ibm(np.array([expected]))[0]) == word

    def test_random_ieee_values_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        values = rng.standard_normal((3, 4, 17)).astype(np.float32)
        write_segy(tmp_path / 'r.sgy', fixture_traces(values))
        assert ingest_segy(tmp_path / 'r.sgy').values.tobytes() == values.tobytes()

    def test_missing_trace_is_dead(self, tmp_path):
        values = np.arange(1, 13, dtype=np.float32).reshape(2, 2, 3)
        write_segy(tmp_path / 'm.sgy', fixture_traces(values, skip={(1, 1)}))
        cube = ingest_segy(tmp_path / 'm.sgy')
        assert not cube.trace_presence[1, 1]
        assert cube.trace_presence.sum() == 3
        assert not cube.values[1, 1].any()
        assert value_stats(cube) == (1.0, 9.0)

    def test_inconsistent_trace_length(self, tmp_path):
        traces = [(0, 0, np.zeros(3)), (0, 1, np.zeros(4))]
        write_segy(tmp_path / 'bad.sgy', traces)
        with pytest.raises(FormatError, match='inconsistent trace length'):
            ingest_segy(tmp_path / 'bad.sgy')

    def test_truncated_file(self, tmp_path):
        values = np.ones((1, 2, 5), dtype=np.float32)
        write_segy(tmp_path / 't.sgy', fixture_traces(values))
        data = (tmp_path / 't.sgy').read_bytes()
        (tmp_path / 't.sgy').write_bytes(data[:-7])
        with pytest.raises(FormatError, match='truncated'):
            ingest_segy(tmp_path / 't.sgy')
        (tmp_path / 'h.sgy').write_bytes(data[:1000])
        with pytest.raises(FormatError, match='truncated'):
            ingest_segy(tmp_path / 'h.sgy')

    def test_unknown_format_code(self, tmp_path):
        write_segy(tmp_path / 'f.sgy', fixture_traces(np.ones((1, 1, 2), dtype=np.float32)))
        data = bytearray((tmp_path / 'f.sgy').read_bytes())
        struct.pack_into('>H', data, 3224, 3)
        (tmp_path / 'f.sgy').write_bytes(bytes(data))
        with pytest.raises(FormatError, match='sample-format code 3'):
            ingest_segy(tmp_path / 'f.sgy')

    def test_zero_traces(self, tmp_path):
        write_segy(tmp_path / 'z.sgy', [])
        with pytest.raises(FormatError, match='zero traces'):
            ingest_segy(tmp_path / 'z.sgy')

    def test_custom_header_bytes(self, tmp_path):
        values = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
        write_segy(tmp_path / 'c.sgy', fixture_traces(values, 5, 7), inline_byte=9, crossline_byte=21)
        cube = ingest_segy(tmp_path / 'c.sgy', inline_byte=9, crossline_byte=21)
        assert cube.geometry.inline_origin == 5 and cube.geometry.crossline_origin == 7
        assert np.array_equal(cube.values, values)

    def test_cube_writer(self, tmp_path, enum_cube):
        write_segy_cube(tmp_path / 'e.sgy', enum_cube, sample_format=IBM_FLOAT)
        assert ingest_segy(tmp_path / 'e.sgy') == enum_cube


class TestNative:
    def test_round_trip(self, tmp_path, enum_cube):
        save_native(enum_cube, tmp_path / 'c.hfc')
        loaded = load_native(tmp_path / 'c.hfc')
        assert loaded == enum_cube
        assert loaded.geometry == enum_cube.geometry

    def test_presence_restored(self, tmp_path):
        presence = np.array([[True, False], [True, True]])
        cube = Cube(CubeGeometry(2, 2, 3, 4.0, 10, 20), np.ones((2, 2, 3)), presence)
        save_native(cube, tmp_path / 'd.hfc')
        assert np.array_equal(load_native(tmp_path / 'd.hfc').trace_presence, presence)

    def test_unwritable_path(self, tmp_path, enum_cube):
        target = tmp_path / 'missing' / 'c.hfc'
        with pytest.raises(OSError) as info:
            save_native(enum_cube, target)
        assert str(target) in str(info.value)

    def test_corrupted_block(self, tmp_path):
        cube = Cube(CubeGeometry(70, 3, 2), np.arange(420, dtype=np.float32).reshape(70, 3, 2))
        data = bytearray(encode_native(cube))
        data[-10] ^= 0xFF  # inside the second (last) block
        with pytest.raises(ChecksumError, match='block 1') as info:
            decode_native(bytes(data))
        assert info.value.block == 1

    def test_future_version(self, enum_cube):
        data = bytearray(encode_native(enum_cube))
        struct.pack_into('<I', data, 4, 2)
        with pytest.raises(FormatError, match='version 2'):
            decode_native(bytes(data))

    def test_bad_magic(self, enum_cube):
        with pytest.raises(FormatError, match='magic'):
            decode_native(b'XXXX' + encode_native(enum_cube)[4:])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 70), st.integers(1, 70), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
    def test_round_trip_property(self, n_il, n_xl, n_s, seed):
        rng = np.random.default_rng(seed)
        g = CubeGeometry(n_il, n_xl, n_s, float(rng.uniform(0.5, 4)), int(rng.integers(-5, 5000)), 3)
        presence = rng.random((n_il, n_xl)) > 0.2
        cube = Cube(g, rng.standard_normal(g.shape), presence)
        assert decode_native(encode_native(cube)) == cube


class TestCube:
    def test_slice_section(self, enum_cube):
        assert np.array_equal(slice_section(enum_cube, 'inline', 0), enum_cube.values[0])
        assert np.array_equal(slice_section(enum_cube, 'crossline', 1), enum_cube.values[:, 1, :])
        with pytest.raises(GeometryError):
            slice_section(enum_cube, 'inline', 2)

    def test_slice_is_copy(self, enum_cube):
        section = slice_section(enum_cube, 'inline', 1)
        section[:] = -1
        assert enum_cube.values.min() == 0

    def test_slice_exhaustive(self):
        rng = np.random.default_rng(0)
        cube = Cube(CubeGeometry(3, 4, 5), rng.standard_normal((3, 4, 5)))
        for i in range(3):
            for x in range(4):
                assert np.array_equal(slice_section(cube, 'inline', i)[x], cube.values[i, x])
                assert np.array_equal(slice_section(cube, 'crossline', x)[i], cube.values[i, x])

    def test_value_stats(self):
        g = CubeGeometry(1, 1, 3)
        assert value_stats(Cube(g, [[[-3, 0, 5]]])) == (-3, 5)
        assert value_stats(Cube(g, np.full((1, 1, 3), 2.5))) == (2.5, 2.5)
        dead = Cube(CubeGeometry(1, 1, 3), np.ones((1, 1, 3)), np.zeros((1, 1), bool))
        with pytest.raises(HorizonSegError):
            value_stats(dead)

    def test_value_stats_ignores_dead(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(1, 9, (4, 4, 6))
        presence = rng.random((4, 4)) > 0.3
        cube = Cube(CubeGeometry(4, 4, 6), values, presence)
        live = cube.values[presence]
        assert value_stats(cube) == (live.min(), live.max())
        assert value_stats(cube)[0] >= 1

    def test_geometry_invariants(self):
        with pytest.raises(ValueError):
            CubeGeometry(0, 1, 1)
        with pytest.raises(ValueError):
            CubeGeometry(1, 1, 1, sample_interval_ms=0)
        with pytest.raises(ValueError):
            Cube(CubeGeometry(1, 1, 2), np.zeros((1, 1, 3)))


class TestSynthetic:
    def test_flat_interfaces(self):
        spec = SyntheticSpec(CubeGeometry(4, 5, 120), n_layers=4, relief=0.0)
        _, horizons = synthesize_cube(spec)
        assert [np.unique(h.depths).tolist() for h in horizons] == [[30.0], [60.0], [90.0]]
        assert all(h.coverage.all() for h in horizons)

    def test_deterministic(self):
        spec = SyntheticSpec(CubeGeometry(8, 9, 64), fault_count=2, noise_std=0.05, seed=11)
        a, ha = synthesize_cube(spec)
        b, hb = synthesize_cube(spec)
        assert a.values.tobytes() == b.values.tobytes()
        assert all(x == y for x, y in zip(ha, hb))

    def test_interface_sign_matches_direct_convolution(self):
        g = CubeGeometry(2, 2, 80)
        spec = SyntheticSpec(g, n_layers=2, relief=0.0, interface_depths=(40,), seed=5)
        cube, _ = synthesize_cube(spec)
        (r,) = reflectivity_of(spec)
        spikes = np.zeros(80)
        spikes[40] = r
        dt = g.sample_interval_ms / 1000
        half = 30
        wavelet = ricker(np.arange(-half, half + 1) * dt, spec.wavelet_peak_hz)
        direct = np.convolve(spikes, wavelet, mode='full')[half:half + 80]
        trace = cube.values[0, 0]
        assert np.sign(trace[40]) == np.sign(r)
        np.testing.assert_allclose(trace, direct, atol=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 9), st.integers(0, 3))
    def test_horizons_inside_and_separated(self, seed, faults):
        spec = SyntheticSpec(CubeGeometry(16, 12, 96), n_layers=4, relief=5.0, fault_count=faults,
                             fault_throw=4.0, seed=seed)
        try:
            _, horizons = synthesize_cube(spec)
        except HorizonSegError:
            return  # rejected draws are allowed; accepted ones must satisfy the invariants
        stack = np.stack([h.depths for h in horizons])
        assert stack.min() > 0 and stack.max() < 96
        assert (np.diff(stack, axis=0) >= MIN_SEPARATION).all()

    def test_rejects_crowded_interfaces(self):
        with pytest.raises(ValueError):
            SyntheticSpec(CubeGeometry(2, 2, 20), n_layers=2, interface_depths=(19.5,))
        spec = SyntheticSpec(CubeGeometry(8, 8, 40), n_layers=3, interface_depths=(10, 14), relief=6.0)
        with pytest.raises(HorizonSegError):
            synthesize_cube(spec)
