import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from horizonseg.augment import AugmentConfig
from horizonseg.errors import HorizonSegError, OverlapError
from horizonseg.horizons import Horizon, HorizonSet
from horizonseg.nn import Tensor, dice_loss
from horizonseg.pipeline import (ModelConfig, TrainConfig, TrainedModel, build_model, forward, predict_volume, train,
                                 window_starts)
from horizonseg.sampling import ShapePolicy
from horizonseg.volume import Cube, CubeGeometry, SyntheticSpec, synthesize_cube

SMALL = ModelConfig(depth=2, base_channels=4)


def small_train_config(**kwargs):
    base = dict(batch_size=4, iterations=3, shape_policy=ShapePolicy(fixed_shape=(1, 16, 32)),
                augment=AugmentConfig.disabled())
    base.update(kwargs)
    return TrainConfig(**base)


@pytest.fixture(scope='module')
def flat_cube():
    spec = SyntheticSpec(CubeGeometry(8, 16, 64), n_layers=3, relief=0.0, seed=2)
    return synthesize_cube(spec)


class ConstantStub:
    channel_axis = 'inline'

    def __init__(self, value):
        self.value = np.float32(value)

    def predict(self, images):
        return np.full(images.shape, self.value, dtype=np.float32)


class TestModel:
    def test_shape_contract(self):
        model = build_model(ModelConfig(depth=3, base_channels=16), np.random.default_rng(0))
        out = model.predict(np.random.default_rng(1).random((1, 1, 64, 64)))
        assert out.shape == (1, 1, 64, 64)

    def test_multichannel_input_predicts_every_slab(self):
        model = build_model(ModelConfig(depth=2, base_channels=4, input_channels=3), np.random.default_rng(0))
        assert model.predict(np.zeros((2, 3, 16, 8))).shape == (2, 3, 16, 8)

    def test_indivisible(self):
        with pytest.raises(HorizonSegError):
            ModelConfig(depth=7, input_shape=(64, 64))
        model = build_model(ModelConfig(depth=3), np.random.default_rng(0))
        with pytest.raises(HorizonSegError):
            model.predict(np.zeros((1, 1, 60, 64)))

    def test_channel_mismatch(self):
        model = build_model(SMALL, np.random.default_rng(0))
        with pytest.raises(HorizonSegError):
            model.predict(np.zeros((1, 2, 16, 16)))

    def test_seeded_init(self):
        a = build_model(SMALL, np.random.default_rng(5))
        b = build_model(SMALL, np.random.default_rng(5))
        assert all(a.parameters[k].tobytes() == b.parameters[k].tobytes() for k in a.parameters)

    def test_open_unit_interval_and_purity(self):
        model = build_model(SMALL, np.random.default_rng(0))
        for k in model.parameters:  # push logits hard in both directions
            model.parameters[k] *= 40
        images = np.random.default_rng(2).random((3, 1, 16, 16)) * 50
        out = model.predict(images)
        assert (out > 0).all() and (out < 1).all()
        assert np.array_equal(out, model.predict(images))

    def test_serialization(self, tmp_path):
        model = build_model(SMALL, np.random.default_rng(0))
        model.loss_history = [0.9, 0.8]
        model.provenance = {'train_cubes': ['A'], 'seed': 4}
        model.save(tmp_path / 'm.hfw')
        back = TrainedModel.load(tmp_path / 'm.hfw')
        assert back.config == model.config and back.loss_history == [0.9, 0.8] and back.provenance['seed'] == 4
        assert back.to_bytes() == model.to_bytes()

    def test_full_model_gradient_flows(self):
        model = build_model(SMALL, np.random.default_rng(0))
        params = {k: Tensor(v, requires_grad=True) for k, v in model.parameters.items()}
        target = np.zeros((2, 1, 16, 16), np.float32)
        target[..., 5] = 1
        dice_loss(forward(model, np.random.default_rng(1).random((2, 1, 16, 16)), params), target).backward()
        assert all(params[k].grad is not None and params[k].grad.shape == params[k].shape for k in params)


class TestTrain:
    def test_single_iteration(self, flat_cube):
        model = train([flat_cube], small_train_config(iterations=1), SMALL)
        assert len(model.loss_history) == 1

    def test_deterministic(self, flat_cube):
        cfg = small_train_config(augment=AugmentConfig(), inline_stride=2)
        a = train([flat_cube], cfg, SMALL)
        b = train([flat_cube], cfg, SMALL)
        assert a.loss_history == b.loss_history
        assert a.to_bytes() == b.to_bytes()

    def test_inputs_untouched(self, flat_cube):
        cube, horizons = flat_cube
        values, depths = cube.values.copy(), [h.depths.copy() for h in horizons]
        train([flat_cube], small_train_config(augment=AugmentConfig(p_cutout=1, p_noise=1)), SMALL)
        assert np.array_equal(cube.values, values)
        assert all(np.array_equal(h.depths, d) for h, d in zip(horizons, depths))

    def test_overlap_rejected(self):
        g = CubeGeometry(4, 16, 64)
        horizons = HorizonSet([Horizon(g, np.full((4, 16), 10.0), 'a'), Horizon(g, np.full((4, 16), 12.0), 'b')])
        with pytest.raises(OverlapError, match="'a' and 'b'"):
            train([(Cube(g, np.zeros(g.shape)), horizons)], small_train_config(), SMALL)

    def test_no_horizons(self):
        g = CubeGeometry(4, 16, 64)
        with pytest.raises(HorizonSegError):
            train([(Cube(g, np.zeros(g.shape)), HorizonSet([]))], small_train_config(), SMALL)

    def test_log_lines(self, flat_cube):
        lines = []
        train([flat_cube], small_train_config(iterations=2), SMALL, log=lines.append)
        assert [line.split(', ')[:2] for line in lines] == [['0', '0.001'], ['1', '0.000998004']]

    def test_random_policy(self, flat_cube):
        cfg = small_train_config(shape_policy=ShapePolicy('random', fraction_range=(0.3, 1.0), depth_extent=32),
                                 inline_stride=2, iterations=4)
        model = train([flat_cube], cfg, SMALL)
        assert np.isfinite(model.loss_history).all()

    def test_crossline_channels(self, flat_cube):
        cfg = small_train_config(channel_axis='crossline', shape_policy=ShapePolicy(fixed_shape=(8, 2, 32)))
        model = train([flat_cube], cfg, SMALL)
        assert model.config.input_channels == 2 and model.channel_axis == 'crossline'

    def test_loss_decreases(self, flat_cube):
        cfg = small_train_config(iterations=300, batch_size=8, base_lr=3e-3)
        model = train([flat_cube], cfg, ModelConfig(depth=2, base_channels=8))
        history = np.array(model.loss_history)
        assert np.isfinite(history).all()
        assert history[-50:].mean() < history[:50].mean()


class TestInference:
    def test_window_starts(self):
        assert window_starts(10, 4, 3) == [0, 3, 6]
        assert window_starts(10, 4, 4) == [0, 4, 6]
        assert window_starts(4, 4, 1) == [0]
        with pytest.raises(HorizonSegError):
            window_starts(3, 4, 1)
        with pytest.raises(HorizonSegError):
            window_starts(10, 4, 5)

    def test_constant_stub(self):
        g = CubeGeometry(5, 13, 21)
        cube = Cube(g, np.random.default_rng(0).standard_normal(g.shape))
        out = predict_volume(ConstantStub(0.3), cube, (2, 5, 8), (1, 3, 5))
        assert out.shape == g.shape and (out == np.float32(0.3)).all()

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31), st.floats(1e-6, 1 - 1e-6))
    def test_partition_of_unity(self, seed, value):
        r = np.random.default_rng(seed)
        g = CubeGeometry(*(int(n) for n in r.integers(3, 14, 3)))
        crop = tuple(int(r.integers(1, n + 1)) for n in g.shape)
        stride = tuple(int(r.integers(1, c + 1)) for c in crop)
        out = predict_volume(ConstantStub(value), Cube(g, r.standard_normal(g.shape)), crop, stride)
        assert (out == np.float32(value)).all()

    def test_band_average(self):
        class Ordered:
            channel_axis = 'inline'

            def predict(self, images):
                out = np.zeros(images.shape, np.float32)
                out[1:] = 1.0
                return out
        g = CubeGeometry(1, 6, 4)
        out = predict_volume(Ordered(), Cube(g, np.zeros(g.shape)), (1, 4, 4), (1, 2, 4))
        # windows cover crosslines [0, 4) and [2, 6): hit counts 1, 1, 2, 2, 1, 1
        assert out[0, :, 0].tolist() == [0, 0, 0.5, 0.5, 1, 1]

    def test_crossline_axis_round_trip(self):
        class Echo:
            channel_axis = 'crossline'

            def predict(self, images):
                return images
        g = CubeGeometry(4, 6, 8)
        values = np.random.default_rng(3).random(g.shape)
        values[0, 0, 0], values[-1, -1, -1] = 0, 1  # pin the range so every window scales alike
        out = predict_volume(Echo(), Cube(g, values), g.shape, g.shape)
        np.testing.assert_allclose(out, values.astype(np.float32), atol=1e-6)

    def test_model_output_range(self, flat_cube):
        cube, _ = flat_cube
        model = build_model(ModelConfig(depth=2, base_channels=4), np.random.default_rng(0))
        out = predict_volume(model, cube, (1, 16, 32), (1, 8, 16))
        assert out.shape == cube.geometry.shape
        assert (out > 0).all() and (out < 1).all()
