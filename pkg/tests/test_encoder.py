import numpy as np
import pytest

from gloss.exceptions import DatasetParseError, ShapeError, ValidationError
from gloss.processors.encoder import (EncoderParams, OptimizerState, assign_parameters, embed, encode, init_encoder,
                                      init_head, load_checkpoint, named_parameters, optimizer_step, predict,
                                      save_checkpoint)
from gloss.processors.tape import Tape


class TestEncoder:
    def test_deterministic_init(self):
        a = init_encoder(5, 4, seed=3)
        b = init_encoder(5, 4, seed=3)
        np.testing.assert_array_equal(a.weights['W'], b.weights['W'])
        assert not np.array_equal(a.weights['W'], init_encoder(5, 4, seed=4).weights['W'])

    @pytest.mark.parametrize('architecture', ['linear', 'mlp2'])
    def test_shapes_and_unit_norm(self, rng, architecture):
        params = init_encoder(6, 3, architecture, hidden_dim=5, seed=0)
        z = embed(params, rng.standard_normal((8, 6)))
        assert z.shape == (8, 3)
        np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0)
        assert (params.input_dim, params.output_dim) == (6, 3)

    def test_without_normalization(self, rng):
        params = init_encoder(4, 2, normalize=False, seed=0)
        x = rng.standard_normal((3, 4))
        np.testing.assert_allclose(embed(params, x), x @ params.weights['W'])

    def test_input_width_checked(self):
        with pytest.raises(ShapeError):
            encode(Tape(), init_encoder(4, 2), np.ones((2, 5)))
        with pytest.raises(ValidationError):
            init_encoder(4, 2, 'transformer')

    def test_overrides_replace_parameter(self, rng):
        params = init_encoder(3, 2, seed=0)
        tape = Tape()
        w = tape.variable(np.zeros((3, 2)) + 0.5)
        z, handles = encode(tape, params, rng.standard_normal((4, 3)), overrides={'encoder.W': w})
        assert handles['encoder.W'] is w
        grads = tape.backward(tape.reduce_sum(z))
        assert w in grads

    def test_predict(self):
        head = init_head(2, 3, seed=0)
        head.weight = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        np.testing.assert_array_equal(predict(head, np.array([[1.0, 0.0], [0.0, 1.0]])), [0, 1])

    def test_named_parameters_round_trip(self):
        params = init_encoder(3, 2, 'mlp2', hidden_dim=4)
        head = init_head(2, 3)
        named = named_parameters(params, head)
        assert set(named) == {'encoder.W1', 'encoder.b1', 'encoder.W2', 'encoder.b2', 'head.weight', 'head.bias'}
        assign_parameters({'encoder.b2': np.ones((1, 2)), 'head.bias': np.ones((1, 3))}, params, head)
        np.testing.assert_array_equal(params.weights['b2'], 1.0)
        np.testing.assert_array_equal(head.bias, 1.0)


class TestOptimizer:
    def test_adam_first_step_and_convergence(self):
        state = OptimizerState('adam', eta=0.1)
        params = {'x': np.array([[1.0]])}
        params = optimizer_step(state, params, {'x': 2.0 * params['x']})
        assert params['x'][0, 0] == pytest.approx(0.9, abs=1e-6)
        for _ in range(49):
            params = optimizer_step(state, params, {'x': 2.0 * params['x']})
        assert state.step == 50
        assert abs(params['x'][0, 0]) < 0.5

    def test_sgd(self):
        state = OptimizerState('sgd', eta=0.5)
        original = {'x': np.array([[2.0]])}
        updated = optimizer_step(state, original, {'x': np.array([[1.0]])})
        assert updated['x'][0, 0] == 1.5
        assert original['x'][0, 0] == 2.0

    def test_rejects_bad_gradients(self):
        state = OptimizerState('adam')
        with pytest.raises(ValidationError):
            optimizer_step(state, {'x': np.zeros((1, 1))}, {'y': np.zeros((1, 1))})
        with pytest.raises(ShapeError):
            optimizer_step(state, {'x': np.zeros((1, 1))}, {'x': np.zeros((2, 1))})
        with pytest.raises(ValidationError):
            optimizer_step(state, {'x': np.zeros((1, 1))}, {'x': np.array([[np.nan]])})


class TestCheckpoint:
    def test_save_and_load(self, tmp_path):
        params = init_encoder(4, 3, 'mlp2', hidden_dim=5, normalize=False, seed=2)
        head = init_head(3, 2, seed=1)
        path = tmp_path / 'model.glck'
        save_checkpoint(path, params, head)
        loaded, loaded_head = load_checkpoint(path)
        assert isinstance(loaded, EncoderParams)
        assert loaded.architecture == 'mlp2' and loaded.normalize is False
        for key, value in params.weights.items():
            np.testing.assert_array_equal(loaded.weights[key], value)
        np.testing.assert_array_equal(loaded_head.weight, head.weight)

    def test_without_head(self, tmp_path):
        path = tmp_path / 'enc.glck'
        save_checkpoint(path, init_encoder(2, 2))
        assert load_checkpoint(path)[1] is None

    def test_corrupt_files(self, tmp_path):
        bad = tmp_path / 'bad.glck'
        bad.write_bytes(b'XXXX')
        with pytest.raises(DatasetParseError):
            load_checkpoint(bad)
        good = tmp_path / 'good.glck'
        save_checkpoint(good, init_encoder(2, 2))
        bad.write_bytes(good.read_bytes()[:-5])
        with pytest.raises(DatasetParseError, match='truncado'):
            load_checkpoint(bad)
