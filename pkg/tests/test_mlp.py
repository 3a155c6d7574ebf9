"""Neural-core tests: the finite-difference gradient oracle, forward/embed
contracts, Adam training with freezing, output expansion, and persistence."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weldwatch.errors import ConfigurationError, DataError, RestoreError, ShapeError
from weldwatch.mlp import (
    FreezeSpec,
    TrainConfig,
    cross_entropy,
    embed,
    expand_output,
    forward,
    gradients,
    init_mlp,
    load_model,
    model_from_document,
    model_to_document,
    save_model,
    softmax_rows,
    train,
)


def _with_param(model, layer, kind, index, value):
    """Copy of the model with one weight/bias entry replaced."""
    if kind == "w":
        weights = list(model.weights)
        W = weights[layer].copy()
        W[index] = value
        weights[layer] = W
        return replace(model, weights=tuple(weights))
    biases = list(model.biases)
    b = biases[layer].copy()
    b[index] = value
    biases[layer] = b
    return replace(model, biases=tuple(biases))


def finite_difference_gradients(model, X, y, step=1e-5):
    """Independent oracle: central differences of the mean cross-entropy."""
    dWs, dbs = [], []
    for l in range(model.n_param_layers):
        dW = np.zeros_like(model.weights[l])
        for idx in np.ndindex(*dW.shape):
            base = model.weights[l][idx]
            up = cross_entropy(_with_param(model, l, "w", idx, base + step), X, y)
            down = cross_entropy(_with_param(model, l, "w", idx, base - step), X, y)
            dW[idx] = (up - down) / (2 * step)
        db = np.zeros_like(model.biases[l])
        for idx in np.ndindex(*db.shape):
            base = model.biases[l][idx]
            up = cross_entropy(_with_param(model, l, "b", idx, base + step), X, y)
            down = cross_entropy(_with_param(model, l, "b", idx, base - step), X, y)
            db[idx] = (up - down) / (2 * step)
        dWs.append(dW)
        dbs.append(db)
    return dWs, dbs


def assert_gradients_close(analytic, numeric, rtol=1e-4, atol=1e-8):
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n)
        bound = rtol * np.maximum(np.abs(a), np.abs(n)) + atol
        assert np.all(err <= bound), f"max excess {np.max(err - bound)}"


class TestInit:
    def test_default_architecture_shapes(self):
        model = init_mlp([20, 150, 100, 50, 6], seed=7)
        assert [w.shape for w in model.weights] == [
            (150, 20),
            (100, 150),
            (50, 100),
            (6, 50),
        ]
        assert [b.shape for b in model.biases] == [(150,), (100,), (50,), (6,)]

    def test_same_seed_bit_identical(self):
        a = init_mlp([20, 150, 100, 50, 6], seed=7)
        b = init_mlp([20, 150, 100, 50, 6], seed=7)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_he_uniform_bound(self):
        model = init_mlp([100, 50, 3], seed=1)
        bound = np.sqrt(6.0 / 100)
        assert np.max(np.abs(model.weights[0])) <= bound
        assert np.all(model.biases[0] == 0)

    @pytest.mark.parametrize("sizes", [[3, 0, 2], [5], [], [4, -1]])
    def test_bad_sizes_rejected(self, sizes):
        with pytest.raises(ConfigurationError):
            init_mlp(sizes, seed=0)


class TestForward:
    def test_zero_weights_logits_equal_bias(self):
        model = init_mlp([3, 4, 2], seed=0)
        model = replace(
            model,
            weights=tuple(np.zeros_like(w) for w in model.weights),
            biases=(np.zeros(4), np.array([0.3, -0.7])),
        )
        trace = forward(model, np.array([1.0, 2.0, 3.0]))
        assert np.allclose(trace.logits, [0.3, -0.7])

    def test_relu_definition(self):
        assert np.array_equal(np.maximum(np.array([-1.0, 0.0, 2.0]), 0.0), [0.0, 0.0, 2.0])
        # and through the network: a hidden pre-activation of [-1, 0, 2]
        model = init_mlp([3, 3, 2], seed=0)
        model = replace(model, weights=(np.eye(3), model.weights[1]), biases=(np.array([-1.0, 0.0, 2.0]), model.biases[1]))
        trace = forward(model, np.zeros(3))
        assert np.array_equal(trace.post_activations[0], [0.0, 0.0, 2.0])

    def test_stable_softmax_no_overflow(self):
        probs = softmax_rows(np.array([[1000.0, 0.0]]))[0]
        assert np.isfinite(probs).all()
        assert probs[0] == pytest.approx(1.0)
        assert probs[1] == pytest.approx(0.0, abs=1e-300)

    def test_softmax_sums_to_one(self):
        model = init_mlp([4, 8, 5], seed=3)
        trace = forward(model, np.ones(4))
        assert trace.probabilities.sum() == pytest.approx(1.0, abs=1e-9)
        assert len(trace.pre_activations) == len(model.weights)

    def test_dimension_mismatch(self):
        model = init_mlp([4, 8, 5], seed=3)
        with pytest.raises(ShapeError):
            forward(model, np.ones(5))

    def test_non_finite_input(self):
        model = init_mlp([4, 8, 5], seed=3)
        with pytest.raises(DataError):
            forward(model, np.array([1.0, np.nan, 0.0, 0.0]))

    @given(shift=st.floats(-50, 50), seed=st.integers(0, 10))
    @settings(max_examples=25, deadline=None)
    def test_softmax_shift_invariance(self, shift, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(1, 6))
        assert np.allclose(
            softmax_rows(logits), softmax_rows(logits + shift), atol=1e-9
        )


class TestEmbed:
    def test_layer_lengths(self):
        model = init_mlp([20, 150, 100, 50, 6], seed=7)
        assert embed(model, np.zeros(20), layer=1).shape == (150,)
        assert embed(model, np.zeros(20), layer=2).shape == (100,)
        assert embed(model, np.zeros(20), layer=3).shape == (50,)

    def test_out_of_range_layer(self):
        model = init_mlp([20, 150, 100, 50, 6], seed=7)
        for layer in (0, 4, 5):
            with pytest.raises(ConfigurationError):
                embed(model, np.zeros(20), layer=layer)

    def test_matches_forward_trace(self):
        model = init_mlp([5, 7, 6, 3], seed=2)
        x = np.linspace(-1, 1, 5)
        trace = forward(model, x)
        assert np.allclose(embed(model, x, 2), trace.post_activations[1])


class TestGradients:
    def test_matches_finite_differences_4_2_3(self):
        model = init_mlp([4, 2, 3], seed=11)
        rng = np.random.default_rng(11)
        X = rng.normal(size=(8, 4))
        y = rng.integers(0, 3, size=8)
        dW, db, _ = gradients(model, X, y)
        ndW, ndb = finite_difference_gradients(model, X, y)
        assert_gradients_close(dW, ndW)
        assert_gradients_close(db, ndb)

    def test_matches_finite_differences_after_training(self):
        # gradient check away from initialization, where ReLUs have moved
        model = init_mlp([3, 4, 2], seed=4)
        rng = np.random.default_rng(4)
        X = rng.normal(size=(10, 3))
        y = (X[:, 0] > 0).astype(int)
        model = train(model, X, y, TrainConfig(epochs=5, shuffle_seed=0)).model
        dW, db, _ = gradients(model, X, y)
        ndW, ndb = finite_difference_gradients(model, X, y)
        assert_gradients_close(dW, ndW)
        assert_gradients_close(db, ndb)

    def test_near_zero_at_perfect_prediction(self):
        model = init_mlp([2, 3, 2], seed=0)
        # saturate the correct logit
        W_out = np.array([[40.0, 0.0, 0.0], [-40.0, 0.0, 0.0]])
        model = replace(
            model,
            weights=(np.array([[10.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), W_out),
        )
        X = np.array([[1.0, 0.0]])
        dW, db, loss = gradients(model, X, np.array([0]))
        assert loss < 1e-10
        total = sum(np.abs(g).sum() for g in dW) + sum(np.abs(g).sum() for g in db)
        assert total < 1e-6

    def test_duplicated_batch_same_gradient(self):
        model = init_mlp([4, 3, 2], seed=9)
        rng = np.random.default_rng(9)
        X = rng.normal(size=(5, 4))
        y = rng.integers(0, 2, size=5)
        dW1, db1, _ = gradients(model, X, y)
        dW2, db2, _ = gradients(model, np.vstack([X, X]), np.concatenate([y, y]))
        for a, b in zip(dW1 + db1, dW2 + db2):
            assert np.allclose(a, b, atol=1e-12)

    def test_label_out_of_range(self):
        model = init_mlp([4, 3, 2], seed=9)
        with pytest.raises(DataError):
            gradients(model, np.zeros((1, 4)), np.array([2]))


class TestTrain:
    def _toy_data(self):
        rng = np.random.default_rng(1)
        X0 = rng.normal(size=(20, 2)) + [4, 0]
        X1 = rng.normal(size=(20, 2)) - [4, 0]
        X = np.vstack([X0, X1])
        y = np.array([0] * 20 + [1] * 20)
        return X, y

    def test_loss_decreases_on_separable_data(self):
        X, y = self._toy_data()
        model = init_mlp([2, 8, 2], seed=3)
        result = train(model, X, y, TrainConfig(epochs=200, shuffle_seed=0))
        assert result.epoch_losses[-1] < result.epoch_losses[0]
        assert len(result.epoch_losses) == 200

    def test_frozen_layers_bit_identical(self):
        X, y = self._toy_data()
        model = init_mlp([2, 8, 4, 2], seed=3)
        result = train(
            model, X, y, TrainConfig(epochs=20, shuffle_seed=0), FreezeSpec(frozenset({0, 1}))
        )
        for l in (0, 1):
            assert np.array_equal(model.weights[l], result.model.weights[l])
            assert np.array_equal(model.biases[l], result.model.biases[l])
        assert not np.array_equal(model.weights[2], result.model.weights[2])

    def test_deterministic(self):
        X, y = self._toy_data()
        model = init_mlp([2, 8, 2], seed=3)
        cfg = TrainConfig(epochs=15, shuffle_seed=42)
        a = train(model, X, y, cfg)
        b = train(model, X, y, cfg)
        for wa, wb in zip(a.model.weights, b.model.weights):
            assert np.array_equal(wa, wb)
        assert a.epoch_losses == b.epoch_losses

    def test_all_frozen_rejected(self):
        X, y = self._toy_data()
        model = init_mlp([2, 8, 2], seed=3)
        with pytest.raises(ConfigurationError):
            train(model, X, y, TrainConfig(epochs=1), FreezeSpec(frozenset({0, 1})))

    def test_empty_data_rejected(self):
        model = init_mlp([2, 8, 2], seed=3)
        with pytest.raises(DataError):
            train(model, np.zeros((0, 2)), np.zeros(0, dtype=int), TrainConfig(epochs=1))

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ConfigurationError):
            TrainConfig(adam_beta1=1.0)
        with pytest.raises(ConfigurationError):
            TrainConfig(adam_epsilon=0.0)


class TestExpandOutput:
    def test_preserves_existing_rows(self):
        model = init_mlp([20, 150, 100, 50, 6], seed=7)
        bigger = expand_output(model, k=1, seed=99)
        assert bigger.n_classes == 7
        assert np.array_equal(bigger.weights[-1][:6], model.weights[-1])
        assert np.array_equal(bigger.biases[-1][:6], model.biases[-1])
        assert np.all(bigger.biases[-1][6:] == 0)
        for l in range(3):
            assert np.array_equal(bigger.weights[l], model.weights[l])

    def test_k_zero_identity(self):
        model = init_mlp([4, 3, 2], seed=1)
        same = expand_output(model, k=0, seed=5)
        assert same.layer_sizes == model.layer_sizes
        for wa, wb in zip(same.weights, model.weights):
            assert np.array_equal(wa, wb)

    def test_k_three(self):
        model = init_mlp([20, 150, 100, 50, 6], seed=7)
        assert expand_output(model, k=3, seed=0).n_classes == 9

    def test_negative_k_rejected(self):
        model = init_mlp([4, 3, 2], seed=1)
        with pytest.raises(ConfigurationError):
            expand_output(model, k=-1, seed=0)


class TestPersistence:
    def test_round_trip_bit_identical(self, tmp_path):
        model = init_mlp([6, 10, 8, 3], seed=123)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.layer_sizes == model.layer_sizes
        assert loaded.seed == model.seed
        for wa, wb in zip(loaded.weights, model.weights):
            assert np.array_equal(wa, wb)
        x = np.linspace(-2, 2, 6)
        assert np.array_equal(
            forward(loaded, x).probabilities, forward(model, x).probabilities
        )

    def test_missing_file(self, tmp_path):
        with pytest.raises(RestoreError):
            load_model(tmp_path / "absent.json")

    def test_truncated_document(self):
        model = init_mlp([4, 3, 2], seed=1)
        text = model_to_document(model)
        with pytest.raises(RestoreError):
            model_from_document(text[: len(text) // 2])

    def test_shape_tampering_detected(self):
        model = init_mlp([4, 3, 2], seed=1)
        text = model_to_document(model).replace('"layer_sizes": [\n  4,', '"layer_sizes": [\n  5,')
        with pytest.raises(RestoreError):
            model_from_document(text)
