import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as strat

from feeder_nilm.model import (
    TrainConfig,
    count_from_output,
    epoch_order,
    forward,
    forward_batch,
    init_params,
    loss_and_gradient,
    predict_count,
    run_epochs,
    train,
)


def zero_params(layer_sizes):
    params = init_params(layer_sizes, seed=0)
    for w in params.weights:
        w[:] = 0.0
    return params


def full_loss(params, X, y, l2):
    return loss_and_gradient(params, X, y, l2)[0]


def finite_difference_check(params, X, y, l2, eps=1e-6, tol=1e-4):
    """Central-difference oracle over every weight and bias coordinate."""
    _, grad_w, grad_b = loss_and_gradient(params, X, y, l2)
    for arrays, grads in ((params.weights, grad_w), (params.biases, grad_b)):
        for arr, grad in zip(arrays, grads):
            flat = arr.reshape(-1)
            flat_grad = grad.reshape(-1)
            for idx in range(flat.size):
                original = flat[idx]
                flat[idx] = original + eps
                up = full_loss(params, X, y, l2)
                flat[idx] = original - eps
                down = full_loss(params, X, y, l2)
                flat[idx] = original
                numeric = (up - down) / (2.0 * eps)
                analytic = flat_grad[idx]
                denom = max(abs(numeric), abs(analytic), 1e-8)
                assert abs(numeric - analytic) / denom < tol, (
                    f"coordinate {idx}: analytic {analytic}, numeric {numeric}"
                )


class TestInit:
    def test_deterministic(self):
        a = init_params((4, 8, 1), seed=3)
        b = init_params((4, 8, 1), seed=3)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_biases_zero(self):
        params = init_params((4, 8, 1), seed=3)
        assert all(not b.any() for b in params.biases)

    def test_weight_mean_statistics(self):
        # Statistical oracle: mean of uniform(-a, a) draws lies within 3 sigma of 0.
        params = init_params((300, 350, 1), seed=5)
        draws = params.weights[0].reshape(-1)
        assert draws.size >= 100_000
        bound = math.sqrt(6.0 / (300 + 350))
        sigma_mean = bound / math.sqrt(3.0 * draws.size)
        assert abs(draws.mean()) < 3.0 * sigma_mean

    def test_output_size_must_be_one(self):
        with pytest.raises(ValueError):
            init_params((4, 8, 2), seed=0)


class TestForward:
    def test_all_zero_network_gives_ln2(self):
        params = zero_params((3, 4, 1))
        assert forward(params, np.zeros(3)) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_hand_computed_1_1_1(self):
        # x=1 -> z1 = 2*1 + 0.5 = 2.5 -> relu -> z2 = -1.5*2.5 + 0.3 = -3.45
        params = zero_params((1, 1, 1))
        params.weights[0][0, 0] = 2.0
        params.biases[0][0] = 0.5
        params.weights[1][0, 0] = -1.5
        params.biases[1][0] = 0.3
        expected = math.log1p(math.exp(-3.45))
        assert forward(params, np.array([1.0])) == pytest.approx(expected, abs=1e-12)

    @given(
        seed=strat.integers(min_value=0, max_value=1000),
        x=strat.lists(strat.floats(min_value=-50, max_value=50), min_size=3, max_size=3),
    )
    @settings(max_examples=50, deadline=None)
    def test_output_non_negative(self, seed, x):
        params = init_params((3, 6, 1), seed=seed)
        assert forward(params, np.asarray(x)) >= 0.0

    def test_dimension_mismatch(self):
        params = init_params((3, 4, 1), seed=0)
        with pytest.raises(ValueError):
            forward(params, np.zeros(5))


class TestLossAndGradient:
    def test_perfect_predictions_zero_loss_zero_grad(self):
        params = init_params((2, 5, 1), seed=9)
        rng = np.random.default_rng(0)
        X = rng.normal(0, 1, (6, 2))
        y = forward_batch(params, X)  # residuals exactly zero
        loss, grad_w, grad_b = loss_and_gradient(params, X, y, l2=0.0)
        assert loss == 0.0
        assert all(not g.any() for g in grad_w)
        assert all(not g.any() for g in grad_b)

    def test_l2_only_gradient_is_exactly_l2_times_weights(self):
        params = init_params((2, 5, 1), seed=9)
        rng = np.random.default_rng(0)
        X = rng.normal(0, 1, (6, 2))
        y = forward_batch(params, X)
        l2 = 0.37
        _, grad_w, _ = loss_and_gradient(params, X, y, l2=l2)
        for g, w in zip(grad_w, params.weights):
            assert np.array_equal(g, l2 * w)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        params = init_params((3, 5, 4, 1), seed=12)
        for b in params.biases:
            # Keep pre-activations off the rectifier kink, where the
            # finite-difference oracle is invalid.
            b[:] = rng.normal(0.0, 0.5, b.shape)
        X = rng.normal(0, 1, (7, 3))
        y = rng.integers(0, 4, 7).astype(float)
        finite_difference_check(params, X, y, l2=0.01)

    def test_empty_batch_rejected(self):
        params = init_params((2, 3, 1), seed=0)
        with pytest.raises(ValueError):
            loss_and_gradient(params, np.zeros((0, 2)), np.zeros(0))


class TestTrain:
    def make_data(self, n=20, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.normal(0, 1, (n, 3))
        y = np.clip(np.round(X[:, 0] + 2.0), 0, None)
        return X, y

    def test_overfit_single_sample(self):
        X = np.array([[0.5, -0.2, 1.0]])
        y = np.array([2.0])
        params = init_params((3, 8, 1), seed=1)
        config = TrainConfig(learning_rate=0.05, batch_size=1, epochs=3000, patience=3000)
        fitted, history = train(params, (X, y), (X, y), config)
        assert full_loss(fitted, X, y, 0.0) < 1e-3

    def test_zero_learning_rate_leaves_params_untouched(self):
        X, y = self.make_data()
        params = init_params((3, 6, 1), seed=2)
        config = TrainConfig(learning_rate=0.0, epochs=5, patience=100)
        fitted, _ = train(params, (X, y), (X, y), config)
        for w_new, w_old in zip(fitted.weights, params.weights):
            assert np.array_equal(w_new, w_old)
        for b_new, b_old in zip(fitted.biases, params.biases):
            assert np.array_equal(b_new, b_old)

    def test_training_determinism(self):
        X, y = self.make_data()
        config = TrainConfig(learning_rate=0.02, epochs=40, shuffle_seed=5, patience=100)
        fitted_a, history_a = train(init_params((3, 6, 1), seed=2), (X, y), (X, y), config)
        fitted_b, history_b = train(init_params((3, 6, 1), seed=2), (X, y), (X, y), config)
        assert history_a == history_b
        for wa, wb in zip(fitted_a.weights, fitted_b.weights):
            assert np.array_equal(wa, wb)

    def test_batching_follows_index_sequence_not_storage(self):
        # Presenting identical example sequences from permuted storage
        # must produce identical parameters.
        X, y = self.make_data(n=12)
        config = TrainConfig(learning_rate=0.03, batch_size=4, epochs=3, patience=100)
        rng = np.random.default_rng(7)
        orders = [rng.permutation(12) for _ in range(3)]
        storage_perm = np.random.default_rng(8).permutation(12)
        inverse = np.argsort(storage_perm)
        fitted_a, _ = run_epochs(
            init_params((3, 6, 1), seed=4), (X, y), (X, y), config, orders
        )
        fitted_b, _ = run_epochs(
            init_params((3, 6, 1), seed=4),
            (X[storage_perm], y[storage_perm]),
            (X, y),
            config,
            [inverse[o] for o in orders],
        )
        for wa, wb in zip(fitted_a.weights, fitted_b.weights):
            assert np.array_equal(wa, wb)

    def test_returns_best_validation_params(self):
        X, y = self.make_data(n=30, seed=3)
        X_val, y_val = self.make_data(n=10, seed=4)
        config = TrainConfig(learning_rate=0.05, epochs=60, patience=10)
        fitted, history = train(init_params((3, 6, 1), seed=5), (X, y), (X_val, y_val), config)
        best_recorded = min(h[2] for h in history)
        from feeder_nilm.model import _data_loss

        assert _data_loss(fitted, X_val, y_val) <= best_recorded + 1e-12

    def test_empty_split_rejected(self):
        params = init_params((3, 6, 1), seed=0)
        X, y = self.make_data()
        with pytest.raises(ValueError):
            train(params, (np.zeros((0, 3)), np.zeros(0)), (X, y), TrainConfig())

    def test_epoch_order_is_permutation(self):
        order = epoch_order(50, np.random.default_rng(0))
        assert sorted(order) == list(range(50))


class TestPredictCount:
    def test_rounding_rule(self):
        assert count_from_output(0.49) == 0
        assert count_from_output(0.50) == 1
        assert count_from_output(3.2) == 3

    def test_zero_network_predicts_one(self):
        # forward = ln 2 ~ 0.693, rounds up to 1.
        params = zero_params((2, 3, 1))
        assert predict_count(params, np.zeros(2)) == 1
