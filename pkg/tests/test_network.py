import json
import math

import numpy as np
import pytest

from metric_grouper.composition import AttentionParams
from metric_grouper.corpus import WordVectorTable
from metric_grouper.errors import DimensionMismatchError, DivergenceError
from metric_grouper.network import (
    MetricNetwork,
    TrainConfig,
    compose_backward,
    interior_dims,
    load_model,
    objective,
    pair_gradients,
    pair_loss,
    regularizer,
    save_model,
    softplus,
    train,
)
from metric_grouper.pairs import AspectSample, SamplePair

CFG = TrainConfig(dropout_rate=0.0)


def linear_net(w, dropout=0.0):
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return MetricNetwork([w], [np.zeros(w.shape[0])], activation="identity",
                         dropout_rate=dropout, composition_mode="avg")


class TestForward:
    def test_identity_network(self):
        net = linear_net(np.eye(3))
        x = np.array([1.0, -2.0, 0.5])
        h, _ = net.forward(x)
        assert np.array_equal(h, x)

    def test_zero_weights_tanh(self):
        net = MetricNetwork([np.zeros((2, 3))], [np.zeros(2)], activation="tanh",
                            dropout_rate=0.0, composition_mode="avg")
        h, _ = net.forward(np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(h, np.zeros(2))

    def test_scalar_tanh(self):
        net = MetricNetwork([np.array([[2.0]])], [np.array([0.5])], activation="tanh",
                            dropout_rate=0.0, composition_mode="ap")
        h, _ = net.forward(np.array([1.0]))
        assert h[0] == pytest.approx(math.tanh(2.5))
        assert h[0] == pytest.approx(0.98661, abs=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            linear_net(np.eye(3)).forward(np.ones(4))

    def test_layer_chain_validation(self):
        with pytest.raises(DimensionMismatchError):
            MetricNetwork([np.ones((4, 3)), np.ones((2, 5))],
                          [np.zeros(4), np.zeros(2)])

    def test_dropout_rate_zero_equals_eval(self):
        net = MetricNetwork.create(3, mode="avg", output_dim=2, n_layers=3,
                                   seed=0, dropout_rate=0.0)
        x = np.arange(6.0)
        rng = np.random.default_rng(1)
        h_train, _ = net.forward(x, rng=rng)
        h_eval, _ = net.forward(x)
        assert np.array_equal(h_train, h_eval)

    def test_dropout_masks_differ_between_passes(self):
        net = MetricNetwork.create(3, mode="avg", output_dim=2, n_layers=3,
                                   seed=0, dropout_rate=0.5)
        x = np.arange(6.0)
        rng = np.random.default_rng(1)
        h1, cache1 = net.forward(x, rng=rng)
        h2, cache2 = net.forward(x, rng=rng)
        assert not np.array_equal(cache1["masks"][0], cache2["masks"][0])
        # eval forward never applies masks
        h_eval, cache = net.forward(x)
        assert all(m is None for m in cache["masks"])

    def test_inverted_dropout_scale(self):
        net = MetricNetwork.create(4, mode="avg", output_dim=3, n_layers=2,
                                   seed=0, dropout_rate=0.5)
        rng = np.random.default_rng(2)
        _, cache = net.forward(np.ones(8), rng=rng)
        mask = cache["masks"][0]
        assert set(np.unique(mask)) <= {0.0, 2.0}


class TestDistance:
    def test_identical_inputs(self):
        net = MetricNetwork.create(3, mode="avg", output_dim=4, n_layers=3, seed=1)
        x = np.random.default_rng(0).normal(size=6)
        assert net.distance_sq(x, x) == 0.0

    def test_identity_unit_basis(self):
        net = linear_net(np.eye(4))
        x_i = np.array([1.0, 0.0, 0.0, 0.0])
        x_j = np.array([0.0, 1.0, 0.0, 0.0])
        assert net.distance_sq(x_i, x_j) == pytest.approx(2.0)

    def test_mahalanobis_equivalence(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            w = rng.normal(size=(3, 6))
            net = linear_net(w)
            x_i, x_j = rng.normal(size=6), rng.normal(size=6)
            diff = x_i - x_j
            expected = float(diff @ (w.T @ w) @ diff)
            assert net.distance_sq(x_i, x_j) == pytest.approx(expected, abs=1e-9)

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(6)
        net = MetricNetwork.create(4, mode="avg", output_dim=3, n_layers=2, seed=2)
        for _ in range(20):
            x_i, x_j = rng.normal(size=8), rng.normal(size=8)
            d = net.distance_sq(x_i, x_j)
            assert d >= 0
            assert d == pytest.approx(net.distance_sq(x_j, x_i))


class TestPairLoss:
    def test_satisfied_positive(self):
        net = linear_net(np.zeros((2, 4)))  # d2 is always 0
        loss, omega = pair_loss(net, np.ones(4), np.zeros(4), 1, CFG)
        assert omega == pytest.approx(-2.0)
        assert loss == pytest.approx(0.5 * softplus(-2.0, CFG.beta))

    def test_softplus_at_zero(self):
        for beta in (1.0, 2.0, 7.5):
            assert softplus(0.0, beta) == pytest.approx(math.log(2.0) / beta)

    def test_hinge_envelope_bound(self):
        beta = 20.0
        omega = 1.5
        assert abs(softplus(omega, beta) - max(0.0, omega)) <= math.log(2.0) / beta

    def test_invalid_label(self):
        net = linear_net(np.eye(2))
        with pytest.raises(ValueError):
            pair_loss(net, np.ones(2), np.zeros(2), 0, CFG)

    def test_overflow_safe(self):
        assert softplus(1e4, 20.0) == pytest.approx(1e4)
        assert softplus(-1e4, 20.0) == 0.0


class TestObjective:
    def test_vanishing_pair_leaves_regularizer(self):
        rng = np.random.default_rng(7)
        net = linear_net(rng.normal(size=(2, 3)))
        cfg = TrainConfig(reg_lambda=0.01, dropout_rate=0.0)
        # identical inputs with label -1: omega = 1 + t, still finite; use
        # a positive pair at distance 0 so omega = -2 and beta large
        sharp = TrainConfig(beta=400.0, reg_lambda=0.01, dropout_rate=0.0)
        x = rng.normal(size=3)
        total = objective(net, [(x, x, 1)], sharp)
        assert total == pytest.approx(regularizer(net, sharp))
        assert regularizer(net, cfg) > 0

    def test_matches_independent_scalar_recomputation(self):
        rng = np.random.default_rng(8)
        net = MetricNetwork.create(2, mode="avg", output_dim=2, n_layers=2, seed=3,
                                   dropout_rate=0.0)
        pairs = [(rng.normal(size=4), rng.normal(size=4), 1),
                 (rng.normal(size=4), rng.normal(size=4), -1)]
        total = objective(net, pairs, CFG)
        # plain-python recomputation
        expected = 0.0
        for x_i, x_j, label in pairs:
            h_i, _ = net.forward(x_i)
            h_j, _ = net.forward(x_j)
            d2 = sum((a - b) ** 2 for a, b in zip(h_i, h_j))
            omega = 1.0 - label * (CFG.margin_t - d2)
            expected += 0.5 * (math.log1p(math.exp(CFG.beta * omega)) / CFG.beta)
        for w, b in zip(net.weights, net.biases):
            expected += 0.5 * CFG.reg_lambda * (float((w * w).sum()) + float((b * b).sum()))
        assert total == pytest.approx(expected, abs=1e-12)

    def test_pair_order_invariance(self):
        rng = np.random.default_rng(9)
        net = MetricNetwork.create(2, mode="avg", output_dim=2, n_layers=1, seed=4,
                                   dropout_rate=0.0)
        pairs = [(rng.normal(size=4), rng.normal(size=4), (-1) ** i) for i in range(6)]
        assert objective(net, pairs, CFG) == pytest.approx(
            objective(net, pairs[::-1], CFG), abs=1e-12)


def fd_gradients(net, x_i, x_j, label, cfg, h=1e-5):
    """Central finite differences over every weight and bias entry."""
    out_w, out_b = [], []
    for m in range(net.n_layers):
        for arrs, out in ((net.weights, out_w), (net.biases, out_b)):
            arr = arrs[m]
            fd = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                up, _ = pair_loss(net, x_i, x_j, label, cfg)
                arr[idx] = orig - h
                down, _ = pair_loss(net, x_i, x_j, label, cfg)
                arr[idx] = orig
                fd[idx] = (up - down) / (2 * h)
            out.append(fd)
    return out_w, out_b


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


class TestGradients:
    def test_flat_region_gives_zero_gradients(self):
        net = MetricNetwork.create(2, mode="avg", output_dim=2, n_layers=2, seed=5,
                                   dropout_rate=0.0)
        cfg = TrainConfig(beta=50.0, dropout_rate=0.0)
        x = np.random.default_rng(1).normal(size=4)
        # same input, positive label: omega = -2, sigmoid(-100) ~ 0
        grads = pair_gradients(net, x, x, 1, cfg)
        for g in grads["weights"] + grads["biases"]:
            assert np.abs(g).max() < 1e-8

    def test_identical_inputs_have_zero_distance_gradient(self):
        net = MetricNetwork.create(2, mode="avg", output_dim=3, n_layers=2, seed=6,
                                   dropout_rate=0.0)
        x = np.random.default_rng(2).normal(size=4)
        grads = pair_gradients(net, x, x, 1, CFG)
        for g in grads["weights"] + grads["biases"]:
            assert np.abs(g).max() == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        layers = int(rng.integers(1, 4))
        net = MetricNetwork.create(2, mode="avg", output_dim=2, n_layers=layers,
                                   seed=seed, dropout_rate=0.0)
        x_i, x_j = rng.normal(size=4), rng.normal(size=4)
        label = 1 if rng.random() < 0.5 else -1
        grads = pair_gradients(net, x_i, x_j, label, CFG)
        fd_w, fd_b = fd_gradients(net, x_i, x_j, label, CFG)
        for got, want in zip(grads["weights"] + grads["biases"], fd_w + fd_b):
            assert rel_err(got, want) < 1e-4

    def test_gradients_use_dropout_masks(self):
        net = MetricNetwork.create(3, mode="avg", output_dim=2, n_layers=3, seed=7,
                                   dropout_rate=0.5)
        rng = np.random.default_rng(3)
        x_i, x_j = rng.normal(size=6), rng.normal(size=6)
        cfg = TrainConfig(dropout_rate=0.5)
        g1 = pair_gradients(net, x_i, x_j, 1, cfg, rng=np.random.default_rng(10))
        g2 = pair_gradients(net, x_i, x_j, 1, cfg, rng=np.random.default_rng(11))
        assert any(not np.array_equal(a, b)
                   for a, b in zip(g1["weights"], g2["weights"]))


class TestComposeBackward:
    @pytest.mark.parametrize("mode", ["attention", "avg", "min", "max"])
    def test_matches_finite_differences(self, mode):
        from metric_grouper.composition import compose_vectors

        rng = np.random.default_rng(12)
        d = 3
        net = MetricNetwork.create(d, mode=mode, output_dim=2, n_layers=2,
                                   seed=8, dropout_rate=0.0)
        net.attention = AttentionParams(rng.normal(size=2 * d) * 0.5)
        ctx_i, ctx_j = rng.normal(size=(4, d)), rng.normal(size=(3, d))
        p_i, p_j = rng.normal(size=d), rng.normal(size=d)

        def loss():
            a = compose_vectors(ctx_i, p_i, net.attention, mode)
            b = compose_vectors(ctx_j, p_j, net.attention, mode)
            value, _ = pair_loss(net, a.x, b.x, -1, CFG)
            return value

        a = compose_vectors(ctx_i, p_i, net.attention, mode)
        b = compose_vectors(ctx_j, p_j, net.attention, mode)
        grads = pair_gradients(net, a.x, b.x, -1, CFG)
        g_ctx_i, g_p_i, g_wa_i = compose_backward(
            mode, ctx_i, p_i, a.attention_weights, net.attention.w_a, grads["x_i"])
        g_ctx_j, g_p_j, g_wa_j = compose_backward(
            mode, ctx_j, p_j, b.attention_weights, net.attention.w_a, grads["x_j"])

        step = 1e-6

        def fd(arr):
            out = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + step
                up = loss()
                arr[idx] = orig - step
                down = loss()
                arr[idx] = orig
                out[idx] = (up - down) / (2 * step)
            return out

        assert rel_err(g_ctx_i, fd(ctx_i)) < 1e-4
        assert rel_err(g_p_j, fd(p_j)) < 1e-4
        if mode == "attention":
            assert rel_err(g_wa_i + g_wa_j, fd(net.attention.w_a)) < 1e-4

    def test_attention_phrase_half_gets_zero_gradient(self):
        # the p term shifts every score equally, so softmax blocks it
        rng = np.random.default_rng(13)
        d = 4
        from metric_grouper.composition import compose_vectors

        params = AttentionParams(rng.normal(size=2 * d))
        ctx, p = rng.normal(size=(5, d)), rng.normal(size=d)
        comp = compose_vectors(ctx, p, params, "attention")
        _, _, g_wa = compose_backward(
            "attention", ctx, p, comp.attention_weights, params.w_a,
            rng.normal(size=2 * d))
        assert np.abs(g_wa[d:]).max() < 1e-12


def toy_training_setup():
    table = WordVectorTable(2, {
        "picture": np.array([1.0, 0.2]),
        "sound": np.array([-0.9, 0.1]),
        "clear": np.array([0.8, 0.9]),
        "loud": np.array([-0.7, -0.8]),
        "the": np.array([0.05, -0.03]),
    })
    def sample(phrase, ctx, sid):
        return AspectSample(phrase, ctx, (sid,))
    s = [
        sample("picture", ("the", "picture", "clear"), 0),
        sample("picture", ("picture", "clear", "clear"), 1),
        sample("sound", ("the", "sound", "loud"), 2),
        sample("sound", ("sound", "loud", "the"), 3),
    ]
    pairs = [
        SamplePair(s[0], s[1], 1),
        SamplePair(s[2], s[3], 1),
        SamplePair(s[0], s[2], -1),
        SamplePair(s[1], s[3], -1),
    ]
    return table, pairs


class TestTrain:
    def test_zero_learning_rate_keeps_parameters(self):
        table, pairs = toy_training_setup()
        cfg = TrainConfig(learning_rate=0.0, epochs=3, dropout_rate=0.0)
        net = MetricNetwork.create(2, mode="attention", output_dim=2, n_layers=2, seed=9,
                                   dropout_rate=0.0)
        before = [w.copy() for w in net.weights] + [net.attention.w_a.copy()]
        train(net, pairs, table, cfg, mode="attention")
        after = net.weights + [net.attention.w_a]
        for b, a in zip(before, after):
            assert np.array_equal(b, a)

    def test_same_seed_bitwise_identical_history(self):
        table, pairs = toy_training_setup()
        runs = []
        for _ in range(2):
            cfg = TrainConfig(epochs=5, seed=21)
            net = MetricNetwork.create(2, mode="attention", output_dim=2, n_layers=3,
                                       seed=21, dropout_rate=0.5)
            _, history = train(net, pairs, table, cfg, mode="attention")
            runs.append(history)
        assert runs[0] == runs[1]

    def test_objective_decreases_on_separable_data(self):
        table, pairs = toy_training_setup()
        cfg = TrainConfig(epochs=15, seed=3, dropout_rate=0.0)
        net = MetricNetwork.create(2, mode="attention", output_dim=2, n_layers=2, seed=3,
                                   dropout_rate=0.0)
        _, history = train(net, pairs, table, cfg, mode="attention")
        assert history[-1] < history[0]

    def test_divergence_reports_epoch_and_pair(self):
        table, pairs = toy_training_setup()
        # the runaway weight-decay factor (1 - lr*lambda) overflows the
        # weights within a few steps at this rate
        cfg = TrainConfig(learning_rate=1e155, epochs=2, seed=0, dropout_rate=0.0)
        net = MetricNetwork.create(2, mode="avg", output_dim=2, n_layers=2, seed=0,
                                   dropout_rate=0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergenceError, match=r"epoch \d+, pair index \d+"):
                train(net, pairs, table, cfg, mode="avg")

    def test_finetuned_embeddings_are_returned(self):
        table, pairs = toy_training_setup()
        cfg = TrainConfig(epochs=3, seed=5, dropout_rate=0.0, finetune_embeddings=True)
        net = MetricNetwork.create(2, mode="attention", output_dim=2, n_layers=2, seed=5,
                                   dropout_rate=0.0)
        train(net, pairs, table, cfg, mode="attention")
        assert hasattr(net, "tuned_vectors")
        moved = sum(1 for t, v in net.tuned_vectors.items()
                    if not np.array_equal(v, table.vectors[t]))
        assert moved > 0
        # the source table itself must stay untouched
        assert np.array_equal(table.vectors["picture"], [1.0, 0.2])

    def test_attention_parameter_moves_when_tuned(self):
        table, pairs = toy_training_setup()
        cfg = TrainConfig(epochs=5, seed=2, dropout_rate=0.0, finetune_attention=True)
        net = MetricNetwork.create(2, mode="attention", output_dim=2, n_layers=2, seed=2,
                                   dropout_rate=0.0)
        train(net, pairs, table, cfg, mode="attention")
        assert np.abs(net.attention.w_a[:2]).max() > 0
        # phrase half never receives gradient
        assert np.abs(net.attention.w_a[2:]).max() < 1e-12


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        net = MetricNetwork.create(3, mode="attention", output_dim=2, n_layers=3, seed=11,
                                   dropout_rate=0.5)
        net.attention = AttentionParams(np.random.default_rng(0).normal(size=6))
        path = str(tmp_path / "model.json")
        save_model(net, path, config_hash="abc123", extra={"loss_history": [0.5, 0.25]})
        loaded, meta = load_model(path)
        for w1, w2 in zip(net.weights, loaded.weights):
            assert w1.tobytes() == w2.tobytes()
        for b1, b2 in zip(net.biases, loaded.biases):
            assert b1.tobytes() == b2.tobytes()
        assert net.attention.w_a.tobytes() == loaded.attention.w_a.tobytes()
        assert loaded.activation == net.activation
        assert loaded.dropout_rate == net.dropout_rate
        assert loaded.composition_mode == net.composition_mode
        assert meta["config_hash"] == "abc123"
        assert meta["loss_history"] == [0.5, 0.25]

    def test_malformed_checkpoint(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"format_version": 1}), encoding="utf-8")
        from metric_grouper.errors import FormatError

        with pytest.raises(FormatError):
            load_model(str(path))


class TestTrainConfig:
    def test_margin_must_exceed_one(self):
        with pytest.raises(ValueError):
            TrainConfig(margin_t=1.0)

    def test_beta_positive(self):
        with pytest.raises(ValueError):
            TrainConfig(beta=0.0)

    def test_dropout_range(self):
        with pytest.raises(ValueError):
            TrainConfig(dropout_rate=1.0)

    def test_lambda_nonnegative(self):
        with pytest.raises(ValueError):
            TrainConfig(reg_lambda=-0.1)


class TestDims:
    def test_geometric_interpolation_matches_reference_shape(self):
        assert interior_dims(400, 50, 3) == [200, 100]
        assert interior_dims(16, 8, 3) == [13, 10]
        assert interior_dims(10, 5, 1) == []

    def test_create_glorot_bounds(self):
        net = MetricNetwork.create(100, mode="attention", output_dim=50, n_layers=3, seed=0)
        assert net.input_dim == 200
        assert [w.shape for w in net.weights] == [(126, 200), (79, 126), (50, 79)]
        limit = math.sqrt(6.0 / (200 + 126))
        assert np.abs(net.weights[0]).max() <= limit
        assert all(np.array_equal(b, np.zeros_like(b)) for b in net.biases)
        assert np.array_equal(net.attention.w_a, np.zeros(200))
