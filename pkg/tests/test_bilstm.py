import math

import numpy as np
import numpy.testing as npt
import pytest

import scalar_reference as ref
from cabxde.bilstm import (
    BiLstmNetwork,
    LstmCell,
    TemporalAttention,
    TrainConfig,
    bilstm_forward,
    clone,
    gradient_check,
    lstm_cell_step,
    predict,
    temporal_attention,
    train,
)
from cabxde.errors import ConfigError, ShapeError
from cabxde.ndcore import Rng


def small_config(**kw):
    base = dict(units=4, time_step=6, num_layers=2, batch_size=8, epochs=5, patience=2, dropout=0.0, seed=3)
    base.update(kw)
    return TrainConfig(**base)


def random_window(T=6, F=5, seed=0, batch=None):
    r = np.random.default_rng(seed)
    return r.random((T, F)) if batch is None else r.random((batch, T, F))


@pytest.mark.parametrize("gate", [True, False])
def test_zero_parameters_fixed_point(gate):
    cell = LstmCell(3, 4, rng=None, attention_gate=gate)
    h, c = lstm_cell_step(np.zeros(3), np.zeros(4), np.zeros(4), cell)
    npt.assert_array_equal(h, 0.0)
    npt.assert_array_equal(c, 0.0)
    # with every pre-activation zero: i = f = o = 0.5, g = 0
    c_prev = np.full((1, 4), 0.8)
    h, c = lstm_cell_step(np.ones((1, 3)), np.zeros((1, 4)), c_prev, cell)
    npt.assert_array_equal(c, 0.4)
    npt.assert_allclose(h, 0.5 * np.tanh(0.4), rtol=0, atol=1e-16)


def test_attention_gate_reads_only_cell_state():
    cell = LstmCell(3, 2, Rng(0), attention_gate=True)
    c_prev = np.array([[0.3, -0.7]])
    _, _, (_, f1, _, _) = cell.step(np.ones((1, 3)), np.zeros((1, 2)), c_prev)
    _, _, (_, f2, _, _) = cell.step(-np.ones((1, 3)), np.full((1, 2), 0.9), c_prev)
    npt.assert_array_equal(f1, f2)
    expected = 1.0 / (1.0 + np.exp(-(c_prev @ cell["W_a"] + cell["b_a"])))
    npt.assert_allclose(f1, expected, rtol=1e-15)


@pytest.mark.parametrize("gate", [True, False])
def test_cell_forward_matches_scalar_trace(gate):
    cell = LstmCell(3, 4, Rng(5), attention_gate=gate)
    for p in cell.params.values():
        if p.value.shape[0] == 1:
            p.value[...] = np.random.default_rng(1).normal(size=p.shape)
    X = random_window(T=7, F=3, seed=2)
    H, _ = cell.forward(X[None])
    expect = ref.run_cell(X.tolist(), ref.cell_params(cell), gate, 4)
    npt.assert_allclose(H[0], expect, rtol=0, atol=1e-13)


@pytest.mark.parametrize("gate", [True, False])
def test_network_prediction_matches_scalar_trace(gate):
    net = BiLstmNetwork(5, small_config(attention_gate=gate))
    net.head["b_out"].value[...] = 0.37
    X = random_window(seed=4)
    npt.assert_allclose(predict(net, X), ref.network_predict(net, X.tolist()), rtol=1e-12, atol=1e-14)


def test_hidden_sequence_shape_full_size():
    net = BiLstmNetwork(5, TrainConfig())
    H = bilstm_forward(random_window(T=99, seed=1), net)
    assert H.shape == (99, 198)


def test_time_reversal_single_mirrored_layer():
    cfg = small_config(num_layers=1)
    net = BiLstmNetwork(5, cfg)
    layer = net.layers[0]
    for name, p in layer.forward_cell.params.items():
        layer.backward_cell.params[name].value[...] = p.value
    X = random_window(seed=9)
    H = bilstm_forward(X, net)
    Hr = bilstm_forward(X[::-1], net)
    u = cfg.units
    npt.assert_allclose(Hr[:, :u], H[::-1, u:], atol=1e-14)
    npt.assert_allclose(Hr[:, u:], H[::-1, :u], atol=1e-14)


def test_input_shape_errors():
    net = BiLstmNetwork(5, small_config())
    with pytest.raises(ShapeError):
        net.predict(np.zeros((2, 6, 4)))
    with pytest.raises(ShapeError):
        net.predict(np.zeros(6))


def test_attention_uniform_on_identical_steps():
    att = TemporalAttention(6, 3, Rng(0))
    row = np.random.default_rng(0).normal(size=6)
    H = np.tile(row, (5, 1))
    ctx, alphas = temporal_attention(H, att)
    npt.assert_allclose(alphas, 0.2, rtol=0, atol=1e-15)
    npt.assert_allclose(ctx, row, rtol=0, atol=1e-14)


def test_attention_singleton_sequence():
    att = TemporalAttention(4, 3, Rng(1))
    H = np.random.default_rng(1).normal(size=(1, 4))
    ctx, alphas = temporal_attention(H, att)
    npt.assert_array_equal(alphas, [1.0])
    npt.assert_array_equal(ctx, H[0])


def test_attention_brute_force():
    att = TemporalAttention(4, 3, Rng(2))
    H = np.random.default_rng(2).normal(size=(6, 4))
    ctx, alphas = temporal_attention(H, att)
    W, b, v = (att.params[k].value for k in ("W_s", "b_s", "v_s"))
    scores = [float(np.tanh(h @ W + b[0]) @ v[:, 0]) for h in H]
    ex = [math.exp(s) for s in scores]
    expect_alpha = [e / sum(ex) for e in ex]
    npt.assert_allclose(alphas, expect_alpha, rtol=1e-13)
    npt.assert_allclose(ctx, sum(a * h for a, h in zip(expect_alpha, H)), rtol=1e-13)
    assert abs(alphas.sum() - 1.0) < 1e-14 and np.all(alphas > 0)


def test_zero_head_predicts_offset():
    net = BiLstmNetwork(5, small_config())
    net.head["W_out"].value[...] = 0.0
    net.head["b_out"].value[...] = 1.234
    npt.assert_array_equal(net.predict(random_window(seed=3, batch=4)), 1.234)


def test_parameter_count_reduction():
    for units, n_in in ((4, 5), (99, 5)):
        cfg = dict(units=units, time_step=6, epochs=2, patience=1)
        with_gate = BiLstmNetwork(n_in, TrainConfig(attention_gate=True, **cfg)).num_parameters()
        plain = BiLstmNetwork(n_in, TrainConfig(attention_gate=False, **cfg)).num_parameters()
        # per cell the gate trades W_xf (n_in x u) for nothing: W_hf and W_a are both u x u
        saved = 2 * n_in * units + 2 * (2 * units) * units
        assert plain - with_gate == saved


@pytest.mark.parametrize("gate", [True, False])
def test_gradient_check(gate):
    net = BiLstmNetwork(5, small_config(attention_gate=gate))
    X = random_window(seed=7, batch=3)
    y = np.array([0.2, 0.7, 0.4])
    assert gradient_check(net, X, y) < 1e-4


def test_gradients_vanish_at_zero_residual():
    net = BiLstmNetwork(5, small_config())
    X = random_window(seed=8, batch=3)
    y = net.predict(X)
    net.zero_grad()
    loss = net.loss_and_grad(X, y)
    assert loss == 0.0
    assert max(np.abs(p.grad).max() for p in net.parameters()) < 1e-12


def test_gradients_accumulate_until_reset():
    net = BiLstmNetwork(5, small_config())
    X = random_window(seed=8, batch=2)
    y = np.array([0.1, 0.9])
    net.zero_grad()
    net.loss_and_grad(X, y)
    once = [p.grad.copy() for p in net.parameters()]
    net.loss_and_grad(X, y)
    for g1, p in zip(once, net.parameters()):
        npt.assert_allclose(p.grad, 2 * g1, rtol=1e-12, atol=1e-300)


def test_constant_series_is_learned():
    # a flat series gives identical windows and a constant target
    cfg = TrainConfig(units=4, time_step=6, epochs=64, patience=64, seed=3)
    net = BiLstmNetwork(5, cfg)
    X = np.full((128, 6, 5), 0.5)
    y = np.full(128, 0.5)
    train(net, X, y, X[:8], y[:8])
    assert net.loss(X, y) < 1e-6


def test_patience_zero_rejected():
    with pytest.raises(ConfigError):
        BiLstmNetwork(5, small_config(patience=0))
    with pytest.raises(ConfigError):
        small_config(dropout=1.0).validate()


def test_training_is_deterministic():
    X = random_window(seed=12, batch=20)
    y = X[:, -1, -1]
    preds = []
    for _ in range(2):
        net = BiLstmNetwork(5, small_config(dropout=0.2, epochs=4))
        train(net, X[:16], y[:16], X[16:], y[16:])
        preds.append(net.predict(X))
    npt.assert_array_equal(preds[0], preds[1])


def test_early_stopping_restores_best():
    X = random_window(seed=13, batch=40)
    y = X[:, -1, -1]
    net = BiLstmNetwork(5, small_config(epochs=30, patience=3, learning_rate=0.05))
    res = train(net, X[:30], y[:30], X[30:], y[30:])
    val = [h["val_loss"] for h in res.history]
    assert res.best_val_loss == min(val)
    assert val[res.best_epoch - 1] == min(val)
    assert net.loss(X[30:], y[30:]) == pytest.approx(min(val), rel=1e-12)
    if res.stopped_early:
        assert len(val) - res.best_epoch == 3


def test_dict_round_trip_and_clone():
    net = BiLstmNetwork(5, small_config())
    X = random_window(seed=14, batch=5)
    again = BiLstmNetwork.from_dict(net.to_dict())
    npt.assert_array_equal(again.predict(X), net.predict(X))
    twin = clone(net)
    twin.head["b_out"].value[...] += 1.0
    assert not np.array_equal(twin.predict(X), net.predict(X))
