import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchorlstm import autodiff as ad
from anchorlstm.exceptions import ConfigError, InputError, ShapeError
from anchorlstm.lstm import (
    GATES,
    GateBlock,
    NetworkConfig,
    block_of,
    forward,
    init_params,
    lstm_cell_step,
    param_shapes,
    sample_dropout_mask,
    zero_params,
)


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_step(x, h, c, p):
    """Loop-per-unit evaluation of the six gate equations."""
    H = len(h)
    out_h, out_c = [0.0] * H, [0.0] * H
    for j in range(H):
        pre = {}
        for g in GATES:
            s = p[f"b_{g}"][j] + p[f"b_h{g}"][j]
            for k in range(len(x)):
                s += p[f"W_x{g}"][j][k] * x[k]
            for k in range(H):
                s += p[f"W_h{g}"][j][k] * h[k]
            pre[g] = s
        i, f, o = _sig(pre["i"]), _sig(pre["f"]), _sig(pre["o"])
        cand = math.tanh(pre["c"])
        out_c[j] = f * c[j] + i * cand
        out_h[j] = o * math.tanh(out_c[j])
    return out_h, out_c


def scalar_forward(window, params, config):
    seq = [list(row) for row in window]
    for layer in range(config.num_layers):
        p = {k.split(".", 1)[1]: v.tolist() for k, v in params.items() if k.startswith(f"l{layer}.")}
        h = [0.0] * config.hidden_dim
        c = [0.0] * config.hidden_dim
        nxt = []
        for x in seq:
            h, c = scalar_step(x, h, c, p)
            nxt.append(h)
        seq = nxt
    W, b = params["head.W"], params["head.b"]
    return [b[r] + sum(W[r][k] * seq[-1][k] for k in range(config.hidden_dim)) for r in range(len(b))]


def _layer(params, layer=0):
    prefix = f"l{layer}."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def test_gate_blocks_cover_every_parameter_once():
    cfg = NetworkConfig(input_dim=3, num_layers=2, hidden_dim=4)
    assert len(GateBlock) == 5
    counts = {b: 0 for b in GateBlock}
    for name in param_shapes(cfg):
        counts[block_of(name)] += 1
    assert counts[GateBlock.HEAD] == 2
    for b in (GateBlock.INPUT, GateBlock.FORGET, GateBlock.OUTPUT, GateBlock.CANDIDATE):
        assert counts[b] == 2 * 4


def test_config_validation():
    with pytest.raises(ConfigError):
        NetworkConfig(input_dim=2, num_layers=0)
    with pytest.raises(ConfigError):
        NetworkConfig(input_dim=2, dropout_rate=1.0)
    with pytest.raises(ConfigError):
        NetworkConfig(input_dim=2, head="gauss")


def test_zero_params_cell_halves_state():
    cfg = NetworkConfig(input_dim=2, num_layers=1, hidden_dim=3)
    p = _layer(zero_params(cfg))
    c_prev = np.array([[0.4, -1.0, 2.0]])
    h, c = lstm_cell_step(np.array([[0.3, 0.9]]), np.zeros((1, 3)), c_prev, p)
    np.testing.assert_allclose(c.value, 0.5 * c_prev, atol=1e-15)
    np.testing.assert_allclose(h.value, 0.5 * np.tanh(0.5 * c_prev), atol=1e-15)


def test_zero_candidate_and_state_gives_zero():
    cfg = NetworkConfig(input_dim=2, num_layers=1, hidden_dim=3)
    p = _layer(init_params(cfg, np.random.default_rng(0), 1.0))
    for k in ("W_xc", "W_hc", "b_c", "b_hc"):
        p[k] = np.zeros_like(p[k])
    h, c = lstm_cell_step(np.array([[0.2, 0.7]]), np.array([[0.1, -0.3, 0.5]]), np.zeros((1, 3)), p)
    assert np.all(c.value == 0.0)
    assert np.all(h.value == 0.0)


def test_cell_matches_scalar_oracle():
    rng = np.random.default_rng(11)
    cfg = NetworkConfig(input_dim=3, num_layers=1, hidden_dim=4)
    p = _layer(init_params(cfg, rng, 0.5))
    x, h0, c0 = rng.uniform(0, 1, 3), rng.normal(size=4), rng.normal(size=4)
    h, c = lstm_cell_step(x[None], h0[None], c0[None], p)
    eh, ec = scalar_step(x, h0, c0, {k: v.tolist() for k, v in p.items()})
    np.testing.assert_allclose(h.value[0], eh, atol=1e-12)
    np.testing.assert_allclose(c.value[0], ec, atol=1e-12)


def test_cell_shape_error():
    cfg = NetworkConfig(input_dim=3, num_layers=1, hidden_dim=4)
    p = _layer(zero_params(cfg))
    with pytest.raises(ShapeError):
        lstm_cell_step(np.zeros((1, 2)), np.zeros((1, 4)), np.zeros((1, 4)), p)
    with pytest.raises(ShapeError):
        lstm_cell_step(np.zeros((1, 3)), np.zeros((1, 5)), np.zeros((1, 5)), p)


def test_zero_network_t_head():
    cfg = NetworkConfig(input_dim=3, num_layers=2, hidden_dim=4)
    out = forward(np.zeros((5, 3)), zero_params(cfg), cfg).numpy()
    assert out.loc[0] == 0.0
    assert out.scale[0] == pytest.approx(math.log(2) + 1e-4, abs=1e-15)


@pytest.mark.parametrize("head", ["t", "quantile"])
def test_forward_matches_scalar_oracle(head):
    rng = np.random.default_rng(5)
    cfg = NetworkConfig(input_dim=2, num_layers=2, hidden_dim=3, head=head, window_length=4)
    params = init_params(cfg, rng, 0.7)
    window = rng.uniform(0, 1, (4, 2))
    raw = scalar_forward(window, params, cfg)
    out = forward(window, params, cfg).numpy()
    if head == "t":
        assert abs(out.loc[0] - raw[0]) < 1e-10
        assert abs(out.scale[0] - (math.log1p(math.exp(raw[1])) + 1e-4)) < 1e-10
    else:
        np.testing.assert_allclose(out.quantiles[0], raw, atol=1e-10)


def test_forward_batch_equals_single_windows():
    rng = np.random.default_rng(2)
    cfg = NetworkConfig(input_dim=2, num_layers=2, hidden_dim=5)
    params = init_params(cfg, rng, 0.3)
    X = rng.uniform(0, 1, (6, 7, 2))
    batch = forward(X, params, cfg).numpy()
    for b in range(6):
        single = forward(X[b], params, cfg).numpy()
        assert single.loc[0] == pytest.approx(batch.loc[b], abs=1e-13)


def test_forward_is_deterministic():
    rng = np.random.default_rng(8)
    cfg = NetworkConfig(input_dim=2, num_layers=3, hidden_dim=4)
    params = init_params(cfg, rng, 0.2)
    X = rng.uniform(0, 1, (3, 6, 2))
    a, b = forward(X, params, cfg).numpy(), forward(X, params, cfg).numpy()
    assert np.array_equal(a.loc, b.loc) and np.array_equal(a.scale, b.scale)


def test_forward_rejects_non_finite_window():
    cfg = NetworkConfig(input_dim=2, num_layers=1, hidden_dim=2)
    X = np.zeros((4, 2))
    X[1, 0] = np.nan
    with pytest.raises(InputError):
        forward(X, zero_params(cfg), cfg)


def test_forward_rejects_wrong_feature_count():
    cfg = NetworkConfig(input_dim=2, num_layers=1, hidden_dim=2)
    with pytest.raises(ShapeError):
        forward(np.zeros((4, 3)), zero_params(cfg), cfg)


def test_lstm_step_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    cfg = NetworkConfig(input_dim=2, num_layers=1, hidden_dim=3)
    params = init_params(cfg, rng, 0.5)
    X = rng.uniform(0, 1, (2, 5, 2))
    w = rng.normal(size=2)

    def f(p):
        out = forward(X, p, cfg)
        return ad.sum(out.loc * w) + ad.sum(ad.log(out.scale))

    assert ad.finite_diff_check(f, params) < 1e-4


def test_dropout_mask_requires_positive_rate():
    with pytest.raises(ConfigError):
        sample_dropout_mask(NetworkConfig(input_dim=1, dropout_rate=0.0), np.random.default_rng(0))


def test_dropout_mask_statistics():
    cfg = NetworkConfig(input_dim=1, num_layers=1, hidden_dim=32, dropout_rate=0.5)
    rng = np.random.default_rng(0)
    masks = np.concatenate([sample_dropout_mask(cfg, rng)[0] for _ in range(10)])
    assert abs(np.mean(masks == 0) - 0.5) <= 0.1
    assert np.all(masks[masks != 0] == 2.0)


def test_dropout_mask_shapes():
    cfg = NetworkConfig(input_dim=1, num_layers=3, hidden_dim=4, dropout_rate=0.2)
    masks = sample_dropout_mask(cfg, np.random.default_rng(0), batch_size=5)
    assert len(masks) == 3 and all(m.shape == (5, 4) for m in masks)


def test_dropout_mask_applies_to_layer_outputs():
    rng = np.random.default_rng(1)
    cfg = NetworkConfig(input_dim=2, num_layers=2, hidden_dim=3, dropout_rate=0.5)
    params = init_params(cfg, rng, 0.5)
    X = rng.uniform(0, 1, (4, 2))
    ones = [np.ones(3), np.ones(3)]
    base = forward(X, params, cfg).numpy()
    same = forward(X, params, cfg, ones).numpy()
    assert base.loc[0] == same.loc[0]
    # zeroing the top layer output leaves only the head bias
    dead = forward(X, params, cfg, [np.ones(3), np.zeros(3)]).numpy()
    assert dead.loc[0] == pytest.approx(params["head.b"][0], abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(
    x=arrays(np.float64, (4, 2), elements=st.floats(-50, 50)),
    seed=st.integers(0, 2**16),
)
def test_gate_outputs_bounded_and_scale_above_floor(x, seed):
    rng = np.random.default_rng(seed)
    cfg = NetworkConfig(input_dim=2, num_layers=2, hidden_dim=3)
    params = init_params(cfg, rng, 4.0)
    out = forward(x, params, cfg).numpy()
    assert out.scale[0] >= cfg.scale_floor
    h, c = lstm_cell_step(x[:1], np.zeros((1, 3)), np.zeros((1, 3)), _layer(params))
    # |c| <= |i * cand| < 1 from a zero state, and |h| < 1 always
    assert np.all(np.abs(c.value) <= 1.0) and np.all(np.abs(h.value) <= 1.0)
