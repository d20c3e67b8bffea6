"""Layer semantics: LSTM against a straight-line oracle, gate weights against
the explicit two-term softmax, top-k rules, initialization contracts."""
import numpy as np
import pytest

from algoselect import autodiff as ad
from algoselect import layers as ly
from algoselect.errors import BadKError, IndexOutOfRangeError, ShapeMismatchError


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def identity_readout(hidden):
    """MLP that returns its input unchanged, exposing concat(h_last, h_first)."""
    w = ad.leaf(np.eye(2 * hidden))
    b = ad.leaf(np.zeros(2 * hidden))
    return ly.MlpParams([ly.MlpLayer(w, b, "identity")])


def manual_lstm(params, rows):
    """Straight-line numpy recurrence, no autodiff."""
    h = np.zeros(params.hidden_size)
    c = np.zeros(params.hidden_size)
    states = []
    for x in rows:
        i = sigmoid(params.w_input.values @ x + params.b_input.values + params.u_input.values @ h)
        f = sigmoid(params.w_forget.values @ x + params.b_forget.values + params.u_forget.values @ h)
        o = sigmoid(params.w_output.values @ x + params.b_output.values + params.u_output.values @ h)
        g = np.tanh(params.w_cell.values @ x + params.b_cell.values + params.u_cell.values @ h)
        c = f * c + i * g
        h = o * np.tanh(c)
        states.append(h.copy())
    return states


def test_mlp_forward_matches_manual():
    rng = np.random.default_rng(0)
    mlp = ly.init_mlp([3, 5, 2], ["relu", "identity"], rng)
    x = rng.normal(size=3)
    got = ly.mlp_forward(mlp, ad.constant(x)).values
    h = np.maximum(mlp.layers[0].weight.values @ x + mlp.layers[0].bias.values, 0.0)
    expect = mlp.layers[1].weight.values @ h + mlp.layers[1].bias.values
    np.testing.assert_allclose(got, expect, rtol=1e-12)

    # batch rows equal the vector path
    X = rng.normal(size=(4, 3))
    batch = ly.mlp_forward(mlp, ad.constant(X)).values
    for i in range(4):
        single = ly.mlp_forward(mlp, ad.constant(X[i])).values
        np.testing.assert_allclose(batch[i], single, rtol=1e-12)


def test_lstm_matches_straight_line_oracle():
    rng = np.random.default_rng(1)
    params = ly.init_lstm(input_dim=3, hidden=4, rng=rng)
    rows = rng.normal(size=(5, 3))
    states = manual_lstm(params, rows)
    out = ly.lstm_encode(params, rows, identity_readout(4))
    np.testing.assert_allclose(out.values[:4], states[-1], rtol=1e-10)
    np.testing.assert_allclose(out.values[4:], states[0], rtol=1e-10)


def test_lstm_literal_initial_state_reads_zeros():
    rng = np.random.default_rng(2)
    params = ly.init_lstm(3, 4, rng)
    rows = rng.normal(size=(4, 3))
    out = ly.lstm_encode(params, rows, identity_readout(4), literal_initial_state=True)
    assert np.all(out.values[4:] == 0.0)
    np.testing.assert_allclose(out.values[:4], manual_lstm(params, rows)[-1], rtol=1e-10)


def test_lstm_single_token_first_equals_last():
    rng = np.random.default_rng(3)
    params = ly.init_lstm(3, 4, rng)
    rows = rng.normal(size=(1, 3))
    out = ly.lstm_encode(params, rows, identity_readout(4))
    np.testing.assert_allclose(out.values[:4], out.values[4:], rtol=1e-12)


def test_lstm_zero_weights_give_zero_states():
    rng = np.random.default_rng(4)
    params = ly.init_lstm(3, 4, rng)
    for t in params.tensors():
        t.values[...] = 0.0
    out = ly.lstm_encode(params, np.ones((6, 3)), identity_readout(4))
    assert np.all(out.values == 0.0)


def test_lstm_gradients_flow_to_gates():
    rng = np.random.default_rng(5)
    params = ly.init_lstm(2, 3, rng)
    rows = rng.normal(size=(3, 2))
    readout = identity_readout(3)

    def f(_):
        return ad.mse_loss(ly.lstm_encode(params, rows, readout), np.zeros(6))

    for target in (params.w_cell, params.u_forget, params.b_input):
        assert ad.grad_check(f, target) < 1e-6


def test_lstm_shape_errors():
    params = ly.init_lstm(3, 4, np.random.default_rng(0))
    with pytest.raises(ShapeMismatchError):
        ly.lstm_encode(params, np.ones((2, 5)), identity_readout(4))
    with pytest.raises(ShapeMismatchError):
        ly.lstm_encode(params, np.ones(3), identity_readout(4))


def test_gumbel_eval_is_exactly_pi():
    sel = ly.init_selector(6, temperature=1.0)
    sel.logits.values[:] = np.array([-2.0, -0.5, 0.0, 0.5, 2.0, 10.0])
    w = ly.gumbel_weights(sel, mode="eval").values
    np.testing.assert_array_equal(w, sel.keep_probabilities())
    assert w[2] == 0.5


def test_gumbel_train_matches_two_term_softmax():
    rng = np.random.default_rng(6)
    sel = ly.init_selector(8, temperature=0.7)
    sel.logits.values[:] = rng.normal(size=8) * 2.0
    g_plus = rng.gumbel(size=8)
    g_minus = rng.gumbel(size=8)
    w = ly.gumbel_weights(sel, mode="train", noise=(g_plus, g_minus)).values

    pi = sigmoid(sel.logits.values)
    a = (np.log(pi) + g_plus) / sel.temperature
    b = (np.log1p(-pi) + g_minus) / sel.temperature
    m = np.maximum(a, b)
    expect = np.exp(a - m) / (np.exp(a - m) + np.exp(b - m))
    np.testing.assert_allclose(w, expect, rtol=1e-10)


def test_gumbel_train_is_differentiable_wrt_logits():
    rng = np.random.default_rng(7)
    sel = ly.init_selector(5, temperature=0.5)
    sel.logits.values[:] = rng.normal(size=5)
    noise = (rng.gumbel(size=5), rng.gumbel(size=5))

    def f(_):
        return ad.mse_loss(ly.gumbel_weights(sel, mode="train", noise=noise), np.zeros(5))

    assert ad.grad_check(f, sel.logits) < 1e-6


def test_gumbel_keep_fraction_tracks_pi():
    # quick Monte Carlo sanity; the tight 3-sigma version is in acceptance
    rng = np.random.default_rng(8)
    sel = ly.init_selector(1, temperature=1.0)
    sel.logits.values[:] = np.log(0.3 / 0.7)  # pi = 0.3
    n = 20000
    hits = 0
    for _ in range(n):
        w = ly.gumbel_weights(sel, rng=rng, mode="train").values[0]
        hits += w > 0.5
    assert abs(hits / n - 0.3) < 5 * np.sqrt(0.3 * 0.7 / n)


def test_select_topk_rules():
    sel = ly.init_selector(6, temperature=1.0)
    sel.logits.values[:] = np.array([0.0, 3.0, 3.0, -1.0, 5.0, 0.0])
    assert ly.select_topk(sel, 3) == (1, 2, 4)  # tie at 3.0 keeps the lower index
    assert ly.select_topk(sel, 1) == (4,)

    # all-equal logits: lowest indices win, output ascending
    sel.logits.values[:] = 0.0
    assert ly.select_topk(sel, 4) == (0, 1, 2, 3)

    # invariant under a strictly increasing transform of the logits
    sel.logits.values[:] = np.array([0.2, -1.0, 0.9, 0.4, -0.3, 2.0])
    base = ly.select_topk(sel, 3)
    sel.logits.values[:] = 5.0 * sel.logits.values + 2.0
    assert ly.select_topk(sel, 3) == base

    with pytest.raises(BadKError):
        ly.select_topk(sel, 0)
    with pytest.raises(BadKError):
        ly.select_topk(sel, 7)


def test_embedding_table_lookup():
    rng = np.random.default_rng(9)
    table = ly.init_table(4, 3, rng)
    row = ly.embedding_lookup(table, 2)
    np.testing.assert_array_equal(row.values, table.table.values[2])
    with pytest.raises(IndexOutOfRangeError):
        ly.embedding_lookup(table, 4)
    with pytest.raises(IndexOutOfRangeError):
        ly.embedding_lookup(table, -1)

    def f(_):
        return ad.mse_loss(ly.embedding_lookup(table, 1), np.zeros(3))

    assert ad.grad_check(f, table.table) < 1e-6


def test_init_contracts():
    rng = np.random.default_rng(10)
    mlp = ly.init_mlp([4, 8, 2], ["relu", "identity"], rng)
    bound0 = 1.0 / np.sqrt(4)
    assert np.all(np.abs(mlp.layers[0].weight.values) <= bound0)
    assert np.all(mlp.layers[0].bias.values == 0.0)
    assert np.all(np.abs(mlp.layers[1].weight.values) <= 1.0 / np.sqrt(8))

    lstm = ly.init_lstm(5, 3, np.random.default_rng(11))
    assert np.all(lstm.b_forget.values == 1.0)
    assert np.all(lstm.b_input.values == 0.0)
    assert np.all(np.abs(lstm.w_input.values) <= 1.0 / np.sqrt(5))
    assert np.all(np.abs(lstm.u_input.values) <= 1.0 / np.sqrt(3))

    sel = ly.init_selector(7, 1.0)
    assert np.all(sel.logits.values == 0.0)
    assert np.all(sel.keep_probabilities() == 0.5)

    # same seed, same weights
    a = ly.init_mlp([3, 3], ["identity"], np.random.default_rng(12))
    b = ly.init_mlp([3, 3], ["identity"], np.random.default_rng(12))
    np.testing.assert_array_equal(a.layers[0].weight.values, b.layers[0].weight.values)

    with pytest.raises(ShapeMismatchError):
        ly.init_mlp([3, 3], ["relu", "relu"], rng)
    with pytest.raises(ShapeMismatchError):
        ly.MlpLayer(ad.leaf(np.zeros((2, 2))), ad.leaf(np.zeros(2)), "softplus")
