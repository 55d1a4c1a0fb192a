import numpy as np
import pytest

from helpers import ggnn_oracle, random_graph, randomize, sig
from parkgraph.autodiff import ShapeError, backward
from parkgraph.encoders import (
    ConfigError,
    ConvSpec,
    EncoderConfig,
    NodeHistory,
    cnn_encode,
    encode,
    gnn_encode,
    init_encoder,
    resolve_shapes,
    rnn_encode,
)
from parkgraph.nn import FULL_SPAN, conv1d_gated, ggnn_output, ggnn_propagate, max_pool, named_tensors
from parkgraph.preprocess import ProximityGraph

SEEDS = range(20)

SMALL_GNN = dict(kind="gnn", M=8, K=5, hidden_pad=10, h_conv=(2, 4, 2), node_out=6,
                 trailing=[(3, 4, 2), (4, 5, 2), (5, 3, FULL_SPAN)])
SMALL_CNN = dict(kind="cnn", M=16, K=4, cnn_convs=[(6, 3, 2), (5, 3, 1)], cnn_final_filters=7)
SMALL_RNN = dict(kind="rnn", M=6, K=4, rnn_hidden=5, rnn_embed=3)


def conv_np(x, w_f, b_f, w_g, b_g, stride):
    """Gated valid convolution via explicit sliding windows; ``x`` is (C, L)."""
    k = w_f.shape[2]
    if stride == FULL_SPAN:
        assert x.shape[1] == k
        stride = 1
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)[:, ::stride]  # (C, L_out, k)
    lin = np.einsum("clk,fck->fl", windows, w_f) + b_f[:, None]
    gate = np.einsum("clk,fck->fl", windows, w_g) + b_g[:, None]
    return lin * sig(gate)


def conv_p(x, p):
    return conv_np(x, p.w_f.data, p.b_f.data, p.w_g.data, p.b_g.data, p.stride)


def gnn_oracle(window, graph, params, hidden_pad):
    """Node-by-node composition: per-node convs, unrolled GGNN, output head, flatten, trailing convs."""
    a_rows, h_rows = [], []
    for v in range(window.shape[1]):
        a = window[:, v][None]
        h = np.zeros((1, hidden_pad))
        h[0, : a.shape[1]] = a[0]
        a_rows.append(conv_p(a, params.a_conv).reshape(-1))
        h_rows.append(conv_p(h, params.h_conv).reshape(-1))
    h_final = ggnn_oracle(np.array(h_rows), graph.edges, params.ggnn, params.ggnn.steps)
    nodes = [np.tanh(np.concatenate([h_final[v], a_rows[v]]) @ params.ggnn.w_out.data + params.ggnn.b_out.data)
             for v in range(window.shape[1])]
    seq = np.concatenate(nodes)[None]
    for layer in params.trailing:
        seq = conv_p(seq, layer)
    return seq.reshape(-1)


def make(cfg_kwargs, seed, scale=0.5):
    cfg = EncoderConfig(**cfg_kwargs)
    rng = np.random.default_rng(seed)
    params = randomize(init_encoder(cfg, rng), rng, scale)
    return cfg, params, rng


# -- shape plans ----------------------------------------------------------------


def test_gnn_default_plan_ends_in_forty():
    plan = resolve_shapes(EncoderConfig())
    assert plan.output_dim == 40
    a_layer, h_layer, *trailing = plan.layers
    assert (a_layer.out_length, h_layer.out_length) == (47, 11)
    assert plan.ggnn_hidden == 22 and plan.annotation_dim == 47
    assert trailing[0].in_length == 27 * 64
    assert [l.out_length for l in trailing] == [863, 150, 19, 1]
    assert trailing[-1].stride == FULL_SPAN and trailing[-1].filter_size == 19


def test_cnn_default_plan():
    plan = resolve_shapes(EncoderConfig(kind="cnn"))
    first, second, pool, final = plan.layers
    assert first.out_length == (48 - 5) // 2 + 1 == 22
    assert second.out_length == 9 and pool.out_length == 4
    assert final.stride == FULL_SPAN and final.filter_size == 4
    assert plan.output_dim == 50


def test_rnn_plan_is_hidden_size():
    plan = resolve_shapes(EncoderConfig(kind="rnn"))
    assert plan.layers == () and plan.output_dim == 40


def test_plan_is_deterministic():
    assert resolve_shapes(EncoderConfig()) == resolve_shapes(EncoderConfig())


def test_non_final_overlong_filter_lists_chain():
    cfg = EncoderConfig(trailing=[(5, 4, 2), (10, 2000, 5), (40, 65, FULL_SPAN)])
    with pytest.raises(ConfigError, match=r"gnn.trailing\[1\].*2000.*1728 -> 863"):
        resolve_shapes(cfg)
    with pytest.raises(ConfigError, match="cnn"):
        resolve_shapes(EncoderConfig(kind="cnn", M=4))


def test_other_config_errors():
    with pytest.raises(ConfigError):
        EncoderConfig(kind="transformer")
    with pytest.raises(ConfigError):
        EncoderConfig(M=0)
    with pytest.raises(ConfigError, match="pad"):
        resolve_shapes(EncoderConfig(hidden_pad=40))
    with pytest.raises(ConfigError, match="max-pool"):
        resolve_shapes(EncoderConfig(kind="cnn", M=8, cnn_convs=[(3, 3, 1)], cnn_pool=8))


def test_config_round_trips_through_dict():
    cfg = EncoderConfig(**SMALL_GNN)
    again = EncoderConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.trailing[-1] == ConvSpec(5, 3, FULL_SPAN)


# -- GNN ------------------------------------------------------------------------


def test_node_history_pads_with_zeros():
    window = np.arange(12.0).reshape(4, 3)
    hist = NodeHistory.from_window(window, 6)
    np.testing.assert_array_equal(hist.a, window.T)
    np.testing.assert_array_equal(hist.h[:, :4], window.T)
    assert not hist.h[:, 4:].any()
    with pytest.raises(ShapeError):
        NodeHistory.from_window(window, 3)


@pytest.mark.parametrize("seed", SEEDS)
def test_gnn_matches_composition_oracle(seed):
    cfg, params, rng = make(SMALL_GNN, seed)
    graph = random_graph(rng, cfg.K, 0.5)
    window = rng.random((cfg.M, cfg.K))
    code = gnn_encode(window, graph, cfg, params).data
    assert code.shape == (cfg.output_dim,)
    np.testing.assert_allclose(code, gnn_oracle(window, graph, params, cfg.hidden_pad), rtol=0, atol=1e-12)


def test_gnn_defaults_match_oracle_and_are_deterministic():
    cfg = EncoderConfig()
    rng = np.random.default_rng(0)
    params = init_encoder(cfg, rng)
    graph = random_graph(rng, 27, 0.1)
    window = rng.random((48, 27))
    code = gnn_encode(NodeHistory.from_window(window, cfg.hidden_pad), graph, cfg, params).data
    assert code.shape == (40,)
    np.testing.assert_array_equal(code, gnn_encode(window, graph, cfg, params).data)
    np.testing.assert_allclose(code, gnn_oracle(window, graph, params, cfg.hidden_pad), rtol=0, atol=1e-12)


def test_gnn_batch_matches_single():
    cfg, params, rng = make(SMALL_GNN, 1)
    graph = random_graph(rng, cfg.K, 0.5)
    batch = rng.random((3, cfg.M, cfg.K))
    out = gnn_encode(batch, graph, cfg, params).data
    for b in range(3):
        np.testing.assert_allclose(out[b], gnn_encode(batch[b], graph, cfg, params).data, rtol=0, atol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_gnn_is_equivariant_when_flatten_order_follows(seed):
    """Relabel clusters, then undo the relabelling of node outputs before the trailing convs."""
    cfg, params, rng = make(SMALL_GNN, seed)
    graph = random_graph(rng, cfg.K, 0.5)
    perm = rng.permutation(cfg.K)  # new id of old node i is perm[i]
    inv = np.argsort(perm)
    pgraph = ProximityGraph(cfg.K, tuple(sorted((min(perm[u], perm[v]), max(perm[u], perm[v]))
                                                for u, v in graph.edges)))
    window = rng.random((cfg.M, cfg.K))
    pwindow = window[:, inv]

    def nodes(w, g):
        a = w.T[:, None, :]
        h = np.zeros((cfg.K, 1, cfg.hidden_pad))
        h[:, :, : cfg.M] = a
        a_p = conv1d_gated(a, params.a_conv).reshape(cfg.K, -1)
        h_p = conv1d_gated(h, params.h_conv).reshape(cfg.K, -1)
        return ggnn_output(ggnn_propagate(h_p, g, params.ggnn), a_p, params.ggnn).data

    base, permuted = nodes(window, graph), nodes(pwindow, pgraph)
    np.testing.assert_allclose(permuted[perm], base, rtol=0, atol=1e-12)
    seq = permuted[perm].reshape(1, -1)
    for layer in params.trailing:
        seq = conv1d_gated(seq, layer)
    np.testing.assert_allclose(seq.data.reshape(-1), gnn_encode(window, graph, cfg, params).data,
                               rtol=0, atol=1e-12)


def test_gnn_shape_errors():
    cfg, params, rng = make(SMALL_GNN, 0)
    graph = random_graph(rng, cfg.K)
    with pytest.raises(ShapeError):
        gnn_encode(np.zeros((cfg.M + 1, cfg.K)), graph, cfg, params)
    with pytest.raises(ShapeError):
        gnn_encode(np.zeros((cfg.M, cfg.K)), ProximityGraph(cfg.K + 1, ()), cfg, params)
    with pytest.raises(ShapeError):
        gnn_encode(NodeHistory.from_window(np.zeros((cfg.M, cfg.K)), cfg.hidden_pad + 1), graph, cfg, params)
    with pytest.raises(ShapeError):
        gnn_encode(np.zeros((1, 1, cfg.M, cfg.K)), graph, cfg, params)


# -- CNN ------------------------------------------------------------------------


def test_max_pool_example():
    np.testing.assert_array_equal(max_pool(np.array([[3.0, 1, 4, 1, 5, 9]]), 2, 2).data, [[3, 4, 9]])


def test_cnn_zero_weights_give_bias_image():
    cfg = EncoderConfig(**SMALL_CNN)
    rng = np.random.default_rng(0)
    params = init_encoder(cfg, rng)
    for name, t in named_tensors(params):
        t.data = np.zeros_like(t.data) if ".w_" in name else rng.standard_normal(t.data.shape)
    code = cnn_encode(np.full((cfg.M, cfg.K), 0.7), cfg, params).data
    np.testing.assert_allclose(code, params.final.b_f.data * sig(params.final.b_g.data), rtol=0, atol=1e-15)


@pytest.mark.parametrize("seed", SEEDS)
def test_cnn_matches_composition_oracle(seed):
    cfg, params, rng = make(SMALL_CNN, seed)
    x = rng.random((cfg.M, cfg.K))
    seq = x.T
    for layer in params.convs:
        seq = conv_p(seq, layer)
    length = seq.shape[1] - seq.shape[1] % cfg.cnn_pool
    seq = seq[:, :length].reshape(seq.shape[0], -1, cfg.cnn_pool).max(axis=2)
    expected = conv_p(seq, params.final).reshape(-1)
    code = cnn_encode(x, cfg, params).data
    assert code.shape == (cfg.output_dim,)
    np.testing.assert_allclose(code, expected, rtol=0, atol=1e-12)


def test_cnn_defaults_give_fifty():
    cfg = EncoderConfig(kind="cnn")
    params = init_encoder(cfg, np.random.default_rng(0))
    assert cnn_encode(np.random.default_rng(1).random((48, 27)), cfg, params).shape == (50,)
    with pytest.raises(ShapeError):
        cnn_encode(np.zeros((47, 27)), cfg, params)


# -- RNN ------------------------------------------------------------------------


def rnn_oracle(series, params):
    """Scalar unroll of the embedding and gate equations over ``[h ; s_emb]``."""
    w_s, b_s = params.w_s.data, params.b_s.data
    g = params.gates
    hidden = g.w_f.shape[1]
    h, c = np.zeros(hidden), np.zeros(hidden)
    for s in series:
        emb = np.array([max(0.0, sum(s[i] * w_s[i, j] for i in range(len(s))) + b_s[j]) for j in range(len(b_s))])
        hx = np.concatenate([h, emb])

        def gate(w, b):
            return np.array([sum(hx[a] * w.data[a, j] for a in range(len(hx))) + b.data[j] for j in range(hidden)])

        f, i, o = sig(gate(g.w_f, g.b_f)), sig(gate(g.w_i, g.b_i)), sig(gate(g.w_o, g.b_o))
        c = f * c + i * np.tanh(gate(g.w_c, g.b_c))
        h = o * np.tanh(c)
    return h


@pytest.mark.parametrize("seed", SEEDS)
def test_rnn_matches_unrolled_cell(seed):
    cfg, params, rng = make(SMALL_RNN, seed)
    series = rng.random((cfg.M, cfg.K))
    np.testing.assert_allclose(rnn_encode(series, cfg, params).data, rnn_oracle(series, params),
                               rtol=0, atol=1e-12)


def test_rnn_zero_params_give_zero_code():
    cfg = EncoderConfig(**SMALL_RNN)
    params = init_encoder(cfg, np.random.default_rng(0))
    for _, t in named_tensors(params):
        t.data = np.zeros_like(t.data)
    assert not rnn_encode(np.random.default_rng(1).random((cfg.M, cfg.K)), cfg, params).data.any()


def test_rnn_single_step():
    cfg, params, rng = make({**SMALL_RNN, "M": 1}, 3)
    s = rng.random((1, cfg.K))
    emb = np.maximum(0, s[0] @ params.w_s.data + params.b_s.data)
    hx = np.concatenate([np.zeros(cfg.rnn_hidden), emb])
    g = params.gates
    c = sig(hx @ g.w_i.data + g.b_i.data) * np.tanh(hx @ g.w_c.data + g.b_c.data)
    h = sig(hx @ g.w_o.data + g.b_o.data) * np.tanh(c)
    np.testing.assert_allclose(rnn_encode(s, cfg, params).data, h, rtol=0, atol=1e-14)


def test_rnn_length_errors():
    cfg, params, _ = make(SMALL_RNN, 0)
    with pytest.raises(ShapeError):
        rnn_encode(np.zeros((cfg.M - 1, cfg.K)), cfg, params)
    with pytest.raises(ShapeError):
        rnn_encode(np.zeros((cfg.M, cfg.K + 1)), cfg, params)


# -- shared properties ----------------------------------------------------------


@pytest.mark.parametrize("kwargs", [SMALL_GNN, SMALL_CNN, SMALL_RNN], ids=["gnn", "cnn", "rnn"])
@pytest.mark.parametrize("seed", range(3))
def test_code_length_and_every_parameter_gets_gradient(kwargs, seed):
    cfg, params, rng = make(kwargs, seed)
    graph = random_graph(rng, cfg.K, 0.6)
    if not graph.edges:
        graph = ProximityGraph(cfg.K, ((0, 1),))
    x = rng.random((2, cfg.M, cfg.K))
    code = encode(x, graph, cfg, params)
    assert code.shape == (2, cfg.output_dim)
    tensors = dict(named_tensors(params))
    backward((code * rng.standard_normal(code.shape)).sum(), tensors.values())
    dead = [name for name, t in tensors.items() if not np.any(t.grad)]
    assert dead == []
