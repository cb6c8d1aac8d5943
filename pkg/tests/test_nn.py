"""Network execution and training: analytic gradients against finite
differences, layer semantics, attention weights, optimisation behaviour."""

import numpy as np
import pytest

from qfuse.graph import build_graph, node
from qfuse.nn import (
    Network,
    NonFiniteLossError,
    ShapeMismatchError,
    TrainConfig,
    accuracy,
    fusion_backward,
    fusion_forward,
    init_fusion_params,
    train,
)
from qfuse.nn.gradcheck import check_function, check_network
from qfuse.nn.layers import (
    act_backward,
    act_forward,
    add_backward,
    add_forward,
    attention_pool_forward,
    conv1d_forward,
    gru_forward,
    layer_norm_backward,
    layer_norm_forward,
    softmax_cross_entropy,
)


def chain(nodes, fusion):
    edges = [(a.id, b.id) for a, b in zip(nodes, nodes[1:])]
    return build_graph(nodes, edges, fusion)


def dense_net():
    return chain([node(1, "Input", shape=[5]),
                  node(2, "Dense", units=4),
                  node(3, "Activation", fn="tanh"),
                  node(4, "Dense", units=3),
                  node(5, "Output")], 4)


def separable_batch(n, seed, spread=1.5):
    rng = np.random.default_rng(seed)
    half = n // 2
    x = rng.standard_normal((2 * half, 6))
    x[:half] += spread
    x[half:] -= spread
    y = np.array([0] * half + [1] * half)
    perm = rng.permutation(2 * half)
    return x[perm], y[perm]


# ---------------------------------------------------------------------------
# gradient checks (central differences against the analytic backward)


def test_grad_dense_chain():
    net = Network(dense_net(), seed=1)
    x = np.random.default_rng(2).standard_normal((3, 5))
    assert check_network(net, x) < 1e-6


def test_grad_dilated_conv_chain():
    g = chain([node(1, "Input", shape=[12, 3]),
               node(2, "Conv1D", filters=4, kernel_size=3, dilation=2,
                    padding="same"),
               node(3, "Activation", fn="tanh"),
               node(4, "GlobalAvgPool"),
               node(5, "Dense", units=2),
               node(6, "Output")], 5)
    net = Network(g, seed=3)
    x = np.random.default_rng(4).standard_normal((2, 12, 3))
    assert check_network(net, x) < 1e-5


def test_grad_strided_valid_conv():
    g = chain([node(1, "Input", shape=[14, 2]),
               node(2, "Conv1D", filters=3, kernel_size=3, stride=2,
                    padding="valid"),
               node(3, "Activation", fn="gelu"),
               node(4, "GlobalAvgPool"),
               node(5, "Dense", units=2),
               node(6, "Output")], 5)
    net = Network(g, seed=5)
    x = np.random.default_rng(6).standard_normal((2, 14, 2))
    assert check_network(net, x) < 1e-5


def test_grad_gru_chain():
    g = chain([node(1, "Input", shape=[6, 3]),
               node(2, "GRU", units=4),
               node(3, "Dense", units=2),
               node(4, "Output")], 3)
    net = Network(g, seed=7)
    x = np.random.default_rng(8).standard_normal((2, 6, 3))
    assert check_network(net, x) < 1e-4


def test_grad_attention_pool_chain():
    g = chain([node(1, "Input", shape=[7, 4]),
               node(2, "AttentionPool"),
               node(3, "Dense", units=3),
               node(4, "Output")], 3)
    net = Network(g, seed=9)
    # move off the all-zero init so the softmax is not at a symmetric point
    net.params[2]["v"][:] = 0.3 * np.random.default_rng(10).standard_normal(7)
    x = np.random.default_rng(11).standard_normal((3, 7, 4))
    assert check_network(net, x) < 1e-4


def test_grad_add_concat_diamond():
    nodes = [node(1, "Input", shape=[6, 2]),
             node(2, "Conv1D", filters=2, kernel_size=3, padding="same"),
             node(3, "Conv1D", filters=2, kernel_size=3, padding="same"),
             node(4, "Add"),
             node(5, "Concat"),
             node(6, "GlobalAvgPool"),
             node(7, "Dense", units=2),
             node(8, "Output")]
    edges = [(1, 2), (1, 3), (2, 4), (3, 4), (4, 5), (1, 5), (5, 6),
             (6, 7), (7, 8)]
    net = Network(build_graph(nodes, edges, 7), seed=12)
    x = np.random.default_rng(13).standard_normal((2, 6, 2))
    assert check_network(net, x) < 1e-5


def test_grad_pooling_reshape_chain():
    nodes = [node(1, "Input", shape=[12, 2]),
             node(2, "AvgPool1D", out_length=4),
             node(3, "Repeat1D", out_length=12),
             node(4, "Add"),
             node(5, "Reshape", target=[24]),
             node(6, "Dense", units=3),
             node(7, "Output")]
    edges = [(1, 2), (2, 3), (3, 4), (1, 4), (4, 5), (5, 6), (6, 7)]
    net = Network(build_graph(nodes, edges, 6), seed=14)
    x = np.random.default_rng(15).standard_normal((2, 12, 2))
    assert check_network(net, x) < 1e-5


def test_grad_fusion_head_function():
    rng = np.random.default_rng(16)
    params = init_fusion_params(rng, 8, 3, heads=2, ffn_hidden=(16, 8),
                                classes=2)
    tokens = rng.standard_normal((4, 3, 8))
    names = list(params)
    box = {}

    def fwd():
        logits, box["cache"] = fusion_forward(tokens, params)
        return logits

    def bwd(dlogits):
        dtok, grads = fusion_backward(dlogits, box["cache"], params)
        return [dtok] + [grads[n] for n in names]

    err = check_function(fwd, bwd, [tokens] + [params[n] for n in names])
    assert err < 1e-4


def test_grad_layer_norm_function():
    rng = np.random.default_rng(17)
    x = rng.standard_normal((3, 4, 6))
    gamma = rng.standard_normal(6)
    beta = rng.standard_normal(6)
    box = {}

    def fwd():
        y, box["cache"] = layer_norm_forward(x, gamma, beta)
        return y

    def bwd(dy):
        return layer_norm_backward(dy, box["cache"], gamma)

    assert check_function(fwd, bwd, [x, gamma, beta]) < 1e-6


# ---------------------------------------------------------------------------
# layer semantics


def test_activation_values():
    x = np.array([-1.0, 0.0, 2.0])
    assert act_forward(x, "relu")[0].tolist() == [0.0, 0.0, 2.0]
    assert np.allclose(act_forward(x, "tanh")[0], np.tanh(x))
    assert np.allclose(act_forward(x, "sigmoid")[0], 1 / (1 + np.exp(-x)))
    gelu = act_forward(np.array([0.0, 1.0]), "gelu")[0]
    assert gelu[0] == 0.0
    assert gelu[1] == pytest.approx(0.8413447460685429)
    assert np.array_equal(act_forward(x, "identity")[0], x)
    with pytest.raises(ValueError):
        act_forward(x, "swish")


def test_activation_gradients_via_finite_differences():
    rng = np.random.default_rng(18)
    x = rng.standard_normal((4, 5)) + 0.05  # keep away from the relu kink
    for fn in ("relu", "tanh", "sigmoid", "gelu", "identity"):
        box = {}

        def fwd():
            y, box["cache"] = act_forward(x, fn)
            return y

        def bwd(dy):
            return [act_backward(dy, box["cache"])]

        assert check_function(fwd, bwd, [x]) < 1e-6, fn


def test_dilated_conv_impulse_response():
    x = np.zeros((1, 17, 1))
    x[0, 8, 0] = 1.0
    y, _ = conv1d_forward(x, np.ones((3, 1, 1)), np.zeros(1),
                          stride=1, dilation=2, padding="same")
    hit = np.flatnonzero(y[0, :, 0])
    assert hit.tolist() == [6, 8, 10]
    assert hit[-1] - hit[0] + 1 == 5  # receptive span (k-1)*d + 1


def test_conv_output_lengths():
    x = np.random.default_rng(19).standard_normal((1, 16, 1))
    w, b = np.ones((3, 1, 2)), np.zeros(2)
    valid, _ = conv1d_forward(x, w, b, stride=1, dilation=2, padding="valid")
    assert valid.shape == (1, 12, 2)
    strided, _ = conv1d_forward(
        np.random.default_rng(20).standard_normal((1, 17, 1)),
        np.ones((3, 1, 1)), np.zeros(1), stride=2, dilation=1, padding="same")
    assert strided.shape == (1, 9, 1)


def test_add_semantics():
    x = np.random.default_rng(21).standard_normal((2, 3))
    y, n = add_forward([x, x])
    assert np.array_equal(y, 2 * x)
    assert n == 2
    douts = add_backward(np.ones((2, 3)), 2)
    assert len(douts) == 2 and np.array_equal(douts[0], douts[1])


def test_gru_zero_parameters_give_zero_state():
    params = {k: np.zeros(s) for k, s in {
        "Wz": (3, 4), "Uz": (4, 4), "bz": 4,
        "Wr": (3, 4), "Ur": (4, 4), "br": 4,
        "Wh": (3, 4), "Uh": (4, 4), "bh": 4}.items()}
    x = np.random.default_rng(22).standard_normal((2, 5, 3))
    h, _ = gru_forward(x, params)
    assert np.array_equal(h, np.zeros((2, 4)))


def test_attention_pool_weight_semantics():
    rng = np.random.default_rng(23)
    one = rng.standard_normal((2, 6, 1))
    _, alpha, _ = attention_pool_forward(one, rng.standard_normal(6))
    assert np.all(alpha == 1.0)  # a single channel takes all the mass

    tok = rng.standard_normal((3, 6, 1))
    twin = np.concatenate([tok, tok], axis=2)
    _, alpha, _ = attention_pool_forward(twin, rng.standard_normal(6))
    assert np.all(alpha == 0.5)  # identical channels split it evenly

    x = rng.standard_normal((4, 6, 5))
    pooled, alpha, _ = attention_pool_forward(x, np.zeros(6))
    assert np.all(alpha == 1.0 / 5.0)  # zero scores -> exactly uniform
    assert np.allclose(pooled, x.mean(axis=2))

    _, alpha, _ = attention_pool_forward(x, rng.standard_normal(6))
    assert np.allclose(alpha.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(alpha > 0)


def test_untrained_network_attention_is_uniform():
    g = chain([node(1, "Input", shape=[10, 8]),
               node(2, "AttentionPool"),
               node(3, "Dense", units=2),
               node(4, "Output")], 3)
    net = Network(g, seed=24)
    x = np.random.default_rng(25).standard_normal((5, 10, 8))
    _, cache = net.forward(x)
    alpha = cache["attention"][2]
    assert alpha.shape == (5, 8)
    assert np.all(alpha == 0.125)  # zero-init scorer -> exactly 1/8


def test_fusion_attention_rows_sum_to_one():
    rng = np.random.default_rng(26)
    params = init_fusion_params(rng, 8, 4, heads=2, ffn_hidden=(16, 8),
                                classes=2)
    tokens = rng.standard_normal((5, 4, 8))
    _, cache = fusion_forward(tokens, params)
    attn = cache["attention"]
    assert attn.shape == (5, 2, 4, 4)
    assert np.allclose(attn.sum(axis=-1), 1.0, atol=1e-9)


def test_softmax_cross_entropy_values():
    logits = np.zeros((4, 3))
    labels = np.array([0, 1, 2, 0])
    loss, dl = softmax_cross_entropy(logits, labels)
    assert loss == pytest.approx(np.log(3.0))
    assert np.allclose(dl.sum(axis=1), 0.0, atol=1e-12)
    sharp = np.full((2, 3), -30.0)
    sharp[[0, 1], [1, 2]] = 30.0
    loss, _ = softmax_cross_entropy(sharp, np.array([1, 2]))
    assert loss < 1e-12


# ---------------------------------------------------------------------------
# training behaviour


def test_training_fits_separable_problem():
    x, y = separable_batch(120, seed=27)
    net = Network(chain([node(1, "Input", shape=[6]),
                         node(2, "Dense", units=8),
                         node(3, "Activation", fn="tanh"),
                         node(4, "Dense", units=2),
                         node(5, "Output")], 4), seed=28)
    hist = train(net, x, y, TrainConfig(learning_rate=0.01, batch_size=16,
                                        epochs=30, seed=0))
    assert len(hist["train_loss"]) == 30
    assert hist["train_loss"][-1] < hist["train_loss"][0]
    assert accuracy(net, x, y) >= 0.95


def test_training_on_random_labels_stays_at_chance():
    rng = np.random.default_rng(29)
    x = rng.standard_normal((160, 6))
    y = rng.integers(0, 2, size=160)
    net = Network(chain([node(1, "Input", shape=[6]),
                         node(2, "Dense", units=8),
                         node(3, "Activation", fn="tanh"),
                         node(4, "Dense", units=2),
                         node(5, "Output")], 4), seed=30)
    train(net, x, y, TrainConfig(learning_rate=0.01, batch_size=16,
                                 epochs=15, seed=1))
    x_new = rng.standard_normal((400, 6))
    y_new = rng.integers(0, 2, size=400)
    assert accuracy(net, x_new, y_new) == pytest.approx(0.5, abs=0.1)


def test_same_seed_training_is_identical():
    x, y = separable_batch(80, seed=31)
    cfg = TrainConfig(learning_rate=0.005, batch_size=16, epochs=8, seed=2)
    runs = []
    for _ in range(2):
        net = Network(dense_net(), seed=5)
        runs.append((train(net, x[:, :5], y, cfg), net))
    h1, n1 = runs[0]
    h2, n2 = runs[1]
    assert h1 == h2
    for a, b in zip(n1.param_arrays(), n2.param_arrays()):
        assert np.array_equal(a, b)


def test_keep_best_restores_best_validation_params():
    x, y = separable_batch(100, seed=32, spread=0.8)
    xv, yv = separable_batch(40, seed=33, spread=0.8)
    net = Network(chain([node(1, "Input", shape=[6]),
                         node(2, "Dense", units=8),
                         node(3, "Activation", fn="tanh"),
                         node(4, "Dense", units=2),
                         node(5, "Output")], 4), seed=34)
    cfg = TrainConfig(learning_rate=0.02, batch_size=16, epochs=25, seed=3,
                      keep_best=True)
    hist = train(net, x, y, cfg, val=(xv, yv))
    assert len(hist["val_acc"]) == 25
    assert accuracy(net, xv, yv) == max(hist["val_acc"])


def test_without_keep_best_final_epoch_params_remain():
    x, y = separable_batch(100, seed=35, spread=0.8)
    xv, yv = separable_batch(40, seed=36, spread=0.8)
    net = Network(dense_net(), seed=37)
    hist = train(net, x[:, :5], y, TrainConfig(learning_rate=0.02,
                                               batch_size=16, epochs=10,
                                               seed=4), val=(xv[:, :5], yv))
    assert accuracy(net, xv[:, :5], yv) == hist["val_acc"][-1]


def test_learning_rate_decay_changes_trajectory():
    x, y = separable_batch(80, seed=38)
    base = TrainConfig(learning_rate=0.01, batch_size=16, epochs=6, seed=5)
    decayed = TrainConfig(learning_rate=0.01, batch_size=16, epochs=6, seed=5,
                          lr_decay_factor=0.2, lr_decay_every=2)
    h_base = train(Network(dense_net(), seed=39), x[:, :5], y, base)
    h_dec = train(Network(dense_net(), seed=39), x[:, :5], y, decayed)
    assert h_base["train_loss"][:2] == h_dec["train_loss"][:2]  # pre-decay
    assert h_base["train_loss"][2:] != h_dec["train_loss"][2:]


def test_nan_parameter_raises_non_finite_loss():
    x, y = separable_batch(40, seed=40)
    net = Network(dense_net(), seed=41)
    net.params[2]["W"][0, 0] = np.nan
    with pytest.raises(NonFiniteLossError):
        train(net, x[:, :5], y, TrainConfig(epochs=1, batch_size=8, seed=6))


def test_dropout_training_requires_rng():
    g = chain([node(1, "Input", shape=[5]),
               node(2, "Dense", units=4),
               node(3, "Dropout", rate=0.5),
               node(4, "Dense", units=2),
               node(5, "Output")], 4)
    net = Network(g, seed=42)
    x = np.random.default_rng(43).standard_normal((3, 5))
    with pytest.raises(ValueError):
        net.forward(x, train=True, rng=None)
    out, _ = net.forward(x, train=True, rng=np.random.default_rng(44))
    assert out.shape == (3, 2)
    eval_out, _ = net.forward(x, train=False)
    assert np.all(np.isfinite(eval_out))


def test_wrong_input_shape_is_rejected():
    net = Network(dense_net(), seed=45)
    with pytest.raises(ShapeMismatchError):
        net.forward(np.zeros((3, 7)))


def test_forward_until_internal_node():
    from qfuse.templates import temporal_encoder
    g = temporal_encoder(32, 4)
    net = Network(g, seed=46)
    x = np.random.default_rng(47).standard_normal((3, 32, 4))
    tokens, cache = net.forward(x, until=g.fusion_index)
    assert tokens.shape == (3, 16)
    assert cache["attention"][2].shape == (3, 4)
    logits, _ = net.forward(x)
    assert logits.shape == (3, 2)
