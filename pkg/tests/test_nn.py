import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradcheck import max_relative_error
from dstgnn.errors import NaNGradient, ShapeMismatch
from dstgnn.nn import autodiff as ad
from dstgnn.nn.autodiff import Tensor
from dstgnn.nn.checkpoint import load_checkpoint, save_checkpoint
from dstgnn.nn.model import (
    DstGnn, ForwardTrace, ModelConfig, gat_layer, gru_direction, gru_param_names, gru_step,
    init_params, with_self_loops,
)
from dstgnn.nn.optim import AdamW, cosine_lr

TOY = ModelConfig(in_dim=3, gat_heads=2, gat_hidden=2, gru_layers=2, gru_hidden=3, mlp_hidden=2)


def leaf(rng, *shape):
    return ad.parameter(rng.normal(size=shape))


def toy_inputs(rng, batch=2, windows=2, nodes=4):
    feats = rng.normal(size=(batch, windows, nodes, 3))
    adj = rng.random((batch, windows, nodes, nodes)) < 0.5
    adj = adj | np.swapaxes(adj, -1, -2)
    adj[..., np.arange(nodes), np.arange(nodes)] = False
    return feats, adj


def test_square_gradient():
    w = ad.parameter(3.0)
    (w * w).backward()
    assert w.grad == 6.0


# -- gradient checks per operator -------------------------------------------

OPS = {
    "add_mul_div_broadcast": lambda a, b: ((a + b[0]) * b[1] / (2.0 + b[0] * b[0])).sum(),
    "matmul_batched_weight": lambda a, b: (ad.reshape(a, (2, 2, 3)) @ b[:3, :2]).sum(),
    "matmul_batched_both": lambda a, b: (ad.reshape(a, (2, 2, 3)) @ ad.reshape(b, (2, 3, 2))).mean(),
    "reshape_transpose_index": lambda a, b: (ad.transpose(a, (1, 0))[1:, ::2] * b[:2, :2]).sum(),
    "fancy_index": lambda a, b: (a[[0, 0, 3], [1, 1, 2]] * 1.7).sum() + b[np.array([1, 1])].sum(),
    "concat_stack": lambda a, b: (ad.stack([ad.concat([a[0], b[0]], 0), ad.concat([a[1], b[1]], 0)], 1) ** 1).sum()
    if False else ad.stack([ad.concat([a[0], b[0]], 0), ad.concat([a[1], b[1]], 0)], 1).mean() * 3.0,
    "exp_tanh_sigmoid": lambda a, b: (ad.exp(a * 0.3) + ad.tanh(b[:4]) * ad.sigmoid(a)).sum(),
    "elu_leaky": lambda a, b: (ad.elu(a) * ad.leaky_relu(b[:4], 0.2)).sum(),
    "masked_softmax": lambda a, b: (ad.masked_softmax(a, np.array(
        [[1, 1, 0], [0, 1, 1], [1, 0, 0], [1, 1, 1]], bool)) * b[:4]).sum(),
    "bce": lambda a, b: ad.bce_with_logits(ad.reshape(a, (12,)), (np.arange(12) % 2)),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_operator_gradients(name):
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    a = leaf(rng, 4, 3)
    b = leaf(rng, 6, 3) if name.startswith("matmul") else leaf(rng, 4, 3)
    if name == "matmul_batched_both":
        b = leaf(rng, 12)
    op = OPS[name]
    assert max_relative_error(lambda: op(a, b), {"a": a, "b": b}) < 1e-4


def test_gat_layer_gradients(rng):
    x = leaf(rng, 2, 4, 3)
    W = leaf(rng, 3, 4)
    a = leaf(rng, 2, 4)
    mask = ad.parameter(rng.uniform(0.5, 1.5, size=(2, 4, 4)))
    _, adj = toy_inputs(rng, batch=2, windows=1)
    adj = with_self_loops(adj[:, 0])
    params = {"x": x, "W": W, "a": a, "mask": mask}
    fn = lambda: (gat_layer(x, adj, W, a, 2, 0.2, edge_mask=mask) ** 1 if False else
                  gat_layer(x, adj, W, a, 2, 0.2, edge_mask=mask) * np.arange(16).reshape(4, 4)).sum()
    assert max_relative_error(fn, params) < 1e-4


@pytest.mark.parametrize("reverse", [False, True])
def test_gru_sequence_gradients(rng, reverse):
    H, I = 3, 2
    p = {f"g.{k}": leaf(rng, H + I, H) for k in ("W_z", "W_r", "W_h")}
    p.update({f"g.{k}": leaf(rng, H) for k in ("b_z", "b_r", "b_h")})
    X = leaf(rng, 4, 2, I)
    weights = rng.normal(size=(4, 2, H))
    fn = lambda: (gru_direction(X, p, "g.", H, reverse) * weights).sum()
    assert max_relative_error(fn, p | {"X": X}) < 1e-4


@pytest.mark.parametrize("variant", ["full", "spatial_only", "fully_connected"])
def test_full_model_gradients(rng, variant):
    from dataclasses import replace
    cfg = replace(TOY, variant=variant)
    model = DstGnn(cfg, seed=3)
    feats, adj = toy_inputs(rng)
    y = np.array([1.0, 0.0])

    def fn():
        # a fresh rng per evaluation keeps the dropout masks fixed
        logits = model(feats, adj, train=True, rng=np.random.default_rng(5))
        return ad.bce_with_logits(logits, y)

    assert max_relative_error(fn, model.params) < 1e-4


def test_nan_gradient_raises():
    w = ad.parameter([1.0, 2.0])
    with pytest.raises(NaNGradient):
        (w * np.array([np.inf, 1.0])).sum().backward()


def test_unused_head_bias_gets_zero_gradient():
    w = ad.parameter([1.0, 2.0])
    b = ad.parameter([0.5])
    (w.sum() + 0.0 * b).sum().backward()
    assert np.all(b.grad == 0)


# -- GAT ---------------------------------------------------------------------

def test_attention_rows_sum_to_one(rng):
    model = DstGnn(TOY, seed=0)
    feats, adj = toy_inputs(rng, batch=3, windows=2, nodes=5)
    trace = ForwardTrace([])
    model(feats, adj, trace=trace)
    assert len(trace.attention) == 2
    for alpha in trace.attention:
        np.testing.assert_allclose(alpha.sum(axis=-1), 1.0, atol=1e-9)
        # no attention mass outside the (self-looped) neighbourhood
        assert np.all(alpha[~np.expand_dims(with_self_loops(adj), 2).repeat(2, 2)] == 0)


def test_isolated_node_attends_to_itself(rng):
    x = Tensor(rng.normal(size=(3, 3)))
    W, a = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(2, 4)))
    adj = with_self_loops(np.zeros((3, 3), bool))
    out = gat_layer(x, adj, W, a, 2)
    np.testing.assert_allclose(out.data, ad.elu(x @ W).data, atol=1e-12)


def test_identical_neighbours_get_equal_attention(rng):
    x = rng.normal(size=(3, 3))
    x[2] = x[1]
    adj = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], bool)
    rec = []
    gat_layer(Tensor(x), with_self_loops(adj), Tensor(rng.normal(size=(3, 4))),
              Tensor(rng.normal(size=(2, 4))), 2, record=rec)
    np.testing.assert_allclose(rec[0][:, 0, 1], rec[0][:, 0, 2], atol=1e-12)


def test_node_permutation_invariance(rng):
    model = DstGnn(ModelConfig(), seed=1)
    feats, adj = toy_inputs(rng, batch=2, windows=3, nodes=19)
    feats = rng.normal(size=(2, 3, 19, 9))
    perm = rng.permutation(19)
    base = model.predict_logits(feats, adj)
    permuted = model.predict_logits(feats[:, :, perm], adj[:, :, perm][:, :, :, perm])
    np.testing.assert_allclose(permuted, base, atol=1e-9, rtol=0)


def test_eval_is_deterministic_and_length_one_works(rng):
    model = DstGnn(ModelConfig(), seed=2)
    feats = rng.normal(size=(1, 1, 19, 9))
    adj = np.zeros((1, 1, 19, 19), bool)
    a = model.predict_logits(feats, adj)
    assert np.isfinite(a).all() and np.array_equal(a, model.predict_logits(feats, adj))


def test_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        DstGnn(ModelConfig(), seed=0)(rng.normal(size=(1, 2, 19, 8)), np.zeros((1, 2, 19, 19)))


# -- GRU ---------------------------------------------------------------------

def _sig(v):
    return 1.0 / (1.0 + np.exp(-v))


def scalar_gru(x, h, Wz, Wr, Wh, bz, br, bh):
    """Element-by-element evaluation of the gated update."""
    H = len(h)
    hx = list(h) + list(x)
    z = [_sig(sum(hx[k] * Wz[k][j] for k in range(len(hx))) + bz[j]) for j in range(H)]
    r = [_sig(sum(hx[k] * Wr[k][j] for k in range(len(hx))) + br[j]) for j in range(H)]
    rhx = [r[k] * h[k] for k in range(H)] + list(x)
    c = [np.tanh(sum(rhx[k] * Wh[k][j] for k in range(len(rhx))) + bh[j]) for j in range(H)]
    return [(1 - z[j]) * h[j] + z[j] * c[j] for j in range(H)]


def test_gru_step_matches_scalar_oracle(rng):
    H, I = 3, 3
    x, h = rng.normal(size=I), rng.normal(size=H)
    Ws = [rng.normal(size=(H + I, H)) for _ in range(3)]
    bs = [rng.normal(size=H) for _ in range(3)]
    got = gru_step(x, h, *map(Tensor, Ws), *map(Tensor, bs)).data
    np.testing.assert_allclose(got, scalar_gru(x, h, *Ws, *bs), atol=1e-12)


@pytest.mark.parametrize("bias, expect", [(-50.0, "prev"), (50.0, "cand")])
def test_gru_update_gate_extremes(rng, bias, expect):
    H, I = 3, 2
    x, h = rng.normal(size=I), rng.normal(size=H)
    Wz, Wr, Wh = (Tensor(rng.normal(size=(H + I, H)) * 0.1) for _ in range(3))
    br, bh = Tensor(np.zeros(H)), Tensor(rng.normal(size=H))
    out = gru_step(x, h, Wz, Wr, Wh, Tensor(np.full(H, bias)), br, bh).data
    if expect == "prev":
        np.testing.assert_allclose(out, h, atol=1e-6)
    else:
        r = _sig(np.concatenate([h, x]) @ Wr.data)
        cand = np.tanh(np.concatenate([r * h, x]) @ Wh.data + bh.data)
        np.testing.assert_allclose(out, cand, atol=1e-6)


@pytest.mark.parametrize("reverse", [False, True])
def test_fused_gru_matches_unrolled(rng, reverse):
    H, I = 4, 3
    p = {f"g.{k}": leaf(rng, H + I, H) for k in ("W_z", "W_r", "W_h")}
    p.update({f"g.{k}": leaf(rng, H) for k in ("b_z", "b_r", "b_h")})
    X = Tensor(rng.normal(size=(5, 2, I)))
    g = rng.normal(size=(5, 2, H))
    grads = []
    outs = []
    for fused in (True, False):
        for t in p.values():
            t.zero_grad()
        out = gru_direction(X, p, "g.", H, reverse, fused=fused)
        (out * g).sum().backward()
        outs.append(out.data)
        grads.append({k: t.grad.copy() for k, t in p.items()})
    np.testing.assert_allclose(outs[0], outs[1], atol=1e-12)
    for k in p:
        np.testing.assert_allclose(grads[0][k], grads[1][k], atol=1e-10)


# -- dropout, parameters, optimiser, checkpoints ----------------------------

def test_dropout_statistics():
    x = Tensor(np.ones(10_000))
    assert ad.dropout(x, 0.3, None, train=False) is x
    out = ad.dropout(x, 0.3, np.random.default_rng(0), train=True).data
    kept = np.mean(out > 0)
    sd = np.sqrt(0.3 * 0.7 / 10_000)
    assert abs(kept - 0.7) < 3 * sd
    np.testing.assert_allclose(out[out > 0], 1 / 0.7)


def test_parameter_count_is_a_function_of_config():
    a = DstGnn(ModelConfig(), seed=0).parameter_count()
    b = DstGnn(ModelConfig(), seed=99).parameter_count()
    assert a == b == 527617
    spatial = DstGnn(ModelConfig(variant="spatial_only"), seed=0)
    full = DstGnn(ModelConfig(), seed=0)
    gru = gru_param_names(full.params)
    assert gru and not gru_param_names(spatial.params)
    head_diff = (full.params["mlp.W0"].data.size - spatial.params["mlp.W0"].data.size)
    assert full.parameter_count() - spatial.parameter_count() == \
        sum(full.params[k].data.size for k in gru) + head_diff


def test_init_is_seeded():
    a, b = init_params(TOY, 7), init_params(TOY, 7)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert all(np.all(a[k].data == 0) for k in a if k.rsplit(".", 1)[1].startswith("b"))


def test_cosine_schedule():
    assert cosine_lr(0, 100, 1e-3) == 1e-3
    assert cosine_lr(100, 100, 1e-3) == pytest.approx(0, abs=1e-18)
    assert cosine_lr(50, 100, 1e-3) == pytest.approx(5e-4)
    with pytest.raises(ValueError):
        cosine_lr(101, 100, 1e-3)


def test_adamw_zero_gradient_cases():
    p = {"w": ad.parameter([1.0, -2.0])}
    AdamW(lr=0.1, weight_decay=0.0).step(p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"].data, [1.0, -2.0])
    AdamW(lr=0.1, weight_decay=0.5).step(p, {"w": np.zeros(2)})
    np.testing.assert_allclose(p["w"].data, np.array([1.0, -2.0]) * (1 - 0.05))


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10).filter(lambda g: abs(g) > 1e-6), st.floats(1e-5, 1e-1))
def test_adamw_first_step_closed_form(g, lr):
    p = {"w": ad.parameter([0.0])}
    AdamW(lr=lr, weight_decay=0.0).step(p, {"w": np.array([g])})
    assert p["w"].data[0] == pytest.approx(-lr * g / (abs(g) + 1e-8), rel=1e-9)


def test_checkpoint_round_trip(tmp_path, rng):
    model = DstGnn(TOY, seed=4)
    save_checkpoint(model, tmp_path / "m.json", {"seed": 4})
    back, extra = load_checkpoint(tmp_path / "m.json")
    assert extra == {"seed": 4} and back.cfg == model.cfg
    feats, adj = toy_inputs(rng)
    np.testing.assert_array_equal(back.predict_logits(feats, adj), model.predict_logits(feats, adj))
    with pytest.raises(FileNotFoundError, match="checkpoint not found"):
        load_checkpoint(tmp_path / "missing.json")
