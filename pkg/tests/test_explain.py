import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dstgnn.dataset_io import CHANNELS
from dstgnn.explain import (
    channel_importance, edge_importance, feature_group_shares, feature_importance,
    integrated_gradients, top_connections, write_attributions_csv, write_edge_importance_csv,
    write_importance_csv, write_top_edges_csv,
)
from dstgnn.features import FEATURE_NAMES
from dstgnn.nn.model import DstGnn, ModelConfig

SMALL = ModelConfig(gat_hidden=4, gru_hidden=5, mlp_hidden=4)


class LinearModel:
    """F(x) = <w, x>, exposing the attribute surface IG relies on."""

    def __init__(self, w):
        from dstgnn.nn import autodiff as ad
        self.w = w
        self.params = {}
        self._ad = ad

    def __call__(self, x, adj):
        ad = self._ad
        return (ad.as_tensor(x) * self.w).sum(axis=(1, 2, 3))

    def predict_logits(self, x, adj):
        return (np.asarray(x) * self.w).sum(axis=(1, 2, 3))


def _sample(rng, t=3):
    feats = rng.normal(size=(t, 19, 9))
    adj = rng.random((t, 19, 19)) < 0.4
    adj = adj | np.swapaxes(adj, 1, 2)
    adj[:, np.arange(19), np.arange(19)] = False
    return feats, adj


def test_ig_linear_closed_form(rng):
    w = rng.normal(size=(3, 19, 9))
    x, adj = _sample(rng)
    m = integrated_gradients(LinearModel(w), x, adj, steps=4)
    np.testing.assert_allclose(m.values, w * x, atol=1e-12)


def test_ig_sample_equals_baseline(rng):
    model = DstGnn(SMALL, seed=0)
    x, adj = _sample(rng)
    m = integrated_gradients(model, x, adj, baseline=x.copy(), steps=8)
    assert np.all(m.values == 0)


def test_ig_completeness_and_convergence(rng):
    model = DstGnn(SMALL, seed=1)
    x, adj = _sample(rng)
    m = integrated_gradients(model, x, adj, steps=128)
    assert abs(m.logit - m.baseline_logit) > 1e-3
    assert m.completeness_error < 0.01
    m2 = integrated_gradients(model, x, adj, steps=256)
    assert abs(m2.values.sum() - m.values.sum()) / abs(m.values.sum()) < 0.005


def test_ig_shape_checks(rng):
    x, adj = _sample(rng)
    with pytest.raises(ValueError):
        integrated_gradients(DstGnn(SMALL), x, adj, baseline=np.zeros((2, 19, 9)))


def test_edge_importance_contract(rng):
    model = DstGnn(SMALL, seed=2)
    samples = [_sample(rng) for _ in range(2)]
    # make one edge absent from every topology
    for _, adj in samples:
        adj[:, 0, 5] = adj[:, 5, 0] = False
    e = edge_importance(model, samples)
    assert e.max() == 1.0
    np.testing.assert_array_equal(e, e.T)
    assert np.all(np.diag(e) == 0) and e[0, 5] == 0


def test_edge_importance_toy_graph():
    cfg = ModelConfig(in_dim=2, gat_heads=1, gat_hidden=3, gat_layers=1, mlp_hidden=3,
                      variant="spatial_only")
    model = DstGnn(cfg, seed=4)
    feats = np.zeros((1, 3, 2))
    feats[0, 1] = [1.5, -2.0]  # only node 1 carries signal
    adj = np.zeros((1, 3, 3), bool)
    adj[0, 0, 1] = adj[0, 1, 0] = adj[0, 0, 2] = adj[0, 2, 0] = True
    e = edge_importance(model, [(feats, adj)])
    assert e[0, 1] > e[0, 2]
    assert e[0, 2] == 0


def test_importance_aggregations():
    u = np.ones((30, 19, 9))
    np.testing.assert_allclose(channel_importance(u), 1 / 19)
    np.testing.assert_allclose(feature_importance(u), 1 / 9)
    a = np.zeros((30, 19, 9))
    cz, beta = CHANNELS.index("Cz"), FEATURE_NAMES.index("Beta")
    a[:, cz, beta] = -2.0
    assert np.array_equal(channel_importance(a), np.eye(19)[cz])
    assert np.array_equal(feature_importance(a), np.eye(9)[beta])
    assert feature_group_shares(feature_importance(a)) == {"Beta": 1.0, "Hjorth": 0.0}
    assert np.all(channel_importance(np.zeros((2, 19, 9))) == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_importances_follow_channel_permutations(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 19, 9))
    perm = rng.permutation(19)
    np.testing.assert_allclose(channel_importance(a[:, perm]), channel_importance(a)[perm])
    fperm = rng.permutation(9)
    np.testing.assert_allclose(feature_importance(a[..., fperm]), feature_importance(a)[fperm])


def test_top_connections_order_and_ties():
    e = np.full((19, 19), 0.5)
    np.fill_diagonal(e, 0)
    rows = top_connections(e, 3)
    labels = sorted(tuple(sorted((a, b))) for i, a in enumerate(CHANNELS)
                    for b in CHANNELS[i + 1:])
    assert [(a, b) for a, b, _ in rows] == labels[:3]
    assert top_connections(e, 0) == []
    e[CHANNELS.index("Cz"), CHANNELS.index("T7")] = e[CHANNELS.index("T7"), CHANNELS.index("Cz")] = 1
    assert top_connections(e, 1) == [("Cz", "T7", 1.0)]
    with pytest.raises(ValueError):
        top_connections(e, 172)


def test_writers(tmp_path, rng):
    a = rng.normal(size=(2, 19, 9))
    write_attributions_csv(a, tmp_path / "ig.csv")
    lines = (tmp_path / "ig.csv").read_text().splitlines()
    assert lines[0] == "window,channel,feature,value" and len(lines) == 1 + 2 * 19 * 9
    write_importance_csv(channel_importance(a), CHANNELS, "channel", tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[1].startswith("Fp1,")
    e = rng.uniform(size=(19, 19))
    write_edge_importance_csv(e, tmp_path / "e.csv")
    write_top_edges_csv(top_connections((e + e.T) / 2, 15), tmp_path / "t.csv")
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 16
