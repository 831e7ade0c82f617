"""Spatio-temporal graph network: GAT encoder -> BiGRU -> MLP head."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

VARIANTS = ("full", "spatial_only", "fully_connected")


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int = 9
    gat_heads: int = 2
    gat_hidden: int = 64
    gat_layers: int = 2
    gru_layers: int = 2
    gru_hidden: int = 128
    mlp_hidden: int = 64
    dropout_backbone: float = 0.182
    dropout_head: float = 0.5
    leaky_slope: float = 0.2
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    @property
    def uses_gru(self) -> bool:
        return self.variant != "spatial_only"

    def to_dict(self) -> dict:
        return asdict(self)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_params(cfg: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Glorot-uniform weights and zero biases, drawn in a fixed name order."""
    rng = np.random.default_rng(seed)
    p: dict[str, Tensor] = {}
    d_in = cfg.in_dim
    hd = cfg.gat_heads * cfg.gat_hidden
    for l in range(cfg.gat_layers):
        p[f"gat{l}.W"] = glorot(rng, d_in, hd)
        p[f"gat{l}.a"] = glorot(rng, 2 * cfg.gat_hidden, 1, (cfg.gat_heads, 2 * cfg.gat_hidden))
        d_in = hd
    emb = hd
    if cfg.uses_gru:
        h = cfg.gru_hidden
        x_dim = emb
        for l in range(cfg.gru_layers):
            for d in ("fwd", "bwd"):
                for gate in ("W_z", "W_r", "W_h"):
                    p[f"gru{l}.{d}.{gate}"] = glorot(rng, h + x_dim, h)
                for gate in ("b_z", "b_r", "b_h"):
                    p[f"gru{l}.{d}.{gate}"] = np.zeros(h)
            x_dim = 2 * h
        head_in = 2 * h
    else:
        head_in = emb
    p["mlp.W0"] = glorot(rng, head_in, cfg.mlp_hidden)
    p["mlp.b0"] = np.zeros(cfg.mlp_hidden)
    p["mlp.W1"] = glorot(rng, cfg.mlp_hidden, 1)
    p["mlp.b1"] = np.zeros(1)
    return {k: ad.parameter(v, name=k) for k, v in p.items()}


def parameter_count(params: dict[str, Tensor]) -> int:
    return int(sum(t.data.size for t in params.values()))


def with_self_loops(adjacency: np.ndarray) -> np.ndarray:
    adj = np.array(adjacency, dtype=bool, copy=True)
    n = adj.shape[-1]
    adj[..., np.arange(n), np.arange(n)] = True
    return adj


def gat_layer(x: Tensor, adj: np.ndarray, W: Tensor, a: Tensor, heads: int,
              slope: float = 0.2, edge_mask: Tensor | None = None,
              record: list | None = None) -> Tensor:
    """One multi-head attention layer over ``[..., N, F]`` node features.

    ``adj`` is boolean ``[..., N, N]`` (row i lists the neighbours j of i)
    and must already contain self-loops. Head outputs are concatenated.
    """
    lead = x.shape[:-2]
    n = x.shape[-2]
    d = W.shape[1] // heads
    k = len(lead)
    wh = (x @ W).reshape(lead + (n, heads, d))
    perm = tuple(range(k)) + (k + 1, k, k + 2)
    wh = wh.transpose(perm)  # [..., H, N, D]
    # a = [a_src | a_dst] per head -> scores for both roles in one matmul
    a_cols = a.reshape((heads, 2, d)).transpose((0, 2, 1))    # [H, D, 2]
    scores = wh @ a_cols                                       # [..., H, N, 2]
    s_src = scores[..., 0:1]
    s_dst = scores[..., 1].reshape(lead + (heads, 1, n))
    e = ad.leaky_relu(s_src + s_dst, slope)
    mask = np.expand_dims(adj, axis=-3)
    alpha = ad.masked_softmax(e, mask, axis=-1)
    if record is not None:
        record.append(alpha.data)
    if edge_mask is not None:
        alpha = alpha * edge_mask.reshape(edge_mask.shape[:-2] + (1,) + edge_mask.shape[-2:])
    out = ad.elu(alpha @ wh)
    return out.transpose(perm).reshape(lead + (n, heads * d))


def gru_step(x_t, h_prev, W_z, W_r, W_h, b_z=None, b_r=None, b_h=None) -> Tensor:
    """One GRU update over the concatenated input ``[h_prev, x_t]``.

    z = sigmoid(W_z [h, x]);  r = sigmoid(W_r [h, x])
    h~ = tanh(W_h [r*h, x]);  h' = (1 - z) * h + z * h~
    Weight matrices are laid out ``[(H + I) × H]`` with hidden rows first.
    """
    x_t, h_prev = ad.as_tensor(x_t), ad.as_tensor(h_prev)
    hx = ad.concat([h_prev, x_t], axis=-1)
    z = hx @ W_z
    r = hx @ W_r
    if b_z is not None:
        z = z + b_z
        r = r + b_r
    z = ad.sigmoid(z)
    r = ad.sigmoid(r)
    c = ad.concat([r * h_prev, x_t], axis=-1) @ W_h
    if b_h is not None:
        c = c + b_h
    c = ad.tanh(c)
    return (1.0 - z) * h_prev + z * c


def gru_direction(X: Tensor, p: dict[str, Tensor], prefix: str, hidden: int,
                  reverse: bool, fused: bool = True) -> Tensor:
    """Run one direction over ``X`` ``[T, B, I]``; returns ``[T, B, H]``.

    Input projections for all steps are one matmul, which is algebraically
    the same as ``gru_step`` on the concatenated ``[h, x]`` vector.
    ``fused=False`` unrolls ``gru_step`` node by node (slow, used to
    cross-check the fused recurrence).
    """
    W_z, W_r, W_h = p[prefix + "W_z"], p[prefix + "W_r"], p[prefix + "W_h"]
    H = hidden
    if not fused:
        T, B = X.shape[0], X.shape[1]
        h = Tensor(np.zeros((B, H)))
        out: list[Tensor | None] = [None] * T
        for t in (range(T - 1, -1, -1) if reverse else range(T)):
            h = gru_step(X[t], h, W_z, W_r, W_h,
                         p[prefix + "b_z"], p[prefix + "b_r"], p[prefix + "b_h"])
            out[t] = h
        return ad.stack(out, axis=0)
    wx = ad.concat([W_z[H:], W_r[H:], W_h[H:]], axis=1)        # [I, 3H]
    wh_zr = ad.concat([W_z[:H], W_r[:H]], axis=1)               # [H, 2H]
    b_zr = ad.concat([p[prefix + "b_z"], p[prefix + "b_r"]], axis=0)
    xp = X @ wx                                                  # [T, B, 3H]
    return ad.gru_sequence(xp, wh_zr, W_h[:H], b_zr, p[prefix + "b_h"], reverse)


@dataclass
class ForwardTrace:
    attention: list[np.ndarray]


class DstGnn:
    """Parameters plus the forward pass.

    Inputs are batched: features ``[B, T, N, F]`` and boolean adjacency
    ``[B, T, N, N]`` (self-loops are added here). The output is one logit
    per sequence, shape ``[B]``.
    """

    fused_gru = True

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor] | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)

    def parameter_count(self) -> int:
        return parameter_count(self.params)

    def forward(self, features, adjacency: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None, edge_mask: Tensor | None = None,
                trace: ForwardTrace | None = None) -> Tensor:
        cfg, p = self.cfg, self.params
        x = ad.as_tensor(features)
        if x.ndim != 4 or x.shape[-1] != cfg.in_dim:
            from ..errors import ShapeMismatch
            raise ShapeMismatch("model input [B, T, N, F]", f"(*, *, *, {cfg.in_dim})", x.shape)
        adj = np.asarray(adjacency, dtype=bool)
        if cfg.variant == "fully_connected":
            adj = np.ones_like(adj)
        adj = with_self_loops(adj)
        record = trace.attention if trace is not None else None
        h = x
        for l in range(cfg.gat_layers):
            h = gat_layer(h, adj, p[f"gat{l}.W"], p[f"gat{l}.a"], cfg.gat_heads,
                          cfg.leaky_slope, edge_mask, record)
            h = ad.dropout(h, cfg.dropout_backbone, rng, train)
        emb = h.mean(axis=2)  # [B, T, D] readout over nodes
        if cfg.uses_gru:
            z = self._bigru(emb, train, rng)
        else:
            z = emb.mean(axis=1)
        hid = ad.elu(z @ p["mlp.W0"] + p["mlp.b0"])
        hid = ad.dropout(hid, cfg.dropout_head, rng, train)
        logit = hid @ p["mlp.W1"] + p["mlp.b1"]
        return logit.reshape((logit.shape[0],))

    __call__ = forward

    def _bigru(self, emb: Tensor, train: bool, rng) -> Tensor:
        cfg, p = self.cfg, self.params
        X = emb.transpose((1, 0, 2))  # [T, B, D]
        fwd = bwd = None
        for l in range(cfg.gru_layers):
            fwd = gru_direction(X, p, f"gru{l}.fwd.", cfg.gru_hidden, False, self.fused_gru)
            bwd = gru_direction(X, p, f"gru{l}.bwd.", cfg.gru_hidden, True, self.fused_gru)
            if l < cfg.gru_layers - 1:
                X = ad.dropout(ad.concat([fwd, bwd], axis=-1), cfg.dropout_backbone, rng, train)
        # final forward state and the backward pass's state after reaching t=0
        return ad.concat([fwd[-1], bwd[0]], axis=-1)

    def predict_logits(self, features: np.ndarray, adjacency: np.ndarray,
                       batch_size: int = 64) -> np.ndarray:
        out = []
        with ad.no_grad():
            for s in range(0, len(features), batch_size):
                out.append(self.forward(features[s:s + batch_size],
                                        adjacency[s:s + batch_size]).data)
        return np.concatenate(out) if out else np.zeros(0)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in arrays.items():
            self.params[k].data = np.array(v, dtype=np.float64)

    def with_config(self, **changes) -> "DstGnn":
        return DstGnn(replace(self.cfg, **changes), self.params)


def gru_param_names(params: Iterable[str]) -> list[str]:
    return [k for k in params if k.startswith("gru")]
