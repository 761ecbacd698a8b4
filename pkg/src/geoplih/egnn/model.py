"""Equivariant cross-graph message passing over a (protein, ligand) pair.

Per layer and per graph: edge messages from endpoint features and squared
distance, sum/mean/max aggregation fused by an MLP, an equivariant
coordinate step, then distance-gated cross attention between the graphs
and a residual node update.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Mapping

import numpy as np

from ..diffcore import ParamStore, Tape, Tensor, bind, mlp_forward, ops
from ..errors import ContractError, DimensionError
from ..molgraph import N_FEATURES, MolecularGraph

KINDS = ("protein", "ligand")
COORD_FORMS = ("relative_vector", "literal_scalar")
# final-layer init gain for the coordinate MLP, keeps early steps near identity
COORD_GAIN = 1e-3


@dataclass(frozen=True)
class LayerConfig:
    feature_dim: int = 64
    n_layers: int = 3
    th_dist: float = 5.0
    coord_update_form: str = "relative_vector"
    attention_heads: int = 1
    hidden_dim: int = 64
    leaky_slope: float = 0.2
    freeze_coords: bool = False

    def __post_init__(self):
        if self.feature_dim <= 0 or self.hidden_dim <= 0:
            raise ContractError("feature_dim and hidden_dim must be positive")
        if self.n_layers < 1:
            raise ContractError("n_layers must be at least 1")
        if not self.th_dist > 0:
            raise ContractError("th_dist must be positive")
        if self.coord_update_form not in COORD_FORMS:
            raise ContractError(f"coord_update_form must be one of {COORD_FORMS}")
        if self.attention_heads < 1 or self.feature_dim % self.attention_heads:
            raise ContractError("attention_heads must divide feature_dim")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "LayerConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class ComplexState:
    h_P: Tensor
    h_L: Tensor
    x_P: Tensor
    x_L: Tensor
    layer: int = 0
    attention: list = field(default_factory=list)


def _mlp_sizes(cfg: LayerConfig, n_in: int, n_out: int) -> list[int]:
    return [n_in, cfg.hidden_dim, cfg.hidden_dim, n_out]


def init_params(cfg: LayerConfig, seed: int, with_head: bool = False) -> ParamStore:
    """Fresh, seed-reproducible parameters for the encoder (and optional head)."""
    d = cfg.feature_dim
    dh = d // cfg.attention_heads
    store = ParamStore(rng_seed=int(seed), meta={"layer_config": cfg.to_dict()})
    for g in KINDS:
        store.add_mlp(f"embed.{g}", [N_FEATURES, d])
    coord_out = 1 if cfg.coord_update_form == "relative_vector" else 3
    for l in range(cfg.n_layers):
        for g in KINDS:
            p = f"layer{l}.{g}"
            store.add_mlp(f"{p}.phi_e", _mlp_sizes(cfg, 2 * d + 1, d))
            store.add_mlp(f"{p}.phi_aggr", _mlp_sizes(cfg, 3 * d, d))
            store.add_mlp(f"{p}.phi_x", _mlp_sizes(cfg, d, coord_out), final_gain=COORD_GAIN)
            store.add_mlp(f"{p}.phi_n", _mlp_sizes(cfg, 3 * d, d))
            for k in range(cfg.attention_heads):
                lim = np.sqrt(6.0 / (d + dh))
                name = f"{p}.att.W{k}"
                store[name] = _uniform(seed, name, lim, (d, dh))
                name = f"{p}.att.a{k}"
                store[name] = _uniform(seed, name, np.sqrt(6.0 / (2 * dh + 1)), (2 * dh, 1))
    if with_head:
        add_head(store, cfg)
    return store


def add_head(store: ParamStore, cfg: LayerConfig) -> None:
    store.add_mlp("head", _mlp_sizes(cfg, 2 * cfg.feature_dim, 1))


def _uniform(seed, name, limit, shape):
    from ..diffcore.params import _name_rng
    return _name_rng(seed, name).uniform(-limit, limit, size=shape)


def is_head_param(name: str) -> bool:
    return name.startswith("head.")


# individual stages

def embed_inputs(graph: MolecularGraph, params: Mapping[str, Tensor], kind: str | None = None) -> Tensor:
    kind = kind or graph.origin_tag
    feats = graph.node_features
    if feats.ndim != 2 or feats.shape[1] != N_FEATURES:
        raise ContractError(f"node features must be [N, {N_FEATURES}], got {feats.shape}")
    w = params[f"embed.{kind}.0.weight"]
    return mlp_forward(params, f"embed.{kind}", Tensor(feats), [N_FEATURES, w.shape[1]],
                       activation="identity")


def compute_messages(h, x, target, source, params, prefix: str) -> Tensor:
    """m_ij = phi_e(h_i | h_j | |x_i - x_j|^2) for every directed edge (i <- j)."""
    d = h.shape[1]
    diff = ops.sub(ops.gather_rows(x, target), ops.gather_rows(x, source))
    dist2 = ops.sum_last(ops.square(diff))
    inp = ops.concat([ops.gather_rows(h, target), ops.gather_rows(h, source), dist2])
    w = params[f"{prefix}.phi_e.0.weight"]
    hidden = w.shape[1]
    return mlp_forward(params, f"{prefix}.phi_e", inp, [2 * d + 1, hidden, hidden, d])


def aggregate(messages, target, n_nodes: int, params, prefix: str) -> tuple[Tensor, Tensor]:
    """Fused sum/mean/max aggregate M_i; also returns the raw concatenation."""
    parts = ops.concat([
        ops.segment_reduce(messages, target, n_nodes, "sum"),
        ops.segment_reduce(messages, target, n_nodes, "mean"),
        ops.segment_reduce(messages, target, n_nodes, "max"),
    ])
    d = messages.shape[1]
    hidden = params[f"{prefix}.phi_aggr.0.weight"].shape[1]
    return mlp_forward(params, f"{prefix}.phi_aggr", parts, [3 * d, hidden, hidden, d]), parts


def update_coordinates(x, target, source, messages, params, prefix: str,
                       form: str = "relative_vector") -> Tensor:
    n = x.shape[0]
    d = messages.shape[1]
    hidden = params[f"{prefix}.phi_x.0.weight"].shape[1]
    diff = ops.sub(ops.gather_rows(x, target), ops.gather_rows(x, source))
    if form == "relative_vector":
        w = mlp_forward(params, f"{prefix}.phi_x", messages, [d, hidden, hidden, 1])
        summed = ops.segment_reduce(ops.mul(diff, w), target, n, "sum")
        deg = np.bincount(np.asarray(target, dtype=np.int64), minlength=n).astype(np.float64)
        scale = (1.0 / np.maximum(deg, 1.0))[:, None]
        return ops.add(x, ops.mul(summed, scale))
    if form == "literal_scalar":
        w = mlp_forward(params, f"{prefix}.phi_x", messages, [d, hidden, hidden, 3])
        dist2 = ops.sum_last(ops.square(diff))
        return ops.add(x, ops.segment_reduce(ops.mul(dist2, w), target, n, "sum"))
    raise ContractError(f"unknown coordinate update form {form!r}")


def cross_pairs(x_query: np.ndarray, x_key: np.ndarray, th_dist: float) -> tuple[np.ndarray, np.ndarray]:
    """(query, key) index pairs closer than ``th_dist`` (strict)."""
    diff = x_query[:, None, :] - x_key[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    q, k = np.nonzero(dist < th_dist)
    return q.astype(np.int64), k.astype(np.int64)


def _attend(h_q, h_k, x_q, x_k, params, prefix, th_dist, heads, slope):
    q_idx, k_idx = cross_pairs(np.asarray(x_q.data), np.asarray(x_k.data), th_dist)
    n_q = h_q.shape[0]
    outs, coeffs = [], []
    for k in range(heads):
        W = params[f"{prefix}.att.W{k}"]
        a = params[f"{prefix}.att.a{k}"]
        dh = W.shape[1]
        a_np = a.data
        if a_np.shape != (2 * dh, 1):
            raise DimensionError(f"{prefix}.att.a{k} must be [{2 * dh}, 1], got {a_np.shape}")
        wq = ops.matmul(h_q, W)
        wk = ops.matmul(h_k, W)
        a_self = _rows(a, 0, dh)
        a_other = _rows(a, dh, 2 * dh)
        s_q = ops.matmul(wq, a_self)
        s_k = ops.matmul(wk, a_other)
        if q_idx.size == 0:
            outs.append(Tensor(np.zeros((n_q, dh))))
            coeffs.append(np.zeros(0))
            continue
        logits = ops.leaky_relu(ops.add(ops.gather_rows(s_q, q_idx), ops.gather_rows(s_k, k_idx)), slope)
        coef = ops.segment_softmax(logits, q_idx, n_q)
        outs.append(ops.segment_reduce(ops.mul(coef, ops.gather_rows(wk, k_idx)), q_idx, n_q, "sum"))
        coeffs.append(coef.data[:, 0])
    mu = outs[0] if heads == 1 else ops.concat(outs)
    return mu, (q_idx, k_idx, coeffs)


def _rows(t: Tensor, start: int, stop: int) -> Tensor:
    """Differentiable row slice of a 2-D tensor."""
    return ops.gather_rows(t, np.arange(start, stop))


def cross_attention(h_P, h_L, x_P, x_L, params, cfg: LayerConfig, layer: int):
    """Cross-graph messages for every ligand and protein node.

    Ligand nodes attend over protein nodes within ``th_dist`` and vice
    versa; nodes with no such neighbour receive zeros.
    """
    mu_L, trace_L = _attend(h_L, h_P, x_L, x_P, params, f"layer{layer}.ligand",
                            cfg.th_dist, cfg.attention_heads, cfg.leaky_slope)
    mu_P, trace_P = _attend(h_P, h_L, x_P, x_L, params, f"layer{layer}.protein",
                            cfg.th_dist, cfg.attention_heads, cfg.leaky_slope)
    return mu_P, mu_L, {"ligand": trace_L, "protein": trace_P}


def update_node_features(h_enc, M, mu, params, prefix: str) -> Tensor:
    """h^{l+1} = h_enc + phi_n(h_enc | M | mu)."""
    d = h_enc.shape[1]
    hidden = params[f"{prefix}.phi_n.0.weight"].shape[1]
    inp = ops.concat([h_enc, M, mu])
    return ops.add(h_enc, mlp_forward(params, f"{prefix}.phi_n", inp, [3 * d, hidden, hidden, d]))


# full model

def _as_params(params, tape: Tape | None):
    if isinstance(params, ParamStore):
        return bind(params, tape)
    if params and all(isinstance(v, Tensor) for v in params.values()):
        return params
    if tape is not None:
        return tape.params(params)
    return {k: v if isinstance(v, Tensor) else Tensor(v, name=k) for k, v in params.items()}


def forward_complex(
    protein: MolecularGraph,
    ligand: MolecularGraph,
    params,
    cfg: LayerConfig,
    tape: Tape | None = None,
) -> ComplexState:
    """Run ``cfg.n_layers`` layers over the pair and return the final state.

    ``params`` is a ParamStore or a mapping of names to arrays/tensors.
    When ``tape`` is given, parameters are watched on it so the result can
    be differentiated.
    """
    if protein.n_nodes == 0 or ligand.n_nodes == 0:
        raise ContractError("both graphs must be non-empty")
    p = _as_params(params, tape)
    graphs = {"protein": protein, "ligand": ligand}
    h = {g: embed_inputs(graphs[g], p, g) for g in KINDS}
    x = {g: Tensor(graphs[g].coordinates) for g in KINDS}
    idx = {g: graphs[g].directed() for g in KINDS}
    state = ComplexState(h["protein"], h["ligand"], x["protein"], x["ligand"], 0)

    for l in range(cfg.n_layers):
        h_enc, M, x_new = {}, {}, {}
        for g in KINDS:
            prefix = f"layer{l}.{g}"
            target, source = idx[g]
            n = graphs[g].n_nodes
            m = compute_messages(h[g], x[g], target, source, p, prefix)
            M[g], _ = aggregate(m, target, n, p, prefix)
            h_enc[g] = ops.add(h[g], M[g])
            if cfg.freeze_coords:
                x_new[g] = x[g]
            else:
                x_new[g] = update_coordinates(x[g], target, source, m, p, prefix,
                                              cfg.coord_update_form)
        mu_P, mu_L, trace = cross_attention(h_enc["protein"], h_enc["ligand"],
                                            x_new["protein"], x_new["ligand"], p, cfg, l)
        mu = {"protein": mu_P, "ligand": mu_L}
        for g in KINDS:
            h[g] = update_node_features(h_enc[g], M[g], mu[g], p, f"layer{l}.{g}")
        x = x_new
        state = ComplexState(h["protein"], h["ligand"], x["protein"], x["ligand"], l + 1,
                             state.attention + [trace])
    return state


def predict_affinity(state: ComplexState, params, cfg: LayerConfig) -> Tensor:
    """Head MLP over summed ligand and protein embeddings; returns a [1, 1] tensor."""
    params = _as_params(params, None)
    d = cfg.feature_dim
    pooled = ops.concat([ops.sum_rows(state.h_L), ops.sum_rows(state.h_P)])
    return mlp_forward(params, "head", pooled, [2 * d, cfg.hidden_dim, cfg.hidden_dim, 1])
