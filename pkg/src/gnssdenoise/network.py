"""The denoising network: an adaptive-adjacency graph recurrent encoder
followed by a cascade of temporal and spatial self-attention, ending in
an affine projection back to the two displacement components.

Shapes use B = batch, N = stations, T = window days, C = input
components, h = recurrent hidden size, d = attention width.

The graph structure is not given: an [N, N] adjacency matrix is derived
from learnable node embeddings as row-softmax(ReLU(sym(E Eᵀ))), and the
recurrent cell draws per-node gate weights from a shared weight pool by
contracting the embedding axis.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ABLATIONS = ("full", "no_transformer", "spatial_attention_only",
             "temporal_attention_only")


@dataclass
class ModelConfig:
    """Architecture hyperparameters; defaults match the full-scale setup."""

    n_stations: int
    n_components: int = 2
    window: int = 60
    embed_dim: int = 32        # node-embedding width
    hidden_dim: int = 128      # recurrent state width
    attn_dim: int = 128        # attention model width
    heads: int = 4
    ffn_dim: int = 0           # 0 = 2 * attn_dim
    attn_dropout: float = 0.1
    out_dropout: float = 0.5
    positional_encoding: bool = False
    ablation: str = "full"

    def __post_init__(self):
        if self.ffn_dim == 0:
            self.ffn_dim = 2 * self.attn_dim
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; "
                             f"choose from {ABLATIONS}")
        if self.attn_dim % self.heads:
            raise ValueError(
                f"attention width {self.attn_dim} not divisible by "
                f"{self.heads} heads")

    @property
    def head_dim(self) -> int:
        return self.attn_dim // self.heads

    @property
    def uses_temporal(self) -> bool:
        return self.ablation in ("full", "temporal_attention_only")

    @property
    def uses_spatial(self) -> bool:
        return self.ablation in ("full", "spatial_attention_only")

    @property
    def head_input_dim(self) -> int:
        """Width of the tensor entering the output projection."""
        return self.hidden_dim if self.ablation == "no_transformer" \
            else self.attn_dim


_GATES = ("update", "reset", "cand")


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map of every trainable tensor."""
    c = config
    feat = c.n_components + c.hidden_dim
    shapes: dict[str, tuple[int, ...]] = {
        "node_embed": (c.n_stations, c.embed_dim)}
    for gate in _GATES:
        shapes[f"gru_w_{gate}"] = (c.embed_dim, feat, c.hidden_dim)
        shapes[f"gru_b_{gate}"] = (c.embed_dim, c.hidden_dim)
    needs_proj = (c.ablation != "no_transformer"
                  and c.hidden_dim != c.attn_dim)
    if needs_proj:
        shapes["in_proj_w"] = (c.hidden_dim, c.attn_dim)
        shapes["in_proj_b"] = (c.attn_dim,)
    for prefix, active in (("t", c.uses_temporal), ("s", c.uses_spatial)):
        if not active:
            continue
        d = c.attn_dim
        shapes[f"{prefix}_ln1_gain"] = (d,)
        shapes[f"{prefix}_ln1_bias"] = (d,)
        for proj in ("q", "k", "v", "m"):
            shapes[f"{prefix}_attn_{proj}"] = (d, d)
        shapes[f"{prefix}_ln2_gain"] = (d,)
        shapes[f"{prefix}_ln2_bias"] = (d,)
        shapes[f"{prefix}_ffn_w1"] = (d, c.ffn_dim)
        shapes[f"{prefix}_ffn_b1"] = (c.ffn_dim,)
        shapes[f"{prefix}_ffn_w2"] = (c.ffn_dim, d)
        shapes[f"{prefix}_ffn_b2"] = (d,)
    shapes["out_w"] = (c.head_input_dim, c.n_components)
    shapes["out_b"] = (c.n_components,)
    return shapes


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Seeded initialization; biases and layer-norm offsets start at
    zero, layer-norm gains at one, everything else scaled Gaussian."""
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(("_bias", "_b1", "_b2", "_b")) or name == "out_b" \
                or name.startswith("gru_b"):
            data = np.zeros(shape)
        elif name.endswith("_gain"):
            data = np.ones(shape)
        elif name == "node_embed":
            data = rng.normal(size=shape) / np.sqrt(config.embed_dim)
        else:
            fan_in = int(np.prod(shape[:-1]))
            data = rng.normal(size=shape) * np.sqrt(2.0 / (fan_in + shape[-1]))
        params[name] = ad.parameter(data)
    return params


# ---------------------------------------------------------------------------
# adjacency


def compute_adjacency(embed: Tensor) -> Tensor:
    """Row-stochastic adjacency from node embeddings.

    The Gram matrix is explicitly symmetrized before the ReLU so the
    pre-softmax matrix is exactly symmetric regardless of how the
    underlying matrix product rounds; the row softmax then yields
    nonnegative rows summing to one.
    """
    gram = ad.matmul(embed, ad.transpose(embed, (1, 0)))
    sym = ad.scale(ad.add(gram, ad.transpose(gram, (1, 0))), 0.5)
    return ad.softmax(ad.relu(sym), axis=1)


def relu_gram(embed: np.ndarray) -> np.ndarray:
    """The pre-softmax matrix ReLU(sym(E Eᵀ)) as plain numpy."""
    gram = embed @ embed.T
    return np.maximum(0.5 * (gram + gram.T), 0.0)


def adjacency_numpy(embed: np.ndarray) -> np.ndarray:
    g = relu_gram(embed)
    e = np.exp(g - g.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class AdjacencyReport:
    """Learned edge strengths plus the thresholded strong-edge list."""

    matrix: np.ndarray                       # [N, N] row-stochastic
    threshold: float
    strong_edges: list[tuple[int, int, float]]  # i < j, strength
    diagonal: np.ndarray                     # [N] self-importance

    @property
    def n_strong(self) -> int:
        return len(self.strong_edges)


def adjacency_report(params: dict[str, Tensor],
                     threshold: float = 0.008) -> AdjacencyReport:
    """Threshold the learned adjacency into an undirected edge list.

    Off-diagonal pairs are deduplicated by the maximum of the two
    directed strengths; the diagonal is reported separately.
    """
    a = adjacency_numpy(params["node_embed"].data)
    n = a.shape[0]
    sym_strength = np.maximum(a, a.T)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if sym_strength[i, j] > threshold:
                edges.append((i, j, float(sym_strength[i, j])))
    edges.sort(key=lambda e: -e[2])
    return AdjacencyReport(matrix=a, threshold=threshold,
                           strong_edges=edges, diagonal=np.diag(a).copy())


# ---------------------------------------------------------------------------
# graph recurrent encoder


def _graph_mix(a: Tensor, x: Tensor) -> Tensor:
    """Apply the [N, N] adjacency over the node axis of [B, N, F]."""
    b, n, f = x.shape
    flat = ad.reshape(ad.transpose(x, (1, 0, 2)), (n, b * f))
    mixed = ad.matmul(a, flat)
    return ad.transpose(ad.reshape(mixed, (n, b, f)), (1, 0, 2))


def _node_transform(x: Tensor, weights: Tensor) -> Tensor:
    """Per-node affine map: [B, N, F] with node weights [N, F, H]."""
    stacked = ad.matmul(ad.transpose(x, (1, 0, 2)), weights)  # [N, B, H]
    return ad.transpose(stacked, (1, 0, 2))


def _contract_pools(params: dict[str, Tensor], config: ModelConfig):
    """E-contract the shared pools into per-node weights, once per pass."""
    embed = params["node_embed"]
    feat = config.n_components + config.hidden_dim
    node = {}
    for gate in _GATES:
        pool = params[f"gru_w_{gate}"]
        flat = ad.reshape(pool, (config.embed_dim, feat * config.hidden_dim))
        node[f"w_{gate}"] = ad.reshape(ad.matmul(embed, flat),
                                       (config.n_stations, feat,
                                        config.hidden_dim))
        node[f"b_{gate}"] = ad.matmul(embed, params[f"gru_b_{gate}"])
    return node


def _gate(name: str, a: Tensor, x: Tensor, node, batch: int, act) -> Tensor:
    bias = ad.tile_leading(node[f"b_{name}"], batch)
    pre = ad.add(_node_transform(_graph_mix(a, x), node[f"w_{name}"]), bias)
    out = act(pre)
    if not np.isfinite(out.data).all():
        raise FloatingPointError(f"non-finite activation in {name} gate")
    return out


def graph_recurrent_step(x_t: Tensor, h_prev: Tensor, a: Tensor,
                         node_weights, batch: int) -> Tensor:
    """One gated step: z and r gates, candidate state, convex blend."""
    xh = ad.concat([x_t, h_prev], axis=2)
    z = _gate("update", a, xh, node_weights, batch, ad.sigmoid)
    r = _gate("reset", a, xh, node_weights, batch, ad.sigmoid)
    xrh = ad.concat([x_t, ad.mul(r, h_prev)], axis=2)
    cand = _gate("cand", a, xrh, node_weights, batch, ad.tanh)
    keep = ad.mul(z, h_prev)
    new = ad.mul(ad.add_scalar(ad.scale(z, -1.0), 1.0), cand)
    return ad.add(keep, new)


def encode_sequence(params: dict[str, Tensor], config: ModelConfig,
                    x: Tensor, a: Tensor) -> Tensor:
    """Run the recurrence over time: [B, N, T, C] -> [B, N, T, h]."""
    b, n, t, c = x.shape
    node = _contract_pools(params, config)
    h = ad.tensor(np.zeros((b, n, config.hidden_dim)))
    states = []
    # The observation tensor is a constant input, so each day can be
    # sliced outside the tape.
    steps = [ad.tensor(np.ascontiguousarray(x.data[:, :, step, :]))
             for step in range(t)]
    for x_t in steps:
        h = graph_recurrent_step(x_t, h, a, node, b)
        states.append(ad.reshape(h, (b, n, 1, config.hidden_dim)))
    return ad.concat(states, axis=2)


# ---------------------------------------------------------------------------
# attention


def _positional_encoding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    pe = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return pe


def _affine_rows(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    """[..., F] @ [F, G] (+ b) via a 2-D reshape."""
    lead = x.shape[:-1]
    rows = int(np.prod(lead))
    out = ad.matmul(ad.reshape(x, (rows, x.shape[-1])), w)
    if b is not None:
        out = ad.add_rowvec(out, b)
    return ad.reshape(out, lead + (w.shape[-1],))


def _mha_block(x: Tensor, prefix: str, params: dict[str, Tensor],
               config: ModelConfig, train: bool,
               rng: np.random.Generator | None,
               attn_sink: dict | None) -> Tensor:
    """Pre-norm residual block: multi-head self-attention + feed-forward.

    ``x`` is [G, L, d]: G independent sequences of length L.
    """
    g_cnt, length, d = x.shape
    heads, d_k = config.heads, config.head_dim
    p = config.attn_dropout

    normed = ad.layer_norm(x, params[f"{prefix}_ln1_gain"],
                           params[f"{prefix}_ln1_bias"])
    q = _affine_rows(normed, params[f"{prefix}_attn_q"], None)
    k = _affine_rows(normed, params[f"{prefix}_attn_k"], None)
    v = _affine_rows(normed, params[f"{prefix}_attn_v"], None)

    def split(tensor_):  # [G, L, d] -> [G, heads, L, d_k]
        return ad.transpose(ad.reshape(tensor_, (g_cnt, length, heads, d_k)),
                            (0, 2, 1, 3))

    attended, weights = ad.scaled_dot_attention(split(q), split(k), split(v))
    if attn_sink is not None:
        attn_sink[f"{prefix}_weights"] = weights.data.copy()
    merged = ad.reshape(ad.transpose(attended, (0, 2, 1, 3)),
                        (g_cnt, length, d))
    projected = _affine_rows(merged, params[f"{prefix}_attn_m"], None)
    x = ad.add(x, ad.dropout(projected, p, train, rng))

    normed2 = ad.layer_norm(x, params[f"{prefix}_ln2_gain"],
                            params[f"{prefix}_ln2_bias"])
    hidden = ad.relu(_affine_rows(normed2, params[f"{prefix}_ffn_w1"],
                                  params[f"{prefix}_ffn_b1"]))
    ffn = _affine_rows(hidden, params[f"{prefix}_ffn_w2"],
                       params[f"{prefix}_ffn_b2"])
    return ad.add(x, ad.dropout(ffn, p, train, rng))


def spatiotemporal_transformer(params: dict[str, Tensor], config: ModelConfig,
                               h: Tensor, train: bool = False,
                               rng: np.random.Generator | None = None,
                               attn_sink: dict | None = None) -> Tensor:
    """Temporal self-attention per station, then spatial per time step.

    Input [B, N, T, h]; output [B, N, T, attn_dim]. Either stage may be
    ablated away via the config.
    """
    b, n, t, _ = h.shape
    x = h
    if "in_proj_w" in params:
        x = _affine_rows(x, params["in_proj_w"], params["in_proj_b"])
    d = x.shape[-1]
    if config.uses_temporal:
        seq = ad.reshape(x, (b * n, t, d))
        if config.positional_encoding:
            pe = ad.tile_leading(ad.tensor(_positional_encoding(t, d)), b * n)
            seq = ad.add(seq, pe)
        seq = _mha_block(seq, "t", params, config, train, rng, attn_sink)
        x = ad.reshape(seq, (b, n, t, d))
    if config.uses_spatial:
        seq = ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (b * t, n, d))
        seq = _mha_block(seq, "s", params, config, train, rng, attn_sink)
        x = ad.transpose(ad.reshape(seq, (b, t, n, d)), (0, 2, 1, 3))
    return x


def project_output(params: dict[str, Tensor], config: ModelConfig, x: Tensor,
                   train: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Output-dropout then affine map down to the two components."""
    x = ad.dropout(x, config.out_dropout, train, rng)
    return _affine_rows(x, params["out_w"], params["out_b"])


def forward(params: dict[str, Tensor], config: ModelConfig, x,
            train: bool = False, rng: np.random.Generator | None = None,
            attn_sink: dict | None = None) -> Tensor:
    """Full network: [B, N, T, C] observations -> [B, N, T, C] estimate.

    Expects finite, already-standardized input (see
    :func:`prepare_windows`); the output is in the same scaled units.
    """
    if not isinstance(x, Tensor):
        x = ad.tensor(x)
    if x.requires_grad:
        raise ValueError("forward: the observation tensor must not "
                         "track gradients")
    if not np.isfinite(x.data).all():
        raise ValueError("forward: input contains non-finite values; "
                         "fill gaps first (prepare_windows)")
    a = compute_adjacency(params["node_embed"])
    h = encode_sequence(params, config, x, a)
    if config.ablation != "no_transformer":
        h = spatiotemporal_transformer(params, config, h, train, rng, attn_sink)
    return project_output(params, config, h, train, rng)


def prepare_windows(observed: np.ndarray, input_scale: float) -> np.ndarray:
    """Standardize raw observation windows for the network.

    Per station, window and component: fit a straight line to the valid
    (finite) days, subtract it, zero the gap days, then divide by the
    global ``input_scale``. Series with fewer than two valid days are
    zeroed entirely. Accepts [B, N, T, C] or a single [N, T, C] window.
    """
    if input_scale <= 0 or not np.isfinite(input_scale):
        raise ValueError(f"input_scale must be positive, got {input_scale}")
    single = observed.ndim == 3
    x = np.asarray(observed, dtype=np.float64)
    if single:
        x = x[None]
    b_cnt, n_sta, n_t, n_c = x.shape
    t_idx = np.arange(n_t, dtype=np.float64)
    valid = np.isfinite(x)
    y = np.where(valid, x, 0.0)
    m = valid.astype(np.float64)
    tt = t_idx[None, None, :, None]
    n = m.sum(axis=2, keepdims=True)
    st = (m * tt).sum(axis=2, keepdims=True)
    stt = (m * tt * tt).sum(axis=2, keepdims=True)
    sy = y.sum(axis=2, keepdims=True)
    sty = (y * tt).sum(axis=2, keepdims=True)
    denom = n * stt - st * st
    enough = n >= 2
    slope = np.where(enough, n * sty - st * sy, 0.0) / np.where(denom > 0, denom, 1.0)
    intercept = np.where(enough, sy - slope * st, 0.0) / np.where(n > 0, n, 1.0)
    detrended = (y - intercept - slope * tt) * m * enough
    out = detrended / float(input_scale)
    return out[0] if single else out


def denoise_windows(params: dict[str, Tensor], config: ModelConfig,
                    observed: np.ndarray, input_scale: float,
                    batch_size: int = 32) -> np.ndarray:
    """Evaluation-mode inference in physical units (mm).

    ``observed`` is [B, N, T, C], gaps as NaN; the result has the same
    shape. Batched to bound peak memory.
    """
    x = prepare_windows(observed, input_scale)
    chunks = []
    for lo in range(0, x.shape[0], batch_size):
        est = forward(params, config, x[lo:lo + batch_size], train=False)
        chunks.append(est.data * float(input_scale))
    return np.concatenate(chunks, axis=0)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(directory, params: dict[str, Tensor],
                    config: ModelConfig, extra: dict | None = None) -> None:
    """Text manifest + one little-endian float32 blob per parameter."""
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "format": "gnssdenoise-checkpoint-v1",
        "config": asdict(config),
        "params": {name: list(t.data.shape) for name, t in params.items()},
        "extra": extra or {},
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    for name, t in params.items():
        t.data.astype("<f4").tofile(os.path.join(directory, f"{name}.bin"))


def load_checkpoint(directory):
    """Returns (params, config, extra); parameters track gradients."""
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    config = ModelConfig(**manifest["config"])
    expected = param_shapes(config)
    params: dict[str, Tensor] = {}
    for name, shape in manifest["params"].items():
        shape = tuple(shape)
        if name not in expected or expected[name] != shape:
            raise ValueError(f"checkpoint parameter {name} {shape} does not "
                             "match the configured architecture")
        path = os.path.join(directory, f"{name}.bin")
        flat = np.fromfile(path, dtype="<f4").astype(np.float64)
        if flat.size != int(np.prod(shape)):
            raise ValueError(f"{path}: {flat.size} values, expected shape {shape}")
        params[name] = ad.parameter(flat.reshape(shape))
    missing = set(expected) - set(params)
    if missing:
        raise ValueError(f"checkpoint missing parameters: {sorted(missing)}")
    return params, config, manifest["extra"]
