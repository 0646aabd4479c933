"""Deep GCN node classifier with generalized message aggregation.

Message construction: ReLU(h_u [+ edge term]) + eps, with a small positive
eps so aggregated messages stay strictly positive. Aggregation is either
the softmax family (temperature beta: mean at 0, max/min in the limits) or
the power-mean family (exponent p: mean at 1, max/min in the limits), both
optionally scaled by degree^y. The vertex update feeds
h_v + s * ||h_v|| * m_v / ||m_v|| through a two-layer MLP, wrapped in
pre-activation residual blocks (LayerNorm -> ReLU -> conv -> add).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

EPS = 1e-7  # message offset; keeps aggregates strictly positive

SOFTMAX, POWERMEAN = "softmax", "powermean"
_AGG_CODES = {SOFTMAX: 0, POWERMEAN: 1}
_AGG_NAMES = {v: k for k, v in _AGG_CODES.items()}

CKPT_MAGIC = b"DSGC"
CKPT_VERSION = 1


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# standalone aggregation primitives (contract surface; plain numpy)
# ---------------------------------------------------------------------------

def message(h_u: np.ndarray, h_e: np.ndarray | None = None) -> np.ndarray:
    """ReLU(h_u + [edge features present] * h_e) + eps."""
    h_u = np.asarray(h_u, dtype=np.float64)
    x = h_u if h_e is None else h_u + np.asarray(h_e, dtype=np.float64)
    return np.maximum(x, 0.0) + EPS


def _as_channels(messages) -> tuple[np.ndarray, bool]:
    m = np.asarray(messages, dtype=np.float64)
    if m.ndim == 1:
        return m[:, None], True
    return m, False


def softmax_agg(messages, beta: float):
    """Per-channel softmax-weighted sum over the neighbor set.

    beta = 0 is exactly the mean; beta -> +/-inf approaches max/min.
    Channels are sorted before reduction so the result is bit-identical
    under any permutation of the neighbor list. An empty neighbor set
    aggregates to zero.
    """
    m, single = _as_channels(messages)
    if m.shape[0] == 0:
        out = np.zeros(m.shape[1])
        return float(out[0]) if single else out
    out = np.empty(m.shape[1])
    for ch in range(m.shape[1]):
        v = np.sort(m[:, ch])
        w = beta * v
        z = np.exp(w - w.max())
        out[ch] = float((z * v).sum() / z.sum())
    return float(out[0]) if single else out


def powermean_agg(messages, p: float):
    """Per-channel power mean ((1/n) sum m^p)^(1/p); requires p != 0 and
    strictly positive messages."""
    if p == 0:
        raise ModelError("power-mean exponent must be nonzero")
    m, single = _as_channels(messages)
    if m.shape[0] == 0:
        out = np.zeros(m.shape[1])
        return float(out[0]) if single else out
    if np.any(m <= 0):
        raise ModelError("power-mean aggregation requires strictly positive messages")
    out = np.empty(m.shape[1])
    for ch in range(m.shape[1]):
        v = np.sort(m[:, ch])
        ref = v[-1] if p > 0 else v[0]
        z = (v / ref) ** p
        out[ch] = float(ref * z.mean() ** (1.0 / p))
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# model containers
# ---------------------------------------------------------------------------

@dataclass
class GcnLayer:
    gain: Tensor
    shift: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    beta: Tensor        # softmax temperature
    s: Tensor           # message scale
    y_deg: Tensor       # degree-scaling exponent
    p: Tensor | None = None  # power-mean exponent (powermean aggregator only)


@dataclass
class GcnModel:
    in_dim: int
    hidden: int
    n_classes: int
    aggregator: str
    dropout: float
    dtype: type
    enc_w: Tensor
    enc_b: Tensor
    layers: list[GcnLayer]
    final_gain: Tensor
    final_shift: Tensor
    dec_w: Tensor
    dec_b: Tensor

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = [("enc_w", self.enc_w), ("enc_b", self.enc_b)]
        for i, layer in enumerate(self.layers):
            for name in ("gain", "shift", "w1", "b1", "w2", "b2", "beta", "s", "y_deg"):
                out.append((f"layer{i}.{name}", getattr(layer, name)))
            if layer.p is not None:
                out.append((f"layer{i}.p", layer.p))
        out += [
            ("final_gain", self.final_gain),
            ("final_shift", self.final_shift),
            ("dec_w", self.dec_w),
            ("dec_b", self.dec_b),
        ]
        return out


def build_model(
    in_dim: int,
    hidden: int = 128,
    n_layers: int = 28,
    n_classes: int = 2,
    dropout: float = 0.2,
    aggregator: str = SOFTMAX,
    beta_init: float = 1.0,
    s_init: float = 1.0,
    y_init: float = 0.0,
    p_init: float = 1.0,
    seed: int = 0,
    dtype=np.float32,
) -> GcnModel:
    if aggregator not in _AGG_CODES:
        raise ModelError(f"unknown aggregator {aggregator!r}")
    rng = np.random.default_rng(seed)

    def linear(fan_in, fan_out):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        return ad.parameter(w.astype(dtype)), ad.parameter(np.zeros(fan_out, dtype=dtype))

    enc_w, enc_b = linear(in_dim, hidden)
    layers = []
    for _ in range(n_layers):
        w1, b1 = linear(hidden, hidden)
        w2, b2 = linear(hidden, hidden)
        layers.append(GcnLayer(
            gain=ad.parameter(np.ones(hidden, dtype=dtype)),
            shift=ad.parameter(np.zeros(hidden, dtype=dtype)),
            w1=w1, b1=b1, w2=w2, b2=b2,
            beta=ad.parameter(np.asarray(beta_init, dtype=dtype)),
            s=ad.parameter(np.asarray(s_init, dtype=dtype)),
            y_deg=ad.parameter(np.asarray(y_init, dtype=dtype)),
            p=ad.parameter(np.asarray(p_init, dtype=dtype)) if aggregator == POWERMEAN else None,
        ))
    dec_w, dec_b = linear(hidden, n_classes)
    return GcnModel(
        in_dim=in_dim, hidden=hidden, n_classes=n_classes,
        aggregator=aggregator, dropout=dropout, dtype=dtype,
        enc_w=enc_w, enc_b=enc_b, layers=layers,
        final_gain=ad.parameter(np.ones(hidden, dtype=dtype)),
        final_shift=ad.parameter(np.zeros(hidden, dtype=dtype)),
        dec_w=dec_w, dec_b=dec_b,
    )


@dataclass
class GraphSample:
    """One graph ready for the classifier: directed edge arrays (each
    undirected adjacency expanded into both orientations), features, and
    optional node labels (-1 = unlabeled)."""

    src: np.ndarray
    dst: np.ndarray
    n_nodes: int
    features: np.ndarray
    labels: np.ndarray | None = None

    @classmethod
    def from_region_graph(cls, graph, features: np.ndarray, labels: np.ndarray | None = None):
        if graph.edges:
            e = np.asarray(graph.edges, dtype=np.int64)
            src = np.concatenate([e[:, 0], e[:, 1]])
            dst = np.concatenate([e[:, 1], e[:, 0]])
        else:
            src = dst = np.zeros(0, dtype=np.int64)
        return cls(src=src, dst=dst, n_nodes=graph.n_nodes,
                   features=np.asarray(features), labels=labels)


def concat_samples(samples: list[GraphSample]) -> GraphSample:
    """Concatenate graphs into one disconnected graph (batching)."""
    srcs, dsts, feats, labs = [], [], [], []
    offset = 0
    for s in samples:
        srcs.append(s.src + offset)
        dsts.append(s.dst + offset)
        feats.append(s.features)
        labs.append(s.labels if s.labels is not None else np.full(s.n_nodes, -1, dtype=np.int64))
        offset += s.n_nodes
    return GraphSample(
        src=np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64),
        dst=np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64),
        n_nodes=offset,
        features=np.vstack(feats),
        labels=np.concatenate(labs),
    )


# ---------------------------------------------------------------------------
# differentiable forward pieces
# ---------------------------------------------------------------------------

def _layer_norm(x: Tensor, gain: Tensor, shift: Tensor) -> Tensor:
    c = x.shape[1]
    mean = ad.tsum(x, axis=1, keepdims=True) * (1.0 / c)
    xc = x - mean
    var = ad.tsum(xc * xc, axis=1, keepdims=True) * (1.0 / c)
    xn = xc / ad.sqrt(var + 1e-5)
    return xn * gain + shift


def _row_norm(x: Tensor) -> Tensor:
    # small offset keeps the sqrt differentiable at all-zero rows
    return ad.sqrt(ad.tsum(x * x, axis=1, keepdims=True) + 1e-12)


def _aggregate(layer: GcnLayer, msg: Tensor, dst: np.ndarray, n_nodes: int, aggregator: str) -> Tensor:
    if aggregator == SOFTMAX:
        scaled = msg * layer.beta
        # detached per-segment max; constant within a segment so it cancels
        seg_max = np.full((n_nodes,) + msg.value.shape[1:], -np.inf, dtype=msg.value.dtype)
        np.maximum.at(seg_max, dst, scaled.value)
        z = ad.exp(scaled - seg_max[dst])
        denom = ad.segment_sum(z, dst, n_nodes)
        weights = z / ad.gather_rows(denom, dst)
        agg = ad.segment_sum(weights * msg, dst, n_nodes)
    else:
        logm = ad.log(msg)
        mp = ad.exp(logm * layer.p)
        total = ad.segment_sum(mp, dst, n_nodes)
        deg = np.bincount(dst, minlength=n_nodes).astype(msg.value.dtype)
        empty = deg == 0
        inv_deg = np.where(empty, 0.0, 1.0 / np.maximum(deg, 1.0))[:, None]
        meanp = total * inv_deg + empty[:, None].astype(msg.value.dtype)  # 1 on empty rows keeps log finite
        agg = ad.exp(ad.log(meanp) / layer.p) * (~empty[:, None]).astype(msg.value.dtype)

    deg = np.bincount(dst, minlength=n_nodes).astype(msg.value.dtype)
    ln_deg = np.where(deg > 0, np.log(np.maximum(deg, 1.0)), 0.0)[:, None]
    scale = ad.exp(layer.y_deg * ln_deg)
    return agg * scale


def graph_conv(
    layer: GcnLayer,
    x: Tensor,
    src: np.ndarray,
    dst: np.ndarray,
    n_nodes: int,
    aggregator: str = SOFTMAX,
    dropout_mask: np.ndarray | None = None,
) -> Tensor:
    """One message-passing update: aggregate neighbor messages, add the
    norm-scaled aggregate to the node state, run the MLP."""
    if len(src) > 0:
        hu = ad.gather_rows(x, src)
        msg = ad.relu(hu) + np.asarray(EPS, dtype=x.value.dtype)
        agg = _aggregate(layer, msg, dst, n_nodes, aggregator)
        term = (layer.s * _row_norm(x)) * (agg / _row_norm(agg))
        u = x + term
    else:
        u = x
    h = ad.relu(u @ layer.w1 + layer.b1)
    if dropout_mask is not None:
        h = h * dropout_mask
    return h @ layer.w2 + layer.b2


def resplus_block(
    layer: GcnLayer,
    x: Tensor,
    src: np.ndarray,
    dst: np.ndarray,
    n_nodes: int,
    aggregator: str = SOFTMAX,
    dropout_mask: np.ndarray | None = None,
) -> Tensor:
    """Pre-activation residual: x + conv(ReLU(Norm(x)))."""
    h = ad.relu(_layer_norm(x, layer.gain, layer.shift))
    return x + graph_conv(layer, h, src, dst, n_nodes, aggregator, dropout_mask)


def forward(model: GcnModel, sample: GraphSample, mode: str = "eval",
            dropout_rng: np.random.Generator | None = None) -> Tensor:
    """Per-node logits. Train mode applies inverted dropout inside each MLP
    using masks drawn from dropout_rng (off when the rng is None)."""
    feats = np.asarray(sample.features, dtype=model.dtype)
    if feats.shape[1] != model.in_dim:
        raise ModelError(f"feature dimension {feats.shape[1]} != encoder input {model.in_dim}")
    x = Tensor(feats) @ model.enc_w + model.enc_b
    use_dropout = mode == "train" and model.dropout > 0 and dropout_rng is not None
    for layer in model.layers:
        mask = None
        if use_dropout:
            keep = (dropout_rng.random((sample.n_nodes, model.hidden)) >= model.dropout)
            mask = keep.astype(model.dtype) / np.asarray(1.0 - model.dropout, dtype=model.dtype)
        x = resplus_block(layer, x, sample.src, sample.dst, sample.n_nodes,
                          model.aggregator, mask)
    x = ad.relu(_layer_norm(x, model.final_gain, model.final_shift))
    return x @ model.dec_w + model.dec_b


def predict(model: GcnModel, sample: GraphSample) -> np.ndarray:
    """Eval-mode argmax; ties resolve to class 0."""
    logits = forward(model, sample, mode="eval").value
    return np.argmax(logits, axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: GcnModel, path, opt_state=None, epoch: int = 0) -> None:
    """Versioned binary: header, parameters as little-endian f32 in
    declaration order, then the optimizer state section."""
    parts = [CKPT_MAGIC, struct.pack(
        "<IIIIIIf", CKPT_VERSION, model.in_dim, model.hidden, model.n_classes,
        len(model.layers), _AGG_CODES[model.aggregator], model.dropout,
    )]
    params = model.parameters()
    parts.append(struct.pack("<I", len(params)))
    for _, p in params:
        parts.append(p.value.astype("<f4").tobytes())
    if opt_state is None:
        parts.append(struct.pack("<B", 0))
        parts.append(struct.pack("<QI", 0, epoch))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(struct.pack("<QI", opt_state.step, epoch))
        for name, _ in params:
            parts.append(opt_state.m[name].astype("<f4").tobytes())
        for name, _ in params:
            parts.append(opt_state.v[name].astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, dtype=np.float32):
    """Returns (model, opt_state or None, epoch)."""
    from .train import AdamState  # local import to avoid a cycle

    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC:
        raise ModelError("not a checkpoint file")
    version, in_dim, hidden, n_classes, n_layers, agg_code, dropout = struct.unpack(
        "<IIIIIIf", data[4:4 + 28])
    if version != CKPT_VERSION:
        raise ModelError(f"unsupported checkpoint version {version}")
    off = 4 + 28
    (n_params,) = struct.unpack("<I", data[off:off + 4])
    off += 4
    model = build_model(
        in_dim=in_dim, hidden=hidden, n_layers=n_layers, n_classes=n_classes,
        dropout=dropout, aggregator=_AGG_NAMES[agg_code], dtype=dtype,
    )
    params = model.parameters()
    if len(params) != n_params:
        raise ModelError("checkpoint parameter count mismatch")

    def take(shape):
        nonlocal off
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data[off:off + 4 * n], dtype="<f4").reshape(shape)
        off += 4 * n
        return arr.astype(dtype)

    for _, p in params:
        p.value = take(p.value.shape)
    (has_opt,) = struct.unpack("<B", data[off:off + 1])
    off += 1
    step, epoch = struct.unpack("<QI", data[off:off + 12])
    off += 12
    opt_state = None
    if has_opt:
        m = {name: take(p.value.shape) for name, p in params}
        v = {name: take(p.value.shape) for name, p in params}
        opt_state = AdamState(step=step, m=m, v=v)
    return model, opt_state, epoch
