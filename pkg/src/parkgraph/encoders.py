"""GNN, CNN and RNN encoders mapping an ``M``-step history to a code vector."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from .autodiff import ShapeError, Tensor, as_tensor, relu
from .nn import (
    FULL_SPAN,
    ConvParams,
    GgnnParams,
    LstmGates,
    Stride,
    conv1d_gated,
    ggnn_output,
    ggnn_propagate,
    max_pool,
    uniform_init,
    zeros,
)

GNN, CNN, RNN = "gnn", "cnn", "rnn"
KINDS = (GNN, CNN, RNN)


class ConfigError(ValueError):
    """The encoder configuration does not yield a consistent layer chain."""


@dataclass(frozen=True)
class ConvSpec:
    n_filters: int
    filter_size: int
    stride: Stride = 1

    @classmethod
    def coerce(cls, value) -> ConvSpec:
        if isinstance(value, ConvSpec):
            return value
        if isinstance(value, dict):
            return cls(**value)
        return cls(*value)


def _default_trailing() -> list[ConvSpec]:
    return [ConvSpec(5, 4, 2), ConvSpec(10, 115, 5), ConvSpec(20, 60, 5), ConvSpec(40, 65, FULL_SPAN)]


def _default_cnn() -> list[ConvSpec]:
    return [ConvSpec(50, 5, 2), ConvSpec(50, 5, 2)]


@dataclass
class EncoderConfig:
    kind: str = GNN
    M: int = 48
    K: int = 27
    # GNN
    hidden_pad: int = 60
    a_conv: ConvSpec = ConvSpec(1, 2, 1)
    h_conv: ConvSpec = ConvSpec(2, 10, 5)
    ggnn_steps: int = 5
    node_out: int = 64
    trailing: list[ConvSpec] = field(default_factory=_default_trailing)
    # CNN; a final filter of None means M // 4
    cnn_convs: list[ConvSpec] = field(default_factory=_default_cnn)
    cnn_pool: int = 2
    cnn_final_filters: int = 50
    cnn_final_size: int | None = None
    # RNN
    rnn_hidden: int = 40
    rnn_embed: int = 32

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}; expected one of {KINDS}")
        self.a_conv = ConvSpec.coerce(self.a_conv)
        self.h_conv = ConvSpec.coerce(self.h_conv)
        self.trailing = [ConvSpec.coerce(c) for c in self.trailing]
        self.cnn_convs = [ConvSpec.coerce(c) for c in self.cnn_convs]
        if self.M < 1 or self.K < 1:
            raise ConfigError("M and K must be positive")

    @property
    def output_dim(self) -> int:
        return resolve_shapes(self).output_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> EncoderConfig:
        return cls(**d)


@dataclass(frozen=True)
class LayerShape:
    name: str
    in_channels: int
    in_length: int
    n_filters: int
    filter_size: int  # realised
    stride: Stride  # realised
    out_length: int


@dataclass(frozen=True)
class ShapePlan:
    kind: str
    layers: tuple[LayerShape, ...]
    output_dim: int
    ggnn_hidden: int = 0
    annotation_dim: int = 0


def _plan_chain(name: str, channels: int, length: int, specs: list[ConvSpec],
                final_may_span: bool) -> list[LayerShape]:
    layers = []
    for i, spec in enumerate(specs):
        final = final_may_span and i == len(specs) - 1
        stride = spec.stride
        size = spec.filter_size
        if stride == FULL_SPAN or (final and size > length):
            size, stride = length, FULL_SPAN
        elif size > length:
            chain = " -> ".join(f"{l.in_length}" for l in layers) or "-"
            raise ConfigError(
                f"{name}[{i}]: filter {size} exceeds realised input length {length} "
                f"(lengths so far: {chain} -> {length})"
            )
        if size < 1:
            raise ConfigError(f"{name}[{i}]: empty input")
        out_len = 1 if stride == FULL_SPAN else (length - size) // stride + 1
        layers.append(LayerShape(f"{name}[{i}]", channels, length, spec.n_filters, size, stride, out_len))
        channels, length = spec.n_filters, out_len
    return layers


def resolve_shapes(cfg: EncoderConfig) -> ShapePlan:
    """Realised layer shapes.  A final layer whose nominal filter outgrows its
    input becomes FULL_SPAN; any other overflow is a ConfigError."""
    if cfg.kind == RNN:
        return ShapePlan(RNN, (), cfg.rnn_hidden)
    if cfg.kind == CNN:
        convs = _plan_chain("cnn", cfg.K, cfg.M, cfg.cnn_convs, final_may_span=False)
        length = convs[-1].out_length if convs else cfg.M
        channels = convs[-1].n_filters if convs else cfg.K
        if length < cfg.cnn_pool:
            raise ConfigError(f"max-pool size {cfg.cnn_pool} exceeds length {length}")
        pooled = (length - cfg.cnn_pool) // cfg.cnn_pool + 1
        pool = LayerShape("cnn.pool", channels, length, channels, cfg.cnn_pool, cfg.cnn_pool, pooled)
        final_size = cfg.cnn_final_size if cfg.cnn_final_size is not None else max(1, cfg.M // 4)
        final = _plan_chain("cnn.final", channels, pooled,
                            [ConvSpec(cfg.cnn_final_filters, final_size, FULL_SPAN)], final_may_span=True)
        layers = (*convs, pool, *final)
        return ShapePlan(CNN, layers, final[0].n_filters * final[0].out_length)
    if cfg.hidden_pad < cfg.M:
        raise ConfigError(f"hidden pad size {cfg.hidden_pad} must be >= M={cfg.M}")
    a_layer = _plan_chain("gnn.a", 1, cfg.M, [cfg.a_conv], final_may_span=False)[0]
    h_layer = _plan_chain("gnn.h", 1, cfg.hidden_pad, [cfg.h_conv], final_may_span=False)[0]
    hidden = h_layer.n_filters * h_layer.out_length
    annotation = a_layer.n_filters * a_layer.out_length
    trailing = _plan_chain("gnn.trailing", 1, cfg.K * cfg.node_out, cfg.trailing, final_may_span=True)
    last = trailing[-1] if trailing else None
    out_dim = last.n_filters * last.out_length if last else cfg.K * cfg.node_out
    return ShapePlan(GNN, (a_layer, h_layer, *trailing), out_dim, hidden, annotation)


# -- parameters -------------------------------------------------------------


@dataclass
class GnnParams:
    a_conv: ConvParams
    h_conv: ConvParams
    ggnn: GgnnParams
    trailing: list[ConvParams]


@dataclass
class CnnParams:
    convs: list[ConvParams]
    final: ConvParams


@dataclass
class RnnParams:
    w_s: Tensor
    b_s: Tensor
    gates: LstmGates


EncoderParams = Union[GnnParams, CnnParams, RnnParams]


def _conv_from(rng, layer: LayerShape) -> ConvParams:
    return ConvParams.init(rng, layer.in_channels, layer.n_filters, layer.filter_size, layer.stride)


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    plan = resolve_shapes(cfg)
    if cfg.kind == GNN:
        a_layer, h_layer, *trailing = plan.layers
        return GnnParams(
            a_conv=_conv_from(rng, a_layer),
            h_conv=_conv_from(rng, h_layer),
            ggnn=GgnnParams.init(rng, plan.ggnn_hidden, plan.annotation_dim, cfg.node_out, cfg.ggnn_steps),
            trailing=[_conv_from(rng, layer) for layer in trailing],
        )
    if cfg.kind == CNN:
        *convs, _pool, final = plan.layers
        return CnnParams([_conv_from(rng, l) for l in convs], _conv_from(rng, final))
    return RnnParams(
        w_s=uniform_init(rng, (cfg.K, cfg.rnn_embed), cfg.K),
        b_s=zeros((cfg.rnn_embed,)),
        gates=LstmGates.init(rng, cfg.rnn_embed, cfg.rnn_hidden),
    )


# -- encoders ---------------------------------------------------------------


@dataclass
class NodeHistory:
    """Per-node history ``a`` (K x M) and its zero-padded copy ``h`` (K x H)."""

    a: np.ndarray
    h: np.ndarray

    @classmethod
    def from_window(cls, window: np.ndarray, hidden_pad: int) -> NodeHistory:
        """Build from a time-major ``(M, K)`` window."""
        a = np.asarray(window, dtype=np.float64).T
        if hidden_pad < a.shape[1]:
            raise ShapeError(f"hidden pad {hidden_pad} shorter than history length {a.shape[1]}")
        h = np.zeros((a.shape[0], hidden_pad))
        h[:, : a.shape[1]] = a
        return cls(a, h)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    """Return a time-major ``(B, M, K)`` array and whether the input was unbatched."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return arr[None], True
    if arr.ndim != 3:
        raise ShapeError(f"expected (M, K) or (B, M, K) history, got shape {arr.shape}")
    return arr, False


def _finish(code: Tensor, single: bool) -> Tensor:
    return code.reshape(code.shape[1:]) if single else code


def gnn_encode(history, graph, cfg: EncoderConfig, params: GnnParams) -> Tensor:
    """Gated convs on each node's history, GGNN propagation and output head,
    then four gated convs over the node outputs concatenated in cluster order.

    ``history`` is a :class:`NodeHistory` or a time-major ``(M, K)`` /
    ``(B, M, K)`` array.
    """
    if isinstance(history, NodeHistory):
        x, single = history.a.T[None], True
        if history.h.shape[1] != cfg.hidden_pad:
            raise ShapeError(f"history pad {history.h.shape[1]} != configured {cfg.hidden_pad}")
    else:
        x, single = _as_batch(history)
    batch, m, k = x.shape
    if (m, k) != (cfg.M, cfg.K):
        raise ShapeError(f"history is {m} steps x {k} clusters, encoder expects {cfg.M} x {cfg.K}")
    if graph.node_count != k:
        raise ShapeError(f"graph has {graph.node_count} nodes, history has {k} clusters")
    a = np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(batch * k, 1, m)
    h = np.zeros((batch * k, 1, cfg.hidden_pad))
    h[:, :, :m] = a
    a_prime = conv1d_gated(a, params.a_conv).reshape(batch, k, -1)
    h_prime = conv1d_gated(h, params.h_conv).reshape(batch, k, -1)
    h_final = ggnn_propagate(h_prime, graph, params.ggnn)
    nodes = ggnn_output(h_final, a_prime, params.ggnn)
    seq = nodes.reshape(batch, 1, -1)
    for layer in params.trailing:
        seq = conv1d_gated(seq, layer)
    return _finish(seq.reshape(batch, -1), single)


def cnn_encode(x, cfg: EncoderConfig, params: CnnParams) -> Tensor:
    """Gated convs along time with clusters as channels, one max-pool after
    the second conv, and a final full-span conv."""
    x, single = _as_batch(x)
    batch, m, k = x.shape
    if (m, k) != (cfg.M, cfg.K):
        raise ShapeError(f"history is {m} steps x {k} clusters, encoder expects {cfg.M} x {cfg.K}")
    seq = as_tensor(np.ascontiguousarray(x.transpose(0, 2, 1)))
    for layer in params.convs:
        seq = conv1d_gated(seq, layer)
    seq = max_pool(seq, cfg.cnn_pool, cfg.cnn_pool)
    seq = conv1d_gated(seq, params.final)
    return _finish(seq.reshape(batch, -1), single)


def rnn_encode(series, cfg: EncoderConfig, params: RnnParams) -> Tensor:
    """LSTM over ReLU-embedded steps from a zero state; the code is the last hidden state."""
    x, single = _as_batch(series)
    batch, m, k = x.shape
    if m != cfg.M:
        raise ShapeError(f"series has {m} steps, encoder expects M={cfg.M}")
    if k != cfg.K:
        raise ShapeError(f"series has {k} clusters, encoder expects {cfg.K}")
    h = as_tensor(np.zeros((batch, cfg.rnn_hidden)))
    c = as_tensor(np.zeros((batch, cfg.rnn_hidden)))
    for t in range(m):
        s_emb = relu(as_tensor(x[:, t, :]) @ params.w_s + params.b_s)
        h, c = params.gates(h, c, s_emb)
    return _finish(h, single)


def encode(x, graph, cfg: EncoderConfig, params: EncoderParams) -> Tensor:
    if cfg.kind == GNN:
        return gnn_encode(x, graph, cfg, params)
    if cfg.kind == CNN:
        return cnn_encode(x, cfg, params)
    return rnn_encode(x, cfg, params)
