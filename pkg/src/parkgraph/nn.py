"""Differentiable building blocks: gated 1-D convolution, GGNN propagation
and output head, the calendar-conditioned LSTM step, and dropout.

Shapes follow a row-vector convention (``x @ W`` with ``W`` of shape
``(in, out)``).  Every op accepts an optional leading batch axis.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from .autodiff import ShapeError, Tensor, as_tensor, concat, conv1d, max_pool1d, mul, relu, sigmoid, tanh

FULL_SPAN = "full_span"
"""Stride marker: the filter covers the whole input, giving length-1 output."""

Stride = Union[int, str]


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = np.sqrt(1.0 / fan_in)
    return param(rng.uniform(-bound, bound, size=shape))


def zeros(shape) -> Tensor:
    return param(np.zeros(shape))


def named_tensors(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Yield ``(dotted_name, tensor)`` for every Tensor inside nested dataclasses/lists."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            sub = f"{prefix}.{f.name}" if prefix else f.name
            yield from named_tensors(getattr(obj, f.name), sub)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_tensors(item, f"{prefix}.{i}" if prefix else str(i))


# -- gated convolution -----------------------------------------------------


@dataclass
class ConvParams:
    """Weights of one gated convolution layer (linear path ``f``, gate path ``g``)."""

    w_f: Tensor  # (n_filters, C_in, filter_size)
    b_f: Tensor  # (n_filters,)
    w_g: Tensor
    b_g: Tensor
    stride: Stride = 1

    @property
    def n_filters(self) -> int:
        return self.w_f.shape[0]

    @property
    def in_channels(self) -> int:
        return self.w_f.shape[1]

    @property
    def filter_size(self) -> int:
        return self.w_f.shape[2]

    @classmethod
    def init(cls, rng, in_channels: int, n_filters: int, filter_size: int, stride: Stride = 1) -> ConvParams:
        if filter_size < 1:
            raise ShapeError(f"filter size must be >= 1, got {filter_size}")
        if stride != FULL_SPAN and (not isinstance(stride, int) or stride < 1):
            raise ShapeError(f"stride must be a positive integer or FULL_SPAN, got {stride!r}")
        shape = (n_filters, in_channels, filter_size)
        fan_in = in_channels * filter_size
        return cls(
            w_f=uniform_init(rng, shape, fan_in),
            b_f=zeros((n_filters,)),
            w_g=uniform_init(rng, shape, fan_in),
            b_g=zeros((n_filters,)),
            stride=stride,
        )


def conv_output_length(length: int, filter_size: int, stride: Stride) -> int:
    if stride == FULL_SPAN:
        return 1
    if length < filter_size:
        raise ShapeError(f"input length {length} is shorter than filter size {filter_size}")
    return (length - filter_size) // stride + 1


def conv1d_gated(x, p: ConvParams) -> Tensor:
    """``(x * W_f + b_f) ⊙ σ(x * W_g + b_g)`` as a valid strided convolution.

    ``x`` is ``(C_in, L)`` or ``(B, C_in, L)``.  With ``FULL_SPAN`` stride the
    filter must already span the whole input.
    """
    x = as_tensor(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    if x.ndim != 3:
        raise ShapeError(f"conv1d_gated expects (C, L) or (B, C, L), got {x.shape}")
    length = x.shape[2]
    if p.stride == FULL_SPAN:
        if length != p.filter_size:
            raise ShapeError(
                f"FULL_SPAN filter of size {p.filter_size} cannot span an input of length {length}"
            )
        stride = 1
    else:
        if length < p.filter_size:
            raise ShapeError(f"input length {length} is shorter than filter size {p.filter_size}")
        stride = p.stride
    # both paths share one im2col
    n = p.n_filters
    both = conv1d(x, concat([p.w_f, p.w_g], axis=0), concat([p.b_f, p.b_g], axis=0), stride)
    out = both[:, :n] * sigmoid(both[:, n:])
    if squeeze:
        out = out.reshape(out.shape[1:])
    return out


def max_pool(x, size: int = 2, stride: int = 2) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 2:
        out = max_pool1d(x.reshape(1, *x.shape), size, stride)
        return out.reshape(out.shape[1:])
    return max_pool1d(x, size, stride)


# -- gated graph neural network ----------------------------------------------


@dataclass
class GgnnParams:
    w_msg: Tensor  # (H, H)
    b_msg: Tensor  # (H,)
    w_r: Tensor
    u_r: Tensor
    w_z: Tensor
    u_z: Tensor
    w_h: Tensor
    u_h: Tensor
    w_out: Tensor  # (H + L_a', D_o)
    b_out: Tensor  # (D_o,)
    steps: int = 5

    @property
    def hidden(self) -> int:
        return self.w_msg.shape[0]

    @classmethod
    def init(cls, rng, hidden: int, annotation: int, out_dim: int, steps: int = 5) -> GgnnParams:
        if steps < 0:
            raise ValueError(f"propagation steps must be >= 0, got {steps}")
        sq = lambda: uniform_init(rng, (hidden, hidden), hidden)
        return cls(
            w_msg=sq(),
            b_msg=zeros((hidden,)),
            w_r=sq(),
            u_r=sq(),
            w_z=sq(),
            u_z=sq(),
            w_h=sq(),
            u_h=sq(),
            w_out=uniform_init(rng, (hidden + annotation, out_dim), hidden + annotation),
            b_out=zeros((out_dim,)),
            steps=steps,
        )


def adjacency_matrix(graph) -> np.ndarray:
    adj = np.zeros((graph.node_count, graph.node_count))
    for u, v in graph.edges:
        adj[u, v] = adj[v, u] = 1.0
    return adj


def ggnn_propagate(h0, graph, p: GgnnParams) -> Tensor:
    """Run ``p.steps`` rounds of neighbour messaging plus GRU-style update.

    ``h0`` is ``(K, H)`` or ``(B, K, H)``; ``graph`` has ``node_count`` and
    ``edges``.  The message for node v sums ``h_u W_msg + b_msg`` over its
    neighbours, so isolated nodes get a zero message.
    """
    h = as_tensor(h0)
    if h.shape[-2] != graph.node_count:
        raise ShapeError(f"hidden state has {h.shape[-2]} nodes but the graph has {graph.node_count}")
    if h.shape[-1] != p.hidden:
        raise ShapeError(f"hidden size {h.shape[-1]} does not match GGNN size {p.hidden}")
    adj = adjacency_matrix(graph)
    for _ in range(p.steps):
        msg = adj @ (h @ p.w_msg + p.b_msg)
        r = sigmoid(msg @ p.w_r + h @ p.u_r)
        z = sigmoid(msg @ p.w_z + h @ p.u_z)
        h_cand = tanh(msg @ p.w_h + (h * r) @ p.u_h)
        h = (1.0 - z) * h + z * h_cand
    return h


def ggnn_output(h_final, a_prime, p: GgnnParams) -> Tensor:
    """``tanh([h ; a'] W_out + b_out)`` per node."""
    h_final, a_prime = as_tensor(h_final), as_tensor(a_prime)
    if h_final.shape[:-1] != a_prime.shape[:-1]:
        raise ShapeError(f"node layout mismatch: {h_final.shape} vs {a_prime.shape}")
    joined = concat([h_final, a_prime], axis=-1)
    if joined.shape[-1] != p.w_out.shape[0]:
        raise ShapeError(
            f"output head expects {p.w_out.shape[0]} features per node, got {joined.shape[-1]}"
        )
    return tanh(joined @ p.w_out + p.b_out)


# -- LSTM --------------------------------------------------------------------


@dataclass
class LstmGates:
    """Gate weights acting on the concatenated ``[h ; inputs]`` row vector."""

    w_f: Tensor
    b_f: Tensor
    w_i: Tensor
    b_i: Tensor
    w_c: Tensor
    b_c: Tensor
    w_o: Tensor
    b_o: Tensor

    @property
    def hidden(self) -> int:
        return self.w_f.shape[1]

    @classmethod
    def init(cls, rng, in_dim: int, hidden: int) -> LstmGates:
        fan = in_dim + hidden
        mk = lambda: uniform_init(rng, (fan, hidden), fan)
        return cls(
            w_f=mk(), b_f=zeros((hidden,)),
            w_i=mk(), b_i=zeros((hidden,)),
            w_c=mk(), b_c=zeros((hidden,)),
            w_o=mk(), b_o=zeros((hidden,)),
        )

    def __call__(self, h, c, x) -> tuple[Tensor, Tensor]:
        hx = concat([as_tensor(h), as_tensor(x)], axis=-1)
        f = sigmoid(hx @ self.w_f + self.b_f)
        i = sigmoid(hx @ self.w_i + self.b_i)
        c_cand = tanh(hx @ self.w_c + self.b_c)
        o = sigmoid(hx @ self.w_o + self.b_o)
        c_next = f * c + i * c_cand
        h_next = o * tanh(c_next)
        return h_next, c_next


@dataclass
class LstmParams:
    """Decoder cell: ReLU input/calendar embeddings, gates, sigmoid output head."""

    w_s: Tensor  # (K, E_s)
    b_s: Tensor
    w_d: Tensor  # (4, E_d)
    b_d: Tensor
    gates: LstmGates
    w_out: Tensor  # (H, K)
    b_out: Tensor
    upper: list[LstmGates] = field(default_factory=list)

    @property
    def hidden(self) -> int:
        return self.gates.hidden

    @property
    def clusters(self) -> int:
        return self.w_s.shape[0]

    @classmethod
    def init(cls, rng, clusters: int, hidden: int, embed: int = 32, calendar_embed: int = 8,
             calendar_dim: int = 4, layers: int = 1) -> LstmParams:
        if layers < 1:
            raise ValueError(f"decoder needs at least one layer, got {layers}")
        return cls(
            w_s=uniform_init(rng, (clusters, embed), clusters),
            b_s=zeros((embed,)),
            w_d=uniform_init(rng, (calendar_dim, calendar_embed), calendar_dim),
            b_d=zeros((calendar_embed,)),
            gates=LstmGates.init(rng, embed + calendar_embed, hidden),
            w_out=uniform_init(rng, (hidden, clusters), hidden),
            b_out=zeros((clusters,)),
            upper=[LstmGates.init(rng, hidden, hidden) for _ in range(layers - 1)],
        )


def lstm_step(h, c, s, d, p: LstmParams) -> tuple[Tensor, Tensor, Tensor]:
    """One decoder step for a single-layer cell.

    Returns ``(h', C', s_next)`` with ``s_next = σ(C' W_out + b_out)``.
    """
    s_emb = relu(as_tensor(s) @ p.w_s + p.b_s)
    d_emb = relu(as_tensor(d) @ p.w_d + p.b_d)
    h_next, c_next = p.gates(h, c, concat([s_emb, d_emb], axis=-1))
    s_next = sigmoid(c_next @ p.w_out + p.b_out)
    return h_next, c_next, s_next


# -- dropout -----------------------------------------------------------------


def dropout(x, p_drop: float = 0.3, train: bool = True, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - p_drop)``; eval mode is the identity."""
    if not 0.0 <= p_drop < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p_drop}")
    x = as_tensor(x)
    if not train or p_drop == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a seeded generator")
    keep = rng.random(x.shape) >= p_drop
    return mul(x, keep / (1.0 - p_drop))
