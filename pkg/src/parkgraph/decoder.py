"""Calendar-conditioned LSTM decoder with an open-ended horizon."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, as_tensor, concat, relu, sigmoid
from .nn import LstmParams


@dataclass
class DecoderConfig:
    hidden: int = 40
    embed: int = 32
    calendar_embed: int = 8
    layers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DecoderState:
    """Hidden and cell state per layer (bottom first)."""

    h: list[Tensor]
    c: list[Tensor]


def init_state(code, params: LstmParams) -> DecoderState:
    """Every layer starts with ``h = C = code``."""
    code = as_tensor(code)
    if code.shape[-1] != params.hidden:
        raise ShapeError(f"code length {code.shape[-1]} does not match decoder hidden size {params.hidden}")
    n = 1 + len(params.upper)
    return DecoderState([code] * n, [code] * n)


def _step(state: DecoderState, s, d, params: LstmParams) -> tuple[DecoderState, Tensor]:
    s_emb = relu(as_tensor(s) @ params.w_s + params.b_s)
    d_emb = relu(as_tensor(d) @ params.w_d + params.b_d)
    x = concat([s_emb, d_emb], axis=-1)
    hs, cs = [], []
    for layer, (h, c) in enumerate(zip(state.h, state.c)):
        gates = params.gates if layer == 0 else params.upper[layer - 1]
        h, c = gates(h, c, x)
        hs.append(h)
        cs.append(c)
        x = h
    s_next = sigmoid(cs[-1] @ params.w_out + params.b_out)
    return DecoderState(hs, cs), s_next


def decode(state: DecoderState, s_last, calendar, steps: int, params: LstmParams,
           teacher=None, teacher_mask=None) -> Tensor:
    """Roll the decoder forward ``steps`` times.

    The first input is ``s_last``; later inputs are the previous prediction,
    or ``teacher[j - 1]`` where ``teacher_mask[j]`` is set (all steps when a
    teacher is given without a mask).  Batched inputs carry a leading axis;
    the result is ``(steps, K)`` or ``(B, steps, K)``.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    calendar = np.asarray(calendar, dtype=np.float64)
    if calendar.shape[-2] < steps:
        raise ShapeError(f"calendar covers {calendar.shape[-2]} steps but {steps} were requested")
    if teacher is not None:
        teacher = np.asarray(teacher, dtype=np.float64)
        if teacher.shape[-2] < steps - 1:
            raise ShapeError(f"teacher covers {teacher.shape[-2]} steps but {steps} were requested")
        if teacher_mask is None:
            teacher_mask = np.ones(steps, dtype=bool)
    s_in = as_tensor(s_last)
    outputs = []
    for j in range(steps):
        if j > 0:
            s_in = as_tensor(teacher[..., j - 1, :]) if teacher is not None and teacher_mask[j] else outputs[-1]
        state, s_next = _step(state, s_in, calendar[..., j, :], params)
        outputs.append(s_next)
    expanded = [o.reshape(*o.shape[:-1], 1, o.shape[-1]) for o in outputs]
    return concat(expanded, axis=-2)
