"""Encoder + decoder composition used by training, evaluation and serving."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, no_grad
from .decoder import DecoderConfig, decode, init_state
from .encoders import EncoderConfig, EncoderParams, encode, init_encoder
from .nn import LstmParams, dropout, named_tensors
from .preprocess import ProximityGraph


@dataclass
class Seq2SeqModel:
    encoder_cfg: EncoderConfig
    decoder_cfg: DecoderConfig
    encoder: EncoderParams
    decoder: LstmParams
    graph: ProximityGraph

    @classmethod
    def create(cls, encoder_cfg: EncoderConfig, graph: ProximityGraph, seed: int,
               decoder_cfg: DecoderConfig | None = None) -> Seq2SeqModel:
        """Fresh parameters drawn from ``seed``; the decoder width follows the code length."""
        code_dim = encoder_cfg.output_dim
        if decoder_cfg is None:
            decoder_cfg = DecoderConfig(hidden=code_dim)
        elif decoder_cfg.hidden != code_dim:
            raise ValueError(f"decoder hidden size {decoder_cfg.hidden} must equal code length {code_dim}")
        rng = np.random.default_rng(seed)
        enc = init_encoder(encoder_cfg, rng)
        dec = LstmParams.init(rng, encoder_cfg.K, code_dim, decoder_cfg.embed,
                              decoder_cfg.calendar_embed, layers=decoder_cfg.layers)
        return cls(encoder_cfg, decoder_cfg, enc, dec, graph)

    def parameters(self) -> dict[str, Tensor]:
        params = dict(named_tensors(self.encoder, "encoder"))
        params.update(named_tensors(self.decoder, "decoder"))
        return params

    def encode(self, inputs: np.ndarray, train: bool = False, dropout_p: float = 0.0,
               rng: np.random.Generator | None = None) -> Tensor:
        code = encode(inputs, self.graph, self.encoder_cfg, self.encoder)
        return dropout(code, dropout_p, train=train, rng=rng)

    def forward(self, inputs: np.ndarray, calendar: np.ndarray, steps: int, teacher=None,
                teacher_mask=None, train: bool = False, dropout_p: float = 0.0,
                rng: np.random.Generator | None = None) -> Tensor:
        """Predicted availability ``(B, steps, K)`` for time-major inputs ``(B, M, K)``."""
        code = self.encode(inputs, train=train, dropout_p=dropout_p, rng=rng)
        state = init_state(code, self.decoder)
        return decode(state, inputs[..., -1, :], calendar, steps, self.decoder,
                      teacher=teacher, teacher_mask=teacher_mask)

    def predict(self, inputs: np.ndarray, calendar: np.ndarray, steps: int) -> np.ndarray:
        """Eval-mode forecast without graph recording."""
        with no_grad():
            return self.forward(np.asarray(inputs, dtype=np.float64), calendar, steps).data.copy()
