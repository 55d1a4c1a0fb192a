"""Self-describing binary checkpoints.

Layout::

    magic (8 bytes) | version (u32 LE) | header length (u64 LE) | JSON header
    | parameter blocks (float64 LE, header order) | SHA-256 of everything before
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .decoder import DecoderConfig
from .encoders import EncoderConfig
from .model import Seq2SeqModel
from .preprocess import ClusterMap, ProximityGraph
from .training import TrainConfig, restore

MAGIC = b"PKGRAPH\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    model: Seq2SeqModel
    cmap: ClusterMap
    train_config: TrainConfig | None = None
    seed: int = 0
    history_digest: str = ""
    digest: str = ""  # content digest, filled on save/load

    @property
    def model_id(self) -> str:
        return self.digest[:12]


def history_digest(history_csv: str) -> str:
    return hashlib.sha256(history_csv.encode()).hexdigest()


def encode_checkpoint(ckpt: ModelCheckpoint) -> bytes:
    params = ckpt.model.parameters()
    header = {
        "format_version": FORMAT_VERSION,
        "encoder": ckpt.model.encoder_cfg.to_dict(),
        "decoder": ckpt.model.decoder_cfg.to_dict(),
        "graph": json.loads(ckpt.model.graph.to_json()),
        "cluster_map": ckpt.cmap.to_dict(),
        "train_config": ckpt.train_config.to_dict() if ckpt.train_config else None,
        "seed": ckpt.seed,
        "history_digest": ckpt.history_digest,
        "parameters": [{"name": k, "shape": list(p.data.shape)} for k, p in params.items()],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in params.values())
    payload = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)) + head + body
    return payload + hashlib.sha256(payload).digest()


def decode_checkpoint(blob: bytes) -> ModelCheckpoint:
    if len(blob) < _PREFIX.size + _DIGEST:
        raise CheckpointError(f"checkpoint truncated: {len(blob)} bytes")
    magic, version, head_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    payload, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("checkpoint integrity check failed (truncated or corrupted)")
    try:
        header = json.loads(payload[_PREFIX.size : _PREFIX.size + head_len])
    except ValueError as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc

    graph = ProximityGraph.from_json(json.dumps(header["graph"]))
    enc = EncoderConfig.from_dict(header["encoder"])
    dec = DecoderConfig(**header["decoder"])
    model = Seq2SeqModel.create(enc, graph, seed=0, decoder_cfg=dec)
    arrays, offset = {}, _PREFIX.size + head_len
    for spec in header["parameters"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(payload):
            raise CheckpointError(f"parameter block {spec['name']} runs past the end of the file")
        arrays[spec["name"]] = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(spec["shape"])
        offset = end
    if offset != len(payload):
        raise CheckpointError("trailing bytes after parameter blocks")
    try:
        restore(model, {k: v.astype(np.float64) for k, v in arrays.items()})
    except ValueError as exc:
        raise CheckpointError(f"parameters do not fit the stored configuration: {exc}") from exc
    tc = header["train_config"]
    return ModelCheckpoint(
        model,
        ClusterMap.from_dict(header["cluster_map"]),
        TrainConfig(**tc) if tc else None,
        int(header["seed"]),
        header["history_digest"],
        digest.hex(),
    )


def save_checkpoint(ckpt: ModelCheckpoint, path) -> str:
    """Write atomically and return the content digest (hex)."""
    blob = encode_checkpoint(ckpt)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    ckpt.digest = blob[-_DIGEST:].hex()
    return ckpt.digest


def load_checkpoint(path) -> ModelCheckpoint:
    return decode_checkpoint(Path(path).read_bytes())
