"""Rolling frame buffer and feed readers behind the prediction service."""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime
from typing import IO, Iterator

import numpy as np

from ..checkpoint import ModelCheckpoint
from ..data import STEPS_PER_DAY, FrameSeries
from ..forecast import forecast_payload
from ..preprocess import normalize

log = logging.getLogger(__name__)


class WarmingUp(Exception):
    def __init__(self, have: int, need: int):
        super().__init__(f"buffer holds {have} of the {need} steps needed to predict")
        self.have, self.need = have, need


@dataclass(frozen=True)
class Snapshot:
    last_step: int | None
    values: np.ndarray  # (n, K), oldest first

    def __len__(self) -> int:
        return self.values.shape[0]


class FrameBuffer:
    """Last ``capacity`` contiguous cluster vectors.  One writer, many readers.

    A gap in step indices restarts the buffer; stale or repeated steps are
    dropped.
    """

    def __init__(self, n_clusters: int, capacity: int = STEPS_PER_DAY):
        self.n_clusters = n_clusters
        self.capacity = capacity
        self._rows: deque[np.ndarray] = deque(maxlen=capacity)
        self._last: int | None = None
        self._lock = threading.Lock()

    def push(self, step: int, vector) -> bool:
        vec = np.array(vector, dtype=np.float64)
        if vec.shape != (self.n_clusters,):
            raise ValueError(f"expected {self.n_clusters} cluster values, got shape {vec.shape}")
        with self._lock:
            if self._last is not None and step <= self._last:
                return False
            if self._last is not None and step != self._last + 1:
                log.warning("gap in feed (%d -> %d); restarting buffer", self._last, step)
                self._rows.clear()
            self._rows.append(vec)
            self._last = step
            return True

    def snapshot(self) -> Snapshot:
        with self._lock:
            rows = list(self._rows)
            last = self._last
        values = np.array(rows) if rows else np.zeros((0, self.n_clusters))
        return Snapshot(last, values)

    def __len__(self) -> int:
        with self._lock:
            return len(self._rows)


class ServiceState:
    """Immutable model plus the rolling buffer of observed cluster vectors."""

    def __init__(self, checkpoint: ModelCheckpoint, epoch: datetime, capacity: int = STEPS_PER_DAY):
        self.checkpoint = checkpoint
        self.epoch = epoch
        self.buffer = FrameBuffer(checkpoint.cmap.n_clusters, capacity)

    @property
    def required_steps(self) -> int:
        return self.checkpoint.model.encoder_cfg.M

    @property
    def model_id(self) -> str:
        return self.checkpoint.model_id

    def cluster_vector(self, lot_ids: list[str], frame) -> np.ndarray:
        frames = FrameSeries(self.epoch, list(lot_ids), np.asarray(frame, dtype=np.uint8)[None, :])
        return normalize(frames, self.checkpoint.cmap).values[0]

    def ingest(self, lot_ids: list[str], step: int, frame) -> bool:
        return self.buffer.push(step, self.cluster_vector(lot_ids, frame))

    def predict(self, steps: int) -> dict:
        snap = self.buffer.snapshot()
        if len(snap) < self.required_steps:
            raise WarmingUp(len(snap), self.required_steps)
        ckpt = self.checkpoint
        return forecast_payload(ckpt.model, ckpt.cmap, self.model_id, snap.values, snap.last_step,
                                self.epoch, steps)

    def health(self) -> dict:
        n = len(self.buffer)
        return {"status": "ready" if n >= self.required_steps else "warming", "buffer_steps": n,
                "model": self.model_id}


# -- feeds ------------------------------------------------------------------


def _parse_header(line: str) -> list[str]:
    cols = line.strip().split(",")
    if not cols or cols[0] != "step_index":
        raise ValueError("frame feed must start with a step_index header")
    return cols[1:]


def _parse_row(line: str, width: int) -> tuple[int, np.ndarray] | None:
    cells = line.strip().split(",")
    if cells == [""]:
        return None
    if len(cells) != width + 1:
        log.warning("skipping frame row with %d cells (expected %d)", len(cells), width + 1)
        return None
    try:
        return int(cells[0]), np.array([int(c) for c in cells[1:]], dtype=np.uint8)
    except ValueError:
        log.warning("skipping malformed frame row %r", line[:60])
        return None


def read_frames(stream: IO[str]) -> tuple[list[str], Iterator[tuple[int, np.ndarray]]]:
    """Header lot ids plus an iterator over ``(step_index, frame)`` rows of a frame dump."""
    lot_ids = _parse_header(stream.readline())

    def rows():
        for line in stream:
            parsed = _parse_row(line, len(lot_ids))
            if parsed is not None:
                yield parsed

    return lot_ids, rows()


def tail_frames(path, stop: threading.Event, poll_s: float = 0.5) -> tuple[list[str], Iterator]:
    """Like :func:`read_frames` but keeps following the file until ``stop`` is set."""
    fh = open(path)
    header = fh.readline()
    while not header.endswith("\n") and not stop.is_set():
        time.sleep(poll_s)
        header += fh.readline()
    lot_ids = _parse_header(header)

    def rows():
        pending = ""
        try:
            while not stop.is_set():
                chunk = fh.readline()
                if not chunk:
                    time.sleep(poll_s)
                    continue
                pending += chunk
                if not pending.endswith("\n"):
                    continue
                parsed = _parse_row(pending, len(lot_ids))
                pending = ""
                if parsed is not None:
                    yield parsed
        finally:
            fh.close()

    return lot_ids, rows()


def run_feed(state: ServiceState, lot_ids: list[str], rows) -> int:
    """Push every row into the buffer; returns how many were accepted."""
    accepted = 0
    for step, frame in rows:
        accepted += state.ingest(lot_ids, step, frame)
    return accepted
