"""Forecasts from a recent history of cluster vectors, shared by the CLI and the service."""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from .data import INTERVAL, calendar_matrix, format_timestamp
from .preprocess import denormalize

MAX_STEPS = 96


def forecast(model, history: np.ndarray, last_step: int, epoch: datetime, steps: int,
             interval: timedelta = INTERVAL) -> np.ndarray:
    """Normalised ``(steps, K)`` forecast following row ``last_step`` of ``history``.

    Only the trailing ``M`` rows of ``history`` are used.
    """
    m = model.encoder_cfg.M
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 2 or history.shape[0] < m:
        raise ValueError(f"need at least {m} history steps, got {history.shape[0] if history.ndim else 0}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    cal = calendar_matrix(epoch, range(last_step + 1, last_step + 1 + steps), interval)
    return model.predict(history[None, -m:], cal[None], steps)[0]


def forecast_payload(model, cmap, model_id: str, history: np.ndarray, last_step: int, epoch: datetime,
                     steps: int, interval: timedelta = INTERVAL) -> dict:
    """JSON-ready forecast in lot counts per cluster plus the city total for every step."""
    counts = denormalize(forecast(model, history, last_step, epoch, steps, interval), cmap)
    minutes = int(interval.total_seconds() // 60)
    return {
        "model": model_id,
        "generated_at": format_timestamp(epoch + last_step * interval),
        "steps": [
            {"offset_min": minutes * (j + 1), "clusters": [float(x) for x in row], "city_total": float(row.sum())}
            for j, row in enumerate(counts)
        ],
    }
