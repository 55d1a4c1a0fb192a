"""Multi-horizon MAE in lot counts, for the learned model and the baselines."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .baselines import ar_fit, ar_forecast, seasonal_naive
from .data import INTERVAL, STEPS_PER_DAY, STEPS_PER_WEEK
from .preprocess import ClusterMap, ClusterSeries, Windows, denormalize
from .training import EVAL_HORIZONS, predict_windows

STEP_MINUTES = int(INTERVAL.total_seconds() // 60)
CITY = "all"

BASELINE_NOTE = (
    "baselines are simplified stand-ins: least-squares AR(4) without differencing or MA terms "
    "in place of ARIMA, and seasonal-naive in place of SARIMA"
)


@dataclass
class EvalReport:
    """Per-cluster and city-wide MAE in lot counts at each evaluated step."""

    model: str
    cluster_mae: np.ndarray  # (K, len(horizons))
    city_mae: np.ndarray  # (len(horizons),)
    horizons: tuple[int, ...] = EVAL_HORIZONS
    note: str = ""

    def __post_init__(self):
        self.horizons = tuple(int(h) for h in self.horizons)
        self.cluster_mae = np.asarray(self.cluster_mae, dtype=np.float64)
        self.city_mae = np.asarray(self.city_mae, dtype=np.float64)
        h = len(self.horizons)
        if self.cluster_mae.ndim != 2 or self.cluster_mae.shape[1] != h or self.city_mae.shape != (h,):
            raise ValueError(f"MAE tables {self.cluster_mae.shape}/{self.city_mae.shape} do not match {h} horizons")
        if (self.cluster_mae < 0).any() or (self.city_mae < 0).any() or not np.isfinite(self.cluster_mae).all():
            raise ValueError("MAE values must be finite and non-negative")
        slack = 1e-9 * (1 + self.cluster_mae.sum(axis=0))
        if (self.city_mae > self.cluster_mae.sum(axis=0) + slack).any():
            raise ValueError("city-wide MAE exceeds the sum of per-cluster MAEs")

    @property
    def n_clusters(self) -> int:
        return self.cluster_mae.shape[0]

    @property
    def horizons_min(self) -> list[int]:
        return [h * STEP_MINUTES for h in self.horizons]

    def city(self, minutes: int) -> float:
        return float(self.city_mae[self.horizons_min.index(minutes)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["cluster_id", "horizon_min", "mae_lots"])
        for k in range(self.n_clusters):
            for j, minutes in enumerate(self.horizons_min):
                writer.writerow([k, minutes, repr(float(self.cluster_mae[k, j]))])
        for j, minutes in enumerate(self.horizons_min):
            writer.writerow([CITY, minutes, repr(float(self.city_mae[j]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, model: str = "", note: str = "") -> EvalReport:
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or list(rows[0]) != ["cluster_id", "horizon_min", "mae_lots"]:
            raise ValueError("expected header cluster_id,horizon_min,mae_lots")
        minutes = sorted({int(r["horizon_min"]) for r in rows})
        if any(m % STEP_MINUTES for m in minutes):
            raise ValueError(f"horizons must be multiples of {STEP_MINUTES} minutes")
        col = {m: j for j, m in enumerate(minutes)}
        ids = sorted({int(r["cluster_id"]) for r in rows if r["cluster_id"] != CITY})
        if ids != list(range(len(ids))):
            raise ValueError("cluster ids must be 0..K-1")
        cluster = np.full((len(ids), len(minutes)), np.nan)
        city = np.full(len(minutes), np.nan)
        for r in rows:
            j = col[int(r["horizon_min"])]
            if r["cluster_id"] == CITY:
                city[j] = float(r["mae_lots"])
            else:
                cluster[int(r["cluster_id"]), j] = float(r["mae_lots"])
        if np.isnan(cluster).any() or np.isnan(city).any():
            raise ValueError("report is missing cluster/horizon rows")
        return cls(model, cluster, city, tuple(m // STEP_MINUTES for m in minutes), note)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "horizons_min": self.horizons_min,
            "city_mae": [float(x) for x in self.city_mae],
            "cluster_mae": [[float(x) for x in row] for row in self.cluster_mae],
            "note": self.note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        horizons = tuple(int(m) // STEP_MINUTES for m in d["horizons_min"])
        return cls(d["model"], d["cluster_mae"], d["city_mae"], horizons, d.get("note", ""))


def report_from_predictions(pred: np.ndarray, target: np.ndarray, cmap: ClusterMap, model: str,
                            horizons=EVAL_HORIZONS, note: str = "") -> EvalReport:
    """Score normalised ``(W, steps, K)`` forecasts after converting both sides to lot counts."""
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.shape[0] == 0:
        raise ValueError("no windows to evaluate")
    if pred.shape[1] < max(horizons):
        raise ValueError(f"need {max(horizons)} forecast steps, got {pred.shape[1]}")
    diff = denormalize(pred, cmap) - denormalize(target, cmap)
    idx = [h - 1 for h in horizons]
    cluster = np.abs(diff[:, idx, :]).mean(axis=0).T
    city = np.abs(diff[:, idx, :].sum(axis=2)).mean(axis=0)
    return EvalReport(model, cluster, city, tuple(horizons), note)


def evaluate(model, windows: Windows, cmap: ClusterMap, horizons=EVAL_HORIZONS, name: str | None = None,
             batch_size: int = 512) -> EvalReport:
    """Free-running forecast of ``max(horizons)`` steps per window, scored in lot counts.

    ``model`` only needs a ``predict(inputs, calendar, steps)`` method.
    """
    if len(windows) == 0:
        raise ValueError("no test windows")
    steps = max(horizons)
    pred = predict_windows(model, windows, steps, batch_size)
    if name is None:
        name = getattr(getattr(model, "encoder_cfg", None), "kind", type(model).__name__)
    return report_from_predictions(pred, windows.targets[:, :steps], cmap, name, horizons)


def baseline_predictions(method: str, series: ClusterSeries, windows: Windows, steps: int,
                         train_range: tuple[int, int] | None = None, ar_order: int = 4) -> np.ndarray:
    """Normalised ``(W, steps, K)`` baseline forecasts for windows cut from ``series``."""
    values = series.values
    w, k = len(windows), values.shape[1]
    pred = np.zeros((w, steps, k))
    if method == "ar4":
        lo, hi = train_range if train_range is not None else (0, len(values))
        models = [ar_fit(values[lo:hi, c], ar_order) for c in range(k)]
        for i, start in enumerate(windows.starts):
            for c in range(k):
                pred[i, :, c] = ar_forecast(models[c], values[:start, c], steps)
    elif method in ("seasonal_day", "seasonal_week"):
        period = STEPS_PER_DAY if method == "seasonal_day" else STEPS_PER_WEEK
        for i, start in enumerate(windows.starts):
            pred[i] = seasonal_naive(values[:start], steps, period)
    else:
        raise ValueError(f"unknown baseline {method!r}")
    return pred


def evaluate_baseline(method: str, series: ClusterSeries, windows: Windows, cmap: ClusterMap,
                      train_range: tuple[int, int] | None = None, horizons=EVAL_HORIZONS) -> EvalReport:
    steps = max(horizons)
    pred = baseline_predictions(method, series, windows, steps, train_range)
    return report_from_predictions(pred, windows.targets[:, :steps], cmap, method, horizons, BASELINE_NOTE)


def reference_report(kind: str) -> EvalReport:
    """Published figures for ``kind`` in report form (format fixture only)."""
    from .reference import CITY_MAE, CLUSTER_MAE

    kinds = ("rnn", "cnn", "gnn")
    if kind not in kinds:
        raise ValueError(f"per-cluster figures exist for {kinds}, not {kind!r}")
    off = 1 + 4 * kinds.index(kind)
    cluster = np.array([CLUSTER_MAE[c][off : off + 4] for c in sorted(CLUSTER_MAE)])
    return EvalReport(f"published-{kind}", cluster, np.array(CITY_MAE[kind]), EVAL_HORIZONS,
                      "published Santander figures; dataset not public, not a reproduction target")
