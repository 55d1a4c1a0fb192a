"""Glue from raw registry + event log to model-ready windows."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

from .data import INTERVAL, DatasetSplit, LotRegistry, ParkingEvent, resample, split_by_fraction
from .preprocess import (
    DEFAULT_THRESHOLD_M,
    ClusterMap,
    ClusterSeries,
    ProximityGraph,
    Windows,
    build_graph,
    cluster_lots,
    make_windows,
    normalize,
)


@dataclass
class Dataset:
    cmap: ClusterMap
    graph: ProximityGraph
    series: ClusterSeries
    split: DatasetSplit
    train: Windows
    validation: Windows
    test: Windows


def window_dataset(series: ClusterSeries, cmap: ClusterMap, graph: ProximityGraph, split: DatasetSplit,
                   M: int = 48, n_max: int = 8) -> Dataset:
    return Dataset(
        cmap, graph, series, split,
        make_windows(series, M, n_max, split.train),
        make_windows(series, M, n_max, split.validation),
        make_windows(series, M, n_max, split.test),
    )


def build_dataset(registry: LotRegistry, events: Sequence[ParkingEvent], M: int = 48, n_max: int = 8,
                  split: DatasetSplit | None = None, end: datetime | None = None,
                  threshold_m: float = DEFAULT_THRESHOLD_M) -> Dataset:
    """Resample from the first event up to ``end`` (default: one interval past the last event),
    cluster, normalise and window.  Without an explicit split, 60/20/20 by time."""
    if not events:
        raise ValueError("empty event log")
    start = events[0].timestamp
    end = end or events[-1].timestamp + INTERVAL
    frames = resample(events, registry, start, end)
    cmap = cluster_lots(registry)
    graph = build_graph(cmap, threshold_m)
    series = normalize(frames, cmap)
    split = split or split_by_fraction(len(series))
    return window_dataset(series, cmap, graph, split, M, n_max)
