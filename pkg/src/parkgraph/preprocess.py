"""Street clustering, per-cluster normalisation, proximity graph and
sliding windows."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np

from .data import INTERVAL, FrameSeries, LotRegistry, _open_text, calendar_matrix

EARTH_RADIUS_M = 6_371_008.8
DEFAULT_THRESHOLD_M = 95.0


@dataclass
class ClusterMap:
    """Lots grouped by street.  Cluster ids follow lexicographic street order."""

    streets: list[str]
    lot_to_cluster: dict[str, int]
    cluster_size: np.ndarray  # (K,) int
    centroid: np.ndarray  # (K, 2) lat, lon

    @property
    def n_clusters(self) -> int:
        return len(self.streets)

    def assignment(self, lot_ids: Sequence[str]) -> np.ndarray:
        return np.array([self.lot_to_cluster[lot] for lot in lot_ids], dtype=np.int64)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lot_id", "cluster_id"])
            for lot_id, cid in self.lot_to_cluster.items():
                writer.writerow([lot_id, cid])

    @classmethod
    def from_assignment(cls, registry: LotRegistry, source) -> ClusterMap:
        """Rebuild a map from a ``lot_id,cluster_id`` dump plus the registry's coordinates."""
        with _open_text(source) as fh:
            reader = csv.DictReader(fh)
            mapping = {row["lot_id"]: int(row["cluster_id"]) for row in reader}
        missing = set(registry.lot_ids) - set(mapping)
        if missing:
            raise ValueError(f"cluster map lacks lots: {sorted(missing)[:5]}")
        k = max(mapping.values()) + 1
        streets = [""] * k
        for lot in registry.lots:
            streets[mapping[lot.lot_id]] = lot.street_label
        return _build_map(registry, streets, mapping)

    def to_dict(self) -> dict:
        return {
            "streets": self.streets,
            "lot_to_cluster": self.lot_to_cluster,
            "cluster_size": self.cluster_size.tolist(),
            "centroid": self.centroid.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ClusterMap:
        return cls(
            list(d["streets"]),
            {k: int(v) for k, v in d["lot_to_cluster"].items()},
            np.asarray(d["cluster_size"], dtype=np.int64),
            np.asarray(d["centroid"], dtype=np.float64).reshape(-1, 2),
        )


def _build_map(registry: LotRegistry, streets: list[str], mapping: dict[str, int]) -> ClusterMap:
    k = len(streets)
    sizes = np.zeros(k, dtype=np.int64)
    sums = np.zeros((k, 2))
    for lot in registry.lots:
        cid = mapping[lot.lot_id]
        sizes[cid] += 1
        sums[cid] += (lot.latitude, lot.longitude)
    if (sizes == 0).any():
        raise ValueError(f"empty clusters: {np.flatnonzero(sizes == 0).tolist()}")
    ordered = {lot.lot_id: mapping[lot.lot_id] for lot in registry.lots}
    return ClusterMap(streets, ordered, sizes, sums / sizes[:, None])


def cluster_lots(registry: LotRegistry) -> ClusterMap:
    """One cluster per distinct street label, ids in sorted label order."""
    if len(registry) == 0:
        raise ValueError("cannot cluster an empty registry")
    streets = sorted({lot.street_label for lot in registry.lots})
    ids = {s: i for i, s in enumerate(streets)}
    return _build_map(registry, streets, {lot.lot_id: ids[lot.street_label] for lot in registry.lots})


@dataclass
class ClusterSeries:
    """Per-cluster availability fractions on the 15-minute grid."""

    epoch: datetime
    values: np.ndarray  # (T, K) in [0, 1]
    first_step: int = 0
    interval: timedelta = INTERVAL

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def step_indices(self) -> np.ndarray:
        return np.arange(self.first_step, self.first_step + len(self))

    def slice(self, start: int, stop: int) -> ClusterSeries:
        return ClusterSeries(self.epoch, self.values[start:stop], self.first_step + start, self.interval)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step_index", *(f"c{k}" for k in range(self.values.shape[1]))])
            for step, row in zip(self.step_indices, self.values):
                writer.writerow([int(step), *(repr(float(v)) for v in row)])

    @classmethod
    def read_csv(cls, source, epoch: datetime, interval: timedelta = INTERVAL) -> ClusterSeries:
        with _open_text(source) as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [row for row in reader if row]
        steps = [int(r[0]) for r in rows]
        values = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), len(header) - 1)
        first = steps[0] if steps else 0
        if steps != list(range(first, first + len(steps))):
            raise ValueError("series step indices must be contiguous")
        return cls(epoch, values, first, interval)


def normalize(frames: FrameSeries, cmap: ClusterMap) -> ClusterSeries:
    """Fraction of free lots per cluster for every frame."""
    if frames.values.shape[1] != len(cmap.lot_to_cluster):
        raise ValueError(
            f"frames have {frames.values.shape[1]} lots but the cluster map has {len(cmap.lot_to_cluster)}"
        )
    assign = cmap.assignment(frames.lot_ids)
    onehot = np.zeros((len(assign), cmap.n_clusters))
    onehot[np.arange(len(assign)), assign] = 1.0
    counts = frames.values.astype(np.float64) @ onehot
    return ClusterSeries(frames.epoch, counts / cmap.cluster_size, frames.first_step, frames.interval)


def denormalize(values: np.ndarray, cmap: ClusterMap) -> np.ndarray:
    """Expected free-lot counts per cluster; the city total is ``.sum(-1)``."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != cmap.n_clusters:
        raise ValueError(f"vector length {values.shape[-1]} does not match {cmap.n_clusters} clusters")
    return values * cmap.cluster_size


# -- graph ------------------------------------------------------------------


@dataclass(frozen=True)
class ProximityGraph:
    node_count: int
    edges: tuple[tuple[int, int], ...]  # u < v, sorted

    def __post_init__(self):
        for u, v in self.edges:
            if u == v or not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ValueError(f"invalid edge ({u}, {v}) for {self.node_count} nodes")

    def neighbours(self, node: int) -> list[int]:
        return sorted({v for u, v in self.edges if u == node} | {u for u, v in self.edges if v == node})

    def to_json(self) -> str:
        return json.dumps({"nodes": self.node_count, "edges": [list(e) for e in self.edges]})

    @classmethod
    def from_json(cls, text: str) -> ProximityGraph:
        d = json.loads(text)
        edges = sorted({(min(u, v), max(u, v)) for u, v in d["edges"]})
        return cls(int(d["nodes"]), tuple(edges))


def project_to_meters(latlon: np.ndarray) -> np.ndarray:
    """Equirectangular projection about the mean latitude, in metres."""
    latlon = np.asarray(latlon, dtype=np.float64)
    lat0 = math.radians(latlon[:, 0].mean())
    lat = np.radians(latlon[:, 0])
    lon = np.radians(latlon[:, 1])
    return np.column_stack([EARTH_RADIUS_M * lon * math.cos(lat0), EARTH_RADIUS_M * lat])


def build_graph(cmap: ClusterMap, threshold_m: float = DEFAULT_THRESHOLD_M) -> ProximityGraph:
    """Connect clusters whose centroids lie within ``threshold_m`` (inclusive)."""
    if threshold_m <= 0:
        raise ValueError("threshold must be positive")
    xy = project_to_meters(cmap.centroid)
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    u, v = np.nonzero(np.triu(dist <= threshold_m, k=1))
    return ProximityGraph(cmap.n_clusters, tuple(zip(u.tolist(), v.tolist())))


# -- windows ----------------------------------------------------------------


@dataclass
class Windows:
    """Stacked training examples.  ``starts[w]`` is the series row of the first target."""

    inputs: np.ndarray  # (W, M, K)
    targets: np.ndarray  # (W, N, K)
    calendar: np.ndarray  # (W, N, 4) for the target timestamps
    starts: np.ndarray  # (W,)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> Windows:
        return Windows(self.inputs[idx], self.targets[idx], self.calendar[idx], self.starts[idx])

    @property
    def last_observed(self) -> np.ndarray:
        return self.inputs[:, -1, :]


def make_windows(series: ClusterSeries, M: int = 48, n_max: int = 8,
                 target_range: tuple[int, int] | None = None) -> Windows:
    """Stride-1 windows of ``M`` inputs followed by ``n_max`` targets.

    With ``target_range=(a, b)`` only windows whose targets fall entirely in
    rows ``[a, b)`` are kept; their inputs may reach back before ``a``.
    """
    values = series.values
    k = values.shape[1]
    lo, hi = (0, len(series)) if target_range is None else target_range
    first = max(lo, M)
    last = hi - n_max  # inclusive
    if last < first:
        warnings.warn(f"series too short for M={M}, n_max={n_max}: no windows", stacklevel=2)
        return Windows(np.zeros((0, M, k)), np.zeros((0, n_max, k)), np.zeros((0, n_max, 4)),
                       np.zeros(0, dtype=np.int64))
    starts = np.arange(first, last + 1)
    offsets_in = np.arange(-M, 0)
    offsets_out = np.arange(n_max)
    inputs = values[starts[:, None] + offsets_in]
    targets = values[starts[:, None] + offsets_out]
    cal_rows = calendar_matrix(series.epoch, series.step_indices, series.interval)
    calendar = cal_rows[starts[:, None] + offsets_out]
    return Windows(inputs, targets, calendar, starts)
