"""Synthetic street-parking data with daily/weekly rhythm and spatially
correlated fluctuations, for desk-scale experiments."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np
from scipy.linalg import solve_discrete_lyapunov
from scipy.sparse import csgraph

from .data import FREE, INTERVAL, OCCUPIED, STEPS_PER_DAY, STEPS_PER_WEEK, Lot, LotRegistry, ParkingEvent
from .nn import adjacency_matrix
from .preprocess import EARTH_RADIUS_M, build_graph, cluster_lots

# Lots per street in the Santander deployment (27 streets, 323 lots).
SANTANDER_CLUSTER_SIZES = (
    10, 15, 5, 13, 6, 6, 14, 15, 6, 20, 12, 6, 10, 5, 18, 10, 10, 11, 16, 29, 7, 12, 10, 10, 18, 17, 12,
)

SANTANDER_ORIGIN = (43.4623, -3.8099)


@dataclass
class SynthSpec:
    clusters: int = 27
    lots_per_cluster: int | Sequence[int] = SANTANDER_CLUSTER_SIZES
    weeks: float = 4.0
    daily_amplitude: float = 0.15
    weekly_amplitude: float = 0.05
    # target Pearson correlation between graph-adjacent cluster availabilities
    spatial_correlation: float = 0.8
    noise: float = 0.1
    noise_persistence: float = 0.9
    # share of each cluster's lag-1 fluctuation inherited from its graph neighbours
    spatial_mixing: float = 0.5
    # delay, in 15-minute steps, before a neighbour's fluctuation reaches a cluster
    diffusion_lag: int = 4
    base_availability: float = 0.4
    spacing_m: float = 80.0
    start: datetime = field(default_factory=lambda: datetime(2014, 4, 29, tzinfo=timezone.utc))

    def __post_init__(self):
        if isinstance(self.start, str):
            from .data import parse_timestamp

            self.start = parse_timestamp(self.start)
        if self.clusters <= 0:
            raise ValueError("cluster count must be positive")
        if self.weeks <= 0:
            raise ValueError("duration must be positive")
        sizes = self.sizes
        if len(sizes) != self.clusters or min(sizes) <= 0:
            raise ValueError(f"need {self.clusters} positive cluster sizes, got {sizes}")
        if self.noise < 0 or self.spacing_m <= 0:
            raise ValueError("noise must be >= 0 and spacing positive")
        if not 0 <= self.noise_persistence < 1:
            raise ValueError("noise persistence must lie in [0, 1)")
        if not 0 <= self.spatial_mixing <= 1:
            raise ValueError("spatial mixing must lie in [0, 1]")
        if self.diffusion_lag < 1:
            raise ValueError("diffusion lag must be at least one step")
        if not 0 <= self.spatial_correlation < 1:
            raise ValueError("spatial correlation must lie in [0, 1)")

    @property
    def sizes(self) -> list[int]:
        if isinstance(self.lots_per_cluster, int):
            return [self.lots_per_cluster] * self.clusters
        return [int(n) for n in self.lots_per_cluster]

    @property
    def steps(self) -> int:
        return int(round(self.weeks * STEPS_PER_WEEK))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"] = self.start.strftime("%Y-%m-%dT%H:%M:%SZ")
        d["lots_per_cluster"] = self.sizes
        return d


def make_registry(spec: SynthSpec, rng: np.random.Generator) -> LotRegistry:
    """Clusters on a jittered square grid, lots strung along each street."""
    cols = math.ceil(math.sqrt(spec.clusters))
    lat0, lon0 = SANTANDER_ORIGIN
    m_per_deg_lat = EARTH_RADIUS_M * math.pi / 180
    m_per_deg_lon = m_per_deg_lat * math.cos(math.radians(lat0))
    jitter = 0.06 * spec.spacing_m
    lots = []
    for k, size in enumerate(spec.sizes):
        cx = (k % cols) * spec.spacing_m + rng.uniform(-jitter, jitter)
        cy = (k // cols) * spec.spacing_m + rng.uniform(-jitter, jitter)
        along = np.linspace(-0.2, 0.2, size) * spec.spacing_m if size > 1 else np.zeros(1)
        for j, dx in enumerate(along):
            lots.append(Lot(
                f"S{k:02d}L{j:02d}",
                round(float(lat0 + cy / m_per_deg_lat), 7),
                round(float(lon0 + (cx + dx) / m_per_deg_lon), 7),
                f"street_{k:02d}",
            ))
    return LotRegistry(lots)


def _hop_correlation(graph, rho: float) -> np.ndarray:
    """Correlation matrix with ``rho ** hops`` between clusters, repaired to be PSD."""
    k = graph.node_count
    adj = adjacency_matrix(graph)
    hops = csgraph.shortest_path(adj, unweighted=True, directed=False)
    finite = np.isfinite(hops)
    corr = np.where(finite, rho ** np.where(finite, hops, 0), 0.0)
    corr[np.diag_indices(k)] = 1.0
    vals, vecs = np.linalg.eigh(corr)
    corr = (vecs * np.clip(vals, 1e-9, None)) @ vecs.T
    d = np.sqrt(np.diag(corr))
    return corr / np.outer(d, d)


def noise_transition(graph, persistence: float, mixing: float, lag: int = 1) -> np.ndarray:
    """Companion matrix of the fluctuation process, acting on ``[n(t), ..., n(t - lag + 1)]``.

    Each cluster keeps ``1 - mixing`` of its own last fluctuation and takes
    ``mixing`` from the mean of its neighbours' fluctuation ``lag`` steps ago;
    isolated clusters keep all of their own.
    """
    adj = adjacency_matrix(graph)
    k = adj.shape[0]
    deg = adj.sum(axis=1)
    mean_nbr = np.divide(adj, deg[:, None], out=np.zeros_like(adj), where=deg[:, None] > 0)
    own = np.where(deg > 0, 1.0 - mixing, 1.0)
    companion = np.zeros((k * lag, k * lag))
    companion[:k, :k] = persistence * np.diag(own)
    companion[:k, k * (lag - 1):] += persistence * mixing * mean_nbr
    companion[k:, :-k] = np.eye(k * (lag - 1))
    return companion


def _stationary(transition: np.ndarray, shock_cov: np.ndarray) -> np.ndarray:
    """Stationary covariance of the full companion state."""
    k = shock_cov.shape[0]
    q = np.zeros_like(transition)
    q[:k, :k] = shock_cov
    return solve_discrete_lyapunov(transition, q)


def _mean_adjacent_correlation(graph, transition, shock_rho: float) -> float:
    k = graph.node_count
    cov = _stationary(transition, _hop_correlation(graph, shock_rho))[:k, :k]
    d = np.sqrt(np.diag(cov))
    corr = cov / np.outer(d, d)
    return float(np.mean([corr[u, v] for u, v in graph.edges]))


def calibrate_shock_correlation(graph, transition, target: float, tol: float = 1e-6) -> float:
    """Shock correlation giving the requested mean stationary correlation across edges."""
    if not graph.edges:
        return 0.0
    lo, hi = 0.0, 0.999
    if _mean_adjacent_correlation(graph, transition, lo) > target:
        raise ValueError(f"neighbour mixing alone already correlates adjacent noise above {target:.3f}")
    if _mean_adjacent_correlation(graph, transition, hi) < target:
        raise ValueError(f"adjacent noise correlation {target:.3f} is out of reach")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _mean_adjacent_correlation(graph, transition, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def periodic_component(spec: SynthSpec, steps: int) -> np.ndarray:
    t = np.arange(steps)
    return (spec.daily_amplitude * np.sin(2 * np.pi * t / STEPS_PER_DAY)
            + spec.weekly_amplitude * np.sin(2 * np.pi * t / STEPS_PER_WEEK))


def noise_target(spec: SynthSpec) -> float:
    """Adjacent-cluster fluctuation correlation that makes the total series hit
    ``spec.spatial_correlation`` once the shared rhythm is added."""
    var_p = 0.5 * (spec.daily_amplitude**2 + spec.weekly_amplitude**2)
    sigma2 = spec.noise**2
    rho_n = (spec.spatial_correlation * (var_p + sigma2) - var_p) / sigma2
    if rho_n < 0:
        floor = var_p / (var_p + sigma2)
        raise ValueError(
            f"spatial correlation {spec.spatial_correlation} is below {floor:.3f}, "
            "the correlation implied by the shared rhythm alone"
        )
    return rho_n


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def synthesize_availability(spec: SynthSpec, graph, rng: np.random.Generator) -> np.ndarray:
    """Latent availability fraction ``(T, K)`` in [0, 1].

    A city-wide daily/weekly rhythm plus a spatial fluctuation: each cluster
    inherits part of its neighbours' fluctuation from ``spec.diffusion_lag``
    steps earlier, and shocks are correlated by graph distance.  The shock
    correlation is calibrated so the total series of adjacent clusters
    correlate at ``spec.spatial_correlation`` on average; every cluster's
    fluctuation has standard deviation ``spec.noise``.
    """
    steps, k = spec.steps, spec.clusters
    periodic = periodic_component(spec, steps)
    noise = np.zeros((steps, k))
    if spec.noise > 0:
        transition = noise_transition(graph, spec.noise_persistence, spec.spatial_mixing, spec.diffusion_lag)
        shock_cov = _hop_correlation(graph, calibrate_shock_correlation(graph, transition, noise_target(spec)))
        stationary = _stationary(transition, shock_cov)
        shocks = rng.standard_normal((steps, k)) @ _psd_sqrt(shock_cov).T
        state = _psd_sqrt(stationary) @ rng.standard_normal(k * spec.diffusion_lag)
        noise[0] = state[:k]
        for t in range(1, steps):
            state = transition @ state
            state[:k] += shocks[t]
            noise[t] = state[:k]
        noise *= spec.noise / np.sqrt(np.diag(stationary)[:k])
    return np.clip(spec.base_availability + periodic[:, None] + noise, 0.0, 1.0)


def generate_synthetic(spec: SynthSpec, seed: int) -> tuple[LotRegistry, list[ParkingEvent]]:
    """Registry plus a sorted event log whose 15-minute resampling reproduces
    ``round(latent availability * cluster size)`` free lots per cluster."""
    rng = np.random.default_rng(seed)
    registry = make_registry(spec, rng)
    graph = build_graph(cluster_lots(registry))
    avail = synthesize_availability(spec, graph, rng)
    sizes = np.array(spec.sizes)
    counts = np.rint(avail * sizes).astype(np.int64)

    events: list[ParkingEvent] = []
    lot_ids = [[f"S{k:02d}L{j:02d}" for j in range(n)] for k, n in enumerate(sizes)]
    free: list[np.ndarray] = []
    for k, n in enumerate(sizes):
        state = np.zeros(n, dtype=bool)
        state[rng.choice(n, size=counts[0, k], replace=False)] = True
        free.append(state)
        for j in range(n):
            events.append(ParkingEvent(spec.start, lot_ids[k][j], FREE if state[j] else OCCUPIED))
    for t in range(1, spec.steps):
        tick = spec.start + t * INTERVAL
        for k in range(spec.clusters):
            delta = counts[t, k] - counts[t - 1, k]
            if delta == 0:
                continue
            state = free[k]
            pool = np.flatnonzero(~state if delta > 0 else state)
            flip = rng.choice(pool, size=abs(delta), replace=False)
            state[flip] = delta > 0
            offsets = rng.integers(0, int(INTERVAL.total_seconds()), size=len(flip))
            for j, off in zip(flip, offsets):
                events.append(ParkingEvent(tick - timedelta(seconds=int(off)), lot_ids[k][j],
                                           FREE if delta > 0 else OCCUPIED))
    events.sort()
    return registry, events
