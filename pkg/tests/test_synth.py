from datetime import timedelta

import numpy as np
import pytest

from parkgraph.data import write_event_log
from parkgraph.pipeline import build_dataset
from parkgraph.preprocess import build_graph, cluster_lots
from parkgraph.synth import SynthSpec, generate_synthetic, noise_transition


def event_bytes(events, tmp_path, name):
    path = tmp_path / name
    write_event_log(events, path)
    return path.read_bytes()


def test_same_seed_gives_identical_events(tmp_path):
    spec = SynthSpec(clusters=6, lots_per_cluster=4, weeks=0.5)
    reg_a, ev_a = generate_synthetic(spec, seed=7)
    reg_b, ev_b = generate_synthetic(spec, seed=7)
    assert reg_a.lots == reg_b.lots
    assert event_bytes(ev_a, tmp_path, "a.csv") == event_bytes(ev_b, tmp_path, "b.csv")
    _, ev_c = generate_synthetic(spec, seed=8)
    assert event_bytes(ev_c, tmp_path, "c.csv") != event_bytes(ev_a, tmp_path, "a.csv")


def test_degenerate_spec_gives_constant_occupancy():
    spec = SynthSpec(clusters=4, lots_per_cluster=5, weeks=1, noise=0.0, daily_amplitude=0.0,
                     weekly_amplitude=0.0)
    ds = build_dataset(*generate_synthetic(spec, seed=0), M=8, n_max=8, end=spec.start + timedelta(weeks=1))
    values = ds.series.values
    assert values.shape == (672, 4)
    assert np.ptp(values, axis=0).max() == 0.0


def test_adjacent_clusters_correlate_near_target():
    """Four weeks of Santander-sized clusters; the configured correlation is 0.8."""
    ds = build_dataset(*generate_synthetic(SynthSpec(), seed=0))
    corr = np.corrcoef(ds.series.values.T)
    adjacent = np.array([corr[u, v] for u, v in ds.graph.edges])
    assert len(adjacent) > 20
    assert 0.7 <= adjacent.mean() <= 0.9


def test_daily_rhythm_is_visible():
    ds = build_dataset(*generate_synthetic(SynthSpec(clusters=9, lots_per_cluster=20, weeks=2), seed=1))
    city = ds.series.values.mean(axis=1)
    x = city - city.mean()
    lag_day = np.corrcoef(x[:-96], x[96:])[0, 1]
    lag_half = np.corrcoef(x[:-48], x[48:])[0, 1]
    assert lag_day > 0.5 and lag_half < 0


def test_transition_rows_and_stability():
    spec = SynthSpec(clusters=9, lots_per_cluster=2)
    reg, _ = generate_synthetic(SynthSpec(clusters=9, lots_per_cluster=2, weeks=0.1), seed=0)
    graph = build_graph(cluster_lots(reg))
    companion = noise_transition(graph, spec.noise_persistence, spec.spatial_mixing, lag=3)
    k = graph.node_count
    np.testing.assert_allclose(companion[:k].sum(axis=1), spec.noise_persistence)
    assert np.abs(np.linalg.eigvals(companion)).max() < 1


@pytest.mark.parametrize("bad", [dict(clusters=0), dict(weeks=0), dict(lots_per_cluster=0), dict(noise=-0.1),
                                 dict(spatial_mixing=1.5), dict(diffusion_lag=0), dict(spatial_correlation=1.0),
                                 dict(lots_per_cluster=[3, 4])])
def test_invalid_specs_are_rejected(bad):
    with pytest.raises(ValueError):
        SynthSpec(**bad)


def test_unreachable_correlation_is_reported():
    with pytest.raises(ValueError, match="shared rhythm"):
        generate_synthetic(SynthSpec(clusters=4, lots_per_cluster=2, weeks=0.2, spatial_correlation=0.3), seed=0)
