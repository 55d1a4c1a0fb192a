import numpy as np
import pytest

from parkgraph.checkpoint import ModelCheckpoint, decode_checkpoint, encode_checkpoint
from parkgraph.data import INTERVAL, resample
from parkgraph.encoders import EncoderConfig
from parkgraph.model import Seq2SeqModel
from parkgraph.nn import FULL_SPAN
from parkgraph.pipeline import build_dataset
from parkgraph.preprocess import build_graph, cluster_lots
from parkgraph.synth import SynthSpec, generate_synthetic

TINY_M = 8

# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []

TINY_ENCODERS = {
    "gnn": dict(kind="gnn", M=TINY_M, K=4, hidden_pad=10, h_conv=(2, 4, 2), node_out=6,
                trailing=[(3, 4, 2), (6, 3, FULL_SPAN)]),
    "cnn": dict(kind="cnn", M=TINY_M, K=4, cnn_convs=[(4, 3, 1), (4, 2, 1)], cnn_final_filters=6),
    "rnn": dict(kind="rnn", M=TINY_M, K=4, rnn_hidden=6, rnn_embed=5),
}


@pytest.fixture(scope="session")
def tiny_data():
    """Four clusters of twenty lots over four days, windowed with M=8 and n_max=8."""
    spec = SynthSpec(clusters=4, lots_per_cluster=20, weeks=4 / 7)
    registry, events = generate_synthetic(spec, seed=3)
    return build_dataset(registry, events, M=TINY_M, n_max=8)


@pytest.fixture(scope="session")
def world():
    """Frames for 5 clusters over two days plus a freshly initialised M=48 RNN checkpoint."""
    spec = SynthSpec(clusters=5, lots_per_cluster=6, weeks=2 / 7)
    registry, events = generate_synthetic(spec, seed=2)
    frames = resample(events, registry, events[0].timestamp, events[-1].timestamp + INTERVAL)
    cmap = cluster_lots(registry)
    model = Seq2SeqModel.create(EncoderConfig(kind="rnn", M=48, K=5, rnn_hidden=12), build_graph(cmap), 1)
    ckpt = decode_checkpoint(encode_checkpoint(ModelCheckpoint(model, cmap, seed=1)))
    return frames, ckpt


def tiny_model(kind: str, graph, seed: int = 0) -> Seq2SeqModel:
    return Seq2SeqModel.create(EncoderConfig(**TINY_ENCODERS[kind]), graph, seed)


@pytest.fixture
def make_tiny_model(tiny_data):
    def make(kind="rnn", seed=0):
        return tiny_model(kind, tiny_data.graph, seed)

    return make


def assert_tree_equal(a: dict, b: dict):
    assert a.keys() == b.keys()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k], err_msg=k)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
