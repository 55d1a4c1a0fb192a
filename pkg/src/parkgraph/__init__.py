"""Multi-horizon street-parking availability forecasting with graph, convolutional
and recurrent encoders feeding a calendar-conditioned LSTM decoder."""

from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .encoders import EncoderConfig, resolve_shapes
from .evaluation import EvalReport, evaluate, evaluate_baseline
from .model import Seq2SeqModel
from .pipeline import Dataset, build_dataset
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "EncoderConfig", "EvalReport", "ModelCheckpoint", "Seq2SeqModel", "TrainConfig",
    "build_dataset", "evaluate", "evaluate_baseline", "load_checkpoint", "resolve_shapes", "save_checkpoint",
    "train",
]
