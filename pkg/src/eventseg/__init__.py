"""Set-prediction segmentation of typed intervals in multichannel time series.

A convolutional backbone and transformer turn each window into a fixed number
of (class, center, length) predictions, trained with a bipartite-matching loss
and decoded back to per-timestep labels.
"""
from .decode import decode
from .events import Event, EventSet, dense_to_events, events_to_dense
from .metrics import confusion, f1_report
from .network import EventTransformer, ModelConfig
from .baseline import BaselineConfig, DenseCNN
from .pipeline import TrainConfig, evaluate, train
from .synthdata import GenConfig, generate_stream, make_split, read_dataset, write_dataset

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig", "DenseCNN", "Event", "EventSet", "EventTransformer", "GenConfig", "ModelConfig",
    "TrainConfig", "confusion", "decode", "dense_to_events", "evaluate", "events_to_dense", "f1_report",
    "generate_stream", "make_split", "read_dataset", "train", "write_dataset",
]
