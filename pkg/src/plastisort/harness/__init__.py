"""Dataset protocol, training runs, evaluation, sweeps and tray classification."""
from .classify import Detection, classify
from .config import ConfigError, DataConfig, TrainConfig, dump_config, load_config
from .dataset import DatasetError, DatasetListing, split_dataset
from .evaluation import EvalReport, confusion_report, evaluate
from .sweep import AXES, SweepCell, SweepReport, sweep
from .training import TrainReport, train

__all__ = [
    "AXES",
    "ConfigError",
    "DataConfig",
    "DatasetError",
    "DatasetListing",
    "Detection",
    "EvalReport",
    "SweepCell",
    "SweepReport",
    "TrainConfig",
    "TrainReport",
    "classify",
    "confusion_report",
    "dump_config",
    "evaluate",
    "load_config",
    "split_dataset",
    "sweep",
    "train",
]
