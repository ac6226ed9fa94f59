from .network import (
    BUILTIN_SPECS,
    Activations,
    LayerSpec,
    NetworkSpec,
    NonFiniteError,
    Prediction,
    ShapeError,
    WeightStore,
    alexnet_spec,
    backward,
    forward,
    get_spec,
    init_weights,
    parse_layers,
    predict,
    tiny_spec,
)
from .weightfile import WeightFileError, load_weights, save_weights

__all__ = [
    "BUILTIN_SPECS",
    "Activations",
    "LayerSpec",
    "NetworkSpec",
    "NonFiniteError",
    "Prediction",
    "ShapeError",
    "WeightFileError",
    "WeightStore",
    "alexnet_spec",
    "backward",
    "forward",
    "get_spec",
    "init_weights",
    "load_weights",
    "parse_layers",
    "predict",
    "save_weights",
    "tiny_spec",
]
