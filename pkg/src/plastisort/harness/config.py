"""INI-style experiment configuration.

Every field of a training run lives under one of the sections ``network``,
``solver``, ``train``, ``preprocess`` and ``data``. Overrides use dotted keys
(``solver.kind=sgdm``) and take precedence over the file, which takes
precedence over the defaults below.

Example::

    [network]
    name = alexnet-mini

    [solver]
    kind = adam
    # learning_rate = default   (0.001 adam/rmsprop, 0.01 sgdm)

    [train]
    batch_size = 50
    max_epochs = 40
    shuffle = every-epoch
    seed = 0

    [data]
    root = data/pieces
    val_fraction = 0.2
    test_count = 15
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..nncore.network import NetworkSpec, get_spec, parse_layers, with_classes
from ..optim import SOLVERS, SHUFFLES, SolverConfig
from ..preprocess import ClaheParams, PreprocessParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    root: str | None = None
    val_fraction: float = 0.2
    test_count: int = 15


@dataclass(frozen=True)
class TrainConfig:
    network: str = "alexnet-mini"
    layers: str | None = None  # custom layer list, overrides the builtin topology
    input_size: int | None = None  # square input side for custom layer lists
    solver: SolverConfig = field(default_factory=SolverConfig)
    shuffle: str = "every-epoch"
    batch_size: int = 50
    max_epochs: int = 40
    seed: int = 0
    checked: bool = True
    clahe: ClaheParams = field(default_factory=ClaheParams)
    pad_mode: str = "replicate-edge"
    pad_value: int = 255
    crop_pad: int = 4
    blur_threshold: float | None = None
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("train.max_epochs must be >= 1")
        if self.shuffle not in SHUFFLES:
            raise ConfigError(f"train.shuffle must be one of {SHUFFLES}")
        if not 0 <= self.data.val_fraction < 1:
            raise ConfigError("data.val_fraction must lie in [0, 1)")
        if self.data.test_count < 0:
            raise ConfigError("data.test_count must be >= 0")

    def network_spec(self, num_classes: int = 2) -> NetworkSpec:
        if self.layers:
            size = self.input_size or 227
            spec = NetworkSpec(self.network, parse_layers(self.layers), (3, size, size), num_classes)
        else:
            spec = get_spec(self.network)
        return spec if spec.num_classes == num_classes else with_classes(spec, num_classes)

    def preprocess_params(self, size: int) -> PreprocessParams:
        return PreprocessParams(self.clahe, self.pad_mode, self.pad_value, size, self.blur_threshold)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "default") else float(text)


def _opt_str(text: str) -> str | None:
    return None if text.strip().lower() in ("", "none") else text.strip()


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none", "default") else int(text)


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"{text!r} not in {options}")
        return text

    return parse


# dotted key -> parser
KEYS = {
    "network.name": str,
    "network.layers": _opt_str,
    "network.input_size": _opt_int,
    "solver.kind": _choice(SOLVERS),
    "solver.learning_rate": _opt_float,
    "solver.momentum": float,
    "solver.beta1": float,
    "solver.beta2": float,
    "solver.epsilon": float,
    "solver.decay": float,
    "train.batch_size": int,
    "train.max_epochs": int,
    "train.shuffle": _choice(SHUFFLES),
    "train.seed": int,
    "train.checked": _bool,
    "preprocess.tiles_x": int,
    "preprocess.tiles_y": int,
    "preprocess.clip_limit": float,
    "preprocess.pad_mode": _choice(("replicate-edge", "constant")),
    "preprocess.pad_value": int,
    "preprocess.crop_pad": int,
    "preprocess.blur_threshold": _opt_float,
    "data.root": _opt_str,
    "data.val_fraction": float,
    "data.test_count": int,
}


def to_flat(cfg: TrainConfig) -> dict:
    s = cfg.solver
    return {
        "network.name": cfg.network,
        "network.layers": cfg.layers,
        "network.input_size": cfg.input_size,
        "solver.kind": s.kind,
        "solver.learning_rate": s.learning_rate,
        "solver.momentum": s.momentum,
        "solver.beta1": s.beta1,
        "solver.beta2": s.beta2,
        "solver.epsilon": s.epsilon,
        "solver.decay": s.decay,
        "train.batch_size": cfg.batch_size,
        "train.max_epochs": cfg.max_epochs,
        "train.shuffle": cfg.shuffle,
        "train.seed": cfg.seed,
        "train.checked": cfg.checked,
        "preprocess.tiles_x": cfg.clahe.tiles_x,
        "preprocess.tiles_y": cfg.clahe.tiles_y,
        "preprocess.clip_limit": cfg.clahe.clip_limit,
        "preprocess.pad_mode": cfg.pad_mode,
        "preprocess.pad_value": cfg.pad_value,
        "preprocess.crop_pad": cfg.crop_pad,
        "preprocess.blur_threshold": cfg.blur_threshold,
        "data.root": cfg.data.root,
        "data.val_fraction": cfg.data.val_fraction,
        "data.test_count": cfg.data.test_count,
    }


def from_flat(flat: dict) -> TrainConfig:
    try:
        return TrainConfig(
            network=flat["network.name"],
            layers=flat["network.layers"],
            input_size=flat["network.input_size"],
            solver=SolverConfig(
                kind=flat["solver.kind"],
                learning_rate=flat["solver.learning_rate"],
                momentum=flat["solver.momentum"],
                beta1=flat["solver.beta1"],
                beta2=flat["solver.beta2"],
                epsilon=flat["solver.epsilon"],
                decay=flat["solver.decay"],
            ),
            shuffle=flat["train.shuffle"],
            batch_size=flat["train.batch_size"],
            max_epochs=flat["train.max_epochs"],
            seed=flat["train.seed"],
            checked=flat["train.checked"],
            clahe=ClaheParams(
                tiles_x=flat["preprocess.tiles_x"],
                tiles_y=flat["preprocess.tiles_y"],
                clip_limit=flat["preprocess.clip_limit"],
            ),
            pad_mode=flat["preprocess.pad_mode"],
            pad_value=flat["preprocess.pad_value"],
            crop_pad=flat["preprocess.crop_pad"],
            blur_threshold=flat["preprocess.blur_threshold"],
            data=DataConfig(
                root=flat["data.root"],
                val_fraction=flat["data.val_fraction"],
                test_count=flat["data.test_count"],
            ),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def apply_overrides(cfg: TrainConfig, overrides) -> TrainConfig:
    """Apply ``key=value`` strings or ``(key, value)`` pairs; unknown keys are rejected."""
    flat = to_flat(cfg)
    for item in overrides:
        key, value = item.split("=", 1) if isinstance(item, str) else item
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            flat[key] = KEYS[key](value.strip()) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return from_flat(flat)


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    pairs = [
        (f"{section}.{key}", value)
        for section in parser.sections()
        for key, value in parser.items(section)
    ]
    return apply_overrides(base or TrainConfig(), pairs)


def load_config(path=None, overrides=()) -> TrainConfig:
    cfg = TrainConfig()
    if path is not None:
        cfg = parse_config_text(Path(path).read_text(), cfg)
    return apply_overrides(cfg, overrides)


def dump_config(cfg: TrainConfig) -> str:
    """Render a complete config file; parsing it back reproduces ``cfg``."""
    sections: dict[str, list[str]] = {}
    for key, value in to_flat(cfg).items():
        section, name = key.split(".", 1)
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        sections.setdefault(section, []).append(f"{name} = {text}")
    return "\n".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in sections.items())


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
