"""Adam, SGD with momentum and RMSProp, plus mini-batch ordering."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .nncore.network import NonFiniteError, WeightStore

SOLVERS = ("adam", "sgdm", "rmsprop")
SHUFFLES = ("never", "once", "every-epoch")

DEFAULT_LEARNING_RATES = {"sgdm": 0.01, "adam": 0.001, "rmsprop": 0.001}


@dataclass(frozen=True)
class SolverConfig:
    """Solver hyperparameters; ``learning_rate=None`` picks the solver's default."""

    kind: str = "adam"
    learning_rate: float | None = None
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay: float = 0.9

    def __post_init__(self):
        if self.kind not in SOLVERS:
            raise ValueError(f"unknown solver {self.kind!r}; choose from {SOLVERS}")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        for name in ("momentum", "beta1", "beta2", "decay"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")

    @property
    def lr(self) -> float:
        if self.learning_rate is None:
            return DEFAULT_LEARNING_RATES[self.kind]
        return self.learning_rate


@dataclass
class SolverState:
    moments: dict[str, WeightStore] = field(default_factory=dict)
    step: int = 0


def init_state(cfg: SolverConfig, weights: WeightStore) -> SolverState:
    names = {"sgdm": ("velocity",), "adam": ("m", "v"), "rmsprop": ("mean_square",)}[cfg.kind]
    return SolverState({n: weights.zeros_like() for n in names}, 0)


def solver_step(
    cfg: SolverConfig,
    state: SolverState,
    weights: WeightStore,
    grads: WeightStore,
    checked: bool = False,
) -> tuple[WeightStore, SolverState]:
    """One update of every parameter tensor. Inputs are not modified."""
    if set(grads.params) != set(weights.params):
        raise ValueError("gradient layers do not match weight layers")
    if checked:
        for key, g in grads.tensors():
            if not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient in layer {key[0]}")
    t = state.step + 1
    lr = cfg.lr
    new_w, new_m = {}, {name: {} for name in state.moments}
    for idx, (w, b) in weights.items():
        gw, gb = grads.params[idx]
        out = []
        for slot, (p, g) in enumerate(((w, gw), (b, gb))):
            if p.shape != g.shape:
                raise ValueError(f"layer {idx}: gradient shape {g.shape} != parameter {p.shape}")
            if cfg.kind == "sgdm":
                v = cfg.momentum * state.moments["velocity"].params[idx][slot] - lr * g
                p = p + v
                new_m["velocity"].setdefault(idx, []).append(v)
            elif cfg.kind == "adam":
                m = cfg.beta1 * state.moments["m"].params[idx][slot] + (1 - cfg.beta1) * g
                v = cfg.beta2 * state.moments["v"].params[idx][slot] + (1 - cfg.beta2) * (g * g)
                m_hat = m / (1 - cfg.beta1**t)
                v_hat = v / (1 - cfg.beta2**t)
                p = p - lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
                new_m["m"].setdefault(idx, []).append(m)
                new_m["v"].setdefault(idx, []).append(v)
            else:
                s = cfg.decay * state.moments["mean_square"].params[idx][slot] + (1 - cfg.decay) * (g * g)
                p = p - lr * g / (np.sqrt(s) + cfg.epsilon)
                new_m["mean_square"].setdefault(idx, []).append(s)
            out.append(p.astype(w.dtype, copy=False))
        new_w[idx] = tuple(out)
    moments = {
        name: WeightStore({i: tuple(ts) for i, ts in per.items()}) for name, per in new_m.items()
    }
    return WeightStore(new_w, weights.stats), SolverState(moments, t)


@dataclass(frozen=True)
class ShufflePolicy:
    kind: str = "every-epoch"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHUFFLES:
            raise ValueError(f"unknown shuffle policy {self.kind!r}; choose from {SHUFFLES}")

    def order(self, n: int, epoch: int) -> list[int]:
        if self.kind == "never":
            return list(range(n))
        # "once" reuses the epoch-0 permutation for every epoch
        e = epoch if self.kind == "every-epoch" else 0
        return rng.permutation(n, rng.derive_seed(self.seed, e))


def make_batches(n: int, batch_size: int, policy: ShufflePolicy, epoch: int) -> list[list[int]]:
    """Consecutive chunks of the epoch's order; the final short batch is kept."""
    if n < 1 or batch_size < 1:
        raise ValueError("n and batch_size must be >= 1")
    order = policy.order(n, epoch)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]
