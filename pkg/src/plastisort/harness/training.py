"""The training loop: one solver step per mini-batch, validation after each epoch."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..nncore.network import NetworkSpec, WeightStore, backward, forward, init_weights, predict
from ..optim import ShufflePolicy, init_state, make_batches, solver_step
from ..preprocess import InputStats, compute_input_stats, to_input_tensor
from ..rng import derive_seed
from .config import TrainConfig
from .dataset import DatasetError, DatasetListing, is_blurry, load_prepared, split_dataset

log = logging.getLogger(__name__)

EVAL_BATCH = 32


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)  # percent, one per epoch
    final_val_accuracy: float = float("nan")
    wall_time: float = 0.0
    seed: int = 0
    epochs: int = 0
    n_train: int = 0
    n_val: int = 0
    skipped_blurry: int = 0

    @property
    def iterations(self) -> int:
        return len(self.losses)


def listing_for(config: TrainConfig) -> DatasetListing:
    if not config.data.root:
        raise DatasetError("data.root is not set")
    return split_dataset(config.data.root, config.data.val_fraction, config.data.test_count, config.seed)


def batch_tensor(images, stats: InputStats, size: int) -> np.ndarray:
    return np.concatenate([to_input_tensor(img, stats, size) for img in images], axis=0)


def accuracy(spec: NetworkSpec, weights: WeightStore, images, labels) -> float:
    """Percent of ``images`` whose eval-mode prediction equals ``labels``."""
    if not images:
        raise DatasetError("cannot measure accuracy on an empty set")
    correct = 0
    for i in range(0, len(images), EVAL_BATCH):
        x = batch_tensor(images[i : i + EVAL_BATCH], weights.stats, spec.input_size)
        correct += int((predict(spec, weights, x).classes == np.asarray(labels[i : i + EVAL_BATCH])).sum())
    return 100.0 * correct / len(images)


def train(config: TrainConfig, listing: DatasetListing | None = None) -> tuple[WeightStore, TrainReport]:
    """Train from scratch; bit-deterministic given the config, dataset bytes and seed."""
    start = time.perf_counter()
    listing = listing or listing_for(config)
    spec = config.network_spec(len(listing.classes))
    params = config.preprocess_params(spec.input_size)
    report = TrainReport(seed=config.seed, epochs=config.max_epochs)

    def gather(role):
        imgs, labels = [], []
        for it in listing.role(role):
            if is_blurry(it.path, config.blur_threshold):
                report.skipped_blurry += 1
                continue
            imgs.append(load_prepared(it.path, params))
            labels.append(it.label)
        return imgs, np.asarray(labels, dtype=np.int64)

    train_imgs, train_labels = gather("train")
    val_imgs, val_labels = gather("val")
    if not train_imgs:
        raise DatasetError("training split is empty")
    report.n_train, report.n_val = len(train_imgs), len(val_imgs)

    weights = init_weights(spec, config.seed)
    weights.stats = compute_input_stats(train_imgs)
    state = init_state(config.solver, weights)
    policy = ShufflePolicy(config.shuffle, config.seed)

    iteration = 0
    for epoch in range(config.max_epochs):
        for batch in make_batches(len(train_imgs), config.batch_size, policy, epoch):
            x = batch_tensor([train_imgs[i] for i in batch], weights.stats, spec.input_size)
            acts = forward(spec, weights, x, train=True,
                           seed=derive_seed(config.seed, iteration), checked=config.checked)  # fmt: skip
            loss, grads = backward(spec, weights, acts, train_labels[batch])
            weights, state = solver_step(config.solver, state, weights, grads, config.checked)
            report.losses.append(loss)
            iteration += 1
        if val_imgs:
            report.val_accuracy.append(accuracy(spec, weights, val_imgs, val_labels))
        log.info(
            "epoch %d/%d loss %.4f val %.2f%%",
            epoch + 1,
            config.max_epochs,
            report.losses[-1],
            report.val_accuracy[-1] if report.val_accuracy else float("nan"),
        )
    expected = config.max_epochs * math.ceil(len(train_imgs) / config.batch_size)
    assert report.iterations == expected, (report.iterations, expected)
    if report.val_accuracy:
        report.final_val_accuracy = report.val_accuracy[-1]
    report.wall_time = time.perf_counter() - start
    return weights, report


def report_rows(report: TrainReport) -> list[tuple]:
    """``(epoch, iteration, loss, val_accuracy)`` rows; val only on epoch-final iterations."""
    per_epoch = report.iterations // report.epochs
    rows = []
    for i, loss in enumerate(report.losses):
        epoch = i // per_epoch + 1
        last = (i + 1) % per_epoch == 0 and report.val_accuracy
        val = f"{report.val_accuracy[epoch - 1]:.4f}" if last else ""
        rows.append((epoch, i + 1, f"{loss:.6f}", val))
    return rows
