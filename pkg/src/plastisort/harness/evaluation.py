"""Per-class accuracy and confusion matrices for a trained model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..imgio import load_image
from ..nncore.network import NetworkSpec, WeightStore, predict
from ..preprocess import PreprocessParams, prepare_crop, to_input_tensor
from .dataset import DatasetError, DatasetListing


@dataclass(frozen=True)
class EvalReport:
    """Confusion matrix with rows = true class, columns = predicted class."""

    classes: tuple[str, ...]
    confusion: np.ndarray

    @property
    def totals(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def correct(self) -> np.ndarray:
        return np.diag(self.confusion)

    @property
    def overall(self) -> float:
        """Overall accuracy in percent."""
        return 100.0 * self.correct.sum() / self.confusion.sum()

    def per_class(self) -> dict[str, tuple[int, int]]:
        return {c: (int(k), int(n)) for c, k, n in zip(self.classes, self.correct, self.totals)}

    def to_text(self) -> str:
        width = max(len(c) for c in self.classes) + 2
        head = "true\\pred".ljust(width) + "".join(c.rjust(width) for c in self.classes)
        lines = [head]
        for c, row in zip(self.classes, self.confusion):
            lines.append(c.ljust(width) + "".join(str(v).rjust(width) for v in row))
        lines.append("")
        for c, (k, n) in self.per_class().items():
            lines.append(f"{c}: {k}/{n} correct ({100.0 * k / n:.2f}%)")
        lines.append(f"overall: {self.correct.sum()}/{self.confusion.sum()} ({self.overall:.2f}%)")
        return "\n".join(lines)


def confusion_report(true, pred, classes) -> EvalReport:
    k = len(classes)
    m = np.zeros((k, k), dtype=np.int64)
    np.add.at(m, (np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return EvalReport(tuple(classes), m)


def model_predictor(spec: NetworkSpec, weights: WeightStore, params: PreprocessParams) -> Callable:
    def predict_path(path) -> int:
        img = prepare_crop(load_image(path), params)
        x = to_input_tensor(img, weights.stats, spec.input_size)
        return int(predict(spec, weights, x).classes[0])

    return predict_path


def evaluate(
    weights: WeightStore | None,
    listing: DatasetListing,
    role: str = "test",
    spec: NetworkSpec | None = None,
    params: PreprocessParams | None = None,
    predictor: Callable | None = None,
) -> EvalReport:
    """Classify every image of ``role`` and tabulate the outcome.

    ``predictor`` maps an image path to a class index; by default the model
    given by ``weights``/``spec`` is run through the full preprocessing chain.
    Only files assigned to ``role`` are ever passed to it.
    """
    items = listing.role(role)
    if not items:
        raise DatasetError(f"no images in role {role!r}")
    if predictor is None:
        if weights is None or spec is None:
            raise ValueError("need weights and spec, or an explicit predictor")
        predictor = model_predictor(spec, weights, params or PreprocessParams(size=spec.input_size))
    pred = [predictor(it.path) for it in items]
    return confusion_report([it.label for it in items], pred, listing.classes)
