"""Segment a tray photo and classify every piece found on it."""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

from ..imgio import RasterImage
from ..nncore.network import NetworkSpec, WeightStore, predict
from ..preprocess import PreprocessParams, prepare_crop, to_input_tensor
from ..segment import BoundingBox, extract_crops, segment_image

log = logging.getLogger(__name__)


class Detection(NamedTuple):
    box: BoundingBox
    label: int
    probabilities: tuple[float, ...]


def classify(
    spec: NetworkSpec,
    weights: WeightStore,
    tray: RasterImage,
    params: PreprocessParams | None = None,
    crop_pad: int = 4,
    min_area: int | None = None,
    jobs: int = 1,
) -> list[Detection]:
    """One detection per retained component, in label order.

    Each crop is predicted on its own, so results do not depend on ``jobs``.
    """
    params = params or PreprocessParams(size=spec.input_size)
    seg = segment_image(tray, min_area=min_area)
    if not seg.boxes:
        log.warning("no pieces found on the tray")
        return []
    crops = extract_crops(tray, seg.boxes, crop_pad)

    def run(crop):
        x = to_input_tensor(prepare_crop(crop, params), weights.stats, spec.input_size)
        pred = predict(spec, weights, x)
        return int(pred.classes[0]), tuple(float(p) for p in pred.probabilities[0])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, crops))
    else:
        results = [run(c) for c in crops]
    return [Detection(box, label, probs) for box, (label, probs) in zip(seg.boxes, results)]


def detections_csv(detections: list[Detection], classes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "x0", "y0", "width", "height", "area", "class"] + [f"prob_{c}" for c in classes])
    for d in detections:
        b = d.box
        w.writerow([b.label, b.x0, b.y0, b.width, b.height, b.area, classes[d.label]]
                   + [f"{p:.6f}" for p in d.probabilities])  # fmt: skip
    return buf.getvalue()


def boxes_csv(boxes: list[BoundingBox]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "x0", "y0", "width", "height", "area"])
    for b in boxes:
        w.writerow([b.label, b.x0, b.y0, b.width, b.height, b.area])
    return buf.getvalue()
