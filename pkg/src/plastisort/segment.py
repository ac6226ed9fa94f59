"""Locate plastic pieces on a tray photo.

Pipeline: grayscale -> Otsu threshold -> binarize -> connected components ->
bounding boxes -> crops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .imgio import RasterImage, to_grayscale

DARK_FOREGROUND = "dark-foreground"
LIGHT_FOREGROUND = "light-foreground"
DEFAULT_MIN_AREA_FRACTION = 0.001
DEFAULT_MIN_CONTRAST = 40.0


class OtsuResult(NamedTuple):
    threshold: int
    degenerate: bool


@dataclass(eq=False)
class BinaryImage:
    mask: np.ndarray  # (height, width) bool

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


@dataclass(eq=False)
class LabelMap:
    labels: np.ndarray  # (height, width) int32, 0 = background
    count: int

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class BoundingBox:
    label: int
    x0: int
    y0: int
    width: int
    height: int
    area: int

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x0 + self.width and self.y0 <= y < self.y0 + self.height


def otsu_threshold(img: RasterImage) -> OtsuResult:
    """Otsu's threshold over t in 0..254, class 0 being pixels <= t.

    Between-class variance is compared in exact integer arithmetic, so ties
    (e.g. across empty histogram bins) resolve to the smallest t reliably.
    A constant image yields its value with ``degenerate=True``.
    """
    gray = img.gray
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.int64)
    total_n = int(hist.sum())
    total_s = int(np.dot(hist, np.arange(256, dtype=np.int64)))
    n0s = np.cumsum(hist).tolist()
    s0s = np.cumsum(hist * np.arange(256, dtype=np.int64)).tolist()

    best_t, best_num, best_den = 0, 0, 1
    for t in range(255):
        n0 = n0s[t]
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        s0 = s0s[t]
        s1 = total_s - s0
        # w0*w1*(mu0-mu1)^2 * N^2 == (s0*n1 - s1*n0)^2 / (n0*n1)
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_num == 0:
        return OtsuResult(int(gray.flat[0]), True)
    return OtsuResult(best_t, False)


def binarize(img: RasterImage, t: int, polarity: str = DARK_FOREGROUND) -> BinaryImage:
    gray = img.gray
    if polarity == DARK_FOREGROUND:
        return BinaryImage(gray <= t)
    if polarity == LIGHT_FOREGROUND:
        return BinaryImage(gray > t)
    raise ValueError(f"unknown polarity {polarity!r}")


_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def label_components(binary: BinaryImage, connectivity: int = 8) -> LabelMap:
    """Dense component labels numbered in raster-scan first-encounter order."""
    if connectivity not in _STRUCTURES:
        raise ValueError("connectivity must be 4 or 8")
    raw, count = ndimage.label(binary.mask, structure=_STRUCTURES[connectivity])
    if count == 0:
        return LabelMap(np.zeros(binary.mask.shape, dtype=np.int32), 0)
    flat = raw.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids != 0
    ids, first = ids[keep], first[keep]
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[ids[np.argsort(first, kind="stable")]] = np.arange(1, len(ids) + 1, dtype=np.int32)
    return LabelMap(remap[raw], int(len(ids)))


def default_min_area(width: int, height: int) -> int:
    return max(1, math.ceil(DEFAULT_MIN_AREA_FRACTION * width * height))


def region_bounding_boxes(lm: LabelMap, min_area: int | None = None) -> list[BoundingBox]:
    """Tight boxes for every component of at least ``min_area`` pixels, sorted by label.

    ``min_area=None`` uses 0.1% of the image area.
    """
    if min_area is None:
        min_area = default_min_area(lm.width, lm.height)
    if lm.count == 0:
        return []
    areas = np.bincount(lm.labels.ravel(), minlength=lm.count + 1)
    boxes = []
    for idx, sl in enumerate(ndimage.find_objects(lm.labels), start=1):
        if sl is None or areas[idx] < min_area:
            continue
        ys, xs = sl
        boxes.append(
            BoundingBox(
                label=idx,
                x0=xs.start,
                y0=ys.start,
                width=xs.stop - xs.start,
                height=ys.stop - ys.start,
                area=int(areas[idx]),
            )
        )
    return boxes


def padded_extent(box: BoundingBox, pad: int, width: int, height: int) -> tuple[int, int, int, int]:
    """``(x0, y0, x1, y1)`` of the padded box clamped to the image, end-exclusive."""
    x0 = max(0, box.x0 - pad)
    y0 = max(0, box.y0 - pad)
    x1 = min(width, box.x0 + box.width + pad)
    y1 = min(height, box.y0 + box.height + pad)
    return x0, y0, x1, y1


def extract_crops(img: RasterImage, boxes: list[BoundingBox], pad: int = 0) -> list[RasterImage]:
    crops = []
    for box in boxes:
        x0, y0, x1, y1 = padded_extent(box, pad, img.width, img.height)
        crops.append(RasterImage(img.pixels[y0:y1, x0:x1].copy()))
    return crops


@dataclass
class Segmentation:
    threshold: OtsuResult
    labels: LabelMap
    boxes: list[BoundingBox]


def class_contrast(gray: RasterImage, t: int) -> float:
    """Difference of the mean intensities above and at-or-below ``t``."""
    g = gray.gray
    low = g <= t
    if low.all() or not low.any():
        return 0.0
    return float(g[~low].mean() - g[low].mean())


def segment_image(
    img: RasterImage,
    polarity: str = DARK_FOREGROUND,
    connectivity: int = 8,
    min_area: int | None = None,
    min_contrast: float = DEFAULT_MIN_CONTRAST,
) -> Segmentation:
    """Segment a tray photo into boxes of candidate pieces.

    When the two Otsu classes differ in mean by less than ``min_contrast``
    gray levels the image is treated as an empty tray; otherwise background
    noise would be split into spurious components.
    """
    gray = to_grayscale(img)
    otsu = otsu_threshold(gray)
    if otsu.degenerate or class_contrast(gray, otsu.threshold) < min_contrast:
        empty = LabelMap(np.zeros((img.height, img.width), dtype=np.int32), 0)
        return Segmentation(otsu, empty, [])
    lm = label_components(binarize(gray, otsu.threshold, polarity), connectivity)
    return Segmentation(otsu, lm, region_bounding_boxes(lm, min_area))
