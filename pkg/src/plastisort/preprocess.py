"""Crop -> network input: CLAHE, pad to square, bilinear resize, normalize."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imgio import RasterImage, round_half_away, to_grayscale

REPLICATE_EDGE = "replicate-edge"
CONSTANT = "constant"
INPUT_SIZE = 227


@dataclass(frozen=True)
class ClaheParams:
    tiles_x: int = 8
    tiles_y: int = 8
    clip_limit: float = 0.01
    bins: int = 256

    def __post_init__(self):
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ValueError("tile counts must be >= 1")
        if not 0 < self.clip_limit <= 1:
            raise ValueError("clip_limit must lie in (0, 1]")
        if not 1 <= self.bins <= 256:
            raise ValueError("bins must lie in 1..256")


@dataclass(frozen=True)
class PreprocessParams:
    clahe: ClaheParams = field(default_factory=ClaheParams)
    pad_mode: str = REPLICATE_EDGE
    pad_value: int = 255
    size: int = INPUT_SIZE
    blur_threshold: float | None = None


@dataclass(frozen=True)
class InputStats:
    """Per-channel mean of ``pixel / 255`` over the preprocessed training set."""

    means: tuple[float, ...]

    def __post_init__(self):
        if not all(np.isfinite(m) for m in self.means):
            raise ValueError("input means must be finite")


def _tile_edges(n: int, tiles: int) -> np.ndarray:
    return (np.arange(tiles + 1) * n) // tiles


def clahe_tile_mappings(gray: np.ndarray, p: ClaheParams) -> np.ndarray:
    """Per-tile intensity lookup tables, shape ``(tiles_y, tiles_x, bins)``.

    Each table is ``255 * CDF`` of the tile histogram after clipping at
    ``clip_limit * tile_area`` counts (never below the uniform level
    ``tile_area / bins``) and spreading the clipped excess evenly over all bins.
    """
    h, w = gray.shape
    ye = _tile_edges(h, p.tiles_y)
    xe = _tile_edges(w, p.tiles_x)
    row_tile = np.repeat(np.arange(p.tiles_y), np.diff(ye))
    col_tile = np.repeat(np.arange(p.tiles_x), np.diff(xe))
    tile_id = row_tile[:, None] * p.tiles_x + col_tile[None, :]
    bin_of = (gray.astype(np.int64) * p.bins) // 256
    hist = np.bincount(
        (tile_id * p.bins + bin_of).ravel(), minlength=p.tiles_y * p.tiles_x * p.bins
    ).reshape(p.tiles_y, p.tiles_x, p.bins).astype(np.float64)

    areas = (np.diff(ye)[:, None] * np.diff(xe)[None, :]).astype(np.float64)[:, :, None]
    clip = np.maximum(p.clip_limit * areas, areas / p.bins)
    clipped = np.minimum(hist, clip)
    excess = (hist - clipped).sum(axis=2, keepdims=True)
    clipped += excess / p.bins
    cdf = np.cumsum(clipped, axis=2) / areas
    return 255.0 * np.minimum(cdf, 1.0)


def _interp_coords(n: int, tiles: int):
    edges = _tile_edges(n, tiles)
    centers = (edges[:-1] + edges[1:] - 1) / 2.0
    pos = np.arange(n, dtype=np.float64)
    if tiles == 1:
        zeros = np.zeros(n, dtype=np.int64)
        return zeros, zeros, np.zeros(n)
    frac = np.interp(pos, centers, np.arange(tiles, dtype=np.float64))
    i0 = np.minimum(np.floor(frac).astype(np.int64), tiles - 2)
    return i0, i0 + 1, frac - i0


def clahe(img: RasterImage, p: ClaheParams = ClaheParams()) -> RasterImage:
    """Contrast-limited adaptive histogram equalization of a grayscale image.

    Output pixels blend the lookup tables of the four nearest tile centres
    bilinearly (clamped at the borders).
    """
    gray = img.gray
    h, w = gray.shape
    if w < p.tiles_x or h < p.tiles_y:
        raise ValueError(
            f"image {w}x{h} is smaller than the {p.tiles_x}x{p.tiles_y} tile grid"
        )
    maps = clahe_tile_mappings(gray, p)
    bins = (gray.astype(np.int64) * p.bins) // 256
    r0, r1, wy = _interp_coords(h, p.tiles_y)
    c0, c1, wx = _interp_coords(w, p.tiles_x)
    wy = wy[:, None]
    wx = wx[None, :]
    R0, R1 = r0[:, None], r1[:, None]
    C0, C1 = c0[None, :], c1[None, :]
    top = (1 - wx) * maps[R0, C0, bins] + wx * maps[R0, C1, bins]
    bottom = (1 - wx) * maps[R1, C0, bins] + wx * maps[R1, C1, bins]
    out = (1 - wy) * top + wy * bottom
    return RasterImage(np.clip(round_half_away(out), 0, 255).astype(np.uint8))


def square_pad(img: RasterImage, mode: str = REPLICATE_EDGE, value: int = 255) -> RasterImage:
    """Pad to ``S x S`` with ``S = max(w, h)``; content centred, odd pixel right/bottom."""
    h, w = img.height, img.width
    s = max(h, w)
    top, left = (s - h) // 2, (s - w) // 2
    widths = ((top, s - h - top), (left, s - w - left), (0, 0))
    if mode == REPLICATE_EDGE:
        out = np.pad(img.pixels, widths, mode="edge")
    elif mode == CONSTANT:
        out = np.pad(img.pixels, widths, mode="constant", constant_values=value)
    else:
        raise ValueError(f"unknown pad mode {mode!r}")
    return RasterImage(out)


def _sample_axis(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img: RasterImage, out_w: int, out_h: int) -> RasterImage:
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be >= 1")
    if (out_w, out_h) == (img.width, img.height):
        return RasterImage(img.pixels.copy())
    px = img.pixels.astype(np.float64)
    y0, y1, wy = _sample_axis(img.height, out_h)
    x0, x1, wx = _sample_axis(img.width, out_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = px[y0][:, x0] * (1 - wx) + px[y0][:, x1] * wx
    bottom = px[y1][:, x0] * (1 - wx) + px[y1][:, x1] * wx
    out = top * (1 - wy) + bottom * wy
    return RasterImage(np.clip(round_half_away(out), 0, 255).astype(np.uint8))


def blur_metric(img: RasterImage) -> float:
    """Variance of the 4-neighbour Laplacian over interior pixels (higher = sharper)."""
    g = img.gray.astype(np.float64)
    if g.shape[0] < 3 or g.shape[1] < 3:
        raise ValueError("blur_metric needs an image of at least 3x3")
    lap = (
        g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:] - 4.0 * g[1:-1, 1:-1]
    )
    return float(lap.var())


def prepare_crop(img: RasterImage, params: PreprocessParams = PreprocessParams()) -> RasterImage:
    """Grayscale, CLAHE, square pad and resize: the last stage before tensor conversion."""
    gray = to_grayscale(img)
    enhanced = clahe(gray, params.clahe)
    squared = square_pad(enhanced, params.pad_mode, params.pad_value)
    return resize_bilinear(squared, params.size, params.size)


def to_input_tensor(img: RasterImage, stats: InputStats, size: int = INPUT_SIZE) -> np.ndarray:
    """``1 x 3 x size x size`` float32 tensor of ``pixel/255 - channel_mean``."""
    if (img.width, img.height) != (size, size):
        raise ValueError(f"expected a {size}x{size} image, got {img.width}x{img.height}")
    px = img.pixels.astype(np.float32) / np.float32(255.0)
    if img.channels == 1:
        px = np.repeat(px, 3, axis=2)
    means = np.asarray(stats.means, dtype=np.float32)
    if means.shape != (3,):
        raise ValueError("InputStats must carry three channel means")
    return np.ascontiguousarray((px - means).transpose(2, 0, 1)[None])


def compute_input_stats(images) -> InputStats:
    """Channel means over prepared images (gray images count for all three channels)."""
    total = np.zeros(3, dtype=np.float64)
    count = 0
    for img in images:
        px = img.pixels.astype(np.float64) / 255.0
        if img.channels == 1:
            px = np.repeat(px, 3, axis=2)
        total += px.reshape(-1, 3).sum(axis=0)
        count += img.width * img.height
    if count == 0:
        raise ValueError("cannot compute input statistics of an empty set")
    return InputStats(tuple(float(m) for m in total / count))


def save_stats(path, stats: InputStats, **extra) -> None:
    """Write input statistics (plus free-form metadata) as ``key = value`` lines."""
    lines = [f"channels = {len(stats.means)}"]
    lines += [f"mean.{i} = {m!r}" for i, m in enumerate(stats.means)]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_stats(path) -> tuple[InputStats, dict[str, str]]:
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed line {line!r}")
        values[key.strip()] = val.strip()
    n = int(values.pop("channels"))
    means = tuple(float(values.pop(f"mean.{i}")) for i in range(n))
    return InputStats(means), values
