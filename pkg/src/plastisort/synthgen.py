"""Procedural two-class "black plastic on a white tray" dataset.

Class A pieces carry fine-grain texture, class B pieces coarse blotches; both
share the same intensity range, so texture is the only cue.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imgio import RasterImage, save_image
from .rng import derive_seed

CLASS_CODES = ("A", "B")
PIECE_MAX = 90
BACKGROUND_MIN = 230


@dataclass(frozen=True)
class SynthSpec:
    images_per_class: int = 215
    piece_size: tuple[int, int] = (48, 96)  # diameter range before shape jitter
    fine_length: float = 1.0
    coarse_length: float = 4.0
    base_intensity: tuple[int, int] = (20, 70)
    texture_amplitude: float = 18.0
    background: float = 245.0
    background_noise: float = 3.0
    margin: int = 4
    class_names: tuple[str, str] = ("ABS", "PS")
    trays: int = 20
    tray_size: tuple[int, int] = (480, 360)
    tray_pieces: tuple[int, int] = (1, 6)
    min_gap: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.coarse_length > self.fine_length >= 1:
            raise ValueError("need coarse_length > fine_length >= 1")
        lo, hi = self.base_intensity
        if not 0 <= lo <= hi or hi >= self.background - 50:
            raise ValueError("piece intensities must stay darker than background - 50")
        if self.images_per_class < 0 or self.trays < 0:
            raise ValueError("counts must be non-negative")

    def length(self, cls: str) -> float:
        return self.fine_length if cls == "A" else self.coarse_length

    def name(self, cls: str) -> str:
        return self.class_names[CLASS_CODES.index(cls)]


def _class_code(cls: str) -> int:
    if cls not in CLASS_CODES:
        raise ValueError(f"class must be one of {CLASS_CODES}")
    return CLASS_CODES.index(cls)


def _piece_mask(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    """Star-shaped blob from a smooth radius function of angle."""
    radius = rng.uniform(spec.piece_size[0], spec.piece_size[1]) / 2
    harmonics = [(k, rng.uniform(0, 0.12), rng.uniform(0, 2 * np.pi)) for k in (2, 3, 4)]
    half = int(math.ceil(radius * 1.4)) + 1
    yy, xx = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    theta = np.arctan2(yy, xx)
    r_edge = radius * (1 + sum(a * np.cos(k * theta + ph) for k, a, ph in harmonics))
    mask = np.hypot(xx, yy) <= r_edge
    ys, xs = np.nonzero(mask)
    return mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def _texture(rng: np.random.Generator, shape, length: float) -> np.ndarray:
    noise = gaussian_filter(rng.standard_normal(shape), sigma=length, mode="reflect")
    return noise / max(noise.std(), 1e-12)


def _piece_pixels(rng, spec: SynthSpec, cls: str, mask: np.ndarray) -> np.ndarray:
    base = rng.uniform(*spec.base_intensity)
    tex = _texture(rng, mask.shape, spec.length(cls))
    return np.clip(np.rint(base + spec.texture_amplitude * tex), 0, PIECE_MAX)


def _background(rng, shape, spec: SynthSpec) -> np.ndarray:
    bg = spec.background + spec.background_noise * rng.standard_normal(shape)
    return np.clip(np.rint(bg), BACKGROUND_MIN, 255)


def generate_piece(cls: str, spec: SynthSpec = SynthSpec(), seed: int = 0) -> RasterImage:
    """One textured piece on white background, cropped to the piece plus ``spec.margin``."""
    rng = np.random.default_rng([seed, _class_code(cls)])
    mask = _piece_mask(rng, spec)
    piece = _piece_pixels(rng, spec, cls, mask)
    m = spec.margin
    canvas = _background(rng, (mask.shape[0] + 2 * m, mask.shape[1] + 2 * m), spec)
    region = canvas[m : m + mask.shape[0], m : m + mask.shape[1]]
    region[mask] = piece[mask]
    return RasterImage(canvas.astype(np.uint8))


@dataclass(frozen=True)
class PlacedPiece:
    cls: str
    x0: int
    y0: int
    width: int
    height: int
    centroid: tuple[float, float]  # (x, y)


def generate_tray(spec: SynthSpec, seed: int, n_pieces: int) -> tuple[RasterImage, list[PlacedPiece]]:
    """Tray composite with ``n_pieces`` non-touching pieces and their ground truth.

    Pieces keep ``spec.min_gap`` pixels from each other and from the border.
    """
    rng = np.random.default_rng([seed, 0x7A7])
    tw, th = spec.tray_size
    canvas = _background(rng, (th, tw), spec)
    taken: list[tuple[int, int, int, int]] = []
    placed = []
    gap = spec.min_gap
    for _ in range(n_pieces):
        cls = CLASS_CODES[int(rng.integers(2))]
        mask = _piece_mask(rng, spec)
        h, w = mask.shape
        for _attempt in range(2000):
            x0 = int(rng.integers(gap, tw - w - gap + 1)) if tw - w - 2 * gap >= 0 else -1
            y0 = int(rng.integers(gap, th - h - gap + 1)) if th - h - 2 * gap >= 0 else -1
            if x0 < 0 or y0 < 0:
                break
            box = (x0 - gap, y0 - gap, x0 + w + gap, y0 + h + gap)
            if all(box[2] <= t[0] or t[2] <= box[0] or box[3] <= t[1] or t[3] <= box[1] for t in taken):
                break
        else:
            raise RuntimeError(f"could not place {n_pieces} pieces on a {tw}x{th} tray")
        if x0 < 0 or y0 < 0:
            raise RuntimeError("piece larger than tray")
        taken.append((x0, y0, x0 + w, y0 + h))
        pix = _piece_pixels(rng, spec, cls, mask)
        region = canvas[y0 : y0 + h, x0 : x0 + w]
        region[mask] = pix[mask]
        ys, xs = np.nonzero(mask)
        placed.append(
            PlacedPiece(cls, x0, y0, w, h, (float(xs.mean() + x0), float(ys.mean() + y0)))
        )
    return RasterImage(canvas.astype(np.uint8)), placed


def generate_dataset(spec: SynthSpec, root) -> Path:
    """Write ``pieces/<class>/``, ``trays/`` and ``manifest.csv`` under ``root``.

    ``pieces/`` is a dataset root usable by the training harness; trays are
    multi-piece scenes for segmentation with ground truth in
    ``trays/truth.csv``.
    """
    root = Path(root)
    rows = []
    for cls in CLASS_CODES:
        cdir = root / "pieces" / spec.name(cls)
        cdir.mkdir(parents=True, exist_ok=True)
        for i in range(spec.images_per_class):
            seed = derive_seed(spec.seed, _class_code(cls), i)
            fname = cdir / f"{spec.name(cls).lower()}_{i:03d}.pgm"
            save_image(generate_piece(cls, spec, seed), fname)
            rows.append((fname.relative_to(root).as_posix(), spec.name(cls), seed, 1))
    truth = []
    if spec.trays:
        tdir = root / "trays"
        tdir.mkdir(parents=True, exist_ok=True)
        lo, hi = spec.tray_pieces
        for i in range(spec.trays):
            seed = derive_seed(spec.seed, 0x7A7, i)
            k = lo + i % (hi - lo + 1)
            img, pieces = generate_tray(spec, seed, k)
            fname = tdir / f"tray_{i:03d}.pgm"
            save_image(img, fname)
            rel = fname.relative_to(root).as_posix()
            rows.append((rel, "", seed, k))
            for j, p in enumerate(pieces):
                truth.append((rel, j, spec.name(p.cls), p.x0, p.y0, p.width, p.height,
                              f"{p.centroid[0]:.3f}", f"{p.centroid[1]:.3f}"))  # fmt: skip
        with open(tdir / "truth.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["filename", "piece", "class", "x0", "y0", "width", "height", "cx", "cy"])
            w.writerows(truth)
    with open(root / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "class", "seed", "n_pieces"])
        w.writerows(rows)
    return root
