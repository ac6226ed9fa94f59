"""Dataset discovery, train/val/test splitting, and cached preprocessing."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from ..imgio import RasterImage, load_image, to_grayscale
from ..preprocess import PreprocessParams, blur_metric, prepare_crop
from ..rng import derive_seed, permutation

IMAGE_SUFFIXES = (".pgm", ".ppm", ".png")
ROLES = ("train", "val", "test")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Item:
    path: Path
    label: int
    role: str


@dataclass(frozen=True)
class DatasetListing:
    root: Path
    classes: tuple[str, ...]
    items: tuple[Item, ...]  # sorted by (class, filename)

    def role(self, role: str) -> list[Item]:
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        return [it for it in self.items if it.role == role]

    def counts(self) -> dict[str, dict[str, int]]:
        out = {c: {r: 0 for r in ROLES} for c in self.classes}
        for it in self.items:
            out[self.classes[it.label]][it.role] += 1
        return out


def class_files(root) -> dict[str, list[Path]]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    classes = sorted(
        d for d in root.iterdir() if d.is_dir() and not d.name.startswith((".", "_"))
    )
    out = {}
    for d in classes:
        files = sorted(
            f for f in d.iterdir() if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES
        )
        out[d.name] = files
    if len(out) < 2:
        raise DatasetError(
            f"{root}: expected one subdirectory per class (at least 2), found {sorted(out)}"
        )
    return out


def split_dataset(root, val_fraction: float = 0.2, test_count_per_class: int = 15,
                  seed: int = 0) -> DatasetListing:  # fmt: skip
    """Per class: hold out ``test_count_per_class`` files, then ``val_fraction`` of the rest.

    Both draws are seeded permutations, so the assignment is a pure function
    of the file names and ``seed``.
    """
    files = class_files(root)
    items = []
    for label, (name, paths) in enumerate(files.items()):
        if len(paths) <= test_count_per_class:
            raise DatasetError(
                f"class {name!r} has {len(paths)} images; need more than {test_count_per_class}"
            )
        order = permutation(len(paths), derive_seed(seed, label))
        test = set(order[:test_count_per_class])
        rest = order[test_count_per_class:]
        n_val = round(val_fraction * len(rest))
        val = set(rest[:n_val])
        for i, p in enumerate(paths):
            role = "test" if i in test else "val" if i in val else "train"
            items.append(Item(p, label, role))
    return DatasetListing(Path(root), tuple(files), tuple(items))


def write_listing(listing: DatasetListing, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "class", "role"])
        for it in listing.items:
            w.writerow([it.path.relative_to(listing.root).as_posix(), listing.classes[it.label], it.role])


def read_listing(root, path) -> DatasetListing:
    """Load a pinned split written by :func:`write_listing`."""
    root = Path(root)
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["role"] not in ROLES:
                raise DatasetError(f"{path}: unknown role {row['role']!r}")
            rows.append((row["class"], root / row["filename"], row["role"]))
    classes = tuple(sorted({c for c, _, _ in rows}))
    items = sorted(
        (Item(p, classes.index(c), r) for c, p, r in rows),
        key=lambda it: (it.label, it.path.name),
    )
    return DatasetListing(root, classes, tuple(items))


@lru_cache(maxsize=4096)
def _prepared(path: str, mtime_ns: int, params: PreprocessParams) -> RasterImage:
    return prepare_crop(load_image(path), params)


def load_prepared(path, params: PreprocessParams) -> RasterImage:
    """Load and prepare one image, cached per (file, modification time, params)."""
    p = Path(path)
    return _prepared(str(p.resolve()), p.stat().st_mtime_ns, params)


def is_blurry(path, threshold: float | None) -> bool:
    if threshold is None:
        return False
    return blur_metric(to_grayscale(load_image(path))) < threshold
