"""Synthetic ultrasound-like images and the on-disk dataset layout.

Layout of a dataset directory::

    manifest.tsv        id <TAB> split <TAB> image path <TAB> mask path
    dataset.txt         generator settings (key=value)
    images/0000.pgm     8-bit grayscale image
    masks/0000.pgm      mask, 0 / 255
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ValidationError
from .supervision import boundary_from_mask
from .tensorio import read_image, write_pgm

MASK_FRACTION = (0.02, 0.6)
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Degradation:
    blur_sigma: Tuple[float, float] = (1.0, 3.0)
    speckle_std: Tuple[float, float] = (0.1, 0.3)
    contrast_gap: Tuple[float, float] = (0.15, 0.4)
    background: Tuple[float, float] = (0.2, 0.5)
    axis_frac: Tuple[float, float] = (0.08, 0.3)


DISTRIBUTIONS: Dict[str, Degradation] = {
    "default": Degradation(),
    # held-out analogue of an unseen scanner: heavier noise, weaker contrast, smaller targets
    "shift": Degradation(blur_sigma=(2.0, 4.0), speckle_std=(0.3, 0.45), contrast_gap=(0.1, 0.25),
                         background=(0.1, 0.4), axis_frac=(0.06, 0.22)),
}


def ellipse_mask(size: int, rng: np.random.Generator, axis_frac=(0.08, 0.3)) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(0.15, 0.85, size=2) * size
        ay, ax = rng.uniform(*axis_frac, size=2) * size
        theta = rng.uniform(0.0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        mask |= (u / ax) ** 2 + (v / ay) ** 2 <= 1.0
    return mask


def synth_sample(rng: np.random.Generator, size: int = 64, distribution: str = "default",
                 max_tries: int = 1000) -> Tuple[np.ndarray, np.ndarray]:
    """One ``(image, mask)`` pair of shape ``(size, size)``.

    Masks are rejection-sampled until the foreground fraction lies strictly
    inside ``MASK_FRACTION``.
    """
    deg = DISTRIBUTIONS[distribution]
    for _ in range(max_tries):
        mask = ellipse_mask(size, rng, deg.axis_frac)
        frac = mask.mean()
        if MASK_FRACTION[0] < frac < MASK_FRACTION[1]:
            break
    else:  # pragma: no cover
        raise RuntimeError("could not draw a mask with an acceptable foreground fraction")
    bg = rng.uniform(*deg.background)
    gap = rng.uniform(*deg.contrast_gap)
    clean = bg + gap * mask
    blurred = ndimage.gaussian_filter(clean, sigma=rng.uniform(*deg.blur_sigma), mode="nearest")
    noise = rng.normal(0.0, rng.uniform(*deg.speckle_std), size=clean.shape)
    image = np.clip(blurred * (1.0 + noise), 0.0, 1.0)
    return image, mask.astype(np.float64)


def split_counts(n: int, ratios: Sequence[float]) -> Tuple[int, int, int]:
    n_train = int(round(n * ratios[0]))
    n_val = int(round(n * ratios[1]))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def generate_dataset(root, n: int, size: int = 64, seed: int = 0, ratios=(0.8, 0.1, 0.1),
                     distribution: str = "default") -> Path:
    if n < 1:
        raise ConfigError(f"dataset needs n >= 1 samples, got {n}")
    if distribution not in DISTRIBUTIONS:
        raise ConfigError(f"unknown distribution {distribution!r}")
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    order = np.random.default_rng([seed, 1]).permutation(n)
    n_train, n_val, _ = split_counts(n, ratios)
    split_of = {}
    for rank, idx in enumerate(order):
        split_of[int(idx)] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    rows = []
    for i in range(n):
        image, mask = synth_sample(np.random.default_rng([seed, 2, i]), size, distribution)
        sid = f"{i:04d}"
        write_pgm(root / "images" / f"{sid}.pgm", image)
        write_pgm(root / "masks" / f"{sid}.pgm", mask)
        rows.append((sid, split_of[i], f"images/{sid}.pgm", f"masks/{sid}.pgm"))
    with open(root / "manifest.tsv", "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(("id", "split", "image", "mask"))
        w.writerows(rows)
    (root / "dataset.txt").write_text(
        f"n={n}\nsize={size}\nseed={seed}\ndistribution={distribution}\n"
        f"split={ratios[0]:g}:{ratios[1]:g}:{ratios[2]:g}\n")
    return root


def read_manifest(root) -> List[Dict[str, str]]:
    path = Path(root) / "manifest.tsv"
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


@dataclass
class Split:
    ids: List[str]
    images: np.ndarray      # (N, 1, H, W) in [0, 1]
    masks: np.ndarray       # (N, 1, H, W) in {0, 1}
    boundaries: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.ids)


def load_split(root, split: str, radius: int = 1) -> Split:
    if split not in SPLITS and split != "all":
        raise ConfigError(f"split must be one of {SPLITS + ('all',)}, got {split!r}")
    root = Path(root)
    rows = [r for r in read_manifest(root) if split == "all" or r["split"] == split]
    if not rows:
        return Split([], np.zeros((0, 1, 1, 1)), np.zeros((0, 1, 1, 1)), np.zeros((0, 1, 1, 1)))
    images = np.stack([read_image(root / r["image"]) for r in rows])[:, None]
    masks = np.stack([read_image(root / r["mask"]) for r in rows])[:, None]
    masks = (masks >= 0.5).astype(np.float64)
    if images.shape != masks.shape:
        raise ValidationError("image and mask sizes differ in dataset")
    return Split([r["id"] for r in rows], images, masks, boundary_from_mask(masks, radius))
