"""Synthetic image corpus generator.

Four parameterized texture families with deliberately different patch
statistics, so a codebook trained on one family represents the others
poorly: that gap is what drives the KB-update experiments.
"""

from __future__ import annotations

import math

import numpy as np

from .prng import Xoshiro256StarStar, derive_seed
from .semcodec import ImageGray, image_from_array

FAMILIES = ("gradients", "checker", "blobs", "gratings")


def _gradients(size: int, rng: Xoshiro256StarStar) -> np.ndarray:
    theta = rng.random() * 2.0 * math.pi
    offset = rng.random() * 256.0
    scale = 0.5 + rng.random() * 1.5
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    v = (math.cos(theta) * x + math.sin(theta) * y) * scale + offset
    return np.mod(v, 256.0)


def _checker(size: int, rng: Xoshiro256StarStar) -> np.ndarray:
    period = 8 + rng.randint_below(57)  # {8..64}
    px = rng.randint_below(period)
    py = rng.randint_below(period)
    y, x = np.mgrid[0:size, 0:size]
    cell = ((x + px) // period + (y + py) // period) & 1
    return cell.astype(np.float64) * 255.0


def _blobs(size: int, rng: Xoshiro256StarStar) -> np.ndarray:
    n_blobs = 3 + rng.randint_below(6)  # 3..8
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.zeros((size, size))
    for _ in range(n_blobs):
        cx = rng.random() * size
        cy = rng.random() * size
        sigma = size * (0.03 + 0.12 * rng.random())
        amp = 80.0 + rng.random() * 175.0
        out += amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2))
    return np.clip(out, 0.0, 255.0)


def _gratings(size: int, rng: Xoshiro256StarStar) -> np.ndarray:
    freq = 0.02 + rng.random() * 0.18  # cycles per pixel
    theta = rng.random() * math.pi
    phase = rng.random() * 2.0 * math.pi
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    v = np.sin(2.0 * math.pi * freq * (x * math.cos(theta) + y * math.sin(theta)) + phase)
    return 127.5 * (1.0 + v)


_GENERATORS = {
    "gradients": _gradients,
    "checker": _checker,
    "blobs": _blobs,
    "gratings": _gratings,
}


def generate_corpus(family: str, n: int, size: int, seed: int) -> list[ImageGray]:
    """``n`` deterministic images of one texture family, ``size`` square."""
    if family not in _GENERATORS:
        raise ValueError(f"unknown family {family!r} (choose from {FAMILIES})")
    if size % 32:
        raise ValueError("size must be a multiple of 32")
    gen = _GENERATORS[family]
    out = []
    for i in range(n):
        rng = Xoshiro256StarStar(derive_seed(seed, i))
        arr = gen(size, rng)
        out.append(image_from_array(np.floor(arr + 0.5).clip(0, 255).astype(np.uint8)))
    return out
