"""Per-pixel and per-cell importance maps.

Importance either comes from an externally produced heatmap file (e.g.
attention-map exports) or from the built-in Sobel-energy saliency
heuristic.
"""

from __future__ import annotations

import numpy as np

from .kb import COARSE_PATCH
from .semcodec import FrameFormatError, ImageGray, load_image, pad_to_multiple


def load_heatmap(path, target_w: int, target_h: int) -> np.ndarray:
    """Load a P5 heatmap, rescale to [0,1], and fit to the padded image.

    Nearest-neighbor resampling to (target_h, target_w) when the stored
    dimensions differ, then edge-replication padding like the image.
    """
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head != b"P5":
        raise FrameFormatError("heatmap must be a binary PGM (P5) file")
    img = load_image(path)
    values = img.pixels[: img.original_height, : img.original_width].astype(np.float64) / 255.0
    h, w = values.shape
    if (w, h) != (target_w, target_h):
        rows = np.floor(np.arange(target_h) * h / target_h).astype(int)
        cols = np.floor(np.arange(target_w) * w / target_w).astype(int)
        values = values[np.minimum(rows, h - 1)][:, np.minimum(cols, w - 1)]
    return pad_to_multiple(values)


def _shift_sum(padded: np.ndarray, kernel: np.ndarray, h: int, w: int) -> np.ndarray:
    out = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            k = kernel[dy, dx]
            if k:
                out += k * padded[dy : dy + h, dx : dx + w]
    return out


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def builtin_saliency(img: ImageGray) -> np.ndarray:
    """Gradient-energy saliency standing in for an attention heatmap.

    |Sobel_x| + |Sobel_y| with edge-replicated borders, smoothed by an
    8x8 box mean (window rows i-3..i+4), then min-max normalized; an
    all-equal image maps to all zeros.
    """
    pix = img.pixels.astype(np.float64)
    h, w = pix.shape
    padded = np.pad(pix, 1, mode="edge")
    energy = np.abs(_shift_sum(padded, _SOBEL_X, h, w)) + np.abs(
        _shift_sum(padded, _SOBEL_Y, h, w)
    )
    # 8x8 box mean via integral image; window anchored 3 before, 4 after
    padded_e = np.pad(energy, ((3, 4), (3, 4)), mode="edge")
    integral = np.zeros((h + 8, w + 8))
    integral[1:, 1:] = padded_e.cumsum(axis=0).cumsum(axis=1)
    smoothed = (
        integral[8 : 8 + h, 8 : 8 + w]
        - integral[0:h, 8 : 8 + w]
        - integral[8 : 8 + h, 0:w]
        + integral[0:h, 0:w]
    ) / 64.0
    lo = smoothed.min()
    hi = smoothed.max()
    if hi - lo <= 0.0:
        return np.zeros_like(smoothed)
    return (smoothed - lo) / (hi - lo)


def cell_importance(heatmap: np.ndarray, cell: int = COARSE_PATCH) -> list[float]:
    """Mean heatmap value per row-major cell."""
    heat = np.asarray(heatmap, dtype=np.float64)
    h, w = heat.shape
    if h % cell or w % cell:
        raise ValueError("heatmap dimensions must be multiples of the cell size")
    gh, gw = h // cell, w // cell
    means = heat.reshape(gh, cell, gw, cell).mean(axis=(1, 3))
    return [float(v) for v in means.reshape(-1)]


def make_provider(spec: str):
    """Build an importance provider from a CLI-style spec string.

    ``builtin`` selects Sobel saliency; ``file:PATH`` loads a heatmap
    file resampled to each image's dimensions.
    """
    if spec == "builtin":
        return builtin_saliency
    if spec.startswith("file:"):
        path = spec[5:]

        def provider(img: ImageGray) -> np.ndarray:
            return load_heatmap(path, img.original_width, img.original_height)

        return provider
    raise ValueError(f"unknown importance provider {spec!r}")
