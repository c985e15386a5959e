"""Reconstruction quality metrics: PSNR, SSIM, importance-weighted MSE."""

from __future__ import annotations

import math

import numpy as np

PSNR_CAP_DB = 99.0
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2
_WIN = 8


def _as_gray(x) -> np.ndarray:
    if hasattr(x, "pixels"):
        x = x.pixels[: x.original_height, : x.original_width]
    return np.asarray(x, dtype=np.float64)


def psnr(a, b) -> float:
    """Peak SNR in dB for 8-bit images, capped at 99 when identical."""
    a, b = _as_gray(a), _as_gray(b)
    if a.shape != b.shape:
        raise ValueError("image dimensions must match")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(255.0**2 / mse))


def _window_sums(x: np.ndarray) -> np.ndarray:
    """Sliding 8x8 window sums, stride 1, valid positions only."""
    c = x.cumsum(axis=0).cumsum(axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[_WIN:, _WIN:] - c[:-_WIN, _WIN:] - c[_WIN:, :-_WIN] + c[:-_WIN, :-_WIN]


def ssim(a, b) -> float:
    """Mean structural similarity over all 8x8 uniform windows."""
    a, b = _as_gray(a), _as_gray(b)
    if a.shape != b.shape:
        raise ValueError("image dimensions must match")
    if a.shape[0] < _WIN or a.shape[1] < _WIN:
        raise ValueError("images smaller than the SSIM window")
    n = float(_WIN * _WIN)
    mu_a = _window_sums(a) / n
    mu_b = _window_sums(b) / n
    var_a = _window_sums(a * a) / n - mu_a**2
    var_b = _window_sums(b * b) / n - mu_b**2
    cov = _window_sums(a * b) / n - mu_a * mu_b
    num = (2 * mu_a * mu_b + _C1) * (2 * cov + _C2)
    den = (mu_a**2 + mu_b**2 + _C1) * (var_a + var_b + _C2)
    return float(np.mean(num / den))


def weighted_mse(a, b, heatmap) -> float:
    """Heatmap-weighted squared error; falls back to plain MSE (flagged
    in the return by being identical to it) when all weights are zero."""
    a, b = _as_gray(a), _as_gray(b)
    h = np.asarray(heatmap, dtype=np.float64)[: a.shape[0], : a.shape[1]]
    if a.shape != b.shape or h.shape != a.shape:
        raise ValueError("image and heatmap dimensions must match")
    err = (a - b) ** 2
    total = h.sum()
    if total <= 0.0:
        return float(err.mean())
    return float((h * err).sum() / total)
