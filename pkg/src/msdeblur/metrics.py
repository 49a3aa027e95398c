"""PSNR, SSIM and MS-SSIM for images in [0, 1].

SSIM follows the usual Wang et al. settings: 11x11 Gaussian window with
sigma 1.5, K1 = 0.01, K2 = 0.03, data range 1, computed on BT.601 luma
over the valid (unpadded) region.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeError

PSNR_CAP = 99.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
LUMA = np.array([0.299, 0.587, 0.114])


def quantize(x: np.ndarray) -> np.ndarray:
    return np.round(np.clip(x, 0.0, 1.0) * 255.0) / 255.0


def psnr(a: np.ndarray, b: np.ndarray, quantized: bool = False) -> float:
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shapes {a.shape} and {b.shape} differ")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if quantized:
        a, b = quantize(a), quantize(b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def to_luma(img: np.ndarray) -> np.ndarray:
    """(3, H, W) -> (H, W); 2-D inputs and single-channel images pass through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim != 3:
        raise ShapeError(f"expected (C, H, W) or (H, W), got {img.shape}")
    if img.shape[0] == 1:
        return img[0]
    if img.shape[0] != 3:
        raise ShapeError(f"expected 1 or 3 channels, got {img.shape[0]}")
    return np.tensordot(LUMA, img, axes=1)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = len(g)
    h, w = x.shape
    tmp = sum(g[i] * x[:, i : i + w - n + 1] for i in range(n))
    return sum(g[i] * tmp[i : i + h - n + 1, :] for i in range(n))


def _ssim_maps(x: np.ndarray, y: np.ndarray, win: np.ndarray, c1: float, c2: float):
    # kept symmetric in x and y so ssim(x, x) is exactly 1
    mu_x = _filter_valid(x, win)
    mu_y = _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mu_x * mu_x
    syy = _filter_valid(y * y, win) - mu_y * mu_y
    sxy = _filter_valid(x * y, win) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return lum, cs


def ssim(a: np.ndarray, b: np.ndarray, full: bool = False, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03):
    """Mean SSIM on luma; with ``full=True`` also returns the mean contrast-structure term."""
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"ssim: shapes {np.shape(a)} and {np.shape(b)} differ")
    x, y = to_luma(a), to_luma(b)
    if min(x.shape) < window:
        raise ShapeError(f"ssim: image {x.shape} smaller than the {window}px window")
    lum, cs = _ssim_maps(x, y, gaussian_window(window, sigma), k1**2, k2**2)
    val = float(np.mean(lum * cs))
    return (val, float(np.mean(cs))) if full else val


def _downsample2(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim_min_size(levels: int = 5, window: int = 11) -> int:
    return window * 2 ** (levels - 1)


def ms_ssim(a: np.ndarray, b: np.ndarray, weights=MS_SSIM_WEIGHTS, window: int = 11,
            sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Multi-scale SSIM with 2x2 average-pool downsampling between scales.

    Negative contrast-structure terms are clamped to zero before the
    fractional powers.
    """
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"ms_ssim: shapes {np.shape(a)} and {np.shape(b)} differ")
    x, y = to_luma(a), to_luma(b)
    need = ms_ssim_min_size(len(weights), window)
    if min(x.shape) < need:
        raise ShapeError(f"ms_ssim: {len(weights)} levels need a min side of {need}px, got {x.shape}")
    win = gaussian_window(window, sigma)
    val = 1.0
    for i, w in enumerate(weights):
        lum, cs = _ssim_maps(x, y, win, k1**2, k2**2)
        if i == len(weights) - 1:
            val *= max(float(np.mean(lum * cs)), 0.0) ** w
        else:
            val *= max(float(np.mean(cs)), 0.0) ** w
            x, y = _downsample2(x), _downsample2(y)
    return val
