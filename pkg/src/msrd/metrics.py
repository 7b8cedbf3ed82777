"""SSIM, PSNR and relative error.

SSIM conventions pinned here (they differ between common toolkits):
Gaussian window, default 11x11 with sigma 1.5; local statistics evaluated
over valid (unpadded) window positions only; stability constants
C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L the data range (max - min) of the
*reference* image alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError
from .types import ComplexVolume


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self) -> None:
        if self.window_size < 2 or self.window_size % 2 != 1:
            raise DataError("window size must be odd and >= 3")
        if not (self.sigma > 0.0):
            raise DataError("sigma must be positive")


DEFAULT_SSIM = SsimParams()


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian window (sums to 1)."""
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma**2))
    return g / g.sum()


def _local_stats(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    patches = sliding_window_view(img, window.shape)
    return np.tensordot(patches, window, axes=([2, 3], [0, 1]))


def ssim(reference: np.ndarray, test: np.ndarray, params: SsimParams = DEFAULT_SSIM) -> float:
    """Mean SSIM over valid window positions; in [-1, 1]."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise DataError(f"image shapes differ: {ref.shape} vs {tst.shape}")
    if ref.ndim != 2:
        raise DataError("ssim expects 2-D real images")
    if min(ref.shape) < params.window_size:
        raise DataError(
            f"image min dimension {min(ref.shape)} is below the window size {params.window_size}"
        )
    data_range = float(ref.max() - ref.min())
    if data_range <= 0.0:
        raise DataError("reference image is constant; SSIM data range is undefined")
    c1 = (params.k1 * data_range) ** 2
    c2 = (params.k2 * data_range) ** 2
    window = gaussian_window(params.window_size, params.sigma)
    mu_r = _local_stats(ref, window)
    mu_t = _local_stats(tst, window)
    var_r = _local_stats(ref * ref, window) - mu_r**2
    var_t = _local_stats(tst * tst, window) - mu_t**2
    cov = _local_stats(ref * tst, window) - mu_r * mu_t
    ssim_map = ((2.0 * mu_r * mu_t + c1) * (2.0 * cov + c2)) / (
        (mu_r**2 + mu_t**2 + c1) * (var_r + var_t + c2)
    )
    return float(ssim_map.mean())


def adapted_ssim_params(shape: tuple[int, int], params: SsimParams = DEFAULT_SSIM) -> SsimParams:
    """Largest odd window <= min dimension, capped at the default size.

    Candidate selection scores bright-field images whose scan grid can be
    smaller than 11; the metric itself keeps the pinned default.
    """
    limit = min(shape)
    size = min(params.window_size, limit if limit % 2 == 1 else limit - 1)
    if size < 3:
        raise DataError(f"image {shape} is too small for a windowed SSIM")
    return SsimParams(size, params.sigma, params.k1, params.k2)


def volume_ssim(reference: ComplexVolume, test: ComplexVolume, params: SsimParams = DEFAULT_SSIM) -> float:
    """Mean over slices of SSIM between magnitude images."""
    if reference.data.shape != test.data.shape:
        raise DataError("volume shapes differ")
    values = [
        ssim(np.abs(reference.data[s]), np.abs(test.data[s]), params)
        for s in range(reference.n_slices)
    ]
    return float(np.mean(values))


def psnr(reference: np.ndarray, test: np.ndarray) -> float:
    """10 log10(L^2 / MSE) with L the reference data range; inf for exact match."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise DataError(f"shapes differ: {ref.shape} vs {tst.shape}")
    data_range = float(ref.max() - ref.min())
    if data_range <= 0.0:
        raise DataError("reference is constant; PSNR data range is undefined")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def rel_error(reference: np.ndarray, test: np.ndarray) -> float:
    """||reference - test||_2 / ||reference||_2."""
    ref = np.asarray(reference)
    tst = np.asarray(test)
    if ref.shape != tst.shape:
        raise DataError(f"shapes differ: {ref.shape} vs {tst.shape}")
    denom = float(np.linalg.norm(ref.ravel()))
    if denom == 0.0:
        raise DataError("reference has zero norm")
    return float(np.linalg.norm((ref - tst).ravel())) / denom
