"""Centered unitary 2-D Fourier transforms and the Fresnel propagator.

Conventions (fixed for the whole engine):
  * fft2c / ifft2c are unitary (norm="ortho") and centered: the zero
    frequency sits at index (n/2, n/2).  Centering is done by index shifts,
    which are exactly self-inverse for even n.
  * The propagator applies the paraxial spectral phase
    H(k) = exp(-i pi lambda dz |k|^2) on the centered frequency grid
    k in {-n/2, ..., n/2-1} / (n * dx) per axis.  |H| = 1, so propagation
    is exactly unitary and the adjoint is propagation over -dz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def _check_grid(x: np.ndarray) -> None:
    if x.ndim < 2:
        raise DataError("expected at least a 2-D field")
    n0, n1 = x.shape[-2], x.shape[-1]
    if n0 % 2 != 0 or n1 % 2 != 0:
        raise DataError(f"grid sides must be even, got {n0}x{n1}")


def fft2c(x: np.ndarray) -> np.ndarray:
    """Centered unitary 2-D FFT over the last two axes."""
    _check_grid(x)
    shifted = np.fft.ifftshift(x, axes=(-2, -1))
    spec = np.fft.fft2(shifted, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(spec, axes=(-2, -1))


def ifft2c(x: np.ndarray) -> np.ndarray:
    """Exact inverse of fft2c."""
    _check_grid(x)
    shifted = np.fft.ifftshift(x, axes=(-2, -1))
    img = np.fft.ifft2(shifted, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(img, axes=(-2, -1))


def centered_frequencies(n: int, dx: float = 1.0) -> np.ndarray:
    """Frequency samples matching the fft2c centering, in 1/dx units."""
    return (np.arange(n) - n // 2) / (n * dx)


@dataclass(frozen=True)
class FresnelKernel:
    """Precomputed spectral phase for free-space propagation over `distance`."""

    grid_size: int
    pixel_size: float
    wavelength: float
    distance: float
    phase: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.grid_size < 2 or self.grid_size % 2 != 0:
            raise DataError("kernel grid side must be even and >= 2")
        if not (self.pixel_size > 0.0) or not (self.wavelength > 0.0):
            raise DataError("pixel size and wavelength must be positive")
        f = centered_frequencies(self.grid_size, self.pixel_size)
        k_sq = f[:, None] ** 2 + f[None, :] ** 2
        h = np.exp(-1j * np.pi * self.wavelength * self.distance * k_sq)
        object.__setattr__(self, "phase", h)

    def conjugate(self) -> "FresnelKernel":
        """Kernel for the reversed distance (the adjoint direction)."""
        return FresnelKernel(self.grid_size, self.pixel_size, self.wavelength, -self.distance)


def _check_kernel(x: np.ndarray, kernel: FresnelKernel) -> None:
    if x.shape[-2:] != (kernel.grid_size, kernel.grid_size):
        raise DataError(
            f"field grid {x.shape[-2:]} does not match kernel grid {kernel.grid_size}"
        )


def fresnel_propagate(field_in: np.ndarray, kernel: FresnelKernel) -> np.ndarray:
    """Propagate over kernel.distance; norm-preserving for every input."""
    _check_kernel(field_in, kernel)
    return ifft2c(kernel.phase * fft2c(field_in))


def fresnel_adjoint(field_in: np.ndarray, kernel: FresnelKernel) -> np.ndarray:
    """Adjoint (= inverse) propagation: the conjugated kernel, distance -dz."""
    _check_kernel(field_in, kernel)
    return ifft2c(np.conj(kernel.phase) * fft2c(field_in))
