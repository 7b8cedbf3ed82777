"""Shared numeric containers.

All complex data is stored as numpy complex128 (interleaved double re/im);
grids are square with an even side so the centered FFT index conventions
are unambiguous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


def _require_finite(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a.view(np.float64) if a.dtype == np.complex128 else a)):
        raise DataError(f"{name} contains non-finite values")


def _require_even_square(shape: tuple[int, int], name: str) -> None:
    n0, n1 = shape
    if n0 != n1:
        raise DataError(f"{name} grid must be square, got {n0}x{n1}")
    if n0 < 2 or n0 % 2 != 0:
        raise DataError(f"{name} grid side must be even and >= 2, got {n0}")


@dataclass(frozen=True)
class ComplexVolume:
    """Multi-slice complex object of shape (slices, n, n)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        a = np.ascontiguousarray(self.data, dtype=np.complex128)
        if a.ndim != 3:
            raise DataError(f"volume must be 3-D (slices, n, n), got shape {a.shape}")
        if a.shape[0] < 1:
            raise DataError("volume needs at least one slice")
        _require_even_square(a.shape[1:], "volume")
        _require_finite(a, "volume")
        object.__setattr__(self, "data", a)

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    @property
    def grid_size(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "ComplexVolume":
        return ComplexVolume(self.data.copy())


@dataclass(frozen=True)
class SamplingMask:
    """Binary k-space sampling pattern over an (n, n) grid.

    Kept entries are whole columns (Cartesian readout lines).  Metadata
    records how the mask was generated so runs are reproducible.
    """

    data: np.ndarray
    acceleration: float = 1.0
    center_fraction: float = 0.5
    kind: str = "uniform"
    seed: int = 0

    def __post_init__(self) -> None:
        a = np.ascontiguousarray(self.data, dtype=np.float64)
        if a.ndim != 2:
            raise DataError(f"mask must be 2-D, got shape {a.shape}")
        _require_even_square(a.shape, "mask")
        if not np.all((a == 0.0) | (a == 1.0)):
            raise DataError("mask values must be exactly 0 or 1")
        if not (self.acceleration >= 1.0):
            raise DataError("acceleration must be >= 1")
        if not (0.0 < self.center_fraction < 1.0):
            raise DataError("center fraction must lie in (0, 1)")
        if self.kind not in ("uniform", "gaussian"):
            raise DataError(f"unknown mask kind {self.kind!r}")
        object.__setattr__(self, "data", a)

    @property
    def grid_size(self) -> int:
        return self.data.shape[0]

    def ones_fraction(self) -> float:
        return float(self.data.mean())


@dataclass(frozen=True)
class KSpaceStack:
    """Per-slice measured spectra, shape (slices, n, n); unmeasured entries are exactly zero."""

    data: np.ndarray

    def __post_init__(self) -> None:
        a = np.ascontiguousarray(self.data, dtype=np.complex128)
        if a.ndim != 3 or a.shape[0] < 1:
            raise DataError(f"k-space stack must be 3-D (slices, n, n), got shape {a.shape}")
        _require_even_square(a.shape[1:], "k-space")
        _require_finite(a, "k-space")
        object.__setattr__(self, "data", a)

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    @property
    def grid_size(self) -> int:
        return self.data.shape[1]

    def validate_support(self, mask: SamplingMask) -> None:
        """Check the pairing invariant: entries outside the mask are exactly zero."""
        if mask.data.shape != self.data.shape[1:]:
            raise DataError("mask grid does not match k-space grid")
        if np.any(self.data[:, mask.data == 0.0] != 0.0):
            raise DataError("k-space stack has nonzero entries outside the mask support")


@dataclass(frozen=True)
class DiffractionSet:
    """4D-STEM intensities over a scan grid, shape (scan_y, scan_x, n_det, n_det)."""

    data: np.ndarray
    scan_step: float = 1.0  # Angstrom between neighbouring scan positions

    def __post_init__(self) -> None:
        a = np.ascontiguousarray(self.data, dtype=np.float64)
        if a.ndim != 4:
            raise DataError(f"diffraction set must be 4-D, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise DataError("scan grid must be at least 1x1")
        _require_even_square(a.shape[2:], "detector")
        _require_finite(a, "intensities")
        if np.any(a < 0.0):
            raise DataError("intensities must be non-negative")
        if not (self.scan_step > 0.0) or not math.isfinite(self.scan_step):
            raise DataError("scan step must be positive and finite")
        object.__setattr__(self, "data", a)

    @property
    def scan_shape(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    @property
    def detector_size(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ProbeParams:
    """Focused-probe optics: hard aperture plus defocus phase.

    Units: wavelength, defocus and pixel size in Angstrom, semi-angle in rad.
    The aperture cutoff semi_angle/wavelength must stay below the grid
    Nyquist frequency 1/(2*pixel_size).
    """

    wavelength: float
    semi_angle: float
    defocus: float
    pixel_size: float
    grid_size: int

    def __post_init__(self) -> None:
        for name in ("wavelength", "semi_angle", "pixel_size"):
            v = getattr(self, name)
            if not (v > 0.0) or not math.isfinite(v):
                raise DataError(f"{name} must be positive and finite")
        if not math.isfinite(self.defocus):
            raise DataError("defocus must be finite")
        if self.grid_size < 2 or self.grid_size % 2 != 0:
            raise DataError("probe grid side must be even and >= 2")
        if self.cutoff >= self.nyquist:
            raise DataError(
                f"aperture cutoff {self.cutoff:.4g} 1/A reaches the grid Nyquist "
                f"{self.nyquist:.4g} 1/A; reduce semi_angle or pixel_size"
            )

    @property
    def cutoff(self) -> float:
        """Aperture cutoff in reciprocal Angstrom."""
        return self.semi_angle / self.wavelength

    @property
    def nyquist(self) -> float:
        return 1.0 / (2.0 * self.pixel_size)
