"""Synthetic phantoms, sampling masks and simulated measurements.

Everything here is deterministic under a fixed seed, so experiments are
reproducible from their logged configuration alone.  Masks keep whole
k-space columns (Cartesian readout lines); the kept-column count matches
round(n / acceleration) exactly, which puts the ones-fraction within one
column of 1/acceleration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .mri import mri_forward
from .stem import StemGeometry, make_probe, stem_forward  # noqa: F401  (make_probe is part of this surface)
from .types import ComplexVolume, DiffractionSet, KSpaceStack, SamplingMask


def _center_band(n: int, width: int) -> np.ndarray:
    start = n // 2 - width // 2
    return np.arange(start, start + width)


def _mask_from_columns(n: int, columns: np.ndarray, **meta) -> SamplingMask:
    data = np.zeros((n, n), dtype=np.float64)
    data[:, columns] = 1.0
    return SamplingMask(data, **meta)


def _mask_budget(n: int, acceleration: float, center_fraction: float) -> tuple[int, int]:
    if not acceleration > 1.0:
        raise DataError("acceleration must be > 1")
    if not (0.0 < center_fraction < 1.0):
        raise DataError("center fraction must lie in (0, 1)")
    total = int(round(n / acceleration))
    center = math.ceil(center_fraction * n)
    if center > total:
        raise DataError(
            f"infeasible mask: {center} center columns exceed the budget of {total} "
            f"kept columns (center_fraction > 1/acceleration)"
        )
    return total, center


def make_uniform_mask(n: int, acceleration: float, center_fraction: float, seed: int = 0) -> SamplingMask:
    """Fully-sampled center band plus uniformly random extra columns."""
    total, center = _mask_budget(n, acceleration, center_fraction)
    band = _center_band(n, center)
    outside = np.setdiff1d(np.arange(n), band)
    rng = np.random.default_rng(seed)
    extra = rng.choice(outside, size=total - center, replace=False)
    cols = np.union1d(band, extra)
    return _mask_from_columns(
        n, cols, acceleration=acceleration, center_fraction=center_fraction,
        kind="uniform", seed=seed,
    )


def make_gaussian_mask(n: int, acceleration: float, center_fraction: float, seed: int = 0) -> SamplingMask:
    """Center band plus columns drawn without replacement, weighted by a
    Gaussian profile exp(-d^2 / (2 (n/6)^2)) of distance d from the center."""
    total, center = _mask_budget(n, acceleration, center_fraction)
    band = _center_band(n, center)
    outside = np.setdiff1d(np.arange(n), band)
    weights = np.exp(-((outside - n / 2) ** 2) / (2.0 * (n / 6.0) ** 2))
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    available = outside.copy()
    w = weights.copy()
    for _ in range(total - center):
        p = w / w.sum()
        idx = rng.choice(len(available), p=p)
        chosen.append(int(available[idx]))
        available = np.delete(available, idx)
        w = np.delete(w, idx)
    cols = np.union1d(band, np.array(chosen, dtype=int))
    return _mask_from_columns(
        n, cols, acceleration=acceleration, center_fraction=center_fraction,
        kind="gaussian", seed=seed,
    )


def make_mri_phantom(n_slices: int, n: int, seed: int = 0) -> ComplexVolume:
    """Sparse smooth 3-D phantom: Gaussian ellipsoid blobs with a mild phase map.

    Blobs sit on an empty background (distinct intensities, compact in-plane
    support) and are broad along z, so magnitudes land in [0, 1] and
    adjacent slices stay close (relative slice-to-slice error < 0.2).
    """
    if n_slices < 1:
        raise DataError("need at least one slice")
    if n < 32:
        raise DataError("phantom grid must be at least 32")
    rng = np.random.default_rng(seed)
    z = np.linspace(-1.0, 1.0, n_slices) if n_slices > 1 else np.zeros(1)
    y = np.linspace(-1.0, 1.0, n)
    zz, yy, xx = np.meshgrid(z, y, y, indexing="ij")

    mag = np.zeros((n_slices, n, n))
    for _ in range(10):
        cz = rng.uniform(-0.3, 0.3)
        cy, cx = rng.uniform(-0.55, 0.55, size=2)
        az = rng.uniform(1.8, 3.0)
        ay, ax_ = rng.uniform(0.06, 0.18, size=2)
        amp = rng.uniform(0.35, 1.0)
        q = ((zz - cz) / az) ** 2 + ((yy - cy) / ay) ** 2 + ((xx - cx) / ax_) ** 2
        mag += amp * np.exp(-q)
    peak = mag.max()
    if peak > 0.0:
        mag /= peak

    # low-order smooth phase, a fraction of a radian
    c = rng.uniform(-1.0, 1.0, size=5)
    phase = 0.3 * (c[0] * xx + c[1] * yy + c[2] * zz + c[3] * xx * yy + c[4] * (xx**2 - yy**2))
    return ComplexVolume(mag * np.exp(1j * phase))


@dataclass(frozen=True)
class AtomSite:
    """Fractional cell coordinates plus projected-potential bump parameters."""

    fx: float
    fy: float
    fz: float
    amplitude: float  # rad
    width: float  # Angstrom

    def __post_init__(self) -> None:
        for f in (self.fx, self.fy, self.fz):
            if not (0.0 <= f < 1.0):
                raise DataError(f"fractional coordinate {f} outside [0, 1)")
        if not (self.width > 0.0):
            raise DataError("bump width must be positive")


@dataclass(frozen=True)
class CrystalSpec:
    """One cubic unit cell sliced into n_slices z-bins."""

    lattice_constant: float  # Angstrom
    sites: tuple[AtomSite, ...]
    n_slices: int
    grid_size: int
    pixel_size: float  # Angstrom

    def __post_init__(self) -> None:
        if not (self.lattice_constant > 0.0):
            raise DataError("lattice constant must be positive")
        if self.n_slices < 1:
            raise DataError("need at least one slice")
        if self.grid_size < 2 or self.grid_size % 2 != 0:
            raise DataError("grid side must be even and >= 2")
        if not (self.pixel_size > 0.0):
            raise DataError("pixel size must be positive")


# Zincblende cell: two interpenetrating fcc sublattices offset by (1/4,1/4,1/4).
_FCC = ((0.0, 0.0, 0.0), (0.5, 0.5, 0.0), (0.5, 0.0, 0.5), (0.0, 0.5, 0.5))


def gaas_crystal(
    n_slices: int,
    grid_size: int,
    pixel_size: float,
    amplitude: float = 0.5,
    width: float = 0.5,
) -> CrystalSpec:
    """GaAs-like zincblende cell, lattice constant 5.6533 Angstrom."""
    sites = tuple(
        AtomSite(fx, fy, fz, 1.1 * amplitude, width) for fx, fy, fz in _FCC
    ) + tuple(
        AtomSite((fx + 0.25) % 1.0, (fy + 0.25) % 1.0, (fz + 0.25) % 1.0, 0.9 * amplitude, width)
        for fx, fy, fz in _FCC
    )
    return CrystalSpec(5.6533, sites, n_slices, grid_size, pixel_size)


def make_crystal_phantom(spec: CrystalSpec) -> ComplexVolume:
    """Phase-only multi-slice object exp(i phi_s); |X| = 1 exactly.

    phi_s sums Gaussian bumps at the lattice positions whose fractional z
    falls in slice s's bin; in-plane positions repeat with the lattice
    period, so the pattern period is lattice_constant / pixel_size pixels.
    """
    a = spec.lattice_constant
    n = spec.grid_size
    extent = n * spec.pixel_size
    coords = np.arange(n) * spec.pixel_size
    yy, xx = np.meshgrid(coords, coords, indexing="ij")

    phases = np.zeros((spec.n_slices, n, n))
    n_repeats = int(math.ceil(extent / a)) + 1
    for site in spec.sites:
        s = min(int(site.fz * spec.n_slices), spec.n_slices - 1)
        two_w_sq = 2.0 * site.width**2
        margin = 8.0 * site.width  # keep neighbouring-cell tails below 1e-12
        for iy in range(-2, n_repeats + 2):
            py = (site.fy + iy) * a
            if py < -margin or py > extent + margin:
                continue
            for ix in range(-2, n_repeats + 2):
                px = (site.fx + ix) * a
                if px < -margin or px > extent + margin:
                    continue
                phases[s] += site.amplitude * np.exp(
                    -((yy - py) ** 2 + (xx - px) ** 2) / two_w_sq
                )
    return ComplexVolume(np.exp(1j * phases))


def simulate_measurements(
    volume: ComplexVolume,
    setup: SamplingMask | StemGeometry,
    dose: float | None = None,
    seed: int = 0,
) -> KSpaceStack | DiffractionSet:
    """Exact forward-model output; optionally Poisson-resampled STEM intensities.

    dose is the expected total detector count per diffraction pattern;
    None (or inf) disables resampling.
    """
    if isinstance(setup, SamplingMask):
        if dose is not None and not math.isinf(dose):
            raise DataError("Poisson dose applies to STEM simulation only")
        return mri_forward(volume, setup)
    if not isinstance(setup, StemGeometry):
        raise DataError(f"unsupported measurement setup {type(setup).__name__}")
    clean = stem_forward(volume, setup)
    if dose is None or math.isinf(dose):
        return clean
    if not (dose > 0.0):
        raise DataError("dose must be positive")
    rng = np.random.default_rng(seed)
    data = clean.data.copy()
    flat = data.reshape(-1, *data.shape[2:])
    for i in range(flat.shape[0]):
        total = flat[i].sum()
        if total <= 0.0:
            continue
        scale = dose / total
        flat[i] = rng.poisson(flat[i] * scale) / scale
    return DiffractionSet(data, scan_step=clean.scan_step)
