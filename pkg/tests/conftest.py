import numpy as np
import pytest

from msrd.stem import StemGeometry
from msrd.types import ComplexVolume, ProbeParams


def small_probe_params(n: int, pixel_size: float = 0.8) -> ProbeParams:
    # cutoff 0.48 1/A stays under the Nyquist 0.625 1/A of a 0.8 A grid
    return ProbeParams(
        wavelength=0.025, semi_angle=0.012, defocus=60.0, pixel_size=pixel_size, grid_size=n
    )


def small_geometry(n_slices: int, n: int, scan=(2, 2), step_px: int = 4) -> StemGeometry:
    params = small_probe_params(n)
    return StemGeometry(
        slice_spacing=2.0,
        probe=params,
        scan_shape=scan,
        scan_step=step_px * params.pixel_size,
        n_slices=n_slices,
    )


def random_volume(n_slices: int, n: int, seed: int = 0, scale: float = 1.0) -> ComplexVolume:
    rng = np.random.default_rng(seed)
    data = scale * (rng.normal(size=(n_slices, n, n)) + 1j * rng.normal(size=(n_slices, n, n)))
    return ComplexVolume(data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
