import numpy as np
import pytest

from msrd.errors import DataError
from msrd.types import ComplexVolume, DiffractionSet, KSpaceStack, ProbeParams, SamplingMask


def test_volume_accepts_even_square_stack():
    vol = ComplexVolume(np.zeros((2, 8, 8)))
    assert vol.n_slices == 2
    assert vol.grid_size == 8
    assert vol.data.dtype == np.complex128


@pytest.mark.parametrize("shape", [(8, 8), (0, 8, 8), (1, 7, 7), (1, 8, 6), (1, 2, 2, 2)])
def test_volume_rejects_bad_shapes(shape):
    with pytest.raises(DataError):
        ComplexVolume(np.zeros(shape))


def test_volume_rejects_non_finite():
    data = np.zeros((1, 4, 4), complex)
    data[0, 1, 1] = np.nan
    with pytest.raises(DataError):
        ComplexVolume(data)


def test_mask_requires_binary_values():
    with pytest.raises(DataError):
        SamplingMask(np.full((4, 4), 0.5))


def test_mask_accepts_all_zero_with_infinite_acceleration():
    mask = SamplingMask(np.zeros((4, 4)), acceleration=np.inf, center_fraction=0.5)
    assert mask.ones_fraction() == 0.0


def test_mask_metadata_validation():
    ones = np.ones((4, 4))
    with pytest.raises(DataError):
        SamplingMask(ones, acceleration=0.5)
    with pytest.raises(DataError):
        SamplingMask(ones, center_fraction=0.0)
    with pytest.raises(DataError):
        SamplingMask(ones, kind="stripes")


def test_kspace_support_validation():
    mask = SamplingMask(np.eye(4) * 0 + np.diag(np.ones(4)), acceleration=4.0, center_fraction=0.1)
    data = np.ones((2, 4, 4), complex)
    stack = KSpaceStack(data)
    with pytest.raises(DataError):
        stack.validate_support(mask)
    supported = KSpaceStack(data * mask.data)
    supported.validate_support(mask)


def test_diffraction_set_rejects_negative():
    with pytest.raises(DataError):
        DiffractionSet(-np.ones((1, 1, 4, 4)))


def test_probe_cutoff_must_stay_below_nyquist():
    with pytest.raises(DataError):
        ProbeParams(wavelength=0.025, semi_angle=0.02, defocus=0.0, pixel_size=0.8, grid_size=16)
    ok = ProbeParams(wavelength=0.025, semi_angle=0.012, defocus=0.0, pixel_size=0.8, grid_size=16)
    assert ok.cutoff < ok.nyquist
